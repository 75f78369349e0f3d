#include <gtest/gtest.h>

#include <cstdlib>
#include <sys/wait.h>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace uqseg;

namespace {

ExperimentConfig small_config(const std::filesystem::path& out, std::uint64_t seed = 0) {
  auto j = nlohmann::ordered_json::parse(R"({
    "image": {"height": 24, "width": 24},
    "encoder": {"widths": [8, 8]},
    "data": {"fit_count": 6, "eval_count": 3, "eval_kinds": ["clean", "shadow"]},
    "uq": {"ensemble_size": 3},
    "train": {"decoder": {"steps": 40}, "varnet": {"steps": 5}, "fusion": {"steps": 5}}
  })");
  j["seed"] = seed;
  j["output_dir"] = out.string();
  return config_from_json(j);
}

/// One full pipeline run shared by the read-only tests below.
const ExperimentConfig& shared_run() {
  static const ExperimentConfig c = [] {
    const auto dir = oracle::temp_dir("harness_shared");
    ExperimentConfig cfg = small_config(dir / "run");
    run_pipeline(cfg, false);
    return cfg;
  }();
  return c;
}

std::string slurp(const std::filesystem::path& p) { return read_text_file(p); }

int run_cli(const std::string& args) {
  const std::string cmd = std::string(UQSEG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, DefaultsAndRoundTrip) {
  const ExperimentConfig d = config_from_json(nlohmann::ordered_json::object());
  EXPECT_EQ(d.data.fit_count, 200u);
  EXPECT_EQ(d.data.eval_count, 100u);
  EXPECT_EQ(d.data.eval_kinds.size(), 6u);
  EXPECT_EQ(d.uq.ensemble_size, 10u);
  const ExperimentConfig c = small_config("x", 4);
  EXPECT_EQ(to_json(config_from_json(to_json(c))), to_json(c));
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(config_from_json(nlohmann::ordered_json::parse(R"({"sede": 1})")), ValidationError);
  EXPECT_THROW(config_from_json(nlohmann::ordered_json::parse(R"({"uq": {"ensemble": 3}})")), ValidationError);
  EXPECT_THROW(config_from_json(nlohmann::ordered_json::parse(R"({"uq": {"ensemble_size": 0}})")), ValidationError);
  EXPECT_THROW(config_from_json(nlohmann::ordered_json::parse(R"({"eval": {"methods": ["mcdropout"]}})")),
               ValidationError);
  EXPECT_THROW(config_from_json(nlohmann::ordered_json::parse(R"({"seed": "abc"})")), ValidationError);
}

TEST(Checkpoint, ModelRoundTripIsExact) {
  const RefNet m = fixture::tiny_model(9);
  const RefNet back = model_from_checkpoint(decode_checkpoint(encode_checkpoint(model_checkpoint(m, 9))));
  EXPECT_EQ(back.encoder.config(), m.encoder.config());
  EXPECT_EQ(back.encoder.parameters(), m.encoder.parameters());
  EXPECT_EQ(back.decoder, m.decoder);
}

TEST(Checkpoint, OtherComponentsRoundTrip) {
  const RefNet m = fixture::tiny_model(10);
  const auto fit = fixture::samples(2, 16, 10);
  const auto post = fit_laplace(m, fit, {});
  const auto post2 = laplace_from_checkpoint(decode_checkpoint(encode_checkpoint(laplace_checkpoint(post, 1))));
  EXPECT_EQ(post2.map, post.map);
  EXPECT_EQ(post2.hessian_diag, post.hessian_diag);
  EXPECT_EQ(post2.prior_precision, post.prior_precision);

  VarianceHead head(8);
  head.v[2] = 0.25;
  head.c = -1.5;
  EXPECT_EQ(variance_head_from_checkpoint(decode_checkpoint(encode_checkpoint(variance_head_checkpoint(head, 1)))),
            head);

  FusionLayer f = FusionLayer::identity(kPromptChannels, 3);
  f.fuse().bias()[1] = 0.75;
  const auto ck = decode_checkpoint(encode_checkpoint(fusion_checkpoint(f, FusionVariant::fusion_la, 3)));
  EXPECT_EQ(fusion_from_checkpoint(ck).pack(), f.pack());
}

TEST(Checkpoint, RejectsCorruptBytes) {
  auto bytes = encode_checkpoint(model_checkpoint(fixture::tiny_model(), 0));
  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  EXPECT_THROW(decode_checkpoint(truncated), FormatError);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(magic), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_checkpoint(trailing), FormatError);
  EXPECT_THROW(laplace_from_checkpoint(decode_checkpoint(bytes)), FormatError);
}

TEST(Csv, NullPearsonIsEmptyField) {
  EvalRecord r{"0001_0", "eval_clean", "baseline", 0.5, 0.25, std::nullopt, 0.125};
  EXPECT_EQ(csv_row(r), "0001_0,eval_clean,baseline,0.5,0.25,,0.125\n");
  const auto f = split_csv_line("a,b,c,1,2,,3");
  ASSERT_EQ(f.size(), 7u);
  EXPECT_TRUE(f[5].empty());
}

TEST(Csv, FormatDoubleRoundTrips) {
  auto g = oracle::engine(50);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 200; ++i) {
    const double v = u(g);
    EXPECT_EQ(std::strtod(format_double(v).c_str(), nullptr), v);
  }
  EXPECT_EQ(format_double(0.1), "0.1");
}

TEST(Aggregate, PearsonIsMeanOfNonNullRows) {
  std::vector<EvalRecord> rows = {{"a", "d", "m", 1.0, 0.5, 0.2, 0.1},
                                  {"b", "d", "m", 0.0, 0.5, std::nullopt, 0.3},
                                  {"c", "d", "m", 0.5, 0.5, 0.6, 0.2},
                                  {"a", "d", "n", 1.0, 1.0, std::nullopt, 0.0}};
  const auto agg = aggregate(rows);
  EXPECT_EQ(agg["d"]["m"]["count"], 3);
  EXPECT_NEAR(agg["d"]["m"]["miou"].get<double>(), 0.5, 1e-15);
  EXPECT_NEAR(agg["d"]["m"]["pearson"].get<double>(), 0.4, 1e-15);
  EXPECT_EQ(agg["d"]["m"]["pearson_count"], 2);
  EXPECT_TRUE(agg["d"]["n"]["pearson"].is_null());
}

TEST(Harness, GenWritesConfiguredCounts) {
  const ExperimentConfig& c = shared_run();
  const RunPaths p = run_paths(c);
  EXPECT_EQ(read_manifest(p.fit_set() / "manifest.json").records.size(), 6u);
  EXPECT_EQ(read_manifest(p.eval_set(ChallengeKind::clean) / "manifest.json").records.size(), 3u);
  EXPECT_EQ(read_manifest(p.eval_set(ChallengeKind::shadow) / "manifest.json").records.size(), 3u);
  EXPECT_FALSE(std::filesystem::exists(p.eval_set(ChallengeKind::flare)));
  EXPECT_THROW(cmd_gen(c, false), ValidationError);
}

TEST(Harness, SameSeedGivesIdenticalManifests) {
  const auto dir = oracle::temp_dir("harness_gen");
  ExperimentConfig a = small_config(dir / "a", 5), b = small_config(dir / "b", 5);
  cmd_gen(a, false);
  cmd_gen(b, false);
  EXPECT_EQ(slurp(run_paths(a).fit_set() / "manifest.json"), slurp(run_paths(b).fit_set() / "manifest.json"));
  EXPECT_EQ(slurp(run_paths(a).eval_set(ChallengeKind::shadow) / "images/0001.ppm"),
            slurp(run_paths(b).eval_set(ChallengeKind::shadow) / "images/0001.ppm"));
}

TEST(Harness, TrainLogIsFiniteAndCoversEveryStep) {
  const RunPaths p = run_paths(shared_run());
  std::istringstream in(slurp(p.log("train")));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "step,loss");
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const double loss = std::stod(line.substr(line.find(',') + 1));
    EXPECT_TRUE(std::isfinite(loss));
    EXPECT_EQ(std::stoul(line.substr(0, line.find(','))), n);
    ++n;
  }
  EXPECT_EQ(n, 40u);
  EXPECT_EQ(slurp(p.log("fit_laplace")), "images,6\n");
}

TEST(Harness, EvalCsvMatchesRecomputationAndAggregate) {
  const ExperimentConfig& c = shared_run();
  const RunPaths p = run_paths(c);
  const auto rows = read_metrics_csv(p.metrics_csv());
  EXPECT_EQ(rows.size(), 2u * 3u * kAllEvalMethods.size());
  const auto rep = cmd_verify(c);
  EXPECT_TRUE(rep.ok()) << (rep.problems.empty() ? "" : rep.problems.front());
  EXPECT_EQ(slurp(p.aggregate_json()), aggregate(rows).dump(2) + "\n");
}

TEST(Harness, VerifyDetectsTamperedCsv) {
  const auto dir = oracle::temp_dir("harness_tamper");
  const ExperimentConfig& c = shared_run();
  std::filesystem::copy(c.output_dir, dir / "run", std::filesystem::copy_options::recursive);
  ExperimentConfig t = c;
  t.output_dir = dir / "run";
  std::string csv = slurp(run_paths(t).metrics_csv());
  const auto pos = csv.find("baseline,") + 9;
  csv[pos] = csv[pos] == '0' ? '1' : '0';
  write_text_file(run_paths(t).metrics_csv(), csv);
  EXPECT_FALSE(cmd_verify(t).ok());
}

TEST(Harness, RefineBaselineRowMatchesEval) {
  const ExperimentConfig& c = shared_run();
  const RunPaths p = run_paths(c);
  const auto eval = nlohmann::json::parse(slurp(p.aggregate_json()));
  const auto refine = nlohmann::json::parse(slurp(p.refine() / "aggregate.json"));
  for (const char* ds : {"eval_clean", "eval_shadow"}) {
    EXPECT_EQ(refine[ds]["no_refine"]["miou"], eval[ds]["baseline"]["miou"]) << ds;
    EXPECT_EQ(refine[ds]["no_refine"]["mbiou"], eval[ds]["baseline"]["mbiou"]) << ds;
    EXPECT_EQ(refine[ds].size(), kAllFusionVariants.size());
  }
  EXPECT_EQ(slurp(p.refine() / "table.csv").rfind("dataset,variant,count,miou,mbiou\n", 0), 0u);
}

TEST(Harness, MapsWritesFourPanelsPerMethod) {
  const ExperimentConfig& c = shared_run();
  const RunPaths p = run_paths(c);
  const auto umap = p.map_dir("eval_shadow") / "0001_0_laplace.unc.umap";
  const std::string before = slurp(umap);
  const auto index = cmd_maps(c, "eval_shadow/0001_0", {"baseline", "laplace"});
  const auto dir = p.panels("eval_shadow", "0001_0");
  for (const char* m : {"baseline", "laplace"}) {
    ASSERT_EQ(index["methods"][m].size(), 4u);
    for (const auto& f : index["methods"][m]) EXPECT_TRUE(std::filesystem::exists(dir / f.get<std::string>()));
  }
  const Grid2D unc = read_pgm(dir / "laplace_unc.pgm");
  EXPECT_EQ(*std::max_element(unc.begin(), unc.end()), 1.0f);
  EXPECT_EQ(slurp(umap), before);
  EXPECT_THROW(cmd_maps(c, "eval_shadow/9999_0", {"baseline"}), ValidationError);
}

TEST(Harness, MissingPrerequisitesAreReported) {
  const auto dir = oracle::temp_dir("harness_missing");
  const ExperimentConfig c = small_config(dir / "run");
  EXPECT_THROW(cmd_train(c), MissingPrerequisite);
  cmd_gen(c, false);
  EXPECT_THROW(cmd_fit_laplace(c), MissingPrerequisite);
  EXPECT_THROW(cmd_eval(c), MissingPrerequisite);
  EXPECT_THROW(cmd_verify(c), MissingPrerequisite);
}

TEST(Cli, ExitCodes) {
  const auto dir = oracle::temp_dir("cli");
  write_text_file(dir / "bad.json", R"({"unknown_key": 1})");
  write_text_file(dir / "good.json", to_json(small_config(dir / "run")).dump());
  EXPECT_EQ(run_cli("--config " + (dir / "bad.json").string() + " gen"), 2);
  EXPECT_EQ(run_cli("--config " + (dir / "good.json").string() + " train"), 1);
  EXPECT_EQ(run_cli("--config " + (dir / "good.json").string() + " gen"), 0);
  EXPECT_EQ(run_cli("--config " + (dir / "good.json").string() + " gen"), 2);
  EXPECT_EQ(run_cli("--config " + (dir / "good.json").string() + " --force gen"), 0);
  EXPECT_EQ(run_cli("--config " + (dir / "good.json").string() + " eval --methods baseline,bogus"), 2);
  EXPECT_NE(run_cli("nosuchcommand"), 0);
}
