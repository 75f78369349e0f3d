// Command-line front end. Exit codes: 0 success, 2 invalid input or config,
// 1 any other failure.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "uqseg/uqseg.hpp"

namespace {

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
};

uqseg::ExperimentConfig resolve(const GlobalOptions& g) {
  uqseg::ExperimentConfig c = g.config.empty() ? uqseg::ExperimentConfig{} : uqseg::load_config(g.config);
  if (g.seed) c.seed = *g.seed;
  if (!g.out.empty()) c.output_dir = g.out;
  uqseg::validate(c);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Post-hoc pixel uncertainty for promptable segmentation"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config, "experiment config JSON")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "override the config seed");
  app.add_option("--out", g.out, "override the output directory");
  app.add_flag("--force", g.force, "overwrite existing generated data");

  auto* gen = app.add_subcommand("gen", "generate the fit and evaluation datasets");
  auto* train = app.add_subcommand("train", "train the linear decoder");
  auto* fit = app.add_subcommand("fit-laplace", "fit the last-layer Laplace posterior");
  auto* varnet = app.add_subcommand("train-varnet", "train the variance head");
  auto* fusion = app.add_subcommand("train-fusion", "train the refinement fusion layers");
  auto* eval = app.add_subcommand("eval", "run every UQ method on the evaluation sets");
  std::vector<std::string> methods;
  eval->add_option("--methods", methods, "subset of baseline,tta,prompt,laplace,varnet")->delimiter(',');
  bool perturb = false;
  eval->add_flag("--perturb-prompts", perturb, "jitter the ground-truth boxes");
  auto* refine = app.add_subcommand("refine", "evaluate the refinement variants");
  std::vector<std::string> variants;
  refine->add_option("--variants", variants, "subset of the refinement variants")->delimiter(',');
  auto* maps = app.add_subcommand("maps", "write display panels for one sample");
  std::string sample;
  maps->add_option("--sample", sample, "<dataset>/<id> or <id>")->required();
  std::vector<std::string> map_methods;
  maps->add_option("--methods", map_methods, "methods to show")->delimiter(',');
  auto* verify = app.add_subcommand("verify", "recompute metrics from the dumped maps");

  CLI11_PARSE(app, argc, argv);

  try {
    uqseg::ExperimentConfig c = resolve(g);
    if (!methods.empty()) c.eval.methods = methods;
    if (perturb) c.eval.perturb_prompts = true;
    if (!variants.empty()) {
      c.refine_variants.clear();
      for (const auto& v : variants) c.refine_variants.push_back(uqseg::fusion_variant_from_string(v));
    }
    uqseg::validate(c);

    if (*gen) {
      uqseg::cmd_gen(c, g.force);
    } else if (*train) {
      uqseg::cmd_train(c);
    } else if (*fit) {
      uqseg::cmd_fit_laplace(c);
    } else if (*varnet) {
      uqseg::cmd_train_varnet(c);
    } else if (*fusion) {
      uqseg::cmd_train_fusion(c);
    } else if (*eval) {
      const auto rows = uqseg::cmd_eval(c);
      std::cout << "wrote " << rows.size() << " rows to " << uqseg::run_paths(c).metrics_csv().string() << "\n";
    } else if (*refine) {
      const auto rows = uqseg::cmd_refine(c);
      std::cout << "wrote " << rows.size() << " rows to " << (uqseg::run_paths(c).refine() / "table.csv").string()
                << "\n";
    } else if (*maps) {
      const auto index = uqseg::cmd_maps(c, sample, map_methods.empty() ? c.eval.methods : map_methods);
      std::cout << index.dump(2) << "\n";
    } else if (*verify) {
      const auto rep = uqseg::cmd_verify(c);
      for (const auto& p : rep.problems) std::cerr << p << "\n";
      std::cout << "verified " << rep.rows << " rows, " << rep.mismatches << " mismatches, aggregate "
                << (rep.aggregate_matches ? "matches" : "differs") << "\n";
      return rep.ok() ? 0 : 1;
    }
  } catch (const uqseg::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
