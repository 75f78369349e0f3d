#pragma once

// Experiment orchestration behind the uqseg command line.
//
// Run directory layout (root = config.output_dir):
//   config.json                         copy of the effective config
//   data/fit/                           clean fit split
//   data/eval_<kind>/                   one evaluation set per challenge kind
//   checkpoints/model.uckp              encoder + trained decoder
//   checkpoints/laplace.uckp            Laplace posterior
//   checkpoints/varnet.uckp             variance head
//   checkpoints/fusion_<variant>.uckp   one per trained refinement variant
//   logs/<stage>.log                    "step,loss" per optimizer step
//   eval/metrics.csv, eval/aggregate.json
//   eval/maps/<dataset>/<sample>_<method>.{pbar,unc}.umap
//   refine/records.csv, refine/table.csv, refine/aggregate.json
//   maps/<dataset>/<sample>/            display panels + index.json

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uqseg/checkpoint.hpp"
#include "uqseg/config.hpp"
#include "uqseg/dataset.hpp"
#include "uqseg/error.hpp"
#include "uqseg/fusion.hpp"
#include "uqseg/image_io.hpp"
#include "uqseg/laplace.hpp"
#include "uqseg/metrics.hpp"
#include "uqseg/train.hpp"
#include "uqseg/uq.hpp"
#include "uqseg/variance_head.hpp"

namespace uqseg {

/// A required checkpoint or dataset is absent.
struct MissingPrerequisite : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunPaths {
  std::filesystem::path root;

  [[nodiscard]] std::filesystem::path config() const { return root / "config.json"; }
  [[nodiscard]] std::filesystem::path data() const { return root / "data"; }
  [[nodiscard]] std::filesystem::path fit_set() const { return data() / "fit"; }
  [[nodiscard]] std::filesystem::path eval_set(ChallengeKind k) const {
    return data() / ("eval_" + std::string(to_string(k)));
  }
  [[nodiscard]] std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  [[nodiscard]] std::filesystem::path model() const { return checkpoints() / "model.uckp"; }
  [[nodiscard]] std::filesystem::path laplace() const { return checkpoints() / "laplace.uckp"; }
  [[nodiscard]] std::filesystem::path varnet() const { return checkpoints() / "varnet.uckp"; }
  [[nodiscard]] std::filesystem::path fusion(FusionVariant v) const {
    return checkpoints() / ("fusion_" + std::string(to_string(v)) + ".uckp");
  }
  [[nodiscard]] std::filesystem::path log(const std::string& stage) const { return root / "logs" / (stage + ".log"); }
  [[nodiscard]] std::filesystem::path eval() const { return root / "eval"; }
  [[nodiscard]] std::filesystem::path metrics_csv() const { return eval() / "metrics.csv"; }
  [[nodiscard]] std::filesystem::path aggregate_json() const { return eval() / "aggregate.json"; }
  [[nodiscard]] std::filesystem::path map_dir(const std::string& dataset) const { return eval() / "maps" / dataset; }
  [[nodiscard]] std::filesystem::path refine() const { return root / "refine"; }
  [[nodiscard]] std::filesystem::path panels(const std::string& dataset, const std::string& sample) const {
    return root / "maps" / dataset / sample;
  }
};

inline RunPaths run_paths(const ExperimentConfig& c) { return {c.output_dir}; }

// ---------------------------------------------------------------- formatting

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string csv_header(bool with_variant) {
  return with_variant ? "sample,dataset,method,iou,biou,pearson,brier,variant\n"
                      : "sample,dataset,method,iou,biou,pearson,brier\n";
}

inline std::string csv_row(const EvalRecord& r, const std::string* variant = nullptr) {
  std::string line = r.sample + "," + r.dataset + "," + r.method + "," + format_double(r.iou) + "," +
                     format_double(r.biou) + "," + (r.pearson ? format_double(*r.pearson) : "") + "," +
                     format_double(r.brier);
  if (variant) line += "," + *variant;
  return line + "\n";
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Parses a metrics CSV written by csv_row (header included).
inline std::vector<EvalRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || line.rfind("sample,dataset,method,iou,biou,pearson,brier", 0) != 0) {
    throw FormatError(path.string() + ": unexpected header");
  }
  std::vector<EvalRecord> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() < 7) throw FormatError(path.string() + ": short row '" + line + "'");
    EvalRecord r;
    r.sample = f[0];
    r.dataset = f[1];
    r.method = f[2];
    r.iou = std::stod(f[3]);
    r.biou = std::stod(f[4]);
    if (!f[5].empty()) r.pearson = std::stod(f[5]);
    r.brier = std::stod(f[6]);
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Per (dataset, method) means in first-appearance order. Pearson is averaged
/// over non-null rows only.
inline nlohmann::ordered_json aggregate(const std::vector<EvalRecord>& rows) {
  struct Acc {
    std::size_t n = 0, n_pearson = 0;
    double iou = 0, biou = 0, pearson = 0, brier = 0;
  };
  std::vector<std::pair<std::string, std::vector<std::pair<std::string, Acc>>>> groups;
  for (const auto& r : rows) {
    auto g = std::find_if(groups.begin(), groups.end(), [&](const auto& p) { return p.first == r.dataset; });
    if (g == groups.end()) g = groups.insert(groups.end(), {r.dataset, {}});
    auto m = std::find_if(g->second.begin(), g->second.end(), [&](const auto& p) { return p.first == r.method; });
    if (m == g->second.end()) m = g->second.insert(g->second.end(), {r.method, {}});
    Acc& a = m->second;
    ++a.n;
    a.iou += r.iou;
    a.biou += r.biou;
    a.brier += r.brier;
    if (r.pearson) {
      ++a.n_pearson;
      a.pearson += *r.pearson;
    }
  }
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (const auto& [dataset, methods] : groups) {
    nlohmann::ordered_json d = nlohmann::ordered_json::object();
    for (const auto& [method, a] : methods) {
      const double n = static_cast<double>(a.n);
      d[method] = {{"count", a.n},
                   {"miou", a.iou / n},
                   {"mbiou", a.biou / n},
                   {"pearson", a.n_pearson ? nlohmann::ordered_json(a.pearson / static_cast<double>(a.n_pearson))
                                           : nlohmann::ordered_json(nullptr)},
                   {"pearson_count", a.n_pearson},
                   {"brier", a.brier / n}};
    }
    out[dataset] = std::move(d);
  }
  return out;
}

// ---------------------------------------------------------------- helpers

inline void write_run_config(const ExperimentConfig& c) {
  write_text_file(run_paths(c).config(), to_json(c).dump(2) + "\n");
}

class LossLog {
 public:
  void operator()(std::size_t step, double loss) {
    text_ += std::to_string(step) + "," + format_double(loss) + "\n";
  }
  void save(const std::filesystem::path& path) const { write_text_file(path, "step,loss\n" + text_); }

 private:
  std::string text_;
};

inline void require_file(const std::filesystem::path& p, const std::string& what) {
  if (!std::filesystem::exists(p)) throw MissingPrerequisite(what + " not found at " + p.string());
}

inline RefNet load_model(const ExperimentConfig& c) {
  const RunPaths paths = run_paths(c);
  require_file(paths.model(), "trained model (run `train` first)");
  return model_from_checkpoint(read_checkpoint(paths.model()));
}

inline std::vector<Sample> load_fit_set(const ExperimentConfig& c) {
  const RunPaths paths = run_paths(c);
  require_file(paths.fit_set() / "manifest.json", "fit set (run `gen` first)");
  return load_dataset(paths.fit_set());
}

inline std::vector<Sample> load_eval_set(const ExperimentConfig& c, ChallengeKind k) {
  const RunPaths paths = run_paths(c);
  require_file(paths.eval_set(k) / "manifest.json", "evaluation set (run `gen` first)");
  return load_dataset(paths.eval_set(k));
}

// ---------------------------------------------------------------- commands

inline void cmd_gen(const ExperimentConfig& c, bool force) {
  const RunPaths paths = run_paths(c);
  if (std::filesystem::exists(paths.data()) && !std::filesystem::is_empty(paths.data())) {
    if (!force) throw ValidationError(paths.data().string() + " is not empty (use --force to overwrite)");
    std::filesystem::remove_all(paths.data());
  }
  write_run_config(c);
  GenerateOptions opt;
  opt.height = c.height;
  opt.width = c.width;
  opt.intensity_min = c.data.intensity_min;
  opt.intensity_max = c.data.intensity_max;
  opt.seed = c.seed;

  opt.split = "fit";
  opt.kind = ChallengeKind::clean;
  opt.count = c.data.fit_count;
  generate_dataset(paths.fit_set(), opt);

  opt.split = "eval";
  opt.count = c.data.eval_count;
  for (ChallengeKind k : c.data.eval_kinds) {
    opt.kind = k;
    generate_dataset(paths.eval_set(k), opt);
  }
}

inline RefNet cmd_train(const ExperimentConfig& c) {
  const RunPaths paths = run_paths(c);
  const auto fit = load_fit_set(c);
  write_run_config(c);
  RefNet model(c.encoder_config());
  DecoderTrainConfig tc;
  tc.steps = c.decoder.steps;
  tc.optimizer = c.decoder.optimizer;
  tc.hflip_probability = c.hflip_probability;
  tc.box_noise = c.training_box_noise();
  tc.seed = c.seed;
  LossLog log;
  model.decoder = train_decoder(model, fit, tc, std::ref(log));
  log.save(paths.log("train"));
  write_checkpoint(model_checkpoint(model, c.seed), paths.model());
  return model;
}

inline LaplacePosterior cmd_fit_laplace(const ExperimentConfig& c) {
  const RunPaths paths = run_paths(c);
  const RefNet model = load_model(c);
  const auto fit = load_fit_set(c);
  write_run_config(c);
  LaplaceFitConfig lc;
  lc.prior_precision = c.uq.prior_precision;
  lc.fit_resolution = c.uq.fit_resolution;
  lc.seed = c.seed;
  const LaplacePosterior post = fit_laplace(model, fit, lc);
  write_text_file(paths.log("fit_laplace"), "images," + std::to_string(fit.size()) + "\n");
  write_checkpoint(laplace_checkpoint(post, c.seed), paths.laplace());
  return post;
}

inline VarianceHead cmd_train_varnet(const ExperimentConfig& c) {
  const RunPaths paths = run_paths(c);
  const RefNet model = load_model(c);
  const auto fit = load_fit_set(c);
  write_run_config(c);
  VarianceHeadTrainConfig vc;
  vc.steps = c.varnet.steps;
  vc.optimizer = c.varnet.optimizer;
  vc.seed = c.seed;
  LossLog log;
  const VarianceHead head = train_variance_head(model, fit, vc, std::ref(log));
  log.save(paths.log("train_varnet"));
  write_checkpoint(variance_head_checkpoint(head, c.seed), paths.varnet());
  return head;
}

/// Trains one fusion layer per configured variant (no_refine needs none).
inline void cmd_train_fusion(const ExperimentConfig& c) {
  const RunPaths paths = run_paths(c);
  const RefNet model = load_model(c);
  const auto fit = load_fit_set(c);
  std::optional<LaplacePosterior> post;
  for (FusionVariant v : c.refine_variants) {
    if (uses_laplace(v) && !post) {
      require_file(paths.laplace(), "Laplace posterior (run `fit-laplace` first)");
      post = laplace_from_checkpoint(read_checkpoint(paths.laplace()));
    }
  }
  write_run_config(c);
  FusionTrainConfig fc;
  fc.steps = c.fusion.steps;
  fc.optimizer = c.fusion.optimizer;
  fc.hflip_probability = c.hflip_probability;
  fc.box_noise = c.training_box_noise();
  fc.ensemble_size = c.uq.ensemble_size;
  fc.seed = c.seed;
  for (FusionVariant v : c.refine_variants) {
    if (v == FusionVariant::no_refine) continue;
    LossLog log;
    const FusionLayer init = FusionLayer::identity(model.encoder.config().prompt_channels, c.seed);
    const FusionLayer trained = train_fusion(model, init, fit, v, post ? &*post : nullptr, fc, std::ref(log));
    log.save(paths.log("train_fusion_" + std::string(to_string(v))));
    write_checkpoint(fusion_checkpoint(trained, v, c.seed), paths.fusion(v));
  }
}

/// Evaluation prompt for one sample: the ground-truth box, optionally jittered.
inline PromptSet eval_prompt(const ExperimentConfig& c, const Sample& s) {
  PromptSet p;
  p.bbox = bbox_from_mask(s.mask);
  if (c.eval.perturb_prompts) {
    Rng rng = Rng(c.seed).fork("eval/" + s.dataset + "/" + s.id + "/prompt");
    p.bbox = perturb_bbox(*p.bbox, rng, s.mask.height(), s.mask.width(), c.prompt_noise());
  }
  return p;
}

inline std::vector<EvalRecord> cmd_eval(const ExperimentConfig& c) {
  const RunPaths paths = run_paths(c);
  const RefNet model = load_model(c);
  const auto wants = [&](const char* m) {
    return std::find(c.eval.methods.begin(), c.eval.methods.end(), m) != c.eval.methods.end();
  };
  std::optional<LaplacePosterior> post;
  std::optional<VarianceHead> head;
  if (wants("laplace")) {
    require_file(paths.laplace(), "Laplace posterior (run `fit-laplace` first)");
    post = laplace_from_checkpoint(read_checkpoint(paths.laplace()));
  }
  if (wants("varnet")) {
    require_file(paths.varnet(), "variance head (run `train-varnet` first)");
    head = variance_head_from_checkpoint(read_checkpoint(paths.varnet()));
  }
  write_run_config(c);
  const AugmentationPolicy policy = AugmentationPolicy::from_name(c.uq.tta_policy);
  const Rng base(c.seed);
  std::vector<EvalRecord> rows;
  for (ChallengeKind k : c.data.eval_kinds) {
    const auto samples = load_eval_set(c, k);
    for (const Sample& s : samples) {
      const PromptSet prompt = eval_prompt(c, s);
      const std::string stream = "eval/" + s.dataset + "/" + s.id + "/";
      for (const std::string& method : c.eval.methods) {
        UQResult r;
        if (method == "baseline") {
          const Grid2D p = forward(model, s.image, prompt).probmap;
          r.uncertainty = predictive_entropy(p);
          r.mean = p;
          r.method = "baseline";
          r.ensemble_size = 1;
        } else if (method == "tta") {
          r = uq_tta(model, s.image, prompt, policy, c.uq.ensemble_size, base.fork(stream + "tta"));
        } else if (method == "prompt") {
          r = uq_prompt(model, s.image, prompt, c.prompt_noise(), c.uq.ensemble_size, base.fork(stream + "prompt"));
        } else if (method == "laplace") {
          r = uq_laplace(model, *post, s.image, prompt, c.uq.ensemble_size, base.fork(laplace_stream_label(s)),
                         c.uq.laplace_noise_scale);
        } else {
          r = uq_varnet(model, *head, s.image, prompt, c.uq.varnet_output);
        }
        rows.push_back(evaluate_sample(s.id, s.dataset, method, r.mean, r.uncertainty, s.mask, c.eval.metrics));
        if (c.eval.dump_maps) {
          const auto dir = paths.map_dir(s.dataset);
          write_f32map(r.mean, dir / (s.id + "_" + method + ".pbar.umap"));
          write_f32map(r.uncertainty, dir / (s.id + "_" + method + ".unc.umap"));
        }
      }
    }
  }
  std::string csv = csv_header(false);
  for (const auto& r : rows) csv += csv_row(r);
  write_text_file(paths.metrics_csv(), csv);
  write_text_file(paths.aggregate_json(), aggregate(rows).dump(2) + "\n");
  return rows;
}

inline std::vector<RefineRecord> cmd_refine(const ExperimentConfig& c) {
  const RunPaths paths = run_paths(c);
  const RefNet model = load_model(c);
  RefinementComponents parts;
  parts.ensemble_size = c.uq.ensemble_size;
  parts.laplace_noise_scale = c.uq.laplace_noise_scale;
  std::optional<LaplacePosterior> post;
  for (FusionVariant v : c.refine_variants) {
    if (v == FusionVariant::no_refine) continue;
    require_file(paths.fusion(v), "fusion layer for " + std::string(to_string(v)) + " (run `train-fusion` first)");
    parts.fusion[v] = fusion_from_checkpoint(read_checkpoint(paths.fusion(v)));
    if (uses_laplace(v) && !post) {
      require_file(paths.laplace(), "Laplace posterior (run `fit-laplace` first)");
      post = laplace_from_checkpoint(read_checkpoint(paths.laplace()));
    }
  }
  if (post) parts.posterior = &*post;
  write_run_config(c);

  std::vector<RefineRecord> all;
  for (ChallengeKind k : c.data.eval_kinds) {
    const auto samples = load_eval_set(c, k);
    auto recs = refine_eval(model, parts, samples, c.refine_variants, c.seed, c.eval.metrics);
    all.insert(all.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
  }

  std::string csv = csv_header(true);
  std::vector<EvalRecord> plain;
  for (const auto& r : all) {
    const std::string v(to_string(r.variant));
    csv += csv_row(r.metrics, &v);
    plain.push_back(r.metrics);
  }
  write_text_file(paths.refine() / "records.csv", csv);
  const auto agg = aggregate(plain);
  write_text_file(paths.refine() / "aggregate.json", agg.dump(2) + "\n");
  std::string table = "dataset,variant,count,miou,mbiou\n";
  for (const auto& [dataset, variants] : agg.items()) {
    for (const auto& [variant, m] : variants.items()) {
      table += dataset + "," + variant + "," + std::to_string(m["count"].get<std::size_t>()) + "," +
               format_double(m["miou"].get<double>()) + "," + format_double(m["mbiou"].get<double>()) + "\n";
    }
  }
  write_text_file(paths.refine() / "table.csv", table);
  return all;
}

/// Copies the image and draws the box outline in red.
inline MultiChannelGrid draw_bbox(const MultiChannelGrid& image, const BBox& b) {
  MultiChannelGrid out = image;
  auto paint = [&](std::size_t y, std::size_t x) {
    out(0, y, x) = 1.0f;
    out(1, y, x) = 0.0f;
    out(2, y, x) = 0.0f;
  };
  for (int x = b.x0; x <= b.x1; ++x) {
    paint(static_cast<std::size_t>(b.y0), static_cast<std::size_t>(x));
    paint(static_cast<std::size_t>(b.y1), static_cast<std::size_t>(x));
  }
  for (int y = b.y0; y <= b.y1; ++y) {
    paint(static_cast<std::size_t>(y), static_cast<std::size_t>(b.x0));
    paint(static_cast<std::size_t>(y), static_cast<std::size_t>(b.x1));
  }
  return out;
}

/// Min-max normalization for display panels only.
inline Grid2D display_normalize(const Grid2D& u) {
  const auto [lo, hi] = std::minmax_element(u.begin(), u.end());
  Grid2D out(u.height(), u.width(), 0.0f);
  if (*hi > *lo) {
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = (u[i] - *lo) / (*hi - *lo);
  }
  return out;
}

/// `sample` is "<dataset>/<id>" or a bare id (first match over the eval sets).
/// Panels come from the persisted eval dumps, so `eval` must have run.
inline nlohmann::ordered_json cmd_maps(const ExperimentConfig& c, const std::string& sample,
                                       const std::vector<std::string>& methods) {
  const RunPaths paths = run_paths(c);
  std::string want_dataset, want_id = sample;
  if (const auto slash = sample.find('/'); slash != std::string::npos) {
    want_dataset = sample.substr(0, slash);
    want_id = sample.substr(slash + 1);
  }
  std::optional<Sample> found;
  for (ChallengeKind k : c.data.eval_kinds) {
    if (!want_dataset.empty() && paths.eval_set(k).filename() != want_dataset) continue;
    for (auto& s : load_eval_set(c, k)) {
      if (s.id == want_id) {
        found = std::move(s);
        break;
      }
    }
    if (found) break;
  }
  if (!found) throw ValidationError("unknown sample '" + sample + "'");
  const PromptSet prompt = eval_prompt(c, *found);
  const auto dir = paths.panels(found->dataset, found->id);
  nlohmann::ordered_json index = {{"sample", found->id}, {"dataset", found->dataset}, {"methods", nlohmann::ordered_json::object()}};
  for (const auto& m : methods) {
    const auto pbar_path = paths.map_dir(found->dataset) / (found->id + "_" + m + ".pbar.umap");
    const auto unc_path = paths.map_dir(found->dataset) / (found->id + "_" + m + ".unc.umap");
    require_file(pbar_path, "map dump for method " + m + " (run `eval` first)");
    require_file(unc_path, "map dump for method " + m + " (run `eval` first)");
    const Grid2D pbar = read_f32map(pbar_path);
    const Grid2D unc = read_f32map(unc_path);
    const std::string stem = m + "_";
    write_ppm(draw_bbox(found->image, *prompt.bbox), dir / (stem + "image.ppm"));
    write_pgm(found->mask, dir / (stem + "gt.pgm"));
    write_pgm(binarize(pbar, c.eval.metrics.threshold), dir / (stem + "pred.pgm"));
    write_pgm(display_normalize(unc), dir / (stem + "unc.pgm"));
    index["methods"][m] = {stem + "image.ppm", stem + "gt.pgm", stem + "pred.pgm", stem + "unc.pgm"};
  }
  write_text_file(dir / "index.json", index.dump(2) + "\n");
  return index;
}

struct VerifyReport {
  std::size_t rows = 0;
  std::size_t mismatches = 0;
  bool aggregate_matches = false;
  std::vector<std::string> problems;
  [[nodiscard]] bool ok() const { return mismatches == 0 && aggregate_matches; }
};

/// Recomputes every metrics CSV row from the dumped maps and the stored masks,
/// and the aggregate JSON from the CSV. Comparison is on the printed text.
inline VerifyReport cmd_verify(const ExperimentConfig& c) {
  const RunPaths paths = run_paths(c);
  require_file(paths.metrics_csv(), "metrics CSV (run `eval` first)");
  const auto rows = read_metrics_csv(paths.metrics_csv());
  std::map<std::string, std::map<std::string, Grid2D>> masks;
  for (ChallengeKind k : c.data.eval_kinds) {
    for (auto& s : load_eval_set(c, k)) masks[s.dataset][s.id] = std::move(s.mask);
  }
  VerifyReport rep;
  for (const auto& r : rows) {
    ++rep.rows;
    const auto ds = masks.find(r.dataset);
    if (ds == masks.end() || !ds->second.contains(r.sample)) {
      ++rep.mismatches;
      rep.problems.push_back(r.dataset + "/" + r.sample + ": no such sample");
      continue;
    }
    const auto dir = paths.map_dir(r.dataset);
    const Grid2D pbar = read_f32map(dir / (r.sample + "_" + r.method + ".pbar.umap"));
    const Grid2D unc = read_f32map(dir / (r.sample + "_" + r.method + ".unc.umap"));
    const EvalRecord again =
        evaluate_sample(r.sample, r.dataset, r.method, pbar, unc, ds->second.at(r.sample), c.eval.metrics);
    if (csv_row(again) != csv_row(r)) {
      ++rep.mismatches;
      rep.problems.push_back("recomputed: " + csv_row(again) + "   stored: " + csv_row(r));
    }
  }
  require_file(paths.aggregate_json(), "aggregate JSON (run `eval` first)");
  rep.aggregate_matches = read_text_file(paths.aggregate_json()) == aggregate(rows).dump(2) + "\n";
  if (!rep.aggregate_matches) rep.problems.push_back("aggregate.json differs from the CSV re-aggregation");
  return rep;
}

/// gen, train, fit-laplace, train-varnet, train-fusion, eval, refine.
inline void run_pipeline(const ExperimentConfig& c, bool force, bool with_fusion = true) {
  cmd_gen(c, force);
  cmd_train(c);
  cmd_fit_laplace(c);
  cmd_train_varnet(c);
  if (with_fusion) cmd_train_fusion(c);
  cmd_eval(c);
  if (with_fusion) cmd_refine(c);
}

}  // namespace uqseg
