#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ebim/attack.hpp"
#include "ebim/dataset.hpp"
#include "ebim/error.hpp"
#include "ebim/manifest.hpp"
#include "ebim/model.hpp"
#include "ebim/stats.hpp"
#include "ebim/strength.hpp"
#include "ebim/study.hpp"
#include "ebim/study_http.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace ebim;

namespace {

constexpr std::uint64_t kDefaultSeed = 20190227;

struct SeedFlags {
  std::uint64_t seed = kDefaultSeed;
  bool from_entropy = false;

  void add(CLI::App* cmd) {
    cmd->add_option("--seed", seed, "Random seed")->capture_default_str();
    cmd->add_flag("--seed-from-entropy", from_entropy, "Draw the seed from the system entropy pool");
  }
  // The resolved seed is what goes into the manifest.
  std::uint64_t resolve() {
    if (from_entropy) {
      std::random_device rd;
      seed = (std::uint64_t(rd()) << 32) ^ rd();
    }
    return seed;
  }
};

void write_json(const ordered_json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error(Errc::io, "write failed: " + path.string());
}

void require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw Error(Errc::io, "no such file: " + p.string());
}

ordered_json prediction_json(const Prediction& p) {
  return {{"label", p.label}, {"certainty", p.certainty}, {"probabilities", p.probabilities}};
}

ordered_json distances_json(const Distances& d) { return {{"linf", d.linf}, {"l2", d.l2}, {"l0", d.l0}}; }

// ---- make-dataset ----------------------------------------------------------

struct DatasetArgs {
  fs::path out;
  int per_class = 100;
  int width = 28, height = 28, channels = 1;
  SeedFlags seed;
};

void cmd_make_dataset(DatasetArgs& a) {
  const auto seed = a.seed.resolve();
  const Dataset data = make_synthetic_dataset(a.per_class, seed, {a.width, a.height, a.channels});
  save_dataset(data, a.out);
  RunManifest m;
  m.command = "make-dataset";
  m.parameters = {{"per_class", a.per_class}, {"width", a.width}, {"height", a.height}, {"channels", a.channels}};
  m.seeds = {{"seed", seed}};
  m.outputs = {a.out};
  write_manifest(m);
  std::cout << "wrote " << data.size() << " images to " << a.out.string() << '\n';
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  fs::path dataset, test, out;
  int epochs = 10;
  double lr = 0.05;
  int batch = 32;
  SeedFlags seed;
};

void cmd_train(TrainArgs& a) {
  const auto seed = a.seed.resolve();
  const Dataset train_set = load_dataset(a.dataset);
  if (train_set.empty()) throw Error(Errc::invalid_argument, "empty dataset: " + a.dataset.string());
  const Dataset test_set = a.test.empty() ? Dataset{} : load_dataset(a.test);
  int classes = 2;
  for (const auto& s : train_set) classes = std::max(classes, s.label + 1);

  TrainOptions opts;
  opts.epochs = a.epochs;
  opts.learning_rate = a.lr;
  opts.batch_size = a.batch;
  opts.seed = seed;
  const Model init = Model::reference(train_set.front().image.shape(), classes, seed);
  const TrainResult r = train(init, train_set, test_set, opts);
  save_weights(r.model, a.out);

  RunManifest m;
  m.command = "train";
  m.parameters = {{"epochs", a.epochs}, {"lr", a.lr}, {"batch", a.batch}, {"classes", classes},
                  {"architecture", r.model.architecture()}};
  m.seeds = {{"seed", seed}};
  m.inputs = {a.dataset};
  if (!a.test.empty()) m.inputs.push_back(a.test);
  m.outputs = {a.out};
  write_manifest(m);

  std::printf("train accuracy %.4f", r.train_accuracy);
  if (!test_set.empty()) std::printf("  test accuracy %.4f", r.test_accuracy);
  std::printf("  final loss %.5f\n", r.epoch_loss.empty() ? 0.0 : r.epoch_loss.back());
}

// ---- attack ----------------------------------------------------------------

struct AttackArgs {
  fs::path weights, image, map, out, report;
  std::string method = "ebim";
  int target_label = -1;
  double certainty = 0.99;
  double stepsize = 0.004;
  int max_iter = 1000;
  double linf_budget = 1.0;
  double eps = 0.004;
  int radius = kDefaultEntropyRadius;
  int bins = kDefaultEntropyBins;
  double threshold = kDefaultEntropyThreshold;
};

void cmd_attack(AttackArgs& a) {
  require_file(a.weights);
  require_file(a.image);
  const Model model = load_weights(a.weights);
  const Image x = load_image(a.image);

  AttackConfig cfg;
  cfg.mode = a.target_label >= 0 ? AttackMode::targeted : AttackMode::untargeted;
  cfg.target_label = std::max(a.target_label, 0);
  cfg.certainty = a.certainty;
  cfg.stepsize = a.stepsize;
  cfg.max_iterations = a.max_iter;
  cfg.linf_budget = a.linf_budget;

  AttackResult r;
  if (a.method == "fgsm") {
    r = fgsm(model, x, a.eps);
  } else if (a.method == "bim") {
    r = bim(model, x, cfg);
  } else if (a.method == "ebim") {
    r = ebim_attack(model, x, cfg, {a.radius, a.bins, a.threshold, GrayWeights::mean});
  } else {
    if (a.map.empty()) throw Error(Errc::invalid_argument, "--method localized needs --map");
    require_file(a.map);
    r = localized_bim(model, x, cfg, StrengthMap(load_map(a.map)));
  }
  save_image(r.adversarial, a.out);

  const Prediction before = forward(model, x);
  ordered_json rep;
  rep["method"] = r.method;
  rep["mode"] = a.method == "fgsm" ? "untargeted" : (cfg.mode == AttackMode::targeted ? "targeted" : "untargeted");
  if (cfg.mode == AttackMode::targeted && a.method != "fgsm") {
    rep["target_label"] = cfg.target_label;
    rep["target_certainty_before"] = before.probabilities[std::size_t(cfg.target_label)];
    rep["target_certainty_after"] = r.final_prediction.probabilities[std::size_t(cfg.target_label)];
  }
  rep["success"] = r.success;
  rep["iterations"] = r.iterations;
  rep["original"] = prediction_json(before);
  rep["adversarial"] = prediction_json(r.final_prediction);
  rep["perturbation"] = distances_json(r.perturbation);
  rep["kappa"] = kappa(r.strength_map);
  const fs::path report = a.report.empty() ? fs::path(a.out.string() + ".json") : a.report;
  write_json(rep, report);

  RunManifest m;
  m.command = "attack";
  m.parameters = {{"method", a.method},         {"target_label", a.target_label}, {"certainty", a.certainty},
                  {"stepsize", a.stepsize},     {"max_iter", a.max_iter},         {"linf_budget", a.linf_budget},
                  {"eps", a.eps},               {"entropy_radius", a.radius},     {"entropy_bins", a.bins},
                  {"entropy_threshold", a.threshold}};
  m.inputs = {a.weights, a.image};
  if (!a.map.empty()) m.inputs.push_back(a.map);
  m.outputs = {a.out, report};
  write_manifest(m);

  std::printf("%s: %s after %d iterations, label %d -> %d (certainty %.4f), linf %.4f, kappa %.3f\n", r.method.c_str(),
              r.success ? "success" : "failure", r.iterations, r.original_label, r.final_prediction.label,
              r.final_prediction.certainty, r.perturbation.linf, kappa(r.strength_map));
}

// ---- entropy-map -----------------------------------------------------------

struct EntropyArgs {
  fs::path image, out, pgm;
  int radius = kDefaultEntropyRadius;
  int bins = kDefaultEntropyBins;
  double threshold = kDefaultEntropyThreshold;
  double gamma = 0.0;
  bool luminance = false;
};

void cmd_entropy_map(EntropyArgs& a) {
  require_file(a.image);
  const Image x = load_image(a.image);
  const EntropyMap s = local_entropy(to_grayscale(x, a.luminance ? GrayWeights::luminance : GrayWeights::mean),
                                     a.radius, a.bins);
  const StrengthMap e = a.gamma > 0.0 ? phi(s, NormalizeGamma{a.gamma}) : phi(s, Binarize{a.threshold});
  save_map(e, a.out);
  if (!a.pgm.empty()) save_image(strength_to_image(e), a.pgm);

  RunManifest m;
  m.command = "entropy-map";
  m.parameters = {{"entropy_radius", a.radius}, {"entropy_bins", a.bins},   {"entropy_threshold", a.threshold},
                  {"gamma", a.gamma},           {"luminance", a.luminance}};
  m.inputs = {a.image};
  m.outputs = {a.out};
  if (!a.pgm.empty()) m.outputs.push_back(a.pgm);
  write_manifest(m);
  std::printf("kappa %.4f, max entropy %.4f bits\n", kappa(e), s.values.max());
}

// ---- perlin ----------------------------------------------------------------

struct PerlinArgs {
  fs::path out, pgm;
  int width = 299, height = 299, cell = 32, octaves = 4;
  double target_kappa = -1.0;
  double tol = kDefaultKappaTolerance;
  std::string kappa_method = "brightness";
  SeedFlags seed;
};

void cmd_perlin(PerlinArgs& a) {
  const auto seed = a.seed.resolve();
  StrengthMap e = perlin_map(a.width, a.height, a.cell, a.octaves, seed);
  if (a.target_kappa >= 0.0) {
    e = adjust_to_kappa(e, a.target_kappa, a.tol,
                        a.kappa_method == "threshold" ? KappaMethod::threshold : KappaMethod::brightness);
  }
  save_map(e, a.out);
  if (!a.pgm.empty()) save_image(strength_to_image(e), a.pgm);

  RunManifest m;
  m.command = "perlin";
  m.parameters = {{"width", a.width},   {"height", a.height},           {"cell", a.cell},
                  {"octaves", a.octaves}, {"target_kappa", a.target_kappa}, {"tol", a.tol},
                  {"kappa_method", a.kappa_method}};
  m.seeds = {{"seed", seed}};
  m.outputs = {a.out};
  if (!a.pgm.empty()) m.outputs.push_back(a.pgm);
  write_manifest(m);
  std::printf("kappa %.4f\n", kappa(e));
}

// ---- compare ---------------------------------------------------------------

struct CompareArgs {
  fs::path original, modified, out, diff, weights;
};

void cmd_compare(CompareArgs& a) {
  require_file(a.original);
  require_file(a.modified);
  const Image x = load_image(a.original);
  const Image y = load_image(a.modified);
  ordered_json rep;
  rep["distances"] = distances_json(distances(x, y));
  if (!a.weights.empty()) {
    require_file(a.weights);
    const Model model = load_weights(a.weights);
    rep["original"] = prediction_json(forward(model, x));
    rep["modified"] = prediction_json(forward(model, y));
  }
  write_json(rep, a.out);
  if (!a.diff.empty()) save_image(contrast_difference(x, y), a.diff);

  RunManifest m;
  m.command = "compare";
  m.inputs = {a.original, a.modified};
  if (!a.weights.empty()) m.inputs.push_back(a.weights);
  m.outputs = {a.out};
  if (!a.diff.empty()) m.outputs.push_back(a.diff);
  write_manifest(m);
  std::cout << rep["distances"].dump() << '\n';
}

// ---- stats -----------------------------------------------------------------

struct StatsArgs {
  fs::path responses, out;
};

void cmd_stats(StatsArgs& a) {
  require_file(a.responses);
  const auto records = read_responses(a.responses);
  const ordered_json rep = aggregate_results(records);
  write_json(rep, a.out);

  RunManifest m;
  m.command = "stats";
  m.inputs = {a.responses};
  m.outputs = {a.out};
  write_manifest(m);

  std::printf("%zu records, %d complete sessions\n", records.size(), rep["complete_sessions"].get<int>());
  if (!rep["battery"].is_null()) {
    for (const auto& row : rep["battery"]["table"]) {
      if (row["p"].is_number()) {
        std::printf("  H%d %-8s p = %.6g%s\n", row["hypothesis"].get<int>(), row["method"].get<std::string>().c_str(),
                    row["p"].get<double>(), row.value("rejected", false) ? "  (rejected)" : "");
      } else {
        std::printf("  H%d %-8s degenerate\n", row["hypothesis"].get<int>(),
                    row["method"].get<std::string>().c_str());
      }
    }
  }
}

// ---- study-prep ------------------------------------------------------------

struct PrepArgs {
  fs::path weights, dataset, out_dir;
  int count = 80;
  int target_label = 0;
  int max_iter = 1000;
  double stepsize = 0.004;
  double certainty = 0.99;
};

// Attacks the first `count` dataset images with BIM and EbIM and writes the
// triples plus a study config. Images whose attacks fail are skipped.
void cmd_study_prep(PrepArgs& a) {
  require_file(a.weights);
  const Model model = load_weights(a.weights);
  const Dataset data = load_dataset(a.dataset);
  fs::create_directories(a.out_dir / "images");

  StudyConfig cfg;
  for (const Sample& s : data) {
    if (int(cfg.triples.size()) >= a.count) break;
    AttackConfig ac;
    ac.target_label = s.label == a.target_label ? (a.target_label + 1) % model.num_classes() : a.target_label;
    ac.certainty = a.certainty;
    ac.stepsize = a.stepsize;
    ac.max_iterations = a.max_iter;
    const AttackResult rb = bim(model, s.image, ac);
    AttackResult re;
    try {
      re = ebim_attack(model, s.image, ac);
    } catch (const Error& e) {
      if (e.code() != Errc::zero_mask) throw;
      continue;
    }
    if (!rb.success || !re.success) continue;
    char id[16];
    std::snprintf(id, sizeof id, "p%04zu", cfg.triples.size());
    const auto ext = s.image.channels() == 3 ? ".ppm" : ".pgm";
    ImageTriple t{id, fs::path("images") / (std::string(id) + "_orig" + ext),
                  fs::path("images") / (std::string(id) + "_bim" + ext),
                  fs::path("images") / (std::string(id) + "_ebim" + ext)};
    save_image(s.image, a.out_dir / t.original);
    save_image(rb.adversarial, a.out_dir / t.bim);
    save_image(re.adversarial, a.out_dir / t.ebim);
    cfg.triples.push_back(t);
  }
  if (cfg.triples.empty()) throw Error(Errc::invalid_argument, "no image yielded two successful attacks");
  const fs::path config_path = a.out_dir / "study.json";
  save_study_config(cfg, config_path);

  RunManifest m;
  m.command = "study-prep";
  m.parameters = {{"count", a.count},       {"target_label", a.target_label}, {"max_iter", a.max_iter},
                  {"stepsize", a.stepsize}, {"certainty", a.certainty}};
  m.inputs = {a.weights, a.dataset};
  m.outputs = {config_path};
  write_manifest(m);
  std::printf("%zu triples, %zu trials per session\n", cfg.triples.size(), cfg.triples.size() * 3);
}

// ---- serve -----------------------------------------------------------------

struct ServeArgs {
  fs::path config, responses, static_dir;
  std::string host = "127.0.0.1";
  int port = 8080;
};

void cmd_serve(ServeArgs& a) {
  require_file(a.config);
  StudyService service(load_study_config(a.config), a.responses);
  std::printf("serving %d pairs on http://%s:%d\n", service.pair_count(), a.host.c_str(), a.port);
  std::fflush(stdout);
  serve_study(service, a.host, a.port, a.static_dir);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entropy-localized adversarial examples and perception study tooling"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  DatasetArgs ds;
  auto* c_ds = app.add_subcommand("make-dataset", "Write the synthetic shapes dataset");
  c_ds->add_option("--out", ds.out, "Output directory")->required();
  c_ds->add_option("--per-class", ds.per_class)->capture_default_str()->check(CLI::PositiveNumber);
  c_ds->add_option("--width", ds.width)->capture_default_str()->check(CLI::Range(8, 4096));
  c_ds->add_option("--height", ds.height)->capture_default_str()->check(CLI::Range(8, 4096));
  c_ds->add_option("--channels", ds.channels)->capture_default_str()->check(CLI::IsMember({1, 3}));
  ds.seed.add(c_ds);

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train the reference CNN");
  c_tr->add_option("--dataset", tr.dataset, "Training set directory")->required();
  c_tr->add_option("--test", tr.test, "Held-out set directory");
  c_tr->add_option("--out,--weights", tr.out, "Output weight file")->required();
  c_tr->add_option("--epochs", tr.epochs)->capture_default_str()->check(CLI::PositiveNumber);
  c_tr->add_option("--lr", tr.lr)->capture_default_str()->check(CLI::PositiveNumber);
  c_tr->add_option("--batch", tr.batch)->capture_default_str()->check(CLI::PositiveNumber);
  tr.seed.add(c_tr);

  AttackArgs at;
  auto* c_at = app.add_subcommand("attack", "Run FGSM, BIM, EbIM or a localized BIM");
  c_at->add_option("--weights", at.weights)->required();
  c_at->add_option("--image", at.image)->required();
  c_at->add_option("--method", at.method)->capture_default_str()->check(CLI::IsMember({"fgsm", "bim", "ebim", "localized"}));
  c_at->add_option("--target-label", at.target_label, "Target class; omit for an untargeted attack");
  c_at->add_option("--certainty", at.certainty)->capture_default_str();
  c_at->add_option("--stepsize", at.stepsize)->capture_default_str();
  c_at->add_option("--max-iter", at.max_iter)->capture_default_str();
  c_at->add_option("--linf-budget", at.linf_budget)->capture_default_str();
  c_at->add_option("--eps", at.eps, "FGSM step")->capture_default_str();
  c_at->add_option("--entropy-radius", at.radius)->capture_default_str();
  c_at->add_option("--entropy-bins", at.bins)->capture_default_str();
  c_at->add_option("--entropy-threshold", at.threshold)->capture_default_str();
  c_at->add_option("--map", at.map, "Strength map for --method localized");
  c_at->add_option("--out", at.out, "Adversarial image")->required();
  c_at->add_option("--report", at.report, "JSON report (default <out>.json)");
  c_at->add_option("--seed", "Accepted for symmetry; attacks are deterministic");

  EntropyArgs en;
  auto* c_en = app.add_subcommand("entropy-map", "Entropy-derived strength map of an image");
  c_en->add_option("--image", en.image)->required();
  c_en->add_option("--entropy-radius", en.radius)->capture_default_str();
  c_en->add_option("--entropy-bins", en.bins)->capture_default_str();
  c_en->add_option("--entropy-threshold", en.threshold)->capture_default_str();
  c_en->add_option("--gamma", en.gamma, "Use (S/S_max)^gamma instead of binarization");
  c_en->add_flag("--luminance", en.luminance, "Rec. 601 luminance instead of the channel mean");
  c_en->add_option("--out", en.out, "Map file")->required();
  c_en->add_option("--pgm", en.pgm, "Also write the map as an image");

  PerlinArgs pe;
  auto* c_pe = app.add_subcommand("perlin", "Perlin-noise strength map");
  c_pe->add_option("--width", pe.width)->capture_default_str();
  c_pe->add_option("--height", pe.height)->capture_default_str();
  c_pe->add_option("--cell", pe.cell)->capture_default_str();
  c_pe->add_option("--octaves", pe.octaves)->capture_default_str();
  c_pe->add_option("--target-kappa", pe.target_kappa, "Adjust the map to this mean strength");
  c_pe->add_option("--kappa-tol", pe.tol)->capture_default_str();
  c_pe->add_option("--kappa-method", pe.kappa_method)->capture_default_str()->check(CLI::IsMember({"brightness", "threshold"}));
  c_pe->add_option("--out", pe.out, "Map file")->required();
  c_pe->add_option("--pgm", pe.pgm, "Also write the map as an image");
  pe.seed.add(c_pe);

  CompareArgs cm;
  auto* c_cm = app.add_subcommand("compare", "Distances and difference image of two images");
  c_cm->add_option("--original", cm.original)->required();
  c_cm->add_option("--modified", cm.modified)->required();
  c_cm->add_option("--weights", cm.weights, "Also report predictions");
  c_cm->add_option("--out", cm.out, "JSON report")->required();
  c_cm->add_option("--diff", cm.diff, "Contrast-stretched difference image");

  StatsArgs st;
  auto* c_st = app.add_subcommand("stats", "Hypothesis tests over study responses");
  c_st->add_option("--responses", st.responses)->required();
  c_st->add_option("--out", st.out)->required();

  PrepArgs pr;
  auto* c_pr = app.add_subcommand("study-prep", "Generate BIM/EbIM image triples and a study config");
  c_pr->add_option("--weights", pr.weights)->required();
  c_pr->add_option("--dataset", pr.dataset)->required();
  c_pr->add_option("--out", pr.out_dir)->required();
  c_pr->add_option("--count", pr.count)->capture_default_str();
  c_pr->add_option("--target-label", pr.target_label)->capture_default_str();
  c_pr->add_option("--certainty", pr.certainty)->capture_default_str();
  c_pr->add_option("--stepsize", pr.stepsize)->capture_default_str();
  c_pr->add_option("--max-iter", pr.max_iter)->capture_default_str();

  ServeArgs sv;
  auto* c_sv = app.add_subcommand("serve", "Run the study HTTP service");
  c_sv->add_option("--config", sv.config)->required();
  c_sv->add_option("--responses", sv.responses, "Append-only JSONL log")->required();
  c_sv->add_option("--host", sv.host)->capture_default_str();
  c_sv->add_option("--port", sv.port)->capture_default_str();
  c_sv->add_option("--static", sv.static_dir, "Directory served at /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*c_ds) cmd_make_dataset(ds);
    if (*c_tr) cmd_train(tr);
    if (*c_at) cmd_attack(at);
    if (*c_en) cmd_entropy_map(en);
    if (*c_pe) cmd_perlin(pe);
    if (*c_cm) cmd_compare(cm);
    if (*c_st) cmd_stats(st);
    if (*c_pr) cmd_study_prep(pr);
    if (*c_sv) cmd_serve(sv);
  } catch (const Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", errc_name(e.code()), e.what());
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
