// Command-line front end: train / verify / bench / synth.
//
// Exit codes: 0 success, 1 a verification or threshold check failed,
// 2 usage, configuration, or data errors.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "muchgcn/graphio.hpp"
#include "muchgcn/model.hpp"
#include "muchgcn/runconfig.hpp"
#include "muchgcn/train.hpp"
#include "muchgcn/verify.hpp"

namespace {

using namespace muchgcn;

std::vector<Variant> parse_variants(const std::string& name) {
  if (name == "all")
    return {Variant::kMuchGcnMH, Variant::kMuchGcnM, Variant::kMuchGcnH, Variant::kFlatGcn,
            Variant::kDiffPoolGcn};
  return {variant_from_string(name)};
}

void write_text(const std::string& path, const std::string& text) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

// --- train -----------------------------------------------------------------

int cmd_train(const std::string& config_path, const std::vector<std::string>& sets) {
  RunConfig rc = load_run_config(config_path, sets);
  Dataset ds = load_dataset(rc.dataset);

  ModelConfig cfg = rc.model;
  if (cfg.max_nodes == 0) cfg.max_nodes = ds.max_nodes;
  if (cfg.input_dim == 0) cfg.input_dim = ds.input_dim;
  if (cfg.num_classes == 0) cfg.num_classes = ds.num_classes;
  cfg.validate();

  std::printf("dataset %s: %zu graphs, %d classes, input dim %d, max nodes %d\n",
              ds.name.c_str(), ds.graphs.size(), ds.num_classes, ds.input_dim, ds.max_nodes);
  std::printf("model %s: layers=%d steps=%d hidden=%d\n", to_string(cfg.variant).c_str(),
              cfg.layers, cfg.steps, cfg.hidden);

  std::optional<Model> fold0;
  if (!rc.output.checkpoint.empty()) fold0.emplace(cfg, 0);
  CvResult cv = run_cv(ds, cfg, rc.train, fold0 ? &*fold0 : nullptr);

  for (const FoldResult& f : cv.folds)
    std::printf("fold %d: final %.3f  best %.3f  (%.1fs)\n", f.fold, f.final_test_acc,
                f.best_test_acc, f.seconds);
  std::printf("mean final accuracy %.3f  std %.3f  mean best %.3f  (%.1fs total)\n", cv.mean_acc,
              cv.std_acc, cv.mean_best_acc, cv.total_seconds);

  if (fold0) {
    save_checkpoint(fold0->params(), rc.output.checkpoint);
    std::printf("checkpoint written to %s\n", rc.output.checkpoint.c_str());
  }
  if (!rc.output.metrics.empty())
    std::printf("per-epoch metrics written to %s\n", rc.output.metrics.c_str());

  if (!rc.output.summary.empty()) {
    nlohmann::json folds = nlohmann::json::array();
    nlohmann::json fold_seconds = nlohmann::json::array();
    for (const FoldResult& f : cv.folds) {
      folds.push_back({{"fold", f.fold},
                       {"final_train_loss", f.final_train_loss},
                       {"final_test_acc", f.final_test_acc},
                       {"best_test_acc", f.best_test_acc}});
      fold_seconds.push_back(f.seconds);
    }
    nlohmann::json summary{
        {"config", rc.effective},
        {"dataset",
         {{"name", ds.name},
          {"graphs", ds.graphs.size()},
          {"classes", ds.num_classes},
          {"input_dim", ds.input_dim},
          {"max_nodes", ds.max_nodes}}},
        {"results",
         {{"folds", folds},
          {"mean_accuracy", cv.mean_acc},
          {"std_accuracy", cv.std_acc},
          {"mean_best_accuracy", cv.mean_best_acc}}},
        {"timing", {{"total_seconds", cv.total_seconds}, {"fold_seconds", fold_seconds}}}};
    write_text(rc.output.summary, summary.dump(2) + "\n");
    std::printf("summary written to %s\n", rc.output.summary.c_str());
  }
  return 0;
}

// --- verify ----------------------------------------------------------------

int cmd_gradcheck(const std::string& variant, uint64_t seed, int coords, double h, double tol) {
  bool ok = true;
  for (Variant v : parse_variants(variant)) {
    GradCheckResult r = gradcheck_model(gradcheck_config(v), seed, coords, h);
    bool pass = r.max_err <= tol;
    ok = ok && pass;
    std::printf("gradcheck %-12s max err %.3e over %d coords (worst %s)  [%s]\n",
                to_string(v).c_str(), r.max_err, r.coords,
                r.coords ? r.labels[r.worst].c_str() : "-", pass ? "pass" : "FAIL");
  }
  return ok ? 0 : 1;
}

int cmd_oracle(const std::string& variant, uint64_t seed, double tol) {
  bool ok = true;
  for (Variant v : parse_variants(variant)) {
    double gap = oracle_gap(oracle_config(v), seed);
    bool pass = gap <= tol;
    ok = ok && pass;
    std::printf("oracle %-12s max |engine - reference| %.3e  [%s]\n", to_string(v).c_str(), gap,
                pass ? "pass" : "FAIL");
  }
  return ok ? 0 : 1;
}

int cmd_prop1(int trials, uint64_t seed) {
  Prop1Result r = proposition1_check(trials, seed);
  std::printf(
      "multiset separation: %d trials, %d first-draw collisions, %d after retry, "
      "degenerate filter collides: %s  [%s]\n",
      r.trials, r.collisions, r.retry_failures, r.degenerate_collides ? "yes" : "NO",
      r.pass ? "pass" : "FAIL");
  return r.pass ? 0 : 1;
}

// --- bench -------------------------------------------------------------------

int cmd_bench(const std::string& axis, int nodes, int batch, int reps, uint64_t seed,
              const std::string& out_path) {
  BenchPlan plan = bench_plan(axis);
  BenchAxis r = bench_pair(plan.base, plan.scaled, nodes, batch, reps, seed);
  std::printf("bench %s: base %.3fs  scaled %.3fs  ratio %.2f\n", axis.c_str(), r.base_seconds,
              r.scaled_seconds, r.ratio);
  if (!out_path.empty()) {
    nlohmann::json j{{"axis", axis},
                     {"nodes", nodes},
                     {"batch", batch},
                     {"reps", reps},
                     {"base_seconds", r.base_seconds},
                     {"scaled_seconds", r.scaled_seconds},
                     {"ratio", r.ratio}};
    write_text(out_path, j.dump(2) + "\n");
  }
  return 0;
}

// --- synth -------------------------------------------------------------------

int cmd_synth(const std::string& family, int count, uint64_t seed, const std::string& dir,
              const std::string& name) {
  Dataset ds = generate_synthetic(synthetic_family_from_string(family), count, seed);
  if (!name.empty()) ds.name = name;
  std::filesystem::create_directories(dir);
  write_tu_dataset(dir, ds.name, ds);
  std::printf("wrote %zu graphs (%d classes, max %d nodes) to %s/%s_*.txt\n", ds.graphs.size(),
              ds.num_classes, ds.max_nodes, dir.c_str(), ds.name.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-channel graph classification engine"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  auto* train = app.add_subcommand("train", "k-fold cross-validation training");
  train->add_option("--config", config_path, "JSON configuration file");
  train->add_option("--set", sets, "override a configuration entry (key.path=value)");

  auto* verify = app.add_subcommand("verify", "internal consistency checks");
  verify->require_subcommand(1);
  std::string gc_variant = "all";
  uint64_t gc_seed = 7;
  int gc_coords = 200;
  double gc_h = 1e-6, gc_tol = 1e-5;
  auto* gradcheck = verify->add_subcommand(
      "gradcheck", "compare reverse-mode gradients against finite differences");
  gradcheck->add_option("--variant", gc_variant, "model variant or 'all'");
  gradcheck->add_option("--seed", gc_seed, "random seed");
  gradcheck->add_option("--coords", gc_coords, "sampled parameter coordinates");
  gradcheck->add_option("--step", gc_h, "finite-difference step");
  gradcheck->add_option("--tol", gc_tol, "maximum allowed error");

  std::string or_variant = "all";
  uint64_t or_seed = 31337;
  double or_tol = 1e-10;
  auto* oracle =
      verify->add_subcommand("oracle", "compare the engine against a straight-line reference");
  oracle->add_option("--variant", or_variant, "model variant or 'all'");
  oracle->add_option("--seed", or_seed, "random seed");
  oracle->add_option("--tol", or_tol, "maximum allowed logit gap");

  int p1_trials = 1000;
  uint64_t p1_seed = 2026;
  auto* prop1 =
      verify->add_subcommand("prop1", "random filters separate distinct multisets");
  prop1->add_option("--trials", p1_trials, "number of random pairs");
  prop1->add_option("--seed", p1_seed, "random seed");

  std::string bench_axis = "steps", bench_out;
  int bench_nodes = 150, bench_batch = 8, bench_reps = 7;
  uint64_t bench_seed = 11;
  auto* bench = app.add_subcommand("bench", "runtime scaling of one training step");
  bench->add_option("--axis", bench_axis, "'steps' (K doubled) or 'channels' (T doubled)");
  bench->add_option("--nodes", bench_nodes, "nodes per graph");
  bench->add_option("--batch", bench_batch, "graphs per batch");
  bench->add_option("--reps", bench_reps, "timed repetitions (fastest reported)");
  bench->add_option("--seed", bench_seed, "random seed");
  bench->add_option("--out", bench_out, "write results as JSON here");

  std::string sy_family = "cycles_vs_chords", sy_dir = ".", sy_name;
  int sy_count = 200;
  uint64_t sy_seed = 1;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset in TU format");
  synth->add_option("--family", sy_family, "'cycles_vs_chords' or 'k_communities'");
  synth->add_option("--count", sy_count, "number of graphs");
  synth->add_option("--seed", sy_seed, "random seed");
  synth->add_option("--dir", sy_dir, "output directory");
  synth->add_option("--name", sy_name, "dataset name (defaults to the family)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) return cmd_train(config_path, sets);
    if (*gradcheck) return cmd_gradcheck(gc_variant, gc_seed, gc_coords, gc_h, gc_tol);
    if (*oracle) return cmd_oracle(or_variant, or_seed, or_tol);
    if (*prop1) return cmd_prop1(p1_trials, p1_seed);
    if (*bench) return cmd_bench(bench_axis, bench_nodes, bench_batch, bench_reps, bench_seed,
                                 bench_out);
    if (*synth) return cmd_synth(sy_family, sy_count, sy_seed, sy_dir, sy_name);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
