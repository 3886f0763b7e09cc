// Python bindings for the graph classification engine. The surface mirrors
// the CLI: datasets in, models and cross-validated results out, plus the
// verification entry points (gradient check, reference comparison, filter
// separation, scaling benchmark).

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "muchgcn/graphio.hpp"
#include "muchgcn/model.hpp"
#include "muchgcn/tensor.hpp"
#include "muchgcn/train.hpp"
#include "muchgcn/verify.hpp"

namespace py = pybind11;
using namespace muchgcn;

namespace {

using Matrix = std::vector<std::vector<double>>;

Array to_array(const Matrix& rows, const std::string& what) {
  if (rows.empty()) throw std::invalid_argument(what + " must not be empty");
  const int r = static_cast<int>(rows.size());
  const int c = static_cast<int>(rows[0].size());
  if (c == 0) throw std::invalid_argument(what + " rows must not be empty");
  Array out({r, c});
  for (int i = 0; i < r; ++i) {
    if (static_cast<int>(rows[i].size()) != c)
      throw std::invalid_argument(what + " rows must all have the same length");
    for (int j = 0; j < c; ++j) out.data[static_cast<size_t>(i) * c + j] = rows[i][j];
  }
  return out;
}

Matrix to_matrix(const Array& a) {
  if (a.shape.size() != 2) throw std::logic_error("to_matrix: expected a rank-2 array");
  Matrix out(a.shape[0], std::vector<double>(a.shape[1]));
  for (int i = 0; i < a.shape[0]; ++i)
    for (int j = 0; j < a.shape[1]; ++j)
      out[i][j] = a.data[static_cast<size_t>(i) * a.shape[1] + j];
  return out;
}

FeatureMode feature_mode(const std::string& s) {
  if (s == "bio") return FeatureMode::kBio;
  if (s == "social") return FeatureMode::kSocial;
  throw std::invalid_argument("features must be 'bio' or 'social', got '" + s + "'");
}

ModelConfig make_config(const std::string& variant, int layers, int steps, int hidden,
                        std::vector<double> assign_ratio, std::vector<int> channel_expansion,
                        int max_nodes, int input_dim, int num_classes) {
  ModelConfig cfg;
  cfg.variant = variant_from_string(variant);
  cfg.layers = layers;
  cfg.steps = steps;
  cfg.hidden = hidden;
  cfg.assign_ratio = std::move(assign_ratio);
  cfg.channel_expansion = std::move(channel_expansion);
  cfg.max_nodes = max_nodes;
  cfg.input_dim = input_dim;
  cfg.num_classes = num_classes;
  return cfg;
}

py::dict config_dict(const ModelConfig& cfg) {
  py::dict d;
  d["variant"] = to_string(cfg.variant);
  d["layers"] = cfg.layers;
  d["steps"] = cfg.steps;
  d["hidden"] = cfg.hidden;
  d["assign_ratio"] = cfg.assign_ratio;
  d["channel_expansion"] = cfg.channel_expansion;
  d["max_nodes"] = cfg.max_nodes;
  d["input_dim"] = cfg.input_dim;
  d["num_classes"] = cfg.num_classes;
  return d;
}

const Graph& graph_at(const Dataset& ds, int i) {
  if (i < 0 || i >= static_cast<int>(ds.graphs.size()))
    throw std::out_of_range("graph index " + std::to_string(i) + " out of range for " +
                            std::to_string(ds.graphs.size()) + " graphs");
  return ds.graphs[static_cast<size_t>(i)];
}

/// Single-graph eval-mode forward; returns the logits row.
std::vector<double> model_logits(Model& model, const Matrix& features, const Matrix& adjacency) {
  Array f = to_array(features, "features");
  Array a = to_array(adjacency, "adjacency");
  const int n = f.shape[0];
  if (a.shape[0] != n || a.shape[1] != n)
    throw std::invalid_argument("adjacency must be n x n for n feature rows");
  if (f.shape[1] != model.config().input_dim)
    throw std::invalid_argument("features have width " + std::to_string(f.shape[1]) +
                                ", model expects " + std::to_string(model.config().input_dim));
  if (n > model.config().max_nodes)
    throw std::invalid_argument("graph has " + std::to_string(n) + " nodes, model caps at " +
                                std::to_string(model.config().max_nodes));
  Array feat({1, n, f.shape[1]}), adjm({1, n, n});
  feat.data = f.data;
  adjm.data = a.data;
  Batch batch{std::move(feat), std::move(adjm), full({1, n}, 1.0), {0}};
  Tape t;
  const Array& logits = t.value(model.forward(t, batch, Mode::kEval).logits);
  return logits.data;
}

py::dict cv_dict(const CvResult& cv) {
  py::list folds;
  for (const FoldResult& f : cv.folds) {
    py::dict r;
    r["fold"] = f.fold;
    r["final_train_loss"] = f.final_train_loss;
    r["final_test_acc"] = f.final_test_acc;
    r["best_test_acc"] = f.best_test_acc;
    r["seconds"] = f.seconds;
    folds.append(r);
  }
  py::dict d;
  d["folds"] = folds;
  d["mean_accuracy"] = cv.mean_acc;
  d["std_accuracy"] = cv.std_acc;
  d["mean_best_accuracy"] = cv.mean_best_acc;
  d["total_seconds"] = cv.total_seconds;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-channel hierarchical graph classification engine";

  py::class_<Dataset>(m, "Dataset", "A named collection of labeled graphs.")
      .def_readonly("name", &Dataset::name)
      .def_readonly("num_classes", &Dataset::num_classes)
      .def_readonly("input_dim", &Dataset::input_dim)
      .def_readonly("max_nodes", &Dataset::max_nodes)
      .def("__len__", [](const Dataset& ds) { return ds.graphs.size(); })
      .def(
          "label", [](const Dataset& ds, int i) { return graph_at(ds, i).label; }, py::arg("i"),
          "Class label of graph i.")
      .def(
          "graph",
          [](const Dataset& ds, int i) {
            const Graph& g = graph_at(ds, i);
            py::dict d;
            d["features"] = to_matrix(g.features);
            d["adjacency"] = to_matrix(g.adjacency);
            d["label"] = g.label;
            return d;
          },
          py::arg("i"), "Graph i as {'features', 'adjacency', 'label'} with nested lists.")
      .def("__repr__", [](const Dataset& ds) {
        return "<Dataset '" + ds.name + "': " + std::to_string(ds.graphs.size()) + " graphs, " +
               std::to_string(ds.num_classes) + " classes, input_dim " +
               std::to_string(ds.input_dim) + ", max_nodes " + std::to_string(ds.max_nodes) + ">";
      });

  m.def(
      "synthetic_dataset",
      [](const std::string& family, int count, uint64_t seed) {
        return generate_synthetic(synthetic_family_from_string(family), count, seed);
      },
      py::arg("family") = "cycles_vs_chords", py::arg("count") = 200, py::arg("seed") = 1,
      "Generate a labeled synthetic dataset ('cycles_vs_chords' or 'k_communities').");

  m.def(
      "load_tu_dataset",
      [](const std::string& directory, const std::string& name, const std::string& features) {
        return parse_tu_dataset(directory, name, feature_mode(features));
      },
      py::arg("directory"), py::arg("name"), py::arg("features") = "bio",
      "Parse a TU-format dataset from <directory>/<name>/<name>_*.txt.");

  py::class_<Model>(m, "Model",
                    "A parameterized graph classifier. Equal (config, seed) pairs construct "
                    "identical models.")
      .def(py::init([](const std::string& variant, int layers, int steps, int hidden,
                       std::vector<double> assign_ratio, std::vector<int> channel_expansion,
                       int max_nodes, int input_dim, int num_classes, uint64_t seed) {
             ModelConfig cfg =
                 make_config(variant, layers, steps, hidden, std::move(assign_ratio),
                             std::move(channel_expansion), max_nodes, input_dim, num_classes);
             cfg.validate();
             return std::make_unique<Model>(cfg, seed);
           }),
           py::arg("variant") = "muchgcn_mh", py::arg("layers") = 2, py::arg("steps") = 3,
           py::arg("hidden") = 64, py::arg("assign_ratio") = std::vector<double>{0.25},
           py::arg("channel_expansion") = std::vector<int>{4}, py::arg("max_nodes"),
           py::arg("input_dim"), py::arg("num_classes"), py::arg("seed") = 0)
      .def_property_readonly("config", [](const Model& mo) { return config_dict(mo.config()); })
      .def_property_readonly("parameter_count",
                             [](const Model& mo) { return plan_shapes(mo.config()).param_count; })
      .def("logits", &model_logits, py::arg("features"), py::arg("adjacency"),
           "Eval-mode class scores for one graph (features n x input_dim, adjacency n x n).")
      .def(
          "save", [](const Model& mo, const std::string& path) { mo.save(path); },
          py::arg("path"), "Write every parameter (weights and running stats) to a checkpoint.")
      .def(
          "load", [](Model& mo, const std::string& path) { mo.load(path); }, py::arg("path"),
          "Restore a checkpoint written by a model of the same configuration.");

  m.def(
      "plan",
      [](const std::string& variant, int layers, int steps, int hidden,
         std::vector<double> assign_ratio, std::vector<int> channel_expansion, int max_nodes,
         int input_dim, int num_classes) {
        ModelConfig cfg = make_config(variant, layers, steps, hidden, std::move(assign_ratio),
                                      std::move(channel_expansion), max_nodes, input_dim,
                                      num_classes);
        cfg.validate();
        ShapePlan plan = plan_shapes(cfg);
        py::list levels;
        for (const LayerPlan& lp : plan.layers) {
          py::dict d;
          d["nodes"] = lp.nodes;
          d["channels"] = lp.channels;
          d["generated_graphs"] = lp.generated;
          d["multiset_len"] = lp.multiset_len;
          d["next_nodes"] = lp.next_nodes;
          levels.append(d);
        }
        py::dict out;
        out["levels"] = levels;
        out["conv_matmuls"] = plan.conv_matmuls;
        out["other_matmuls"] = plan.other_matmuls;
        out["param_count"] = plan.param_count;
        return out;
      },
      py::arg("variant") = "muchgcn_mh", py::arg("layers") = 2, py::arg("steps") = 3,
      py::arg("hidden") = 64, py::arg("assign_ratio") = std::vector<double>{0.25},
      py::arg("channel_expansion") = std::vector<int>{4}, py::arg("max_nodes"),
      py::arg("input_dim"), py::arg("num_classes") = 2,
      "Static per-level shape and cost plan for a configuration (no weights allocated).");

  m.def(
      "cross_validate",
      [](const Dataset& ds, const std::string& variant, int layers, int steps, int hidden,
         std::vector<double> assign_ratio, std::vector<int> channel_expansion, double lr,
         int epochs, int batch_size, double entropy_weight, int folds, uint64_t seed,
         double clip_norm, int parallel_folds, const std::string& metrics_path) {
        ModelConfig cfg = make_config(variant, layers, steps, hidden, std::move(assign_ratio),
                                      std::move(channel_expansion), 0, 0, 0);
        TrainOptions opt;
        opt.lr = lr;
        opt.epochs = epochs;
        opt.batch_size = batch_size;
        opt.entropy_weight = entropy_weight;
        opt.folds = folds;
        opt.seed = seed;
        opt.clip_norm = clip_norm;
        opt.parallel_folds = parallel_folds;
        opt.metrics_path = metrics_path;
        CvResult cv;
        {
          py::gil_scoped_release release;
          cv = run_cv(ds, cfg, opt);
        }
        return cv_dict(cv);
      },
      py::arg("dataset"), py::arg("variant") = "muchgcn_mh", py::arg("layers") = 2,
      py::arg("steps") = 3, py::arg("hidden") = 64,
      py::arg("assign_ratio") = std::vector<double>{0.25},
      py::arg("channel_expansion") = std::vector<int>{4}, py::arg("lr") = 1e-3,
      py::arg("epochs") = 30, py::arg("batch_size") = 20, py::arg("entropy_weight") = 0.1,
      py::arg("folds") = 10, py::arg("seed") = 0, py::arg("clip_norm") = 2.0,
      py::arg("parallel_folds") = 1, py::arg("metrics_path") = "",
      "Stratified k-fold cross-validation; returns per-fold results and accuracy summary. "
      "Results are bit-identical for equal inputs regardless of parallel_folds.");

  m.def(
      "gradient_check",
      [](const std::string& variant, uint64_t seed, int coords, double step) {
        GradCheckResult r =
            gradcheck_model(gradcheck_config(variant_from_string(variant)), seed, coords, step);
        py::dict d;
        d["max_rel_err"] = r.max_err;
        d["coords"] = r.coords;
        d["worst"] = r.labels.empty() ? std::string() : r.labels[r.worst];
        return d;
      },
      py::arg("variant"), py::arg("seed") = 7, py::arg("coords") = 200, py::arg("step") = 1e-6,
      "Compare reverse-mode gradients against central finite differences on a pinned tiny "
      "configuration of the given variant.");

  m.def(
      "reference_gap",
      [](const std::string& variant, uint64_t seed) {
        return oracle_gap(oracle_config(variant_from_string(variant)), seed);
      },
      py::arg("variant"), py::arg("seed") = 31337,
      "Largest |engine - independent reference| logit gap across eval/train/eval phases.");

  m.def(
      "filter_separation",
      [](int trials, uint64_t seed) {
        Prop1Result r = proposition1_check(trials, seed);
        py::dict d;
        d["trials"] = r.trials;
        d["collisions"] = r.collisions;
        d["retry_failures"] = r.retry_failures;
        d["degenerate_collides"] = r.degenerate_collides;
        d["pass"] = r.pass;
        return d;
      },
      py::arg("trials") = 1000, py::arg("seed") = 2026,
      "Empirical check that random channel filters separate multisets that differ in one entry.");

  m.def(
      "scaling_benchmark",
      [](const std::string& axis, int nodes, int batch, int reps, uint64_t seed) {
        BenchPlan plan = bench_plan(axis);
        BenchAxis r;
        {
          py::gil_scoped_release release;
          r = bench_pair(plan.base, plan.scaled, nodes, batch, reps, seed);
        }
        py::dict d;
        d["axis"] = axis;
        d["base_seconds"] = r.base_seconds;
        d["scaled_seconds"] = r.scaled_seconds;
        d["ratio"] = r.ratio;
        return d;
      },
      py::arg("axis"), py::arg("nodes") = 150, py::arg("batch") = 8, py::arg("reps") = 7,
      py::arg("seed") = 11,
      "Training-step wall time before/after doubling one axis ('steps' or 'channels').");
}
