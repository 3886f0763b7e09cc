#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "muchgcn/graphio.hpp"
#include "muchgcn/model.hpp"
#include "muchgcn/rng.hpp"
#include "testutil.hpp"

using namespace muchgcn;
using namespace muchgcn::testutil;
namespace fs = std::filesystem;

namespace {

ModelConfig base_config(Variant v, const Dataset& ds) {
  ModelConfig cfg;
  cfg.variant = v;
  cfg.layers = (v == Variant::kMuchGcnM || v == Variant::kFlatGcn) ? 1 : 2;
  cfg.steps = 2;
  cfg.hidden = 5;
  cfg.assign_ratio = {0.5};
  cfg.channel_expansion = {(v == Variant::kMuchGcnMH || v == Variant::kMuchGcnM) ? 2 : 1};
  cfg.max_nodes = ds.max_nodes;
  cfg.input_dim = ds.input_dim;
  cfg.num_classes = ds.num_classes;
  return cfg;
}

Batch small_batch(const Dataset& ds, int count) {
  std::vector<int> idx(count);
  for (int i = 0; i < count; ++i) idx[i] = i;
  return batchify(ds, idx, count, ds.max_nodes).at(0);
}

void set_param(Model& m, const std::string& name, const Array& value) {
  Parameter* p = m.params().find(name);
  REQUIRE_MESSAGE(p != nullptr, "missing parameter ", name);
  REQUIRE(p->value.shape == value.shape);
  p->value = value;
}

void copy_param(Model& dst, const std::string& dst_name, Model& src,
                const std::string& src_name) {
  Parameter* p = src.params().find(src_name);
  REQUIRE_MESSAGE(p != nullptr, "missing parameter ", src_name);
  set_param(dst, dst_name, p->value);
}

Array onehot(int len, int idx) {
  Array a({len});
  a.data[idx] = 1.0;
  return a;
}

double max_abs_diff(const Array& a, const Array& b) {
  REQUIRE(a.shape == b.shape);
  double m = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

long store_numel(const ParamStore& ps) {
  long n = 0;
  for (const Parameter& p : ps) n += p.value.numel();
  return n;
}

/// Rewrites a single-level model so its embedding filter passes the last conv
/// step through unchanged: theta one-hot on H_K and phi computing the identity
/// via relu(x + 1000) - 1000 (exact for |x| << 1000 up to float rounding).
void make_filter_identity(Model& m, const std::string& prefix, int multiset_len, int d) {
  set_param(m, prefix + "_theta", onehot(multiset_len, multiset_len - 1));
  set_param(m, prefix + "_bias", Array({1}));
  set_param(m, prefix + "_phi/w0", identity(d));
  set_param(m, prefix + "_phi/b0", full({d}, 1000.0));
  set_param(m, prefix + "_phi/w1", identity(d));
  set_param(m, prefix + "_phi/b1", full({d}, -1000.0));
}

}  // namespace

TEST_CASE("config validation broadcasts and rejects") {
  ModelConfig cfg;
  cfg.layers = 3;
  cfg.steps = 2;
  cfg.hidden = 4;
  cfg.assign_ratio = {0.5};
  cfg.channel_expansion = {2};
  cfg.max_nodes = 10;
  cfg.input_dim = 3;
  cfg.num_classes = 2;
  cfg.validate();
  CHECK(cfg.assign_ratio == std::vector<double>{0.5, 0.5});
  CHECK(cfg.channel_expansion == std::vector<int>{2, 2, 2});

  auto expect_reject = [&](auto&& tweak) {
    ModelConfig bad = cfg;
    tweak(bad);
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  };
  expect_reject([](ModelConfig& c) { c.layers = 0; });
  expect_reject([](ModelConfig& c) { c.steps = 0; });
  expect_reject([](ModelConfig& c) { c.num_classes = 1; });
  expect_reject([](ModelConfig& c) { c.assign_ratio = {0.5, 1.5}; });
  expect_reject([](ModelConfig& c) { c.assign_ratio = {0.5, 0.5, 0.5}; });
  expect_reject([](ModelConfig& c) { c.channel_expansion = {2, 2}; });
  expect_reject([](ModelConfig& c) { c.channel_expansion = {0}; });
  expect_reject([](ModelConfig& c) { c.variant = Variant::kMuchGcnM; });  // layers != 1
  expect_reject([](ModelConfig& c) { c.variant = Variant::kMuchGcnH; });  // expansion != 1
  expect_reject([](ModelConfig& c) { c.variant = Variant::kDiffPoolGcn; });
  expect_reject([](ModelConfig& c) {
    c.variant = Variant::kFlatGcn;
    c.channel_expansion = {1};
  });  // layers != 1

  CHECK(variant_from_string("muchgcn_mh") == Variant::kMuchGcnMH);
  CHECK(to_string(Variant::kDiffPoolGcn) == "diffpool_gcn");
  CHECK_THROWS_AS(variant_from_string("gcn"), std::invalid_argument);
}

TEST_CASE("plan_shapes hand counts for the full variant") {
  ModelConfig cfg;
  cfg.variant = Variant::kMuchGcnMH;
  cfg.layers = 2;
  cfg.steps = 3;
  cfg.hidden = 4;
  cfg.assign_ratio = {0.5};
  cfg.channel_expansion = {2};
  cfg.max_nodes = 10;
  cfg.input_dim = 4;  // matches hidden: no entry projection
  cfg.num_classes = 2;

  ShapePlan plan = plan_shapes(cfg);
  REQUIRE(plan.layers.size() == 2);
  CHECK(plan.layers[0].nodes == 10);
  CHECK(plan.layers[0].channels == 1);
  CHECK(plan.layers[0].generated == 2);
  CHECK(plan.layers[0].multiset_len == 4);
  CHECK(plan.layers[0].next_nodes == 5);
  CHECK(plan.layers[1].nodes == 5);
  CHECK(plan.layers[1].channels == 2);
  CHECK(plan.layers[1].generated == 4);
  CHECK(plan.layers[1].multiset_len == 7);
  CHECK(plan.layers[1].next_nodes == 0);

  // Message passing: 2K matmuls per (channel, source) pair, C_l^2 pairs.
  CHECK(plan.conv_matmuls == 2 * 3 * 1 + 2 * 3 * 4);
  // Level 0: two embed MLPs (4) + two pool MLPs (4) + two coarsenings (2) +
  // 2*gen^2 pair adjacencies (8); level 1: four embed MLPs (8); classifier 2.
  CHECK(plan.other_matmuls == 18 + 8 + 2);

  ModelConfig proj = cfg;
  proj.input_dim = 3;  // width change adds the level-0 entry projection
  CHECK(plan_shapes(proj).other_matmuls == plan.other_matmuls + 1);

  SUBCASE("doubling K doubles message-passing work only") {
    ModelConfig twice = cfg;
    twice.steps = 6;
    ShapePlan p2 = plan_shapes(twice);
    CHECK(p2.conv_matmuls == 2 * plan.conv_matmuls);
    CHECK(p2.other_matmuls == plan.other_matmuls);
  }
}

TEST_CASE("plan param_count matches the allocated store for every variant") {
  Dataset ds = generate_synthetic(SyntheticFamily::kCyclesVsChords, 6, 3);
  for (Variant v : {Variant::kMuchGcnMH, Variant::kMuchGcnM, Variant::kMuchGcnH,
                    Variant::kFlatGcn, Variant::kDiffPoolGcn}) {
    CAPTURE(to_string(v));
    ModelConfig cfg = base_config(v, ds);
    Model model(cfg, 17);
    CHECK(store_numel(model.params()) == plan_shapes(cfg).param_count);
  }
}

TEST_CASE("parameter names follow the pinned scheme") {
  Dataset ds = generate_synthetic(SyntheticFamily::kCyclesVsChords, 4, 3);
  Model mh(base_config(Variant::kMuchGcnMH, ds), 5);
  for (const char* name :
       {"layer0/convW1", "layer0/convW2", "layer0/bn1/gamma", "layer0/bn2/running_var",
        "layer0/graph0/embed_theta", "layer0/graph1/pool_phi/w1", "layer1/graph3/embed_phi/b1",
        "classifier/w0", "classifier/b1"})
    CHECK_MESSAGE(mh.params().find(name) != nullptr, name);
  CHECK(mh.params().find("layer1/graph0/pool_theta") == nullptr);  // last level has no pooling

  Model flat(base_config(Variant::kFlatGcn, ds), 5);
  for (const char* name : {"conv/W1", "bn2/beta", "classifier/w1"})
    CHECK_MESSAGE(flat.params().find(name) != nullptr, name);

  Model dp(base_config(Variant::kDiffPoolGcn, ds), 5);
  for (const char* name : {"layer0/embed/convW1", "layer0/pool/bn2/gamma", "layer0/pool_head/w",
                           "layer1/embed/convW2"})
    CHECK_MESSAGE(dp.params().find(name) != nullptr, name);
  CHECK(dp.params().find("layer1/pool_head/w") == nullptr);
}

TEST_CASE("construction is seed-deterministic") {
  Dataset ds = generate_synthetic(SyntheticFamily::kCyclesVsChords, 6, 3);
  ModelConfig cfg = base_config(Variant::kMuchGcnMH, ds);
  Model a(cfg, 42), b(cfg, 42), c(cfg, 43);

  bool identical = true, differs = false;
  auto ia = a.params().begin(), ib = b.params().begin(), ic = c.params().begin();
  for (; ia != a.params().end(); ++ia, ++ib, ++ic) {
    identical = identical && ia->name == ib->name && ia->value.data == ib->value.data;
    differs = differs || ia->value.data != ic->value.data;
  }
  CHECK(identical);
  CHECK(differs);

  Batch batch = small_batch(ds, 4);
  Tape ta, tb;
  Array la = ta.value(a.forward(ta, batch, Mode::kEval).logits);
  Array lb = tb.value(b.forward(tb, batch, Mode::kEval).logits);
  CHECK(la.data == lb.data);
}

TEST_CASE("forward handles every variant and reports assignments per pooling level") {
  Dataset ds = generate_synthetic(SyntheticFamily::kCyclesVsChords, 6, 3);
  Batch batch = small_batch(ds, 3);
  for (Variant v : {Variant::kMuchGcnMH, Variant::kMuchGcnM, Variant::kMuchGcnH,
                    Variant::kFlatGcn, Variant::kDiffPoolGcn}) {
    CAPTURE(to_string(v));
    ModelConfig cfg = base_config(v, ds);
    Model model(cfg, 9);
    Tape t;
    ForwardResult fr = model.forward(t, batch, Mode::kTrain);
    const Array& logits = t.value(fr.logits);
    CHECK(logits.shape == std::vector<int>{3, ds.num_classes});

    ShapePlan plan = plan_shapes(cfg);
    size_t pooling_levels =
        (v == Variant::kFlatGcn || v == Variant::kMuchGcnM) ? 0 : cfg.layers - 1;
    REQUIRE(fr.assignments.size() == pooling_levels);
    for (size_t l = 0; l < fr.assignments.size(); ++l) {
      size_t expect_graphs =
          v == Variant::kDiffPoolGcn ? 1 : static_cast<size_t>(plan.layers[l].generated);
      REQUIRE(fr.assignments[l].size() == expect_graphs);
      for (const auto& per_graph : fr.assignments[l]) {
        REQUIRE(per_graph.size() == 3);
        for (const Tensor& s : per_graph) {
          const Array& sv = t.value(s);
          CHECK(sv.cols() == plan.layers[l].next_nodes);
          for (int r = 0; r < sv.rows(); ++r) {
            double sum = 0.0;
            for (int c = 0; c < sv.cols(); ++c) sum += sv.at(r, c);
            CHECK(std::abs(sum - 1.0) <= 1e-12);
          }
        }
      }
    }

    Tensor loss = t.mean_softmax_cross_entropy(fr.logits, batch.labels);
    t.backward(loss);
    double gnorm = 0.0;
    for (const Parameter& p : model.params())
      for (double g : p.grad.data) gnorm += g * g;
    CHECK(gnorm > 0.0);
  }
}

TEST_CASE("padding rows are inert: interior holes match the compacted graph") {
  // A 3-node path placed at rows 0, 2, 4 of a 6-row padded batch.
  Array feat({1, 6, 2}), adjp({1, 6, 6}), mask({1, 6});
  auto fset = [&](int row, double u, double v) {
    feat.data[row * 2] = u;
    feat.data[row * 2 + 1] = v;
  };
  fset(0, 1.0, 0.5);
  fset(2, 2.0, -1.0);
  fset(4, 3.0, 0.25);
  auto eset = [&](int i, int j) { adjp.data[i * 6 + j] = adjp.data[j * 6 + i] = 1.0; };
  eset(0, 2);
  eset(2, 4);
  mask.data[0] = mask.data[2] = mask.data[4] = 1.0;
  Batch holey{feat, adjp, mask, {1}};

  Array cf({1, 3, 2}, {1.0, 0.5, 2.0, -1.0, 3.0, 0.25});
  Array ca({1, 3, 3}, {0, 1, 0, 1, 0, 1, 0, 1, 0});
  Batch compacted{cf, ca, full({1, 3}, 1.0), {1}};

  SUBCASE("compact_graph extracts live rows in order") {
    auto [x, a] = compact_graph(holey.graph_features(0), holey.graph_adjacency(0),
                                holey.graph_mask(0));
    CHECK(x.data == cf.data);
    CHECK(a.data == ca.data);
    Array dead({2});
    CHECK_THROWS_AS(compact_graph(Array({2, 2}), Array({2, 2}), dead), std::invalid_argument);
  }

  ModelConfig cfg;
  cfg.variant = Variant::kMuchGcnMH;
  cfg.layers = 2;
  cfg.steps = 2;
  cfg.hidden = 4;
  cfg.assign_ratio = {0.5};
  cfg.channel_expansion = {2};
  cfg.max_nodes = 6;
  cfg.input_dim = 2;
  cfg.num_classes = 2;
  Model model(cfg, 23);

  Tape t1, t2;
  Array l1 = t1.value(model.forward(t1, holey, Mode::kEval).logits);
  Array l2 = t2.value(model.forward(t2, compacted, Mode::kEval).logits);
  CHECK(l1.data == l2.data);  // identical ops on identical arrays: bitwise equal
}

TEST_CASE("logits are invariant to node relabeling") {
  Rng rng(99);
  const int n = 10, d_in = 3;
  Array adj = rand_adjacency(n, 0.4, rng);
  Array x = rand_array({n, d_in}, rng);

  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  rng.shuffle(perm);
  Array adj_p({n, n}), x_p({n, d_in});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) adj_p.at(perm[i], perm[j]) = adj.at(i, j);
    for (int c = 0; c < d_in; ++c) x_p.at(perm[i], c) = x.at(i, c);
  }

  // Both orderings share one batch so train-mode statistics pool over them.
  Array feat({2, n, d_in}), adjb({2, n, n});
  std::copy(x.data.begin(), x.data.end(), feat.data.begin());
  std::copy(x_p.data.begin(), x_p.data.end(), feat.data.begin() + n * d_in);
  std::copy(adj.data.begin(), adj.data.end(), adjb.data.begin());
  std::copy(adj_p.data.begin(), adj_p.data.end(), adjb.data.begin() + n * n);
  Batch batch{feat, adjb, full({2, n}, 1.0), {0, 1}};

  ModelConfig cfg;
  cfg.variant = Variant::kMuchGcnMH;
  cfg.layers = 2;
  cfg.steps = 2;
  cfg.hidden = 5;
  cfg.assign_ratio = {0.4};
  cfg.channel_expansion = {2};
  cfg.max_nodes = n;
  cfg.input_dim = d_in;
  cfg.num_classes = 2;
  Model model(cfg, 31);

  for (Mode mode : {Mode::kEval, Mode::kTrain}) {
    Tape t;
    const Array& logits = t.value(model.forward(t, batch, mode).logits);
    for (int c = 0; c < 2; ++c)
      CHECK(std::abs(logits.at(0, c) - logits.at(1, c)) <= 1e-9);
  }
}

TEST_CASE("flat_gcn equals the full variant collapsed to one level and channel") {
  Dataset ds = generate_synthetic(SyntheticFamily::kCyclesVsChords, 8, 13);
  Batch batch = small_batch(ds, 4);
  const int d = 6, k_steps = 3;

  ModelConfig fcfg;
  fcfg.variant = Variant::kFlatGcn;
  fcfg.layers = 1;
  fcfg.steps = k_steps;
  fcfg.hidden = d;
  fcfg.channel_expansion = {1};
  fcfg.max_nodes = ds.max_nodes;
  fcfg.input_dim = ds.input_dim;
  fcfg.num_classes = ds.num_classes;
  Model flat(fcfg, 71);

  ModelConfig mcfg = fcfg;
  mcfg.variant = Variant::kMuchGcnMH;
  Model mh(mcfg, 72);

  for (int k = 1; k <= k_steps; ++k) {
    std::string tag = std::to_string(k);
    copy_param(mh, "layer0/convW" + tag, flat, "conv/W" + tag);
    for (const char* part : {"gamma", "beta", "running_mean", "running_var"})
      copy_param(mh, "layer0/bn" + tag + "/" + part, flat, "bn" + tag + "/" + part);
  }
  make_filter_identity(mh, "layer0/graph0/embed", 1 + k_steps, d);
  for (const char* part : {"w0", "b0", "w1", "b1"})
    copy_param(mh, std::string("classifier/") + part, flat, std::string("classifier/") + part);

  for (Mode mode : {Mode::kEval, Mode::kTrain}) {
    Tape tf, tm;
    Array lf = tf.value(flat.forward(tf, batch, mode).logits);
    Array lm = tm.value(mh.forward(tm, batch, mode).logits);
    CHECK(max_abs_diff(lf, lm) <= 1e-9);
  }
}

TEST_CASE("diffpool_gcn equals the hierarchical variant with a linear pool filter") {
  Dataset ds = generate_synthetic(SyntheticFamily::kCyclesVsChords, 8, 29);
  Batch batch = small_batch(ds, 4);
  const int d = 5, k_steps = 2, levels = 2;

  ModelConfig dcfg;
  dcfg.variant = Variant::kDiffPoolGcn;
  dcfg.layers = levels;
  dcfg.steps = k_steps;
  dcfg.hidden = d;
  dcfg.assign_ratio = {0.5};
  dcfg.channel_expansion = {1};
  dcfg.max_nodes = ds.max_nodes;
  dcfg.input_dim = ds.input_dim;
  dcfg.num_classes = ds.num_classes;
  Model dp(dcfg, 81);

  // Tie the assignment trunk to the embedding trunk so one shared trunk can
  // reproduce both.
  for (int k = 1; k <= k_steps; ++k) {
    std::string tag = std::to_string(k);
    copy_param(dp, "layer0/pool/convW" + tag, dp, "layer0/embed/convW" + tag);
  }

  ModelConfig hcfg = dcfg;
  hcfg.variant = Variant::kMuchGcnH;
  Model h(hcfg, 82);

  for (int l = 0; l < levels; ++l) {
    std::string lp = "layer" + std::to_string(l);
    for (int k = 1; k <= k_steps; ++k) {
      std::string tag = std::to_string(k);
      copy_param(h, lp + "/convW" + tag, dp, lp + "/embed/convW" + tag);
      for (const char* part : {"gamma", "beta", "running_mean", "running_var"})
        copy_param(h, lp + "/bn" + tag + "/" + part, dp, lp + "/embed/bn" + tag + "/" + part);
    }
    make_filter_identity(h, lp + "/graph0/embed", 1 + k_steps, d);
  }

  // Pool filter phi: relu(x + 1000) = x + 1000, then (x + 1000) w - 1000
  // colsum(w) + b reproduces the linear head x w + b.
  const Array& pw = dp.params().find("layer0/pool_head/w")->value;
  const Array& pb = dp.params().find("layer0/pool_head/b")->value;
  int n1 = pw.cols();
  Array b1({n1});
  for (int c = 0; c < n1; ++c) {
    double colsum = 0.0;
    for (int r = 0; r < d; ++r) colsum += pw.at(r, c);
    b1.data[c] = pb.data[c] - 1000.0 * colsum;
  }
  set_param(h, "layer0/graph0/pool_theta", onehot(1 + k_steps, k_steps));
  set_param(h, "layer0/graph0/pool_bias", Array({1}));
  set_param(h, "layer0/graph0/pool_phi/w0", identity(d));
  set_param(h, "layer0/graph0/pool_phi/b0", full({d}, 1000.0));
  set_param(h, "layer0/graph0/pool_phi/w1", pw);
  set_param(h, "layer0/graph0/pool_phi/b1", b1);

  for (const char* part : {"w0", "b0", "w1", "b1"})
    copy_param(h, std::string("classifier/") + part, dp, std::string("classifier/") + part);

  for (Mode mode : {Mode::kEval, Mode::kTrain}) {
    Tape td, th;
    Array ld = td.value(dp.forward(td, batch, mode).logits);
    Array lh = th.value(h.forward(th, batch, mode).logits);
    CHECK(max_abs_diff(ld, lh) <= 1e-9);
  }
}

TEST_CASE("checkpoint round trip restores weights and running statistics") {
  Dataset ds = generate_synthetic(SyntheticFamily::kCyclesVsChords, 6, 3);
  ModelConfig cfg = base_config(Variant::kMuchGcnMH, ds);
  Model a(cfg, 1);
  Batch batch = small_batch(ds, 4);

  // A train-mode pass moves the running statistics off their initial values.
  {
    Tape t;
    a.forward(t, batch, Mode::kTrain);
  }
  double rm_mag = 0.0;
  for (double v : a.params().find("layer0/bn1/running_mean")->value.data) rm_mag += std::abs(v);
  CHECK(rm_mag > 0.0);

  fs::path path = fs::temp_directory_path() / "muchgcn_test_ckpt.bin";
  a.save(path);

  Model b(cfg, 2);
  b.load(path);
  auto ia = a.params().begin(), ib = b.params().begin();
  for (; ia != a.params().end(); ++ia, ++ib) {
    CHECK(ia->name == ib->name);
    CHECK(ia->value.data == ib->value.data);
  }
  Tape ta, tb;
  CHECK(ta.value(a.forward(ta, batch, Mode::kEval).logits).data ==
        tb.value(b.forward(tb, batch, Mode::kEval).logits).data);

  SUBCASE("shape mismatch is reported with the parameter name") {
    ModelConfig wide = cfg;
    wide.hidden = 7;
    Model c(wide, 3);
    CHECK_THROWS_WITH_AS(c.load(path), doctest::Contains("layer0/convW1"), std::runtime_error);
  }
  SUBCASE("unknown and missing parameters are rejected") {
    ParamStore small;
    small.add("alpha", full({2}, 1.0));
    ParamStore big;
    big.add("alpha", full({2}, 2.0));
    big.add("beta", full({3}, 3.0));

    fs::path p2 = fs::temp_directory_path() / "muchgcn_test_ckpt2.bin";
    save_checkpoint(big, p2);
    CHECK_THROWS_WITH_AS(load_checkpoint(small, p2), doctest::Contains("unknown parameter 'beta'"),
                         std::runtime_error);
    save_checkpoint(small, p2);
    CHECK_THROWS_WITH_AS(load_checkpoint(big, p2), doctest::Contains("missing parameter 'beta'"),
                         std::runtime_error);
    fs::remove(p2);
  }
  SUBCASE("corrupt files are rejected") {
    fs::path bad = fs::temp_directory_path() / "muchgcn_test_ckpt_bad.bin";
    std::ofstream(bad, std::ios::binary) << "not a checkpoint at all";
    CHECK_THROWS_WITH_AS(b.load(bad), doctest::Contains("not a checkpoint"), std::runtime_error);
    fs::copy_file(path, bad, fs::copy_options::overwrite_existing);
    fs::resize_file(bad, fs::file_size(bad) - 5);
    CHECK_THROWS_WITH_AS(b.load(bad), doctest::Contains("truncated"), std::runtime_error);
    fs::remove(bad);
  }
  fs::remove(path);
}

TEST_CASE("forward rejects a feature-width mismatch") {
  Dataset ds = generate_synthetic(SyntheticFamily::kCyclesVsChords, 4, 3);
  ModelConfig cfg = base_config(Variant::kFlatGcn, ds);
  cfg.input_dim = ds.input_dim + 1;
  Model model(cfg, 4);
  Batch batch = small_batch(ds, 2);
  Tape t;
  CHECK_THROWS_AS(model.forward(t, batch, Mode::kEval), std::invalid_argument);
}
