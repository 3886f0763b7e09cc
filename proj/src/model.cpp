#include "muchgcn/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include "muchgcn/rng.hpp"

namespace muchgcn {

namespace {

[[noreturn]] void config_error(const std::string& msg) {
  throw std::invalid_argument("model config: " + msg);
}

std::string layer_prefix(int l) { return "layer" + std::to_string(l); }

Array uniform_init(Rng& rng, std::vector<int> shape, int fan_in) {
  Array a(std::move(shape));
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : a.data) v = rng.uniform(-bound, bound);
  return a;
}

BatchNormState make_bn(ParamStore& ps, const std::string& prefix, int d) {
  BatchNormState st;
  st.gamma = ps.add(prefix + "/gamma", full({d}, 1.0));
  st.beta = ps.add(prefix + "/beta", Array({d}));
  st.running_mean = ps.add(prefix + "/running_mean", Array({d}), false);
  st.running_var = ps.add(prefix + "/running_var", full({d}, 1.0), false);
  return st;
}

/// dims = {in, hidden..., out}; one weight/bias pair per consecutive pair.
Mlp make_mlp(ParamStore& ps, Rng& rng, const std::string& prefix, const std::vector<int>& dims) {
  Mlp mlp;
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    std::string tag = std::to_string(i);
    mlp.weights.push_back(
        ps.add(prefix + "/w" + tag, uniform_init(rng, {dims[i], dims[i + 1]}, dims[i])));
    mlp.biases.push_back(ps.add(prefix + "/b" + tag, Array({dims[i + 1]})));
  }
  return mlp;
}

/// Theta starts as the uniform average over the multiset so every entry
/// contributes from step one; the MLP is d -> d -> out.
ChannelFilter make_filter(ParamStore& ps, Rng& rng, const std::string& prefix, int multiset_len,
                          int d, int out) {
  ChannelFilter f;
  f.theta = ps.add(prefix + "_theta", full({multiset_len}, 1.0 / multiset_len));
  f.bias = ps.add(prefix + "_bias", Array({1}));
  f.phi = make_mlp(ps, rng, prefix + "_phi", {d, d, out});
  return f;
}

/// Index of ordered pair (i, c), i != c, in lexicographic order over C channels.
int pair_index(int i, int c, int channels) { return i * (channels - 1) + (c > i ? c - 1 : c); }

}  // namespace

Variant variant_from_string(const std::string& s) {
  if (s == "muchgcn_mh") return Variant::kMuchGcnMH;
  if (s == "muchgcn_m") return Variant::kMuchGcnM;
  if (s == "muchgcn_h") return Variant::kMuchGcnH;
  if (s == "flat_gcn") return Variant::kFlatGcn;
  if (s == "diffpool_gcn") return Variant::kDiffPoolGcn;
  throw std::invalid_argument("unknown variant '" + s +
                              "' (expected muchgcn_mh, muchgcn_m, muchgcn_h, flat_gcn, "
                              "diffpool_gcn)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kMuchGcnMH: return "muchgcn_mh";
    case Variant::kMuchGcnM: return "muchgcn_m";
    case Variant::kMuchGcnH: return "muchgcn_h";
    case Variant::kFlatGcn: return "flat_gcn";
    case Variant::kDiffPoolGcn: return "diffpool_gcn";
  }
  throw std::invalid_argument("unknown variant value");
}

void ModelConfig::validate() {
  if (layers < 1) config_error("layers must be >= 1");
  if (steps < 1) config_error("steps must be >= 1");
  if (hidden < 1) config_error("hidden must be >= 1");
  if (max_nodes < 1) config_error("max_nodes must be >= 1");
  if (input_dim < 1) config_error("input_dim must be >= 1");
  if (num_classes < 2) config_error("num_classes must be >= 2");

  size_t transitions = static_cast<size_t>(layers) - 1;
  if (assign_ratio.size() != transitions) {
    if (transitions == 0)
      assign_ratio.clear();
    else if (assign_ratio.size() == 1)
      assign_ratio.assign(transitions, assign_ratio[0]);
    else
      config_error("assign_ratio needs one entry per level transition (layers - 1)");
  }
  for (double r : assign_ratio)
    if (!(r > 0.0 && r <= 1.0)) config_error("assign_ratio entries must lie in (0, 1]");

  if (channel_expansion.size() != static_cast<size_t>(layers)) {
    if (channel_expansion.size() == 1)
      channel_expansion.assign(layers, channel_expansion[0]);
    else
      config_error("channel_expansion needs one entry per level");
  }
  for (int t : channel_expansion)
    if (t < 1) config_error("channel_expansion entries must be >= 1");

  auto require_single_channel = [&](const char* name) {
    for (int t : channel_expansion)
      if (t != 1) config_error(std::string(name) + " keeps one channel per level; set channel_expansion to 1");
  };
  switch (variant) {
    case Variant::kMuchGcnMH:
      break;
    case Variant::kMuchGcnM:
      if (layers != 1) config_error("muchgcn_m does not coarsen; set layers to 1");
      break;
    case Variant::kMuchGcnH:
      require_single_channel("muchgcn_h");
      break;
    case Variant::kDiffPoolGcn:
      require_single_channel("diffpool_gcn");
      break;
    case Variant::kFlatGcn:
      if (layers != 1) config_error("flat_gcn does not coarsen; set layers to 1");
      require_single_channel("flat_gcn");
      break;
  }
}

ShapePlan plan_shapes(const ModelConfig& cfg_in) {
  ModelConfig cfg = cfg_in;
  cfg.validate();
  const int k_steps = cfg.steps, d = cfg.hidden;

  ShapePlan plan;
  int nodes = cfg.max_nodes;
  int channels = 1;
  for (int l = 0; l < cfg.layers; ++l) {
    LayerPlan lp;
    lp.nodes = nodes;
    lp.channels = channels;
    lp.generated = channels * cfg.channel_expansion[l];
    lp.multiset_len = 1 + k_steps * channels;
    lp.next_nodes =
        l + 1 < cfg.layers
            ? static_cast<int>(std::ceil(cfg.assign_ratio[l] * static_cast<double>(nodes)))
            : 0;
    plan.layers.push_back(lp);
    nodes = lp.next_nodes;
    channels = lp.generated;
  }

  long mlp_params = 0;  // helper accumulations below avoid repeating shape math
  auto mlp_cost = [&](int in, int hid, int out) { return static_cast<long>(in) * hid + hid + static_cast<long>(hid) * out + out; };
  auto conv_params = [&](int in) {
    return static_cast<long>(in) * d + static_cast<long>(k_steps - 1) * d * d;
  };
  const long bn_params = static_cast<long>(k_steps) * 4 * d;

  switch (cfg.variant) {
    case Variant::kMuchGcnMH:
    case Variant::kMuchGcnM:
    case Variant::kMuchGcnH: {
      if (cfg.input_dim != d) plan.other_matmuls += 1;  // level-0 multiset entry projection
      for (int l = 0; l < cfg.layers; ++l) {
        const LayerPlan& lp = plan.layers[l];
        bool pools = l + 1 < cfg.layers;
        plan.conv_matmuls +=
            2L * k_steps * static_cast<long>(lp.channels) * static_cast<long>(lp.channels);
        plan.other_matmuls += 2L * lp.generated;  // embedding filter MLPs
        if (pools) {
          plan.other_matmuls += 2L * lp.generated;  // assignment filter MLPs
          plan.other_matmuls += lp.generated;       // coarse features s^T z
          plan.other_matmuls +=
              2L * static_cast<long>(lp.generated) * static_cast<long>(lp.generated);  // pair adjacencies
        }
        plan.param_count += conv_params(l == 0 ? cfg.input_dim : d) + bn_params;
        long embed = lp.multiset_len + 1 + mlp_cost(d, d, d);
        long pool = pools ? lp.multiset_len + 1 + mlp_cost(d, d, lp.next_nodes) : 0;
        plan.param_count += static_cast<long>(lp.generated) * (embed + pool);
      }
      plan.other_matmuls += 2;  // classifier
      mlp_params = mlp_cost(cfg.layers * d, d, cfg.num_classes);
      break;
    }
    case Variant::kFlatGcn: {
      plan.conv_matmuls += 2L * k_steps;
      plan.other_matmuls += 2;
      plan.param_count += conv_params(cfg.input_dim) + bn_params;
      mlp_params = mlp_cost(d, d, cfg.num_classes);
      break;
    }
    case Variant::kDiffPoolGcn: {
      for (int l = 0; l < cfg.layers; ++l) {
        const LayerPlan& lp = plan.layers[l];
        bool pools = l + 1 < cfg.layers;
        plan.conv_matmuls += 2L * k_steps;  // embedding trunk
        plan.param_count += conv_params(l == 0 ? cfg.input_dim : d) + bn_params;
        if (pools) {
          plan.conv_matmuls += 2L * k_steps;  // assignment trunk
          plan.other_matmuls += 1;            // assignment head
          plan.other_matmuls += 3;            // s^T z and s^T a s
          plan.param_count += conv_params(l == 0 ? cfg.input_dim : d) + bn_params;
          plan.param_count += static_cast<long>(d) * lp.next_nodes + lp.next_nodes;
        }
      }
      plan.other_matmuls += 2;
      mlp_params = mlp_cost(cfg.layers * d, d, cfg.num_classes);
      break;
    }
  }
  plan.param_count += mlp_params;
  return plan;
}

Model::Model(ModelConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  plan_ = plan_shapes(cfg_);
  Rng init = Rng(seed).stream("init");
  switch (cfg_.variant) {
    case Variant::kMuchGcnMH:
    case Variant::kMuchGcnM:
    case Variant::kMuchGcnH:
      build_muchgcn(init);
      break;
    case Variant::kFlatGcn:
      build_flat(init);
      break;
    case Variant::kDiffPoolGcn:
      build_diffpool(init);
      break;
  }
}

void Model::build_muchgcn(Rng& rng) {
  const int d = cfg_.hidden;
  levels_.resize(cfg_.layers);
  for (int l = 0; l < cfg_.layers; ++l) {
    const LayerPlan& lp = plan_.layers[l];
    Level& lv = levels_[l];
    std::string lpfx = layer_prefix(l);
    for (int k = 1; k <= cfg_.steps; ++k) {
      int in = k == 1 ? (l == 0 ? cfg_.input_dim : d) : d;
      lv.conv.w.push_back(
          params_.add(lpfx + "/convW" + std::to_string(k), uniform_init(rng, {in, d}, in)));
    }
    for (int k = 1; k <= cfg_.steps; ++k)
      lv.bn.push_back(make_bn(params_, lpfx + "/bn" + std::to_string(k), d));
    for (int j = 0; j < lp.generated; ++j) {
      std::string gpfx = lpfx + "/graph" + std::to_string(j);
      GraphFilters gf;
      gf.embed = make_filter(params_, rng, gpfx + "/embed", lp.multiset_len, d, d);
      if (l + 1 < cfg_.layers) {
        gf.pool = make_filter(params_, rng, gpfx + "/pool", lp.multiset_len, d, lp.next_nodes);
        gf.has_pool = true;
      }
      lv.filters.push_back(std::move(gf));
    }
  }
  classifier_ = make_mlp(params_, rng, "classifier", {cfg_.layers * d, d, cfg_.num_classes});
}

void Model::build_flat(Rng& rng) {
  const int d = cfg_.hidden;
  for (int k = 1; k <= cfg_.steps; ++k) {
    int in = k == 1 ? cfg_.input_dim : d;
    flat_conv_.w.push_back(
        params_.add("conv/W" + std::to_string(k), uniform_init(rng, {in, d}, in)));
  }
  for (int k = 1; k <= cfg_.steps; ++k)
    flat_bn_.push_back(make_bn(params_, "bn" + std::to_string(k), d));
  classifier_ = make_mlp(params_, rng, "classifier", {d, d, cfg_.num_classes});
}

void Model::build_diffpool(Rng& rng) {
  const int d = cfg_.hidden;
  dp_levels_.resize(cfg_.layers);
  for (int l = 0; l < cfg_.layers; ++l) {
    const LayerPlan& lp = plan_.layers[l];
    DiffPoolLevel& dl = dp_levels_[l];
    std::string lpfx = layer_prefix(l);
    int in0 = l == 0 ? cfg_.input_dim : d;
    for (int k = 1; k <= cfg_.steps; ++k) {
      int in = k == 1 ? in0 : d;
      dl.embed_conv.w.push_back(
          params_.add(lpfx + "/embed/convW" + std::to_string(k), uniform_init(rng, {in, d}, in)));
    }
    for (int k = 1; k <= cfg_.steps; ++k)
      dl.embed_bn.push_back(make_bn(params_, lpfx + "/embed/bn" + std::to_string(k), d));
    if (l + 1 < cfg_.layers) {
      for (int k = 1; k <= cfg_.steps; ++k) {
        int in = k == 1 ? in0 : d;
        dl.pool_conv.w.push_back(
            params_.add(lpfx + "/pool/convW" + std::to_string(k), uniform_init(rng, {in, d}, in)));
      }
      for (int k = 1; k <= cfg_.steps; ++k)
        dl.pool_bn.push_back(make_bn(params_, lpfx + "/pool/bn" + std::to_string(k), d));
      dl.pool_w = params_.add(lpfx + "/pool_head/w", uniform_init(rng, {d, lp.next_nodes}, d));
      dl.pool_b = params_.add(lpfx + "/pool_head/b", Array({lp.next_nodes}));
      dl.has_pool = true;
    }
  }
  classifier_ = make_mlp(params_, rng, "classifier", {cfg_.layers * d, d, cfg_.num_classes});
}

std::pair<Array, Array> compact_graph(const Array& features, const Array& adjacency,
                                      const Array& mask) {
  if (features.rank() != 2 || adjacency.rank() != 2 || mask.rank() != 1)
    throw std::invalid_argument("compact_graph: expected {n,d} features, {n,n} adjacency, {n} mask");
  int n = features.rows();
  if (adjacency.rows() != n || adjacency.cols() != n || mask.rows() != n)
    throw std::invalid_argument("compact_graph: inconsistent node counts");
  std::vector<int> live;
  for (int i = 0; i < n; ++i)
    if (mask.data[i] != 0.0) live.push_back(i);
  if (live.empty()) throw std::invalid_argument("compact_graph: graph has no live nodes");

  int m = static_cast<int>(live.size());
  int d = features.cols();
  Array cx({m, d}), ca({m, m});
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < d; ++c) cx.at(r, c) = features.at(live[r], c);
    for (int c = 0; c < m; ++c) ca.at(r, c) = adjacency.at(live[r], live[c]);
  }
  return {std::move(cx), std::move(ca)};
}

ForwardResult Model::forward(Tape& t, const Batch& batch, Mode mode) {
  if (batch.input_dim() != cfg_.input_dim)
    throw std::invalid_argument("forward: batch feature width " +
                                std::to_string(batch.input_dim()) + " != configured input_dim " +
                                std::to_string(cfg_.input_dim));
  switch (cfg_.variant) {
    case Variant::kMuchGcnMH:
    case Variant::kMuchGcnM:
    case Variant::kMuchGcnH:
      return forward_muchgcn(t, batch, mode);
    case Variant::kFlatGcn:
      return forward_flat(t, batch, mode);
    case Variant::kDiffPoolGcn:
      return forward_diffpool(t, batch, mode);
  }
  throw std::logic_error("forward: unreachable");
}

ForwardResult Model::forward_muchgcn(Tape& t, const Batch& batch, Mode mode) {
  const int B = batch.size();
  const int d = cfg_.hidden;
  const int L = cfg_.layers;

  // xs[i][b]: node features of channel i; adj[i][c][b]: adjacency between the
  // node sets of channels i and c (i == c is the channel's own graph).
  std::vector<std::vector<Tensor>> xs(1, std::vector<Tensor>(B));
  std::vector<std::vector<std::vector<Tensor>>> adj(
      1, std::vector<std::vector<Tensor>>(1, std::vector<Tensor>(B)));
  for (int b = 0; b < B; ++b) {
    auto [cx, ca] = compact_graph(batch.graph_features(b), batch.graph_adjacency(b),
                                  batch.graph_mask(b));
    xs[0][b] = t.leaf(std::move(cx));
    adj[0][0][b] = t.leaf(std::move(ca));
  }

  ForwardResult res;
  std::vector<std::vector<Tensor>> readouts(B);  // per graph, one {d} vector per level

  for (int l = 0; l < L; ++l) {
    const LayerPlan& lp = plan_.layers[l];
    const int C = lp.channels;
    const int T = cfg_.channel_expansion[l];
    Level& lv = levels_[l];
    bool pools = l + 1 < L;

    // Lockstep pass: intra units for every (channel, graph), then inter units
    // for every ordered channel pair; one shared batch norm per step.
    std::vector<ConvUnit> units;
    units.reserve(static_cast<size_t>(C) * C * B);
    for (int i = 0; i < C; ++i)
      for (int b = 0; b < B; ++b) units.push_back({xs[i][b], adj[i][i][b], -1, nullptr, nullptr});
    for (int i = 0; i < C; ++i)
      for (int c = 0; c < C; ++c) {
        if (c == i) continue;
        for (int b = 0; b < B; ++b)
          units.push_back({xs[i][b], adj[i][c][b], c * B + b, nullptr, nullptr});
      }
    auto seqs = conv_lockstep(t, units, lv.conv, lv.bn, mode);

    // Multiset per (channel, graph): the channel state, its intra sequence,
    // then its inter sequences by ascending source channel. The level-0 state
    // is projected through the first conv weight when widths differ.
    std::vector<std::vector<std::vector<Tensor>>> msets(C,
                                                        std::vector<std::vector<Tensor>>(B));
    const int pair_base = C * B;
    for (int i = 0; i < C; ++i)
      for (int b = 0; b < B; ++b) {
        Tensor xe = xs[i][b];
        if (l == 0 && cfg_.input_dim != d) xe = t.matmul(xe, t.param(*lv.conv.w[0]));
        std::vector<std::vector<Tensor>> chosen;
        chosen.reserve(C);
        chosen.push_back(seqs[static_cast<size_t>(i) * B + b]);
        for (int c = 0; c < C; ++c) {
          if (c == i) continue;
          chosen.push_back(seqs[pair_base + static_cast<size_t>(pair_index(i, c, C)) * B + b]);
        }
        msets[i][b] = build_multiset(xe, chosen);
      }

    // Generated graphs: embeddings feed the readout (and pooling when the
    // level coarsens).
    std::vector<std::vector<Tensor>> zs(lp.generated, std::vector<Tensor>(B));
    std::vector<std::vector<Tensor>> ss(pools ? lp.generated : 0, std::vector<Tensor>(B));
    std::vector<Tensor> level_readout(B);
    for (int j = 0; j < lp.generated; ++j) {
      int p = j / T;
      for (int b = 0; b < B; ++b) {
        Tensor z = filter_apply(t, msets[p][b], lv.filters[j].embed);
        zs[j][b] = z;
        Tensor y = t.max_over_rows(z);
        level_readout[b] = j == 0 ? y : t.add(level_readout[b], y);
        if (pools) ss[j][b] = compute_assignment(t, msets[p][b], lv.filters[j].pool);
      }
    }
    for (int b = 0; b < B; ++b) readouts[b].push_back(level_readout[b]);

    if (pools) {
      res.assignments.push_back(ss);
      std::vector<std::vector<Tensor>> nxs(lp.generated, std::vector<Tensor>(B));
      std::vector<std::vector<std::vector<Tensor>>> nadj(
          lp.generated,
          std::vector<std::vector<Tensor>>(lp.generated, std::vector<Tensor>(B)));
      for (int j = 0; j < lp.generated; ++j)
        for (int b = 0; b < B; ++b) nxs[j][b] = t.matmul_ta(ss[j][b], zs[j][b]);
      for (int j = 0; j < lp.generated; ++j)
        for (int c = 0; c < lp.generated; ++c)
          for (int b = 0; b < B; ++b)
            nadj[j][c][b] = inter_adjacency(t, ss[j][b], ss[c][b], adj[j / T][c / T][b]);
      xs = std::move(nxs);
      adj = std::move(nadj);
    }
  }

  std::vector<Tensor> feats(B);
  for (int b = 0; b < B; ++b) feats[b] = t.concat(readouts[b]);
  res.logits = mlp_apply(t, t.stack_rows(feats), classifier_);
  return res;
}

ForwardResult Model::forward_flat(Tape& t, const Batch& batch, Mode mode) {
  const int B = batch.size();
  std::vector<ConvUnit> units;
  units.reserve(B);
  for (int b = 0; b < B; ++b) {
    auto [cx, ca] = compact_graph(batch.graph_features(b), batch.graph_adjacency(b),
                                  batch.graph_mask(b));
    units.push_back({t.leaf(std::move(cx)), t.leaf(std::move(ca)), -1, nullptr, nullptr});
  }
  auto seqs = conv_lockstep(t, units, flat_conv_, flat_bn_, mode);

  std::vector<Tensor> feats(B);
  for (int b = 0; b < B; ++b) feats[b] = t.max_over_rows(seqs[b][cfg_.steps]);
  ForwardResult res;
  res.logits = mlp_apply(t, t.stack_rows(feats), classifier_);
  return res;
}

ForwardResult Model::forward_diffpool(Tape& t, const Batch& batch, Mode mode) {
  const int B = batch.size();
  const int K = cfg_.steps;

  std::vector<Tensor> x(B), a(B);
  for (int b = 0; b < B; ++b) {
    auto [cx, ca] = compact_graph(batch.graph_features(b), batch.graph_adjacency(b),
                                  batch.graph_mask(b));
    x[b] = t.leaf(std::move(cx));
    a[b] = t.leaf(std::move(ca));
  }

  ForwardResult res;
  std::vector<std::vector<Tensor>> readouts(B);
  for (int l = 0; l < cfg_.layers; ++l) {
    DiffPoolLevel& dl = dp_levels_[l];

    std::vector<ConvUnit> embed_units;
    embed_units.reserve(B);
    for (int b = 0; b < B; ++b) embed_units.push_back({x[b], a[b], -1, nullptr, nullptr});
    auto embed_seqs = conv_lockstep(t, embed_units, dl.embed_conv, dl.embed_bn, mode);
    std::vector<Tensor> z(B);
    for (int b = 0; b < B; ++b) {
      z[b] = embed_seqs[b][K];
      readouts[b].push_back(t.max_over_rows(z[b]));
    }

    if (dl.has_pool) {
      std::vector<ConvUnit> pool_units;
      pool_units.reserve(B);
      for (int b = 0; b < B; ++b) pool_units.push_back({x[b], a[b], -1, nullptr, nullptr});
      auto pool_seqs = conv_lockstep(t, pool_units, dl.pool_conv, dl.pool_bn, mode);
      std::vector<std::vector<Tensor>> ss(1, std::vector<Tensor>(B));
      for (int b = 0; b < B; ++b) {
        Tensor s = t.row_softmax(
            t.linear(pool_seqs[b][K], t.param(*dl.pool_w), t.param(*dl.pool_b)));
        ss[0][b] = s;
        auto [xn, an] = diffpool(t, z[b], s, a[b]);
        x[b] = xn;
        a[b] = an;
      }
      res.assignments.push_back(std::move(ss));
    }
  }

  std::vector<Tensor> feats(B);
  for (int b = 0; b < B; ++b) feats[b] = t.concat(readouts[b]);
  res.logits = mlp_apply(t, t.stack_rows(feats), classifier_);
  return res;
}

// --- checkpoint IO -----------------------------------------------------------
// Layout: "MUCHGCN1" magic, u32 parameter count, then per parameter u32 name
// length, name bytes, u32 rank, u32 dims, f64 values; all little-endian.

namespace {

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_f64(std::ostream& os, double v) {
  uint64_t u = std::bit_cast<uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

double read_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(u);
}

constexpr char kMagic[8] = {'M', 'U', 'C', 'H', 'G', 'C', 'N', '1'};

}  // namespace

void save_checkpoint(const ParamStore& params, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  os.write(kMagic, 8);
  write_u32(os, static_cast<uint32_t>(params.size()));
  for (const Parameter& p : params) {
    write_u32(os, static_cast<uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_u32(os, static_cast<uint32_t>(p.value.rank()));
    for (int dim : p.value.shape) write_u32(os, static_cast<uint32_t>(dim));
    for (double v : p.value.data) write_f64(os, v);
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path.string());
}

void load_checkpoint(ParamStore& params, const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || !std::equal(magic, magic + 8, kMagic))
    throw std::runtime_error("not a checkpoint file: " + path.string());

  uint32_t count = read_u32(is);
  std::set<std::string> seen;
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    uint32_t rank = read_u32(is);
    std::vector<int> shape(rank);
    for (uint32_t r = 0; r < rank; ++r) shape[r] = static_cast<int>(read_u32(is));
    if (!is) throw std::runtime_error("truncated checkpoint: " + path.string());

    Parameter* p = params.find(name);
    if (!p) throw std::runtime_error("checkpoint names unknown parameter '" + name + "'");
    if (p->value.shape != shape) {
      Array want(shape);
      throw std::runtime_error("checkpoint shape mismatch for '" + name + "': file " +
                               want.shape_str() + " vs model " + p->value.shape_str());
    }
    if (!seen.insert(name).second)
      throw std::runtime_error("checkpoint repeats parameter '" + name + "'");
    for (double& v : p->value.data) v = read_f64(is);
    if (!is) throw std::runtime_error("truncated checkpoint: " + path.string());
  }
  if (seen.size() != params.size())
    for (const Parameter& p : params)
      if (!seen.count(p.name))
        throw std::runtime_error("checkpoint is missing parameter '" + p.name + "'");
}

void Model::save(const std::filesystem::path& path) const { save_checkpoint(params_, path); }

void Model::load(const std::filesystem::path& path) { load_checkpoint(params_, path); }

}  // namespace muchgcn
