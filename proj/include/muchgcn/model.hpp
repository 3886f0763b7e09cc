#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "muchgcn/graphio.hpp"
#include "muchgcn/layers.hpp"
#include "muchgcn/tensor.hpp"

namespace muchgcn {

class Rng;

/// muchgcn_mh: multi-channel and hierarchical (the full architecture).
/// muchgcn_m:  multi-channel only (single coarsening level, L = 1).
/// muchgcn_h:  hierarchical only (one channel per level, T = 1).
/// flat_gcn:   K conv steps, max-pool readout, classifier; no pooling.
/// diffpool_gcn: separate embed/pool GNN trunks per level with a linear
///               assignment head; single channel.
enum class Variant { kMuchGcnMH, kMuchGcnM, kMuchGcnH, kFlatGcn, kDiffPoolGcn };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

struct ModelConfig {
  Variant variant = Variant::kMuchGcnMH;
  int layers = 2;    // L: coarsening levels
  int steps = 3;     // K: message-passing steps per level
  int hidden = 64;   // d: embedding width
  /// Assignment ratio per transition (resized/broadcast to layers-1 entries);
  /// nodes at level l+1 = ceil(ratio[l] * nodes at level l).
  std::vector<double> assign_ratio{0.25};
  /// Channel expansion per level (broadcast to layers entries); level l
  /// generates channels(l) * expansion[l] graphs.
  std::vector<int> channel_expansion{4};
  int max_nodes = 0;
  int input_dim = 0;
  int num_classes = 0;

  /// Normalizes broadcastable fields and checks variant constraints; throws
  /// std::invalid_argument with a specific message on violation.
  void validate();
};

struct LayerPlan {
  int nodes = 0;         // n_l
  int channels = 0;      // C_l
  int generated = 0;     // graphs produced at this level: C_l * T_l
  int multiset_len = 0;  // 1 + K * C_l
  int next_nodes = 0;    // n_{l+1}; 0 at the last level
};

struct ShapePlan {
  std::vector<LayerPlan> layers;
  long conv_matmuls = 0;   // matrix products inside message passing (per graph)
  long other_matmuls = 0;  // filters, assignments, pooling, classifier
  long param_count = 0;    // total scalar parameters (including BN stats)
};

/// Static shape/cost plan for a configuration (no parameters allocated).
ShapePlan plan_shapes(const ModelConfig& cfg);

struct ForwardResult {
  Tensor logits;  // {B, num_classes}
  /// assignments[l][j][b]: the assignment matrix of generated graph j at
  /// pooling level l (levels 0..layers-2; the last level does not pool) for
  /// batch entry b. Empty for variants without pooling.
  std::vector<std::vector<std::vector<Tensor>>> assignments;
};

/// A parameterized classifier over graphs. Construction draws every weight
/// from a named stream of `seed`, so equal (config, seed) pairs give equal
/// models. forward() builds the computation for one padded batch on the
/// caller's tape; each graph is first compacted to its unmasked rows, which
/// is exactly equivalent to masked arithmetic because padding carries zero
/// rows everywhere.
class Model {
 public:
  Model(ModelConfig cfg, uint64_t seed);

  // Internal wiring points into the parameter store, so copying would alias
  // the source's parameters; moving keeps deque element addresses valid.
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  ForwardResult forward(Tape& t, const Batch& batch, Mode mode);

  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

 private:
  struct GraphFilters {
    ChannelFilter embed;
    ChannelFilter pool;  // only set when the level coarsens further
    bool has_pool = false;
  };
  struct Level {
    ConvWeights conv;
    std::vector<BatchNormState> bn;
    std::vector<GraphFilters> filters;  // one per generated graph
  };
  struct DiffPoolLevel {
    ConvWeights embed_conv;
    std::vector<BatchNormState> embed_bn;
    ConvWeights pool_conv;
    std::vector<BatchNormState> pool_bn;
    Parameter* pool_w = nullptr;  // linear assignment head d -> n_{l+1}
    Parameter* pool_b = nullptr;
    bool has_pool = false;
  };

  void build_muchgcn(Rng& rng);
  void build_flat(Rng& rng);
  void build_diffpool(Rng& rng);

  ForwardResult forward_muchgcn(Tape& t, const Batch& batch, Mode mode);
  ForwardResult forward_flat(Tape& t, const Batch& batch, Mode mode);
  ForwardResult forward_diffpool(Tape& t, const Batch& batch, Mode mode);

  ModelConfig cfg_;
  ShapePlan plan_;
  ParamStore params_;
  std::vector<Level> levels_;
  std::vector<DiffPoolLevel> dp_levels_;
  ConvWeights flat_conv_;
  std::vector<BatchNormState> flat_bn_;
  Mlp classifier_;
};

/// Binary little-endian checkpoint of every parameter (trainable weights and
/// batch-norm running statistics alike), keyed by name with shape tags.
void save_checkpoint(const ParamStore& params, const std::filesystem::path& path);
/// Restores into an existing store; throws on unknown/missing names or any
/// shape mismatch so silent architecture drift is impossible.
void load_checkpoint(ParamStore& params, const std::filesystem::path& path);

/// Compact a padded graph to its live rows: features {n_live, d}, adjacency
/// {n_live, n_live}, preserving row order. Exposed for the verification
/// oracle, which must agree with the engine's batch handling.
std::pair<Array, Array> compact_graph(const Array& features, const Array& adjacency,
                                      const Array& mask);

}  // namespace muchgcn
