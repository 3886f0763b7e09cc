#pragma once

#include <span>
#include <vector>

#include "muchgcn/tensor.hpp"

namespace muchgcn {

/// Epsilon guarding the per-row l2 normalization after each conv step.
inline constexpr double kRowNormEps = 1e-12;

/// The K step weight matrices of one coarsening level, shared by every
/// channel and by intra- and inter-channel passes alike.
struct ConvWeights {
  std::vector<Parameter*> w;
  int steps() const { return static_cast<int>(w.size()); }
};

/// Plain MLP: ReLU between layers, linear output.
struct Mlp {
  std::vector<Parameter*> weights;
  std::vector<Parameter*> biases;
};

Tensor mlp_apply(Tape& t, Tensor x, const Mlp& mlp);

/// One graph filter: per-entry multiset coefficients, a scalar bias, and the
/// MLP applied to the weighted combination.
struct ChannelFilter {
  Parameter* theta = nullptr;
  Parameter* bias = nullptr;
  Mlp phi;
};

/// One message-passing step before normalization:
/// relu((h_self + adj * h_nbr) * w). Intra-channel passes use h_nbr == h_self.
Tensor conv_step(Tape& t, Tensor h_self, Tensor adj, Tensor h_nbr, Parameter& w);

/// Batch norm pooled over the stacked rows of all blocks followed by per-row
/// l2 normalization, returned block by block. Blocks processed in lockstep
/// (channels, channel pairs, batch graphs) share statistics this way.
std::vector<Tensor> normalize_blocks(Tape& t, std::span<const Tensor> blocks,
                                     std::span<const Array* const> masks, BatchNormState& bn,
                                     Mode mode);

/// One unit of a lockstep K-step pass: its initial self state, the adjacency
/// it aggregates over, and where its neighbor states come from. nbr_unit >= 0
/// reads the previous step of another unit in the same call (inter-channel
/// passes follow the intra-channel sequence of the source channel);
/// ext_nbr supplies a precomputed sequence of length >= K; with neither, the
/// unit aggregates its own previous state.
struct ConvUnit {
  Tensor self0;
  Tensor adj;
  int nbr_unit = -1;
  const std::vector<Tensor>* ext_nbr = nullptr;
  const Array* mask = nullptr;
};

/// Run K conv steps over all units at once; every step applies one shared
/// batch norm (pooled across units) and l2 row normalization. Returns one
/// sequence per unit: entry 0 is self0, entries 1..K the normalized steps.
std::vector<std::vector<Tensor>> conv_lockstep(Tape& t, std::span<const ConvUnit> units,
                                               const ConvWeights& conv,
                                               std::vector<BatchNormState>& bn, Mode mode);

/// Intra-channel pass for a single graph/channel (a one-unit lockstep).
std::vector<Tensor> message_pass_intra(Tape& t, Tensor x, Tensor adj, const ConvWeights& conv,
                                       std::vector<BatchNormState>& bn, Mode mode,
                                       const Array* mask = nullptr);

/// Inter-channel pass for a single pair (i,c): the neighbor states follow the
/// intra-channel sequence of channel c (length >= K, entry k consumed at step
/// k+1); adj is the inter-channel adjacency between the two node sets.
std::vector<Tensor> message_pass_inter(Tape& t, Tensor x_i, Tensor adj_ic,
                                       const std::vector<Tensor>& nbr_seq,
                                       const ConvWeights& conv, std::vector<BatchNormState>& bn,
                                       Mode mode, const Array* mask = nullptr);

/// Assemble the per-channel multiset [x_entry, seq_0[1..K], seq_1[1..K], ...]
/// where seq_0 is the channel's intra sequence and the rest are its inter
/// sequences in ascending source-channel order.
std::vector<Tensor> build_multiset(Tensor x_entry,
                                   std::span<const std::vector<Tensor>> seqs);

/// Embedding filter: phi(sum_i theta_i * multiset_i + bias). Masked rows are
/// zeroed so padding stays inert downstream.
Tensor filter_apply(Tape& t, std::span<const Tensor> multiset, const ChannelFilter& filter,
                    const Array* mask = nullptr);

/// Assignment filter: row-softmax over the pool filter's output. Unmasked
/// rows sum to one; masked rows are zeroed.
Tensor compute_assignment(Tape& t, std::span<const Tensor> multiset, const ChannelFilter& pool,
                          const Array* mask = nullptr);

/// Coarsen: x' = s^T z, a' = s^T a s.
std::pair<Tensor, Tensor> diffpool(Tape& t, Tensor z, Tensor s, Tensor a);

/// Adjacency between two generated graphs: s_i^T a_parents s_c, where
/// a_parents connects the node sets the two assignments coarsen.
Tensor inter_adjacency(Tape& t, Tensor s_i, Tensor s_c, Tensor a_parents);

}  // namespace muchgcn
