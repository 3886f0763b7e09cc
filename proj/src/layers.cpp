#include "muchgcn/layers.hpp"

#include <stdexcept>

namespace muchgcn {

Tensor mlp_apply(Tape& t, Tensor x, const Mlp& mlp) {
  if (mlp.weights.empty() || mlp.weights.size() != mlp.biases.size())
    throw std::invalid_argument("mlp_apply: malformed MLP");
  Tensor h = x;
  for (size_t i = 0; i < mlp.weights.size(); ++i) {
    h = t.linear(h, t.param(*mlp.weights[i]), t.param(*mlp.biases[i]));
    if (i + 1 < mlp.weights.size()) h = t.relu(h);
  }
  return h;
}

Tensor conv_step(Tape& t, Tensor h_self, Tensor adj, Tensor h_nbr, Parameter& w) {
  return t.relu(t.matmul(t.add(h_self, t.matmul(adj, h_nbr)), t.param(w)));
}

std::vector<Tensor> normalize_blocks(Tape& t, std::span<const Tensor> blocks,
                                     std::span<const Array* const> masks, BatchNormState& bn,
                                     Mode mode) {
  if (blocks.empty()) throw std::invalid_argument("normalize_blocks: no blocks");
  if (!masks.empty() && masks.size() != blocks.size())
    throw std::invalid_argument("normalize_blocks: mask count mismatch");

  bool any_mask = false;
  for (const Array* m : masks) any_mask = any_mask || m != nullptr;

  if (blocks.size() == 1) {
    const Array* m = any_mask ? masks[0] : nullptr;
    return {t.row_l2_normalize(t.batch_norm(blocks[0], bn, mode, m), kRowNormEps)};
  }

  // Stack, normalize once (shared statistics), slice back apart.
  Array tall_mask({1});
  const Array* mask_ptr = nullptr;
  if (any_mask) {
    int total = 0;
    for (const Tensor& b : blocks) total += b.rows();
    tall_mask = Array({total});
    int r = 0;
    for (size_t u = 0; u < blocks.size(); ++u) {
      int n = blocks[u].rows();
      for (int i = 0; i < n; ++i)
        tall_mask.data[r + i] = masks[u] == nullptr ? 1.0 : masks[u]->data[i];
      r += n;
    }
    mask_ptr = &tall_mask;
  }
  Tensor tall = t.concat_rows(blocks);
  Tensor normed = t.row_l2_normalize(t.batch_norm(tall, bn, mode, mask_ptr), kRowNormEps);
  std::vector<Tensor> out;
  out.reserve(blocks.size());
  int r = 0;
  for (const Tensor& b : blocks) {
    out.push_back(t.slice_rows(normed, r, r + b.rows()));
    r += b.rows();
  }
  return out;
}

std::vector<std::vector<Tensor>> conv_lockstep(Tape& t, std::span<const ConvUnit> units,
                                               const ConvWeights& conv,
                                               std::vector<BatchNormState>& bn, Mode mode) {
  int k_steps = conv.steps();
  if (static_cast<int>(bn.size()) != k_steps)
    throw std::invalid_argument("conv_lockstep: need one batch-norm state per step");
  for (const ConvUnit& u : units)
    if (u.nbr_unit >= static_cast<int>(units.size()) || (u.nbr_unit >= 0 && u.ext_nbr))
      throw std::invalid_argument("conv_lockstep: bad neighbor source");

  std::vector<std::vector<Tensor>> seqs(units.size());
  for (size_t u = 0; u < units.size(); ++u) seqs[u].push_back(units[u].self0);

  std::vector<const Array*> masks;
  masks.reserve(units.size());
  for (const ConvUnit& u : units) masks.push_back(u.mask);

  for (int k = 0; k < k_steps; ++k) {
    std::vector<Tensor> acts;
    acts.reserve(units.size());
    for (size_t u = 0; u < units.size(); ++u) {
      const ConvUnit& unit = units[u];
      Tensor prev_self = seqs[u][k];
      Tensor nbr = unit.ext_nbr   ? unit.ext_nbr->at(k)
                   : unit.nbr_unit >= 0 ? seqs[unit.nbr_unit][k]
                                        : prev_self;
      acts.push_back(conv_step(t, prev_self, unit.adj, nbr, *conv.w[k]));
    }
    std::vector<Tensor> normed = normalize_blocks(t, acts, masks, bn[k], mode);
    for (size_t u = 0; u < units.size(); ++u) seqs[u].push_back(normed[u]);
  }
  return seqs;
}

std::vector<Tensor> message_pass_intra(Tape& t, Tensor x, Tensor adj, const ConvWeights& conv,
                                       std::vector<BatchNormState>& bn, Mode mode,
                                       const Array* mask) {
  ConvUnit unit{x, adj, -1, nullptr, mask};
  return conv_lockstep(t, std::span<const ConvUnit>(&unit, 1), conv, bn, mode)[0];
}

std::vector<Tensor> message_pass_inter(Tape& t, Tensor x_i, Tensor adj_ic,
                                       const std::vector<Tensor>& nbr_seq,
                                       const ConvWeights& conv, std::vector<BatchNormState>& bn,
                                       Mode mode, const Array* mask) {
  if (static_cast<int>(nbr_seq.size()) < conv.steps())
    throw std::invalid_argument("message_pass_inter: neighbor sequence too short");
  ConvUnit unit{x_i, adj_ic, -1, &nbr_seq, mask};
  return conv_lockstep(t, std::span<const ConvUnit>(&unit, 1), conv, bn, mode)[0];
}

std::vector<Tensor> build_multiset(Tensor x_entry,
                                   std::span<const std::vector<Tensor>> seqs) {
  std::vector<Tensor> out{x_entry};
  for (const std::vector<Tensor>& seq : seqs)
    for (size_t k = 1; k < seq.size(); ++k) out.push_back(seq[k]);
  return out;
}

Tensor filter_apply(Tape& t, std::span<const Tensor> multiset, const ChannelFilter& filter,
                    const Array* mask) {
  Tensor z = t.multiset_combine(multiset, t.param(*filter.theta), t.param(*filter.bias));
  Tensor h = mlp_apply(t, z, filter.phi);
  if (mask) h = t.scale_rows(h, *mask);
  return h;
}

Tensor compute_assignment(Tape& t, std::span<const Tensor> multiset, const ChannelFilter& pool,
                          const Array* mask) {
  Tensor z = t.multiset_combine(multiset, t.param(*pool.theta), t.param(*pool.bias));
  Tensor s = t.row_softmax(mlp_apply(t, z, pool.phi));
  if (mask) s = t.scale_rows(s, *mask);
  return s;
}

std::pair<Tensor, Tensor> diffpool(Tape& t, Tensor z, Tensor s, Tensor a) {
  Tensor x_next = t.matmul_ta(s, z);
  Tensor a_next = t.matmul_ta(s, t.matmul(a, s));
  return {x_next, a_next};
}

Tensor inter_adjacency(Tape& t, Tensor s_i, Tensor s_c, Tensor a_parents) {
  return t.matmul_ta(s_i, t.matmul(a_parents, s_c));
}

}  // namespace muchgcn
