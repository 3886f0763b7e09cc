// Independent reimplementation of the forward pass used to cross-check the
// engine: plain double loops over plain arrays, no tape, parameters fetched
// from the store by name. Kept deliberately free of the layer/tensor modules
// so a bug there cannot cancel out here.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "muchgcn/verify.hpp"

namespace muchgcn {

namespace {

const Array& fetch(const Model& model, const std::string& name) {
  for (const Parameter& p : model.params())
    if (p.name == name) return p.value;
  throw std::logic_error("reference_forward: missing parameter " + name);
}

Array mat_mul(const Array& a, const Array& b) {
  Array out({a.rows(), b.cols()});
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (int k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(k, j);
      out.at(i, j) = s;
    }
  return out;
}

Array mat_mul_ta(const Array& a, const Array& b) {  // a^T b
  Array out({a.cols(), b.cols()});
  for (int i = 0; i < a.cols(); ++i)
    for (int j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (int k = 0; k < a.rows(); ++k) s += a.at(k, i) * b.at(k, j);
      out.at(i, j) = s;
    }
  return out;
}

Array mat_add(const Array& a, const Array& b) {
  Array out = a;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

Array linear_rows(const Array& x, const Array& w, const Array& b) {
  Array out = mat_mul(x, w);
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < out.cols(); ++j) out.at(i, j) += b.data[j];
  return out;
}

void relu_inplace(Array& a) {
  for (double& v : a.data) v = v > 0.0 ? v : 0.0;
}

Array mlp2(const Array& x, const Array& w0, const Array& b0, const Array& w1, const Array& b1) {
  Array h = linear_rows(x, w0, b0);
  relu_inplace(h);
  return linear_rows(h, w1, b1);
}

Array mlp2(const Model& m, const std::string& prefix, const Array& x) {
  return mlp2(x, fetch(m, prefix + "/w0"), fetch(m, prefix + "/b0"), fetch(m, prefix + "/w1"),
              fetch(m, prefix + "/b1"));
}

void softmax_rows_inplace(Array& a) {
  for (int i = 0; i < a.rows(); ++i) {
    double mx = a.at(i, 0);
    for (int j = 1; j < a.cols(); ++j) mx = std::max(mx, a.at(i, j));
    double z = 0.0;
    for (int j = 0; j < a.cols(); ++j) {
      a.at(i, j) = std::exp(a.at(i, j) - mx);
      z += a.at(i, j);
    }
    for (int j = 0; j < a.cols(); ++j) a.at(i, j) /= z;
  }
}

void l2_normalize_rows_inplace(Array& a, double eps) {
  for (int i = 0; i < a.rows(); ++i) {
    double s2 = 0.0;
    for (int j = 0; j < a.cols(); ++j) s2 += a.at(i, j) * a.at(i, j);
    double nrm = std::sqrt(s2);
    double scale = nrm <= eps ? eps : nrm;
    for (int j = 0; j < a.cols(); ++j) a.at(i, j) /= scale;
  }
}

std::vector<double> col_max(const Array& a) {
  std::vector<double> out(a.cols());
  for (int j = 0; j < a.cols(); ++j) {
    double best = a.at(0, j);
    for (int i = 1; i < a.rows(); ++i) best = std::max(best, a.at(i, j));
    out[j] = best;
  }
  return out;
}

/// Batch norm with statistics pooled over the rows of every block, followed
/// by row l2 normalization. Train mode uses batch statistics (running ones
/// when fewer than two rows are pooled); eval mode always uses running ones.
/// The model is read-only here, so running statistics are never advanced.
void normalize_pooled(std::vector<Array*>& blocks, const Array& gamma, const Array& beta,
                      const Array& rmean, const Array& rvar, double eps, Mode mode) {
  int d = gamma.rows();
  long total = 0;
  for (const Array* b : blocks) total += b->rows();

  std::vector<double> mean(d, 0.0), var(d, 0.0);
  if (mode == Mode::kTrain && total >= 2) {
    for (const Array* b : blocks)
      for (int i = 0; i < b->rows(); ++i)
        for (int j = 0; j < d; ++j) mean[j] += b->at(i, j);
    for (int j = 0; j < d; ++j) mean[j] /= static_cast<double>(total);
    for (const Array* b : blocks)
      for (int i = 0; i < b->rows(); ++i)
        for (int j = 0; j < d; ++j) {
          double dv = b->at(i, j) - mean[j];
          var[j] += dv * dv;
        }
    for (int j = 0; j < d; ++j) var[j] /= static_cast<double>(total);
  } else {
    for (int j = 0; j < d; ++j) {
      mean[j] = rmean.data[j];
      var[j] = rvar.data[j];
    }
  }
  for (Array* b : blocks) {
    for (int i = 0; i < b->rows(); ++i)
      for (int j = 0; j < d; ++j)
        b->at(i, j) =
            gamma.data[j] * (b->at(i, j) - mean[j]) / std::sqrt(var[j] + eps) + beta.data[j];
    l2_normalize_rows_inplace(*b, 1e-12);
  }
}

std::pair<Array, Array> take_live(const Batch& batch, int b) {
  Array feat = batch.graph_features(b);
  Array adj = batch.graph_adjacency(b);
  Array mask = batch.graph_mask(b);
  std::vector<int> live;
  for (int i = 0; i < mask.rows(); ++i)
    if (mask.data[i] != 0.0) live.push_back(i);
  int m = static_cast<int>(live.size()), d = feat.cols();
  Array x({m, d}), a({m, m});
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < d; ++c) x.at(r, c) = feat.at(live[r], c);
    for (int c = 0; c < m; ++c) a.at(r, c) = adj.at(live[r], live[c]);
  }
  return {std::move(x), std::move(a)};
}

/// K message-passing steps for a set of units sharing weights and pooled
/// normalization. nbr[u] < 0 means each unit aggregates its own sequence;
/// otherwise unit u reads the previous step of unit nbr[u]. Returns one
/// sequence (length K + 1, entry 0 the input) per unit.
std::vector<std::vector<Array>> ref_lockstep(const Model& m, const std::string& conv_prefix,
                                             const std::string& bn_prefix,
                                             const std::vector<const Array*>& x0,
                                             const std::vector<const Array*>& adj,
                                             const std::vector<int>& nbr, int k_steps,
                                             Mode mode) {
  size_t units = x0.size();
  std::vector<std::vector<Array>> seqs(units);
  for (size_t u = 0; u < units; ++u) seqs[u].push_back(*x0[u]);

  for (int k = 1; k <= k_steps; ++k) {
    const Array& w = fetch(m, conv_prefix + std::to_string(k));
    std::vector<Array> acts;
    acts.reserve(units);
    for (size_t u = 0; u < units; ++u) {
      const Array& self = seqs[u][k - 1];
      const Array& from = nbr[u] < 0 ? self : seqs[nbr[u]][k - 1];
      Array act = mat_mul(mat_add(self, mat_mul(*adj[u], from)), w);
      relu_inplace(act);
      acts.push_back(std::move(act));
    }
    std::vector<Array*> block_ptrs;
    for (Array& a : acts) block_ptrs.push_back(&a);
    std::string bp = bn_prefix + std::to_string(k);
    normalize_pooled(block_ptrs, fetch(m, bp + "/gamma"), fetch(m, bp + "/beta"),
                     fetch(m, bp + "/running_mean"), fetch(m, bp + "/running_var"), 1e-5, mode);
    for (size_t u = 0; u < units; ++u) seqs[u].push_back(std::move(acts[u]));
  }
  return seqs;
}

Array combine_multiset(const std::vector<const Array*>& entries, const Array& theta,
                       const Array& bias) {
  Array out(entries[0]->shape);
  for (size_t e = 0; e < entries.size(); ++e)
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += theta.data[e] * entries[e]->data[i];
  for (double& v : out.data) v += bias.data[0];
  return out;
}

Array classify(const Model& m, const std::vector<std::vector<double>>& readouts) {
  size_t B = readouts.size();
  Array feats({static_cast<int>(B), static_cast<int>(readouts[0].size())});
  for (size_t b = 0; b < B; ++b)
    for (size_t j = 0; j < readouts[b].size(); ++j)
      feats.at(static_cast<int>(b), static_cast<int>(j)) = readouts[b][j];
  return mlp2(m, "classifier", feats);
}

Array ref_muchgcn(const Model& model, const Batch& batch, Mode mode) {
  const ModelConfig& cfg = model.config();
  const int B = batch.size(), K = cfg.steps, d = cfg.hidden;

  std::vector<std::vector<Array>> xs(1, std::vector<Array>(B));
  std::vector<std::vector<std::vector<Array>>> adj(
      1, std::vector<std::vector<Array>>(1, std::vector<Array>(B)));
  for (int b = 0; b < B; ++b) {
    auto [x, a] = take_live(batch, b);
    xs[0][b] = std::move(x);
    adj[0][0][b] = std::move(a);
  }

  std::vector<std::vector<double>> readouts(B);
  int channels = 1;
  for (int l = 0; l < cfg.layers; ++l) {
    const int C = channels, T = cfg.channel_expansion[l], gen = C * T;
    bool pools = l + 1 < cfg.layers;
    std::string lp = "layer" + std::to_string(l);

    // Units in engine order: intra per (channel, graph), then ordered channel
    // pairs per graph; inter units read the source channel's intra sequence.
    std::vector<const Array*> x0, am;
    std::vector<int> nbr;
    for (int i = 0; i < C; ++i)
      for (int b = 0; b < B; ++b) {
        x0.push_back(&xs[i][b]);
        am.push_back(&adj[i][i][b]);
        nbr.push_back(-1);
      }
    for (int i = 0; i < C; ++i)
      for (int c = 0; c < C; ++c) {
        if (c == i) continue;
        for (int b = 0; b < B; ++b) {
          x0.push_back(&xs[i][b]);
          am.push_back(&adj[i][c][b]);
          nbr.push_back(c * B + b);
        }
      }
    auto seqs = ref_lockstep(model, lp + "/convW", lp + "/bn", x0, am, nbr, K, mode);

    // Multisets per channel and graph.
    std::vector<std::vector<Array>> entry_proj(C, std::vector<Array>(B));
    std::vector<std::vector<std::vector<const Array*>>> msets(
        C, std::vector<std::vector<const Array*>>(B));
    for (int i = 0; i < C; ++i)
      for (int b = 0; b < B; ++b) {
        const Array* xe = &xs[i][b];
        if (l == 0 && cfg.input_dim != d) {
          entry_proj[i][b] = mat_mul(xs[i][b], fetch(model, lp + "/convW1"));
          xe = &entry_proj[i][b];
        }
        std::vector<const Array*>& ms = msets[i][b];
        ms.push_back(xe);
        for (int k = 1; k <= K; ++k) ms.push_back(&seqs[i * B + b][k]);
        int pair = 0;
        for (int ii = 0; ii < C; ++ii)
          for (int cc = 0; cc < C; ++cc) {
            if (cc == ii) continue;
            if (ii == i)
              for (int k = 1; k <= K; ++k) ms.push_back(&seqs[C * B + pair * B + b][k]);
            ++pair;
          }
      }

    std::vector<std::vector<Array>> zs(gen, std::vector<Array>(B));
    std::vector<std::vector<Array>> ss(gen, std::vector<Array>(B));
    for (int j = 0; j < gen; ++j) {
      int p = j / T;
      std::string gp = lp + "/graph" + std::to_string(j);
      for (int b = 0; b < B; ++b) {
        Array comb = combine_multiset(msets[p][b], fetch(model, gp + "/embed_theta"),
                                      fetch(model, gp + "/embed_bias"));
        zs[j][b] = mlp2(model, gp + "/embed_phi", comb);
        std::vector<double> y = col_max(zs[j][b]);
        if (j == 0)
          readouts[b].insert(readouts[b].end(), y.begin(), y.end());
        else
          for (int q = 0; q < d; ++q) readouts[b][readouts[b].size() - d + q] += y[q];
        if (pools) {
          Array pc = combine_multiset(msets[p][b], fetch(model, gp + "/pool_theta"),
                                      fetch(model, gp + "/pool_bias"));
          ss[j][b] = mlp2(model, gp + "/pool_phi", pc);
          softmax_rows_inplace(ss[j][b]);
        }
      }
    }

    if (pools) {
      std::vector<std::vector<Array>> nxs(gen, std::vector<Array>(B));
      std::vector<std::vector<std::vector<Array>>> nadj(
          gen, std::vector<std::vector<Array>>(gen, std::vector<Array>(B)));
      for (int j = 0; j < gen; ++j)
        for (int b = 0; b < B; ++b) nxs[j][b] = mat_mul_ta(ss[j][b], zs[j][b]);
      for (int j = 0; j < gen; ++j)
        for (int c = 0; c < gen; ++c)
          for (int b = 0; b < B; ++b)
            nadj[j][c][b] = mat_mul_ta(ss[j][b], mat_mul(adj[j / T][c / T][b], ss[c][b]));
      xs = std::move(nxs);
      adj = std::move(nadj);
    }
    channels = gen;
  }
  return classify(model, readouts);
}

Array ref_flat(const Model& model, const Batch& batch, Mode mode) {
  const int B = batch.size();
  std::vector<Array> x(B), a(B);
  std::vector<const Array*> x0, am;
  std::vector<int> nbr(B, -1);
  for (int b = 0; b < B; ++b) {
    auto [cx, ca] = take_live(batch, b);
    x[b] = std::move(cx);
    a[b] = std::move(ca);
    x0.push_back(&x[b]);
    am.push_back(&a[b]);
  }
  auto seqs = ref_lockstep(model, "conv/W", "bn", x0, am, nbr, model.config().steps, mode);
  std::vector<std::vector<double>> readouts(B);
  for (int b = 0; b < B; ++b) readouts[b] = col_max(seqs[b][model.config().steps]);
  return classify(model, readouts);
}

Array ref_diffpool(const Model& model, const Batch& batch, Mode mode) {
  const ModelConfig& cfg = model.config();
  const int B = batch.size(), K = cfg.steps;
  std::vector<Array> x(B), a(B);
  for (int b = 0; b < B; ++b) {
    auto [cx, ca] = take_live(batch, b);
    x[b] = std::move(cx);
    a[b] = std::move(ca);
  }

  std::vector<std::vector<double>> readouts(B);
  for (int l = 0; l < cfg.layers; ++l) {
    std::string lp = "layer" + std::to_string(l);
    bool pools = l + 1 < cfg.layers;
    std::vector<const Array*> x0, am;
    std::vector<int> nbr(B, -1);
    for (int b = 0; b < B; ++b) {
      x0.push_back(&x[b]);
      am.push_back(&a[b]);
    }
    auto embed = ref_lockstep(model, lp + "/embed/convW", lp + "/embed/bn", x0, am, nbr, K, mode);
    for (int b = 0; b < B; ++b) {
      std::vector<double> y = col_max(embed[b][K]);
      readouts[b].insert(readouts[b].end(), y.begin(), y.end());
    }
    if (pools) {
      auto pool = ref_lockstep(model, lp + "/pool/convW", lp + "/pool/bn", x0, am, nbr, K, mode);
      const Array& pw = fetch(model, lp + "/pool_head/w");
      const Array& pb = fetch(model, lp + "/pool_head/b");
      for (int b = 0; b < B; ++b) {
        Array s = linear_rows(pool[b][K], pw, pb);
        softmax_rows_inplace(s);
        Array xn = mat_mul_ta(s, embed[b][K]);
        Array an = mat_mul_ta(s, mat_mul(a[b], s));
        x[b] = std::move(xn);
        a[b] = std::move(an);
      }
    }
  }
  return classify(model, readouts);
}

}  // namespace

Array reference_forward(const Model& model, const Batch& batch, Mode mode) {
  if (batch.input_dim() != model.config().input_dim)
    throw std::invalid_argument("reference_forward: batch feature width " +
                                std::to_string(batch.input_dim()) + " != configured input_dim " +
                                std::to_string(model.config().input_dim));
  switch (model.config().variant) {
    case Variant::kMuchGcnMH:
    case Variant::kMuchGcnM:
    case Variant::kMuchGcnH:
      return ref_muchgcn(model, batch, mode);
    case Variant::kFlatGcn:
      return ref_flat(model, batch, mode);
    case Variant::kDiffPoolGcn:
      return ref_diffpool(model, batch, mode);
  }
  throw std::logic_error("reference_forward: unreachable");
}

}  // namespace muchgcn
