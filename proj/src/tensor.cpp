#include "muchgcn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace muchgcn {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

bool all_finite(const Array& a) {
  for (double v : a.data)
    if (!std::isfinite(v)) return false;
  return true;
}

/// c += a*b with the k-loop outside the j-loop so all row accesses are
/// contiguous; skipping zero multipliers makes sparse adjacency cheap.
void matmul_acc(const double* a, const double* b, double* c, int n, int k, int m) {
  for (int i = 0; i < n; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * m;
    for (int p = 0; p < k; ++p) {
      double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + static_cast<size_t>(p) * m;
      for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

/// dst += g * b^T, i.e. dst[i,p] += sum_j g[i,j]*b[p,j].
void acc_matmul_bt(const Array& g, const Array& b, Array& dst) {
  int n = g.rows(), m = g.cols(), k = b.rows();
  for (int i = 0; i < n; ++i)
    for (int p = 0; p < k; ++p) {
      double s = 0.0;
      const double* grow = g.data.data() + static_cast<size_t>(i) * m;
      const double* brow = b.data.data() + static_cast<size_t>(p) * m;
      for (int j = 0; j < m; ++j) s += grow[j] * brow[j];
      dst.at(i, p) += s;
    }
}

/// dst += a^T * g, i.e. dst[p,j] += sum_i a[i,p]*g[i,j].
void acc_at_matmul(const Array& a, const Array& g, Array& dst) {
  int n = a.rows(), k = a.cols(), m = g.cols();
  for (int i = 0; i < n; ++i) {
    const double* arow = a.data.data() + static_cast<size_t>(i) * k;
    const double* grow = g.data.data() + static_cast<size_t>(i) * m;
    for (int p = 0; p < k; ++p) {
      double av = arow[p];
      if (av == 0.0) continue;
      double* drow = dst.data.data() + static_cast<size_t>(p) * m;
      for (int j = 0; j < m; ++j) drow[j] += av * grow[j];
    }
  }
}

std::vector<int> ids_of(std::span<const Tensor> ts) {
  std::vector<int> ids;
  ids.reserve(ts.size());
  for (const Tensor& t : ts) ids.push_back(t.id);
  return ids;
}

}  // namespace

void Tape::check_same_tape(Tensor t) const {
  require(t.tape == this && t.id >= 0 && t.id < static_cast<int>(nodes_.size()),
          "tensor does not belong to this tape");
}

int Tape::push(Array value, std::vector<int> parents, std::function<void(Tape&, const Node&)> back,
               const char* op_name) {
  if (!all_finite(value))
    throw std::runtime_error(std::string("non-finite values produced by op '") + op_name + "'");
  Node n;
  n.value = std::move(value);
  n.parents = std::move(parents);
  for (int pid : n.parents)
    if (node(pid).needs_grad) n.needs_grad = true;
  if (n.needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor Tape::leaf(Array value) {
  if (!all_finite(value)) throw std::runtime_error("non-finite values in leaf input");
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return wrap(static_cast<int>(nodes_.size()) - 1);
}

Tensor Tape::param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return wrap(it->second);
  if (!all_finite(p.value)) throw std::runtime_error("non-finite values in parameter '" + p.name + "'");
  Node n;
  n.value = p.value;
  n.bound = &p;
  n.needs_grad = p.trainable;
  nodes_.push_back(std::move(n));
  int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(&p, id);
  return wrap(id);
}

Tensor Tape::matmul(Tensor a, Tensor b) {
  check_same_tape(a);
  check_same_tape(b);
  const Array& av = node(a.id).value;
  const Array& bv = node(b.id).value;
  require(av.rank() == 2 && bv.rank() == 2 && av.cols() == bv.rows(),
          "matmul: incompatible shapes " + av.shape_str() + " and " + bv.shape_str());
  Array out({av.rows(), bv.cols()});
  matmul_acc(av.data.data(), bv.data.data(), out.data.data(), av.rows(), av.cols(), bv.cols());
  int pa = a.id, pb = b.id;
  auto back = [pa, pb](Tape& t, const Node& n) {
    const Array& avv = t.node(pa).value;
    const Array& bvv = t.node(pb).value;
    Array& da = t.grad_of(pa);
    Array& db = t.grad_of(pb);
    if (!da.data.empty()) acc_matmul_bt(n.grad, bvv, da);
    if (!db.data.empty()) acc_at_matmul(avv, n.grad, db);
  };
  return wrap(push(std::move(out), {pa, pb}, std::move(back), "matmul"));
}

Tensor Tape::matmul_ta(Tensor a, Tensor b) {
  check_same_tape(a);
  check_same_tape(b);
  const Array& av = node(a.id).value;
  const Array& bv = node(b.id).value;
  require(av.rank() == 2 && bv.rank() == 2 && av.rows() == bv.rows(),
          "matmul_ta: incompatible shapes " + av.shape_str() + " and " + bv.shape_str());
  int n = av.rows(), p = av.cols(), q = bv.cols();
  Array out({p, q});
  for (int i = 0; i < n; ++i) {
    const double* arow = av.data.data() + static_cast<size_t>(i) * p;
    const double* brow = bv.data.data() + static_cast<size_t>(i) * q;
    for (int r = 0; r < p; ++r) {
      double ar = arow[r];
      if (ar == 0.0) continue;
      double* orow = out.data.data() + static_cast<size_t>(r) * q;
      for (int c = 0; c < q; ++c) orow[c] += ar * brow[c];
    }
  }
  int pa = a.id, pb = b.id;
  auto back = [pa, pb](Tape& t, const Node& n) {
    const Array& avv = t.node(pa).value;   // {n,p}
    const Array& bvv = t.node(pb).value;   // {n,q}
    const Array& g = n.grad;               // {p,q}
    Array& da = t.grad_of(pa);
    Array& db = t.grad_of(pb);
    int nn = avv.rows(), pp = avv.cols(), qq = bvv.cols();
    if (!da.data.empty()) {
      // da[i,r] += dot(g[r,:], b[i,:])
      for (int i = 0; i < nn; ++i)
        for (int r = 0; r < pp; ++r) {
          double s = 0.0;
          const double* grow = g.data.data() + static_cast<size_t>(r) * qq;
          const double* brow = bvv.data.data() + static_cast<size_t>(i) * qq;
          for (int c = 0; c < qq; ++c) s += grow[c] * brow[c];
          da.at(i, r) += s;
        }
    }
    if (!db.data.empty()) {
      // db[i,c] += sum_r a[i,r]*g[r,c]
      for (int i = 0; i < nn; ++i) {
        const double* arow = avv.data.data() + static_cast<size_t>(i) * pp;
        double* drow = db.data.data() + static_cast<size_t>(i) * qq;
        for (int r = 0; r < pp; ++r) {
          double ar = arow[r];
          if (ar == 0.0) continue;
          const double* grow = g.data.data() + static_cast<size_t>(r) * qq;
          for (int c = 0; c < qq; ++c) drow[c] += ar * grow[c];
        }
      }
    }
  };
  return wrap(push(std::move(out), {pa, pb}, std::move(back), "matmul_ta"));
}

Tensor Tape::add(Tensor a, Tensor b) {
  check_same_tape(a);
  check_same_tape(b);
  const Array& av = node(a.id).value;
  const Array& bv = node(b.id).value;
  require(av.same_shape(bv), "add: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  Array out = av;
  for (long i = 0; i < out.numel(); ++i) out.data[i] += bv.data[i];
  int pa = a.id, pb = b.id;
  auto back = [pa, pb](Tape& t, const Node& n) {
    for (int pid : {pa, pb}) {
      Array& d = t.grad_of(pid);
      if (d.data.empty()) continue;
      for (size_t i = 0; i < d.data.size(); ++i) d.data[i] += n.grad.data[i];
    }
  };
  return wrap(push(std::move(out), {pa, pb}, std::move(back), "add"));
}

Tensor Tape::mul(Tensor a, Tensor b) {
  check_same_tape(a);
  check_same_tape(b);
  const Array& av = node(a.id).value;
  const Array& bv = node(b.id).value;
  require(av.same_shape(bv), "mul: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  Array out = av;
  for (long i = 0; i < out.numel(); ++i) out.data[i] *= bv.data[i];
  int pa = a.id, pb = b.id;
  auto back = [pa, pb](Tape& t, const Node& n) {
    const Array& avv = t.node(pa).value;
    const Array& bvv = t.node(pb).value;
    Array& da = t.grad_of(pa);
    Array& db = t.grad_of(pb);
    for (size_t i = 0; i < n.grad.data.size(); ++i) {
      if (!da.data.empty()) da.data[i] += n.grad.data[i] * bvv.data[i];
      if (!db.data.empty()) db.data[i] += n.grad.data[i] * avv.data[i];
    }
  };
  return wrap(push(std::move(out), {pa, pb}, std::move(back), "mul"));
}

Tensor Tape::scalar_mul(Tensor a, double c) {
  check_same_tape(a);
  Array out = node(a.id).value;
  for (double& v : out.data) v *= c;
  int pa = a.id;
  auto back = [pa, c](Tape& t, const Node& n) {
    Array& da = t.grad_of(pa);
    if (da.data.empty()) return;
    for (size_t i = 0; i < da.data.size(); ++i) da.data[i] += c * n.grad.data[i];
  };
  return wrap(push(std::move(out), {pa}, std::move(back), "scalar_mul"));
}

Tensor Tape::scalar_add(Tensor a, double c) {
  check_same_tape(a);
  Array out = node(a.id).value;
  for (double& v : out.data) v += c;
  int pa = a.id;
  auto back = [pa](Tape& t, const Node& n) {
    Array& da = t.grad_of(pa);
    if (da.data.empty()) return;
    for (size_t i = 0; i < da.data.size(); ++i) da.data[i] += n.grad.data[i];
  };
  return wrap(push(std::move(out), {pa}, std::move(back), "scalar_add"));
}

Tensor Tape::scale_by(Tensor a, Tensor s) {
  check_same_tape(a);
  check_same_tape(s);
  const Array& av = node(a.id).value;
  const Array& sv = node(s.id).value;
  require(sv.numel() == 1, "scale_by: scale must have one element");
  Array out = av;
  for (double& v : out.data) v *= sv.data[0];
  int pa = a.id, ps = s.id;
  auto back = [pa, ps](Tape& t, const Node& n) {
    const Array& avv = t.node(pa).value;
    double sc = t.node(ps).value.data[0];
    Array& da = t.grad_of(pa);
    Array& ds = t.grad_of(ps);
    if (!da.data.empty())
      for (size_t i = 0; i < da.data.size(); ++i) da.data[i] += sc * n.grad.data[i];
    if (!ds.data.empty()) {
      double s2 = 0.0;
      for (size_t i = 0; i < avv.data.size(); ++i) s2 += avv.data[i] * n.grad.data[i];
      ds.data[0] += s2;
    }
  };
  return wrap(push(std::move(out), {pa, ps}, std::move(back), "scale_by"));
}

Tensor Tape::shift_by(Tensor a, Tensor s) {
  check_same_tape(a);
  check_same_tape(s);
  const Array& av = node(a.id).value;
  const Array& sv = node(s.id).value;
  require(sv.numel() == 1, "shift_by: shift must have one element");
  Array out = av;
  for (double& v : out.data) v += sv.data[0];
  int pa = a.id, ps = s.id;
  auto back = [pa, ps](Tape& t, const Node& n) {
    Array& da = t.grad_of(pa);
    Array& ds = t.grad_of(ps);
    if (!da.data.empty())
      for (size_t i = 0; i < da.data.size(); ++i) da.data[i] += n.grad.data[i];
    if (!ds.data.empty()) {
      double s2 = 0.0;
      for (double g : n.grad.data) s2 += g;
      ds.data[0] += s2;
    }
  };
  return wrap(push(std::move(out), {pa, ps}, std::move(back), "shift_by"));
}

Tensor Tape::relu(Tensor a) {
  check_same_tape(a);
  Array out = node(a.id).value;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  int pa = a.id;
  // Subgradient at exactly zero is zero: grad flows only where the input was
  // strictly positive (equivalently, where the output is positive).
  auto back = [pa](Tape& t, const Node& n) {
    Array& da = t.grad_of(pa);
    if (da.data.empty()) return;
    for (size_t i = 0; i < da.data.size(); ++i)
      if (n.value.data[i] > 0.0) da.data[i] += n.grad.data[i];
  };
  return wrap(push(std::move(out), {pa}, std::move(back), "relu"));
}

Tensor Tape::linear(Tensor x, Tensor w, Tensor b) {
  check_same_tape(x);
  check_same_tape(w);
  check_same_tape(b);
  const Array& xv = node(x.id).value;
  const Array& wv = node(w.id).value;
  const Array& bv = node(b.id).value;
  require(xv.rank() == 2 && wv.rank() == 2 && xv.cols() == wv.rows(),
          "linear: incompatible shapes " + xv.shape_str() + " and " + wv.shape_str());
  require(bv.rank() == 1 && bv.rows() == wv.cols(), "linear: bias shape mismatch");
  int n = xv.rows(), m = wv.cols();
  Array out({n, m});
  matmul_acc(xv.data.data(), wv.data.data(), out.data.data(), n, xv.cols(), m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out.at(i, j) += bv.data[j];
  int px = x.id, pw = w.id, pb = b.id;
  auto back = [px, pw, pb](Tape& t, const Node& n2) {
    const Array& xvv = t.node(px).value;
    const Array& wvv = t.node(pw).value;
    Array& dx = t.grad_of(px);
    Array& dw = t.grad_of(pw);
    Array& db = t.grad_of(pb);
    if (!dx.data.empty()) acc_matmul_bt(n2.grad, wvv, dx);
    if (!dw.data.empty()) acc_at_matmul(xvv, n2.grad, dw);
    if (!db.data.empty()) {
      int rr = n2.grad.rows(), cc = n2.grad.cols();
      for (int i = 0; i < rr; ++i)
        for (int j = 0; j < cc; ++j) db.data[j] += n2.grad.at(i, j);
    }
  };
  return wrap(push(std::move(out), {px, pw, pb}, std::move(back), "linear"));
}

Tensor Tape::row_softmax(Tensor a, const Array* col_mask) {
  check_same_tape(a);
  const Array& av = node(a.id).value;
  require(av.rank() == 2, "row_softmax: expects rank-2 input");
  int n = av.rows(), m = av.cols();
  std::vector<double> mask;
  if (col_mask) {
    require(col_mask->rank() == 1 && col_mask->rows() == m, "row_softmax: mask length mismatch");
    mask = col_mask->data;
    bool any = false;
    for (double v : mask) any = any || v != 0.0;
    require(any, "row_softmax: all columns masked");
  }
  Array out({n, m});
  for (int i = 0; i < n; ++i) {
    double mx = -1e300;
    for (int j = 0; j < m; ++j)
      if ((mask.empty() || mask[j] != 0.0) && av.at(i, j) > mx) mx = av.at(i, j);
    double z = 0.0;
    for (int j = 0; j < m; ++j) {
      double e = (mask.empty() || mask[j] != 0.0) ? std::exp(av.at(i, j) - mx) : 0.0;
      out.at(i, j) = e;
      z += e;
    }
    for (int j = 0; j < m; ++j) out.at(i, j) /= z;
  }
  int pa = a.id;
  auto back = [pa](Tape& t, const Node& n2) {
    Array& da = t.grad_of(pa);
    if (da.data.empty()) return;
    int rr = n2.value.rows(), cc = n2.value.cols();
    for (int i = 0; i < rr; ++i) {
      double dot = 0.0;
      for (int j = 0; j < cc; ++j) dot += n2.grad.at(i, j) * n2.value.at(i, j);
      for (int j = 0; j < cc; ++j)
        da.at(i, j) += n2.value.at(i, j) * (n2.grad.at(i, j) - dot);
    }
  };
  return wrap(push(std::move(out), {pa}, std::move(back), "row_softmax"));
}

Tensor Tape::row_l2_normalize(Tensor a, double eps) {
  check_same_tape(a);
  const Array& av = node(a.id).value;
  require(av.rank() == 2, "row_l2_normalize: expects rank-2 input");
  int n = av.rows(), m = av.cols();
  Array out({n, m});
  std::vector<double> scale(n);      // max(norm, eps)
  std::vector<char> clamped(n);      // rows where the norm fell below eps
  for (int i = 0; i < n; ++i) {
    double s2 = 0.0;
    for (int j = 0; j < m; ++j) s2 += av.at(i, j) * av.at(i, j);
    double nrm = std::sqrt(s2);
    clamped[i] = nrm <= eps;
    scale[i] = clamped[i] ? eps : nrm;
    for (int j = 0; j < m; ++j) out.at(i, j) = av.at(i, j) / scale[i];
  }
  int pa = a.id;
  auto back = [pa, scale = std::move(scale), clamped = std::move(clamped)](Tape& t, const Node& n2) {
    Array& da = t.grad_of(pa);
    if (da.data.empty()) return;
    const Array& xv = t.node(pa).value;
    int rr = xv.rows(), cc = xv.cols();
    for (int i = 0; i < rr; ++i) {
      double s = scale[i];
      if (clamped[i]) {
        for (int j = 0; j < cc; ++j) da.at(i, j) += n2.grad.at(i, j) / s;
        continue;
      }
      double dot = 0.0;
      for (int j = 0; j < cc; ++j) dot += n2.grad.at(i, j) * xv.at(i, j);
      double s3 = s * s * s;
      for (int j = 0; j < cc; ++j)
        da.at(i, j) += n2.grad.at(i, j) / s - xv.at(i, j) * dot / s3;
    }
  };
  return wrap(push(std::move(out), {pa}, std::move(back), "row_l2_normalize"));
}

Tensor Tape::batch_norm(Tensor a, BatchNormState& st, Mode mode, const Array* row_mask) {
  check_same_tape(a);
  const Array& av = node(a.id).value;
  require(av.rank() == 2, "batch_norm: expects rank-2 input");
  require(st.gamma && st.beta, "batch_norm: state has no gamma/beta parameters");
  require(st.running_mean && st.running_var, "batch_norm: state has no running statistics");
  int n = av.rows(), m = av.cols();
  require(st.gamma->value.numel() == m && st.beta->value.numel() == m &&
              st.running_mean->value.numel() == m && st.running_var->value.numel() == m,
          "batch_norm: state width mismatch");
  std::vector<double> mask;
  int live = n;
  if (row_mask) {
    require(row_mask->rank() == 1 && row_mask->rows() == n, "batch_norm: mask length mismatch");
    mask = row_mask->data;
    live = 0;
    for (double v : mask) live += v != 0.0 ? 1 : 0;
  }
  bool use_batch = mode == Mode::kTrain && live >= 2;

  std::vector<double> mean(m), var(m);
  if (use_batch) {
    for (int i = 0; i < n; ++i) {
      if (!mask.empty() && mask[i] == 0.0) continue;
      for (int j = 0; j < m; ++j) mean[j] += av.at(i, j);
    }
    for (int j = 0; j < m; ++j) mean[j] /= live;
    for (int i = 0; i < n; ++i) {
      if (!mask.empty() && mask[i] == 0.0) continue;
      for (int j = 0; j < m; ++j) {
        double d = av.at(i, j) - mean[j];
        var[j] += d * d;
      }
    }
    for (int j = 0; j < m; ++j) var[j] /= live;  // biased, used for normalization
    // Running statistics track the unbiased variance, as is conventional.
    double unbias = live > 1 ? static_cast<double>(live) / (live - 1) : 1.0;
    for (int j = 0; j < m; ++j) {
      double& rm = st.running_mean->value.data[j];
      double& rv = st.running_var->value.data[j];
      rm = (1.0 - st.momentum) * rm + st.momentum * mean[j];
      rv = (1.0 - st.momentum) * rv + st.momentum * var[j] * unbias;
    }
  } else {
    mean = st.running_mean->value.data;
    var = st.running_var->value.data;
  }

  std::vector<double> inv_std(m);
  for (int j = 0; j < m; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + st.eps);

  // param() may grow the node vector, so re-fetch values afterwards.
  Tensor gt = param(*st.gamma);
  Tensor bt = param(*st.beta);
  const Array& xv = node(a.id).value;
  const Array& gv = node(gt.id).value;
  const Array& bv = node(bt.id).value;

  Array out({n, m});
  std::vector<double> xhat(static_cast<size_t>(n) * m);
  for (int i = 0; i < n; ++i) {
    bool dead = !mask.empty() && mask[i] == 0.0;
    for (int j = 0; j < m; ++j) {
      if (dead) continue;  // masked rows stay zero
      double xh = (xv.at(i, j) - mean[j]) * inv_std[j];
      xhat[static_cast<size_t>(i) * m + j] = xh;
      out.at(i, j) = gv.data[j] * xh + bv.data[j];
    }
  }

  int pa = a.id, pg = gt.id, pb = bt.id;
  auto back = [pa, pg, pb, use_batch, live, mask = std::move(mask), inv_std = std::move(inv_std),
               xhat = std::move(xhat)](Tape& t, const Node& n2) {
    const Array& g = n2.grad;
    int rr = g.rows(), cc = g.cols();
    const Array& gammav = t.node(pg).value;
    Array& da = t.grad_of(pa);
    Array& dgamma = t.grad_of(pg);
    Array& dbeta = t.grad_of(pb);
    // Per-feature sums over live rows: G = sum g, GX = sum g*xhat.
    std::vector<double> G(cc), GX(cc);
    for (int i = 0; i < rr; ++i) {
      if (!mask.empty() && mask[i] == 0.0) continue;
      for (int j = 0; j < cc; ++j) {
        double gij = g.at(i, j);
        G[j] += gij;
        GX[j] += gij * xhat[static_cast<size_t>(i) * cc + j];
      }
    }
    if (!dgamma.data.empty())
      for (int j = 0; j < cc; ++j) dgamma.data[j] += GX[j];
    if (!dbeta.data.empty())
      for (int j = 0; j < cc; ++j) dbeta.data[j] += G[j];
    if (!da.data.empty()) {
      for (int i = 0; i < rr; ++i) {
        if (!mask.empty() && mask[i] == 0.0) continue;
        for (int j = 0; j < cc; ++j) {
          double gij = g.at(i, j);
          double coef = gammav.data[j] * inv_std[j];
          if (use_batch) {
            double xh = xhat[static_cast<size_t>(i) * cc + j];
            da.at(i, j) += coef * (gij - G[j] / live - xh * GX[j] / live);
          } else {
            da.at(i, j) += coef * gij;
          }
        }
      }
    }
  };
  return wrap(push(std::move(out), {pa, pg, pb}, std::move(back), "batch_norm"));
}

Tensor Tape::reduce_sum(Tensor a) {
  check_same_tape(a);
  const Array& av = node(a.id).value;
  double s = 0.0;
  for (double v : av.data) s += v;
  int pa = a.id;
  auto back = [pa](Tape& t, const Node& n2) {
    Array& da = t.grad_of(pa);
    if (da.data.empty()) return;
    double g0 = n2.grad.data[0];
    for (double& v : da.data) v += g0;
  };
  return wrap(push(Array({1}, {s}), {pa}, std::move(back), "reduce_sum"));
}

Tensor Tape::max_over_rows(Tensor a, const Array* row_mask) {
  check_same_tape(a);
  const Array& av = node(a.id).value;
  require(av.rank() == 2, "max_over_rows: expects rank-2 input");
  int n = av.rows(), m = av.cols();
  std::vector<char> live(n, 1);
  if (row_mask) {
    require(row_mask->rank() == 1 && row_mask->rows() == n, "max_over_rows: mask length mismatch");
    int cnt = 0;
    for (int i = 0; i < n; ++i) {
      live[i] = row_mask->data[i] != 0.0;
      cnt += live[i];
    }
    require(cnt > 0, "max_over_rows: all rows masked");
  }
  Array out({m});
  std::vector<int> arg(m, -1);
  for (int j = 0; j < m; ++j) {
    double best = 0.0;
    for (int i = 0; i < n; ++i) {
      if (!live[i]) continue;
      double v = av.at(i, j);
      if (arg[j] < 0 || v > best) {  // strict '>' resolves ties to the lowest row
        best = v;
        arg[j] = i;
      }
    }
    out.data[j] = best;
  }
  int pa = a.id;
  auto back = [pa, arg = std::move(arg)](Tape& t, const Node& n2) {
    Array& da = t.grad_of(pa);
    if (da.data.empty()) return;
    for (int j = 0; j < n2.grad.rows(); ++j) da.at(arg[j], j) += n2.grad.data[j];
  };
  return wrap(push(std::move(out), {pa}, std::move(back), "max_over_rows"));
}

Tensor Tape::row_entropy_mean(Tensor p, const Array* row_mask) {
  check_same_tape(p);
  const Array& pv = node(p.id).value;
  require(pv.rank() == 2, "row_entropy_mean: expects rank-2 input");
  int n = pv.rows(), m = pv.cols();
  std::vector<char> live(n, 1);
  int cnt = n;
  if (row_mask) {
    require(row_mask->rank() == 1 && row_mask->rows() == n, "row_entropy_mean: mask length mismatch");
    cnt = 0;
    for (int i = 0; i < n; ++i) {
      live[i] = row_mask->data[i] != 0.0;
      cnt += live[i];
    }
    require(cnt > 0, "row_entropy_mean: all rows masked");
  }
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!live[i]) continue;
    for (int j = 0; j < m; ++j) {
      double v = pv.at(i, j);
      if (v > 0.0) s -= v * std::log(v);
    }
  }
  s /= cnt;
  int pa = p.id;
  auto back = [pa, cnt, live = std::move(live)](Tape& t, const Node& n2) {
    Array& da = t.grad_of(pa);
    if (da.data.empty()) return;
    const Array& pvv = t.node(pa).value;
    double g0 = n2.grad.data[0];
    for (int i = 0; i < pvv.rows(); ++i) {
      if (!live[i]) continue;
      for (int j = 0; j < pvv.cols(); ++j) {
        double v = pvv.at(i, j);
        if (v > 0.0) da.at(i, j) += g0 * (-std::log(v) - 1.0) / cnt;
      }
    }
  };
  return wrap(push(Array({1}, {s}), {pa}, std::move(back), "row_entropy_mean"));
}

Tensor Tape::concat(std::span<const Tensor> vecs) {
  require(!vecs.empty(), "concat: needs at least one input");
  long total = 0;
  for (const Tensor& t : vecs) {
    check_same_tape(t);
    require(node(t.id).value.rank() == 1, "concat: expects rank-1 inputs");
    total += node(t.id).value.numel();
  }
  Array out({static_cast<int>(total)});
  std::vector<long> offs;
  long off = 0;
  for (const Tensor& t : vecs) {
    offs.push_back(off);
    const Array& v = node(t.id).value;
    std::copy(v.data.begin(), v.data.end(), out.data.begin() + off);
    off += v.numel();
  }
  std::vector<int> parents = ids_of(vecs);
  auto back = [parents, offs = std::move(offs)](Tape& t, const Node& n2) {
    for (size_t k = 0; k < parents.size(); ++k) {
      Array& d = t.grad_of(parents[k]);
      if (d.data.empty()) continue;
      for (long i = 0; i < d.numel(); ++i) d.data[i] += n2.grad.data[offs[k] + i];
    }
  };
  return wrap(push(std::move(out), parents, std::move(back), "concat"));
}

Tensor Tape::stack_rows(std::span<const Tensor> vecs) {
  require(!vecs.empty(), "stack_rows: needs at least one input");
  int m = -1;
  for (const Tensor& t : vecs) {
    check_same_tape(t);
    const Array& v = node(t.id).value;
    require(v.rank() == 1, "stack_rows: expects rank-1 inputs");
    if (m < 0) m = v.rows();
    require(v.rows() == m, "stack_rows: length mismatch");
  }
  int n = static_cast<int>(vecs.size());
  Array out({n, m});
  for (int i = 0; i < n; ++i) {
    const Array& v = node(vecs[i].id).value;
    std::copy(v.data.begin(), v.data.end(), out.data.begin() + static_cast<long>(i) * m);
  }
  std::vector<int> parents = ids_of(vecs);
  auto back = [parents](Tape& t, const Node& n2) {
    int mm = n2.value.cols();
    for (size_t k = 0; k < parents.size(); ++k) {
      Array& d = t.grad_of(parents[k]);
      if (d.data.empty()) continue;
      for (int j = 0; j < mm; ++j) d.data[j] += n2.grad.at(static_cast<int>(k), j);
    }
  };
  return wrap(push(std::move(out), parents, std::move(back), "stack_rows"));
}

Tensor Tape::concat_rows(std::span<const Tensor> mats) {
  require(!mats.empty(), "concat_rows: needs at least one input");
  int m = -1;
  long total = 0;
  for (const Tensor& t : mats) {
    check_same_tape(t);
    const Array& v = node(t.id).value;
    require(v.rank() == 2, "concat_rows: expects rank-2 inputs");
    if (m < 0) m = v.cols();
    require(v.cols() == m, "concat_rows: column mismatch");
    total += v.rows();
  }
  Array out({static_cast<int>(total), m});
  std::vector<int> row0s;
  int r0 = 0;
  for (const Tensor& t : mats) {
    row0s.push_back(r0);
    const Array& v = node(t.id).value;
    std::copy(v.data.begin(), v.data.end(), out.data.begin() + static_cast<long>(r0) * m);
    r0 += v.rows();
  }
  std::vector<int> parents = ids_of(mats);
  auto back = [parents, row0s = std::move(row0s)](Tape& t, const Node& n2) {
    int mm = n2.value.cols();
    for (size_t k = 0; k < parents.size(); ++k) {
      Array& d = t.grad_of(parents[k]);
      if (d.data.empty()) continue;
      long base = static_cast<long>(row0s[k]) * mm;
      for (long i = 0; i < d.numel(); ++i) d.data[i] += n2.grad.data[base + i];
    }
  };
  return wrap(push(std::move(out), parents, std::move(back), "concat_rows"));
}

Tensor Tape::slice_rows(Tensor a, int row_begin, int row_end) {
  check_same_tape(a);
  const Array& av = node(a.id).value;
  require(av.rank() == 2, "slice_rows: expects rank-2 input");
  require(0 <= row_begin && row_begin < row_end && row_end <= av.rows(), "slice_rows: bad range");
  int m = av.cols();
  Array out({row_end - row_begin, m});
  std::copy(av.data.begin() + static_cast<long>(row_begin) * m,
            av.data.begin() + static_cast<long>(row_end) * m, out.data.begin());
  int pa = a.id;
  auto back = [pa, row_begin](Tape& t, const Node& n2) {
    Array& da = t.grad_of(pa);
    if (da.data.empty()) return;
    int mm = n2.value.cols();
    long base = static_cast<long>(row_begin) * mm;
    for (long i = 0; i < n2.grad.numel(); ++i) da.data[base + i] += n2.grad.data[i];
  };
  return wrap(push(std::move(out), {pa}, std::move(back), "slice_rows"));
}

Tensor Tape::multiset_combine(std::span<const Tensor> entries, Tensor theta, Tensor bias) {
  require(!entries.empty(), "multiset_combine: needs at least one entry");
  check_same_tape(theta);
  check_same_tape(bias);
  const Array& tv = node(theta.id).value;
  const Array& bv = node(bias.id).value;
  require(tv.rank() == 1 && tv.numel() == static_cast<long>(entries.size()),
          "multiset_combine: theta length must equal entry count");
  require(bv.numel() == 1, "multiset_combine: bias must have one element");
  const Array& e0 = node(entries[0].id).value;
  for (const Tensor& e : entries) {
    check_same_tape(e);
    require(node(e.id).value.same_shape(e0), "multiset_combine: entry shape mismatch");
  }
  Array out = full(e0.shape, bv.data[0]);
  for (size_t k = 0; k < entries.size(); ++k) {
    const Array& ev = node(entries[k].id).value;
    double th = tv.data[k];
    for (long i = 0; i < out.numel(); ++i) out.data[i] += th * ev.data[i];
  }
  std::vector<int> parents = ids_of(entries);
  int pt = theta.id, pb = bias.id;
  parents.push_back(pt);
  parents.push_back(pb);
  std::vector<int> entry_ids = ids_of(entries);
  auto back = [entry_ids = std::move(entry_ids), pt, pb](Tape& t, const Node& n2) {
    const Array& tvv = t.node(pt).value;
    Array& dth = t.grad_of(pt);
    Array& dbi = t.grad_of(pb);
    for (size_t k = 0; k < entry_ids.size(); ++k) {
      const Array& ev = t.node(entry_ids[k]).value;
      Array& de = t.grad_of(entry_ids[k]);
      if (!de.data.empty()) {
        double th = tvv.data[k];
        for (long i = 0; i < de.numel(); ++i) de.data[i] += th * n2.grad.data[i];
      }
      if (!dth.data.empty()) {
        double s = 0.0;
        for (long i = 0; i < ev.numel(); ++i) s += ev.data[i] * n2.grad.data[i];
        dth.data[k] += s;
      }
    }
    if (!dbi.data.empty()) {
      double s = 0.0;
      for (double g : n2.grad.data) s += g;
      dbi.data[0] += s;
    }
  };
  return wrap(push(std::move(out), parents, std::move(back), "multiset_combine"));
}

Tensor Tape::scale_rows(Tensor a, const Array& s) {
  check_same_tape(a);
  const Array& av = node(a.id).value;
  require(av.rank() == 2 && s.rank() == 1 && s.rows() == av.rows(), "scale_rows: shape mismatch");
  Array out = av;
  for (int i = 0; i < av.rows(); ++i)
    for (int j = 0; j < av.cols(); ++j) out.at(i, j) *= s.data[i];
  int pa = a.id;
  auto back = [pa, s = s](Tape& t, const Node& n2) {
    Array& da = t.grad_of(pa);
    if (da.data.empty()) return;
    for (int i = 0; i < n2.value.rows(); ++i)
      for (int j = 0; j < n2.value.cols(); ++j) da.at(i, j) += s.data[i] * n2.grad.at(i, j);
  };
  return wrap(push(std::move(out), {pa}, std::move(back), "scale_rows"));
}

Tensor Tape::scale_cols(Tensor a, const Array& s) {
  check_same_tape(a);
  const Array& av = node(a.id).value;
  require(av.rank() == 2 && s.rank() == 1 && s.rows() == av.cols(), "scale_cols: shape mismatch");
  Array out = av;
  for (int i = 0; i < av.rows(); ++i)
    for (int j = 0; j < av.cols(); ++j) out.at(i, j) *= s.data[j];
  int pa = a.id;
  auto back = [pa, s = s](Tape& t, const Node& n2) {
    Array& da = t.grad_of(pa);
    if (da.data.empty()) return;
    for (int i = 0; i < n2.value.rows(); ++i)
      for (int j = 0; j < n2.value.cols(); ++j) da.at(i, j) += s.data[j] * n2.grad.at(i, j);
  };
  return wrap(push(std::move(out), {pa}, std::move(back), "scale_cols"));
}

Tensor Tape::mean_softmax_cross_entropy(Tensor logits, const std::vector<int>& labels) {
  check_same_tape(logits);
  const Array& lv = node(logits.id).value;
  require(lv.rank() == 2, "mean_softmax_cross_entropy: expects rank-2 logits");
  int n = lv.rows(), m = lv.cols();
  require(static_cast<int>(labels.size()) == n, "mean_softmax_cross_entropy: label count mismatch");
  for (int y : labels) require(0 <= y && y < m, "mean_softmax_cross_entropy: label out of range");
  std::vector<double> probs(static_cast<size_t>(n) * m);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    double mx = lv.at(i, 0);
    for (int j = 1; j < m; ++j) mx = std::max(mx, lv.at(i, j));
    double z = 0.0;
    for (int j = 0; j < m; ++j) {
      double e = std::exp(lv.at(i, j) - mx);
      probs[static_cast<size_t>(i) * m + j] = e;
      z += e;
    }
    for (int j = 0; j < m; ++j) probs[static_cast<size_t>(i) * m + j] /= z;
    loss -= std::log(probs[static_cast<size_t>(i) * m + labels[i]]);
  }
  loss /= n;
  int pa = logits.id;
  auto back = [pa, labels, probs = std::move(probs)](Tape& t, const Node& n2) {
    Array& da = t.grad_of(pa);
    if (da.data.empty()) return;
    int rr = da.rows(), cc = da.cols();
    double g0 = n2.grad.data[0] / rr;
    for (int i = 0; i < rr; ++i)
      for (int j = 0; j < cc; ++j) {
        double p = probs[static_cast<size_t>(i) * cc + j];
        da.at(i, j) += g0 * (p - (labels[i] == j ? 1.0 : 0.0));
      }
  };
  return wrap(push(Array({1}, {loss}), {pa}, std::move(back), "mean_softmax_cross_entropy"));
}

void Tape::backward(Tensor loss) {
  check_same_tape(loss);
  require(node(loss.id).value.numel() == 1, "backward: loss must have exactly one element");
  // Allocate gradient buffers for every node that needs one, then sweep in
  // reverse creation order (which is a valid reverse topological order).
  for (int id = 0; id <= loss.id; ++id) {
    Node& n = node(id);
    if (n.needs_grad && n.grad.data.empty()) n.grad = Array(n.value.shape);
  }
  if (!node(loss.id).needs_grad) return;  // loss independent of any parameter
  node(loss.id).grad.data[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = node(id);
    if (n.needs_grad && n.back) n.back(*this, n);
  }
  for (int id = 0; id <= loss.id; ++id) {
    Node& n = node(id);
    if (n.bound && n.bound->trainable)
      for (long i = 0; i < n.grad.numel(); ++i) n.bound->grad.data[i] += n.grad.data[i];
  }
}

}  // namespace muchgcn
