#include "sgda/numkernel.hpp"

#include <algorithm>
#include <cmath>

#include "sgda/errors.hpp"
#include "sgda/random.hpp"

namespace sgda::nk {

namespace {

std::string shape(Index r, Index c) { return std::to_string(r) + "x" + std::to_string(c); }

void require(bool ok, const std::string& op, Index ar, Index ac, Index br, Index bc) {
  if (!ok) throw DimensionError(op + ": incompatible shapes " + shape(ar, ac) + " and " + shape(br, bc));
}

}  // namespace

DenseMatrix spmm(const SparseMatrix& s, const DenseMatrix& h) {
  require(s.cols() == h.rows(), "spmm", s.rows(), s.cols(), h.rows(), h.cols());
  DenseMatrix out = DenseMatrix::Zero(s.rows(), h.cols());
  for (Index i = 0; i < s.outerSize(); ++i)
    for (SparseMatrix::InnerIterator it(s, i); it; ++it) out.row(i).noalias() += it.value() * h.row(it.col());
  return out;
}

DenseMatrix linear(const DenseMatrix& h, const DenseMatrix& w, const std::optional<RowVector>& bias) {
  require(h.cols() == w.rows(), "linear", h.rows(), h.cols(), w.rows(), w.cols());
  DenseMatrix out = h * w;
  if (bias) {
    require(bias->cols() == w.cols(), "linear bias", 1, bias->cols(), w.rows(), w.cols());
    out.rowwise() += *bias;
  }
  return out;
}

DenseMatrix relu(const DenseMatrix& h) { return h.cwiseMax(0.0); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

DenseMatrix softmax_rows(const DenseMatrix& logits) {
  DenseMatrix out(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - m).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

DenseMatrix log_softmax_rows(const DenseMatrix& logits) {
  DenseMatrix out(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    out.row(i) = (logits.row(i).array() - lse).matrix();
  }
  return out;
}

DenseMatrix dropout_mask(Index rows, Index cols, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  DenseMatrix mask(rows, cols);
  const double keep = 1.0 / (1.0 - rate);
  Rng rng(seed);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) mask(i, j) = rng.uniform() < rate ? 0.0 : keep;
  return mask;
}

DenseMatrix dropout(const DenseMatrix& h, double rate, bool train, std::uint64_t seed) {
  if (!train || rate == 0.0) return h;
  return h.cwiseProduct(dropout_mask(h.rows(), h.cols(), rate, seed));
}

DenseMatrix grl_boundary(const DenseMatrix& upstream_grad, double lambda) { return -lambda * upstream_grad; }

double frobenius(const DenseMatrix& m) { return m.norm(); }

bool all_finite(const DenseMatrix& m) { return m.allFinite(); }

// ---------------------------------------------------------------------------

Tape::Node& Tape::node(Var v) {
  if (v.id >= nodes_.size()) throw IndexError("tape: unknown variable");
  return nodes_[v.id];
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw IndexError("tape: unknown variable");
  return nodes_[v.id];
}

Var Tape::push(DenseMatrix value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), DenseMatrix(), requires_grad, false});
  return Var{nodes_.size() - 1};
}

void Tape::accumulate(Var v, const DenseMatrix& g) {
  Node& n = node(v);
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

Var Tape::constant(DenseMatrix value) { return push(std::move(value), false); }

Var Tape::parameter(DenseMatrix value) { return push(std::move(value), true); }

const DenseMatrix& Tape::value(Var v) const { return node(v).value; }

DenseMatrix Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.has_grad) return n.grad;
  return DenseMatrix::Zero(n.value.rows(), n.value.cols());
}

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Var Tape::spmm(const SparseMatrix& s, Var h) {
  Var out = push(nk::spmm(s, value(h)), requires_grad(h));
  if (requires_grad(out)) {
    const SparseMatrix* sp = &s;
    record([this, sp, h, out] {
      if (!flowing(out)) return;
      accumulate(h, DenseMatrix(sp->transpose() * upstream(out)));
    });
  }
  return out;
}

Var Tape::matmul(Var a, Var b) {
  Var out = push(nk::linear(value(a), value(b)), requires_grad(a) || requires_grad(b));
  if (requires_grad(out)) {
    record([this, a, b, out] {
      if (!flowing(out)) return;
      const DenseMatrix& g = upstream(out);
      if (requires_grad(a)) accumulate(a, g * value(b).transpose());
      if (requires_grad(b)) accumulate(b, value(a).transpose() * g);
    });
  }
  return out;
}

Var Tape::add(Var a, Var b) {
  const DenseMatrix& av = value(a);
  const DenseMatrix& bv = value(b);
  require(av.rows() == bv.rows() && av.cols() == bv.cols(), "add", av.rows(), av.cols(), bv.rows(), bv.cols());
  Var out = push(av + bv, requires_grad(a) || requires_grad(b));
  if (requires_grad(out)) {
    record([this, a, b, out] {
      if (!flowing(out)) return;
      const DenseMatrix g = upstream(out);
      accumulate(a, g);
      accumulate(b, g);
    });
  }
  return out;
}

Var Tape::add_row(Var a, Var row) {
  const DenseMatrix& av = value(a);
  const DenseMatrix& rv = value(row);
  require(rv.rows() == 1 && rv.cols() == av.cols(), "add_row", av.rows(), av.cols(), rv.rows(), rv.cols());
  DenseMatrix sum = av;
  sum.rowwise() += rv.row(0);
  Var out = push(std::move(sum), requires_grad(a) || requires_grad(row));
  if (requires_grad(out)) {
    record([this, a, row, out] {
      if (!flowing(out)) return;
      const DenseMatrix g = upstream(out);
      accumulate(a, g);
      if (requires_grad(row)) accumulate(row, DenseMatrix(g.colwise().sum()));
    });
  }
  return out;
}

Var Tape::relu(Var a) {
  Var out = push(nk::relu(value(a)), requires_grad(a));
  if (requires_grad(out)) {
    record([this, a, out] {
      if (!flowing(out)) return;
      // Derivative at exactly 0 is 0.
      const DenseMatrix pass = (value(a).array() > 0.0).cast<double>().matrix();
      accumulate(a, upstream(out).cwiseProduct(pass));
    });
  }
  return out;
}

Var Tape::dropout(Var a, double rate, std::uint64_t seed) {
  if (rate == 0.0) return a;
  const DenseMatrix& av = value(a);
  DenseMatrix mask = dropout_mask(av.rows(), av.cols(), rate, seed);
  Var out = push(av.cwiseProduct(mask), requires_grad(a));
  if (requires_grad(out)) {
    record([this, a, out, mask = std::move(mask)] {
      if (!flowing(out)) return;
      accumulate(a, upstream(out).cwiseProduct(mask));
    });
  }
  return out;
}

Var Tape::gradient_reversal(Var a, double lambda) {
  Var out = push(value(a), requires_grad(a));
  if (requires_grad(out)) {
    record([this, a, lambda, out] {
      if (!flowing(out)) return;
      accumulate(a, grl_boundary(upstream(out), lambda));
    });
  }
  return out;
}

Var Tape::weighted_sum(std::span<const std::pair<Var, double>> terms) {
  double total = 0.0;
  bool rg = false;
  for (const auto& [v, w] : terms) {
    const DenseMatrix& tv = value(v);
    if (tv.rows() != 1 || tv.cols() != 1) throw DimensionError("weighted_sum: terms must be 1x1");
    total += w * tv(0, 0);
    rg = rg || requires_grad(v);
  }
  Var out = push(DenseMatrix::Constant(1, 1, total), rg);
  if (rg) {
    std::vector<std::pair<Var, double>> copy(terms.begin(), terms.end());
    record([this, copy = std::move(copy), out] {
      if (!flowing(out)) return;
      const double g = upstream(out)(0, 0);
      for (const auto& [v, w] : copy) accumulate(v, DenseMatrix::Constant(1, 1, w * g));
    });
  }
  return out;
}

Var Tape::cross_entropy(Var logits, std::span<const Index> rows, std::span<const int> targets,
                        std::span<const double> weights, double prob_floor) {
  if (rows.size() != targets.size() || rows.size() != weights.size())
    throw DimensionError("cross_entropy: rows, targets and weights differ in length");
  if (rows.empty()) throw ConfigError("cross_entropy: empty node set");
  const DenseMatrix& z = value(logits);
  const double log_floor = std::log(prob_floor);
  const double inv_n = 1.0 / static_cast<double>(rows.size());

  std::vector<Index> r(rows.begin(), rows.end());
  std::vector<int> t(targets.begin(), targets.end());
  std::vector<double> w(weights.begin(), weights.end());
  std::vector<char> clamped(r.size(), 0);
  DenseMatrix probs(static_cast<Index>(r.size()), z.cols());
  double loss = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    if (r[k] < 0 || r[k] >= z.rows()) throw IndexError("cross_entropy: row out of range");
    if (t[k] < 0 || t[k] >= z.cols()) throw IndexError("cross_entropy: target class out of range");
    const DenseMatrix lsm = log_softmax_rows(z.row(r[k]));
    double lp = lsm(0, t[k]);
    if (lp < log_floor) {
      lp = log_floor;
      clamped[k] = 1;
    }
    loss -= w[k] * lp;
    probs.row(static_cast<Index>(k)) = lsm.array().exp().matrix();
  }
  Var out = push(DenseMatrix::Constant(1, 1, loss * inv_n), requires_grad(logits));
  if (requires_grad(out)) {
    record([this, logits, out, r = std::move(r), t = std::move(t), w = std::move(w),
            clamped = std::move(clamped), probs = std::move(probs), inv_n] {
      if (!flowing(out)) return;
      const double g = upstream(out)(0, 0);
      DenseMatrix dz = DenseMatrix::Zero(value(logits).rows(), value(logits).cols());
      for (std::size_t k = 0; k < r.size(); ++k) {
        if (clamped[k]) continue;
        RowVector d = probs.row(static_cast<Index>(k));
        d(t[k]) -= 1.0;
        dz.row(r[k]) += (g * w[k] * inv_n) * d;
      }
      accumulate(logits, dz);
    });
  }
  return out;
}

Var Tape::mean_prediction_neg_entropy(Var logits, std::span<const Index> rows) {
  if (rows.empty()) throw ConfigError("mean_prediction_neg_entropy: empty node set");
  const DenseMatrix& z = value(logits);
  std::vector<Index> r(rows.begin(), rows.end());
  DenseMatrix probs(static_cast<Index>(r.size()), z.cols());
  for (std::size_t k = 0; k < r.size(); ++k) {
    if (r[k] < 0 || r[k] >= z.rows()) throw IndexError("mean_prediction_neg_entropy: row out of range");
    probs.row(static_cast<Index>(k)) = softmax_rows(z.row(r[k]));
  }
  const double inv_n = 1.0 / static_cast<double>(r.size());
  const RowVector pbar = probs.colwise().sum() * inv_n;
  double val = 0.0;
  for (Index c = 0; c < pbar.cols(); ++c)
    if (pbar(c) > 0.0) val += pbar(c) * std::log(pbar(c));
  Var out = push(DenseMatrix::Constant(1, 1, val), requires_grad(logits));
  if (requires_grad(out)) {
    record([this, logits, out, r = std::move(r), probs = std::move(probs), pbar, inv_n] {
      if (!flowing(out)) return;
      const double g = upstream(out)(0, 0);
      // d/dp_ik = (log pbar_k + 1) / n, then through the row softmax.
      RowVector a(pbar.cols());
      for (Index c = 0; c < pbar.cols(); ++c) a(c) = (std::log(std::max(pbar(c), 1e-300)) + 1.0) * inv_n;
      DenseMatrix dz = DenseMatrix::Zero(value(logits).rows(), value(logits).cols());
      for (std::size_t k = 0; k < r.size(); ++k) {
        const RowVector p = probs.row(static_cast<Index>(k));
        const double pa = p.dot(a);
        dz.row(r[k]) += g * (p.array() * (a.array() - pa)).matrix();
      }
      accumulate(logits, dz);
    });
  }
  return out;
}

Var Tape::binary_cross_entropy(Var logits, double target) {
  const DenseMatrix& x = value(logits);
  if (x.cols() != 1) throw DimensionError("binary_cross_entropy: logits must be a column");
  if (x.rows() == 0) throw ConfigError("binary_cross_entropy: empty node set");
  // -log sigma(x) = softplus(-x); -log(1 - sigma(x)) = softplus(x).
  const double sign = target > 0.5 ? -1.0 : 1.0;
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  double val = 0.0;
  for (Index i = 0; i < x.rows(); ++i) val += softplus(sign * x(i, 0));
  Var out = push(DenseMatrix::Constant(1, 1, val * inv_n), requires_grad(logits));
  if (requires_grad(out)) {
    record([this, logits, out, sign, inv_n] {
      if (!flowing(out)) return;
      const double g = upstream(out)(0, 0);
      const DenseMatrix& xv = value(logits);
      DenseMatrix dx(xv.rows(), 1);
      for (Index i = 0; i < xv.rows(); ++i) dx(i, 0) = g * inv_n * sign * sigmoid(sign * xv(i, 0));
      accumulate(logits, dx);
    });
  }
  return out;
}

void Tape::backward(Var root) {
  Node& r = node(root);
  if (r.value.rows() != 1 || r.value.cols() != 1) throw DimensionError("backward: root must be 1x1");
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
  }
  if (!r.requires_grad) return;
  r.grad = DenseMatrix::Constant(1, 1, 1.0);
  r.has_grad = true;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
}

// ---------------------------------------------------------------------------

GradCheckResult grad_check(const std::function<double()>& f, std::span<GradCheckParam> params, double step) {
  GradCheckResult result;
  const double base = f();
  if (!std::isfinite(base)) throw ValueError("grad_check: non-finite loss");
  for (GradCheckParam& p : params) {
    if (p.value == nullptr || p.analytic == nullptr) throw ConfigError("grad_check: parameter '" + p.name + "' unset");
    if (p.value->rows() != p.analytic->rows() || p.value->cols() != p.analytic->cols())
      throw DimensionError("grad_check: analytic gradient shape differs for '" + p.name + "'");
    double worst = 0.0;
    for (Index i = 0; i < p.value->rows(); ++i) {
      for (Index j = 0; j < p.value->cols(); ++j) {
        double& x = (*p.value)(i, j);
        const double saved = x;
        x = saved + step;
        const double up = f();
        x = saved - step;
        const double down = f();
        x = saved;
        if (!std::isfinite(up) || !std::isfinite(down)) throw ValueError("grad_check: non-finite loss");
        const double numeric = (up - down) / (2.0 * step);
        const double analytic = (*p.analytic)(i, j);
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        worst = std::max(worst, std::abs(analytic - numeric) / denom);
      }
    }
    result.per_param.emplace_back(p.name, worst);
    result.max_rel_error = std::max(result.max_rel_error, worst);
  }
  return result;
}

}  // namespace sgda::nk
