#pragma once

// Dense/sparse kernels and the reverse-mode tape used by the SGDA network.
//
// Storage is Eigen (row-major, 64-bit). The tape records only the operations
// the fixed SGDA graph needs; each record owns the closure that propagates its
// output gradient back to its inputs.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sgda {

using Index = std::ptrdiff_t;
using DenseMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor, Index>;
using Triplet = Eigen::Triplet<double, Index>;

namespace nk {

DenseMatrix spmm(const SparseMatrix& s, const DenseMatrix& h);

// h * w (+ bias broadcast over rows).
DenseMatrix linear(const DenseMatrix& h, const DenseMatrix& w,
                   const std::optional<RowVector>& bias = std::nullopt);

DenseMatrix relu(const DenseMatrix& h);
double sigmoid(double x);
// log(1 + exp(x)) without overflow.
double softplus(double x);
DenseMatrix softmax_rows(const DenseMatrix& logits);
DenseMatrix log_softmax_rows(const DenseMatrix& logits);

// Inverted-dropout keep mask: entries are 0 or 1/(1 - rate).
DenseMatrix dropout_mask(Index rows, Index cols, double rate, std::uint64_t seed);
DenseMatrix dropout(const DenseMatrix& h, double rate, bool train, std::uint64_t seed);

// Backward rule of the gradient reversal layer: -lambda * upstream.
DenseMatrix grl_boundary(const DenseMatrix& upstream_grad, double lambda);

double frobenius(const DenseMatrix& m);
bool all_finite(const DenseMatrix& m);

// ---------------------------------------------------------------------------
// Tape

struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
  bool valid() const { return id != std::numeric_limits<std::size_t>::max(); }
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(DenseMatrix value);
  Var parameter(DenseMatrix value);

  // Sparse operand is referenced, not copied; it must outlive backward().
  Var spmm(const SparseMatrix& s, Var h);
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var add_row(Var a, Var row);
  Var relu(Var a);
  Var dropout(Var a, double rate, std::uint64_t seed);
  Var gradient_reversal(Var a, double lambda);
  // Sum of weighted 1x1 values.
  Var weighted_sum(std::span<const std::pair<Var, double>> terms);

  // -(1/|rows|) * sum_r weight_r * log softmax(logits)[rows_r, targets_r],
  // log-probabilities floored at log(prob_floor).
  Var cross_entropy(Var logits, std::span<const Index> rows, std::span<const int> targets,
                    std::span<const double> weights, double prob_floor = 1e-12);
  // sum_k pbar_k log pbar_k with pbar the mean softmax row over `rows`.
  Var mean_prediction_neg_entropy(Var logits, std::span<const Index> rows);
  // Mean binary cross-entropy of sigmoid(logit) against a constant target in {0,1}.
  Var binary_cross_entropy(Var logits, double target);

  void backward(Var root);

  const DenseMatrix& value(Var v) const;
  // Gradient of the last backward() root w.r.t. v; zero-filled when none flowed.
  DenseMatrix grad(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  std::size_t records() const { return records_.size(); }

 private:
  struct Node {
    DenseMatrix value;
    DenseMatrix grad;
    bool requires_grad = false;
    bool has_grad = false;
  };

  Var push(DenseMatrix value, bool requires_grad);
  void record(std::function<void()> back) { records_.push_back(std::move(back)); }
  // Adds `g` into the gradient slot of v (no-op when v does not require grad).
  void accumulate(Var v, const DenseMatrix& g);
  const DenseMatrix& upstream(Var v) const { return nodes_[v.id].grad; }
  bool flowing(Var v) const { return nodes_[v.id].has_grad; }
  Node& node(Var v);
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
  std::vector<std::function<void()>> records_;
};

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct GradCheckParam {
  std::string name;
  DenseMatrix* value = nullptr;       // perturbed in place, restored afterwards
  const DenseMatrix* analytic = nullptr;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::vector<std::pair<std::string, double>> per_param;
};

// Central differences on every entry of every parameter; relative error is
// |a - n| / max(|a|, |n|, 1e-8). Throws ValueError on a non-finite loss.
GradCheckResult grad_check(const std::function<double()>& f, std::span<GradCheckParam> params,
                           double step);

}  // namespace nk
}  // namespace sgda
