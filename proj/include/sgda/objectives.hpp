#pragma once

#include <span>
#include <vector>

#include "sgda/numkernel.hpp"

namespace sgda {

inline constexpr double kProbFloor = 1e-12;

// Pseudo-labeling state of one domain's unlabeled node set. Refreshed once per
// epoch and treated as constant while gradients flow.
struct PseudoState {
  std::vector<Index> nodes;      // unlabeled nodes the loss runs over
  std::vector<int> labels;       // argmax pseudo-label per entry of `nodes`
  std::vector<double> scores;    // posterior score w_i
  std::vector<double> weights;   // annealed weight in [alpha, beta]
  DenseMatrix class_aggregates;  // C x N, row k = mean P row over cluster k
};

struct LossReport {
  double sup = 0.0;
  double at = 0.0;
  double pl_source = 0.0;
  double pl_target = 0.0;
  double diversity_source = 0.0;
  double diversity_target = 0.0;
  double pl = 0.0;
  double total = 0.0;
};

// ---- value-level losses on probabilities

// Mean over masked nodes of -log p[i, y_i], p floored at kProbFloor.
double supervised_loss(const DenseMatrix& probs, std::span<const int> labels, const std::vector<bool>& mask);

// -mean log d_s - mean log(1 - d_t), inputs are discriminator probabilities.
double adversarial_loss(const DenseMatrix& d_source, const DenseMatrix& d_target);

// Same loss from logits, using log sigma(x) = -softplus(-x).
double adversarial_loss_from_logits(const DenseMatrix& x_source, const DenseMatrix& x_target);

std::vector<int> make_pseudo_labels(const DenseMatrix& probs);

// Rows of P averaged over each cluster; empty clusters give a zero row.
DenseMatrix class_aggregates(const SparseMatrix& p, std::span<const Index> members, std::span<const int> member_labels,
                             int n_classes);

// w_i = sum_j P_ij A[y_i, j] - 1/(C-1) sum_{k != y_i} sum_j P_ij A[k, j].
std::vector<double> posterior_scores(const SparseMatrix& p, const DenseMatrix& aggregates,
                                     std::span<const Index> nodes, std::span<const int> pseudo_labels);

// Convenience form: clusters are formed over `nodes` themselves.
std::vector<double> posterior_scores(const SparseMatrix& p, std::span<const int> pseudo_labels,
                                     std::span<const Index> nodes, int n_classes);

// alpha + (beta - alpha)/2 * (1 + cos(pi * rank / |V|)), rank 0 = largest
// score, ties broken by position.
std::vector<double> anneal_weights(std::span<const double> scores, double alpha, double beta);

struct PseudoLabelLoss {
  double cross_entropy = 0.0;
  double diversity = 0.0;
  double total() const { return cross_entropy + diversity; }
};

// Weighted pseudo-label CE plus sum_k pbar_k log pbar_k over `nodes`.
PseudoLabelLoss pseudo_label_loss(const DenseMatrix& probs, std::span<const int> pseudo_labels,
                                  std::span<const double> weights, std::span<const Index> nodes);

// Builds the state for one domain. `anchors`/`anchor_labels` join the
// clusters with fixed labels (labeled source nodes) but receive no score.
PseudoState refresh_pseudo_state(const SparseMatrix& p, const DenseMatrix& probs, std::span<const Index> nodes,
                                 std::span<const Index> anchors, std::span<const int> anchor_labels, int n_classes,
                                 double alpha, double beta);

// ---- tape-level losses on logits

nk::Var supervised_loss(nk::Tape& tape, nk::Var logits, std::span<const Index> rows, std::span<const int> labels);

// Returns {cross-entropy term, diversity term}; both are 1x1 vars.
std::pair<nk::Var, nk::Var> pseudo_label_loss(nk::Tape& tape, nk::Var logits, const PseudoState& state);

nk::Var adversarial_loss(nk::Tape& tape, nk::Var source_logits, nk::Var target_logits);

}  // namespace sgda
