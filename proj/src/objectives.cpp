#include "sgda/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "sgda/errors.hpp"

namespace sgda {

double supervised_loss(const DenseMatrix& probs, std::span<const int> labels, const std::vector<bool>& mask) {
  if (labels.size() != static_cast<std::size_t>(probs.rows()) || mask.size() != labels.size())
    throw DimensionError("supervised_loss: labels and mask must cover every row");
  double sum = 0.0;
  std::size_t n = 0;
  for (Index i = 0; i < probs.rows(); ++i) {
    if (!mask[i]) continue;
    const int y = labels[i];
    if (y < 0 || y >= probs.cols()) throw ConfigError("supervised_loss: masked node without a valid label");
    sum -= std::log(std::max(probs(i, y), kProbFloor));
    ++n;
  }
  if (n == 0) throw ConfigError("supervised_loss: empty mask");
  return sum / static_cast<double>(n);
}

double adversarial_loss(const DenseMatrix& d_source, const DenseMatrix& d_target) {
  if (d_source.size() == 0 || d_target.size() == 0) throw ConfigError("adversarial_loss: empty domain");
  double s = 0.0, t = 0.0;
  for (Index i = 0; i < d_source.size(); ++i) s -= std::log(std::max(d_source(i), kProbFloor));
  for (Index i = 0; i < d_target.size(); ++i) t -= std::log(std::max(1.0 - d_target(i), kProbFloor));
  return s / static_cast<double>(d_source.size()) + t / static_cast<double>(d_target.size());
}

double adversarial_loss_from_logits(const DenseMatrix& x_source, const DenseMatrix& x_target) {
  if (x_source.size() == 0 || x_target.size() == 0) throw ConfigError("adversarial_loss: empty domain");
  double s = 0.0, t = 0.0;
  for (Index i = 0; i < x_source.size(); ++i) s += nk::softplus(-x_source(i));
  for (Index i = 0; i < x_target.size(); ++i) t += nk::softplus(x_target(i));
  return s / static_cast<double>(x_source.size()) + t / static_cast<double>(x_target.size());
}

std::vector<int> make_pseudo_labels(const DenseMatrix& probs) {
  std::vector<int> out(probs.rows(), 0);
  for (Index i = 0; i < probs.rows(); ++i) {
    int best = 0;
    for (Index k = 1; k < probs.cols(); ++k)
      if (probs(i, k) > probs(i, best)) best = static_cast<int>(k);
    out[i] = best;
  }
  return out;
}

DenseMatrix class_aggregates(const SparseMatrix& p, std::span<const Index> members, std::span<const int> member_labels,
                             int n_classes) {
  if (members.size() != member_labels.size()) throw DimensionError("class_aggregates: members and labels differ");
  DenseMatrix agg = DenseMatrix::Zero(n_classes, p.cols());
  std::vector<double> count(n_classes, 0.0);
  for (std::size_t m = 0; m < members.size(); ++m) {
    const int k = member_labels[m];
    if (k < 0 || k >= n_classes) throw IndexError("class_aggregates: label out of range");
    ++count[k];
    for (SparseMatrix::InnerIterator it(p, members[m]); it; ++it) agg(k, it.col()) += it.value();
  }
  for (int k = 0; k < n_classes; ++k)
    if (count[k] > 0) agg.row(k) /= count[k];
  return agg;
}

std::vector<double> posterior_scores(const SparseMatrix& p, const DenseMatrix& aggregates, std::span<const Index> nodes,
                                     std::span<const int> pseudo_labels) {
  const auto c = static_cast<int>(aggregates.rows());
  if (c < 2) throw ConfigError("posterior_scores: at least two classes required");
  if (nodes.size() != pseudo_labels.size()) throw DimensionError("posterior_scores: nodes and labels differ");
  if (aggregates.cols() != p.cols()) throw DimensionError("posterior_scores: aggregate width differs from P");
  std::vector<double> w(nodes.size());
  RowVector affinity(c);
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    // affinity_k = sum_j P_ij A[k, j]
    affinity.setZero();
    for (SparseMatrix::InnerIterator it(p, nodes[n]); it; ++it) affinity += it.value() * aggregates.col(it.col()).transpose();
    const int y = pseudo_labels[n];
    if (y < 0 || y >= c) throw IndexError("posterior_scores: pseudo-label out of range");
    const double own = affinity(y);
    w[n] = own - (affinity.sum() - own) / static_cast<double>(c - 1);
  }
  return w;
}

std::vector<double> posterior_scores(const SparseMatrix& p, std::span<const int> pseudo_labels,
                                     std::span<const Index> nodes, int n_classes) {
  if (n_classes < 2) throw ConfigError("posterior_scores: at least two classes required");
  return posterior_scores(p, class_aggregates(p, nodes, pseudo_labels, n_classes), nodes, pseudo_labels);
}

std::vector<double> anneal_weights(std::span<const double> scores, double alpha, double beta) {
  if (scores.empty()) throw ConfigError("anneal_weights: empty node set");
  if (alpha > beta) throw ConfigError("anneal_weights: alpha must not exceed beta");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<double> w(scores.size());
  const auto n = static_cast<double>(scores.size());
  for (std::size_t rank = 0; rank < order.size(); ++rank)
    w[order[rank]] = alpha + 0.5 * (beta - alpha) * (1.0 + std::cos(static_cast<double>(rank) / n * std::numbers::pi));
  return w;
}

PseudoLabelLoss pseudo_label_loss(const DenseMatrix& probs, std::span<const int> pseudo_labels,
                                  std::span<const double> weights, std::span<const Index> nodes) {
  if (nodes.size() != pseudo_labels.size() || nodes.size() != weights.size())
    throw DimensionError("pseudo_label_loss: nodes, labels and weights differ");
  if (nodes.empty()) throw ConfigError("pseudo_label_loss: empty node set");
  PseudoLabelLoss out;
  RowVector pbar = RowVector::Zero(probs.cols());
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    out.cross_entropy -= weights[n] * std::log(std::max(probs(nodes[n], pseudo_labels[n]), kProbFloor));
    pbar += probs.row(nodes[n]);
  }
  const auto size = static_cast<double>(nodes.size());
  out.cross_entropy /= size;
  pbar /= size;
  for (Index k = 0; k < pbar.cols(); ++k)
    if (pbar(k) > 0) out.diversity += pbar(k) * std::log(pbar(k));
  return out;
}

PseudoState refresh_pseudo_state(const SparseMatrix& p, const DenseMatrix& probs, std::span<const Index> nodes,
                                 std::span<const Index> anchors, std::span<const int> anchor_labels, int n_classes,
                                 double alpha, double beta) {
  PseudoState st;
  st.nodes.assign(nodes.begin(), nodes.end());
  st.labels.resize(nodes.size());
  const std::vector<int> all = make_pseudo_labels(probs);
  for (std::size_t n = 0; n < nodes.size(); ++n) st.labels[n] = all[nodes[n]];

  std::vector<Index> members(anchors.begin(), anchors.end());
  std::vector<int> member_labels(anchor_labels.begin(), anchor_labels.end());
  members.insert(members.end(), st.nodes.begin(), st.nodes.end());
  member_labels.insert(member_labels.end(), st.labels.begin(), st.labels.end());
  st.class_aggregates = class_aggregates(p, members, member_labels, n_classes);
  if (st.nodes.empty()) return st;
  st.scores = posterior_scores(p, st.class_aggregates, st.nodes, st.labels);
  st.weights = anneal_weights(st.scores, alpha, beta);
  return st;
}

nk::Var supervised_loss(nk::Tape& tape, nk::Var logits, std::span<const Index> rows, std::span<const int> labels) {
  if (rows.empty()) throw ConfigError("supervised_loss: empty mask");
  const std::vector<double> ones(rows.size(), 1.0);
  return tape.cross_entropy(logits, rows, labels, ones, kProbFloor);
}

std::pair<nk::Var, nk::Var> pseudo_label_loss(nk::Tape& tape, nk::Var logits, const PseudoState& state) {
  const nk::Var ce = tape.cross_entropy(logits, state.nodes, state.labels, state.weights, kProbFloor);
  const nk::Var div = tape.mean_prediction_neg_entropy(logits, state.nodes);
  return {ce, div};
}

nk::Var adversarial_loss(nk::Tape& tape, nk::Var source_logits, nk::Var target_logits) {
  const nk::Var s = tape.binary_cross_entropy(source_logits, 1.0);
  const nk::Var t = tape.binary_cross_entropy(target_logits, 0.0);
  const std::pair<nk::Var, double> terms[] = {{s, 1.0}, {t, 1.0}};
  return tape.weighted_sum(terms);
}

}  // namespace sgda
