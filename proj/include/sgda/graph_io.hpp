#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sgda/numkernel.hpp"

namespace sgda {

// One domain: symmetric 0/1 adjacency with zero diagonal, dense attributes,
// and labels. labels[i] == -1 marks a node without a label; labeled_mask
// governs which labels training may read.
struct Graph {
  Index n_nodes = 0;
  SparseMatrix adjacency;
  DenseMatrix attributes;
  std::vector<int> labels;
  std::vector<bool> labeled_mask;

  Index n_attributes() const { return attributes.cols(); }
  bool has_labels() const { return !labels.empty(); }
  // 1 + largest label present, 0 without labels.
  int n_classes() const;
  std::vector<Index> labeled_nodes() const;
  std::vector<Index> unlabeled_nodes() const;
};

struct DomainPair {
  Graph source;
  Graph target;
  int n_classes = 0;
};

// Throws ValueError when any Graph invariant is violated.
void validate(const Graph& g);

// Builds a symmetric adjacency from an undirected edge list. Duplicates are
// collapsed and self-loops dropped.
SparseMatrix adjacency_from_edges(Index n_nodes, const std::vector<std::pair<Index, Index>>& edges);

Graph load_graph(const std::filesystem::path& edge_path, const std::filesystem::path& attr_path,
                 const std::optional<std::filesystem::path>& label_path = std::nullopt);

DenseMatrix load_attributes(const std::filesystem::path& path);
std::vector<std::pair<Index, Index>> load_edges(const std::filesystem::path& path, Index n_nodes);
std::vector<int> load_labels(const std::filesystem::path& path, Index n_nodes);
std::vector<std::string> load_attribute_names(const std::filesystem::path& path);

void write_edges(const std::filesystem::path& path, const SparseMatrix& adjacency);
void write_attributes(const std::filesystem::path& path, const DenseMatrix& attributes);
void write_labels(const std::filesystem::path& path, const std::vector<int>& labels);

// Reindexes both attribute matrices into the sorted union of the two
// vocabularies; columns a domain lacks are zero-filled.
DomainPair union_align(const Graph& source, const Graph& target,
                       const std::vector<std::string>& source_names,
                       const std::vector<std::string>& target_names);

// Marks round(rate * N) uniformly sampled nodes as labeled.
Graph split_labels(const Graph& g, double rate, std::uint64_t seed);

struct SbmBlocks {
  double p_in = 0.05;
  double p_out = 0.005;
};

struct SyntheticConfig {
  Index n_nodes = 300;  // per domain
  int n_classes = 3;
  SbmBlocks source_blocks;
  SbmBlocks target_blocks;
  Index dim = 16;
  DenseMatrix class_means;  // n_classes x dim
  double attribute_std = 1.0;
  double target_mean_offset = 0.0;  // magnitude per coordinate of the domain shift
  double target_cov_scale = 1.0;    // target std = attribute_std * scale
  std::uint64_t seed = 0;

  void validate() const;
};

// Fills class_means with well-separated block patterns: class k is
// `separation` on its own slice of coordinates and 0 elsewhere.
SyntheticConfig make_synthetic_config(Index n_nodes, int n_classes, Index dim, double separation,
                                      std::uint64_t seed);

// Balanced class sizes summing to n.
std::vector<Index> class_sizes(Index n, int n_classes);

// Two SBM graphs with shared class semantics. Target attributes are drawn
// around class_means + offset * u for a seeded random sign vector u, with
// the scaled covariance; target labels are kept for evaluation only.
DomainPair generate_pair(const SyntheticConfig& cfg);

// Offset direction used by generate_pair (entries in {-1, +1}).
RowVector shift_direction(const SyntheticConfig& cfg);

}  // namespace sgda
