#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "sgda/graph_io.hpp"
#include "sgda/numkernel.hpp"

namespace sgda {

struct WalkConfig {
  Index walks_per_node = 10;
  Index walk_length = 40;  // nodes per walk, start included
  Index window = 5;
  std::uint64_t seed = 0;
  bool count_self = true;  // count a node co-occurring with itself

  void validate() const;
};

using Walk = std::vector<Index>;

// Reconstructed topology P and its propagation form D^-1/2 (P + I) D^-1/2.
struct PpmiMatrix {
  SparseMatrix p;
  SparseMatrix s;
};

// RNG stream of walk `w` started at `node`. Each walk draws from its own
// stream, so the walk set does not depend on traversal order.
std::uint64_t walk_seed(std::uint64_t seed, Index node, Index w);

// walks_per_node uniform random walks from every node, node-major order.
std::vector<Walk> sample_walks(const Graph& g, const WalkConfig& cfg);

// F_ij counts ordered position pairs (p, q), p != q, |p - q| <= window, with
// walk[p] = i and walk[q] = j.
SparseMatrix cooccurrence(const std::vector<Walk>& walks, Index window, Index n_nodes, bool count_self = true);

// P_ij = max(log(P(i,j) / (P(i) P(j))), 0) over stored entries of F.
SparseMatrix ppmi(const SparseMatrix& f);

SparseMatrix propagation(const SparseMatrix& p);

PpmiMatrix reconstruct(const Graph& g, const WalkConfig& cfg, bool use_ppmi);

// Sparse coordinate text: "N" then one "row col value" line per stored entry.
// Values use %.17g so that doubles round-trip exactly.
void save_coo(const std::filesystem::path& path, const SparseMatrix& m);
SparseMatrix load_coo(const std::filesystem::path& path);

}  // namespace sgda
