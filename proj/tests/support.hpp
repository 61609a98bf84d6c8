#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>

#include "sgda/graph_io.hpp"
#include "sgda/numkernel.hpp"
#include "sgda/random.hpp"

namespace sgda::test {

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "sgda") {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline DenseMatrix random_matrix(Index r, Index c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  DenseMatrix m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

inline SparseMatrix to_sparse(const DenseMatrix& d) {
  std::vector<Triplet> t;
  for (Index i = 0; i < d.rows(); ++i)
    for (Index j = 0; j < d.cols(); ++j)
      if (d(i, j) != 0.0) t.emplace_back(i, j, d(i, j));
  SparseMatrix s(d.rows(), d.cols());
  s.setFromTriplets(t.begin(), t.end());
  s.makeCompressed();
  return s;
}

inline DenseMatrix to_dense(const SparseMatrix& s) { return DenseMatrix(s); }

// Erdos-Renyi graph with random attributes and labels.
inline Graph random_graph(Index n, double p, Index d, int n_classes, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::pair<Index, Index>> edges;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      if (rng.bernoulli(p)) edges.emplace_back(i, j);
  Graph g;
  g.n_nodes = n;
  g.adjacency = adjacency_from_edges(n, edges);
  g.attributes = random_matrix(n, d, rng);
  g.labels.resize(n);
  for (Index i = 0; i < n; ++i) g.labels[i] = static_cast<int>(rng.below(n_classes));
  g.labeled_mask.assign(n, false);
  return g;
}

inline double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace sgda::test
