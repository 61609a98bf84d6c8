#include <cmath>

#include "doctest.h"
#include "sgda/errors.hpp"
#include "sgda/ppmi.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace sgda;
using sgda::test::max_abs_diff;
using sgda::test::ppmi_oracle;
using sgda::test::propagation_oracle;
using sgda::test::TempDir;
using sgda::test::to_dense;
using sgda::test::to_sparse;

namespace {

Graph edges_graph(Index n, const std::vector<std::pair<Index, Index>>& edges) {
  Graph g;
  g.n_nodes = n;
  g.adjacency = adjacency_from_edges(n, edges);
  g.attributes = DenseMatrix::Zero(n, 1);
  return g;
}

// Counts by enumerating every ordered position pair.
DenseMatrix cooccurrence_oracle(const std::vector<Walk>& walks, Index window, Index n) {
  DenseMatrix f = DenseMatrix::Zero(n, n);
  for (const Walk& w : walks)
    for (std::size_t p = 0; p < w.size(); ++p)
      for (std::size_t q = 0; q < w.size(); ++q)
        if (p != q && std::abs(static_cast<long>(p) - static_cast<long>(q)) <= window) f(w[p], w[q]) += 1;
  return f;
}

double spectral_radius(const DenseMatrix& s) {
  Rng rng(3);
  Eigen::VectorXd v(s.rows());
  for (Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(0.1, 1.0);
  double lambda = 0.0;
  for (int it = 0; it < 2000; ++it) {
    Eigen::VectorXd w = s * v;
    lambda = w.norm() / v.norm();
    v = w / w.norm();
  }
  return lambda;
}

}  // namespace

TEST_CASE("walk config validation") {
  WalkConfig c;
  CHECK_NOTHROW(c.validate());
  c.window = c.walk_length;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = WalkConfig{};
  c.walk_length = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = WalkConfig{};
  c.walks_per_node = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("walks on a single edge alternate") {
  WalkConfig c{3, 4, 1, 7, true};
  const auto walks = sample_walks(edges_graph(2, {{0, 1}}), c);
  CHECK(walks.size() == 6);
  CHECK(walks[0] == Walk{0, 1, 0, 1});
  CHECK(walks[5] == Walk{1, 0, 1, 0});
}

TEST_CASE("isolated nodes give length-one walks") {
  WalkConfig c{2, 5, 2, 1, true};
  const auto walks = sample_walks(edges_graph(3, {{0, 1}}), c);
  CHECK(walks[4] == Walk{2});
  CHECK(walks[5] == Walk{2});
}

TEST_CASE("triangle walks replay from their per-walk streams") {
  const Graph g = edges_graph(3, {{0, 1}, {1, 2}, {0, 2}});
  WalkConfig c{2, 3, 1, 3, true};
  const auto walks = sample_walks(g, c);
  REQUIRE(walks.size() == 6);
  // Independent replay: neighbor lists in ascending id order, one stream per
  // (node, walk index).
  const std::vector<std::vector<Index>> nbr = {{1, 2}, {0, 2}, {0, 1}};
  std::size_t k = 0;
  for (Index start = 0; start < 3; ++start)
    for (Index w = 0; w < 2; ++w, ++k) {
      Rng rng(walk_seed(3, start, w));
      Walk expect{start};
      while (expect.size() < 3) expect.push_back(nbr[expect.back()][rng.below(2)]);
      CHECK(walks[k] == expect);
    }
  CHECK(sample_walks(g, c) == walks);
}

TEST_CASE("co-occurrence hand cases") {
  DenseMatrix f = to_dense(cooccurrence({{0, 1}}, 1, 2));
  CHECK(f(0, 1) == 1.0);
  CHECK(f(1, 0) == 1.0);
  CHECK(f.diagonal().isZero(0.0));

  f = to_dense(cooccurrence({{0, 1, 0}}, 1, 2));
  CHECK(f(0, 1) == 2.0);
  CHECK(f(1, 0) == 2.0);
  CHECK(f(0, 0) == 0.0);

  f = to_dense(cooccurrence({{0, 1, 0}}, 2, 2));
  CHECK(f(0, 1) == 2.0);
  CHECK(f(1, 0) == 2.0);
  CHECK(f(0, 0) == 2.0);

  f = to_dense(cooccurrence({{0, 1, 0}}, 2, 2, false));
  CHECK(f(0, 0) == 0.0);
}

TEST_CASE("co-occurrence matches position-pair enumeration and is symmetric") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Graph g = sgda::test::random_graph(9, 0.35, 1, 2, seed);
    const auto walks = sample_walks(g, WalkConfig{3, 7, 3, seed, true});
    const DenseMatrix f = to_dense(cooccurrence(walks, 3, 9));
    CHECK(f == cooccurrence_oracle(walks, 3, 9));
    CHECK(f == f.transpose());
  }
}

TEST_CASE("ppmi hand cases") {
  DenseMatrix f(2, 2);
  f << 0, 3, 3, 0;
  DenseMatrix p = to_dense(ppmi(to_sparse(f)));
  CHECK(p(0, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(p(1, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  f << 0, 1, 0, 0;
  CHECK(to_dense(ppmi(to_sparse(f))).isZero(0.0));

  // Uniform counts over all pairs: joint equals product of marginals.
  CHECK(to_dense(ppmi(to_sparse(DenseMatrix::Constant(4, 4, 2.0)))).isZero(1e-15));

  CHECK_THROWS_AS(ppmi(SparseMatrix(3, 3)), DegenerateInputError);
}

TEST_CASE("ppmi and propagation match the scalar oracles on walk counts") {
  for (std::uint64_t seed = 11; seed < 16; ++seed) {
    const Index n = 4 + static_cast<Index>(seed % 7);
    const Graph g = sgda::test::random_graph(n, 0.4, 1, 2, seed);
    const SparseMatrix f = cooccurrence(sample_walks(g, WalkConfig{4, 8, 2, seed, true}), 2, n);
    const SparseMatrix p = ppmi(f);
    CHECK(max_abs_diff(to_dense(p), ppmi_oracle(to_dense(f))) <= 1e-12);
    for (Index k = 0; k < p.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(p, k); it; ++it) CHECK(it.value() > 0.0);
    CHECK(max_abs_diff(to_dense(propagation(p)), propagation_oracle(to_dense(p))) <= 1e-12);
  }
}

TEST_CASE("propagation hand cases") {
  CHECK(to_dense(propagation(SparseMatrix(3, 3))) == DenseMatrix::Identity(3, 3));
  DenseMatrix p(2, 2);
  p << 0, 1, 1, 0;
  CHECK(max_abs_diff(to_dense(propagation(to_sparse(p))), DenseMatrix::Constant(2, 2, 0.5)) < 1e-15);
}

TEST_CASE("propagation is symmetric with spectral radius at most one") {
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    DenseMatrix p = sgda::test::random_matrix(7, 7, rng, 0.0, 2.0);
    for (Index i = 0; i < 7; ++i)
      for (Index j = 0; j < 7; ++j)
        if (rng.uniform() < 0.5) p(i, j) = 0.0;
    p = (p + p.transpose()).eval();
    const DenseMatrix s = to_dense(propagation(to_sparse(p)));
    CHECK(max_abs_diff(s, s.transpose()) < 1e-15);
    CHECK(spectral_radius(s) <= 1.0 + 1e-9);
  }
}

TEST_CASE("reconstruct without PPMI is GCN normalization") {
  const PpmiMatrix m = reconstruct(edges_graph(2, {{0, 1}}), WalkConfig{}, false);
  CHECK(max_abs_diff(to_dense(m.s), DenseMatrix::Constant(2, 2, 0.5)) < 1e-15);
  CHECK(to_dense(m.p) == to_dense(adjacency_from_edges(2, {{0, 1}})));
}

TEST_CASE("reconstruct is deterministic and reaches beyond one hop") {
  SyntheticConfig sc = make_synthetic_config(20, 2, 2, 1.0, 5);
  sc.source_blocks = {0.3, 0.05};
  const Graph g = generate_pair(sc).source;
  WalkConfig c{10, 20, 3, 8, true};
  const PpmiMatrix a = reconstruct(g, c, true), b = reconstruct(g, c, true);
  CHECK(to_dense(a.p) == to_dense(b.p));
  CHECK(to_dense(a.s) == to_dense(b.s));

  const DenseMatrix adj = to_dense(g.adjacency);
  const DenseMatrix two_hop = adj * adj;
  const DenseMatrix p = to_dense(a.p);
  int beyond_one_hop = 0, on_two_hop = 0;
  for (Index i = 0; i < 20; ++i)
    for (Index j = 0; j < 20; ++j)
      if (i != j && p(i, j) > 0 && adj(i, j) == 0) {
        ++beyond_one_hop;
        if (two_hop(i, j) > 0) ++on_two_hop;
      }
  CHECK(beyond_one_hop > 0);
  CHECK(on_two_hop > 0);
}

TEST_CASE("coordinate files round-trip exactly") {
  TempDir dir;
  const Graph g = sgda::test::random_graph(12, 0.4, 1, 2, 17);
  const SparseMatrix p = reconstruct(g, WalkConfig{5, 10, 3, 1, true}, true).p;
  save_coo(dir / "p.coo", p);
  const SparseMatrix back = load_coo(dir / "p.coo");
  CHECK(to_dense(back) == to_dense(p));
  save_coo(dir / "q.coo", back);
  CHECK(sgda::test::read_file(dir / "p.coo") == sgda::test::read_file(dir / "q.coo"));
}
