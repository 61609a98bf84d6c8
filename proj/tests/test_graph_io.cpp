#include <cmath>
#include <set>

#include "doctest.h"
#include "sgda/errors.hpp"
#include "sgda/graph_io.hpp"
#include "support.hpp"

using namespace sgda;
using sgda::test::read_file;
using sgda::test::TempDir;
using sgda::test::to_dense;
using sgda::test::write_file;

namespace {

Graph small_graph(const TempDir& dir, const std::string& edges, const std::string& attrs,
                  const std::string& labels = "") {
  write_file(dir / "g.edges", edges);
  write_file(dir / "g.attr", attrs);
  std::optional<std::filesystem::path> lp;
  if (!labels.empty()) {
    write_file(dir / "g.labels", labels);
    lp = dir / "g.labels";
  }
  return load_graph(dir / "g.edges", dir / "g.attr", lp);
}

void check_symmetric_zero_diagonal(const Graph& g) {
  const DenseMatrix a = to_dense(g.adjacency);
  CHECK(a == a.transpose());
  CHECK(a.diagonal().isZero(0.0));
}

// Per-class attribute means over [begin, end) rows that carry class k.
DenseMatrix class_means(const Graph& g, int n_classes) {
  DenseMatrix m = DenseMatrix::Zero(n_classes, g.n_attributes());
  std::vector<double> count(n_classes, 0.0);
  for (Index i = 0; i < g.n_nodes; ++i) {
    m.row(g.labels[i]) += g.attributes.row(i);
    ++count[g.labels[i]];
  }
  for (int k = 0; k < n_classes; ++k) m.row(k) /= count[k];
  return m;
}

}  // namespace

TEST_CASE("single edge is symmetrized") {
  TempDir dir;
  const Graph g = small_graph(dir, "0 1\n", "2 1\n1.0\n2.0\n");
  CHECK(g.n_nodes == 2);
  DenseMatrix expected(2, 2);
  expected << 0, 1, 1, 0;
  CHECK(to_dense(g.adjacency) == expected);
  CHECK(g.attributes(1, 0) == 2.0);
  CHECK_FALSE(g.has_labels());
}

TEST_CASE("duplicate and reversed edges collapse, self-loops drop") {
  TempDir dir;
  const Graph a = small_graph(dir, "0 1\n", "2 1\n1\n2\n");
  const Graph b = small_graph(dir, "0 1\n1 0\n0 1\n1 1\n", "2 1\n1\n2\n");
  CHECK(to_dense(a.adjacency) == to_dense(b.adjacency));
  check_symmetric_zero_diagonal(b);
}

TEST_CASE("out-of-range node id is an index error") {
  TempDir dir;
  CHECK_THROWS_AS(small_graph(dir, "0 5\n", "3 1\n1\n2\n3\n"), IndexError);
}

TEST_CASE("malformed lines report their line number") {
  TempDir dir;
  try {
    small_graph(dir, "0 1\n# comment\n1 x\n", "3 1\n1\n2\n3\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  try {
    small_graph(dir, "0 1\n", "3 2\n1 2\n3\n4 5\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("non-finite attributes are rejected") {
  TempDir dir;
  CHECK_THROWS_AS(small_graph(dir, "0 1\n", "2 1\n1.0\nnan\n"), ValueError);
  CHECK_THROWS_AS(small_graph(dir, "0 1\n", "2 1\n1.0\ninf\n"), ValueError);
}

TEST_CASE("sparse and comma-separated attribute files") {
  TempDir dir;
  const Graph s = small_graph(dir, "0 1\n1 2\n", "sparse 3 4\n0 1 0.5\n2 3 -1.25\n");
  CHECK(s.n_attributes() == 4);
  CHECK(s.attributes(0, 1) == 0.5);
  CHECK(s.attributes(2, 3) == -1.25);
  CHECK(s.attributes(1, 0) == 0.0);
  const Graph c = small_graph(dir, "0 1\n", "2 2\n1.5,2\n3, 4\n");
  CHECK(c.attributes(1, 1) == 4.0);
  CHECK_THROWS_AS(small_graph(dir, "0 1\n", "sparse 2 2\n0 7 1.0\n"), IndexError);
}

TEST_CASE("labels attach where present") {
  TempDir dir;
  const Graph g = small_graph(dir, "0 1\n1 2\n", "3 1\n1\n2\n3\n", "0 1\n2 0\n");
  CHECK(g.labels == std::vector<int>{1, -1, 0});
  CHECK(g.n_classes() == 2);
  CHECK(g.labeled_nodes() == std::vector<Index>{0, 2});
  CHECK(g.unlabeled_nodes() == std::vector<Index>{1});
}

TEST_CASE("edge, attribute and label files round-trip") {
  TempDir dir;
  const Graph g = sgda::test::random_graph(15, 0.3, 4, 3, 5);
  write_edges(dir / "x.edges", g.adjacency);
  write_attributes(dir / "x.attr", g.attributes);
  write_labels(dir / "x.labels", g.labels);
  const Graph back = load_graph(dir / "x.edges", dir / "x.attr", dir / "x.labels");
  CHECK(to_dense(back.adjacency) == to_dense(g.adjacency));
  CHECK(back.attributes == g.attributes);
  CHECK(back.labels == g.labels);
}

TEST_CASE("union alignment") {
  Graph s, t;
  s.n_nodes = 2;
  s.adjacency = adjacency_from_edges(2, {{0, 1}});
  s.attributes.resize(2, 2);
  s.attributes << 1, 2, 3, 4;
  t.n_nodes = 3;
  t.adjacency = adjacency_from_edges(3, {{0, 2}});
  t.attributes.resize(3, 2);
  t.attributes << 5, 6, 7, 8, 9, 10;

  const DomainPair p = union_align(s, t, {"a", "b"}, {"b", "c"});
  CHECK(p.source.n_attributes() == 3);
  CHECK(p.target.n_attributes() == 3);
  CHECK(p.source.attributes.col(2).isZero(0.0));
  CHECK(p.target.attributes.col(0).isZero(0.0));
  CHECK(p.source.attributes(1, 1) == 4.0);
  CHECK(p.target.attributes(2, 1) == 9.0);
  CHECK(union_align(t, s, {"b", "c"}, {"a", "b"}).source.n_attributes() == 3);

  const DomainPair same = union_align(s, s, {"z", "y"}, {"z", "y"});
  CHECK(same.source.attributes.col(0) == s.attributes.col(1));
  CHECK(same.source.attributes.col(1) == s.attributes.col(0));

  CHECK_THROWS_AS(union_align(s, t, {"a", "a"}, {"b", "c"}), ConfigError);
  CHECK_THROWS_AS(union_align(s, t, {"a"}, {"b", "c"}), ConfigError);
}

TEST_CASE("label splits") {
  Graph g = sgda::test::random_graph(100, 0.05, 2, 3, 9);
  const Graph a = split_labels(g, 0.05, 11);
  CHECK(a.labeled_nodes().size() == 5);
  CHECK(a.labels == g.labels);
  CHECK(split_labels(g, 1.0, 11).labeled_nodes().size() == 100);
  CHECK(split_labels(g, 0.05, 11).labeled_mask == a.labeled_mask);
  CHECK(split_labels(g, 0.05, 12).labeled_mask != a.labeled_mask);
  CHECK_THROWS_AS(split_labels(g, 0.004, 11), ConfigError);
  CHECK_THROWS_AS(split_labels(g, 0.0, 11), ConfigError);
  g.labels[3] = -1;
  CHECK_THROWS_AS(split_labels(g, 0.5, 11), ConfigError);
}

TEST_CASE("SBM corner case gives disjoint cliques") {
  SyntheticConfig cfg = make_synthetic_config(4, 2, 4, 1.0, 3);
  cfg.source_blocks = {1.0, 0.0};
  cfg.target_blocks = {1.0, 0.0};
  const DomainPair p = generate_pair(cfg);
  DenseMatrix expected(4, 4);
  expected << 0, 1, 0, 0, 1, 0, 0, 0, 0, 0, 0, 1, 0, 0, 1, 0;
  CHECK(to_dense(p.source.adjacency) == expected);
  CHECK(to_dense(p.target.adjacency) == expected);
  CHECK(p.source.labels == std::vector<int>{0, 0, 1, 1});
  CHECK(p.n_classes == 2);
}

TEST_CASE("generated graphs satisfy the graph invariants") {
  SyntheticConfig cfg = make_synthetic_config(120, 3, 9, 1.0, 4);
  cfg.target_blocks = {0.2, 0.02};
  const DomainPair p = generate_pair(cfg);
  check_symmetric_zero_diagonal(p.source);
  check_symmetric_zero_diagonal(p.target);
  CHECK_NOTHROW(validate(p.source));
  CHECK_NOTHROW(validate(p.target));
  CHECK(p.target.labeled_nodes().empty());
  CHECK(p.target.adjacency.nonZeros() > p.source.adjacency.nonZeros());
  const auto sizes = class_sizes(100, 3);
  CHECK(sizes == std::vector<Index>{34, 33, 33});
}

TEST_CASE("zero shift leaves per-class means within sampling error") {
  for (std::uint64_t seed : {1, 2, 3}) {
    SyntheticConfig cfg = make_synthetic_config(600, 3, 6, 1.0, seed);
    const DomainPair p = generate_pair(cfg);
    const DenseMatrix ms = class_means(p.source, 3), mt = class_means(p.target, 3);
    const auto sizes = class_sizes(600, 3);
    for (int k = 0; k < 3; ++k) {
      const double se = cfg.attribute_std * std::sqrt(2.0 / static_cast<double>(sizes[k]));
      for (Index j = 0; j < 6; ++j) CHECK(std::abs(ms(k, j) - mt(k, j)) <= 4 * se);
    }
  }
}

TEST_CASE("mean offset moves per-class means by offset times sqrt(d)") {
  SyntheticConfig cfg = make_synthetic_config(900, 3, 16, 1.0, 7);
  cfg.target_mean_offset = 2.0;
  const DomainPair p = generate_pair(cfg);
  const DenseMatrix ms = class_means(p.source, 3), mt = class_means(p.target, 3);
  const RowVector u = shift_direction(cfg);
  for (Index j = 0; j < u.cols(); ++j) CHECK(std::abs(u(j)) == 1.0);
  for (int k = 0; k < 3; ++k) {
    const double dist = (ms.row(k) - mt.row(k)).norm();
    // Each coordinate of the mean difference has sd sqrt(2/300).
    CHECK(std::abs(dist - 2.0 * 4.0) < 4 * std::sqrt(16 * 2.0 / 300.0));
  }
}

TEST_CASE("synthetic config validation") {
  SyntheticConfig cfg = make_synthetic_config(10, 2, 4, 1.0, 1);
  cfg.target_cov_scale = 0.0;
  CHECK_THROWS_AS(generate_pair(cfg), ConfigError);
  cfg.target_cov_scale = 1.0;
  cfg.source_blocks.p_in = 1.5;
  CHECK_THROWS_AS(generate_pair(cfg), ConfigError);
}

TEST_CASE("generation is deterministic per seed") {
  const SyntheticConfig cfg = make_synthetic_config(50, 3, 5, 1.0, 21);
  const DomainPair a = generate_pair(cfg), b = generate_pair(cfg);
  CHECK(to_dense(a.source.adjacency) == to_dense(b.source.adjacency));
  CHECK(a.target.attributes == b.target.attributes);
}

TEST_CASE("validate catches broken invariants") {
  Graph g = sgda::test::random_graph(5, 0.5, 2, 2, 3);
  CHECK_NOTHROW(validate(g));
  g.attributes(0, 0) = std::nan("");
  CHECK_THROWS_AS(validate(g), ValueError);
}
