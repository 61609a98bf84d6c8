#include "sgda/ppmi.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sgda/errors.hpp"
#include "sgda/random.hpp"

namespace sgda {

void WalkConfig::validate() const {
  if (walks_per_node < 1) throw ConfigError("walk config: walks_per_node must be >= 1");
  if (walk_length < 2) throw ConfigError("walk config: walk_length must be >= 2");
  if (window < 1 || window >= walk_length) throw ConfigError("walk config: window must satisfy 1 <= window < walk_length");
}

std::uint64_t walk_seed(std::uint64_t seed, Index node, Index w) {
  return derive_seed(seed, {static_cast<std::uint64_t>(node), static_cast<std::uint64_t>(w)});
}

std::vector<Walk> sample_walks(const Graph& g, const WalkConfig& cfg) {
  cfg.validate();
  const SparseMatrix& a = g.adjacency;
  std::vector<Walk> walks;
  walks.reserve(static_cast<std::size_t>(g.n_nodes * cfg.walks_per_node));
  for (Index start = 0; start < g.n_nodes; ++start) {
    for (Index w = 0; w < cfg.walks_per_node; ++w) {
      Rng rng(walk_seed(cfg.seed, start, w));
      Walk walk{start};
      walk.reserve(cfg.walk_length);
      Index cur = start;
      while (static_cast<Index>(walk.size()) < cfg.walk_length) {
        const Index begin = a.outerIndexPtr()[cur];
        const Index degree = a.outerIndexPtr()[cur + 1] - begin;
        if (degree == 0) break;
        cur = a.innerIndexPtr()[begin + static_cast<Index>(rng.below(static_cast<std::uint64_t>(degree)))];
        walk.push_back(cur);
      }
      walks.push_back(std::move(walk));
    }
  }
  return walks;
}

SparseMatrix cooccurrence(const std::vector<Walk>& walks, Index window, Index n_nodes, bool count_self) {
  if (window < 1) throw ConfigError("cooccurrence: window must be >= 1");
  // Pack (i, j) into one key, sort, count runs.
  std::vector<std::uint64_t> keys;
  const auto n = static_cast<std::uint64_t>(n_nodes);
  for (const Walk& walk : walks) {
    const auto len = static_cast<Index>(walk.size());
    for (Index p = 0; p < len; ++p) {
      const Index lo = std::max<Index>(0, p - window);
      const Index hi = std::min<Index>(len - 1, p + window);
      for (Index q = lo; q <= hi; ++q) {
        if (q == p) continue;
        const Index i = walk[p], j = walk[q];
        if (i < 0 || i >= n_nodes || j < 0 || j >= n_nodes) throw IndexError("cooccurrence: node id out of range");
        if (!count_self && i == j) continue;
        keys.push_back(static_cast<std::uint64_t>(i) * n + static_cast<std::uint64_t>(j));
      }
    }
  }
  std::sort(keys.begin(), keys.end());
  std::vector<Triplet> trips;
  for (std::size_t k = 0; k < keys.size();) {
    std::size_t e = k;
    while (e < keys.size() && keys[e] == keys[k]) ++e;
    trips.emplace_back(static_cast<Index>(keys[k] / n), static_cast<Index>(keys[k] % n), static_cast<double>(e - k));
    k = e;
  }
  SparseMatrix f(n_nodes, n_nodes);
  f.setFromTriplets(trips.begin(), trips.end());
  f.makeCompressed();
  return f;
}

SparseMatrix ppmi(const SparseMatrix& f) {
  if (f.rows() != f.cols()) throw DimensionError("ppmi: frequency matrix must be square");
  double total = 0.0;
  std::vector<double> row(f.rows(), 0.0), col(f.cols(), 0.0);
  for (Index i = 0; i < f.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(f, i); it; ++it) {
      if (it.value() < 0) throw ValueError("ppmi: negative frequency");
      total += it.value();
      row[i] += it.value();
      col[it.col()] += it.value();
    }
  }
  if (!(total > 0)) throw DegenerateInputError("ppmi: frequency matrix has zero total");
  std::vector<Triplet> trips;
  for (Index i = 0; i < f.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(f, i); it; ++it) {
      if (it.value() == 0) continue;
      const double pij = it.value() / total;
      const double pi = row[i] / total;
      const double pj = col[it.col()] / total;
      const double v = std::log(pij / (pi * pj));
      if (v > 0) trips.emplace_back(i, it.col(), v);
    }
  }
  SparseMatrix p(f.rows(), f.cols());
  p.setFromTriplets(trips.begin(), trips.end());
  p.makeCompressed();
  return p;
}

SparseMatrix propagation(const SparseMatrix& p) {
  if (p.rows() != p.cols()) throw DimensionError("propagation: matrix must be square");
  const Index n = p.rows();
  SparseMatrix eye(n, n);
  eye.setIdentity();
  SparseMatrix tilde = p + eye;
  Eigen::VectorXd inv_sqrt(n);
  for (Index i = 0; i < n; ++i) {
    double d = 0.0;
    for (SparseMatrix::InnerIterator it(tilde, i); it; ++it) d += it.value();
    inv_sqrt(i) = 1.0 / std::sqrt(d);
  }
  for (Index i = 0; i < tilde.outerSize(); ++i)
    for (SparseMatrix::InnerIterator it(tilde, i); it; ++it) it.valueRef() *= inv_sqrt(i) * inv_sqrt(it.col());
  tilde.makeCompressed();
  return tilde;
}

PpmiMatrix reconstruct(const Graph& g, const WalkConfig& cfg, bool use_ppmi) {
  PpmiMatrix out;
  if (use_ppmi) {
    cfg.validate();
    const auto walks = sample_walks(g, cfg);
    const SparseMatrix f = cooccurrence(walks, cfg.window, g.n_nodes, cfg.count_self);
    out.p = ppmi(f);
  } else {
    out.p = g.adjacency;
  }
  out.s = propagation(out.p);
  return out;
}

void save_coo(const std::filesystem::path& path, const SparseMatrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << m.rows() << '\n';
  char buf[64];
  for (Index i = 0; i < m.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(m, i); it; ++it) {
      std::snprintf(buf, sizeof buf, "%td %td %.17g\n", i, static_cast<std::ptrdiff_t>(it.col()), it.value());
      out << buf;
    }
  }
  if (!out) throw IoError("write failed for " + path.string());
}

SparseMatrix load_coo(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t ln = 1;
  if (!std::getline(in, line)) throw ParseError(path.string(), ln, "missing size line");
  char* end = nullptr;
  const long long n = std::strtoll(line.c_str(), &end, 10);
  if (end == line.c_str() || n < 0) throw ParseError(path.string(), ln, "bad size line");
  std::vector<Triplet> trips;
  while (std::getline(in, line)) {
    ++ln;
    if (line.empty()) continue;
    std::istringstream ss(line);
    long long r = 0, c = 0;
    std::string vs;
    if (!(ss >> r >> c >> vs)) throw ParseError(path.string(), ln, "expected 'row col value'");
    if (r < 0 || r >= n || c < 0 || c >= n) throw IndexError(path.string() + ":" + std::to_string(ln) + ": index out of range");
    const double v = std::strtod(vs.c_str(), &end);
    if (end != vs.c_str() + vs.size()) throw ParseError(path.string(), ln, "bad value '" + vs + "'");
    trips.emplace_back(r, c, v);
  }
  SparseMatrix m(n, n);
  m.setFromTriplets(trips.begin(), trips.end());
  m.makeCompressed();
  return m;
}

}  // namespace sgda
