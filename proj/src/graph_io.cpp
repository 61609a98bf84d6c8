#include "sgda/graph_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "sgda/errors.hpp"
#include "sgda/random.hpp"

namespace sgda {

namespace {

namespace fs = std::filesystem;

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

// Whitespace/comma tokenizer for one line.
std::vector<std::string> tokens(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ' ' || c == '\t' || c == ',' || c == '\r') {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

bool skippable(const std::vector<std::string>& t) { return t.empty() || t[0][0] == '#'; }

long long parse_int(const std::string& s, const fs::path& path, std::size_t line) {
  long long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ParseError(path.string(), line, "expected integer, got '" + s + "'");
  return v;
}

double parse_real(const std::string& s, const fs::path& path, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) throw ParseError(path.string(), line, "expected real, got '" + s + "'");
  return v;
}

Index node_id(const std::string& s, Index n, const fs::path& path, std::size_t line) {
  const long long v = parse_int(s, path, line);
  if (v < 0 || v >= n)
    throw IndexError(path.string() + ":" + std::to_string(line) + ": node id " + s + " out of range [0, " +
                     std::to_string(n) + ")");
  return static_cast<Index>(v);
}

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

int Graph::n_classes() const {
  int c = 0;
  for (int l : labels) c = std::max(c, l + 1);
  return c;
}

std::vector<Index> Graph::labeled_nodes() const {
  std::vector<Index> out;
  for (Index i = 0; i < n_nodes; ++i)
    if (labeled_mask.size() == static_cast<std::size_t>(n_nodes) && labeled_mask[i]) out.push_back(i);
  return out;
}

std::vector<Index> Graph::unlabeled_nodes() const {
  std::vector<Index> out;
  for (Index i = 0; i < n_nodes; ++i)
    if (labeled_mask.size() != static_cast<std::size_t>(n_nodes) || !labeled_mask[i]) out.push_back(i);
  return out;
}

void validate(const Graph& g) {
  if (g.adjacency.rows() != g.n_nodes || g.adjacency.cols() != g.n_nodes)
    throw ValueError("graph: adjacency shape does not match node count");
  if (g.attributes.rows() != g.n_nodes) throw ValueError("graph: attribute rows do not match node count");
  if (!g.attributes.allFinite()) throw ValueError("graph: non-finite attribute");
  const SparseMatrix t = g.adjacency.transpose();
  if ((g.adjacency - t).norm() != 0.0) throw ValueError("graph: adjacency is not symmetric");
  for (Index i = 0; i < g.n_nodes; ++i)
    if (g.adjacency.coeff(i, i) != 0.0) throw ValueError("graph: adjacency has a self-loop");
  if (!g.labels.empty() && g.labels.size() != static_cast<std::size_t>(g.n_nodes))
    throw ValueError("graph: label vector length does not match node count");
  if (g.labeled_mask.size() != static_cast<std::size_t>(g.n_nodes))
    throw ValueError("graph: labeled mask length does not match node count");
  for (Index i = 0; i < g.n_nodes; ++i)
    if (g.labeled_mask[i] && (g.labels.empty() || g.labels[i] < 0))
      throw ValueError("graph: labeled node " + std::to_string(i) + " has no label");
}

SparseMatrix adjacency_from_edges(Index n_nodes, const std::vector<std::pair<Index, Index>>& edges) {
  std::set<std::pair<Index, Index>> uniq;
  for (auto [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n_nodes || b >= n_nodes) throw IndexError("edge endpoint out of range");
    if (a == b) continue;
    uniq.emplace(a, b);
    uniq.emplace(b, a);
  }
  std::vector<Triplet> trips;
  trips.reserve(uniq.size());
  for (auto [a, b] : uniq) trips.emplace_back(a, b, 1.0);
  SparseMatrix adj(n_nodes, n_nodes);
  adj.setFromTriplets(trips.begin(), trips.end());
  adj.makeCompressed();
  return adj;
}

DenseMatrix load_attributes(const fs::path& path) {
  auto in = open_in(path);
  std::string line;
  std::size_t ln = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++ln;
    header = tokens(line);
    if (!skippable(header)) break;
  }
  if (skippable(header)) throw ParseError(path.string(), ln, "missing header");
  const bool sparse = header[0] == "sparse";
  const std::size_t off = sparse ? 1 : 0;
  if (header.size() != off + 2) throw ParseError(path.string(), ln, "header must be 'N d' or 'sparse N d'");
  const long long n = parse_int(header[off], path, ln);
  const long long d = parse_int(header[off + 1], path, ln);
  if (n < 0 || d < 0) throw ParseError(path.string(), ln, "negative dimension in header");
  DenseMatrix x = DenseMatrix::Zero(n, d);

  Index row = 0;
  while (std::getline(in, line)) {
    ++ln;
    auto t = tokens(line);
    if (skippable(t)) continue;
    if (sparse) {
      if (t.size() != 3) throw ParseError(path.string(), ln, "expected 'node col value'");
      const Index i = node_id(t[0], n, path, ln);
      const long long c = parse_int(t[1], path, ln);
      if (c < 0 || c >= d) throw IndexError(path.string() + ":" + std::to_string(ln) + ": column out of range");
      const double v = parse_real(t[2], path, ln);
      if (!std::isfinite(v)) throw ValueError(path.string() + ":" + std::to_string(ln) + ": non-finite attribute");
      x(i, c) = v;
    } else {
      if (row >= n) throw ParseError(path.string(), ln, "more rows than declared");
      if (static_cast<long long>(t.size()) != d)
        throw ParseError(path.string(), ln, "expected " + std::to_string(d) + " values");
      for (Index c = 0; c < d; ++c) {
        const double v = parse_real(t[c], path, ln);
        if (!std::isfinite(v)) throw ValueError(path.string() + ":" + std::to_string(ln) + ": non-finite attribute");
        x(row, c) = v;
      }
      ++row;
    }
  }
  if (!sparse && row != n) throw ParseError(path.string(), ln, "fewer rows than declared");
  return x;
}

std::vector<std::pair<Index, Index>> load_edges(const fs::path& path, Index n_nodes) {
  auto in = open_in(path);
  std::vector<std::pair<Index, Index>> edges;
  std::string line;
  std::size_t ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    auto t = tokens(line);
    if (skippable(t)) continue;
    if (t.size() != 2) throw ParseError(path.string(), ln, "expected 'src dst'");
    edges.emplace_back(node_id(t[0], n_nodes, path, ln), node_id(t[1], n_nodes, path, ln));
  }
  return edges;
}

std::vector<int> load_labels(const fs::path& path, Index n_nodes) {
  auto in = open_in(path);
  std::vector<int> labels(n_nodes, -1);
  std::string line;
  std::size_t ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    auto t = tokens(line);
    if (skippable(t)) continue;
    if (t.size() != 2) throw ParseError(path.string(), ln, "expected 'node class'");
    const Index i = node_id(t[0], n_nodes, path, ln);
    const long long c = parse_int(t[1], path, ln);
    if (c < 0 || c > 1'000'000) throw ParseError(path.string(), ln, "class id out of range");
    labels[i] = static_cast<int>(c);
  }
  return labels;
}

std::vector<std::string> load_attribute_names(const fs::path& path) {
  auto in = open_in(path);
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    names.push_back(line);
  }
  return names;
}

Graph load_graph(const fs::path& edge_path, const fs::path& attr_path, const std::optional<fs::path>& label_path) {
  Graph g;
  g.attributes = load_attributes(attr_path);
  g.n_nodes = g.attributes.rows();
  g.adjacency = adjacency_from_edges(g.n_nodes, load_edges(edge_path, g.n_nodes));
  g.labeled_mask.assign(g.n_nodes, false);
  if (label_path) {
    g.labels = load_labels(*label_path, g.n_nodes);
    for (Index i = 0; i < g.n_nodes; ++i) g.labeled_mask[i] = g.labels[i] >= 0;
  }
  validate(g);
  return g;
}

void write_edges(const fs::path& path, const SparseMatrix& adjacency) {
  auto out = open_out(path);
  for (Index i = 0; i < adjacency.outerSize(); ++i)
    for (SparseMatrix::InnerIterator it(adjacency, i); it; ++it)
      if (it.col() > i) out << i << ' ' << it.col() << '\n';
}

void write_attributes(const fs::path& path, const DenseMatrix& attributes) {
  auto out = open_out(path);
  out << attributes.rows() << ' ' << attributes.cols() << '\n';
  for (Index i = 0; i < attributes.rows(); ++i) {
    for (Index j = 0; j < attributes.cols(); ++j) out << (j ? " " : "") << format_real(attributes(i, j));
    out << '\n';
  }
}

void write_labels(const fs::path& path, const std::vector<int>& labels) {
  auto out = open_out(path);
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= 0) out << i << ' ' << labels[i] << '\n';
}

DomainPair union_align(const Graph& source, const Graph& target, const std::vector<std::string>& source_names,
                       const std::vector<std::string>& target_names) {
  if (static_cast<Index>(source_names.size()) != source.n_attributes())
    throw ConfigError("union_align: source name count does not match attribute columns");
  if (static_cast<Index>(target_names.size()) != target.n_attributes())
    throw ConfigError("union_align: target name count does not match attribute columns");
  std::set<std::string> all;
  for (const auto* names : {&source_names, &target_names}) {
    std::set<std::string> seen;
    for (const auto& n : *names) {
      if (!seen.insert(n).second) throw ConfigError("union_align: duplicate attribute name '" + n + "'");
      all.insert(n);
    }
  }
  std::map<std::string, Index> column;
  for (const auto& n : all) column.emplace(n, static_cast<Index>(column.size()));
  auto remap = [&](const Graph& g, const std::vector<std::string>& names) {
    Graph out = g;
    out.attributes = DenseMatrix::Zero(g.n_nodes, static_cast<Index>(all.size()));
    for (std::size_t c = 0; c < names.size(); ++c) out.attributes.col(column.at(names[c])) = g.attributes.col(c);
    return out;
  };
  DomainPair pair;
  pair.source = remap(source, source_names);
  pair.target = remap(target, target_names);
  pair.n_classes = std::max(source.n_classes(), target.n_classes());
  return pair;
}

Graph split_labels(const Graph& g, double rate, std::uint64_t seed) {
  if (!(rate > 0.0 && rate <= 1.0)) throw ConfigError("split_labels: rate must lie in (0, 1]");
  if (g.labels.size() != static_cast<std::size_t>(g.n_nodes) ||
      std::any_of(g.labels.begin(), g.labels.end(), [](int l) { return l < 0; }))
    throw ConfigError("split_labels: every node needs a label");
  const auto k = static_cast<Index>(std::llround(rate * static_cast<double>(g.n_nodes)));
  if (k == 0) throw ConfigError("split_labels: rate selects no labeled node");
  std::vector<Index> order(g.n_nodes);
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(seed);
  // Partial Fisher-Yates: the first k slots are a uniform k-subset.
  for (Index i = 0; i < k; ++i) {
    const auto j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(g.n_nodes - i)));
    std::swap(order[i], order[j]);
  }
  Graph out = g;
  out.labeled_mask.assign(g.n_nodes, false);
  for (Index i = 0; i < k; ++i) out.labeled_mask[order[i]] = true;
  return out;
}

void SyntheticConfig::validate() const {
  if (n_nodes < 1) throw ConfigError("synthetic: n_nodes must be positive");
  if (n_classes < 1) throw ConfigError("synthetic: n_classes must be positive");
  if (n_nodes < n_classes) throw ConfigError("synthetic: fewer nodes than classes");
  for (const SbmBlocks* b : {&source_blocks, &target_blocks})
    if (!(b->p_in >= 0 && b->p_in <= 1 && b->p_out >= 0 && b->p_out <= 1))
      throw ConfigError("synthetic: block probabilities must lie in [0, 1]");
  if (dim < 1) throw ConfigError("synthetic: dim must be positive");
  if (class_means.rows() != n_classes || class_means.cols() != dim)
    throw ConfigError("synthetic: class_means must be n_classes x dim");
  if (!(attribute_std > 0)) throw ConfigError("synthetic: attribute_std must be positive");
  if (!(target_cov_scale > 0)) throw ConfigError("synthetic: target covariance scale must be positive");
}

SyntheticConfig make_synthetic_config(Index n_nodes, int n_classes, Index dim, double separation,
                                      std::uint64_t seed) {
  SyntheticConfig cfg;
  cfg.n_nodes = n_nodes;
  cfg.n_classes = n_classes;
  cfg.dim = dim;
  cfg.seed = seed;
  cfg.class_means = DenseMatrix::Zero(std::max(n_classes, 0), dim);
  if (n_classes > 0) {
    const Index width = std::max<Index>(1, dim / n_classes);
    for (int k = 0; k < n_classes; ++k)
      for (Index j = 0; j < width; ++j) cfg.class_means(k, (k * width + j) % dim) = separation;
  }
  return cfg;
}

std::vector<Index> class_sizes(Index n, int n_classes) {
  std::vector<Index> sizes(n_classes, n / n_classes);
  for (Index k = 0; k < n % n_classes; ++k) ++sizes[k];
  return sizes;
}

RowVector shift_direction(const SyntheticConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, {0x5eed, 99}));
  RowVector u(cfg.dim);
  for (Index j = 0; j < cfg.dim; ++j) u(j) = rng.bernoulli(0.5) ? 1.0 : -1.0;
  return u;
}

namespace {

Graph sample_domain(const SyntheticConfig& cfg, const SbmBlocks& blocks, const RowVector& mean_shift, double std,
                    std::uint64_t seed) {
  const auto sizes = class_sizes(cfg.n_nodes, cfg.n_classes);
  Graph g;
  g.n_nodes = cfg.n_nodes;
  g.labels.reserve(cfg.n_nodes);
  for (int k = 0; k < cfg.n_classes; ++k) g.labels.insert(g.labels.end(), sizes[k], k);

  Rng edge_rng(derive_seed(seed, {1}));
  std::vector<std::pair<Index, Index>> edges;
  for (Index i = 0; i < g.n_nodes; ++i)
    for (Index j = i + 1; j < g.n_nodes; ++j)
      if (edge_rng.bernoulli(g.labels[i] == g.labels[j] ? blocks.p_in : blocks.p_out)) edges.emplace_back(i, j);
  g.adjacency = adjacency_from_edges(g.n_nodes, edges);

  Rng attr_rng(derive_seed(seed, {2}));
  g.attributes.resize(g.n_nodes, cfg.dim);
  for (Index i = 0; i < g.n_nodes; ++i)
    for (Index j = 0; j < cfg.dim; ++j)
      g.attributes(i, j) = cfg.class_means(g.labels[i], j) + mean_shift(j) + std * attr_rng.normal();
  g.labeled_mask.assign(g.n_nodes, false);
  return g;
}

}  // namespace

DomainPair generate_pair(const SyntheticConfig& cfg) {
  cfg.validate();
  const RowVector zero = RowVector::Zero(cfg.dim);
  const RowVector shift = cfg.target_mean_offset * shift_direction(cfg);
  DomainPair pair;
  pair.source = sample_domain(cfg, cfg.source_blocks, zero, cfg.attribute_std, derive_seed(cfg.seed, {10}));
  pair.target = sample_domain(cfg, cfg.target_blocks, shift, cfg.attribute_std * cfg.target_cov_scale,
                              derive_seed(cfg.seed, {20}));
  pair.n_classes = cfg.n_classes;
  return pair;
}

}  // namespace sgda
