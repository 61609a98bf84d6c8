#include "sgda/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "sgda/errors.hpp"
#include "sgda/random.hpp"

namespace sgda {

ModelDims ModelParams::dims() const {
  ModelDims d;
  d.n_attributes = encoder.w1.rows();
  d.hidden = encoder.w1.cols();
  d.embedding = encoder.w2.cols();
  d.classifier_hidden = head.cls_w1.cols();
  d.n_classes = static_cast<int>(head.cls_w2.cols());
  d.n_source = shift.xi1.rows();
  return d;
}

namespace {

DenseMatrix glorot(Index fan_in, Index fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  DenseMatrix w(fan_in, fan_out);
  for (Index i = 0; i < fan_in; ++i)
    for (Index j = 0; j < fan_out; ++j) w(i, j) = rng.uniform(-a, a);
  return w;
}

DenseMatrix uniform_box(Index rows, Index cols, double eps, Rng& rng) {
  DenseMatrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-eps, eps);
  return m;
}

}  // namespace

void project_frobenius(DenseMatrix& xi, double epsilon) {
  const double norm = xi.norm();
  if (norm > epsilon) xi *= epsilon / norm;
}

ModelParams init_params(const ModelDims& dims, double epsilon, ShiftMode mode, std::uint64_t seed, double dropout) {
  if (dims.n_attributes < 1 || dims.hidden < 1 || dims.embedding < 1 || dims.classifier_hidden < 1 ||
      dims.n_classes < 1 || dims.n_source < 0)
    throw ConfigError("init_params: dimensions must be positive");
  ModelParams p;
  Rng enc_rng(derive_seed(seed, {1}));
  p.encoder.w1 = glorot(dims.n_attributes, dims.hidden, enc_rng);
  p.encoder.w2 = glorot(dims.hidden, dims.embedding, enc_rng);
  p.encoder.dropout = dropout;

  Rng shift_rng(derive_seed(seed, {2}));
  p.shift.epsilon = epsilon;
  p.shift.mode = mode;
  p.shift.xi1 = uniform_box(dims.n_source, dims.hidden, epsilon, shift_rng);
  p.shift.xi2 = uniform_box(dims.n_source, dims.embedding, epsilon, shift_rng);
  if (mode == ShiftMode::projected) {
    project_frobenius(p.shift.xi1, epsilon);
    project_frobenius(p.shift.xi2, epsilon);
  }

  Rng head_rng(derive_seed(seed, {3}));
  p.head.cls_w1 = glorot(dims.embedding, dims.classifier_hidden, head_rng);
  p.head.cls_b1 = DenseMatrix::Zero(1, dims.classifier_hidden);
  p.head.cls_w2 = glorot(dims.classifier_hidden, dims.n_classes, head_rng);
  p.head.cls_b2 = DenseMatrix::Zero(1, dims.n_classes);
  // The logistic head starts at the uninformative point.
  p.head.disc_w = DenseMatrix::Zero(dims.embedding, 1);
  p.head.disc_b = DenseMatrix::Zero(1, 1);
  return p;
}

namespace {

void check_square_operator(const SparseMatrix& s, const DenseMatrix& x) {
  if (s.rows() != s.cols() || s.cols() != x.rows())
    throw DimensionError("encoder: propagation matrix " + std::to_string(s.rows()) + "x" + std::to_string(s.cols()) +
                         " does not match " + std::to_string(x.rows()) + " attribute rows");
}

}  // namespace

DenseMatrix encode_target(const SparseMatrix& s, const DenseMatrix& x, const EncoderParams& enc, bool train,
                          std::uint64_t dropout_seed) {
  check_square_operator(s, x);
  const DenseMatrix h1 = nk::dropout(nk::relu(nk::linear(nk::spmm(s, x), enc.w1)), enc.dropout, train, dropout_seed);
  return nk::spmm(s, nk::linear(h1, enc.w2));
}

DenseMatrix encode_source(const SparseMatrix& s, const DenseMatrix& x, const EncoderParams& enc,
                          const ShiftParams& shift, bool use_shift, bool train, std::uint64_t dropout_seed,
                          ShiftPlacement placement) {
  if (!use_shift) return encode_target(s, x, enc, train, dropout_seed);
  check_square_operator(s, x);
  if (shift.xi1.rows() != x.rows() || shift.xi2.rows() != x.rows())
    throw DimensionError("encode_source: shift rows must equal the source node count");
  const DenseMatrix z1 = nk::linear(nk::spmm(s, x), enc.w1);
  if (shift.xi1.cols() != z1.cols() || shift.xi2.cols() != enc.w2.cols())
    throw DimensionError("encode_source: shift widths do not match layer widths");
  DenseMatrix h1;
  if (placement == ShiftPlacement::post_activation)
    h1 = nk::dropout(nk::relu(z1), enc.dropout, train, dropout_seed) + shift.xi1;
  else
    h1 = nk::dropout(nk::relu(z1 + shift.xi1), enc.dropout, train, dropout_seed);
  return nk::spmm(s, nk::linear(h1, enc.w2)) + shift.xi2;
}

DenseMatrix classifier_logits(const DenseMatrix& h, const HeadParams& head) {
  const DenseMatrix hidden = nk::relu(nk::linear(h, head.cls_w1, RowVector(head.cls_b1.row(0))));
  return nk::linear(hidden, head.cls_w2, RowVector(head.cls_b2.row(0)));
}

DenseMatrix classify(const DenseMatrix& h, const HeadParams& head) {
  return nk::softmax_rows(classifier_logits(h, head));
}

DenseMatrix discriminator_logits(const DenseMatrix& h, const HeadParams& head) {
  return nk::linear(h, head.disc_w, RowVector(head.disc_b.row(0)));
}

DenseMatrix discriminate(const DenseMatrix& h, const HeadParams& head) {
  return discriminator_logits(h, head).unaryExpr([](double v) { return nk::sigmoid(v); });
}

// ---------------------------------------------------------------------------

ParamVars register_params(nk::Tape& tape, const ModelParams& params, bool with_shift) {
  ParamVars v;
  v.w1 = tape.parameter(params.encoder.w1);
  v.w2 = tape.parameter(params.encoder.w2);
  if (with_shift) {
    v.xi1 = tape.parameter(params.shift.xi1);
    v.xi2 = tape.parameter(params.shift.xi2);
  }
  v.cls_w1 = tape.parameter(params.head.cls_w1);
  v.cls_b1 = tape.parameter(params.head.cls_b1);
  v.cls_w2 = tape.parameter(params.head.cls_w2);
  v.cls_b2 = tape.parameter(params.head.cls_b2);
  v.disc_w = tape.parameter(params.head.disc_w);
  v.disc_b = tape.parameter(params.head.disc_b);
  return v;
}

nk::Var encode(nk::Tape& tape, const SparseMatrix& s, nk::Var sx, const ParamVars& vars, double dropout, bool train,
               std::uint64_t dropout_seed, ShiftPlacement placement, bool shifted) {
  const bool rate_active = train && dropout > 0.0;
  const nk::Var z1 = tape.matmul(sx, vars.w1);
  nk::Var h1;
  if (shifted && placement == ShiftPlacement::pre_activation) {
    h1 = tape.relu(tape.add(z1, vars.xi1));
    if (rate_active) h1 = tape.dropout(h1, dropout, dropout_seed);
  } else {
    h1 = tape.relu(z1);
    if (rate_active) h1 = tape.dropout(h1, dropout, dropout_seed);
    if (shifted) h1 = tape.add(h1, vars.xi1);
  }
  nk::Var out = tape.spmm(s, tape.matmul(h1, vars.w2));
  if (shifted) out = tape.add(out, vars.xi2);
  return out;
}

nk::Var classifier_logits(nk::Tape& tape, nk::Var h, const ParamVars& vars) {
  const nk::Var hidden = tape.relu(tape.add_row(tape.matmul(h, vars.cls_w1), vars.cls_b1));
  return tape.add_row(tape.matmul(hidden, vars.cls_w2), vars.cls_b2);
}

nk::Var discriminator_logits(nk::Tape& tape, nk::Var h, const ParamVars& vars) {
  return tape.add_row(tape.matmul(h, vars.disc_w), vars.disc_b);
}

// ---------------------------------------------------------------------------

namespace {

constexpr const char* kMagic = "sgda-checkpoint";
constexpr int kVersion = 1;

void write_array(std::ostream& out, const std::string& name, const DenseMatrix& m) {
  out << "array " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  char buf[40];
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%a", m(i, j));
      out << (j ? " " : "") << buf;
    }
    out << '\n';
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  const ModelParams& p = ckpt.params;
  out << kMagic << ' ' << kVersion << '\n';
  out << "config_hash " << ckpt.config_hash << '\n';
  for (const auto& [k, v] : ckpt.metadata) {
    if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos)
      throw ConfigError("checkpoint metadata must be single-line and keys space-free");
    out << "meta " << k << ' ' << v << '\n';
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", p.encoder.dropout);
  out << "dropout " << buf << '\n';
  std::snprintf(buf, sizeof buf, "%a", p.shift.epsilon);
  out << "epsilon " << buf << '\n';
  out << "shift_mode " << (p.shift.mode == ShiftMode::projected ? "projected" : "unbounded") << '\n';
  out << "placement " << (p.placement == ShiftPlacement::pre_activation ? "pre" : "post") << '\n';
  write_array(out, "W1", p.encoder.w1);
  write_array(out, "W2", p.encoder.w2);
  write_array(out, "xi1", p.shift.xi1);
  write_array(out, "xi2", p.shift.xi2);
  write_array(out, "classifier.W1", p.head.cls_w1);
  write_array(out, "classifier.b1", p.head.cls_b1);
  write_array(out, "classifier.W2", p.head.cls_w2);
  write_array(out, "classifier.b2", p.head.cls_b2);
  write_array(out, "discriminator.w", p.head.disc_w);
  write_array(out, "discriminator.b", p.head.disc_b);
  out << "end\n";
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Checkpoint ckpt;
  std::string line;
  std::size_t ln = 0;
  auto next = [&](std::istringstream& ss) {
    if (!std::getline(in, line)) throw ParseError(path.string(), ln + 1, "unexpected end of checkpoint");
    ++ln;
    ss = std::istringstream(line);
  };
  auto real = [&](const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) throw ParseError(path.string(), ln, "bad number '" + s + "'");
    return v;
  };

  std::istringstream ss;
  next(ss);
  std::string magic;
  int version = 0;
  if (!(ss >> magic >> version) || magic != kMagic) throw ParseError(path.string(), ln, "not a checkpoint");
  if (version != kVersion) throw CompatibilityError("unsupported checkpoint version " + std::to_string(version));

  std::map<std::string, DenseMatrix> arrays;
  for (;;) {
    next(ss);
    std::string tag;
    ss >> tag;
    if (tag == "end") break;
    if (tag == "config_hash") {
      ss >> ckpt.config_hash;
    } else if (tag == "meta") {
      std::string key;
      ss >> key;
      std::string rest;
      std::getline(ss, rest);
      if (!rest.empty() && rest[0] == ' ') rest.erase(0, 1);
      ckpt.metadata[key] = rest;
    } else if (tag == "dropout" || tag == "epsilon") {
      std::string v;
      ss >> v;
      (tag == "dropout" ? ckpt.params.encoder.dropout : ckpt.params.shift.epsilon) = real(v);
    } else if (tag == "shift_mode") {
      std::string v;
      ss >> v;
      ckpt.params.shift.mode = v == "projected" ? ShiftMode::projected : ShiftMode::unbounded;
    } else if (tag == "placement") {
      std::string v;
      ss >> v;
      ckpt.params.placement = v == "pre" ? ShiftPlacement::pre_activation : ShiftPlacement::post_activation;
    } else if (tag == "array") {
      std::string name;
      long long r = -1, c = -1;
      if (!(ss >> name >> r >> c) || r < 0 || c < 0) throw ParseError(path.string(), ln, "bad array header");
      DenseMatrix m(r, c);
      for (Index i = 0; i < r; ++i) {
        std::istringstream row;
        next(row);
        std::string tok;
        for (Index j = 0; j < c; ++j) {
          if (!(row >> tok)) throw ParseError(path.string(), ln, "short array row");
          m(i, j) = real(tok);
        }
      }
      arrays[name] = std::move(m);
    } else {
      throw ParseError(path.string(), ln, "unknown record '" + tag + "'");
    }
  }
  auto take = [&](const char* name) {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw ParseError(path.string(), ln, std::string("missing array ") + name);
    return std::move(it->second);
  };
  ModelParams& p = ckpt.params;
  p.encoder.w1 = take("W1");
  p.encoder.w2 = take("W2");
  p.shift.xi1 = take("xi1");
  p.shift.xi2 = take("xi2");
  p.head.cls_w1 = take("classifier.W1");
  p.head.cls_b1 = take("classifier.b1");
  p.head.cls_w2 = take("classifier.W2");
  p.head.cls_b2 = take("classifier.b2");
  p.head.disc_w = take("discriminator.w");
  p.head.disc_b = take("discriminator.b");
  return ckpt;
}

}  // namespace sgda
