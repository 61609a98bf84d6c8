#include "sgda/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sgda/errors.hpp"
#include "sgda/random.hpp"

namespace sgda {

namespace {

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_real(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  return d;
}

long long parse_int(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const long long d = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size()) throw ConfigError("config: '" + key + "' expects an integer, got '" + v + "'");
  return d;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config: '" + key + "' expects a boolean, got '" + v + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("config: epochs must be >= 1");
  if (!(lr > 0)) throw ConfigError("config: lr must be positive");
  if (weight_decay < 0) throw ConfigError("config: weight_decay must be >= 0");
  if (!(dropout >= 0 && dropout < 1)) throw ConfigError("config: dropout must lie in [0, 1)");
  if (lambda1 < 0 || lambda2_value < 0) throw ConfigError("config: loss weights must be >= 0");
  if (!(epsilon > 0)) throw ConfigError("config: epsilon must be positive");
  if (alpha > beta) throw ConfigError("config: alpha must not exceed beta");
  if (hidden < 1 || embedding < 1 || classifier_hidden < 1) throw ConfigError("config: widths must be positive");
  if (eval_every < 1) throw ConfigError("config: eval_every must be >= 1");
  if (use_neg) walk.validate();
}

std::vector<std::pair<std::string, std::string>> to_key_values(const TrainConfig& c) {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"epochs", std::to_string(c.epochs)},
      {"lr", fmt_real(c.lr)},
      {"weight_decay", fmt_real(c.weight_decay)},
      {"dropout", fmt_real(c.dropout)},
      {"lambda1", fmt_real(c.lambda1)},
      {"lambda2_mode", c.lambda2_mode == Lambda2Mode::linear ? "linear" : "constant"},
      {"lambda2_value", fmt_real(c.lambda2_value)},
      {"epsilon", fmt_real(c.epsilon)},
      {"alpha", fmt_real(c.alpha)},
      {"beta", fmt_real(c.beta)},
      {"shift_mode", c.shift_mode == ShiftMode::projected ? "projected" : "unbounded"},
      {"shift_step", fmt_real(c.shift_step)},
      {"shift_placement", c.shift_placement == ShiftPlacement::pre_activation ? "pre" : "post"},
      {"hidden", std::to_string(c.hidden)},
      {"embedding", std::to_string(c.embedding)},
      {"classifier_hidden", std::to_string(c.classifier_hidden)},
      {"walks_per_node", std::to_string(c.walk.walks_per_node)},
      {"walk_length", std::to_string(c.walk.walk_length)},
      {"window", std::to_string(c.walk.window)},
      {"count_self", b(c.walk.count_self)},
      {"use_neg", b(c.use_neg)},
      {"use_shift", b(c.use_shift)},
      {"use_at", b(c.use_at)},
      {"use_pl", b(c.use_pl)},
      {"seed", std::to_string(c.seed)},
      {"eval_every", std::to_string(c.eval_every)},
      {"adam_beta1", fmt_real(c.adam_beta1)},
      {"adam_beta2", fmt_real(c.adam_beta2)},
      {"adam_eps", fmt_real(c.adam_eps)},
  };
}

void apply_key_value(TrainConfig& c, const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "epochs") c.epochs = static_cast<int>(parse_int(key, v));
  else if (key == "lr") c.lr = parse_real(key, v);
  else if (key == "weight_decay") c.weight_decay = parse_real(key, v);
  else if (key == "dropout") c.dropout = parse_real(key, v);
  else if (key == "lambda1") c.lambda1 = parse_real(key, v);
  else if (key == "lambda2_mode") {
    if (v == "linear") c.lambda2_mode = Lambda2Mode::linear;
    else if (v == "constant") c.lambda2_mode = Lambda2Mode::constant;
    else throw ConfigError("config: lambda2_mode must be linear or constant");
  } else if (key == "lambda2_value") c.lambda2_value = parse_real(key, v);
  else if (key == "epsilon") c.epsilon = parse_real(key, v);
  else if (key == "alpha") c.alpha = parse_real(key, v);
  else if (key == "beta") c.beta = parse_real(key, v);
  else if (key == "shift_mode") {
    if (v == "unbounded") c.shift_mode = ShiftMode::unbounded;
    else if (v == "projected") c.shift_mode = ShiftMode::projected;
    else throw ConfigError("config: shift_mode must be unbounded or projected");
  } else if (key == "shift_step") c.shift_step = parse_real(key, v);
  else if (key == "shift_placement") {
    if (v == "post") c.shift_placement = ShiftPlacement::post_activation;
    else if (v == "pre") c.shift_placement = ShiftPlacement::pre_activation;
    else throw ConfigError("config: shift_placement must be post or pre");
  } else if (key == "hidden") c.hidden = parse_int(key, v);
  else if (key == "embedding") c.embedding = parse_int(key, v);
  else if (key == "classifier_hidden") c.classifier_hidden = parse_int(key, v);
  else if (key == "walks_per_node") c.walk.walks_per_node = parse_int(key, v);
  else if (key == "walk_length") c.walk.walk_length = parse_int(key, v);
  else if (key == "window") c.walk.window = parse_int(key, v);
  else if (key == "count_self") c.walk.count_self = parse_bool(key, v);
  else if (key == "use_neg") c.use_neg = parse_bool(key, v);
  else if (key == "use_shift") c.use_shift = parse_bool(key, v);
  else if (key == "use_at") c.use_at = parse_bool(key, v);
  else if (key == "use_pl") c.use_pl = parse_bool(key, v);
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_int(key, v));
  else if (key == "eval_every") c.eval_every = static_cast<int>(parse_int(key, v));
  else if (key == "adam_beta1") c.adam_beta1 = parse_real(key, v);
  else if (key == "adam_beta2") c.adam_beta2 = parse_real(key, v);
  else if (key == "adam_eps") c.adam_eps = parse_real(key, v);
  else throw ConfigError("config: unknown key '" + key + "'");
}

void apply_config_file(TrainConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::string line;
  std::size_t ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(path, ln, "expected key=value");
    apply_key_value(cfg, trim(t.substr(0, eq)), t.substr(eq + 1));
  }
}

std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const TrainConfig& cfg) {
  std::string s;
  for (const auto& [k, v] : to_key_values(cfg)) s += k + "=" + v + "\n";
  return fnv1a_hex(s);
}

std::string variant_name(const TrainConfig& c) {
  if (!c.use_neg && !c.use_shift && !c.use_at && !c.use_pl) return "source-only";
  if (!c.use_at && !c.use_pl) return "supervised-only";
  std::string name;
  auto add = [&](bool on, const char* tag) {
    if (on) return;
    if (!name.empty()) name += "+";
    name += tag;
  };
  add(c.use_neg, "wo-neg");
  add(c.use_shift, "wo-shift");
  add(c.use_at, "wo-at");
  add(c.use_pl, "wo-pl");
  return name.empty() ? "sgda" : name;
}

TrainConfig source_only_config(TrainConfig cfg) {
  cfg.use_neg = false;
  cfg.use_shift = false;
  cfg.use_at = false;
  cfg.use_pl = false;
  return cfg;
}

WalkConfig domain_walk_config(const TrainConfig& cfg, int domain) {
  WalkConfig w = cfg.walk;
  w.seed = derive_seed(cfg.seed, {0x3a1c, static_cast<std::uint64_t>(domain)});
  return w;
}

std::string epoch_csv_header() {
  return "epoch,lambda2,loss_sup,loss_at,loss_pl,loss_total,xi1_norm,xi2_norm,micro_f1,macro_f1,"
         "source_pseudo_accuracy,target_entropy\n";
}

std::string epoch_csv_row(const EpochReport& r) {
  std::string s = std::to_string(r.epoch);
  for (double v : {r.lambda2, r.loss_sup, r.loss_at, r.loss_pl, r.loss_total, r.xi1_norm, r.xi2_norm}) s += "," + fmt_real(v);
  if (r.evaluated) {
    for (double v : {r.micro_f1, r.macro_f1, r.source_pseudo_accuracy, r.target_entropy}) s += "," + fmt_real(v);
  } else {
    s += ",,,,";
  }
  return s + "\n";
}

double lambda2(int m, int max_epoch) {
  if (max_epoch <= 0) throw ConfigError("lambda2: max epoch must be positive");
  if (m < 0 || m > max_epoch) throw ConfigError("lambda2: epoch out of range");
  return static_cast<double>(m) / static_cast<double>(max_epoch);
}

void update_shift(DenseMatrix& xi, const DenseMatrix& grad, double step, ShiftMode mode, double epsilon) {
  if (xi.rows() != grad.rows() || xi.cols() != grad.cols()) throw DimensionError("update_shift: shape mismatch");
  if (!grad.allFinite()) throw NumericalError("update_shift: non-finite gradient");
  const double norm = grad.norm();
  if (norm > 0) xi -= (step / norm) * grad;
  if (mode == ShiftMode::projected) project_frobenius(xi, epsilon);
}

AdamW::AdamW(double lr, double weight_decay, double beta1, double beta2, double eps)
    : lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {}

void AdamW::step(std::span<DenseMatrix* const> params, std::span<const DenseMatrix> grads) {
  if (params.size() != grads.size()) throw DimensionError("AdamW: parameter and gradient counts differ");
  if (m_.empty()) {
    for (DenseMatrix* p : params) {
      m_.push_back(DenseMatrix::Zero(p->rows(), p->cols()));
      v_.push_back(DenseMatrix::Zero(p->rows(), p->cols()));
    }
  }
  if (m_.size() != params.size()) throw DimensionError("AdamW: parameter list changed between steps");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grads[k].rows() != params[k]->rows() || grads[k].cols() != params[k]->cols())
      throw DimensionError("AdamW: gradient shape mismatch");
    if (!grads[k].allFinite()) throw NumericalError("AdamW: non-finite gradient");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    DenseMatrix& p = *params[k];
    m_[k] = b1_ * m_[k] + (1.0 - b1_) * grads[k];
    v_[k] = b2_ * v_[k] + (1.0 - b2_) * grads[k].cwiseProduct(grads[k]);
    const auto update = (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + eps_);
    p = (p.array() * (1.0 - lr_ * wd_) - lr_ * update).matrix();
  }
}

F1Scores evaluate(std::span<const int> predictions, std::span<const int> labels, int n_classes) {
  if (predictions.size() != labels.size()) throw DimensionError("evaluate: predictions and labels differ in length");
  if (labels.empty()) throw ConfigError("evaluate: empty node set");
  if (n_classes < 1) throw ConfigError("evaluate: no classes");
  std::vector<double> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0);
  double correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i], p = predictions[i];
    if (y < 0 || y >= n_classes || p < 0 || p >= n_classes) throw IndexError("evaluate: class out of range");
    if (y == p) {
      ++tp[y];
      ++correct;
    } else {
      ++fp[p];
      ++fn[y];
    }
  }
  F1Scores out;
  out.micro = correct / static_cast<double>(labels.size());
  double sum = 0;
  for (int k = 0; k < n_classes; ++k) {
    const double denom = 2 * tp[k] + fp[k] + fn[k];
    sum += denom > 0 ? 2 * tp[k] / denom : 0.0;
  }
  out.macro = sum / n_classes;
  return out;
}

F1Scores evaluate(const DenseMatrix& probs, std::span<const int> labels) {
  const auto pred = make_pseudo_labels(probs);
  return evaluate(pred, labels, static_cast<int>(probs.cols()));
}

double mean_prediction_entropy(const DenseMatrix& probs) {
  if (probs.rows() == 0) return 0.0;
  const RowVector pbar = probs.colwise().mean();
  double h = 0;
  for (Index k = 0; k < pbar.cols(); ++k)
    if (pbar(k) > 0) h -= pbar(k) * std::log(pbar(k));
  return h;
}

// ---------------------------------------------------------------------------

ObjectiveVars build_objective(nk::Tape& tape, const TrainInputs& in, const ModelParams& params,
                              const PseudoState* pseudo_source, const PseudoState* pseudo_target,
                              const ObjectiveSettings& st) {
  ObjectiveVars ov;
  ov.params = register_params(tape, params, st.use_shift);
  const nk::Var sx_s = tape.constant(in.sx_source);
  ov.h_source = encode(tape, *in.s_source, sx_s, ov.params, st.dropout, st.train, st.source_dropout_seed, st.placement,
                       st.use_shift);
  const bool need_target = st.use_pl || st.use_at;
  if (need_target) {
    const nk::Var sx_t = tape.constant(in.sx_target);
    ov.h_target =
        encode(tape, *in.s_target, sx_t, ov.params, st.dropout, st.train, st.target_dropout_seed, st.placement, false);
  }

  std::vector<std::pair<nk::Var, double>> terms;
  const bool need_source_logits = st.include_supervised || (st.use_pl && pseudo_source && !pseudo_source->nodes.empty());
  nk::Var logits_s, logits_t;
  if (need_source_logits) logits_s = classifier_logits(tape, ov.h_source, ov.params);

  if (st.include_supervised) {
    const nk::Var sup = supervised_loss(tape, logits_s, in.labeled, in.labeled_classes);
    ov.values.sup = tape.value(sup)(0, 0);
    terms.emplace_back(sup, 1.0);
  }

  if (st.use_pl) {
    std::vector<std::pair<nk::Var, nk::Var>> parts;
    if (pseudo_source && !pseudo_source->nodes.empty()) {
      parts.push_back(pseudo_label_loss(tape, logits_s, *pseudo_source));
      ov.values.pl_source = tape.value(parts.back().first)(0, 0) + tape.value(parts.back().second)(0, 0);
      ov.values.diversity_source = tape.value(parts.back().second)(0, 0);
    }
    if (pseudo_target && !pseudo_target->nodes.empty()) {
      logits_t = classifier_logits(tape, ov.h_target, ov.params);
      parts.push_back(pseudo_label_loss(tape, logits_t, *pseudo_target));
      ov.values.pl_target = tape.value(parts.back().first)(0, 0) + tape.value(parts.back().second)(0, 0);
      ov.values.diversity_target = tape.value(parts.back().second)(0, 0);
    }
    if (!parts.empty()) {
      const double w = st.lambda1 / static_cast<double>(parts.size());
      for (const auto& [ce, div] : parts) {
        terms.emplace_back(ce, w);
        terms.emplace_back(div, w);
        ov.values.pl += (tape.value(ce)(0, 0) + tape.value(div)(0, 0)) / static_cast<double>(parts.size());
      }
    }
  }

  if (st.use_at) {
    nk::Var ds_in = ov.h_source, dt_in = ov.h_target;
    if (st.reverse_gradient) {
      ds_in = tape.gradient_reversal(ds_in, 1.0);
      dt_in = tape.gradient_reversal(dt_in, 1.0);
    }
    const nk::Var at =
        adversarial_loss(tape, discriminator_logits(tape, ds_in, ov.params), discriminator_logits(tape, dt_in, ov.params));
    ov.values.at = tape.value(at)(0, 0);
    terms.emplace_back(at, st.lambda2);
  }

  if (terms.empty()) throw ConfigError("build_objective: no loss term enabled");
  ov.total = tape.weighted_sum(terms);
  ov.values.total = tape.value(ov.total)(0, 0);
  return ov;
}

EvalOutputs evaluate_model(const TrainInputs& in, const ModelParams& params, bool use_shift, ShiftPlacement placement) {
  EvalOutputs out;
  const EncoderParams& enc = params.encoder;
  // S X is precomputed; pass it through an identity operator instead of S.
  auto encode_pre = [&](const SparseMatrix& s, const DenseMatrix& sx, const ShiftParams* shift) {
    const DenseMatrix z1 = nk::linear(sx, enc.w1);
    DenseMatrix h1;
    if (shift && placement == ShiftPlacement::pre_activation) {
      h1 = nk::relu(z1 + shift->xi1);
    } else {
      h1 = nk::relu(z1);
      if (shift) h1 += shift->xi1;
    }
    DenseMatrix h = nk::spmm(s, nk::linear(h1, enc.w2));
    if (shift) h += shift->xi2;
    return h;
  };
  out.h_source = encode_pre(*in.s_source, in.sx_source, use_shift ? &params.shift : nullptr);
  out.h_target = encode_pre(*in.s_target, in.sx_target, nullptr);
  out.p_source = classify(out.h_source, params.head);
  out.p_target = classify(out.h_target, params.head);
  return out;
}

void prepare_pair(PreparedPair& out, const DomainPair& pair, const TrainConfig& cfg, const PpmiMatrix* cached_source,
                  const PpmiMatrix* cached_target) {
  if (pair.source.n_attributes() != pair.target.n_attributes())
    throw DimensionError("prepare_pair: source and target attribute dimensions differ");
  out.source = cached_source ? *cached_source : reconstruct(pair.source, domain_walk_config(cfg, 0), cfg.use_neg);
  out.target = cached_target ? *cached_target : reconstruct(pair.target, domain_walk_config(cfg, 1), cfg.use_neg);
  if (out.source.s.rows() != pair.source.n_nodes || out.target.s.rows() != pair.target.n_nodes)
    throw DimensionError("prepare_pair: PPMI matrix size does not match graph");
  TrainInputs& in = out.inputs;
  in.s_source = &out.source.s;
  in.s_target = &out.target.s;
  in.sx_source = nk::spmm(out.source.s, pair.source.attributes);
  in.sx_target = nk::spmm(out.target.s, pair.target.attributes);
  in.labeled = pair.source.labeled_nodes();
  in.labeled_classes.clear();
  for (Index i : in.labeled) in.labeled_classes.push_back(pair.source.labels[i]);
  in.n_classes = pair.n_classes;
}

// ---------------------------------------------------------------------------

Trainer::Trainer(const DomainPair& pair, TrainConfig cfg, const PpmiMatrix* cached_source,
                 const PpmiMatrix* cached_target)
    : pair_(pair),
      cfg_(std::move(cfg)),
      opt_encoder_(cfg_.lr, cfg_.weight_decay, cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps),
      opt_classifier_(cfg_.lr, cfg_.weight_decay, cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps),
      opt_discriminator_(cfg_.lr, cfg_.weight_decay, cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps) {
  cfg_.validate();
  if (pair.n_classes < 2) throw ConfigError("trainer: at least two classes required");
  prepare_pair(prep_, pair, cfg_, cached_source, cached_target);
  if (prep_.inputs.labeled.empty()) throw ConfigError("trainer: source graph has no labeled node");
  ModelDims dims;
  dims.n_attributes = pair.source.n_attributes();
  dims.hidden = cfg_.hidden;
  dims.embedding = cfg_.embedding;
  dims.classifier_hidden = cfg_.classifier_hidden;
  dims.n_classes = pair.n_classes;
  dims.n_source = pair.source.n_nodes;
  params_ = init_params(dims, cfg_.epsilon, cfg_.shift_mode, derive_seed(cfg_.seed, {0x1417}), cfg_.dropout);
  params_.placement = cfg_.shift_placement;
  source_unlabeled_ = pair.source.unlabeled_nodes();
  target_nodes_.resize(pair.target.n_nodes);
  for (Index i = 0; i < pair.target.n_nodes; ++i) target_nodes_[i] = i;
  refresh_eval();
}

void Trainer::refresh_eval() { eval_ = evaluate_model(prep_.inputs, params_, cfg_.use_shift, cfg_.shift_placement); }

EpochReport Trainer::train_epoch(int m) {
  const auto t0 = std::chrono::steady_clock::now();
  EpochReport rep;
  rep.epoch = m;
  if (cfg_.use_at) rep.lambda2 = cfg_.lambda2_mode == Lambda2Mode::linear ? lambda2(m, cfg_.epochs) : cfg_.lambda2_value;

  // (1) pseudo-labels from the current classifier
  if (cfg_.use_pl) {
    std::span<const Index> anchors(prep_.inputs.labeled);
    std::span<const int> anchor_labels(prep_.inputs.labeled_classes);
    pseudo_source_ = refresh_pseudo_state(prep_.source.p, eval_.p_source, source_unlabeled_, anchors, anchor_labels,
                                          pair_.n_classes, cfg_.alpha, cfg_.beta);
    pseudo_target_ = refresh_pseudo_state(prep_.target.p, eval_.p_target, target_nodes_, {}, {}, pair_.n_classes,
                                          cfg_.alpha, cfg_.beta);
  }

  // (2)-(4) forward both domains, losses, backward with reversal
  ObjectiveSettings st;
  st.lambda1 = cfg_.lambda1;
  st.lambda2 = rep.lambda2;
  st.use_shift = cfg_.use_shift;
  st.use_pl = cfg_.use_pl;
  st.use_at = cfg_.use_at;
  st.train = true;
  st.reverse_gradient = true;
  st.dropout = cfg_.dropout;
  st.placement = cfg_.shift_placement;
  st.source_dropout_seed = derive_seed(cfg_.seed, {0xd0, static_cast<std::uint64_t>(m), 0});
  st.target_dropout_seed = derive_seed(cfg_.seed, {0xd0, static_cast<std::uint64_t>(m), 1});

  nk::Tape tape;
  const ObjectiveVars ov = build_objective(tape, prep_.inputs, params_, cfg_.use_pl ? &pseudo_source_ : nullptr,
                                           cfg_.use_pl ? &pseudo_target_ : nullptr, st);
  if (!std::isfinite(ov.values.total)) throw NumericalError("non-finite loss at epoch " + std::to_string(m));
  tape.backward(ov.total);

  // (5) updates
  const ParamVars& v = ov.params;
  {
    DenseMatrix* ps[] = {&params_.encoder.w1, &params_.encoder.w2};
    const DenseMatrix gs[] = {tape.grad(v.w1), tape.grad(v.w2)};
    opt_encoder_.step(ps, gs);
  }
  {
    DenseMatrix* ps[] = {&params_.head.cls_w1, &params_.head.cls_b1, &params_.head.cls_w2, &params_.head.cls_b2};
    const DenseMatrix gs[] = {tape.grad(v.cls_w1), tape.grad(v.cls_b1), tape.grad(v.cls_w2), tape.grad(v.cls_b2)};
    opt_classifier_.step(ps, gs);
  }
  if (cfg_.use_at) {
    DenseMatrix* ps[] = {&params_.head.disc_w, &params_.head.disc_b};
    const DenseMatrix gs[] = {tape.grad(v.disc_w), tape.grad(v.disc_b)};
    opt_discriminator_.step(ps, gs);
  }
  if (cfg_.use_shift) {
    const double step = cfg_.effective_shift_step();
    update_shift(params_.shift.xi1, tape.grad(v.xi1), step, cfg_.shift_mode, cfg_.epsilon);
    update_shift(params_.shift.xi2, tape.grad(v.xi2), step, cfg_.shift_mode, cfg_.epsilon);
  }

  rep.loss_sup = ov.values.sup;
  rep.loss_at = ov.values.at;
  rep.loss_pl = ov.values.pl;
  rep.loss_total = ov.values.total;
  rep.xi1_norm = params_.shift.xi1.norm();
  rep.xi2_norm = params_.shift.xi2.norm();

  // (6) evaluation; these outputs also seed the next epoch's pseudo-labels
  refresh_eval();
  if ((m + 1) % cfg_.eval_every == 0 || m + 1 == cfg_.epochs) {
    rep.evaluated = true;
    rep.target_entropy = mean_prediction_entropy(eval_.p_target);
    if (pair_.target.has_labels()) {
      const F1Scores f1 = evaluate(eval_.p_target, pair_.target.labels);
      rep.micro_f1 = f1.micro;
      rep.macro_f1 = f1.macro;
    }
    if (pair_.source.has_labels() && !source_unlabeled_.empty()) {
      const auto pred = make_pseudo_labels(eval_.p_source);
      std::size_t hit = 0;
      for (Index i : source_unlabeled_) hit += pred[i] == pair_.source.labels[i];
      rep.source_pseudo_accuracy = static_cast<double>(hit) / static_cast<double>(source_unlabeled_.size());
    }
  }
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

FitResult fit(const DomainPair& pair, const TrainConfig& cfg, const PpmiMatrix* cached_source,
              const PpmiMatrix* cached_target) {
  Trainer trainer(pair, cfg, cached_source, cached_target);
  FitResult out;
  out.reports.reserve(cfg.epochs);
  for (int m = 0; m < cfg.epochs; ++m) out.reports.push_back(trainer.train_epoch(m));
  out.params = trainer.params();
  out.final_eval = trainer.last_eval();
  return out;
}

FitResult fit_source_only(const DomainPair& pair, const TrainConfig& cfg) { return fit(pair, source_only_config(cfg)); }

}  // namespace sgda
