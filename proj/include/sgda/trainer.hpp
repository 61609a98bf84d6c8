#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sgda/graph_io.hpp"
#include "sgda/model.hpp"
#include "sgda/objectives.hpp"
#include "sgda/ppmi.hpp"

namespace sgda {

enum class Lambda2Mode { linear, constant };

struct TrainConfig {
  int epochs = 200;
  double lr = 1e-3;
  double weight_decay = 1e-3;
  double dropout = 0.1;
  double lambda1 = 1.0;
  Lambda2Mode lambda2_mode = Lambda2Mode::linear;
  double lambda2_value = 1.0;  // used in constant mode
  double epsilon = 0.5;
  double alpha = 0.8;
  double beta = 1.2;
  ShiftMode shift_mode = ShiftMode::unbounded;
  double shift_step = -1.0;  // negative: same as lr
  ShiftPlacement shift_placement = ShiftPlacement::post_activation;
  Index hidden = 512;
  Index embedding = 512;
  Index classifier_hidden = 128;
  WalkConfig walk;  // walk.seed is ignored; walk seeds derive from `seed`
  bool use_neg = true;
  bool use_shift = true;
  bool use_at = true;
  bool use_pl = true;
  std::uint64_t seed = 0;
  int eval_every = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
  double effective_shift_step() const { return shift_step < 0 ? lr : shift_step; }
};

// Canonical key=value listing of every field, in a fixed order.
std::vector<std::pair<std::string, std::string>> to_key_values(const TrainConfig& cfg);
// Throws ConfigError on an unknown key or a malformed value.
void apply_key_value(TrainConfig& cfg, const std::string& key, const std::string& value);
// Reads flat "key=value" lines ('#' comments, blank lines allowed).
void apply_config_file(TrainConfig& cfg, const std::string& path);
// 16 hex digits of FNV-1a over the canonical listing.
std::string config_hash(const TrainConfig& cfg);
std::string fnv1a_hex(std::string_view data);
// "sgda", "wo-neg", ..., "supervised-only", "source-only".
std::string variant_name(const TrainConfig& cfg);

// Encoder + classifier + supervised loss on the original adjacency.
TrainConfig source_only_config(TrainConfig cfg);

// Walk configuration with the per-domain seed used by training.
WalkConfig domain_walk_config(const TrainConfig& cfg, int domain);

struct EpochReport {
  int epoch = 0;
  double lambda2 = 0.0;
  double loss_sup = 0.0;
  double loss_at = 0.0;
  double loss_pl = 0.0;
  double loss_total = 0.0;
  double xi1_norm = 0.0;
  double xi2_norm = 0.0;
  bool evaluated = false;
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  double source_pseudo_accuracy = 0.0;
  double target_entropy = 0.0;  // entropy of the mean target prediction
  double wall_seconds = 0.0;
};

// Header and rows of the per-epoch CSV. Wall time is not part of it, so
// identical runs produce identical bytes.
std::string epoch_csv_header();
std::string epoch_csv_row(const EpochReport& r);

double lambda2(int m, int max_epoch);

// Normalized step against the composed gradient g, then projection in
// projected mode: xi <- xi - step * g / ||g||_F. No-op when g = 0.
void update_shift(DenseMatrix& xi, const DenseMatrix& grad, double step, ShiftMode mode, double epsilon);

// Adam moments with decoupled weight decay.
class AdamW {
 public:
  AdamW(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  // One step over matched parameter / gradient lists. The slot list is fixed
  // by the first call. Throws NumericalError on a non-finite gradient.
  void step(std::span<DenseMatrix* const> params, std::span<const DenseMatrix> grads);
  long steps() const { return t_; }

 private:
  double lr_, wd_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<DenseMatrix> m_, v_;
};

struct F1Scores {
  double micro = 0.0;
  double macro = 0.0;
};

// Single-label multiclass F1. Classes with no support and no predictions
// contribute 0 to the macro average.
F1Scores evaluate(std::span<const int> predictions, std::span<const int> labels, int n_classes);
F1Scores evaluate(const DenseMatrix& probs, std::span<const int> labels);

// Inputs shared by every loss evaluation of one training run.
struct TrainInputs {
  const SparseMatrix* s_source = nullptr;
  const SparseMatrix* s_target = nullptr;
  DenseMatrix sx_source;  // S^s X^s
  DenseMatrix sx_target;
  std::vector<Index> labeled;        // source rows with training labels
  std::vector<int> labeled_classes;  // their labels
  int n_classes = 0;
};

struct ObjectiveSettings {
  double lambda1 = 1.0;
  double lambda2 = 0.0;
  bool include_supervised = true;
  bool use_shift = true;
  bool use_pl = true;
  bool use_at = true;
  bool train = true;  // dropout on
  bool reverse_gradient = true;
  double dropout = 0.1;
  std::uint64_t source_dropout_seed = 0;
  std::uint64_t target_dropout_seed = 0;
  ShiftPlacement placement = ShiftPlacement::post_activation;
};

struct ObjectiveVars {
  ParamVars params;
  nk::Var h_source, h_target;  // target var invalid when unused
  nk::Var total;
  LossReport values;
};

// Records the full objective L_sup + lambda1 L_pl + lambda2 L_at on `tape`.
// With reverse_gradient the discriminator input sits behind a reversal
// boundary; otherwise gradients are those of the scalar total.
ObjectiveVars build_objective(nk::Tape& tape, const TrainInputs& in, const ModelParams& params,
                              const PseudoState* pseudo_source, const PseudoState* pseudo_target,
                              const ObjectiveSettings& settings);

struct EvalOutputs {
  DenseMatrix h_source, h_target;
  DenseMatrix p_source, p_target;
};

EvalOutputs evaluate_model(const TrainInputs& in, const ModelParams& params, bool use_shift,
                           ShiftPlacement placement);

// Builds the inputs (including P^s, P^t) for `pair` under `cfg`.
struct PreparedPair {
  PpmiMatrix source, target;
  TrainInputs inputs;
};
// PreparedPair holds pointers into itself; it is neither copied nor moved.
void prepare_pair(PreparedPair& out, const DomainPair& pair, const TrainConfig& cfg,
                  const PpmiMatrix* cached_source = nullptr, const PpmiMatrix* cached_target = nullptr);

class Trainer {
 public:
  Trainer(const DomainPair& pair, TrainConfig cfg, const PpmiMatrix* cached_source = nullptr,
          const PpmiMatrix* cached_target = nullptr);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  // Runs epoch m (0-based) and returns its report.
  EpochReport train_epoch(int m);

  const ModelParams& params() const { return params_; }
  ModelParams& mutable_params() { return params_; }
  const TrainConfig& config() const { return cfg_; }
  const EvalOutputs& last_eval() const { return eval_; }
  const PreparedPair& prepared() const { return prep_; }
  const PseudoState& pseudo_source() const { return pseudo_source_; }
  const PseudoState& pseudo_target() const { return pseudo_target_; }

 private:
  void refresh_eval();

  const DomainPair& pair_;
  TrainConfig cfg_;
  PreparedPair prep_;
  ModelParams params_;
  AdamW opt_encoder_, opt_classifier_, opt_discriminator_;
  EvalOutputs eval_;
  PseudoState pseudo_source_, pseudo_target_;
  std::vector<Index> source_unlabeled_, target_nodes_;
};

struct FitResult {
  ModelParams params;
  std::vector<EpochReport> reports;
  EvalOutputs final_eval;
};

FitResult fit(const DomainPair& pair, const TrainConfig& cfg, const PpmiMatrix* cached_source = nullptr,
              const PpmiMatrix* cached_target = nullptr);

FitResult fit_source_only(const DomainPair& pair, const TrainConfig& cfg);

// Entropy of the column mean of a probability matrix.
double mean_prediction_entropy(const DenseMatrix& probs);

}  // namespace sgda
