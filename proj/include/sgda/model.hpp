#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "sgda/numkernel.hpp"

namespace sgda {

enum class ShiftMode { unbounded, projected };
// Where the hidden-layer shift enters: added to the activated convolution
// output (post) or to the pre-activation (pre).
enum class ShiftPlacement { post_activation, pre_activation };

struct ModelDims {
  Index n_attributes = 0;
  Index hidden = 512;
  Index embedding = 512;
  Index classifier_hidden = 128;
  int n_classes = 0;
  Index n_source = 0;  // one shift row per source node
};

struct EncoderParams {
  DenseMatrix w1;  // d x hidden
  DenseMatrix w2;  // hidden x embedding
  double dropout = 0.1;
};

struct ShiftParams {
  DenseMatrix xi1;  // n_source x hidden
  DenseMatrix xi2;  // n_source x embedding
  double epsilon = 0.5;
  ShiftMode mode = ShiftMode::unbounded;
};

struct HeadParams {
  DenseMatrix cls_w1;  // embedding x classifier_hidden
  DenseMatrix cls_b1;  // 1 x classifier_hidden
  DenseMatrix cls_w2;  // classifier_hidden x C
  DenseMatrix cls_b2;  // 1 x C
  DenseMatrix disc_w;  // embedding x 1
  DenseMatrix disc_b;  // 1 x 1
};

struct ModelParams {
  EncoderParams encoder;
  ShiftParams shift;
  HeadParams head;
  ShiftPlacement placement = ShiftPlacement::post_activation;

  ModelDims dims() const;
};

// Glorot-uniform encoder and classifier weights, zero biases, a zero
// discriminator, xi ~ U(-eps, eps) (rescaled onto the Frobenius ball in
// projected mode).
ModelParams init_params(const ModelDims& dims, double epsilon, ShiftMode mode, std::uint64_t seed,
                        double dropout = 0.1);

// xi <- xi * min(1, eps / ||xi||_F)
void project_frobenius(DenseMatrix& xi, double epsilon);

DenseMatrix encode_target(const SparseMatrix& s, const DenseMatrix& x, const EncoderParams& enc, bool train,
                          std::uint64_t dropout_seed);
DenseMatrix encode_source(const SparseMatrix& s, const DenseMatrix& x, const EncoderParams& enc,
                          const ShiftParams& shift, bool use_shift, bool train, std::uint64_t dropout_seed,
                          ShiftPlacement placement = ShiftPlacement::post_activation);

DenseMatrix classifier_logits(const DenseMatrix& h, const HeadParams& head);
DenseMatrix classify(const DenseMatrix& h, const HeadParams& head);
DenseMatrix discriminator_logits(const DenseMatrix& h, const HeadParams& head);
DenseMatrix discriminate(const DenseMatrix& h, const HeadParams& head);

// ---------------------------------------------------------------------------
// Tape-side forward

struct ParamVars {
  nk::Var w1, w2, xi1, xi2;
  nk::Var cls_w1, cls_b1, cls_w2, cls_b2;
  nk::Var disc_w, disc_b;
};

// Registers every parameter as a tape leaf; xi only when `with_shift`.
ParamVars register_params(nk::Tape& tape, const ModelParams& params, bool with_shift);

// `sx` is the constant S * X of the domain. Shift vars are used when valid.
nk::Var encode(nk::Tape& tape, const SparseMatrix& s, nk::Var sx, const ParamVars& vars, double dropout, bool train,
               std::uint64_t dropout_seed, ShiftPlacement placement, bool shifted);
nk::Var classifier_logits(nk::Tape& tape, nk::Var h, const ParamVars& vars);
nk::Var discriminator_logits(nk::Tape& tape, nk::Var h, const ParamVars& vars);

// ---------------------------------------------------------------------------
// Checkpoint container

struct Checkpoint {
  ModelParams params;
  std::string config_hash;
  std::map<std::string, std::string> metadata;
};

// Versioned text container of named arrays; values are hex floats so the
// round trip is bit-exact.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sgda
