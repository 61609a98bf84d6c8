#include "sgda/gradcheck.hpp"

#include <algorithm>

#include "sgda/errors.hpp"
#include "sgda/random.hpp"

namespace sgda {

std::unique_ptr<GradFixture> make_grad_fixture(std::uint64_t seed) {
  auto fx = std::make_unique<GradFixture>();
  SyntheticConfig sc = make_synthetic_config(12, 3, 5, 1.5, seed);
  sc.source_blocks = {0.6, 0.15};
  sc.target_blocks = {0.5, 0.2};
  sc.target_mean_offset = 0.5;
  fx->pair = generate_pair(sc);
  fx->pair.source = split_labels(fx->pair.source, 0.34, derive_seed(seed, {3}));

  TrainConfig& cfg = fx->cfg;
  cfg.seed = seed;
  cfg.hidden = 6;
  cfg.embedding = 6;
  cfg.classifier_hidden = 5;
  cfg.walk.walks_per_node = 4;
  cfg.walk.walk_length = 8;
  cfg.walk.window = 2;
  prepare_pair(fx->prepared, fx->pair, cfg);

  ModelDims dims;
  dims.n_attributes = sc.dim;
  dims.hidden = cfg.hidden;
  dims.embedding = cfg.embedding;
  dims.classifier_hidden = cfg.classifier_hidden;
  dims.n_classes = 3;
  dims.n_source = fx->pair.source.n_nodes;
  fx->params = init_params(dims, cfg.epsilon, ShiftMode::unbounded, derive_seed(seed, {4}), cfg.dropout);
  // Non-zero biases and discriminator weights so every gradient is generic.
  Rng rng(derive_seed(seed, {5}));
  for (DenseMatrix* b : {&fx->params.head.cls_b1, &fx->params.head.cls_b2, &fx->params.head.disc_b})
    for (Index j = 0; j < b->cols(); ++j) (*b)(0, j) = rng.uniform(-0.3, 0.3);
  for (Index i = 0; i < fx->params.head.disc_w.rows(); ++i) fx->params.head.disc_w(i, 0) = rng.uniform(-0.5, 0.5);

  const TrainInputs& in = fx->prepared.inputs;
  const EvalOutputs ev = evaluate_model(in, fx->params, true, ShiftPlacement::post_activation);
  const auto unlabeled = fx->pair.source.unlabeled_nodes();
  std::vector<Index> target_nodes(fx->pair.target.n_nodes);
  for (Index i = 0; i < fx->pair.target.n_nodes; ++i) target_nodes[i] = i;
  fx->pseudo_source = refresh_pseudo_state(fx->prepared.source.p, ev.p_source, unlabeled, in.labeled,
                                           in.labeled_classes, 3, cfg.alpha, cfg.beta);
  fx->pseudo_target =
      refresh_pseudo_state(fx->prepared.target.p, ev.p_target, target_nodes, {}, {}, 3, cfg.alpha, cfg.beta);

  ObjectiveSettings& st = fx->settings;
  st.lambda1 = 1.0;
  st.lambda2 = 0.7;
  st.train = true;
  st.dropout = cfg.dropout;
  st.reverse_gradient = false;
  st.source_dropout_seed = derive_seed(seed, {6});
  st.target_dropout_seed = derive_seed(seed, {7});
  return fx;
}

const std::vector<std::string>& gradcheck_groups() {
  static const std::vector<std::string> groups = {"W1", "W2", "xi1", "xi2", "phi_c", "phi_d"};
  return groups;
}

GradCheckReport run_gradcheck(GradFixture& fx, double step, const std::vector<std::string>& groups) {
  const std::vector<std::string>& wanted = groups.empty() ? gradcheck_groups() : groups;
  for (const auto& g : wanted)
    if (std::find(gradcheck_groups().begin(), gradcheck_groups().end(), g) == gradcheck_groups().end())
      throw ConfigError("gradcheck: unknown group '" + g + "'");

  ObjectiveSettings st = fx.settings;
  st.reverse_gradient = false;
  const TrainInputs& in = fx.prepared.inputs;

  nk::Tape tape;
  const ObjectiveVars ov = build_objective(tape, in, fx.params, &fx.pseudo_source, &fx.pseudo_target, st);
  tape.backward(ov.total);
  const ParamVars& v = ov.params;
  ModelParams& p = fx.params;

  struct Entry {
    const char* group;
    const char* name;
    DenseMatrix* value;
    nk::Var var;
  };
  const Entry entries[] = {
      {"W1", "W1", &p.encoder.w1, v.w1},
      {"W2", "W2", &p.encoder.w2, v.w2},
      {"xi1", "xi1", &p.shift.xi1, v.xi1},
      {"xi2", "xi2", &p.shift.xi2, v.xi2},
      {"phi_c", "classifier.W1", &p.head.cls_w1, v.cls_w1},
      {"phi_c", "classifier.b1", &p.head.cls_b1, v.cls_b1},
      {"phi_c", "classifier.W2", &p.head.cls_w2, v.cls_w2},
      {"phi_c", "classifier.b2", &p.head.cls_b2, v.cls_b2},
      {"phi_d", "discriminator.w", &p.head.disc_w, v.disc_w},
      {"phi_d", "discriminator.b", &p.head.disc_b, v.disc_b},
  };
  std::vector<DenseMatrix> analytic;
  analytic.reserve(std::size(entries));
  for (const Entry& e : entries) analytic.push_back(tape.grad(e.var));

  auto loss = [&] {
    nk::Tape t;
    return build_objective(t, in, fx.params, &fx.pseudo_source, &fx.pseudo_target, st).values.total;
  };

  GradCheckReport report;
  for (const auto& g : wanted) {
    std::vector<nk::GradCheckParam> params;
    for (std::size_t k = 0; k < std::size(entries); ++k)
      if (g == entries[k].group) params.push_back({entries[k].name, entries[k].value, &analytic[k]});
    const nk::GradCheckResult r = nk::grad_check(loss, params, step);
    report.groups.emplace_back(g, r.max_rel_error);
    report.max_rel_error = std::max(report.max_rel_error, r.max_rel_error);
  }
  return report;
}

}  // namespace sgda
