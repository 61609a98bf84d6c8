#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sgda/trainer.hpp"

namespace sgda {

// Small two-domain problem with frozen pseudo-labels, used to check the
// analytic gradients of the full objective.
struct GradFixture {
  DomainPair pair;
  TrainConfig cfg;
  PreparedPair prepared;
  ModelParams params;
  PseudoState pseudo_source, pseudo_target;
  ObjectiveSettings settings;
};

// 12 nodes per domain, 3 classes, narrow layers; dropout masks are fixed.
std::unique_ptr<GradFixture> make_grad_fixture(std::uint64_t seed = 12);

// Parameter groups: W1, W2, xi1, xi2, phi_c, phi_d.
const std::vector<std::string>& gradcheck_groups();

struct GradCheckReport {
  std::vector<std::pair<std::string, double>> groups;  // max rel. error per group
  double max_rel_error = 0.0;
};

// Analytic gradients of the unreversed total against central differences.
GradCheckReport run_gradcheck(GradFixture& fx, double step, const std::vector<std::string>& groups = {});

}  // namespace sgda
