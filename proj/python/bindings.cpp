#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "commands.hpp"
#include "sgda/errors.hpp"
#include "sgda/gradcheck.hpp"
#include "sgda/graph_io.hpp"
#include "sgda/objectives.hpp"
#include "sgda/random.hpp"
#include "sgda/ppmi.hpp"
#include "sgda/trainer.hpp"

namespace py = pybind11;
using namespace sgda;

namespace {

SparseMatrix sparse_of(const DenseMatrix& d) { return d.sparseView(); }
DenseMatrix dense_of(const SparseMatrix& s) { return DenseMatrix(s); }

py::dict graph_dict(const Graph& g) {
  py::dict d;
  d["adjacency"] = dense_of(g.adjacency);
  d["attributes"] = g.attributes;
  d["labels"] = g.labels;
  d["labeled"] = g.labeled_nodes();
  return d;
}

Graph graph_of(const DenseMatrix& adjacency) {
  Graph g;
  g.n_nodes = adjacency.rows();
  g.adjacency = sparse_of(adjacency);
  g.attributes = DenseMatrix::Zero(g.n_nodes, 1);
  return g;
}

DomainPair synthetic(Index nodes, int classes, Index dim, double separation, double p_in, double p_out,
                     double target_p_in, double target_p_out, double offset, double cov_scale, std::uint64_t seed) {
  SyntheticConfig cfg = make_synthetic_config(nodes, classes, dim, separation, seed);
  cfg.source_blocks = {p_in, p_out};
  cfg.target_blocks = {target_p_in, target_p_out};
  cfg.target_mean_offset = offset;
  cfg.target_cov_scale = cov_scale;
  return generate_pair(cfg);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Semi-supervised graph domain adaptation core";

  py::register_exception<Error>(m, "SgdaError");
  py::register_exception<ConfigError>(m, "ConfigError", m.attr("SgdaError"));
  py::register_exception<NumericalError>(m, "NumericalError", m.attr("SgdaError"));

  m.def(
      "synthetic_pair",
      [](Index nodes, int classes, Index dim, double separation, double p_in, double p_out, double target_p_in,
         double target_p_out, double offset, double cov_scale, std::uint64_t seed) {
        const DomainPair p =
            synthetic(nodes, classes, dim, separation, p_in, p_out, target_p_in, target_p_out, offset, cov_scale, seed);
        py::dict d;
        d["source"] = graph_dict(p.source);
        d["target"] = graph_dict(p.target);
        d["n_classes"] = p.n_classes;
        return d;
      },
      py::arg("nodes") = 300, py::arg("classes") = 3, py::arg("dim") = 16, py::arg("separation") = 0.5,
      py::arg("p_in") = 0.05, py::arg("p_out") = 0.005, py::arg("target_p_in") = 0.1, py::arg("target_p_out") = 0.01,
      py::arg("offset") = 1.5, py::arg("cov_scale") = 1.0, py::arg("seed") = 0);

  m.def(
      "reconstruct",
      [](const DenseMatrix& adjacency, Index walks_per_node, Index walk_length, Index window, std::uint64_t seed,
         bool use_ppmi, bool count_self) {
        const WalkConfig w{walks_per_node, walk_length, window, seed, count_self};
        const PpmiMatrix r = reconstruct(graph_of(adjacency), w, use_ppmi);
        return py::make_tuple(dense_of(r.p), dense_of(r.s));
      },
      py::arg("adjacency"), py::arg("walks_per_node") = WalkConfig{}.walks_per_node,
      py::arg("walk_length") = WalkConfig{}.walk_length, py::arg("window") = WalkConfig{}.window,
      py::arg("seed") = 0, py::arg("use_ppmi") = true, py::arg("count_self") = true,
      "Reconstructed topology P and its propagation matrix S, both dense.");

  m.def("ppmi", [](const DenseMatrix& f) { return dense_of(ppmi(sparse_of(f))); }, py::arg("counts"));
  m.def("propagation", [](const DenseMatrix& p) { return dense_of(propagation(sparse_of(p))); }, py::arg("p"));

  m.def(
      "posterior_scores",
      [](const DenseMatrix& p, const std::vector<int>& labels, int n_classes) {
        std::vector<Index> nodes(labels.size());
        for (std::size_t i = 0; i < nodes.size(); ++i) nodes[i] = static_cast<Index>(i);
        return posterior_scores(sparse_of(p), labels, nodes, n_classes);
      },
      py::arg("p"), py::arg("pseudo_labels"), py::arg("n_classes"));

  m.def(
      "anneal_weights",
      [](const std::vector<double>& scores, double alpha, double beta) { return anneal_weights(scores, alpha, beta); },
      py::arg("scores"), py::arg("alpha") = 0.8, py::arg("beta") = 1.2);

  m.def(
      "f1_scores",
      [](const std::vector<int>& pred, const std::vector<int>& labels, int n_classes) {
        const F1Scores f = evaluate(pred, labels, n_classes);
        return py::make_tuple(f.micro, f.macro);
      },
      py::arg("predictions"), py::arg("labels"), py::arg("n_classes"));

  m.def(
      "gradcheck",
      [](double step, std::uint64_t seed) {
        auto fx = make_grad_fixture(seed);
        std::map<std::string, double> out;
        for (const auto& [g, e] : run_gradcheck(*fx, step).groups) out[g] = e;
        return out;
      },
      py::arg("step") = 1e-5, py::arg("seed") = 12);

  m.def(
      "fit_synthetic",
      [](std::uint64_t data_seed, const std::map<std::string, std::string>& config, double label_rate) {
        const DomainPair base = synthetic(300, 3, 16, 0.5, 0.05, 0.005, 0.1, 0.01, 1.5, 1.0, data_seed);
        TrainConfig cfg;
        for (const auto& [k, v] : config) apply_key_value(cfg, k, v);
        DomainPair pair = base;
        pair.source = split_labels(pair.source, label_rate, derive_seed(cfg.seed, {0x1abe1}));
        FitResult r;
        {
          py::gil_scoped_release release;
          r = fit(pair, cfg);
        }
        std::vector<double> micro, macro, entropy;
        for (const auto& e : r.reports) {
          micro.push_back(e.micro_f1);
          macro.push_back(e.macro_f1);
          entropy.push_back(e.target_entropy);
        }
        py::dict d;
        d["micro_f1"] = micro;
        d["macro_f1"] = macro;
        d["target_entropy"] = entropy;
        d["target_probabilities"] = r.final_eval.p_target;
        d["variant"] = variant_name(cfg);
        return d;
      },
      py::arg("data_seed"), py::arg("config") = std::map<std::string, std::string>{}, py::arg("label_rate") = 0.05,
      "Train on the default synthetic pair; config keys are TrainConfig field names.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run a command-line subcommand in-process; returns (exit code, stdout, stderr).");
}
