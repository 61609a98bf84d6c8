#include "commands.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>
#include <unistd.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "sgda/errors.hpp"
#include "sgda/gradcheck.hpp"
#include "sgda/model.hpp"
#include "sgda/random.hpp"

namespace sgda::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Output directory built under a temporary name and renamed into place on
// commit; an uncommitted directory is removed.
class StagedDir {
 public:
  explicit StagedDir(fs::path final_path) : final_(std::move(final_path)) {
    const fs::path parent = final_.has_parent_path() ? final_.parent_path() : fs::path(".");
    fs::create_directories(parent);
    tmp_ = parent / ("." + final_.filename().string() + ".tmp-" + std::to_string(::getpid()) + "-" +
                     std::to_string(counter_++));
    fs::remove_all(tmp_);
    if (!fs::create_directories(tmp_)) throw IoError("cannot create " + tmp_.string());
  }
  StagedDir(const StagedDir&) = delete;
  StagedDir& operator=(const StagedDir&) = delete;
  ~StagedDir() {
    std::error_code ec;
    if (!committed_) fs::remove_all(tmp_, ec);
  }

  const fs::path& path() const { return tmp_; }

  void commit() {
    std::error_code ec;
    fs::remove_all(final_, ec);
    fs::rename(tmp_, final_);
    committed_ = true;
  }

 private:
  static inline std::atomic<int> counter_{0};
  fs::path final_, tmp_;
  bool committed_ = false;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string timestamp() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

ordered_json config_json(const TrainConfig& cfg) {
  ordered_json j = ordered_json::object();
  for (const auto& [k, v] : to_key_values(cfg)) {
    ordered_json typed = ordered_json::parse(v, nullptr, false);
    j[k] = typed.is_discarded() ? ordered_json(v) : typed;
  }
  return j;
}

std::string adjacency_digest(const SparseMatrix& a) {
  std::string s = std::to_string(a.rows()) + ":";
  for (Index i = 0; i < a.outerSize(); ++i)
    for (SparseMatrix::InnerIterator it(a, i); it; ++it) s += std::to_string(i) + "," + std::to_string(it.col()) + ";";
  return fnv1a_hex(s);
}

// Flag -> TrainConfig key. Values are applied through apply_key_value so that
// flags and config files share one parser.
const std::vector<std::pair<std::string, std::string>>& train_flags() {
  static const std::vector<std::pair<std::string, std::string>> flags = {
      {"--epochs", "epochs"},
      {"--lr", "lr"},
      {"--weight-decay", "weight_decay"},
      {"--dropout", "dropout"},
      {"--lambda1", "lambda1"},
      {"--lambda2-mode", "lambda2_mode"},
      {"--lambda2-value", "lambda2_value"},
      {"--epsilon", "epsilon"},
      {"--alpha", "alpha"},
      {"--beta", "beta"},
      {"--shift-mode", "shift_mode"},
      {"--shift-step", "shift_step"},
      {"--shift-placement", "shift_placement"},
      {"--hidden", "hidden"},
      {"--embedding", "embedding"},
      {"--classifier-hidden", "classifier_hidden"},
      {"--eval-every", "eval_every"},
  };
  return flags;
}

const std::vector<std::pair<std::string, std::string>>& walk_flags() {
  static const std::vector<std::pair<std::string, std::string>> flags = {
      {"--walks-per-node", "walks_per_node"},
      {"--walk-length", "walk_length"},
      {"--window", "window"},
      {"--seed", "seed"},
  };
  return flags;
}

struct FlagBinding {
  std::map<std::string, std::string> values;
  std::vector<std::pair<CLI::Option*, std::string>> options;

  void bind(CLI::App* app, const std::vector<std::pair<std::string, std::string>>& table) {
    for (const auto& [flag, key] : table) options.emplace_back(app->add_option(flag, values[key], key), key);
  }
  void apply(TrainConfig& cfg) const {
    for (const auto& [opt, key] : options)
      if (opt->count() > 0) apply_key_value(cfg, key, values.at(key));
  }
};

struct AblationFlags {
  bool wo_neg = false, wo_shift = false, wo_at = false, wo_pl = false, no_self = false;

  void bind(CLI::App* app, bool all) {
    app->add_flag("--wo-neg,--no-neg", wo_neg, "use the original adjacency instead of PPMI");
    app->add_flag("--no-self", no_self, "do not count self co-occurrence");
    if (!all) return;
    app->add_flag("--wo-shift", wo_shift, "disable source shift parameters");
    app->add_flag("--wo-at", wo_at, "disable the adversarial loss");
    app->add_flag("--wo-pl", wo_pl, "disable pseudo-labeling");
  }
  void apply(TrainConfig& cfg) const {
    if (wo_neg) cfg.use_neg = false;
    if (wo_shift) cfg.use_shift = false;
    if (wo_at) cfg.use_at = false;
    if (wo_pl) cfg.use_pl = false;
    if (no_self) cfg.walk.count_self = false;
  }
};

struct PpmiCache {
  PpmiMatrix source, target;
};

PpmiCache load_ppmi_cache(const fs::path& dir, const std::string& expected_key) {
  const fs::path meta = dir / "ppmi.meta";
  if (!fs::exists(meta)) throw IoError("no PPMI cache at " + dir.string());
  std::istringstream ss(read_text(meta));
  std::string line, key;
  while (std::getline(ss, line))
    if (line.rfind("cache_key=", 0) == 0) key = line.substr(10);
  if (key != expected_key)
    throw StaleCacheError("PPMI cache at " + dir.string() + " was built with different walk settings or data (key " +
                          key + ", expected " + expected_key + "); regenerate it with `sgda ppmi`");
  PpmiCache c;
  c.source.p = load_coo(dir / "source.ppmi");
  c.target.p = load_coo(dir / "target.ppmi");
  c.source.s = propagation(c.source.p);
  c.target.s = propagation(c.target.p);
  return c;
}

// ---------------------------------------------------------------------------

struct SynthOptions {
  fs::path out;
  Index nodes = 300;
  int classes = 3;
  Index dim = 16;
  double separation = 0.5;
  double p_in = 0.05, p_out = 0.005;
  double target_p_in = 0.1, target_p_out = 0.01;
  double offset = 1.5;
  double cov_scale = 1.0;
  double attr_std = 1.0;
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthOptions& o, std::ostream& out) {
  if (o.classes < 2) throw ConfigError("synth: --classes must be >= 2");
  SyntheticConfig cfg = make_synthetic_config(o.nodes, o.classes, o.dim, o.separation, o.seed);
  cfg.source_blocks = {o.p_in, o.p_out};
  cfg.target_blocks = {o.target_p_in, o.target_p_out};
  cfg.target_mean_offset = o.offset;
  cfg.target_cov_scale = o.cov_scale;
  cfg.attribute_std = o.attr_std;
  cfg.validate();
  const DomainPair pair = generate_pair(cfg);

  StagedDir dir(o.out);
  for (const auto& [name, g] : {std::pair<const char*, const Graph*>{"source", &pair.source}, {"target", &pair.target}}) {
    write_edges(dir.path() / (std::string(name) + ".edges"), g->adjacency);
    write_attributes(dir.path() / (std::string(name) + ".attr"), g->attributes);
    write_labels(dir.path() / (std::string(name) + ".labels"), g->labels);
  }
  ordered_json spec = {
      {"nodes", o.nodes},
      {"classes", o.classes},
      {"dim", o.dim},
      {"separation", o.separation},
      {"source_blocks", {{"p_in", cfg.source_blocks.p_in}, {"p_out", cfg.source_blocks.p_out}}},
      {"target_blocks", {{"p_in", cfg.target_blocks.p_in}, {"p_out", cfg.target_blocks.p_out}}},
      {"target_mean_offset", o.offset},
      {"target_cov_scale", o.cov_scale},
      {"attribute_std", o.attr_std},
      {"seed", o.seed},
  };
  write_text(dir.path() / "synth.json", spec.dump(2) + "\n");
  dir.commit();
  out << "wrote synthetic pair to " << o.out.string() << " (" << o.nodes << " nodes per domain, " << o.classes
      << " classes)\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct PpmiOptions {
  fs::path data;
  fs::path out;
  FlagBinding flags;
  AblationFlags ablation;
};

int cmd_ppmi(const PpmiOptions& o, std::ostream& out) {
  TrainConfig cfg;
  o.flags.apply(cfg);
  o.ablation.apply(cfg);
  if (cfg.use_neg) cfg.walk.validate();
  const DomainPair pair = load_data_dir(o.data);
  const fs::path target_dir = o.out.empty() ? o.data / "ppmi" : o.out;
  const std::string key = ppmi_cache_key(cfg, pair);
  const PpmiMatrix ps = reconstruct(pair.source, domain_walk_config(cfg, 0), cfg.use_neg);
  const PpmiMatrix pt = reconstruct(pair.target, domain_walk_config(cfg, 1), cfg.use_neg);

  StagedDir dir(target_dir);
  save_coo(dir.path() / "source.ppmi", ps.p);
  save_coo(dir.path() / "target.ppmi", pt.p);
  std::string meta = "cache_key=" + key + "\n";
  meta += std::string("use_neg=") + (cfg.use_neg ? "true" : "false") + "\n";
  for (const auto& [k, v] : to_key_values(cfg))
    if (k == "walks_per_node" || k == "walk_length" || k == "window" || k == "count_self" || k == "seed")
      meta += k + "=" + v + "\n";
  write_text(dir.path() / "ppmi.meta", meta);
  dir.commit();
  out << "PPMI cache " << key << ": source nnz " << ps.p.nonZeros() << ", target nnz " << pt.p.nonZeros() << " -> "
      << target_dir.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct TrainOptions {
  fs::path data;
  fs::path out;
  std::string config_file;
  std::string ppmi_cache;
  std::optional<double> label_rate;
  std::string labeled_nodes;
  int seeds = 1;
  int jobs = 1;
  int checkpoint_every = 0;
  bool source_only = false;
  FlagBinding flags;
  AblationFlags ablation;
};

DomainPair with_source_labels(DomainPair pair, const TrainOptions& o, const TrainConfig& cfg) {
  if (!o.labeled_nodes.empty()) {
    std::ifstream in(o.labeled_nodes);
    if (!in) throw IoError("cannot open " + o.labeled_nodes);
    std::vector<bool> mask(pair.source.n_nodes, false);
    long long id;
    while (in >> id) {
      if (id < 0 || id >= pair.source.n_nodes) throw IndexError("labeled node id out of range: " + std::to_string(id));
      if (pair.source.labels.empty() || pair.source.labels[id] < 0)
        throw ValueError("labeled node " + std::to_string(id) + " has no label");
      mask[id] = true;
    }
    pair.source.labeled_mask = mask;
  } else {
    pair.source = split_labels(pair.source, o.label_rate.value_or(0.05), derive_seed(cfg.seed, {0x1abe1}));
  }
  return pair;
}

struct RunOutcome {
  FitResult fit;
  std::string config_hash;
  double seconds = 0.0;
};

RunOutcome train_one(const TrainOptions& o, const TrainConfig& cfg, const DomainPair& loaded, const fs::path& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const DomainPair pair = with_source_labels(loaded, o, cfg);
  std::optional<PpmiCache> cache;
  if (!o.ppmi_cache.empty()) cache = load_ppmi_cache(o.ppmi_cache, ppmi_cache_key(cfg, pair));

  const std::string started = timestamp();
  Trainer trainer(pair, cfg, cache ? &cache->source : nullptr, cache ? &cache->target : nullptr);
  RunOutcome outcome;
  outcome.config_hash = config_hash(cfg);
  std::string csv = epoch_csv_header();
  for (int m = 0; m < cfg.epochs; ++m) {
    EpochReport rep;
    try {
      rep = trainer.train_epoch(m);
    } catch (const NumericalError&) {
      throw NumericalError("numerical failure at epoch " + std::to_string(m) + "; completed epochs:\n" + csv);
    }
    csv += epoch_csv_row(rep);
    outcome.fit.reports.push_back(rep);
    if (o.checkpoint_every > 0 && (m + 1) % o.checkpoint_every == 0 && m + 1 < cfg.epochs) {
      fs::create_directories(dir / "checkpoints");
      Checkpoint ck{trainer.params(), outcome.config_hash, {}};
      for (const auto& [k, v] : to_key_values(cfg)) ck.metadata["config." + k] = v;
      save_checkpoint(dir / "checkpoints" / ("epoch_" + std::to_string(m + 1) + ".ckpt"), ck);
    }
  }
  outcome.fit.params = trainer.params();
  outcome.fit.final_eval = trainer.last_eval();
  outcome.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  write_text(dir / "epochs.csv", csv);
  Checkpoint ck{trainer.params(), outcome.config_hash, {}};
  for (const auto& [k, v] : to_key_values(cfg)) ck.metadata["config." + k] = v;
  save_checkpoint(dir / "checkpoint.ckpt", ck);

  const EpochReport& last = outcome.fit.reports.back();
  ordered_json summary = {
      {"variant", variant_name(cfg)},
      {"config_hash", outcome.config_hash},
      {"epochs", cfg.epochs},
      {"final",
       {{"micro_f1", last.micro_f1},
        {"macro_f1", last.macro_f1},
        {"target_entropy", last.target_entropy},
        {"source_pseudo_accuracy", last.source_pseudo_accuracy},
        {"loss_total", last.loss_total},
        {"loss_sup", last.loss_sup},
        {"loss_pl", last.loss_pl},
        {"loss_at", last.loss_at}}},
      {"labeled_source_nodes", pair.source.labeled_nodes().size()},
      {"config", config_json(cfg)},
  };
  write_text(dir / "summary.json", summary.dump(2) + "\n");

  ordered_json manifest = {
      {"command", "train"},
      {"config_hash", outcome.config_hash},
      {"root_seed", cfg.seed},
      {"variant", variant_name(cfg)},
      {"inputs",
       {{"data", o.data.string()},
        {"config_file", o.config_file},
        {"ppmi_cache", o.ppmi_cache},
        {"labeled_nodes", o.labeled_nodes},
        {"label_rate", o.labeled_nodes.empty() ? o.label_rate.value_or(0.05) : 0.0}}},
      {"output_dir", o.out.string()},
      {"started_at", started},
      {"finished_at", timestamp()},
      {"wall_seconds", outcome.seconds},
      {"config", config_json(cfg)},
  };
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  return outcome;
}

int cmd_train(const TrainOptions& o, std::ostream& out) {
  if (!o.labeled_nodes.empty() && o.label_rate) throw ConfigError("train: --label-rate and --labeled-nodes conflict");
  if (o.seeds < 1 || o.jobs < 1) throw ConfigError("train: --seeds and --jobs must be >= 1");
  TrainConfig cfg;
  if (!o.config_file.empty()) apply_config_file(cfg, o.config_file);
  o.flags.apply(cfg);
  o.ablation.apply(cfg);
  if (o.source_only) cfg = source_only_config(cfg);
  cfg.validate();
  const DomainPair pair = load_data_dir(o.data);
  if (pair.n_classes < 2) throw ConfigError("train: at least two classes required");

  StagedDir staged(o.out);
  if (o.seeds == 1) {
    const RunOutcome r = train_one(o, cfg, pair, staged.path());
    staged.commit();
    const EpochReport& last = r.fit.reports.back();
    out << std::left << std::setw(18) << "variant" << variant_name(cfg) << "\n"
        << std::setw(18) << "config hash" << r.config_hash << "\n"
        << std::setw(18) << "target micro-F1" << std::fixed << std::setprecision(4) << last.micro_f1 << "\n"
        << std::setw(18) << "target macro-F1" << last.macro_f1 << "\n"
        << std::setw(18) << "seconds" << std::setprecision(2) << r.seconds << "\n";
    return kOk;
  }

  std::vector<std::optional<RunOutcome>> results(o.seeds);
  std::vector<std::string> errors(o.seeds);
  std::vector<char> numerical(o.seeds, 0);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int k = next++; k < o.seeds; k = next++) {
      TrainConfig c = cfg;
      c.seed = cfg.seed + static_cast<std::uint64_t>(k);
      const fs::path dir = staged.path() / ("seed_" + std::to_string(c.seed));
      try {
        fs::create_directories(dir);
        results[k] = train_one(o, c, pair, dir);
      } catch (const NumericalError& e) {
        errors[k] = e.what();
        numerical[k] = true;
      } catch (const std::exception& e) {
        errors[k] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int j = 0; j < std::min(o.jobs, o.seeds); ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (int k = 0; k < o.seeds; ++k)
    if (!errors[k].empty()) {
      const std::string msg = "seed " + std::to_string(cfg.seed + k) + ": " + errors[k];
      if (numerical[k]) throw NumericalError(msg);
      throw Error(msg);
    }

  ordered_json runs = ordered_json::array();
  double micro = 0, macro = 0;
  for (int k = 0; k < o.seeds; ++k) {
    const EpochReport& last = results[k]->fit.reports.back();
    runs.push_back({{"seed", cfg.seed + k}, {"micro_f1", last.micro_f1}, {"macro_f1", last.macro_f1}});
    micro += last.micro_f1;
    macro += last.macro_f1;
  }
  micro /= o.seeds;
  macro /= o.seeds;
  ordered_json agg = {{"variant", variant_name(cfg)}, {"seeds", o.seeds}, {"mean_micro_f1", micro},
                      {"mean_macro_f1", macro}, {"runs", runs}};
  write_text(staged.path() / "summary.json", agg.dump(2) + "\n");
  staged.commit();
  out << std::left << std::setw(8) << "seed" << std::setw(12) << "micro-F1" << "macro-F1\n";
  for (const auto& r : runs)
    out << std::setw(8) << r["seed"].get<std::uint64_t>() << std::setw(12) << std::fixed << std::setprecision(4)
        << r["micro_f1"].get<double>() << r["macro_f1"].get<double>() << "\n";
  out << std::setw(8) << "mean" << std::setw(12) << micro << macro << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvalOptions {
  fs::path checkpoint;
  fs::path data;
  fs::path out;
  fs::path dump_embeddings;
  std::string ppmi_cache;
};

void write_embeddings(const fs::path& path, const DenseMatrix& h) {
  std::string s = "node";
  for (Index j = 0; j < h.cols(); ++j) s += ",h" + std::to_string(j);
  s += "\n";
  char buf[32];
  for (Index i = 0; i < h.rows(); ++i) {
    s += std::to_string(i);
    for (Index j = 0; j < h.cols(); ++j) {
      std::snprintf(buf, sizeof buf, ",%.17g", h(i, j));
      s += buf;
    }
    s += "\n";
  }
  write_text(path, s);
}

int cmd_eval(const EvalOptions& o, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  TrainConfig cfg;
  for (const auto& [k, v] : ck.metadata)
    if (k.rfind("config.", 0) == 0) apply_key_value(cfg, k.substr(7), v);
  const DomainPair pair = load_data_dir(o.data);
  const ModelDims dims = ck.params.dims();
  if (dims.n_attributes != pair.source.n_attributes() || dims.n_attributes != pair.target.n_attributes())
    throw CompatibilityError("eval: checkpoint expects " + std::to_string(dims.n_attributes) +
                             " attributes, data has " + std::to_string(pair.target.n_attributes()));
  if (dims.n_source != pair.source.n_nodes)
    throw CompatibilityError("eval: checkpoint has shift rows for " + std::to_string(dims.n_source) +
                             " source nodes, data has " + std::to_string(pair.source.n_nodes));
  if (dims.n_classes != pair.n_classes)
    throw CompatibilityError("eval: checkpoint predicts " + std::to_string(dims.n_classes) + " classes, data has " +
                             std::to_string(pair.n_classes));
  if (!pair.target.has_labels() || std::any_of(pair.target.labels.begin(), pair.target.labels.end(), [](int l) { return l < 0; }))
    throw ValueError("eval: target labels are required for every node");

  std::optional<PpmiCache> cache;
  if (!o.ppmi_cache.empty()) cache = load_ppmi_cache(o.ppmi_cache, ppmi_cache_key(cfg, pair));
  PreparedPair prep;
  prepare_pair(prep, pair, cfg, cache ? &cache->source : nullptr, cache ? &cache->target : nullptr);
  const EvalOutputs ev = evaluate_model(prep.inputs, ck.params, cfg.use_shift, cfg.shift_placement);
  const F1Scores f1 = evaluate(ev.p_target, pair.target.labels);

  ordered_json metrics = {{"micro_f1", f1.micro},
                          {"macro_f1", f1.macro},
                          {"target_nodes", pair.target.n_nodes},
                          {"config_hash", ck.config_hash}};
  if (!o.out.empty()) {
    const fs::path tmp = o.out.string() + ".tmp";
    if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
    write_text(tmp, metrics.dump(2) + "\n");
    fs::rename(tmp, o.out);
  }
  if (!o.dump_embeddings.empty()) {
    StagedDir dir(o.dump_embeddings);
    write_embeddings(dir.path() / "target_embeddings.csv", ev.h_target);
    write_embeddings(dir.path() / "source_embeddings.csv", ev.h_source);
    dir.commit();
  }
  out << std::left << std::setw(10) << "micro-F1" << std::fixed << std::setprecision(4) << f1.micro << "\n"
      << std::setw(10) << "macro-F1" << f1.macro << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct GradcheckOptions {
  std::vector<std::string> groups;
  double step = 1e-5;
  double tol = 1e-5;
  std::uint64_t seed = 12;
};

int cmd_gradcheck(const GradcheckOptions& o, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  auto fx = make_grad_fixture(o.seed);
  const GradCheckReport r = run_gradcheck(*fx, o.step, o.groups);
  bool ok = true;
  out << std::left << std::setw(8) << "group" << std::setw(14) << "max rel err" << "status\n";
  for (const auto& [g, e] : r.groups) {
    const bool pass = e < o.tol;
    ok = ok && pass;
    out << std::setw(8) << g << std::setw(14) << std::scientific << std::setprecision(3) << e << (pass ? "ok" : "FAIL")
        << "\n";
  }
  out << "step " << o.step << ", tolerance " << o.tol << ", "
      << std::fixed << std::setprecision(2)
      << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s\n";
  return ok ? kOk : kNumericalFailure;
}

}  // namespace

// ---------------------------------------------------------------------------

DomainPair load_data_dir(const fs::path& dir) {
  auto opt = [&](const char* name) -> std::optional<fs::path> {
    const fs::path p = dir / name;
    if (fs::exists(p)) return p;
    return std::nullopt;
  };
  Graph source = load_graph(dir / "source.edges", dir / "source.attr", opt("source.labels"));
  Graph target = load_graph(dir / "target.edges", dir / "target.attr", opt("target.labels"));
  // Target labels are evaluation-only.
  target.labeled_mask.assign(target.n_nodes, false);
  if (fs::exists(dir / "source.names") && fs::exists(dir / "target.names"))
    return union_align(source, target, load_attribute_names(dir / "source.names"),
                       load_attribute_names(dir / "target.names"));
  if (source.n_attributes() != target.n_attributes())
    throw DimensionError("source and target attribute dimensions differ and no .names files were given");
  DomainPair pair;
  pair.n_classes = std::max(source.n_classes(), target.n_classes());
  pair.source = std::move(source);
  pair.target = std::move(target);
  return pair;
}

std::string ppmi_cache_key(const TrainConfig& cfg, const DomainPair& pair) {
  std::string s = std::string("use_neg=") + (cfg.use_neg ? "1" : "0");
  if (cfg.use_neg) {
    s += ";walks=" + std::to_string(cfg.walk.walks_per_node) + ";length=" + std::to_string(cfg.walk.walk_length) +
         ";window=" + std::to_string(cfg.walk.window) + ";self=" + (cfg.walk.count_self ? "1" : "0") +
         ";seed=" + std::to_string(cfg.seed);
  }
  s += ";source=" + adjacency_digest(pair.source.adjacency) + ";target=" + adjacency_digest(pair.target.adjacency);
  return fnv1a_hex(s);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semi-supervised graph domain adaptation"};
  app.require_subcommand(1);
  // A repeated flag overrides the earlier occurrence.
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  SynthOptions synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic source/target SBM pair");
  s->add_option("--out", synth.out, "output dataset directory")->required();
  s->add_option("--nodes", synth.nodes, "nodes per domain");
  s->add_option("--classes", synth.classes, "number of classes");
  s->add_option("--dim", synth.dim, "attribute dimension");
  s->add_option("--separation", synth.separation, "class-mean magnitude");
  s->add_option("--p-in", synth.p_in, "source intra-block edge probability");
  s->add_option("--p-out", synth.p_out, "source inter-block edge probability");
  s->add_option("--target-p-in", synth.target_p_in, "target intra-block edge probability");
  s->add_option("--target-p-out", synth.target_p_out, "target inter-block edge probability");
  s->add_option("--offset", synth.offset, "target attribute mean offset per coordinate");
  s->add_option("--cov-scale", synth.cov_scale, "target attribute std multiplier");
  s->add_option("--attr-std", synth.attr_std, "source attribute std");
  s->add_option("--seed", synth.seed, "random seed");

  PpmiOptions ppmi_opts;
  auto* p = app.add_subcommand("ppmi", "build and cache the reconstructed topologies");
  p->add_option("--data", ppmi_opts.data, "dataset directory")->required();
  p->add_option("--out", ppmi_opts.out, "cache directory (default DATA/ppmi)");
  ppmi_opts.flags.bind(p, walk_flags());
  ppmi_opts.ablation.bind(p, false);

  TrainOptions train;
  auto* t = app.add_subcommand("train", "train SGDA on a dataset directory");
  t->add_option("--data", train.data, "dataset directory")->required();
  t->add_option("--out", train.out, "run output directory")->required();
  t->add_option("--config", train.config_file, "flat key=value config file");
  t->add_option("--ppmi-cache", train.ppmi_cache, "reuse a cache written by `ppmi`");
  t->add_option("--label-rate", train.label_rate, "fraction of labeled source nodes (default 0.05)");
  t->add_option("--labeled-nodes", train.labeled_nodes, "file of labeled source node ids");
  t->add_option("--seeds", train.seeds, "number of runs with consecutive seeds");
  t->add_option("--jobs", train.jobs, "runs executed in parallel");
  t->add_option("--checkpoint-every", train.checkpoint_every, "intermediate checkpoint cadence in epochs");
  t->add_flag("--source-only", train.source_only, "train the source-only GCN control");
  train.flags.bind(t, train_flags());
  train.flags.bind(t, walk_flags());
  train.ablation.bind(t, true);

  EvalOptions eval;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint on labeled target data");
  e->add_option("--checkpoint", eval.checkpoint, "checkpoint file")->required();
  e->add_option("--data", eval.data, "dataset directory")->required();
  e->add_option("--out", eval.out, "metrics JSON path");
  e->add_option("--dump-embeddings", eval.dump_embeddings, "directory for embedding CSVs");
  e->add_option("--ppmi-cache", eval.ppmi_cache, "reuse a cache written by `ppmi`");

  GradcheckOptions gc;
  auto* g = app.add_subcommand("gradcheck", "finite-difference check of the full objective");
  g->add_option("--group", gc.groups, "parameter group(s): W1 W2 xi1 xi2 phi_c phi_d");
  g->add_option("--step", gc.step, "central-difference step");
  g->add_option("--tol", gc.tol, "maximum relative error");
  g->add_option("--seed", gc.seed, "fixture seed");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp& ex) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& ex) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& ex) {
    err << "usage error: " << ex.what() << "\n";
    return kUsage;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, out);
    if (p->parsed()) return cmd_ppmi(ppmi_opts, out);
    if (t->parsed()) return cmd_train(train, out);
    if (e->parsed()) return cmd_eval(eval, out);
    if (g->parsed()) return cmd_gradcheck(gc, out);
  } catch (const ConfigError& ex) {
    err << "usage error: " << ex.what() << "\n";
    return kUsage;
  } catch (const NumericalError& ex) {
    err << "numerical failure: " << ex.what() << "\n";
    return kNumericalFailure;
  } catch (const Error& ex) {
    err << "data error: " << ex.what() << "\n";
    return kDataError;
  } catch (const std::filesystem::filesystem_error& ex) {
    err << "I/O error: " << ex.what() << "\n";
    return kDataError;
  }
  return kUsage;
}

}  // namespace sgda::cli
