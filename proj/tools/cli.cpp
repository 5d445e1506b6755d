#include "cli.hpp"

#include "ucsbi/config.hpp"
#include "ucsbi/diagnostics.hpp"
#include "ucsbi/errors.hpp"
#include "ucsbi/lp_format.hpp"
#include "ucsbi/npe.hpp"
#include "ucsbi/simfarm.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <omp.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

namespace ucsbi::cli {

namespace {

using nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when the command ran but its output says the inputs are bad
// (schedule violations in `validate`).
struct NumericFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidFleet:
    case ErrorKind::InvalidConfig:
    case ErrorKind::CorruptFile:
    case ErrorKind::SchemaMismatch:
    case ErrorKind::ConfigHashMismatch:
    case ErrorKind::DimensionMismatch:
    case ErrorKind::Io: return kConfig;
    case ErrorKind::Infeasible:
    case ErrorKind::SolverTimeout:
    case ErrorKind::BackendError:
    case ErrorKind::TooManyBinaries:
    case ErrorKind::LpNumericalFailure:
    case ErrorKind::NodeLimitExceeded: return kBackend;
    case ErrorKind::NonFiniteInput:
    case ErrorKind::NonFiniteLoss:
    case ErrorKind::NonFiniteGradient:
    case ErrorKind::NonFiniteDensity:
    case ErrorKind::RejectionRateTooHigh: return kNumeric;
  }
  return kInternal;
}

int report(const std::string& command, const std::string& kind, int code, const std::string& message) {
  const json j = {{"error", kind}, {"exit_code", code}, {"command", command}, {"message", message}};
  std::cerr << j.dump() << std::endl;
  return code;
}

void print_summary(json j) { std::cout << j.dump() << std::endl; }

void set_workers(const std::optional<int>& w) {
  if (!w) return;
  if (*w < 1) throw UsageError("--workers must be at least 1");
  omp_set_num_threads(*w);
}

std::uint64_t require_seed(const std::optional<std::uint64_t>& flag, const std::optional<RunConfig>& cfg) {
  if (flag) return *flag;
  if (cfg) return cfg->seed;
  throw UsageError("a seed is required: pass --seed or --config");
}

std::optional<RunConfig> maybe_config(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return load_run_config(path);
}

// Distinct, reproducible seeds for the train / val / test files of one run.
std::uint64_t split_seed(std::uint64_t seed, const std::string& split) {
  const std::uint64_t k = split == "train" ? 1 : split == "val" ? 2 : 3;
  Rng r = substream(seed, {0x73706c6974ULL, k});
  return r();
}

void write_samples_csv(const std::string& path, const Mat& s) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error(ErrorKind::Io, "cannot write " + path);
  for (Eigen::Index j = 0; j < s.cols(); ++j) std::fprintf(f, j ? ",theta_%ld" : "theta_%ld", static_cast<long>(j));
  std::fputc('\n', f);
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.cols(); ++j) std::fprintf(f, j ? ",%.17g" : "%.17g", s(i, j));
    std::fputc('\n', f);
  }
  if (std::fclose(f) != 0) throw Error(ErrorKind::Io, "cannot write " + path);
}

Vec to_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

void check_model_hash(const FlowModel& m, const std::string& hash, const std::string& what) {
  if (!m.data_hash.empty() && !hash.empty() && m.data_hash != hash)
    throw Error(ErrorKind::ConfigHashMismatch,
                "model trained on config " + m.data_hash + " but " + what + " has config " + hash);
}

// ---- subcommands ---------------------------------------------------------

struct SimulateArgs {
  std::string config, out, split;
  std::optional<std::uint64_t> n, seed;
  std::optional<int> workers;
};

void cmd_simulate(const SimulateArgs& a) {
  const RunConfig cfg = load_run_config(a.config);
  set_workers(a.workers);
  std::uint64_t seed = a.seed.value_or(cfg.seed);
  std::uint64_t n = 0;
  if (!a.split.empty()) {
    if (!a.seed) seed = split_seed(cfg.seed, a.split);
    n = a.split == "train" ? cfg.dataset.train : a.split == "val" ? cfg.dataset.val : cfg.dataset.test;
  }
  if (a.n) n = *a.n;
  if (a.split.empty() && !a.n) throw UsageError("--n or --split is required");
  const auto backend = make_backend(cfg.backend);
  GenerateOptions opts;
  opts.workers = a.workers.value_or(0);
  const DatasetManifest m = generate_dataset(cfg, n, seed, *backend, a.out, opts);
  print_summary({{"command", "simulate"},
                 {"out", a.out},
                 {"count", m.count},
                 {"seed", m.seed},
                 {"skips", m.skips.size()},
                 {"config_hash", m.config_hash},
                 {"records_sha256", m.records_sha256}});
}

struct TrainArgs {
  std::string config, train, val, out, curve, flow;
  std::optional<int> epochs, batch, workers;
  std::optional<double> lr;
  std::optional<double> grad_clip;
  std::optional<double> context_clip;
  std::optional<std::uint64_t> seed;
};

void cmd_train(const TrainArgs& a) {
  const auto cfg = maybe_config(a.config);
  TrainConfig tc = train_config_from(cfg ? cfg->train : TrainSettings{});
  if (!cfg && !a.seed) throw UsageError("a seed is required: pass --seed or --config");
  if (a.seed) tc.seed = *a.seed;
  if (a.epochs) tc.epochs = *a.epochs;
  if (a.batch) tc.batch_size = *a.batch;
  if (a.lr) tc.learning_rate = *a.lr;
  if (a.grad_clip) tc.grad_clip = *a.grad_clip;
  if (a.context_clip) tc.context_clip = *a.context_clip;
  if (!(tc.grad_clip >= 0.0) || !(tc.context_clip >= 0.0))
    throw UsageError("--grad-clip and --context-clip must be >= 0");
  if (!a.flow.empty()) tc.flow = a.flow == "nsf" ? FlowKind::NSF : FlowKind::MAF;
  if (tc.flow == FlowKind::NSF && !nsf_available()) throw UsageError("this build has no neural spline flow");
  if (tc.epochs < 1 || tc.batch_size < 1 || !(tc.learning_rate > 0.0))
    throw UsageError("--epochs, --batch and --lr must be positive");
  std::optional<int> workers = a.workers;
  if (!workers && cfg && cfg->train.workers > 0) workers = cfg->train.workers;
  set_workers(workers);

  const std::optional<std::string> hash = cfg ? std::optional(config_hash(*cfg)) : std::nullopt;
  const Dataset tr = read_dataset(a.train, hash);
  const Dataset va = read_dataset(a.val, hash);
  const TrainResult r = train_on_datasets(tr, va, tc, a.out);
  if (!a.curve.empty()) write_learning_curve_csv(a.curve, r.curve);
  const auto sel = static_cast<std::size_t>(r.curve.selected);
  print_summary({{"command", "train"},
                 {"out", a.out},
                 {"epochs", r.curve.val_nll.size()},
                 {"selected_epoch", sel + 1},
                 {"first_val_nll", r.curve.val_nll.front()},
                 {"selected_val_nll", r.curve.val_nll[sel]}});
}

struct InferArgs {
  std::string model, obs, out, corner, config;
  int samples = 4096;
  std::optional<int> bins;
  std::optional<std::uint64_t> seed;
};

void cmd_infer(const InferArgs& a) {
  if (a.samples < 1) throw UsageError("--samples must be at least 1");
  const auto cfg = maybe_config(a.config);
  const std::uint64_t seed = require_seed(a.seed, cfg);
  const FlowModel model = load_flow(a.model);
  const Observation obs = read_observation(a.obs);
  check_model_hash(model, obs.config_hash, a.obs);
  const Vec ctx = observation_context(obs.g, obs.demand);
  if (ctx.size() != model.spec().context_dim)
    throw Error(ErrorKind::DimensionMismatch, "observation size " + std::to_string(ctx.size()) +
                                                  " does not match the model context " +
                                                  std::to_string(model.spec().context_dim));
  Rng rng = substream(seed, {0x696e666572ULL});
  const Mat s = model.sample(ctx, rng, a.samples);
  if (!s.allFinite()) throw Error(ErrorKind::NonFiniteDensity, "non-finite posterior draw");
  write_samples_csv(a.out, s);
  if (!a.corner.empty()) {
    const int bins = a.bins.value_or(cfg ? cfg->diagnostics.corner_bins : 40);
    if (bins < 1) throw UsageError("--bins must be at least 1");
    write_corner_json(a.corner, corner_data(s, obs.theta.empty() ? Vec() : to_vec(obs.theta), bins));
  }
  print_summary({{"command", "infer"}, {"out", a.out}, {"samples", a.samples}});
}

struct CoverageArgs {
  std::string model, test, out, config;
  std::optional<int> levels, samples, workers, pairs;
  std::optional<std::uint64_t> seed;
};

void cmd_coverage(const CoverageArgs& a) {
  const auto cfg = maybe_config(a.config);
  const int levels = a.levels.value_or(cfg ? cfg->diagnostics.levels : 19);
  const int M = a.samples.value_or(cfg ? cfg->diagnostics.coverage_samples : 1024);
  if (levels < 1 || M < 1) throw UsageError("--levels and --samples must be at least 1");
  const std::uint64_t seed = require_seed(a.seed, cfg);
  set_workers(a.workers);
  const FlowModel model = load_flow(a.model);
  const std::optional<std::string> hash = cfg ? std::optional(config_hash(*cfg)) : std::nullopt;
  Dataset test = read_dataset(a.test, hash);
  check_model_hash(model, test.manifest.config_hash, a.test);
  if (a.pairs) {
    if (*a.pairs < 1) throw UsageError("--pairs must be at least 1");
    if (static_cast<std::size_t>(*a.pairs) < test.records.size()) test.records.resize(static_cast<std::size_t>(*a.pairs));
  }
  const FlowDensity q(model);
  const CoverageCurve c = expected_coverage(q, theta_matrix(test.records), context_matrix(test.records),
                                            credibility_levels(levels), M, seed);
  write_coverage_csv(a.out, c);
  double worst = 0.0;
  std::size_t outside = 0;
  for (std::size_t k = 0; k < c.levels.size(); ++k) {
    worst = std::max(worst, std::abs(c.coverage[k] - c.levels[k]));
    if (c.levels[k] < c.ci_low[k] || c.levels[k] > c.ci_high[k]) ++outside;
  }
  print_summary({{"command", "coverage"},
                 {"out", a.out},
                 {"pairs", c.pairs},
                 {"max_abs_deviation", worst},
                 {"levels_outside_band", outside}});
}

struct PpcArgs {
  std::string model, obs, out, config, backend;
  std::optional<int> samples, workers;
  std::optional<std::uint64_t> seed;
  bool inject_theta = false;
};

void cmd_ppc(const PpcArgs& a) {
  RunConfig cfg = load_run_config(a.config);
  if (!a.backend.empty()) cfg.backend.kind = a.backend;
  const int n = a.samples.value_or(cfg.diagnostics.ppc_samples);
  if (n < 1) throw UsageError("--samples must be at least 1");
  const std::uint64_t seed = a.seed.value_or(cfg.seed);
  set_workers(a.workers);
  const Observation obs = read_observation(a.obs);
  const std::string hash = config_hash(cfg);
  if (!obs.config_hash.empty() && obs.config_hash != hash)
    throw Error(ErrorKind::ConfigHashMismatch, "observation comes from config " + obs.config_hash);
  const auto backend = make_backend(cfg.backend);
  PpcOptions opts;
  opts.max_rejection_rate = cfg.diagnostics.max_rejection_rate;
  PpcBands b;
  if (a.inject_theta) {
    if (obs.theta.empty()) throw UsageError("--inject-theta needs an observation carrying theta");
    const Mat thetas = to_vec(obs.theta).transpose().replicate(n, 1);
    b = ppc_from_thetas(cfg.fleet, thetas, obs.demand, obs.g, *backend, opts);
  } else {
    if (a.model.empty()) throw UsageError("--model is required unless --inject-theta is given");
    const FlowModel model = load_flow(a.model);
    check_model_hash(model, hash, a.config);
    Rng rng = substream(seed, {0x707063ULL});
    b = ppc(FlowDensity(model), cfg.fleet, cfg.theta_prior, obs.demand, obs.g, n, *backend, rng, opts);
  }
  write_ppc_csv(a.out, b);
  print_summary({{"command", "ppc"},
                 {"out", a.out},
                 {"accepted", b.accepted},
                 {"rejected", b.rejected},
                 {"failed_solves", b.failed_solves},
                 {"inside_1s", b.inside_fraction(0)},
                 {"inside_2s", b.inside_fraction(1)},
                 {"inside_3s", b.inside_fraction(2)}});
}

struct ValidateArgs {
  std::string config, dataset;
  double tol = 1e-6;
};

void cmd_validate(const ValidateArgs& a) {
  const RunConfig cfg = load_run_config(a.config);
  const Dataset d = read_dataset(a.dataset, config_hash(cfg));
  std::size_t bad_records = 0;
  std::string first;
  for (const SimRecord& r : d.records) {
    const auto v = validate_schedule(cfg.fleet, r.theta, r.demand, complete_schedule(cfg.fleet, r.g, r.v), a.tol);
    if (!v.empty()) {
      if (first.empty()) first = "record " + std::to_string(r.index) + ": " + v.front().describe();
      ++bad_records;
    }
  }
  print_summary({{"command", "validate"},
                 {"dataset", a.dataset},
                 {"records", d.records.size()},
                 {"invalid_records", bad_records}});
  if (bad_records) throw NumericFailure(std::to_string(bad_records) + " records violate constraints; " + first);
}

struct ObserveArgs {
  std::string dataset, out;
  std::uint64_t record = 0;
};

void cmd_observe(const ObserveArgs& a) {
  const Dataset d = read_dataset(a.dataset);
  if (a.record >= d.records.size())
    throw UsageError("--record " + std::to_string(a.record) + " out of range (" + std::to_string(d.records.size()) +
                     " records)");
  write_observation(a.out, observation_from_record(d.records[a.record], d.manifest.config_hash));
  print_summary({{"command", "observe"}, {"out", a.out}, {"record", a.record}});
}

struct ExportLpArgs {
  std::string config, dataset, out;
  std::uint64_t record = 0;
};

void cmd_export_lp(const ExportLpArgs& a) {
  const RunConfig cfg = load_run_config(a.config);
  const Dataset d = read_dataset(a.dataset, config_hash(cfg));
  if (a.record >= d.records.size()) throw UsageError("--record out of range");
  const SimRecord& r = d.records[a.record];
  const std::string text = export_lp(build_milp(cfg.fleet, r.theta, r.demand));
  std::ofstream out(a.out, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorKind::Io, "cannot write " + a.out);
  print_summary({{"command", "export-lp"}, {"out", a.out}, {"record", a.record}});
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Unit-commitment simulator and neural posterior estimation", "ucsbi"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ucsbi 0.1.0");

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Generate a dataset of (theta, demand, dispatch) records");
  sim->add_option("--config", sa.config, "Run config JSON")->required();
  sim->add_option("--n", sa.n, "Number of records");
  sim->add_option("--seed", sa.seed, "Dataset seed (default: config seed)");
  sim->add_option("--out", sa.out, "Output JSONL path")->required();
  sim->add_option("--workers", sa.workers, "Solver threads");
  sim->add_option("--split", sa.split, "Size and seed from the config's dataset section")
      ->check(CLI::IsMember({"train", "val", "test"}));

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "Fit a conditional flow to simulated data");
  trn->add_option("--config", ta.config, "Run config JSON (train section)");
  trn->add_option("--train", ta.train, "Training dataset")->required();
  trn->add_option("--val", ta.val, "Validation dataset")->required();
  trn->add_option("--flow", ta.flow, "Flow family")->check(CLI::IsMember({"maf", "nsf"}));
  trn->add_option("--epochs", ta.epochs);
  trn->add_option("--batch", ta.batch);
  trn->add_option("--lr", ta.lr);
  trn->add_option("--grad-clip", ta.grad_clip, "global gradient-norm clip, 0 off");
  trn->add_option("--context-clip", ta.context_clip, "bound on standardized context, 0 off");
  trn->add_option("--seed", ta.seed);
  trn->add_option("--workers", ta.workers);
  trn->add_option("--out", ta.out, "Checkpoint path")->required();
  trn->add_option("--curve", ta.curve, "Learning-curve CSV path");

  InferArgs ia;
  auto* inf = app.add_subcommand("infer", "Draw posterior samples for one observation");
  inf->add_option("--model", ia.model)->required();
  inf->add_option("--obs", ia.obs, "Observation JSON")->required();
  inf->add_option("--samples", ia.samples);
  inf->add_option("--seed", ia.seed);
  inf->add_option("--config", ia.config);
  inf->add_option("--out", ia.out, "Samples CSV")->required();
  inf->add_option("--corner", ia.corner, "Corner histogram JSON");
  inf->add_option("--bins", ia.bins);

  CoverageArgs ca;
  auto* cov = app.add_subcommand("coverage", "Expected coverage of HPD regions on a test set");
  cov->add_option("--model", ca.model)->required();
  cov->add_option("--test", ca.test)->required();
  cov->add_option("--levels", ca.levels, "Number of credibility levels");
  cov->add_option("--samples", ca.samples, "Posterior draws per test pair");
  cov->add_option("--pairs", ca.pairs, "Use only the first N test records");
  cov->add_option("--seed", ca.seed);
  cov->add_option("--config", ca.config);
  cov->add_option("--workers", ca.workers);
  cov->add_option("--out", ca.out, "Coverage CSV")->required();

  PpcArgs pa;
  auto* ppc_cmd = app.add_subcommand("ppc", "Posterior predictive dispatch bands");
  ppc_cmd->add_option("--model", pa.model);
  ppc_cmd->add_option("--obs", pa.obs)->required();
  ppc_cmd->add_option("--samples", pa.samples);
  ppc_cmd->add_option("--config", pa.config)->required();
  ppc_cmd->add_option("--backend", pa.backend)->check(CLI::IsMember({"embedded", "external"}));
  ppc_cmd->add_option("--seed", pa.seed);
  ppc_cmd->add_option("--workers", pa.workers);
  ppc_cmd->add_flag("--inject-theta", pa.inject_theta, "Use the observation's theta for every draw");
  ppc_cmd->add_option("--out", pa.out, "PPC CSV")->required();

  ValidateArgs va;
  auto* val = app.add_subcommand("validate", "Check every stored schedule against the constraints");
  val->add_option("--config", va.config)->required();
  val->add_option("--dataset", va.dataset)->required();
  val->add_option("--tol", va.tol);

  ObserveArgs oa;
  auto* obs = app.add_subcommand("observe", "Extract one record as an observation file");
  obs->add_option("--dataset", oa.dataset)->required();
  obs->add_option("--record", oa.record)->required();
  obs->add_option("--out", oa.out)->required();

  ExportLpArgs ea;
  auto* lp = app.add_subcommand("export-lp", "Write the MILP of one record in LP format");
  lp->add_option("--config", ea.config)->required();
  lp->add_option("--dataset", ea.dataset)->required();
  lp->add_option("--record", ea.record)->required();
  lp->add_option("--out", ea.out)->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();  // program name
  std::string command = "ucsbi";
  try {
    app.parse(rev);
  } catch (const CLI::Success& e) {
    return app.exit(e);  // --help / --version
  } catch (const CLI::ParseError& e) {
    return report(command, "Usage", kUsage, e.what());
  }

  const CLI::App* sub = app.get_subcommands().front();
  command = sub->get_name();
  try {
    if (sub == sim) cmd_simulate(sa);
    else if (sub == trn) cmd_train(ta);
    else if (sub == inf) cmd_infer(ia);
    else if (sub == cov) cmd_coverage(ca);
    else if (sub == ppc_cmd) cmd_ppc(pa);
    else if (sub == val) cmd_validate(va);
    else if (sub == obs) cmd_observe(oa);
    else if (sub == lp) cmd_export_lp(ea);
    return kOk;
  } catch (const UsageError& e) {
    return report(command, "Usage", kUsage, e.what());
  } catch (const NumericFailure& e) {
    return report(command, "ConstraintViolation", kNumeric, e.what());
  } catch (const Error& e) {
    return report(command, to_string(e.kind()), exit_code_for(e.kind()), e.what());
  } catch (const std::exception& e) {
    return report(command, "Internal", kInternal, e.what());
  }
}

int run(int argc, char** argv) { return run(std::vector<std::string>(argv, argv + argc)); }

}  // namespace ucsbi::cli
