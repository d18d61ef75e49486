// smcvi command-line harness: simulate data, fit models, evaluate fits.
//
// Exit codes: 0 success, 2 configuration or usage error, 3 numeric failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "smcvi/diagnostics.hpp"
#include "smcvi/hawkes.hpp"
#include "smcvi/io.hpp"
#include "smcvi/lgss.hpp"
#include "smcvi/stochvol.hpp"
#include "smcvi/trainer.hpp"

#ifndef SMCVI_VERSION
#define SMCVI_VERSION "unknown"
#endif

using namespace smcvi;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::uint64_t seed = 1;
  std::string out = ".";
  std::string mode;
  std::size_t particles = 0;
};

// Config object with fail-closed key checking.
class Config {
 public:
  Config(json j, fs::path base) : j_(std::move(j)), base_(std::move(base)) {
    if (!j_.is_object()) throw ConfigError("config must be a JSON object");
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    try {
      return Config(json::parse(in), fs::path(path).parent_path());
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
  }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& [k, v] : j_.items()) {
      if (!ok.count(k)) throw ConfigError("unknown config key '" + k + "'");
    }
  }

  bool has(const std::string& k) const { return j_.contains(k); }

  template <class T>
  T get(const std::string& k) const {
    if (!has(k)) throw ConfigError("missing config key '" + k + "'");
    try {
      return j_.at(k).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + k + "' has the wrong type");
    }
  }

  template <class T>
  T get(const std::string& k, T fallback) const {
    return has(k) ? get<T>(k) : fallback;
  }

  /// Number or array; a number is broadcast to `n` entries.
  std::vector<double> vec(const std::string& k, std::size_t n, double fallback) const {
    if (!has(k)) return std::vector<double>(n, fallback);
    const auto& v = j_.at(k);
    if (v.is_number()) return std::vector<double>(n, v.get<double>());
    auto out = get<std::vector<double>>(k);
    if (out.size() != n) throw ConfigError("config key '" + k + "' must have " + std::to_string(n) + " entries");
    return out;
  }

  fs::path path(const std::string& k) const { return resolve(get<std::string>(k)); }
  std::vector<fs::path> paths(const std::string& k) const {
    std::vector<fs::path> out;
    for (const auto& s : get<std::vector<std::string>>(k)) out.push_back(resolve(s));
    if (out.empty()) throw ConfigError("config key '" + k + "' lists no files");
    return out;
  }
  fs::path resolve(const std::string& s) const {
    const fs::path p(s);
    return p.is_absolute() || base_.empty() ? p : base_ / p;
  }

 private:
  json j_;
  fs::path base_;
};

void require(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError(msg);
}

// Output directory plus the manifest of everything written into it.
class Run {
 public:
  Run(std::string command, const Common& c) : command_(std::move(command)), c_(c), dir_(c.out) {
    fs::create_directories(dir_);
    start_ = std::chrono::steady_clock::now();
  }
  fs::path file(const std::string& name) {
    outputs_.push_back(name);
    return dir_ / name;
  }
  void write_json(const std::string& name, const json& j) {
    std::ofstream out(file(name));
    out << j.dump(2) << "\n";
    if (!out) throw io::FormatError("cannot write " + name);
  }
  void finish() {
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json m{{"command", command_}, {"config", c_.config},     {"seed", c_.seed},
           {"version", SMCVI_VERSION}, {"output_dir", c_.out}, {"wall_clock_seconds", sec},
           {"outputs", outputs_}};
    if (!c_.mode.empty()) m["mode"] = c_.mode;
    if (c_.particles) m["particles"] = c_.particles;
    std::ofstream(dir_ / "manifest.json") << m.dump(2) << "\n";
  }

 private:
  std::string command_;
  Common c_;
  fs::path dir_;
  std::vector<std::string> outputs_;
  std::chrono::steady_clock::time_point start_;
};

std::string indexed(const std::string& stem, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%02zu.csv", stem.c_str(), i);
  return buf;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(r);
  }
  return rows;
}

Eigen::MatrixXd json_matrix(const json& rows) {
  const auto r = rows.get<std::vector<std::vector<double>>>();
  if (r.empty()) throw ConfigError("empty matrix in parameter file");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r[0].size()));
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (r[i].size() != r[0].size()) throw ConfigError("ragged matrix in parameter file");
    for (std::size_t j = 0; j < r[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r[i][j];
  }
  return m;
}

json lgss_json(const lgss::Params& p) {
  return {{"A", matrix_json(p.A)},   {"B", matrix_json(p.B)},   {"Sx", matrix_json(p.Sx)},
          {"Sx0", matrix_json(p.Sx0)}, {"Sy", matrix_json(p.Sy)}, {"A0", std::vector<double>(p.A0.data(), p.A0.data() + p.A0.size())}};
}

lgss::Params lgss_from_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read parameter file '" + path.string() + "'");
  try {
    const json j = json::parse(in);
    lgss::Params p;
    p.A = json_matrix(j.at("A"));
    p.B = json_matrix(j.at("B"));
    p.Sx = json_matrix(j.at("Sx"));
    p.Sx0 = json_matrix(j.at("Sx0"));
    p.Sy = json_matrix(j.at("Sy"));
    const auto a0 = j.at("A0").get<std::vector<double>>();
    p.A0 = Eigen::Map<const Eigen::VectorXd>(a0.data(), static_cast<Eigen::Index>(a0.size()));
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw ConfigError("bad parameter file '" + path.string() + "': " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError("bad parameter file '" + path.string() + "': " + e.what());
  }
}

std::vector<Eigen::MatrixXd> read_series(const std::vector<fs::path>& files) {
  std::vector<Eigen::MatrixXd> out;
  for (const auto& f : files) out.push_back(io::read_matrix_csv(f));
  return out;
}

// ---------------------------------------------------------------------------
// simulate

void simulate_lgss(const Config& cfg, const Common& c, Run& run) {
  cfg.allow({"model", "dx", "dy", "alpha", "length", "train", "test"});
  const auto dx = cfg.get<std::size_t>("dx", 10), dy = cfg.get<std::size_t>("dy", 3);
  const auto length = cfg.get<std::size_t>("length", 10);
  const auto ntrain = cfg.get<std::size_t>("train", 10), ntest = cfg.get<std::size_t>("test", 10);
  require(dx > 0 && dy > 0 && length > 0, "dx, dy and length must be positive");
  RngStream root(c.seed);
  RngStream prng = root.child(0);
  const auto p = lgss::highdim_params(dx, dy, cfg.get<double>("alpha", 0.42), prng);
  RngStream drng = root.child(1);
  json llh{{"train", json::array()}, {"test", json::array()}};
  for (const auto& [split, count] : {std::pair{"train", ntrain}, std::pair{"test", ntest}}) {
    for (std::size_t s = 0; s < count; ++s) {
      const auto y = lgss::simulate(p, length - 1, drng).y;
      io::write_matrix_csv(run.file(indexed(split, s)), y);
      llh[split].push_back(lgss::kalman_loglik(p, y));
    }
  }
  run.write_json("params.json", lgss_json(p));
  run.write_json("kalman_llh.json", llh);
}

void simulate_ar(const Config& cfg, const Common& c, Run& run) {
  cfg.allow({"model", "lambda", "length", "series"});
  const double lam = cfg.get<double>("lambda", 0.9);
  require(std::abs(lam) < 1.0, "lambda must lie in (-1, 1)");
  const auto length = cfg.get<std::size_t>("length", 100);
  require(length > 0, "length must be positive");
  const auto p = lgss::ar_params(lam);
  RngStream rng(c.seed);
  for (std::size_t s = 0; s < cfg.get<std::size_t>("series", 1); ++s) {
    io::write_matrix_csv(run.file(indexed("series", s)), lgss::simulate(p, length - 1, rng).y);
  }
  run.write_json("params.json", lgss_json(p));
}

void simulate_sv(const Config& cfg, const Common& c, Run& run) {
  cfg.allow({"model", "dim", "length", "mu", "a", "sd"});
  const auto d = cfg.get<std::size_t>("dim", 1);
  const auto length = cfg.get<std::size_t>("length", 100);
  require(d > 0 && length > 0, "dim and length must be positive");
  sv::Params<double> p;
  p.dim = d;
  p.mu = cfg.vec("mu", d, 0.0);
  p.a = cfg.vec("a", d, 0.9);
  const auto sd = cfg.vec("sd", d, 0.3);
  p.L.assign(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    require(std::abs(p.a[i]) < 1.0, "a must lie in (-1, 1)");
    require(sd[i] > 0.0, "sd must be positive");
    p.L[i * d + i] = sd[i];
  }
  RngStream rng(c.seed);
  const auto sim = sv::simulate(p, length - 1, rng);
  io::write_matrix_csv(run.file("series.csv"), sim.y);
  run.write_json("params.json", {{"theta", sv::theta_from_params(p)}});
}

void simulate_hawkes(const Config& cfg, const Common& c, Run& run) {
  cfg.allow({"model", "dim", "beta", "mu", "alpha", "sigma2", "nu", "events", "horizon"});
  const auto D = cfg.get<std::size_t>("dim", 2);
  require(D > 0, "dim must be positive");
  hawkes::Params<double> p;
  p.D = D;
  p.beta = cfg.get<std::vector<double>>("beta", {1.0});
  p.B = p.beta.size();
  require(p.B > 0, "beta must list at least one decay rate");
  for (std::size_t b = 0; b < p.B; ++b) require(p.beta[b] > 0.0 && (b == 0 || p.beta[b] > p.beta[b - 1]), "beta must be positive and increasing");
  p.mu = cfg.vec("mu", D, 0.5);
  p.alpha = cfg.vec("alpha", D * p.bd(), 0.0);
  p.sigma2 = cfg.vec("sigma2", D * p.bd(), 0.01);
  p.nu = cfg.get<double>("nu", 0.01);
  require(p.nu > 0.0, "nu must be positive");
  for (double s : p.sigma2) require(s >= 0.0, "sigma2 must be non-negative");
  RngStream rng(c.seed);
  const auto ev = hawkes::simulate(p, cfg.get<std::size_t>("events", 1000), cfg.get<double>("horizon", 1e9), rng);
  io::write_events_csv(run.file("events.csv"), ev);
  run.write_json("params.json", {{"theta", hawkes::theta_from_params(p)}, {"beta", p.beta}, {"dim", D}});
}

int cmd_simulate(const Common& c) {
  const auto cfg = Config::load(c.config);
  const auto model = cfg.get<std::string>("model");
  Run run("simulate", c);
  if (model == "lgss") {
    simulate_lgss(cfg, c, run);
  } else if (model == "lgss-ar") {
    simulate_ar(cfg, c, run);
  } else if (model == "sv") {
    simulate_sv(cfg, c, run);
  } else if (model == "hawkes") {
    simulate_hawkes(cfg, c, run);
  } else {
    throw ConfigError("unknown model kind '" + model + "'");
  }
  run.finish();
  return 0;
}

// ---------------------------------------------------------------------------
// fit

struct FitSettings {
  TrainConfig train;
  std::optional<fs::path> resume;
};

FitSettings fit_settings(const Config& cfg, const Common& c) {
  FitSettings s;
  auto& t = s.train;
  const std::string mode = !c.mode.empty() ? c.mode : cfg.get<std::string>("mode", "vb");
  try {
    t.mode = parse_fit_mode(mode);
  } catch (const std::invalid_argument&) {
    throw ConfigError("mode must be 'em' or 'vb'");
  }
  t.particles = c.particles ? c.particles : cfg.get<std::size_t>("particles", 4);
  t.iterations = cfg.get<std::size_t>("iterations", 1000);
  t.adam.step_size = cfg.get<double>("step_size", 1e-3);
  t.natural_gradient = cfg.get<bool>("natural_gradient", false);
  t.series_subsample = cfg.get<std::size_t>("series_subsample", 0);
  t.log_every = cfg.get<std::size_t>("log_every", 50);
  t.score_term = cfg.get<bool>("score_term", false);
  const auto resampling = cfg.get<std::string>("resampling", "always");
  if (resampling == "always") {
    t.policy = ResamplingPolicy::always();
  } else if (resampling == "ess") {
    t.policy = ResamplingPolicy::ess(cfg.get<double>("ess_threshold", 0.5));
  } else {
    throw ConfigError("resampling must be 'always' or 'ess'");
  }
  t.seed = c.seed;
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (cfg.has("resume")) s.resume = cfg.path("resume");
  return s;
}

#define FIT_KEYS                                                                                              \
  "model", "mode", "particles", "iterations", "step_size", "natural_gradient", "series_subsample", "log_every", \
      "score_term", "resampling", "ess_threshold", "resume", "data"

template <class R>
void run_fit(const R& recipe, const std::string& model, const FitSettings& s, std::vector<std::string> phi_names,
             Run& run, const std::function<std::vector<double>()>& save_state = {},
             const std::function<void(std::span<const double>)>& load_state = {}) {
  std::optional<TrainState> resume;
  if (s.resume) {
    const auto cp = io::load_checkpoint(*s.resume);
    if (cp.model != model) throw ConfigError("checkpoint is for model '" + cp.model + "', not '" + model + "'");
    if (cp.mode != s.train.mode) throw ConfigError("checkpoint mode does not match --mode");
    if (cp.seed != s.train.seed) throw ConfigError("checkpoint seed does not match --seed");
    if (cp.family.size() != recipe.initial_family().size() || cp.phi.size() != recipe.initial_proposal().size()) {
      throw ConfigError("checkpoint does not match the model dimensions");
    }
    TrainState st;
    st.family = cp.family;
    st.phi = cp.phi;
    st.adam = cp.adam;
    st.iteration = cp.iteration;
    if (load_state) load_state(cp.recipe_state);
    resume = std::move(st);
  }
  auto to_checkpoint = [&](const TrainState& st) {
    io::Checkpoint cp;
    cp.model = model;
    cp.mode = s.train.mode;
    cp.seed = s.train.seed;
    cp.iteration = st.iteration;
    cp.family = st.family;
    cp.phi = st.phi;
    cp.phi_names = phi_names;
    cp.adam = st.adam;
    if (save_state) cp.recipe_state = save_state();
    return cp;
  };
  const std::size_t every = s.train.log_every;
  auto res = fit(recipe, s.train, resume, [&](const TrainState& st, const ElboSample&) {
    if (every > 0 && st.iteration % every == 0) {
      char name[64];
      std::snprintf(name, sizeof name, "checkpoint_%06llu.json", static_cast<unsigned long long>(st.iteration));
      io::save_checkpoint(run.file(name), to_checkpoint(st));
    }
  });
  io::write_trace_csv(run.file("trace.csv"), res.trace);
  io::save_checkpoint(run.file("final.json"), to_checkpoint(res.state));
}

std::vector<std::string> numbered(const std::string& stem, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(stem + "[" + std::to_string(i) + "]");
  return out;
}

int cmd_fit(const Common& c) {
  const auto cfg = Config::load(c.config);
  const auto model = cfg.get<std::string>("model");
  Run run("fit", c);
  if (model == "lgss-ar") {
    cfg.allow({FIT_KEYS, "lambda_init", "lambda_factor"});
    const auto s = fit_settings(cfg, c);
    FactorKind kind;
    try {
      kind = parse_factor_kind(cfg.get<std::string>("lambda_factor", "normal"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    const lgss::ArRecipe recipe(read_series(cfg.paths("data")), cfg.get<double>("lambda_init", 0.5), kind);
    run_fit(recipe, model, s, recipe.proposal_names(), run);
  } else if (model == "lgss") {
    cfg.allow({FIT_KEYS, "params", "init_scale", "init_seed"});
    const auto s = fit_settings(cfg, c);
    const lgss::HighDimRecipe recipe(read_series(cfg.paths("data")), lgss_from_file(cfg.path("params")),
                                     cfg.get<double>("init_scale", 0.1), cfg.get<std::uint64_t>("init_seed", 7));
    run_fit(recipe, model, s, recipe.proposal_names(), run);
  } else if (model == "sv") {
    cfg.allow({FIT_KEYS, "proposal_log_var"});
    const auto s = fit_settings(cfg, c);
    const sv::Recipe recipe(read_series(cfg.paths("data")), cfg.get<double>("proposal_log_var", std::log(0.1)));
    auto names = numbered("log_var", recipe.dim());
    for (auto& n : numbered("log_var0", recipe.dim())) names.push_back(n);
    run_fit(recipe, model, s, names, run);
  } else if (model == "hawkes") {
    cfg.allow({FIT_KEYS, "dim", "beta", "batch", "linear_init", "linear_iterations", "linear_step_size"});
    const auto s = fit_settings(cfg, c);
    const auto files = cfg.paths("data");
    require(files.size() == 1, "hawkes fit takes exactly one event file");
    const auto events = io::read_events_csv(files[0]);
    const auto D = cfg.get<std::size_t>("dim");
    const auto beta = cfg.get<std::vector<double>>("beta");
    require(!beta.empty(), "beta must list at least one decay rate");
    for (const auto& e : events) require(e.mark < D, "event mark exceeds dim");
    std::optional<hawkes::LinearFit> init;
    if (cfg.get<bool>("linear_init", true)) {
      init = hawkes::fit_linear(events, D, beta, cfg.get<std::size_t>("linear_iterations", 300),
                                cfg.get<double>("linear_step_size", 0.05));
    }
    hawkes::Recipe recipe(events, D, beta, cfg.get<std::size_t>("batch", 100), init);
    const std::size_t n = D * beta.size() * D;
    auto names = numbered("alpha", n);
    for (auto& x : numbered("log_sd", n)) names.push_back(x);
    run_fit(recipe, model, s, names, run, [&] { return recipe.save_state(); },
            [&](std::span<const double> st) { recipe.load_state(st); });
  } else {
    throw ConfigError("unknown model kind '" + model + "'");
  }
  run.finish();
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

std::vector<double> point_theta(const io::Checkpoint& cp) {
  return cp.mode == FitMode::Em ? cp.family.location() : cp.family.mean();
}

void eval_kalman(const Config& cfg, Run& run) {
  cfg.allow({"task", "params", "checkpoint", "data"});
  auto p = lgss_from_file(cfg.path("params"));
  const auto files = cfg.paths("data");
  const auto series = read_series(files);
  if (cfg.has("checkpoint")) {
    const auto cp = io::load_checkpoint(cfg.path("checkpoint"));
    require(cp.model == "lgss", "kalman-llh needs an lgss checkpoint");
    const lgss::HighDimRecipe recipe(series, p, 0.1, 0);
    const auto th = point_theta(cp);
    require(th.size() == recipe.initial_family().size(), "checkpoint does not match the parameter file");
    p = recipe.params_from_theta(th);
  }
  json per = json::array();
  double total = 0.0;
  for (const auto& y : series) {
    const double v = lgss::kalman_loglik(p, y);
    per.push_back(v);
    total += v;
  }
  run.write_json("kalman_llh.json", {{"per_series", per}, {"total", total}});
}

void eval_predictive(const Config& cfg, const Common& c, Run& run) {
  cfg.allow({"task", "checkpoint", "data", "samples", "steps_ahead", "window", "replicates"});
  const auto cp = io::load_checkpoint(cfg.path("checkpoint"));
  require(cp.model == "sv", "predictive-llh needs an sv checkpoint");
  const auto y = io::read_matrix_csv(cfg.path("data"));
  sv::PredictiveOptions o;
  o.samples = cfg.get<std::size_t>("samples", 4);
  o.particles = c.particles ? c.particles : 50;
  o.steps_ahead = cfg.get<std::size_t>("steps_ahead", 1);
  require(o.samples > 0, "samples must be positive");
  require(o.steps_ahead == 1 || o.steps_ahead == 2, "steps_ahead must be 1 or 2");
  const auto window = cfg.get<std::size_t>("window", 10);
  const auto reps = cfg.get<std::size_t>("replicates", 10);
  require(reps > 0 && window > 0, "window and replicates must be positive");
  require(window + o.steps_ahead <= static_cast<std::size_t>(y.rows()), "window longer than the series");
  sv::ThetaSource src;
  if (cp.mode == FitMode::Vb) {
    src.family = &cp.family;
  } else {
    src.fixed = cp.family.location();
  }
  std::vector<double> vals;
  for (std::size_t r = 0; r < reps; ++r) {
    RngStream rng = RngStream(c.seed).child(r);
    vals.push_back(sv::predictive_sweep(src, cp.phi, y, window, o, rng));
  }
  double mean = 0.0, ss = 0.0;
  for (double v : vals) mean += v;
  mean /= static_cast<double>(vals.size());
  for (double v : vals) ss += (v - mean) * (v - mean);
  const double sd = vals.size() > 1 ? std::sqrt(ss / static_cast<double>(vals.size() - 1)) : 0.0;
  run.write_json("predictive_llh.json", {{"S", o.samples}, {"K", o.particles}, {"p", o.steps_ahead},
                                         {"window", window}, {"mean", mean}, {"std", sd}, {"replicates", vals}});
}

void eval_next_mark(const Config& cfg, const Common& c, Run& run) {
  cfg.allow({"task", "checkpoint", "events", "dim", "beta", "samples", "draws"});
  const auto cp = io::load_checkpoint(cfg.path("checkpoint"));
  require(cp.model == "hawkes", "next-mark needs a hawkes checkpoint");
  const auto events = io::read_events_csv(cfg.path("events"));
  require(events.size() >= 2, "next-mark needs at least two events");
  const auto D = cfg.get<std::size_t>("dim");
  const auto beta = cfg.get<std::vector<double>>("beta");
  require(cp.family.size() == hawkes::theta_size(D, beta.size()), "checkpoint does not match dim and beta");
  for (const auto& e : events) require(e.mark < D, "event mark exceeds dim");
  hawkes::PredictorOptions po;
  po.samples = cfg.get<std::size_t>("samples", 1);
  po.particles = c.particles ? c.particles : 20;
  po.draws = cfg.get<std::size_t>("draws", 10);
  require(po.samples > 0 && po.draws > 0, "samples and draws must be positive");
  const MeanFieldFamily* fam = cp.mode == FitMode::Vb ? &cp.family : nullptr;
  hawkes::MarkPredictor mp(events, D, beta, fam, cp.family.location(), cp.phi, po, RngStream(c.seed));
  std::vector<double> counts(D, 0.0);
  for (const auto& e : events) counts[e.mark] += 1.0;
  std::size_t majority = 0;
  for (std::size_t i = 1; i < D; ++i) {
    if (counts[i] > counts[majority]) majority = i;
  }
  std::size_t wrong = 0, base_wrong = 0, n = 0;
  std::ofstream pred(run.file("predictions.csv"));
  pred << "index,predicted_mark,actual_mark\n";
  mp.advance();
  while (mp.consumed() < events.size()) {
    const auto idx = mp.consumed();
    const auto m = mp.predict().mark;
    pred << idx << "," << m + 1 << "," << events[idx].mark + 1 << "\n";
    wrong += m != events[idx].mark;
    base_wrong += majority != events[idx].mark;
    ++n;
    mp.advance();
  }
  const double err = static_cast<double>(wrong) / static_cast<double>(n);
  run.write_json("next_mark.json", {{"events", n},
                                    {"error_rate", err},
                                    {"error_se", std::sqrt(err * (1.0 - err) / static_cast<double>(n))},
                                    {"majority_mark", majority + 1},
                                    {"majority_error_rate", static_cast<double>(base_wrong) / static_cast<double>(n)},
                                    {"S", po.samples},
                                    {"K", po.particles},
                                    {"J", po.draws}});
}

// Two-step 2-D AR path density on a grid over (x_0[0], x_1[0]).
void eval_density(const Config& cfg, const Common& c, Run& run) {
  cfg.allow({"task", "lambda", "y", "repetitions", "points", "span", "checkpoint"});
  double lam = cfg.get<double>("lambda", 0.9);
  const auto yv = cfg.get<std::vector<double>>("y", {0.7, -1.3});
  require(yv.size() == 2, "y must hold two observations");
  std::optional<io::Checkpoint> cp;
  if (cfg.has("checkpoint")) {
    cp = io::load_checkpoint(cfg.path("checkpoint"));
    require(cp->model == "lgss-ar", "density-grid needs an lgss-ar checkpoint");
    lam = cp->family.location()[0];
  }
  require(std::abs(lam) < 1.0, "lambda must lie in (-1, 1)");
  const auto K = c.particles ? c.particles : 100;
  const auto R = cfg.get<std::size_t>("repetitions", 50);
  const auto points = cfg.get<std::size_t>("points", 30);
  const double span = cfg.get<double>("span", 2.0);
  require(R > 0 && points > 1 && span > 0.0, "repetitions, points and span must be positive");
  Eigen::MatrixXd y(2, 1);
  y << yv[0], yv[1];
  const auto p = lgss::ar_params(lam);
  const auto th = lgss::theta_from_params(p);
  lgss::Proposal<double> q;
  if (cp) {
    q = lgss::ArRecipe::make_proposal<double>(cp->phi);
  } else {
    q = lgss::default_proposal(p, 0.0);
    q.log_var0.assign(2, -std::log(1.0 - lam * lam));
  }
  lgss::Model<double> m(th, &q, y);
  const auto post = lgss::two_step_posterior(lam, yv[0], yv[1]);
  const std::vector<double> mean(post.mean.data(), post.mean.data() + 4);
  const double sx = std::sqrt(post.cov(0, 0)), sy = std::sqrt(post.cov(2, 2));
  const diag::GridAxis ax{"x0[0]", 0, mean[0] - span * sx, mean[0] + span * sx, points};
  const diag::GridAxis ay{"x1[0]", 2, mean[2] - span * sy, mean[2] + span * sy, points};
  const auto grid = diag::evaluate_grid(
      ax, ay, mean,
      [&](std::span<const double> path, const RngStream& r) {
        return diag::marginal_q_density(m, 0.0, path, K, R, r).density;
      },
      RngStream(c.seed));
  io::write_density_grid(run.file("density_grid.csv"), run.file("density_grid.json"), grid);
}

int cmd_evaluate(const Common& c, const std::string& forced_task = {}) {
  const auto cfg = Config::load(c.config);
  const auto task = forced_task.empty() ? cfg.get<std::string>("task") : forced_task;
  if (!forced_task.empty() && cfg.has("task") && cfg.get<std::string>("task") != forced_task) {
    throw ConfigError("config task does not match the command");
  }
  Run run("evaluate " + task, c);
  if (task == "kalman-llh") {
    eval_kalman(cfg, run);
  } else if (task == "predictive-llh") {
    eval_predictive(cfg, c, run);
  } else if (task == "next-mark") {
    eval_next_mark(cfg, c, run);
  } else if (task == "density-grid") {
    eval_density(cfg, c, run);
  } else {
    throw ConfigError("unknown evaluation task '" + task + "'");
  }
  run.finish();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential Monte Carlo variational inference"};
  app.require_subcommand(1);
  Common c;
  auto add_common = [&](CLI::App* sub, bool fit_flags) {
    sub->add_option("--config", c.config, "JSON config file")->required();
    sub->add_option("--seed", c.seed, "Root random seed");
    sub->add_option("--out", c.out, "Output directory");
    sub->add_option("--particles", c.particles, "Particle count K");
    if (fit_flags) sub->add_option("--mode", c.mode, "em or vb");
  };
  auto* sim = app.add_subcommand("simulate", "Simulate a dataset");
  add_common(sim, false);
  auto* fitc = app.add_subcommand("fit", "Fit a model");
  add_common(fitc, true);
  auto* eval = app.add_subcommand("evaluate", "Evaluate a fit or a dataset");
  std::string task;
  eval->add_option("task", task, "kalman-llh, predictive-llh, next-mark or density-grid");
  add_common(eval, false);
  auto* dens = app.add_subcommand("density", "Path density grid (same as evaluate density-grid)");
  add_common(dens, false);
  auto* pred = app.add_subcommand("predict", "SV predictive log-likelihood (evaluate predictive-llh)");
  add_common(pred, false);
  auto* hpred = app.add_subcommand("hawkes-predict", "Next-mark prediction (evaluate next-mark)");
  add_common(hpred, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  try {
    if (sim->parsed()) return cmd_simulate(c);
    if (fitc->parsed()) return cmd_fit(c);
    if (eval->parsed()) return cmd_evaluate(c, task);
    if (dens->parsed()) return cmd_evaluate(c, "density-grid");
    if (pred->parsed()) return cmd_evaluate(c, "predictive-llh");
    if (hpred->parsed()) return cmd_evaluate(c, "next-mark");
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const io::FormatError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const DegenerateFilterError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
