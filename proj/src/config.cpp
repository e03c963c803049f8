#include "dsmo/config.hpp"

#include <fstream>
#include <set>

#include "dsmo/hyperparam.hpp"
#include "dsmo/libsvm.hpp"
#include "dsmo/policy_eval.hpp"
#include "dsmo/risk_averse.hpp"
#include "dsmo/synthetic.hpp"

namespace dsmo {
namespace {

/// Strict object view: every key must be consumed exactly once; leftovers
/// and type mismatches raise ConfigError with a JSON pointer.
class StrictView {
 public:
  StrictView(const Json& j, std::string pointer)
      : j_(j), pointer_(std::move(pointer)) {
    if (!j_.is_object())
      throw ConfigError("expected an object", pointer_.empty() ? "/" : pointer_);
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  T require(const std::string& key) {
    if (!j_.contains(key))
      throw ConfigError("missing required key '" + key + "'",
                        pointer_ + "/" + key);
    return get<T>(key);
  }

  template <typename T>
  T optional(const std::string& key, T fallback) {
    if (!j_.contains(key)) return fallback;
    return get<T>(key);
  }

  Json child(const std::string& key) {
    if (!j_.contains(key))
      throw ConfigError("missing required key '" + key + "'",
                        pointer_ + "/" + key);
    used_.insert(key);
    return j_.at(key);
  }

  std::optional<Json> maybe_child(const std::string& key) {
    if (!j_.contains(key)) return std::nullopt;
    used_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (used_.find(it.key()) == used_.end())
        throw ConfigError("unknown key '" + it.key() + "'",
                          pointer_ + "/" + it.key());
    }
  }

  const std::string& pointer() const { return pointer_; }

 private:
  template <typename T>
  T get(const std::string& key) {
    used_.insert(key);
    try {
      return j_.at(key).get<T>();
    } catch (const Json::exception&) {
      throw ConfigError("wrong type for key '" + key + "'",
                        pointer_ + "/" + key);
    }
  }

  const Json& j_;
  std::string pointer_;
  std::set<std::string> used_;
};

StepSchedule parse_schedule(const Json& j, const std::string& pointer) {
  StrictView view(j, pointer);
  StepSchedule sched;
  const auto regime = view.require<std::string>("regime");
  if (regime == "constant") {
    sched.regime = StepSchedule::Regime::Constant;
    sched.C0 = view.optional<double>("C0", 0.1);
    if (!(sched.C0 > 0.0))
      throw ConfigError("C0 must be positive", pointer + "/C0");
  } else if (regime == "diminishing") {
    sched.regime = StepSchedule::Regime::Diminishing;
    sched.C1 = view.optional<double>("C1", 50.0);
    sched.mu = view.require<double>("mu");
    if (!(sched.C1 > 0.0))
      throw ConfigError("C1 must be positive", pointer + "/C1");
    if (!(sched.mu > 0.0))
      throw ConfigError("mu must be positive", pointer + "/mu");
  } else {
    throw ConfigError("regime must be 'constant' or 'diminishing'",
                      pointer + "/regime");
  }
  view.finish();
  return sched;
}

void parse_b_rule(const Json& j, const std::string& pointer,
                  StepSchedule& sched) {
  StrictView view(j, pointer);
  const auto kind = view.require<std::string>("kind");
  if (kind == "theory") {
    sched.b_rule = StepSchedule::BRule::Theory;
  } else if (kind == "fixed") {
    sched.b_rule = StepSchedule::BRule::Fixed;
    sched.b_fixed = view.require<int>("b");
    if (sched.b_fixed < 0)
      throw ConfigError("b must be >= 0", pointer + "/b");
  } else {
    throw ConfigError("kind must be 'theory' or 'fixed'", pointer + "/kind");
  }
  view.finish();
}

NetworkConfig parse_network(const Json& j, const std::string& pointer) {
  StrictView view(j, pointer);
  NetworkConfig net;
  const auto kind = view.require<std::string>("kind");
  try {
    net.kind = topology_kind_from_string(kind);
  } catch (const InvalidParam& e) {
    throw ConfigError(e.what(), pointer + "/kind");
  }
  net.K = view.require<int>("K");
  if (net.K < 1) throw ConfigError("K must be >= 1", pointer + "/K");
  net.edge_prob = view.optional<double>("edge_prob", 0.5);
  const auto scheme = view.optional<std::string>(
      "scheme",
      net.kind == TopologyKind::Ring ? "uniform_ring" : "metropolis");
  try {
    net.scheme = mixing_scheme_from_string(scheme);
  } catch (const InvalidParam& e) {
    throw ConfigError(e.what(), pointer + "/scheme");
  }
  net.seed = view.optional<std::uint64_t>("seed", 0);
  view.finish();
  return net;
}

}  // namespace

ExperimentConfig parse_config(const Json& j) {
  StrictView view(j, "");
  ExperimentConfig cfg;

  {
    const Json pj = view.child("problem");
    StrictView pv(pj, "/problem");
    cfg.problem_tag = pv.require<std::string>("tag");
    if (cfg.problem_tag == "synthetic_quadratic") {
      auto& p = cfg.synthetic;
      p.M = pv.optional<int>("M", 1);
      p.d_x = pv.optional<int>("d_x", 2);
      p.dims = pv.optional<std::vector<int>>("dims", {});
      p.heterogeneity = pv.optional<double>("heterogeneity", 0.0);
      p.noise = pv.optional<double>("noise", 0.0);
      p.mu = pv.optional<double>("mu", 0.5);
      p.L = pv.optional<double>("L", 2.0);
      p.lambda = pv.optional<double>("lambda", 1.0);
      p.e_scale = pv.optional<double>("e_scale", 0.3);
      p.b_scale = pv.optional<double>("b_scale", 0.0);
      p.seed = pv.optional<std::uint64_t>("seed", 0);
    } else if (cfg.problem_tag == "hyperparam") {
      auto& p = cfg.hyperparam;
      if (pv.has("synthetic_data")) {
        p.use_synthetic = true;
        const Json sj = pv.child("synthetic_data");
        StrictView sv(sj, "/problem/synthetic_data");
        p.n_train = sv.optional<Index>("n_train", 200);
        p.n_val = sv.optional<Index>("n_val", 100);
        p.dim = sv.optional<Index>("dim", 14);
        p.seed = sv.optional<std::uint64_t>("seed", 0);
        sv.finish();
      } else {
        p.train_path = pv.require<std::string>("train_path");
        p.val_path = pv.require<std::string>("val_path");
      }
      p.mu_hint = pv.optional<double>("mu_hint", 0.1);
    } else if (cfg.problem_tag == "policy_eval") {
      auto& p = cfg.policy_eval;
      p.num_states = pv.optional<int>("num_states", 100);
      p.feat_dim = pv.optional<int>("feat_dim", 5);
      p.gamma = pv.optional<double>("gamma", 0.9);
      p.lambda = pv.optional<double>("lambda", 1.0);
      p.seed = pv.optional<std::uint64_t>("seed", 0);
      if (!(p.gamma > 0.0 && p.gamma < 1.0))
        throw ConfigError("gamma must lie in (0, 1)", "/problem/gamma");
    } else if (cfg.problem_tag == "risk_averse") {
      auto& p = cfg.risk_averse;
      p.feat_dim = pv.optional<int>("feat_dim", 2);
      p.kappa = pv.optional<double>("kappa", 0.5);
      p.lambda = pv.optional<double>("lambda", 1.0);
      p.p = pv.optional<int>("p", 2);
      p.n_data = pv.optional<Index>("n_data", 100);
      p.label_noise_var = pv.optional<double>("label_noise_var", 0.2);
      p.seed = pv.optional<std::uint64_t>("seed", 0);
      if (!(p.kappa >= 0.0 && p.kappa <= 1.0))
        throw ConfigError("kappa must lie in [0, 1]", "/problem/kappa");
      if (p.p < 2 || p.p % 2 != 0)
        throw ConfigError("p must be an even integer >= 2", "/problem/p");
    } else {
      throw ConfigError("unknown problem tag '" + cfg.problem_tag + "'",
                        "/problem/tag");
    }
    pv.finish();
  }

  cfg.network = parse_network(view.child("network"), "/network");

  cfg.algo = view.require<std::string>("algo");
  if (cfg.algo != "dsmo" && cfg.algo != "dbsa" && cfg.algo != "dsgd")
    throw ConfigError("algo must be one of dsmo|dbsa|dsgd", "/algo");

  if (auto aj = view.maybe_child("algo_params")) {
    StrictView av(*aj, "/algo_params");
    if (cfg.algo == "dsmo") {
      cfg.algo_params.two_f_draws = av.optional<bool>("two_f_draws", false);
    } else if (cfg.algo == "dbsa") {
      cfg.algo_params.eta_c = av.optional<double>("eta_c", 1.0);
      if (!(cfg.algo_params.eta_c > 0.0))
        throw ConfigError("eta_c must be positive", "/algo_params/eta_c");
    } else {
      const auto kind = av.optional<std::string>("eta_kind", "harmonic");
      if (kind == "harmonic") {
        cfg.algo_params.dsgd_eta.kind = DsgdWeights::Kind::Harmonic;
      } else if (kind == "constant") {
        cfg.algo_params.dsgd_eta.kind = DsgdWeights::Kind::Constant;
      } else {
        throw ConfigError("eta_kind must be 'harmonic' or 'constant'",
                          "/algo_params/eta_kind");
      }
      cfg.algo_params.dsgd_eta.value = av.optional<double>("eta_value", 0.5);
      if (!(cfg.algo_params.dsgd_eta.value > 0.0 &&
            cfg.algo_params.dsgd_eta.value <= 1.0))
        throw ConfigError("eta_value must lie in (0, 1]",
                          "/algo_params/eta_value");
    }
    av.finish();
  }

  cfg.schedule = parse_schedule(view.child("schedule"), "/schedule");
  cfg.T = view.require<long>("T");
  if (cfg.T < 0) throw ConfigError("T must be >= 0", "/T");
  if (auto bj = view.maybe_child("b_rule"))
    parse_b_rule(*bj, "/b_rule", cfg.schedule);
  cfg.reps = view.optional<int>("reps", 1);
  if (cfg.reps < 0) throw ConfigError("reps must be >= 0", "/reps");
  cfg.base_seed = view.optional<std::uint64_t>("base_seed", 0);
  cfg.eval_every = view.optional<long>("eval_every", 0);
  if (cfg.eval_every < 0)
    throw ConfigError("eval_every must be >= 0", "/eval_every");
  cfg.output_path = view.optional<std::string>("output_path", "out");

  if (auto sj = view.maybe_child("sweep")) {
    StrictView sv(*sj, "/sweep");
    SweepConfig sweep;
    sweep.K_list = sv.require<std::vector<int>>("K_list");
    if (sweep.K_list.empty())
      throw ConfigError("K_list must be nonempty", "/sweep/K_list");
    std::set<int> uniq(sweep.K_list.begin(), sweep.K_list.end());
    if (uniq.size() != sweep.K_list.size())
      throw ConfigError("K_list entries must be unique", "/sweep/K_list");
    for (int K : sweep.K_list)
      if (K < 1) throw ConfigError("K_list entries must be >= 1",
                                   "/sweep/K_list");
    sweep.epsilon = sv.optional<double>("epsilon", 1e-6);
    sweep.field = sv.optional<std::string>("field", "mse_to_opt");
    sv.finish();
    cfg.sweep = sweep;
  }

  view.finish();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what(), "/");
  }
  return parse_config(j);
}

Json resolved_json(const ExperimentConfig& cfg) {
  Json j;
  Json pj;
  pj["tag"] = cfg.problem_tag;
  if (cfg.problem_tag == "synthetic_quadratic") {
    const auto& p = cfg.synthetic;
    pj["M"] = p.M;
    pj["d_x"] = p.d_x;
    pj["dims"] = p.dims;
    pj["heterogeneity"] = p.heterogeneity;
    pj["noise"] = p.noise;
    pj["mu"] = p.mu;
    pj["L"] = p.L;
    pj["lambda"] = p.lambda;
    pj["e_scale"] = p.e_scale;
    pj["b_scale"] = p.b_scale;
    pj["seed"] = p.seed;
  } else if (cfg.problem_tag == "hyperparam") {
    const auto& p = cfg.hyperparam;
    if (p.use_synthetic) {
      pj["synthetic_data"] = {{"n_train", p.n_train},
                              {"n_val", p.n_val},
                              {"dim", p.dim},
                              {"seed", p.seed}};
    } else {
      pj["train_path"] = p.train_path;
      pj["val_path"] = p.val_path;
    }
    pj["mu_hint"] = p.mu_hint;
  } else if (cfg.problem_tag == "policy_eval") {
    const auto& p = cfg.policy_eval;
    pj["num_states"] = p.num_states;
    pj["feat_dim"] = p.feat_dim;
    pj["gamma"] = p.gamma;
    pj["lambda"] = p.lambda;
    pj["seed"] = p.seed;
  } else {
    const auto& p = cfg.risk_averse;
    pj["feat_dim"] = p.feat_dim;
    pj["kappa"] = p.kappa;
    pj["lambda"] = p.lambda;
    pj["p"] = p.p;
    pj["n_data"] = p.n_data;
    pj["label_noise_var"] = p.label_noise_var;
    pj["seed"] = p.seed;
  }
  j["problem"] = pj;

  j["network"] = {{"kind", to_string(cfg.network.kind)},
                  {"K", cfg.network.K},
                  {"edge_prob", cfg.network.edge_prob},
                  {"scheme", to_string(cfg.network.scheme)},
                  {"seed", cfg.network.seed}};
  j["algo"] = cfg.algo;
  if (cfg.algo == "dsmo") {
    j["algo_params"] = {{"two_f_draws", cfg.algo_params.two_f_draws}};
  } else if (cfg.algo == "dbsa") {
    j["algo_params"] = {{"eta_c", cfg.algo_params.eta_c}};
  } else {
    j["algo_params"] = {
        {"eta_kind", cfg.algo_params.dsgd_eta.kind ==
                             DsgdWeights::Kind::Harmonic
                         ? "harmonic"
                         : "constant"},
        {"eta_value", cfg.algo_params.dsgd_eta.value}};
  }
  if (cfg.schedule.regime == StepSchedule::Regime::Constant) {
    j["schedule"] = {{"regime", "constant"}, {"C0", cfg.schedule.C0}};
  } else {
    j["schedule"] = {{"regime", "diminishing"},
                     {"C1", cfg.schedule.C1},
                     {"mu", cfg.schedule.mu}};
  }
  if (cfg.schedule.b_rule == StepSchedule::BRule::Theory) {
    j["b_rule"] = {{"kind", "theory"}};
  } else {
    j["b_rule"] = {{"kind", "fixed"}, {"b", cfg.schedule.b_fixed}};
  }
  j["T"] = cfg.T;
  j["reps"] = cfg.reps;
  j["base_seed"] = cfg.base_seed;
  j["eval_every"] = cfg.eval_every;
  j["output_path"] = cfg.output_path;
  if (cfg.sweep) {
    j["sweep"] = {{"K_list", cfg.sweep->K_list},
                  {"epsilon", cfg.sweep->epsilon},
                  {"field", cfg.sweep->field}};
  }
  return j;
}

std::shared_ptr<MultiLevelProblem> build_problem(const ExperimentConfig& cfg,
                                                 int K_override) {
  const int K = K_override > 0 ? K_override : cfg.network.K;
  if (cfg.problem_tag == "synthetic_quadratic") {
    const auto& p = cfg.synthetic;
    SyntheticOptions opts;
    opts.M = p.M;
    opts.d_x = p.d_x;
    opts.inner_dims = p.dims;
    opts.K = K;
    opts.heterogeneity = p.heterogeneity;
    opts.noise = p.noise;
    opts.seed = p.seed;
    opts.mu = p.mu;
    opts.L = p.L;
    opts.lambda = p.lambda;
    opts.e_scale = p.e_scale;
    opts.b_scale = p.b_scale;
    return make_synthetic_quadratic(opts);
  }
  if (cfg.problem_tag == "hyperparam") {
    const auto& p = cfg.hyperparam;
    Dataset train;
    Dataset val;
    if (p.use_synthetic) {
      // One draw, then split, so train and validation share the distribution.
      std::tie(train, val) = split_dataset(
          make_synthetic_dataset(p.n_train + p.n_val, p.dim, p.seed),
          p.n_train);
    } else {
      train = load_libsvm(p.train_path);
      val = load_libsvm(p.val_path);
    }
    return make_hyperparam_problem(std::move(train), std::move(val), K, p.seed,
                                   p.mu_hint);
  }
  if (cfg.problem_tag == "policy_eval") {
    const auto& p = cfg.policy_eval;
    return make_policy_eval_problem(p.num_states, p.feat_dim, p.gamma,
                                    p.lambda, K, p.seed);
  }
  const auto& p = cfg.risk_averse;
  RiskAverseOptions opts;
  opts.feat_dim = p.feat_dim;
  opts.K = K;
  opts.kappa = p.kappa;
  opts.lambda = p.lambda;
  opts.p = p.p;
  opts.n_data = p.n_data;
  opts.seed = p.seed;
  opts.label_noise_var = p.label_noise_var;
  return make_risk_averse_problem(opts);
}

GossipMatrix build_network(const ExperimentConfig& cfg, int K_override) {
  const int K = K_override > 0 ? K_override : cfg.network.K;
  const Topology topo = build_topology(cfg.network.kind, K,
                                       cfg.network.edge_prob,
                                       cfg.network.seed);
  return mixing_matrix(topo, cfg.network.scheme);
}

std::string make_run_id(const ExperimentConfig& cfg, int K, int rep) {
  return cfg.problem_tag + "_" + cfg.algo + "_K" + std::to_string(K) + "_r" +
         std::to_string(rep);
}

std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg, int rep,
                                      int threads, int K_override,
                                      const std::vector<EvalHook>& hooks) {
  const int K = K_override > 0 ? K_override : cfg.network.K;
  const auto problem = build_problem(cfg, K);
  const GossipMatrix gossip = build_network(cfg, K);

  RunConfig run;
  run.T = cfg.T;
  run.seed = cfg.base_seed + static_cast<std::uint64_t>(rep);
  run.threads = threads;
  run.eval_every = cfg.eval_every;
  run.two_f_draws = cfg.algo_params.two_f_draws;
  run.run_id = make_run_id(cfg, K, rep);

  if (cfg.algo == "dsmo")
    return run_dsmo(*problem, gossip, cfg.schedule, run, hooks);
  if (cfg.algo == "dbsa")
    return run_dbsa(*problem, gossip, cfg.schedule, cfg.algo_params.eta_c, run,
                    hooks);
  return run_dsgd(*problem, gossip, cfg.schedule, cfg.algo_params.dsgd_eta, run,
                  hooks);
}

}  // namespace dsmo
