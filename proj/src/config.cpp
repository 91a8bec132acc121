#include "scorl/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "scorl/errors.hpp"

namespace scorl {

using nlohmann::json;

namespace {

// View over one JSON object that records which keys were read and rejects the
// rest when finish() runs. Every section of the config goes through this.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const char* name) {
    if (!j_.contains(name)) return false;
    seen_.insert(name);
    return true;
  }

  const json& at(const char* name) {
    if (!j_.contains(name)) throw ConfigError(key_path(name) + ": missing required key");
    seen_.insert(name);
    return j_.at(name);
  }

  double number(const char* name, double fallback) {
    if (!has(name)) return fallback;
    return as_number(j_.at(name), key_path(name));
  }

  double require_number(const char* name) { return as_number(at(name), key_path(name)); }

  int integer(const char* name, int fallback) {
    if (!has(name)) return fallback;
    return as_int(j_.at(name), key_path(name));
  }

  uint64_t u64(const char* name, uint64_t fallback) {
    if (!has(name)) return fallback;
    const json& v = j_.at(name);
    if (!v.is_number_unsigned() && !v.is_number_integer())
      throw ConfigError(key_path(name) + ": expected a non-negative integer");
    if (v.is_number_integer() && v.get<int64_t>() < 0)
      throw ConfigError(key_path(name) + ": expected a non-negative integer");
    return v.get<uint64_t>();
  }

  bool boolean(const char* name, bool fallback) {
    if (!has(name)) return fallback;
    const json& v = j_.at(name);
    if (!v.is_boolean()) throw ConfigError(key_path(name) + ": expected a boolean");
    return v.get<bool>();
  }

  std::string text(const char* name, const std::string& fallback) {
    if (!has(name)) return fallback;
    const json& v = j_.at(name);
    if (!v.is_string()) throw ConfigError(key_path(name) + ": expected a string");
    return v.get<std::string>();
  }

  std::vector<int> int_list(const char* name, std::vector<int> fallback) {
    if (!has(name)) return fallback;
    const json& v = j_.at(name);
    if (!v.is_array()) throw ConfigError(key_path(name) + ": expected an array of integers");
    std::vector<int> out;
    for (size_t i = 0; i < v.size(); ++i)
      out.push_back(as_int(v[i], key_path(name) + "[" + std::to_string(i) + "]"));
    return out;
  }

  Eigen::VectorXd vec(const char* name) { return as_vec(at(name), key_path(name)); }

  std::string key_path(const char* name) const {
    return path_.empty() ? name : path_ + "." + name;
  }

  void finish() {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key()))
        throw ConfigError((path_.empty() ? "" : path_ + ".") + it.key() + ": unknown key");
    }
  }

  static double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path + ": expected a number");
    return v.get<double>();
  }

  static int as_int(const json& v, const std::string& path) {
    if (!v.is_number_integer() && !v.is_number_unsigned())
      throw ConfigError(path + ": expected an integer");
    return v.get<int>();
  }

  static Eigen::VectorXd as_vec(const json& v, const std::string& path) {
    if (!v.is_array() || v.empty()) throw ConfigError(path + ": expected a non-empty array");
    Eigen::VectorXd out(v.size());
    for (size_t i = 0; i < v.size(); ++i)
      out(static_cast<int>(i)) = as_number(v[i], path + "[" + std::to_string(i) + "]");
    return out;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::vector<int> hidden_list(Section& s, std::vector<int> fallback) {
  std::vector<int> h = s.int_list("hidden", std::move(fallback));
  for (int v : h)
    if (v <= 0) throw ConfigError(s.key_path("hidden") + ": layer widths must be positive");
  return h;
}

oracle::GaussianMixture parse_data(const json& j, const std::string& path) {
  Section s(j, path);
  const std::string kind = s.text("kind", "two_modes");
  oracle::GaussianMixture mix;
  if (kind == "two_modes") {
    const double offset = s.number("offset", 1.0);
    const double std_dev = s.number("std", 0.35);
    const int dim = s.integer("dim", 2);
    if (std_dev <= 0.0) throw ConfigError(path + ".std: must be positive");
    if (dim < 1) throw ConfigError(path + ".dim: must be >= 1");
    mix = oracle::two_modes(offset, std_dev, dim);
  } else if (kind == "gaussian") {
    oracle::MixtureComponent comp;
    comp.w = 1.0;
    comp.mean = s.vec("mean");
    comp.std = s.number("std", 1.0);
    if (comp.std <= 0.0) throw ConfigError(path + ".std: must be positive");
    mix.comps = {comp};
  } else if (kind == "mixture") {
    const json& arr = s.at("components");
    if (!arr.is_array() || arr.empty())
      throw ConfigError(path + ".components: expected a non-empty array");
    double wsum = 0.0;
    for (size_t i = 0; i < arr.size(); ++i) {
      const std::string cpath = path + ".components[" + std::to_string(i) + "]";
      Section cs(arr[i], cpath);
      oracle::MixtureComponent comp;
      comp.w = cs.require_number("weight");
      comp.mean = cs.vec("mean");
      comp.std = cs.require_number("std");
      cs.finish();
      if (comp.w <= 0.0) throw ConfigError(cpath + ".weight: must be positive");
      if (comp.std <= 0.0) throw ConfigError(cpath + ".std: must be positive");
      wsum += comp.w;
      mix.comps.push_back(std::move(comp));
    }
    for (auto& comp : mix.comps) comp.w /= wsum;
  } else {
    throw ConfigError(path + ".kind: unknown data kind '" + kind + "'");
  }
  s.finish();
  for (const auto& comp : mix.comps)
    if (comp.mean.size() != mix.comps.front().mean.size())
      throw ConfigError(path + ": component dimensions disagree");
  return mix;
}

RewardModel parse_reward(const json& j, const std::string& path, int dim) {
  Section s(j, path);
  const std::string kind = s.text("kind", "target_distance");
  const double bound = s.number("bound", 25.0);
  if (bound <= 0.0) throw ConfigError(path + ".bound: must be positive");
  RewardModel rm;
  if (kind == "target_distance") {
    rm = RewardModel::target_distance(s.vec("target"), bound);
  } else if (kind == "mode_logistic") {
    rm = RewardModel::mode_logistic(s.vec("direction"), s.number("offset", 0.0),
                                    s.number("slope", 1.0), bound);
  } else if (kind == "rbf_table") {
    const json& pts = s.at("points");
    if (!pts.is_array() || pts.empty())
      throw ConfigError(path + ".points: expected a non-empty array");
    Eigen::MatrixXd points(pts.size(), dim);
    for (size_t i = 0; i < pts.size(); ++i) {
      const Eigen::VectorXd row =
          Section::as_vec(pts[i], path + ".points[" + std::to_string(i) + "]");
      if (row.size() != dim)
        throw ConfigError(path + ".points[" + std::to_string(i) + "]: wrong dimension");
      points.row(static_cast<int>(i)) = row;
    }
    const Eigen::VectorXd values = s.vec("values");
    if (values.size() != points.rows())
      throw ConfigError(path + ".values: length must match points");
    const double width = s.number("width", 1.0);
    if (width <= 0.0) throw ConfigError(path + ".width: must be positive");
    rm = RewardModel::rbf_table(points, values, width, bound);
  } else {
    throw ConfigError(path + ".kind: unknown reward kind '" + kind + "'");
  }
  s.finish();
  const int want = (rm.kind == RewardModel::Kind::TargetDistance)  ? rm.target.size()
                   : (rm.kind == RewardModel::Kind::ModeLogistic) ? rm.direction.size()
                                                                  : rm.points.cols();
  if (want != dim) throw ConfigError(path + ": reward dimension disagrees with data");
  return rm;
}

json data_to_json(const oracle::GaussianMixture& mix) {
  json arr = json::array();
  for (const auto& comp : mix.comps) {
    json c;
    c["weight"] = comp.w;
    c["mean"] = std::vector<double>(comp.mean.data(), comp.mean.data() + comp.mean.size());
    c["std"] = comp.std;
    arr.push_back(c);
  }
  return json{{"kind", "mixture"}, {"components", arr}};
}

json reward_to_json(const RewardModel& rm) {
  json j;
  j["bound"] = rm.bound;
  switch (rm.kind) {
    case RewardModel::Kind::TargetDistance:
      j["kind"] = "target_distance";
      j["target"] = std::vector<double>(rm.target.data(), rm.target.data() + rm.target.size());
      break;
    case RewardModel::Kind::ModeLogistic:
      j["kind"] = "mode_logistic";
      j["direction"] =
          std::vector<double>(rm.direction.data(), rm.direction.data() + rm.direction.size());
      j["offset"] = rm.offset;
      j["slope"] = rm.slope;
      break;
    case RewardModel::Kind::RbfTable: {
      j["kind"] = "rbf_table";
      json pts = json::array();
      for (int i = 0; i < rm.points.rows(); ++i)
        pts.push_back(std::vector<double>(rm.points.row(i).data(),
                                          rm.points.row(i).data() + rm.points.cols()));
      j["points"] = pts;
      j["values"] = std::vector<double>(rm.values.data(), rm.values.data() + rm.values.size());
      j["width"] = rm.width;
      break;
    }
  }
  return j;
}

ValueInput parse_value_input(const std::string& v, const std::string& path) {
  if (v == "raw") return ValueInput::Raw;
  if (v == "denoised") return ValueInput::Denoised;
  throw ConfigError(path + ": expected 'raw' or 'denoised'");
}

const char* value_input_name(ValueInput v) {
  return v == ValueInput::Raw ? "raw" : "denoised";
}

}  // namespace

void apply_seed(AppConfig& cfg, uint64_t seed) {
  cfg.seed = seed;
  cfg.pretrain.seed = derive_seed(seed, 0x90e7);
  cfg.finetune.seed = seed;
}

AppConfig default_config() {
  AppConfig cfg;
  cfg.data = oracle::two_modes(1.0, 0.35, 2);
  cfg.score_spec.x_dim = 2;
  cfg.score_spec.out_dim = 2;
  cfg.score_spec.t_scale = cfg.schedule.T;
  cfg.value_spec = cfg.score_spec;
  cfg.value_spec.out_dim = 1;
  cfg.has_reward = true;
  cfg.reward = RewardModel::target_distance(Eigen::Vector2d(1.0, 0.0), 25.0);
  apply_seed(cfg, cfg.seed);
  return cfg;
}

AppConfig parse_config_text(const std::string& text, const std::string& origin) {
  json root_json;
  try {
    root_json = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }

  AppConfig cfg;
  Section root(root_json, "");
  cfg.seed = root.u64("seed", 1);

  if (root.has("schedule")) {
    Section s(root_json.at("schedule"), "schedule");
    cfg.schedule.beta_min = s.number("beta_min", cfg.schedule.beta_min);
    cfg.schedule.beta_max = s.number("beta_max", cfg.schedule.beta_max);
    cfg.schedule.T = s.number("horizon", cfg.schedule.T);
    s.finish();
    if (cfg.schedule.beta_min <= 0.0) throw ConfigError("schedule.beta_min: must be positive");
    if (cfg.schedule.beta_max < cfg.schedule.beta_min)
      throw ConfigError("schedule.beta_max: must be >= beta_min");
    if (cfg.schedule.T <= 0.0) throw ConfigError("schedule.horizon: must be positive");
  }

  cfg.data = root.has("data") ? parse_data(root_json.at("data"), "data")
                              : oracle::two_modes(1.0, 0.35, 2);
  const int dim = cfg.data.dim();

  cfg.n_train = root.integer("n_train", 10000);
  if (cfg.n_train < 2) throw ConfigError("n_train: must be >= 2");

  cfg.score_spec.x_dim = dim;
  cfg.score_spec.out_dim = dim;
  cfg.score_spec.t_scale = cfg.schedule.T;
  if (root.has("score_net")) {
    Section s(root_json.at("score_net"), "score_net");
    cfg.score_spec.hidden = hidden_list(s, cfg.score_spec.hidden);
    cfg.score_spec.time_freqs = s.integer("time_freqs", cfg.score_spec.time_freqs);
    s.finish();
    if (cfg.score_spec.time_freqs < 1) throw ConfigError("score_net.time_freqs: must be >= 1");
  }

  if (root.has("pretrain")) {
    Section s(root_json.at("pretrain"), "pretrain");
    cfg.pretrain.steps = s.integer("steps", cfg.pretrain.steps);
    cfg.pretrain.batch = s.integer("batch", cfg.pretrain.batch);
    cfg.pretrain.lr = s.number("lr", cfg.pretrain.lr);
    cfg.pretrain.t_min_frac = s.number("t_min_frac", cfg.pretrain.t_min_frac);
    s.finish();
    if (cfg.pretrain.steps < 1) throw ConfigError("pretrain.steps: must be >= 1");
    if (cfg.pretrain.batch < 1) throw ConfigError("pretrain.batch: must be >= 1");
    if (cfg.pretrain.lr <= 0.0) throw ConfigError("pretrain.lr: must be positive");
    if (cfg.pretrain.t_min_frac <= 0.0 || cfg.pretrain.t_min_frac >= 1.0)
      throw ConfigError("pretrain.t_min_frac: must lie in (0, 1)");
  }

  if (root.has("reward")) {
    cfg.reward = parse_reward(root_json.at("reward"), "reward", dim);
    cfg.has_reward = true;
  }

  cfg.value_spec = cfg.score_spec;
  cfg.value_spec.out_dim = 1;

  if (root.has("finetune")) {
    Section s(root_json.at("finetune"), "finetune");
    cfg.algo = s.text("algo", cfg.algo);
    if (cfg.algo != "ctrl" && cfg.algo != "ddpo")
      throw ConfigError("finetune.algo: expected 'ctrl' or 'ddpo'");
    cfg.finetune_steps = s.integer("steps", cfg.finetune_steps);
    if (cfg.finetune_steps < 1) throw ConfigError("finetune.steps: must be >= 1");
    cfg.finetune.rounds = s.integer("rounds", cfg.finetune.rounds);
    if (cfg.finetune.rounds < 1) throw ConfigError("finetune.rounds: must be >= 1");
    cfg.finetune.n_traj = s.integer("n_traj", cfg.finetune.n_traj);
    if (cfg.finetune.n_traj < 2) throw ConfigError("finetune.n_traj: must be >= 2");
    cfg.finetune.sigma_expl = s.number("sigma_expl", cfg.finetune.sigma_expl);
    if (cfg.finetune.sigma_expl <= 0.0) throw ConfigError("finetune.sigma_expl: must be positive");
    cfg.finetune.n_pseudo = s.integer("n_pseudo", cfg.finetune.n_pseudo);
    if (cfg.finetune.n_pseudo < 1) throw ConfigError("finetune.n_pseudo: must be >= 1");
    cfg.finetune.eta = s.number("eta", cfg.finetune.eta);
    if (cfg.finetune.eta <= 0.0) throw ConfigError("finetune.eta: must be positive");
    const std::string dir = s.text("advantage_direction", "centered");
    if (dir == "centered") {
      cfg.finetune.raw_action_dir = false;
    } else if (dir == "raw_action") {
      cfg.finetune.raw_action_dir = true;
    } else {
      throw ConfigError("finetune.advantage_direction: expected 'centered' or 'raw_action'");
    }
    cfg.finetune.beta_kl = s.number("beta_kl", cfg.finetune.beta_kl);
    if (cfg.finetune.beta_kl < 0.0) throw ConfigError("finetune.beta_kl: must be >= 0");
    cfg.finetune.n_threads = s.integer("n_threads", cfg.finetune.n_threads);
    if (cfg.finetune.n_threads < 1) throw ConfigError("finetune.n_threads: must be >= 1");

    if (s.has("value")) {
      Section v(root_json.at("finetune").at("value"), "finetune.value");
      cfg.value_spec.hidden = hidden_list(v, cfg.value_spec.hidden);
      cfg.value_predictor_input = parse_value_input(
          v.text("predictor_input", "denoised"), "finetune.value.predictor_input");
      cfg.value_corrector_input =
          parse_value_input(v.text("corrector_input", "raw"), "finetune.value.corrector_input");
      const std::string co = v.text("c_out", "sin");
      if (co == "sin") {
        cfg.value_c_out = COutKind::Sin;
      } else if (co == "one_minus_cos") {
        cfg.value_c_out = COutKind::OneMinusCos;
      } else {
        throw ConfigError("finetune.value.c_out: expected 'sin' or 'one_minus_cos'");
      }
      auto& fit = cfg.finetune.value_fit;
      fit.epochs = v.integer("epochs", fit.epochs);
      fit.batch = v.integer("batch", fit.batch);
      fit.lr = v.number("lr", fit.lr);
      fit.holdout_frac = v.number("holdout_frac", fit.holdout_frac);
      fit.denoiser_fraction = v.number("denoiser_fraction", fit.denoiser_fraction);
      v.finish();
      if (fit.epochs < 1) throw ConfigError("finetune.value.epochs: must be >= 1");
      if (fit.batch < 1) throw ConfigError("finetune.value.batch: must be >= 1");
      if (fit.lr <= 0.0) throw ConfigError("finetune.value.lr: must be positive");
      if (fit.holdout_frac <= 0.0 || fit.holdout_frac >= 0.9)
        throw ConfigError("finetune.value.holdout_frac: must lie in (0, 0.9)");
      if (fit.denoiser_fraction < 0.0 || fit.denoiser_fraction > 1.0)
        throw ConfigError("finetune.value.denoiser_fraction: must lie in [0, 1]");
    }
    if (s.has("ppo")) {
      Section p(root_json.at("finetune").at("ppo"), "finetune.ppo");
      auto& ppo = cfg.finetune.ppo;
      ppo.clip = p.number("clip", ppo.clip);
      ppo.lr = p.number("lr", ppo.lr);
      ppo.epochs = p.integer("epochs", ppo.epochs);
      ppo.batch = p.integer("batch", ppo.batch);
      p.finish();
      if (ppo.clip <= 0.0) throw ConfigError("finetune.ppo.clip: must be positive");
      if (ppo.lr < 0.0) throw ConfigError("finetune.ppo.lr: must be >= 0");
      if (ppo.epochs < 1) throw ConfigError("finetune.ppo.epochs: must be >= 1");
      if (ppo.batch < 1) throw ConfigError("finetune.ppo.batch: must be >= 1");
    }
    s.finish();
  }

  if (root.has("eval")) {
    Section s(root_json.at("eval"), "eval");
    cfg.eval.n_samples = s.integer("n_samples", cfg.eval.n_samples);
    if (cfg.eval.n_samples < 2) throw ConfigError("eval.n_samples: must be >= 2");
    cfg.eval.step_counts = s.int_list("steps", cfg.eval.step_counts);
    for (int v : cfg.eval.step_counts)
      if (v < 1) throw ConfigError("eval.steps: step counts must be >= 1");
    if (cfg.eval.step_counts.empty()) throw ConfigError("eval.steps: must be non-empty");
    cfg.eval.sampler = s.text("sampler", cfg.eval.sampler);
    if (cfg.eval.sampler != "ddpm" && cfg.eval.sampler != "em")
      throw ConfigError("eval.sampler: expected 'ddpm' or 'em'");
    cfg.eval.n_perm = s.integer("n_perm", cfg.eval.n_perm);
    if (cfg.eval.n_perm < 1) throw ConfigError("eval.n_perm: must be >= 1");
    s.finish();
  }

  root.finish();
  apply_seed(cfg, cfg.seed);
  return cfg;
}

AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

std::string config_to_text(const AppConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["schedule"] = {{"beta_min", cfg.schedule.beta_min},
                   {"beta_max", cfg.schedule.beta_max},
                   {"horizon", cfg.schedule.T}};
  j["data"] = data_to_json(cfg.data);
  j["n_train"] = cfg.n_train;
  j["score_net"] = {{"hidden", cfg.score_spec.hidden},
                    {"time_freqs", cfg.score_spec.time_freqs}};
  j["pretrain"] = {{"steps", cfg.pretrain.steps},
                   {"batch", cfg.pretrain.batch},
                   {"lr", cfg.pretrain.lr},
                   {"t_min_frac", cfg.pretrain.t_min_frac}};
  if (cfg.has_reward) j["reward"] = reward_to_json(cfg.reward);
  j["finetune"] = {
      {"algo", cfg.algo},
      {"steps", cfg.finetune_steps},
      {"rounds", cfg.finetune.rounds},
      {"n_traj", cfg.finetune.n_traj},
      {"sigma_expl", cfg.finetune.sigma_expl},
      {"n_pseudo", cfg.finetune.n_pseudo},
      {"eta", cfg.finetune.eta},
      {"advantage_direction", cfg.finetune.raw_action_dir ? "raw_action" : "centered"},
      {"beta_kl", cfg.finetune.beta_kl},
      {"n_threads", cfg.finetune.n_threads},
      {"value",
       {{"hidden", cfg.value_spec.hidden},
        {"predictor_input", value_input_name(cfg.value_predictor_input)},
        {"corrector_input", value_input_name(cfg.value_corrector_input)},
        {"c_out", cfg.value_c_out == COutKind::Sin ? "sin" : "one_minus_cos"},
        {"epochs", cfg.finetune.value_fit.epochs},
        {"batch", cfg.finetune.value_fit.batch},
        {"lr", cfg.finetune.value_fit.lr},
        {"holdout_frac", cfg.finetune.value_fit.holdout_frac},
        {"denoiser_fraction", cfg.finetune.value_fit.denoiser_fraction}}},
      {"ppo",
       {{"clip", cfg.finetune.ppo.clip},
        {"lr", cfg.finetune.ppo.lr},
        {"epochs", cfg.finetune.ppo.epochs},
        {"batch", cfg.finetune.ppo.batch}}}};
  j["eval"] = {{"n_samples", cfg.eval.n_samples},
               {"steps", cfg.eval.step_counts},
               {"sampler", cfg.eval.sampler},
               {"n_perm", cfg.eval.n_perm}};
  return j.dump(2) + "\n";
}

}  // namespace scorl
