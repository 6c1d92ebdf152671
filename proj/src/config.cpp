/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#include "ceval/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace ceval {

using nlohmann::json;

RunConfig default_config(const std::string& preset) {
  RunConfig c;
  c.preset = preset;
  if (preset == "synthetic") return c;
  if (preset == "rubric") {
    c.grid.betas = {0.2, 0.8};
    c.grid.n_obs = {2000};
    c.grid.n_exp = {20, 100};
    c.grid.modes = {RewardMode{RewardKind::RubricSmooth}, RewardMode{RewardKind::RubricSharp}};
    return c;
  }
  if (preset == "coding") {
    c.grid.betas = {0.5};
    c.grid.n_obs = {2000};
    c.grid.n_exp = {100};
    c.grid.modes.clear();
    for (double a : {0.0, 0.25, 0.5, 0.75, 1.0})
      for (double w : {0.0, 0.25, 0.5, 0.75, 1.0}) c.grid.modes.push_back(RewardMode{RewardKind::Coding, a, w});
    return c;
  }
  fail(ErrorCode::Config, "unknown preset '" + preset + "' (expected synthetic, rubric or coding)");
}

namespace {

// Reads keys of one JSON object and complains about the ones nobody asked for.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) fail(ErrorCode::Config, where_ + ": expected an object");
  }
  ~Reader() = default;

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      fail(ErrorCode::Config, where_ + "." + key + ": " + e.what());
    }
  }
  const json* sub(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(ErrorCode::Config, where_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json generator_json(const GeneratorConfig& g) {
  return json{{"num_agents", g.num_agents},
              {"vocab_size", g.vocab_size},
              {"zipf_s", g.zipf_s},
              {"min_length", g.min_length},
              {"max_length", g.max_length},
              {"psi_x_dim", g.psi_x_dim},
              {"num_segments", g.num_segments},
              {"latent_dim", g.latent_dim},
              {"latent_var", g.latent_var},
              {"hash_dim", g.hash_dim},
              {"hidden_dim", g.hidden_dim},
              {"densify_dim", g.densify_dim},
              {"aux_dim", g.aux_dim},
              {"sigma_y", g.sigma_y},
              {"sigma_z", g.sigma_z},
              {"kappa", g.kappa},
              {"eps_floor", g.eps_floor},
              {"shortlist_k", g.shortlist_k},
              {"keep_rate_min", g.keep_rate_min},
              {"keep_rate_max", g.keep_rate_max},
              {"style_tokens", g.style_tokens},
              {"style_reps", g.style_reps},
              {"noise_tokens", g.noise_tokens},
              {"reference_contexts", g.reference_contexts},
              {"w_star_scale", g.w_star_scale},
              {"latent_effect", g.latent_effect},
              {"theta_x_scale", g.theta_x_scale},
              {"theta_u_scale", g.theta_u_scale},
              {"confound_alignment", g.confound_alignment},
              {"segment_affinity", g.segment_affinity},
              {"rubric_head_scale", g.rubric_head_scale},
              {"rubric_bias", g.rubric_bias},
              {"claims_bias", g.claims_bias},
              {"coding_head_scale", g.coding_head_scale},
              {"coding_bias", g.coding_bias},
              {"coding_fix_weights", g.coding_fix_weights}};
}

void read_generator(const json& j, GeneratorConfig& g) {
  Reader r(j, "generator");
  r.get("num_agents", g.num_agents);
  r.get("vocab_size", g.vocab_size);
  r.get("zipf_s", g.zipf_s);
  r.get("min_length", g.min_length);
  r.get("max_length", g.max_length);
  r.get("psi_x_dim", g.psi_x_dim);
  r.get("num_segments", g.num_segments);
  r.get("latent_dim", g.latent_dim);
  r.get("latent_var", g.latent_var);
  r.get("hash_dim", g.hash_dim);
  r.get("hidden_dim", g.hidden_dim);
  r.get("densify_dim", g.densify_dim);
  r.get("aux_dim", g.aux_dim);
  r.get("sigma_y", g.sigma_y);
  r.get("sigma_z", g.sigma_z);
  r.get("kappa", g.kappa);
  r.get("eps_floor", g.eps_floor);
  r.get("shortlist_k", g.shortlist_k);
  r.get("keep_rate_min", g.keep_rate_min);
  r.get("keep_rate_max", g.keep_rate_max);
  r.get("style_tokens", g.style_tokens);
  r.get("style_reps", g.style_reps);
  r.get("noise_tokens", g.noise_tokens);
  r.get("reference_contexts", g.reference_contexts);
  r.get("w_star_scale", g.w_star_scale);
  r.get("latent_effect", g.latent_effect);
  r.get("theta_x_scale", g.theta_x_scale);
  r.get("theta_u_scale", g.theta_u_scale);
  r.get("confound_alignment", g.confound_alignment);
  r.get("segment_affinity", g.segment_affinity);
  r.get("rubric_head_scale", g.rubric_head_scale);
  r.get("rubric_bias", g.rubric_bias);
  r.get("claims_bias", g.claims_bias);
  r.get("coding_head_scale", g.coding_head_scale);
  r.get("coding_bias", g.coding_bias);
  r.get("coding_fix_weights", g.coding_fix_weights);
  r.finish();
}

json estimator_json(const EstimatorConfig& e) {
  return json{{"penalty_raw", e.penalty_raw},
              {"penalty_proxy", e.penalty_proxy},
              {"residual_penalties", e.residual_penalties},
              {"rich_taus", e.rich_taus},
              {"alpha_grid", e.alpha_grid},
              {"lambda_grid", e.lambda_grid},
              {"anchor_lambdas", e.anchor_lambdas},
              {"rho_b", e.rho_b},
              {"rho_alpha", e.rho_alpha},
              {"obs_crossfit_folds", e.obs_crossfit_folds},
              {"proxy",
               {{"d_psi", e.proxy.d_psi}, {"d_compress", e.proxy.d_compress}, {"aux_penalty", e.proxy.aux_penalty}}}};
}

void read_estimator(const json& j, EstimatorConfig& e) {
  Reader r(j, "estimator");
  r.get("penalty_raw", e.penalty_raw);
  r.get("penalty_proxy", e.penalty_proxy);
  r.get("residual_penalties", e.residual_penalties);
  r.get("rich_taus", e.rich_taus);
  r.get("alpha_grid", e.alpha_grid);
  r.get("lambda_grid", e.lambda_grid);
  r.get("anchor_lambdas", e.anchor_lambdas);
  r.get("rho_b", e.rho_b);
  r.get("rho_alpha", e.rho_alpha);
  r.get("obs_crossfit_folds", e.obs_crossfit_folds);
  if (const json* p = r.sub("proxy")) {
    Reader rp(*p, "estimator.proxy");
    rp.get("d_psi", e.proxy.d_psi);
    rp.get("d_compress", e.proxy.d_compress);
    rp.get("aux_penalty", e.proxy.aux_penalty);
    rp.finish();
  }
  r.finish();
}

}  // namespace

json config_to_json(const RunConfig& c) {
  json modes = json::array();
  for (const auto& m : c.grid.modes) modes.push_back(m.key());
  json methods = json::array();
  for (auto f : c.methods) methods.push_back(family_name(f));
  return json{{"preset", c.preset},
              {"master_seed", c.master_seed},
              {"seeds", c.seeds},
              {"threads", c.threads},
              {"grid",
               {{"betas", c.grid.betas},
                {"n_obs", c.grid.n_obs},
                {"n_exp", c.grid.n_exp},
                {"modes", modes},
                {"router", router_name(c.grid.router)}}},
              {"methods", methods},
              {"generator", generator_json(c.generator)},
              {"world",
               {{"n_eval", c.world.n_eval},
                {"n_true", c.world.n_true},
                {"b_true", c.world.b_true},
                {"b_dm", c.world.b_dm}}},
              {"estimator", estimator_json(c.estimator)},
              {"tuning",
               {{"k_cv", c.k_cv},
                {"holdout_frac", c.holdout_frac},
                {"tie_tolerance", c.tie_tolerance},
                {"grounded_lin", cv_mode_name(c.grounded_lin_tuning)}}},
              {"k_cf", c.k_cf}};
}

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorCode::Config, "config: expected a JSON object");
  std::string preset = "synthetic";
  if (auto it = j.find("preset"); it != j.end()) {
    if (!it->is_string()) fail(ErrorCode::Config, "config.preset: expected a string");
    preset = it->get<std::string>();
  }
  RunConfig c = default_config(preset);
  Reader r(j, "config");
  r.get("preset", c.preset);
  r.get("master_seed", c.master_seed);
  r.get("seeds", c.seeds);
  r.get("threads", c.threads);
  r.get("k_cf", c.k_cf);
  if (const json* g = r.sub("grid")) {
    Reader rg(*g, "grid");
    rg.get("betas", c.grid.betas);
    rg.get("n_obs", c.grid.n_obs);
    rg.get("n_exp", c.grid.n_exp);
    std::vector<std::string> modes;
    bool have_modes = g->contains("modes");
    rg.get("modes", modes);
    if (have_modes) {
      c.grid.modes.clear();
      for (const auto& m : modes) c.grid.modes.push_back(RewardMode::parse(m));
    }
    std::string router = router_name(c.grid.router);
    rg.get("router", router);
    c.grid.router = parse_router(router);
    rg.finish();
  }
  if (j.contains("methods")) {
    std::vector<std::string> names;
    r.get("methods", names);
    c.methods.clear();
    for (const auto& n : names) c.methods.push_back(parse_family(n));
  } else {
    r.sub("methods");
  }
  if (const json* g = r.sub("generator")) read_generator(*g, c.generator);
  if (const json* w = r.sub("world")) {
    Reader rw(*w, "world");
    rw.get("n_eval", c.world.n_eval);
    rw.get("n_true", c.world.n_true);
    rw.get("b_true", c.world.b_true);
    rw.get("b_dm", c.world.b_dm);
    rw.finish();
  }
  if (const json* e = r.sub("estimator")) read_estimator(*e, c.estimator);
  if (const json* t = r.sub("tuning")) {
    Reader rt(*t, "tuning");
    rt.get("k_cv", c.k_cv);
    rt.get("holdout_frac", c.holdout_frac);
    rt.get("tie_tolerance", c.tie_tolerance);
    std::string gl = cv_mode_name(c.grounded_lin_tuning);
    rt.get("grounded_lin", gl);
    c.grounded_lin_tuning = parse_cv_mode(gl);
    rt.finish();
  }
  r.finish();
  validate_config(c);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    fail(ErrorCode::Config, "config '" + path + "' is not valid JSON: " + e.what());
  }
  // A run manifest carries its config under "config".
  if (j.is_object() && j.contains("software") && j.contains("config")) return config_from_json(j["config"]);
  return config_from_json(j);
}

void validate_config(const RunConfig& c) {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) fail(ErrorCode::Config, msg);
  };
  need(c.seeds >= 1, "seeds must be at least 1");
  need(c.threads >= 1, "threads must be at least 1");
  need(!c.methods.empty(), "methods list is empty");
  {
    std::set<Family> s(c.methods.begin(), c.methods.end());
    need(s.size() == c.methods.size(), "methods list has duplicates");
  }
  need(!c.grid.betas.empty() && !c.grid.n_obs.empty() && !c.grid.n_exp.empty() && !c.grid.modes.empty(),
       "grid axes must be non-empty");
  for (double b : c.grid.betas) need(b >= 0.0 && b <= 1.0, "beta must lie in [0, 1]");
  for (int n : c.grid.n_obs) need(n >= 1, "n_obs must be positive");
  for (int n : c.grid.n_exp) need(n >= 2, "n_exp must be at least 2");
  for (int n : c.grid.n_exp) need(n >= c.k_cf, "n_exp must be at least k_cf");
  need(c.k_cv >= 2, "k_cv must be at least 2");
  need(c.k_cf >= 2, "k_cf must be at least 2");
  need(c.holdout_frac > 0.0 && c.holdout_frac < 1.0, "holdout_frac must lie in (0, 1)");
  need(c.tie_tolerance >= 0.0, "tie_tolerance must be non-negative");
  need(c.grounded_lin_tuning == CvMode::ExpHoldout || c.grounded_lin_tuning == CvMode::AgentCv,
       "tuning.grounded_lin must be exp_holdout or agent_cv");
  need(c.world.n_eval >= 1 && c.world.n_true >= 1 && c.world.b_true >= 1 && c.world.b_dm >= 1,
       "world sizes must be positive");
  const auto& e = c.estimator;
  need(e.penalty_raw > 0.0 && e.penalty_proxy > 0.0, "penalties must be positive");
  need(!e.residual_penalties.empty() && !e.rich_taus.empty() && !e.alpha_grid.empty() && !e.lambda_grid.empty() &&
           !e.anchor_lambdas.empty(),
       "estimator grids must be non-empty");
  for (double v : e.residual_penalties) need(v > 0.0, "residual penalties must be positive");
  for (double v : e.rich_taus) need(v > 0.0, "rich taus must be positive");
  for (double v : e.alpha_grid) need(v >= 0.0 && v <= 1.0, "alpha grid values must lie in [0, 1]");
  for (double v : e.lambda_grid) need(v >= 0.0 && v <= 1.0, "lambda grid values must lie in [0, 1]");
  for (double v : e.anchor_lambdas) need(v >= 0.0 && v <= 1.0, "anchor lambdas must lie in [0, 1]");
  need(e.rho_b >= 0.0 && e.rho_alpha >= 0.0, "anchor shrinkage must be non-negative");
  need(e.obs_crossfit_folds >= 2, "obs_crossfit_folds must be at least 2");
  need(e.proxy.d_psi >= 1 && e.proxy.d_compress >= 1 && e.proxy.d_compress <= e.proxy.d_psi,
       "proxy dims must satisfy 1 <= d_compress <= d_psi");
  const auto& g = c.generator;
  need(g.num_agents >= 2, "num_agents must be at least 2");
  need(g.densify_dim >= 1 && g.hidden_dim >= 1, "feature dims must be positive");
  need(g.aux_dim >= 1, "aux_dim must be positive");
  need(g.coding_fix_weights.size() == 4, "coding_fix_weights needs four entries");
}

}  // namespace ceval
