/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ceval/core_math.hpp"
#include "ceval/random.hpp"

namespace ceval {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class RewardKind { Scalar, RubricSmooth, RubricSharp, Coding };
enum class RouterKind { Mixture, Softmax };
enum class Source { Obs, Exp };

struct RewardMode {
  RewardKind kind = RewardKind::Scalar;
  double alpha_fix = 1.0;  // coding only
  double omega = 0.0;      // coding only

  /// Stable text key, e.g. "scalar", "rubric_sharp", "coding_a0.25_w0.5".
  std::string key() const;
  static RewardMode parse(const std::string& key);
  bool uses_segment() const noexcept { return kind != RewardKind::Scalar; }
  bool operator==(const RewardMode&) const = default;
};

std::string router_name(RouterKind r);
RouterKind parse_router(const std::string& s);

/// Every knob of the synthetic world. Defaults are the shipped calibration.
struct GeneratorConfig {
  int num_agents = 20;
  int vocab_size = 5000;
  double zipf_s = 1.1;
  int min_length = 40;
  int max_length = 400;
  int psi_x_dim = 50;
  int num_segments = 4;
  int latent_dim = 4;
  double latent_var = 0.5;
  std::uint32_t hash_dim = kDefaultHashDim;
  int hidden_dim = 8;
  int densify_dim = 256;
  int aux_dim = 6;
  double sigma_y = 0.25;
  double sigma_z = 0.25;
  double kappa = 1.0;
  double eps_floor = 0.05;
  int shortlist_k = 5;
  double keep_rate_min = 0.3;
  double keep_rate_max = 0.9;
  int style_tokens = 10;
  int style_reps = 2;
  int noise_tokens = 5;
  int reference_contexts = 500;

  double w_star_scale = 4.0;
  double latent_effect = 1.0;
  double theta_x_scale = 0.5;
  double theta_u_scale = 2.0;
  double confound_alignment = -0.8;
  double segment_affinity = 4.0;
  double rubric_head_scale = 3.0;
  double rubric_bias = 2.2;
  double claims_bias = -1.4;
  double coding_head_scale = 4.0;
  double coding_bias = 0.0;
  std::vector<double> coding_fix_weights{0.2, 0.4, 0.6, 0.8};
};

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

struct Context {
  std::int64_t id = 0;
  std::vector<TokenCount> tokens;  // distinct ids, ascending
  int length = 0;
  DenseVec psi_x;
  int segment = 0;
};

struct LatentState {
  DenseVec u;
};

/// Full mediator draw: hashed features, densified regression features, hidden representation.
struct Mediator {
  SparseVec phi;
  DenseVec dense;
  DenseVec hidden;
};

struct RubricComponents {
  std::array<double, 4> s{};
  int u_claims = 0;
};

/// Seeded parameters of the structural model, fixed per master seed.
struct GeneratorParams {
  DenseVec w_star;                       // hidden_dim
  DenseVec lambda_latent;                // latent_dim
  double sigma_y = 0.0;
  std::uint64_t phi_seed = 0;
  std::uint64_t hidden_seed = 0;
  std::uint64_t densify_seed = 0;
  std::uint64_t sketch_seed = 0;
  std::uint64_t affinity_seed = 0;
  Matrix latent_map;                     // latent_dim x psi_x_dim
  Matrix theta_x;                        // agents x psi_x_dim
  Matrix theta_u;                        // agents x latent_dim
  Matrix theta_seg;                      // agents x num_segments
  DenseVec cost;                         // agents, in [0,1]
  DenseVec keep_rate;                    // agents
  double kappa = 1.0;
  double eps_floor = 0.05;
  int shortlist_k = 5;
  Matrix aux_heads;                      // aux_dim x hidden_dim
  DenseVec aux_bias;                     // aux_dim
  double sigma_z = 0.0;
  Matrix rubric_heads;                   // 4 x hidden_dim
  DenseVec rubric_bias;                  // 4
  DenseVec claims_head;                  // hidden_dim
  double claims_bias = 0.0;
  Matrix segment_weights;                // num_segments x 4, rows on the simplex
  Matrix coding_heads;                   // 4 x hidden_dim
  DenseVec coding_bias;                  // 4
  Matrix user_weights;                   // num_segments x 4
  DenseVec agent_quality;                // standardized, agents
  DenseVec psi_x_mean;                   // psi_x_dim
  DenseVec psi_x_scale;                  // psi_x_dim
};

// ---------------------------------------------------------------------------
// Reward maps
// ---------------------------------------------------------------------------

/// w^gamma / sum w^gamma.
std::array<double, 4> sharpen_weights(const std::array<double, 4>& w, double gamma);
double reward_smooth(const std::array<double, 4>& s, int u_claims, const std::array<double, 4>& w_tau);
double reward_sharpened(const std::array<double, 4>& s, int u_claims, const std::array<double, 4>& w_tau,
                        double gamma = 16.0, double claim_penalty = 0.1, double center = 0.9,
                        double scale = 0.02);
double coding_utility(const std::array<double, 4>& c, const std::array<double, 4>& w_u, double alpha_fix,
                      double omega_weak);

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

/// Per (context, agent) cache for repeated simulator draws.
struct MediatorPlan {
  int agent = 0;
  std::vector<std::uint64_t> ctx_ids;
  std::vector<std::uint32_t> thresholds;
  std::vector<std::uint32_t> counts;
  std::vector<std::uint32_t> slot;
  std::vector<double> sign;
  std::vector<std::uint32_t> style_slot;
  std::vector<double> style_value;
  std::vector<std::uint32_t> slot_phi;  // ascending phi indices
};

class Generator {
 public:
  Generator(GeneratorConfig cfg, std::uint64_t master_seed);

  const GeneratorConfig& config() const noexcept { return cfg_; }
  const GeneratorParams& params() const noexcept { return p_; }
  GeneratorParams& mutable_params() noexcept { return p_; }
  std::uint64_t master_seed() const noexcept { return master_seed_; }
  int num_agents() const noexcept { return cfg_.num_agents; }
  int densify_dim() const noexcept { return cfg_.densify_dim; }

  Context sample_context(Rng& rng, std::int64_t id) const;
  /// Standardized sketch of token counts.
  DenseVec context_sketch(const std::vector<TokenCount>& tokens, int length) const;
  DenseVec latent_mean(const Context& x) const;
  LatentState sample_latent(const Context& x, Rng& rng) const;

  /// Routing code: latent u in scalar mode, segment one-hot otherwise.
  DenseVec routing_code(const Context& x, const LatentState& u, bool segment_code) const;
  std::vector<double> pi_x(const Context& x) const;
  std::vector<double> pi_u(const DenseVec& code, bool segment_code) const;
  std::vector<double> mixture_probs(const Context& x, const DenseVec& code, double beta, bool segment_code) const;
  int route_obs_mixture(const Context& x, const DenseVec& code, double beta, bool segment_code, Rng& rng) const;
  std::vector<double> softmax_probs(const Context& x, int segment, double beta) const;
  int route_obs_softmax(const Context& x, int segment, double beta, Rng& rng) const;

  /// Token multiset of one simulator draw. Never reads the latent state.
  std::vector<TokenCount> mediator_tokens(const Context& x, int agent, Rng& rng) const;
  Mediator sample_mediator(const Context& x, int agent, Rng& rng) const;
  /// Same draw as sample_mediator, writing only the densified and hidden vectors.
  void sample_mediator_fast(const Context& x, int agent, Rng& rng, double* dense, double* hidden) const;
  MediatorPlan plan_mediator(const Context& x, int agent) const;
  /// Draw through a plan; consumes `rng` exactly like sample_mediator. Either output may be null.
  void sample_planned(const MediatorPlan& plan, Rng& rng, double* dense, double* hidden) const;

  double outcome_scalar(const DenseVec& hidden, const LatentState& u, Rng& rng) const;
  DenseVec aux_labels(const DenseVec& hidden, Rng& rng) const;
  RubricComponents rubric_components(const DenseVec& hidden) const;
  std::array<double, 4> coding_components(const DenseVec& hidden) const;
  std::array<double, 4> segment_weight(int segment) const;
  std::array<double, 4> user_weight(int segment) const;

  /// Realized outcome for a row. Scalar mode draws noise from `rng`; other modes are deterministic.
  double outcome(const RewardMode& mode, const DenseVec& hidden, const LatentState& u, int segment,
                 Rng& rng) const;
  /// r*(x, m): the outcome integrated over U | X, noise and the user-type mix.
  double r_star(const RewardMode& mode, const DenseVec& hidden, const Context& x) const;
  /// r* given the context only through lambda' E[U | X = x].
  double r_star_shift(const RewardMode& mode, const DenseVec& hidden, double latent_shift) const;
  double true_q(const Context& x, int agent, int b_true, const RewardMode& mode, std::uint64_t seed) const;

 private:
  struct TokenCode {
    std::uint32_t phi_index;
    double phi_sign;
  };
  struct IndexCode {
    std::uint32_t dense_bucket;
    std::uint32_t hidden_bucket;
    float dense_sign;
    float hidden_sign;
  };
  double affinity(std::uint64_t token, int agent) const noexcept;
  void project_tokens(const std::vector<TokenCount>& tokens, double* dense, double* hidden, SparseVec* phi) const;
  void build_params();

  GeneratorConfig cfg_;
  std::uint64_t master_seed_;
  GeneratorParams p_;
  AliasTable zipf_;
  Matrix sketch_;                   // psi_x_dim x vocab
  std::vector<TokenCode> token_code_;
  std::vector<IndexCode> index_code_;  // per phi index
};

// ---------------------------------------------------------------------------
// Datasets and worlds
// ---------------------------------------------------------------------------

struct Dataset {
  Source source = Source::Obs;
  Matrix features;                 // rows x densify_dim
  Matrix hidden;                   // rows x hidden_dim
  Matrix latent;                   // rows x latent_dim
  Matrix aux;                      // rows x aux_dim, empty when absent
  DenseVec outcome;
  std::vector<int> action;
  std::vector<int> segment;
  std::vector<std::int64_t> context_id;

  std::size_t rows() const noexcept { return action.size(); }
  bool has_aux() const noexcept { return aux.rows() == static_cast<Eigen::Index>(rows()) && aux.cols() > 0; }
  Dataset subset(const std::vector<std::size_t>& idx) const;
};

/// Logged rows from the confounded router.
Dataset generate_obs(const Generator& gen, const RewardMode& mode, RouterKind router, double beta,
                     std::size_t n, std::uint64_t seed);
/// Randomized rows, actions uniform over agents.
Dataset generate_exp(const Generator& gen, const RewardMode& mode, std::size_t n, std::uint64_t seed);

struct TruthTable {
  Matrix q_eval;    // n_eval x agents
  Matrix q_ref;     // n_true x agents
  DenseVec mu;      // agents, mean of q_ref over reference contexts
};

struct WorldSpec {
  int n_eval = 100;
  int n_true = 100;
  int b_true = 256;
  int b_dm = 5;
};

/// Everything a seed shares across cells: held-out contexts, simulator draws for the
/// direct method and truth tables per reward mode.
struct World {
  std::uint64_t seed_index = 0;
  WorldSpec spec;
  std::vector<Context> eval_contexts;
  std::vector<Context> ref_contexts;
  Matrix sim_features;  // (n_eval * agents * b_dm) x densify_dim, row ((i * A) + a) * B + b
  Matrix sim_hidden;
  std::map<std::string, TruthTable> truth;

  std::size_t sim_row(std::size_t ctx, int agent, int b, int agents) const noexcept {
    return (ctx * static_cast<std::size_t>(agents) + static_cast<std::size_t>(agent)) *
               static_cast<std::size_t>(spec.b_dm) + static_cast<std::size_t>(b);
  }
  const TruthTable& table(const RewardMode& mode) const;
};

World build_world(const Generator& gen, std::uint64_t seed_index, const WorldSpec& spec,
                  const std::vector<RewardMode>& modes);

}  // namespace ceval
