#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "agent_unlearn/templates.hpp"

namespace au::conversion {

using unlearn::PromptTemplate;
using unlearn::Scenario;
using unlearn::Strategy;
using unlearn::UnlearnRequest;

// psi(x, y): scenario one-hot (3), strategy one-hot (3), expected directive
// completeness, template length bucket (hundreds of characters, over 4).
inline constexpr int kFeatureDimension = 8;

double length_bucket(const PromptTemplate& y);
Eigen::VectorXd features(const UnlearnRequest& x, const PromptTemplate& y);
// One row per template.
Eigen::MatrixXd bank_features(const UnlearnRequest& x, const std::vector<PromptTemplate>& bank);

// Base parameters with a preference for longer templates.
Eigen::VectorXd default_base_parameters();

class ConversionModel {
 public:
  // phi starts at phi_base. beta must be finite and non-negative.
  ConversionModel(Eigen::VectorXd phi_base, double beta);

  const Eigen::VectorXd& phi() const { return phi_; }
  const Eigen::VectorXd& phi_base() const { return phi_base_; }
  double beta() const { return beta_; }
  int dimension() const { return static_cast<int>(phi_.size()); }

  void set_phi(Eigen::VectorXd phi);

  // Softmax of phi^T psi over the rows of `feats`.
  Eigen::VectorXd policy(const Eigen::MatrixXd& feats) const;
  Eigen::VectorXd base_policy(const Eigen::MatrixXd& feats) const;
  Eigen::VectorXd policy(const UnlearnRequest& x, Strategy strategy) const;

  nlohmann::json checkpoint() const;
  static ConversionModel from_checkpoint(const nlohmann::json& doc);

 private:
  Eigen::VectorXd phi_;
  Eigen::VectorXd phi_base_;
  double beta_;
};

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

// m inverse-CDF draws from `probs`, deterministic given the seed.
std::vector<std::size_t> sample_indices(const Eigen::VectorXd& probs, std::size_t m,
                                        std::uint64_t seed);

// m independent draws from pi_phi(. | x) over the strategy's bank.
std::vector<const PromptTemplate*> sample_prompts(const ConversionModel& model,
                                                  const UnlearnRequest& x, Strategy strategy,
                                                  std::size_t m, std::uint64_t seed);

struct PreferenceTriple {
  UnlearnRequest request;
  std::string preferred;
  std::string dispreferred;
  double weight = 1.0;
};

// True when the prompt built from the template unlearns the request.
using Evaluator = std::function<bool(const UnlearnRequest&, const PromptTemplate&)>;

// Per request: draw m templates, label each, emit every preferred x
// dispreferred pair (p * q triples).
std::vector<PreferenceTriple> build_dataset(const ConversionModel& model,
                                            const std::vector<UnlearnRequest>& requests,
                                            Strategy strategy, std::size_t m,
                                            const Evaluator& evaluator, std::uint64_t seed);

struct FeaturePair {
  Eigen::VectorXd delta;  // psi(x, y_p) - psi(x, y_q)
  double weight = 1.0;
};

std::vector<FeaturePair> to_feature_pairs(const std::vector<PreferenceTriple>& triples);

// Weighted mean of -log sigma(z), z = beta (phi - phi_base)^T dpsi.
// Throws kInvalidArgument on an empty dataset or zero total weight.
double loss(const ConversionModel& model, std::span<const FeaturePair> data);
Eigen::VectorXd gradient(const ConversionModel& model, std::span<const FeaturePair> data);
Eigen::MatrixXd hessian(const ConversionModel& model, std::span<const FeaturePair> data);

double sigmoid(double z);

struct Certificates {
  double B = 0.0;
  double L_s = 0.0;
  double mu = 0.0;
  double ball_radius = 0.0;
  double eps_sigma = 0.0;
  double alpha = 0.0;
  double eta = 0.0;
  double contraction_bound = 1.0;
  bool strongly_convex = false;

  nlohmann::json to_json() const;
};

// Smoothness, convexity and step-size certificates over the ball
// ||phi - phi_base|| <= ball_radius. Throws kCertificate when every dpsi is 0.
Certificates certify(const ConversionModel& model, std::span<const FeaturePair> data,
                     double ball_radius);

struct TrainConfig {
  double eta = 0.0;  // 0: the certified step 2 / (L_s + alpha)
  std::size_t max_iters = 1000;
  double tol = 1e-10;  // stop once the gradient norm falls to this
  double ball_radius = 0.0;  // 0: twice the distance to the reference solution
  bool reference = true;     // run the reference solve for L*
  std::optional<double> reference_loss;  // known L*, skips the reference solve
  double gap_floor = 1e-12;  // gaps below this are too noisy to form ratios
};

struct TraceRow {
  std::size_t iter = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double gap_ratio = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  std::vector<TraceRow> trace;
  Eigen::VectorXd phi;
  std::optional<Certificates> certificates;
  double eta = 0.0;
  double reference_loss = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  double max_gap_ratio = std::numeric_limits<double>::quiet_NaN();
};

// Plain gradient descent from the model's current phi; updates the model.
// Throws NumericError (with the iteration) when the loss turns non-finite or
// goes up.
TrainResult train(ConversionModel& model, std::span<const FeaturePair> data,
                  const TrainConfig& config);

// Gradient descent at eta / 10 for ten times as many iterations, stopping
// early once the gradient vanishes. Returns (phi, loss).
std::pair<Eigen::VectorXd, double> reference_solve(const ConversionModel& model,
                                                   std::span<const FeaturePair> data, double eta,
                                                   std::size_t max_iters);

std::string trace_csv(const TrainResult& result);

// Bradley-Terry preferences over a bank with utilities Q.
double preference_probability(double q_preferred, double q_other, double beta);

struct SampledPreference {
  std::size_t first = 0;
  std::size_t second = 0;
  bool first_preferred = false;
};

// Uniform random ordered pairs of distinct templates, labels drawn with p*.
std::vector<SampledPreference> synth_preferences(const Eigen::VectorXd& Q, double beta,
                                                 std::size_t n, std::uint64_t seed);

// Every unordered pair {a, b} as two weighted pairs: a over b with weight p*,
// b over a with weight 1 - p*.
std::vector<FeaturePair> exact_preference_pairs(const Eigen::MatrixXd& feats,
                                                const Eigen::VectorXd& Q, double beta);

std::vector<FeaturePair> sampled_preference_pairs(const Eigen::MatrixXd& feats,
                                                  const std::vector<SampledPreference>& labels);

// pi_base(y) e^{Q(y)} / Z.
Eigen::VectorXd closed_form_optimum(const Eigen::VectorXd& base_policy, const Eigen::VectorXd& Q);
Eigen::VectorXd closed_form_optimum(const Eigen::VectorXd& phi_base, const Eigen::MatrixXd& feats,
                                    const Eigen::VectorXd& Q);

// (1/beta) times the mean, over requests, of the policy-weighted shortfall of
// each template's reward against the best template for that request.
double reward_gap(const ConversionModel& model, const std::vector<UnlearnRequest>& requests,
                  Strategy strategy, const Evaluator& reward);

}  // namespace au::conversion
