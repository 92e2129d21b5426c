#include "agent_unlearn/conversion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "agent_unlearn/error.hpp"
#include "agent_unlearn/rng.hpp"

namespace au::conversion {
namespace {

constexpr double kLengthWeight = 3.0;

// log(1 + e^{-z}) without overflow.
double softplus_neg(double z) {
  return z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

double total_weight(std::span<const FeaturePair> data) {
  if (data.empty()) fail(ErrorCode::kInvalidArgument, "preference dataset is empty");
  double w = 0;
  for (const auto& p : data) w += p.weight;
  if (!(w > 0)) fail(ErrorCode::kInvalidArgument, "preference weights sum to zero");
  return w;
}

void check_dims(const ConversionModel& model, std::span<const FeaturePair> data) {
  for (const auto& p : data) {
    if (p.delta.size() != model.dimension()) {
      fail(ErrorCode::kInvalidArgument, "feature pair has dimension " +
                                            std::to_string(p.delta.size()) + ", model has " +
                                            std::to_string(model.dimension()));
    }
  }
}

std::vector<double> json_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double length_bucket(const PromptTemplate& y) {
  return std::floor(static_cast<double>(y.body.size()) / 100.0) / 4.0;
}

Eigen::VectorXd features(const UnlearnRequest& x, const PromptTemplate& y) {
  if (x.scenario != y.scenario) {
    fail(ErrorCode::kInvalidArgument, "template " + y.id + " does not serve " +
                                          unlearn::to_string(x.scenario) + " requests");
  }
  Eigen::VectorXd psi = Eigen::VectorXd::Zero(kFeatureDimension);
  psi(static_cast<int>(y.scenario)) = 1.0;
  psi(3 + static_cast<int>(y.strategy)) = 1.0;
  psi(6) = unlearn::expected_completeness(y);
  psi(7) = length_bucket(y);
  return psi;
}

Eigen::MatrixXd bank_features(const UnlearnRequest& x, const std::vector<PromptTemplate>& bank) {
  Eigen::MatrixXd f(static_cast<Eigen::Index>(bank.size()), kFeatureDimension);
  for (std::size_t i = 0; i < bank.size(); ++i) {
    f.row(static_cast<Eigen::Index>(i)) = features(x, bank[i]).transpose();
  }
  return f;
}

Eigen::VectorXd default_base_parameters() {
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(kFeatureDimension);
  phi(7) = kLengthWeight;
  return phi;
}

ConversionModel::ConversionModel(Eigen::VectorXd phi_base, double beta)
    : phi_(phi_base), phi_base_(std::move(phi_base)), beta_(beta) {
  if (phi_base_.size() == 0) fail(ErrorCode::kInvalidArgument, "parameter vector is empty");
  if (!std::isfinite(beta) || beta < 0) fail(ErrorCode::kInvalidArgument, "beta must be >= 0");
  if (!phi_base_.allFinite()) fail(ErrorCode::kInvalidArgument, "base parameters not finite");
}

void ConversionModel::set_phi(Eigen::VectorXd phi) {
  if (phi.size() != phi_base_.size()) fail(ErrorCode::kInvalidArgument, "phi has wrong dimension");
  if (!phi.allFinite()) fail(ErrorCode::kNumeric, "phi is not finite");
  phi_ = std::move(phi);
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  if (logits.size() == 0) fail(ErrorCode::kConfiguration, "empty template bank");
  const Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

Eigen::VectorXd ConversionModel::policy(const Eigen::MatrixXd& feats) const {
  return softmax(feats * phi_);
}

Eigen::VectorXd ConversionModel::base_policy(const Eigen::MatrixXd& feats) const {
  return softmax(feats * phi_base_);
}

Eigen::VectorXd ConversionModel::policy(const UnlearnRequest& x, Strategy strategy) const {
  return policy(bank_features(x, unlearn::template_bank(x.scenario, strategy)));
}

nlohmann::json ConversionModel::checkpoint() const {
  return {{"phi", json_vector(phi_)},
          {"phi_base", json_vector(phi_base_)},
          {"beta", beta_},
          {"feature_dimension", phi_.size()},
          {"bank_version", unlearn::kBankVersion}};
}

ConversionModel ConversionModel::from_checkpoint(const nlohmann::json& doc) {
  try {
    if (doc.at("bank_version").get<int>() != unlearn::kBankVersion) {
      fail(ErrorCode::kConfiguration, "checkpoint was trained on another template bank");
    }
    ConversionModel m(vector_from_json(doc.at("phi_base")), doc.at("beta").get<double>());
    m.set_phi(vector_from_json(doc.at("phi")));
    if (doc.at("feature_dimension").get<int>() != m.dimension()) {
      fail(ErrorCode::kParse, "checkpoint feature_dimension disagrees with phi");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("bad checkpoint: ") + e.what());
  }
}

std::vector<std::size_t> sample_indices(const Eigen::VectorXd& probs, std::size_t m,
                                        std::uint64_t seed) {
  if (m < 1) fail(ErrorCode::kInvalidArgument, "m must be at least 1");
  if (probs.size() == 0) fail(ErrorCode::kConfiguration, "empty template bank");
  Rng rng(seed);
  std::vector<std::size_t> out;
  out.reserve(m);
  for (std::size_t k = 0; k < m; ++k) {
    const double u = rng.uniform01();
    double acc = 0;
    std::size_t pick = static_cast<std::size_t>(probs.size()) - 1;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
      acc += probs(i);
      if (u < acc) {
        pick = static_cast<std::size_t>(i);
        break;
      }
    }
    out.push_back(pick);
  }
  return out;
}

std::vector<const PromptTemplate*> sample_prompts(const ConversionModel& model,
                                                  const UnlearnRequest& x, Strategy strategy,
                                                  std::size_t m, std::uint64_t seed) {
  const auto& bank = unlearn::template_bank(x.scenario, strategy);
  if (bank.empty()) fail(ErrorCode::kConfiguration, "empty template bank");
  const auto probs = model.policy(bank_features(x, bank));
  std::vector<const PromptTemplate*> out;
  for (std::size_t i : sample_indices(probs, m, seed)) out.push_back(&bank[i]);
  return out;
}

std::vector<PreferenceTriple> build_dataset(const ConversionModel& model,
                                            const std::vector<UnlearnRequest>& requests,
                                            Strategy strategy, std::size_t m,
                                            const Evaluator& evaluator, std::uint64_t seed) {
  std::vector<PreferenceTriple> out;
  for (std::size_t r = 0; r < requests.size(); ++r) {
    const auto draws = sample_prompts(model, requests[r], strategy, m, mix_seed(seed, r));
    std::map<std::string, bool> label;
    std::vector<const PromptTemplate*> good;
    std::vector<const PromptTemplate*> bad;
    for (const auto* t : draws) {
      auto it = label.find(t->id);
      if (it == label.end()) it = label.emplace(t->id, evaluator(requests[r], *t)).first;
      (it->second ? good : bad).push_back(t);
    }
    for (const auto* p : good) {
      for (const auto* q : bad) out.push_back(PreferenceTriple{requests[r], p->id, q->id, 1.0});
    }
  }
  return out;
}

std::vector<FeaturePair> to_feature_pairs(const std::vector<PreferenceTriple>& triples) {
  std::vector<FeaturePair> out;
  out.reserve(triples.size());
  for (const auto& t : triples) {
    if (t.preferred == t.dispreferred) {
      fail(ErrorCode::kInvalidArgument, "triple prefers " + t.preferred + " over itself");
    }
    out.push_back(FeaturePair{features(t.request, unlearn::find_template(t.preferred)) -
                                  features(t.request, unlearn::find_template(t.dispreferred)),
                              t.weight});
  }
  return out;
}

double loss(const ConversionModel& model, std::span<const FeaturePair> data) {
  const double w = total_weight(data);
  check_dims(model, data);
  const Eigen::VectorXd diff = model.phi() - model.phi_base();
  double acc = 0;
  for (const auto& p : data) acc += p.weight * softplus_neg(model.beta() * diff.dot(p.delta));
  return acc / w;
}

Eigen::VectorXd gradient(const ConversionModel& model, std::span<const FeaturePair> data) {
  const double w = total_weight(data);
  check_dims(model, data);
  const Eigen::VectorXd diff = model.phi() - model.phi_base();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(model.dimension());
  for (const auto& p : data) {
    const double z = model.beta() * diff.dot(p.delta);
    g -= p.weight * sigmoid(-z) * model.beta() * p.delta;
  }
  return g / w;
}

Eigen::MatrixXd hessian(const ConversionModel& model, std::span<const FeaturePair> data) {
  const double w = total_weight(data);
  check_dims(model, data);
  const Eigen::VectorXd diff = model.phi() - model.phi_base();
  const double b2 = model.beta() * model.beta();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(model.dimension(), model.dimension());
  for (const auto& p : data) {
    const double z = model.beta() * diff.dot(p.delta);
    const double c = p.weight * b2 * sigmoid(z) * sigmoid(-z);
    for (Eigen::Index i = 0; i < h.rows(); ++i) {
      for (Eigen::Index j = i; j < h.cols(); ++j) h(i, j) += c * p.delta(i) * p.delta(j);
    }
  }
  h /= w;
  h.triangularView<Eigen::StrictlyLower>() = h.transpose();
  return h;
}

nlohmann::json Certificates::to_json() const {
  return {{"B", B},
          {"L_s", L_s},
          {"mu", mu},
          {"ball_radius", ball_radius},
          {"eps_sigma", eps_sigma},
          {"alpha", alpha},
          {"eta", eta},
          {"contraction_bound", contraction_bound},
          {"strongly_convex", strongly_convex}};
}

Certificates certify(const ConversionModel& model, std::span<const FeaturePair> data,
                     double ball_radius) {
  const double w = total_weight(data);
  check_dims(model, data);
  if (!(ball_radius >= 0) || !std::isfinite(ball_radius)) {
    fail(ErrorCode::kInvalidArgument, "ball radius must be finite and non-negative");
  }
  Certificates c;
  const int d = model.dimension();
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(d, d);
  for (const auto& p : data) {
    if (p.weight > 0) c.B = std::max(c.B, p.delta.norm());
    second += p.weight * (p.delta * p.delta.transpose());
  }
  if (c.B == 0.0) fail(ErrorCode::kCertificate, "every feature difference is zero");
  second /= w;
  const double beta = model.beta();
  c.L_s = beta * beta * c.B * c.B / 4.0;
  if (c.L_s == 0.0) fail(ErrorCode::kCertificate, "beta is zero; the loss is flat");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(second, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double scale = std::max(1.0, eig.eigenvalues().maxCoeff());
  c.mu = lo > 1e-12 * scale ? lo : 0.0;
  c.ball_radius = ball_radius;
  const double zmax = beta * ball_radius * c.B;
  c.eps_sigma = sigmoid(zmax) * sigmoid(-zmax);
  c.alpha = beta * beta * c.eps_sigma * c.mu;
  c.strongly_convex = c.alpha > 0;
  c.eta = 2.0 / (c.L_s + c.alpha);
  c.contraction_bound = 1.0 - c.eta * c.alpha;
  return c;
}

std::pair<Eigen::VectorXd, double> reference_solve(const ConversionModel& model,
                                                   std::span<const FeaturePair> data, double eta,
                                                   std::size_t max_iters) {
  ConversionModel m = model;
  const double step = eta / 10.0;
  for (std::size_t t = 0; t < 10 * max_iters; ++t) {
    const Eigen::VectorXd g = gradient(m, data);
    if (g.norm() <= 1e-15) break;
    m.set_phi(m.phi() - step * g);
  }
  return {m.phi(), loss(m, data)};
}

TrainResult train(ConversionModel& model, std::span<const FeaturePair> data,
                  const TrainConfig& config) {
  TrainResult result;
  double eta = config.eta;
  double l_star = std::numeric_limits<double>::quiet_NaN();
  if (config.reference_loss) l_star = *config.reference_loss;

  const bool need_cert = eta == 0.0 || config.reference;
  if (need_cert) {
    // Step for the reference solve: the certificate with a zero ball radius
    // has the largest alpha, so its step is the most conservative.
    const Certificates probe = certify(model, data, 0.0);
    double radius = config.ball_radius;
    Eigen::VectorXd phi_ref;
    if (!config.reference_loss && config.reference) {
      auto [phi, l] = reference_solve(model, data, eta > 0 ? eta : probe.eta, config.max_iters);
      phi_ref = std::move(phi);
      l_star = l;
      if (radius == 0.0) radius = 2.0 * (phi_ref - model.phi_base()).norm();
    }
    if (radius == 0.0) radius = 2.0 * (model.phi() - model.phi_base()).norm();
    result.certificates = certify(model, data, radius);
    if (eta == 0.0) eta = result.certificates->eta;
  }
  if (!(eta > 0) || !std::isfinite(eta)) fail(ErrorCode::kInvalidArgument, "step size must be positive");
  result.eta = eta;
  result.reference_loss = l_star;

  double prev = loss(model, data);
  Eigen::VectorXd g = gradient(model, data);
  if (!std::isfinite(prev)) throw NumericError(0, "loss is not finite at the start");
  result.trace.push_back(TraceRow{0, prev, g.norm()});
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 1; t <= config.max_iters && g.norm() > config.tol; ++t) {
    const Eigen::VectorXd next = model.phi() - eta * g;
    if (!next.allFinite()) throw NumericError(t, "parameters overflowed at iteration " + std::to_string(t));
    model.set_phi(next);
    const double cur = loss(model, data);
    if (!std::isfinite(cur)) throw NumericError(t, "loss is not finite at iteration " + std::to_string(t));
    if (cur > prev + 1e-12 * std::max(1.0, std::abs(prev))) {
      throw NumericError(t, "loss increased at iteration " + std::to_string(t));
    }
    g = gradient(model, data);
    TraceRow row{t, cur, g.norm()};
    if (std::isfinite(l_star) && prev - l_star > config.gap_floor && cur - l_star > config.gap_floor) {
      row.gap_ratio = (cur - l_star) / (prev - l_star);
      worst = std::max(worst, row.gap_ratio);
    }
    result.trace.push_back(row);
    prev = cur;
  }
  result.converged = g.norm() <= config.tol;
  result.phi = model.phi();
  if (std::isfinite(worst)) result.max_gap_ratio = worst;
  return result;
}

std::string trace_csv(const TrainResult& result) {
  std::ostringstream out;
  out << "iter,loss,grad_norm,gap_ratio\n";
  char buf[128];
  for (const auto& r : result.trace) {
    if (std::isfinite(r.gap_ratio)) {
      std::snprintf(buf, sizeof buf, "%zu,%.12e,%.12e,%.12e\n", r.iter, r.loss, r.grad_norm,
                    r.gap_ratio);
    } else {
      std::snprintf(buf, sizeof buf, "%zu,%.12e,%.12e,\n", r.iter, r.loss, r.grad_norm);
    }
    out << buf;
  }
  return out.str();
}

double preference_probability(double q_preferred, double q_other, double beta) {
  return sigmoid(beta * (q_preferred - q_other));
}

std::vector<SampledPreference> synth_preferences(const Eigen::VectorXd& Q, double beta,
                                                 std::size_t n, std::uint64_t seed) {
  const auto k = static_cast<std::size_t>(Q.size());
  if (k < 2) fail(ErrorCode::kInvalidArgument, "need at least two templates to compare");
  Rng rng(seed);
  std::vector<SampledPreference> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = rng.uniform_index(k);
    std::size_t b = rng.uniform_index(k - 1);
    if (b >= a) ++b;
    const double p = preference_probability(Q(static_cast<Eigen::Index>(a)),
                                            Q(static_cast<Eigen::Index>(b)), beta);
    out.push_back(SampledPreference{a, b, rng.uniform01() < p});
  }
  return out;
}

std::vector<FeaturePair> exact_preference_pairs(const Eigen::MatrixXd& feats,
                                                const Eigen::VectorXd& Q, double beta) {
  if (feats.rows() != Q.size()) fail(ErrorCode::kInvalidArgument, "Q must cover the bank");
  std::vector<FeaturePair> out;
  for (Eigen::Index a = 0; a < feats.rows(); ++a) {
    for (Eigen::Index b = a + 1; b < feats.rows(); ++b) {
      const double p = preference_probability(Q(a), Q(b), beta);
      const Eigen::VectorXd d = (feats.row(a) - feats.row(b)).transpose();
      out.push_back(FeaturePair{d, p});
      out.push_back(FeaturePair{-d, 1.0 - p});
    }
  }
  return out;
}

std::vector<FeaturePair> sampled_preference_pairs(const Eigen::MatrixXd& feats,
                                                  const std::vector<SampledPreference>& labels) {
  std::vector<FeaturePair> out;
  out.reserve(labels.size());
  for (const auto& l : labels) {
    const auto a = static_cast<Eigen::Index>(l.first_preferred ? l.first : l.second);
    const auto b = static_cast<Eigen::Index>(l.first_preferred ? l.second : l.first);
    out.push_back(FeaturePair{(feats.row(a) - feats.row(b)).transpose(), 1.0});
  }
  return out;
}

Eigen::VectorXd closed_form_optimum(const Eigen::VectorXd& base_policy, const Eigen::VectorXd& Q) {
  if (base_policy.size() == 0) fail(ErrorCode::kConfiguration, "empty template bank");
  if (base_policy.size() != Q.size()) fail(ErrorCode::kInvalidArgument, "Q must cover the bank");
  return softmax(base_policy.array().log().matrix() + Q);
}

Eigen::VectorXd closed_form_optimum(const Eigen::VectorXd& phi_base, const Eigen::MatrixXd& feats,
                                    const Eigen::VectorXd& Q) {
  if (feats.rows() != Q.size()) fail(ErrorCode::kInvalidArgument, "Q must cover the bank");
  return softmax(feats * phi_base + Q);
}

double reward_gap(const ConversionModel& model, const std::vector<UnlearnRequest>& requests,
                  Strategy strategy, const Evaluator& reward) {
  if (!(model.beta() > 0)) fail(ErrorCode::kInvalidArgument, "reward gap needs beta > 0");
  if (requests.empty()) fail(ErrorCode::kInvalidArgument, "reward gap needs requests");
  double total = 0;
  for (const auto& x : requests) {
    const auto& bank = unlearn::template_bank(x.scenario, strategy);
    const Eigen::VectorXd pi = model.policy(bank_features(x, bank));
    std::vector<double> r(bank.size());
    for (std::size_t i = 0; i < bank.size(); ++i) r[i] = reward(x, bank[i]) ? 1.0 : 0.0;
    const double best = *std::max_element(r.begin(), r.end());
    for (std::size_t i = 0; i < bank.size(); ++i) total += pi(static_cast<Eigen::Index>(i)) * (best - r[i]);
  }
  return total / static_cast<double>(requests.size()) / model.beta();
}

}  // namespace au::conversion
