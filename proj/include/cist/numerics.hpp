#pragma once

#include <span>
#include <vector>

#include "cist/errors.hpp"

namespace cist {

// Probability vector over C classes. Entries are nonnegative and sum to 1
// within 1e-12. Softmax of finite logits is strictly positive in exact
// arithmetic; an entry may still underflow to 0.0 in doubles, which the
// validator accepts.
class SoftDistribution {
 public:
  explicit SoftDistribution(std::vector<double> probs);

  std::span<const double> probs() const { return probs_; }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::size_t size() const { return probs_.size(); }

 private:
  std::vector<double> probs_;
};

// log(sum_c exp(v_c)) via max-shift; no intermediate overflow for |v_c| <= 700.
double log_sum_exp(std::span<const double> v);

// softmax(v / tau). Shift-invariant: softmax(v + k, tau) == softmax(v, tau).
SoftDistribution softmax(std::span<const double> logits, double tau);

// log-probabilities of softmax(v / tau), computed as v_c/tau - lse(v/tau)
// to avoid taking logs of small probabilities.
std::vector<double> log_softmax(std::span<const double> logits, double tau);

// Shannon entropy -sum p ln p, in nats. Result lies in [0, ln C].
double entropy(const SoftDistribution& p);

// Entropy of softmax(v / tau) evaluated in the log domain:
// H = lse(v/tau) - sum_c p_c * v_c/tau.
double entropy_from_logits(std::span<const double> logits, double tau);

// Forward KL divergence sum_c p_c ln(p_c / q_c), in nats. Nonnegative,
// zero iff p == q elementwise.
double kl_divergence(const SoftDistribution& p, const SoftDistribution& q);

}  // namespace cist
