#include "cist/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cist {

namespace {

void require_finite_logits(std::span<const double> v, const char* where) {
  if (v.size() < 2) {
    throw InvalidArgumentError(std::string(where) + ": logit vector needs length >= 2");
  }
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw InvalidArgumentError(std::string(where) + ": non-finite logit");
    }
  }
}

void require_positive_tau(double tau, const char* where) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw InvalidArgumentError(std::string(where) + ": temperature must be positive");
  }
}

}  // namespace

SoftDistribution::SoftDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.size() < 2) {
    throw InvalidArgumentError("SoftDistribution: needs length >= 2");
  }
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !(p <= 1.0)) {  // also rejects NaN
      throw InvalidArgumentError("SoftDistribution: entry outside [0, 1]");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw InvalidArgumentError("SoftDistribution: entries do not sum to 1");
  }
}

double log_sum_exp(std::span<const double> v) {
  require_finite_logits(v, "log_sum_exp");
  double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

SoftDistribution softmax(std::span<const double> logits, double tau) {
  require_finite_logits(logits, "softmax");
  require_positive_tau(tau, "softmax");
  double m = *std::max_element(logits.begin(), logits.end()) / tau;
  std::vector<double> e(logits.size());
  double s = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    e[c] = std::exp(logits[c] / tau - m);
    s += e[c];
  }
  for (double& x : e) x /= s;
  return SoftDistribution(std::move(e));
}

std::vector<double> log_softmax(std::span<const double> logits, double tau) {
  require_finite_logits(logits, "log_softmax");
  require_positive_tau(tau, "log_softmax");
  std::vector<double> scaled(logits.size());
  for (std::size_t c = 0; c < logits.size(); ++c) scaled[c] = logits[c] / tau;
  double lse = log_sum_exp(scaled);
  for (double& x : scaled) x -= lse;
  return scaled;
}

double entropy(const SoftDistribution& p) {
  double h = 0.0;
  for (double x : p.probs()) {
    if (x > 0.0) h -= x * std::log(x);
  }
  return h;
}

double entropy_from_logits(std::span<const double> logits, double tau) {
  require_finite_logits(logits, "entropy_from_logits");
  require_positive_tau(tau, "entropy_from_logits");
  std::vector<double> scaled(logits.size());
  for (std::size_t c = 0; c < logits.size(); ++c) scaled[c] = logits[c] / tau;
  double lse = log_sum_exp(scaled);
  double dot = 0.0;
  for (double s : scaled) dot += std::exp(s - lse) * s;
  return lse - dot;
}

double kl_divergence(const SoftDistribution& p, const SoftDistribution& q) {
  if (p.size() != q.size()) {
    throw ShapeError("kl_divergence: length mismatch");
  }
  double d = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    if (p[c] > 0.0) {
      if (q[c] > 0.0) {
        d += p[c] * std::log(p[c] / q[c]);
      } else {
        return std::numeric_limits<double>::infinity();
      }
    }
  }
  return d;
}

}  // namespace cist
