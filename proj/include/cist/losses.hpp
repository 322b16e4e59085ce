#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "cist/matrix.hpp"
#include "cist/temperature.hpp"

namespace cist {

enum class Method {
  ce_only,
  kd,
  kd_entout_ce,
  kd_entout_ht,
  cist,
  cist_no_reweight,
  cist_no_temp,
};

const char* method_name(Method m);
std::optional<Method> method_from_name(std::string_view name);
bool method_uses_teacher(Method m);
bool method_is_cist_family(Method m);
bool method_is_entout(Method m);

struct LossParams {
  Method method = Method::kd;
  double lambda_ce = 0.1;
  double lambda_kl = 0.9;
  std::optional<double> rho;               // cist family
  std::optional<double> fixed_tau;         // kd family and cist_no_temp
  double entout_fraction = 0.05;           // entout methods
  double entout_ht_delta = 1.0;            // tau bump for entout-ht outliers
  std::optional<double> entout_rank_tau;   // ranking temperature, defaults to fixed_tau

  // Throws ConfigError naming the missing/invalid field for the method.
  void validate() const;
};

struct LossBreakdown {
  double total = 0.0;
  double ce_term = 0.0;
  double kl_term = 0.0;                    // post-rescaling, mean over batch
  std::vector<double> per_sample_weight;   // tau_t * tau_s factor; 1.0 when unweighted
};

// Mean cross-entropy -ln q_{i,y_i} with q_i = softmax(z_i / tau_i), plus its
// gradient (1/(N tau_i)) (q_i - onehot(y_i)).
std::pair<double, Matrix> ce_loss_and_grad(const Matrix& student_logits,
                                           std::span<const int> labels,
                                           std::span<const double> tau_per_sample);
std::pair<double, Matrix> ce_loss_and_grad(const Matrix& student_logits,
                                           std::span<const int> labels, double tau = 1.0);

struct KdLossResult {
  double kl_term = 0.0;               // mean over batch of weight_i * KL_i
  std::vector<double> weight;         // tau_t * tau_s per sample when rescaling, else 1
  Matrix grad;                        // d(kl_term)/dz; rows sum to 0
};

// Per-sample KL(p_i^{tau_t} || q_i^{tau_s}) with the confidence-aware rescale
// weight tau_t * tau_s when `rescale` is on. Temperatures are constants under
// differentiation: grad row i = (weight_i / (N tau_s,i)) (q_i - p_i).
KdLossResult kd_loss_and_grad(const Matrix& teacher_logits, const Matrix& student_logits,
                              const TemperatureAssignment& assignment, bool rescale);

// First-order high-temperature form of the KD gradient for one sample:
// (1 / (C tau_s tau_t)) * (z_c * (tau_t / tau_s) - v_c). Both inputs must be
// zero-mean (within 1e-8), which the derivation assumes.
std::vector<double> approx_kd_grad(std::span<const double> teacher_logits,
                                   std::span<const double> student_logits, double tau_t,
                                   double tau_s);

struct EntOutPartition {
  std::vector<std::size_t> outliers;  // lowest-entropy floor(fraction*N) samples
  std::vector<std::size_t> regular;
};

// Partitions samples by the entropy of softmax(v_i / fixed_tau). Ties break
// toward the lower sample index; both sets come back sorted by index.
EntOutPartition entout_partition(const Matrix& teacher_logits, double fixed_tau,
                                 double fraction);

// Per-batch quantities that are computed once from the incoming logits and
// then held constant by the gradient (the stop-gradient treatment of tau).
struct LossContext {
  TemperatureAssignment assignment;   // KL temperatures per sample
  std::vector<double> ce_tau;         // CE temperature per sample
  std::vector<double> kl_weight;      // KL rescale factor per sample
  std::vector<std::uint8_t> outlier;  // entout flag per sample
};

// entout_mask, when given, supplies precomputed outlier flags (one per batch
// row); otherwise entout methods rank the batch itself.
LossContext make_loss_context(const Matrix& teacher_logits, const Matrix& student_logits,
                              const LossParams& params,
                              const std::vector<std::uint8_t>* entout_mask = nullptr);

// Loss and gradient with an existing (frozen) context. total =
// lambda_ce * ce_term + lambda_kl * kl_term; gradient matches d(total)/dz.
std::pair<LossBreakdown, Matrix> eval_loss(const Matrix& teacher_logits,
                                           const Matrix& student_logits,
                                           std::span<const int> labels,
                                           const LossParams& params, const LossContext& ctx);

std::pair<LossBreakdown, Matrix> assemble_loss(
    const Matrix& teacher_logits, const Matrix& student_logits, std::span<const int> labels,
    const LossParams& params, const std::vector<std::uint8_t>* entout_mask = nullptr);

}  // namespace cist
