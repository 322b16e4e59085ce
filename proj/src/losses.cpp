#include "cist/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cist/numerics.hpp"

namespace cist {

const char* method_name(Method m) {
  switch (m) {
    case Method::ce_only: return "ce";
    case Method::kd: return "kd";
    case Method::kd_entout_ce: return "kd-entout-ce";
    case Method::kd_entout_ht: return "kd-entout-ht";
    case Method::cist: return "cist";
    case Method::cist_no_reweight: return "cist-no-reweight";
    case Method::cist_no_temp: return "cist-no-temp";
  }
  return "?";
}

std::optional<Method> method_from_name(std::string_view name) {
  for (Method m : {Method::ce_only, Method::kd, Method::kd_entout_ce, Method::kd_entout_ht,
                   Method::cist, Method::cist_no_reweight, Method::cist_no_temp}) {
    if (name == method_name(m)) return m;
  }
  return std::nullopt;
}

bool method_uses_teacher(Method m) { return m != Method::ce_only; }

bool method_is_cist_family(Method m) {
  return m == Method::cist || m == Method::cist_no_reweight || m == Method::cist_no_temp;
}

bool method_is_entout(Method m) {
  return m == Method::kd_entout_ce || m == Method::kd_entout_ht;
}

void LossParams::validate() const {
  if (!(lambda_ce >= 0.0) || !(lambda_kl >= 0.0)) {
    throw ConfigError("loss weights lambda_ce/lambda_kl must be >= 0");
  }
  const bool needs_fixed_tau = method == Method::kd || method_is_entout(method) ||
                               method == Method::cist_no_temp;
  const bool needs_rho = method_is_cist_family(method);
  if (needs_fixed_tau) {
    if (!fixed_tau.has_value()) {
      throw ConfigError(std::string("method ") + method_name(method) + " requires fixed_tau");
    }
    if (!(*fixed_tau > 0.0)) throw ConfigError("fixed_tau must be > 0");
  }
  if (needs_rho) {
    if (!rho.has_value()) {
      throw ConfigError(std::string("method ") + method_name(method) + " requires rho");
    }
    if (!(*rho > 0.0)) throw ConfigError("rho must be > 0");
  }
  if (method_is_entout(method)) {
    if (!(entout_fraction > 0.0) || !(entout_fraction < 1.0)) {
      throw ConfigError("entout_fraction must lie in (0, 1)");
    }
    if (method == Method::kd_entout_ht && !(*fixed_tau + entout_ht_delta > 0.0)) {
      throw ConfigError("entout_ht_delta leaves a nonpositive outlier temperature");
    }
    if (entout_rank_tau.has_value() && !(*entout_rank_tau > 0.0)) {
      throw ConfigError("entout_rank_tau must be > 0");
    }
  }
  if (fixed_tau.has_value() && !(*fixed_tau > 0.0)) throw ConfigError("fixed_tau must be > 0");
  if (rho.has_value() && !(*rho > 0.0)) throw ConfigError("rho must be > 0");
}

namespace {

void require_labels(std::span<const int> labels, std::size_t n, std::size_t c) {
  if (labels.size() != n) throw ShapeError("labels/batch size mismatch");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw InvalidArgumentError("label out of range [0, C)");
    }
  }
}

// exp of each entry, in place.
std::vector<double> exp_all(std::vector<double> v) {
  for (double& x : v) x = std::exp(x);
  return v;
}

}  // namespace

std::pair<double, Matrix> ce_loss_and_grad(const Matrix& student_logits,
                                           std::span<const int> labels,
                                           std::span<const double> tau_per_sample) {
  const std::size_t n = student_logits.rows();
  const std::size_t c = student_logits.cols();
  require_labels(labels, n, c);
  if (tau_per_sample.size() != n) throw ShapeError("tau_per_sample size mismatch");

  double loss = 0.0;
  Matrix grad(n, c);
  for (std::size_t i = 0; i < n; ++i) {
    const double tau = tau_per_sample[i];
    std::vector<double> logq = log_softmax(student_logits.row(i), tau);
    loss += -logq[static_cast<std::size_t>(labels[i])];
    std::vector<double> q = exp_all(std::move(logq));
    const double scale = 1.0 / (static_cast<double>(n) * tau);
    for (std::size_t j = 0; j < c; ++j) {
      grad(i, j) = scale * (q[j] - (static_cast<std::size_t>(labels[i]) == j ? 1.0 : 0.0));
    }
  }
  return {loss / static_cast<double>(n), std::move(grad)};
}

std::pair<double, Matrix> ce_loss_and_grad(const Matrix& student_logits,
                                           std::span<const int> labels, double tau) {
  std::vector<double> taus(student_logits.rows(), tau);
  return ce_loss_and_grad(student_logits, labels, taus);
}

KdLossResult kd_loss_and_grad(const Matrix& teacher_logits, const Matrix& student_logits,
                              const TemperatureAssignment& assignment, bool rescale) {
  if (!teacher_logits.same_shape(student_logits)) {
    throw ShapeError("kd_loss_and_grad: teacher/student shape mismatch");
  }
  const std::size_t n = student_logits.rows();
  const std::size_t c = student_logits.cols();
  if (assignment.teacher_tau.size() != n || assignment.student_tau.size() != n) {
    throw ShapeError("kd_loss_and_grad: assignment size mismatch");
  }

  KdLossResult out;
  out.weight.resize(n);
  out.grad = Matrix(n, c);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double tau_t = assignment.teacher_tau[i];
    const double tau_s = assignment.student_tau[i];
    if (!(tau_t > 0.0) || !(tau_s > 0.0)) {
      throw InvalidArgumentError("kd_loss_and_grad: temperatures must be > 0");
    }
    const double w = rescale ? tau_t * tau_s : 1.0;
    out.weight[i] = w;

    std::vector<double> logp = log_softmax(teacher_logits.row(i), tau_t);
    std::vector<double> logq = log_softmax(student_logits.row(i), tau_s);
    double kl = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      kl += std::exp(logp[j]) * (logp[j] - logq[j]);
    }
    total += w * kl;

    const double scale = w / (static_cast<double>(n) * tau_s);
    for (std::size_t j = 0; j < c; ++j) {
      out.grad(i, j) = scale * (std::exp(logq[j]) - std::exp(logp[j]));
    }
  }
  out.kl_term = total / static_cast<double>(n);
  return out;
}

std::vector<double> approx_kd_grad(std::span<const double> teacher_logits,
                                   std::span<const double> student_logits, double tau_t,
                                   double tau_s) {
  if (teacher_logits.size() != student_logits.size()) {
    throw ShapeError("approx_kd_grad: length mismatch");
  }
  if (!(tau_t > 0.0) || !(tau_s > 0.0)) {
    throw InvalidArgumentError("approx_kd_grad: temperatures must be > 0");
  }
  const std::size_t c = teacher_logits.size();
  double mean_v = 0.0, mean_z = 0.0;
  for (std::size_t j = 0; j < c; ++j) {
    mean_v += teacher_logits[j];
    mean_z += student_logits[j];
  }
  mean_v /= static_cast<double>(c);
  mean_z /= static_cast<double>(c);
  if (std::abs(mean_v) > 1e-8 || std::abs(mean_z) > 1e-8) {
    throw InvalidArgumentError("approx_kd_grad: inputs must be zero-mean");
  }
  std::vector<double> out(c);
  const double scale = 1.0 / (static_cast<double>(c) * tau_s * tau_t);
  const double ratio = tau_t / tau_s;
  for (std::size_t j = 0; j < c; ++j) {
    out[j] = scale * (student_logits[j] * ratio - teacher_logits[j]);
  }
  return out;
}

EntOutPartition entout_partition(const Matrix& teacher_logits, double fixed_tau,
                                 double fraction) {
  if (!(fraction > 0.0) || !(fraction < 1.0)) {
    throw InvalidArgumentError("entout_partition: fraction must lie in (0, 1)");
  }
  if (!(fixed_tau > 0.0)) {
    throw InvalidArgumentError("entout_partition: fixed_tau must be > 0");
  }
  const std::size_t n = teacher_logits.rows();
  std::vector<std::pair<double, std::size_t>> ranked(n);
  for (std::size_t i = 0; i < n; ++i) {
    ranked[i] = {entropy_from_logits(teacher_logits.row(i), fixed_tau), i};
  }
  std::sort(ranked.begin(), ranked.end());  // entropy asc, index asc on ties

  const std::size_t k = static_cast<std::size_t>(fraction * static_cast<double>(n));
  EntOutPartition part;
  part.outliers.reserve(k);
  part.regular.reserve(n - k);
  for (std::size_t r = 0; r < n; ++r) {
    (r < k ? part.outliers : part.regular).push_back(ranked[r].second);
  }
  std::sort(part.outliers.begin(), part.outliers.end());
  std::sort(part.regular.begin(), part.regular.end());
  return part;
}

LossContext make_loss_context(const Matrix& teacher_logits, const Matrix& student_logits,
                              const LossParams& params,
                              const std::vector<std::uint8_t>* entout_mask) {
  params.validate();
  const std::size_t n = student_logits.rows();
  LossContext ctx;
  ctx.kl_weight.assign(n, 1.0);
  ctx.outlier.assign(n, 0);

  if (method_uses_teacher(params.method)) {
    if (!teacher_logits.same_shape(student_logits)) {
      throw ShapeError("make_loss_context: teacher/student shape mismatch");
    }
  }

  switch (params.method) {
    case Method::ce_only: {
      // Degenerate member of the family: CE at the configured temperature
      // policy (adaptive when rho is set, else fixed_tau, default 1).
      if (params.rho.has_value()) {
        ctx.ce_tau.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
          ctx.ce_tau[i] = adaptive_tau(center(student_logits.row(i)), *params.rho);
        }
      } else {
        ctx.ce_tau.assign(n, params.fixed_tau.value_or(1.0));
      }
      ctx.assignment.teacher_tau = ctx.ce_tau;
      ctx.assignment.student_tau = ctx.ce_tau;
      return ctx;
    }
    case Method::kd:
    case Method::kd_entout_ce:
    case Method::kd_entout_ht: {
      const double tau = *params.fixed_tau;
      ctx.assignment =
          assign_temperatures(teacher_logits, student_logits, TemperaturePolicy::fixed(tau));
      ctx.ce_tau.assign(n, tau);
      if (method_is_entout(params.method)) {
        if (entout_mask != nullptr) {
          if (entout_mask->size() != n) throw ShapeError("entout mask size mismatch");
          ctx.outlier = *entout_mask;
        } else {
          const double rank_tau = params.entout_rank_tau.value_or(tau);
          EntOutPartition part =
              entout_partition(teacher_logits, rank_tau, params.entout_fraction);
          for (std::size_t idx : part.outliers) ctx.outlier[idx] = 1;
        }
        if (params.method == Method::kd_entout_ht) {
          for (std::size_t i = 0; i < n; ++i) {
            if (ctx.outlier[i]) {
              ctx.assignment.teacher_tau[i] = tau + params.entout_ht_delta;
              ctx.assignment.student_tau[i] = tau + params.entout_ht_delta;
            }
          }
        }
      }
      return ctx;
    }
    case Method::cist:
    case Method::cist_no_reweight: {
      ctx.assignment = assign_temperatures(teacher_logits, student_logits,
                                           TemperaturePolicy::adaptive(*params.rho));
      ctx.ce_tau = ctx.assignment.student_tau;
      if (params.method == Method::cist) {
        for (std::size_t i = 0; i < n; ++i) {
          ctx.kl_weight[i] = ctx.assignment.teacher_tau[i] * ctx.assignment.student_tau[i];
        }
      }
      return ctx;
    }
    case Method::cist_no_temp: {
      const double tau = *params.fixed_tau;
      ctx.assignment =
          assign_temperatures(teacher_logits, student_logits, TemperaturePolicy::fixed(tau));
      ctx.ce_tau.assign(n, tau);
      // Reweighting only: the weight comes from the would-be adaptive
      // temperatures while the distributions stay at the shared fixed tau.
      TemperatureAssignment would_be = assign_temperatures(
          teacher_logits, student_logits, TemperaturePolicy::adaptive(*params.rho));
      for (std::size_t i = 0; i < n; ++i) {
        ctx.kl_weight[i] = would_be.teacher_tau[i] * would_be.student_tau[i];
      }
      return ctx;
    }
  }
  throw ConfigError("make_loss_context: unknown method");
}

std::pair<LossBreakdown, Matrix> eval_loss(const Matrix& teacher_logits,
                                           const Matrix& student_logits,
                                           std::span<const int> labels,
                                           const LossParams& params, const LossContext& ctx) {
  const std::size_t n = student_logits.rows();
  const std::size_t c = student_logits.cols();
  require_labels(labels, n, c);
  if (ctx.ce_tau.size() != n || ctx.kl_weight.size() != n || ctx.outlier.size() != n) {
    throw ShapeError("eval_loss: context size mismatch");
  }
  const bool with_kl = method_uses_teacher(params.method);
  if (with_kl && !teacher_logits.same_shape(student_logits)) {
    throw ShapeError("eval_loss: teacher/student shape mismatch");
  }

  LossBreakdown breakdown;
  breakdown.per_sample_weight = ctx.kl_weight;
  Matrix grad(n, c);
  const double inv_n = 1.0 / static_cast<double>(n);

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = static_cast<std::size_t>(labels[i]);
    const double ce_tau = ctx.ce_tau[i];
    const std::vector<double> logq_ce = log_softmax(student_logits.row(i), ce_tau);
    breakdown.ce_term += inv_n * -logq_ce[y];

    const double ce_scale = params.lambda_ce * inv_n / ce_tau;
    for (std::size_t j = 0; j < c; ++j) {
      grad(i, j) = ce_scale * (std::exp(logq_ce[j]) - (j == y ? 1.0 : 0.0));
    }
    if (!with_kl) continue;

    if (params.method == Method::kd_entout_ce && ctx.outlier[i]) {
      // Distillation slot replaced by cross-entropy on the same student
      // distribution the method's KL would use.
      breakdown.kl_term += inv_n * -logq_ce[y];
      const double scale = params.lambda_kl * inv_n / ce_tau;
      for (std::size_t j = 0; j < c; ++j) {
        grad(i, j) += scale * (std::exp(logq_ce[j]) - (j == y ? 1.0 : 0.0));
      }
      continue;
    }

    const double tau_t = ctx.assignment.teacher_tau[i];
    const double tau_s = ctx.assignment.student_tau[i];
    const double w = ctx.kl_weight[i];
    const std::vector<double> logp = log_softmax(teacher_logits.row(i), tau_t);
    const std::vector<double> logq =
        tau_s == ce_tau ? logq_ce : log_softmax(student_logits.row(i), tau_s);

    double kl = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double p = std::exp(logp[j]);
      if (p > 0.0) kl += p * (logp[j] - logq[j]);
    }
    breakdown.kl_term += inv_n * w * kl;

    const double kl_scale = params.lambda_kl * inv_n * w / tau_s;
    for (std::size_t j = 0; j < c; ++j) {
      grad(i, j) += kl_scale * (std::exp(logq[j]) - std::exp(logp[j]));
    }
  }

  breakdown.total = params.lambda_ce * breakdown.ce_term + params.lambda_kl * breakdown.kl_term;
  return {std::move(breakdown), std::move(grad)};
}

std::pair<LossBreakdown, Matrix> assemble_loss(const Matrix& teacher_logits,
                                               const Matrix& student_logits,
                                               std::span<const int> labels,
                                               const LossParams& params,
                                               const std::vector<std::uint8_t>* entout_mask) {
  LossContext ctx = make_loss_context(teacher_logits, student_logits, params, entout_mask);
  return eval_loss(teacher_logits, student_logits, labels, params, ctx);
}

}  // namespace cist
