#include "cist/distill.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "cist/numerics.hpp"
#include "cist/rng.hpp"
#include "json.hpp"

namespace cist {

LossParams DistillConfig::loss_params() const {
  LossParams p;
  p.method = method;
  p.lambda_ce = lambda_ce;
  p.lambda_kl = lambda_kl;
  p.rho = rho;
  p.fixed_tau = fixed_tau;
  p.entout_fraction = entout_fraction;
  p.entout_ht_delta = entout_ht_delta;
  p.entout_rank_tau = entout_rank_tau;
  return p;
}

void DistillConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (eval_cadence < 1) throw ConfigError("eval_cadence must be >= 1");
  loss_params().validate();
}

DistillConfig default_distill_config(Method method, std::uint64_t seed) {
  DistillConfig cfg;
  cfg.method = method;
  cfg.seed = seed;
  if (method_is_cist_family(method)) {
    cfg.rho = 3.0;
    cfg.lambda_kl = 8.0;
    cfg.lambda_ce = 0.1;
    if (method == Method::cist_no_temp) {
      // Reweighting-only ablation: the distributions are the fixed-tau KD
      // ones, so it inherits the KD loss weight; the tau_t*tau_s factor
      // already brings the magnitude compensation that lambda_kl = 8
      // provides for the adaptive variants.
      cfg.fixed_tau = 4.0;
      cfg.lambda_kl = 0.9;
    }
  } else if (method == Method::ce_only) {
    cfg.fixed_tau = 1.0;
    cfg.lambda_ce = 1.0;
    cfg.lambda_kl = 0.0;
  } else {
    cfg.fixed_tau = 4.0;
    cfg.lambda_kl = 0.9;
    cfg.lambda_ce = 0.1;
  }
  return cfg;
}

double eval_accuracy(const MlpParams& params, const Matrix& features,
                     std::span<const int> labels) {
  if (features.rows() == 0) return 0.0;
  Matrix logits = mlp_forward(params, features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (row[c] > row[best]) best = c;
    }
    if (best == static_cast<std::size_t>(labels[i])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

namespace {

Matrix gather_rows(const Matrix& src, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), src.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    auto row = src.row(idx[r]);
    std::copy(row.begin(), row.end(), out.row(r).begin());
  }
  return out;
}

// Shared epoch/batch loop behind train_teacher and distill_student.
// `teacher` is null for plain CE training.
TrainResult run_training(const LabeledDataset& data, const MlpParams* teacher,
                         std::span<const std::size_t> student_hidden,
                         const DistillConfig& cfg, bool verbose) {
  cfg.validate();
  const LossParams loss_params = cfg.loss_params();
  const bool with_teacher = method_uses_teacher(cfg.method);
  if (with_teacher && teacher == nullptr) {
    throw ConfigError(std::string("method ") + method_name(cfg.method) + " requires a teacher");
  }

  Matrix train_x, val_x, test_x;
  std::vector<int> train_y, val_y, test_y;
  data.gather(Split::train, &train_x, &train_y);
  data.gather(Split::val, &val_x, &val_y);
  data.gather(Split::test, &test_x, &test_y);
  if (train_x.rows() == 0) throw InvalidArgumentError("training split is empty");
  const std::size_t n_train = train_x.rows();

  if (with_teacher) {
    if (teacher->input_dim() != data.features.cols() ||
        teacher->output_dim() != data.num_classes) {
      throw ShapeError("teacher dimensions do not match the dataset");
    }
  }

  std::vector<std::size_t> dims;
  dims.push_back(data.features.cols());
  dims.insert(dims.end(), student_hidden.begin(), student_hidden.end());
  dims.push_back(data.num_classes);
  Rng init_rng = Rng::substream(cfg.seed, "model-init");
  MlpParams student = init_mlp(dims, init_rng);

  LrSchedule schedule{cfg.optim.lr, cfg.optim.decay_factor, cfg.optim.decay_epochs};
  OptimState optim =
      OptimState::zeros_like(student, cfg.optim.momentum, cfg.optim.weight_decay, schedule);

  RunRecord record;

  // Entropy-outlier ranking is computed once: the teacher is frozen, so the
  // partition is static across epochs.
  std::vector<std::uint8_t> entout_mask;
  if (method_is_entout(cfg.method)) {
    Matrix teacher_train_logits = mlp_forward(*teacher, train_x);
    const double rank_tau = loss_params.entout_rank_tau.value_or(*loss_params.fixed_tau);
    EntOutPartition part =
        entout_partition(teacher_train_logits, rank_tau, loss_params.entout_fraction);
    entout_mask.assign(n_train, 0);
    for (std::size_t i : part.outliers) entout_mask[i] = 1;
    record.entout_outlier_count = part.outliers.size();
  }

  Rng order_rng = Rng::substream(cfg.seed, "batch-order");
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), 0);

  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    order_rng.shuffle(order);

    double sum_total = 0.0, sum_ce = 0.0, sum_kl = 0.0;
    double ent_sum = 0.0, ent_sum_sq = 0.0;
    std::size_t ent_count = 0;

    for (std::size_t start = 0; start < n_train; start += batch) {
      const std::size_t len = std::min(batch, n_train - start);
      std::span<const std::size_t> idx(order.data() + start, len);
      Matrix xb = gather_rows(train_x, idx);
      std::vector<int> yb(len);
      for (std::size_t r = 0; r < len; ++r) yb[r] = train_y[idx[r]];

      Matrix teacher_logits;
      if (with_teacher) teacher_logits = mlp_forward(*teacher, xb);

      ForwardCache cache;
      Matrix student_logits = mlp_forward(student, xb, &cache);
      for (double v : student_logits.data()) {
        if (!std::isfinite(v)) {
          throw TrainingError("training diverged (non-finite logits) at epoch " +
                              std::to_string(epoch));
        }
      }

      std::vector<std::uint8_t> mask;
      const std::vector<std::uint8_t>* mask_ptr = nullptr;
      if (!entout_mask.empty()) {
        mask.resize(len);
        for (std::size_t r = 0; r < len; ++r) mask[r] = entout_mask[idx[r]];
        mask_ptr = &mask;
      }

      LossContext ctx = make_loss_context(teacher_logits, student_logits, loss_params, mask_ptr);
      auto [breakdown, grad] = eval_loss(teacher_logits, student_logits, yb, loss_params, ctx);
      if (!std::isfinite(breakdown.total)) {
        throw TrainingError("training diverged (non-finite loss) at epoch " +
                            std::to_string(epoch));
      }

      const double scale = static_cast<double>(len);
      sum_total += breakdown.total * scale;
      sum_ce += breakdown.ce_term * scale;
      sum_kl += breakdown.kl_term * scale;

      if (with_teacher) {
        for (std::size_t r = 0; r < len; ++r) {
          if (cfg.method == Method::kd_entout_ce && ctx.outlier[r]) continue;
          const double h =
              entropy_from_logits(teacher_logits.row(r), ctx.assignment.teacher_tau[r]);
          ent_sum += h;
          ent_sum_sq += h * h;
          ++ent_count;
        }
      }

      MlpGrads grads = mlp_backward(student, cache, grad);
      sgd_step(student, grads, optim, epoch);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.total = sum_total / static_cast<double>(n_train);
    rec.ce = sum_ce / static_cast<double>(n_train);
    rec.kl = sum_kl / static_cast<double>(n_train);
    rec.val_acc = eval_accuracy(student, val_x, val_y);
    rec.test_acc = eval_accuracy(student, test_x, test_y);
    if (ent_count > 0) {
      rec.ent_mean = ent_sum / static_cast<double>(ent_count);
      const double var =
          ent_sum_sq / static_cast<double>(ent_count) - rec.ent_mean * rec.ent_mean;
      rec.ent_std = std::sqrt(std::max(var, 0.0));
    }
    rec.wall_sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    record.epochs.push_back(rec);

    if (verbose && (epoch % cfg.eval_cadence == 0 || epoch == cfg.epochs)) {
      std::fprintf(stderr,
                   "[%s] epoch %3d  loss %.4f  ce %.4f  kl %.4f  val %.4f  test %.4f\n",
                   method_name(cfg.method), epoch, rec.total, rec.ce, rec.kl, rec.val_acc,
                   rec.test_acc);
    }
  }

  record.best_val_epoch = 1;
  for (const auto& rec : record.epochs) {
    if (rec.val_acc > record.best_val_acc) {
      record.best_val_acc = rec.val_acc;
      record.best_val_epoch = rec.epoch;
      record.final_test_acc = rec.test_acc;
    }
  }
  return TrainResult{std::move(student), std::move(record)};
}

nlohmann::json epoch_json(const EpochRecord& rec) {
  nlohmann::json j;
  j["epoch"] = rec.epoch;
  j["total"] = rec.total;
  j["ce"] = rec.ce;
  j["kl"] = rec.kl;
  j["val_acc"] = rec.val_acc;
  j["test_acc"] = rec.test_acc;
  j["ent_mean"] = rec.ent_mean;
  j["ent_std"] = rec.ent_std;
  return j;
}

}  // namespace

std::string run_record_jsonl(const RunRecord& record) {
  std::string out;
  for (const auto& rec : record.epochs) {
    out += epoch_json(rec).dump();
    out += "\n";
  }
  return out;
}

std::string run_record_summary_json(const RunRecord& record) {
  nlohmann::json j;
  j["epochs"] = record.epochs.size();
  j["best_val_epoch"] = record.best_val_epoch;
  j["best_val_acc"] = record.best_val_acc;
  j["final_test_acc"] = record.final_test_acc;
  j["entout_outlier_count"] = record.entout_outlier_count;
  return j.dump(2) + "\n";
}

TrainResult train_teacher(const LabeledDataset& data, const TeacherConfig& cfg) {
  DistillConfig run;
  run.method = Method::ce_only;
  run.fixed_tau = 1.0;
  run.lambda_ce = 1.0;
  run.lambda_kl = 0.0;
  run.epochs = cfg.epochs;
  run.batch_size = cfg.batch_size;
  run.optim = cfg.optim;
  run.seed = cfg.seed;
  return run_training(data, nullptr, cfg.hidden, run, false);
}

TrainResult distill_student(const MlpParams& teacher, const LabeledDataset& data,
                            std::span<const std::size_t> student_hidden,
                            const DistillConfig& cfg) {
  return run_training(data, &teacher, student_hidden, cfg, false);
}

std::vector<AblationRow> run_ablation_suite(const LabeledDataset& data,
                                            const AblationConfig& cfg) {
  if (cfg.methods.size() < 2) {
    throw ConfigError("run_ablation_suite: need at least 2 methods");
  }
  if (cfg.seeds.empty()) throw ConfigError("run_ablation_suite: need at least 1 seed");

  std::vector<AblationRow> rows;
  rows.reserve(cfg.methods.size());
  for (Method m : cfg.methods) {
    AblationRow row;
    row.method = m;
    rows.push_back(std::move(row));
  }

  for (std::uint64_t seed : cfg.seeds) {
    TeacherConfig tcfg = cfg.teacher;
    tcfg.seed = seed;
    TrainResult teacher = train_teacher(data, tcfg);
    if (cfg.verbose) {
      std::fprintf(stderr, "[ablation] seed %llu teacher test acc %.4f\n",
                   static_cast<unsigned long long>(seed), teacher.record.final_test_acc);
    }
    for (auto& row : rows) {
      DistillConfig dcfg = default_distill_config(row.method, seed);
      dcfg.epochs = cfg.epochs;
      dcfg.batch_size = cfg.batch_size;
      dcfg.optim = cfg.optim;
      TrainResult student = distill_student(teacher.params, data, cfg.student_hidden, dcfg);
      row.per_seed_acc.push_back(student.record.final_test_acc);
      if (cfg.verbose) {
        std::fprintf(stderr, "[ablation] seed %llu %-16s test acc %.4f\n",
                     static_cast<unsigned long long>(seed), method_name(row.method),
                     student.record.final_test_acc);
      }
    }
  }

  for (auto& row : rows) {
    const double n = static_cast<double>(row.per_seed_acc.size());
    double sum = 0.0;
    for (double a : row.per_seed_acc) sum += a;
    row.mean_acc = sum / n;
    if (row.per_seed_acc.size() > 1) {
      double ss = 0.0;
      for (double a : row.per_seed_acc) ss += (a - row.mean_acc) * (a - row.mean_acc);
      row.std_acc = std::sqrt(ss / (n - 1.0));
    }
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows,
                         std::span<const std::uint64_t> seeds) {
  std::string out = "method,mean_acc,std_acc";
  for (std::uint64_t s : seeds) out += ",acc_seed_" + std::to_string(s);
  out += "\n";
  char buf[64];
  for (const auto& row : rows) {
    out += method_name(row.method);
    std::snprintf(buf, sizeof(buf), ",%.17g,%.17g", row.mean_acc, row.std_acc);
    out += buf;
    for (double a : row.per_seed_acc) {
      std::snprintf(buf, sizeof(buf), ",%.17g", a);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace cist
