#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cist/datasets.hpp"
#include "cist/losses.hpp"
#include "cist/model.hpp"

namespace cist {

struct OptimConfig {
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double decay_factor = 0.1;
  std::vector<int> decay_epochs;
};

struct DistillConfig {
  Method method = Method::cist;
  std::optional<double> rho;
  std::optional<double> fixed_tau;
  double entout_fraction = 0.05;
  double entout_ht_delta = 1.0;
  std::optional<double> entout_rank_tau;
  double lambda_ce = 0.1;
  double lambda_kl = 8.0;
  int epochs = 60;
  int batch_size = 64;
  OptimConfig optim;
  std::uint64_t seed = 1;
  int eval_cadence = 1;  // console-reporting cadence; metrics record every epoch

  LossParams loss_params() const;
  void validate() const;
};

// Paper-default hyperparameters per method: rho=3 / lambda_kl=8 for the cist
// family, tau=4 / lambda_kl=0.9 for the kd family, plain CE otherwise.
DistillConfig default_distill_config(Method method, std::uint64_t seed);

struct EpochRecord {
  int epoch = 0;
  double total = 0.0, ce = 0.0, kl = 0.0;  // mean training loss terms
  double val_acc = 0.0, test_acc = 0.0;
  double ent_mean = 0.0, ent_std = 0.0;  // teacher soft-label entropy in use
  double wall_sec = 0.0;                 // informational; never serialized
};

struct RunRecord {
  std::vector<EpochRecord> epochs;
  int best_val_epoch = 0;
  double best_val_acc = 0.0;
  double final_test_acc = 0.0;  // test accuracy at the best-validation epoch
  std::size_t entout_outlier_count = 0;
};

// One JSON object per epoch, stable key order, reproducible byte-for-byte
// for a given (config, seed). Wall-clock timing is deliberately left out.
std::string run_record_jsonl(const RunRecord& record);
std::string run_record_summary_json(const RunRecord& record);

struct TrainResult {
  MlpParams params;
  RunRecord record;
};

struct TeacherConfig {
  std::vector<std::size_t> hidden = {128, 128};
  int epochs = 60;
  int batch_size = 64;
  OptimConfig optim;
  std::uint64_t seed = 1;
};

// Plain cross-entropy training at tau = 1; the result is the frozen teacher.
TrainResult train_teacher(const LabeledDataset& data, const TeacherConfig& cfg);

// Full distillation loop: teacher forward (no gradient), student forward,
// centering, temperature assignment, loss assembly, backward, SGD step.
TrainResult distill_student(const MlpParams& teacher, const LabeledDataset& data,
                            std::span<const std::size_t> student_hidden,
                            const DistillConfig& cfg);

double eval_accuracy(const MlpParams& params, const Matrix& features,
                     std::span<const int> labels);

struct AblationRow {
  Method method;
  double mean_acc = 0.0;
  double std_acc = 0.0;  // sample std over seeds
  std::vector<double> per_seed_acc;
};

struct AblationConfig {
  std::vector<Method> methods;
  std::vector<std::uint64_t> seeds;
  TeacherConfig teacher;                       // seed overridden per run
  std::vector<std::size_t> student_hidden = {32};
  int epochs = 60;
  int batch_size = 64;
  OptimConfig optim;
  bool verbose = false;
};

// One teacher per seed, shared by every method under that seed; each method
// runs with its own default hyperparameters.
std::vector<AblationRow> run_ablation_suite(const LabeledDataset& data,
                                            const AblationConfig& cfg);

std::string ablation_csv(const std::vector<AblationRow>& rows,
                         std::span<const std::uint64_t> seeds);

}  // namespace cist
