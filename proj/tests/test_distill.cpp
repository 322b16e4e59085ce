#include <cmath>
#include <vector>

#include "cist/distill.hpp"
#include "cist/rng.hpp"
#include "doctest.h"

using namespace cist;

namespace {

GaussianMixtureDataset small_benchmark(std::uint64_t seed) {
  // Mixed difficulty at test scale: a few confusable class pairs.
  return gen_gaussian_mixture(6, 8, 60, 4.0, 1.2, seed);
}

TeacherConfig small_teacher(std::uint64_t seed) {
  TeacherConfig cfg;
  cfg.hidden = {32, 32};
  cfg.epochs = 30;
  cfg.batch_size = 32;
  cfg.optim.decay_epochs = {20, 26};
  cfg.seed = seed;
  return cfg;
}

bool params_equal(const MlpParams& a, const MlpParams& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t k = 0; k < a.layers.size(); ++k) {
    if (a.layers[k].weight.data() != b.layers[k].weight.data()) return false;
    if (a.layers[k].bias != b.layers[k].bias) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("train_teacher fits a separable set and is deterministic") {
  GaussianMixtureDataset gm = gen_gaussian_mixture(4, 6, 80, 6.0, 0.4, 3);
  TrainResult a = train_teacher(gm.data, small_teacher(3));
  CHECK(a.record.final_test_acc >= 0.95);
  CHECK(a.record.epochs.size() == 30);
  CHECK(a.record.best_val_acc >= a.record.epochs.front().val_acc);

  TrainResult b = train_teacher(gm.data, small_teacher(3));
  CHECK(params_equal(a.params, b.params));
  CHECK(run_record_jsonl(a.record) == run_record_jsonl(b.record));
}

TEST_CASE("training divergence raises an error naming the epoch") {
  GaussianMixtureDataset gm = small_benchmark(5);
  TeacherConfig cfg = small_teacher(5);
  cfg.optim.lr = 1e9;
  cfg.epochs = 10;
  CHECK_THROWS_WITH_AS(train_teacher(gm.data, cfg), doctest::Contains("epoch"),
                       TrainingError);
}

TEST_CASE("the teacher is bitwise unchanged by a distillation run") {
  GaussianMixtureDataset gm = small_benchmark(7);
  TrainResult teacher = train_teacher(gm.data, small_teacher(7));
  MlpParams snapshot = teacher.params;

  DistillConfig cfg = default_distill_config(Method::cist, 7);
  cfg.epochs = 8;
  cfg.optim.decay_epochs = {6};
  std::vector<std::size_t> hidden{16};
  distill_student(teacher.params, gm.data, hidden, cfg);
  CHECK(params_equal(teacher.params, snapshot));
}

TEST_CASE("cist with all temperatures clamped matches kd at tau 1 step for step") {
  GaussianMixtureDataset gm = small_benchmark(11);
  TrainResult teacher = train_teacher(gm.data, small_teacher(11));
  std::vector<std::size_t> hidden{16};

  DistillConfig cist_cfg = default_distill_config(Method::cist, 11);
  cist_cfg.rho = 1e12;  // clamp every temperature to 1
  cist_cfg.lambda_kl = 0.9;
  cist_cfg.lambda_ce = 0.1;
  cist_cfg.epochs = 6;
  cist_cfg.optim.decay_epochs = {};

  DistillConfig kd_cfg = default_distill_config(Method::kd, 11);
  kd_cfg.fixed_tau = 1.0;
  kd_cfg.lambda_kl = 0.9;
  kd_cfg.lambda_ce = 0.1;
  kd_cfg.epochs = 6;
  kd_cfg.optim.decay_epochs = {};

  TrainResult a = distill_student(teacher.params, gm.data, hidden, cist_cfg);
  TrainResult b = distill_student(teacher.params, gm.data, hidden, kd_cfg);
  REQUIRE(a.record.epochs.size() == b.record.epochs.size());
  for (std::size_t e = 0; e < a.record.epochs.size(); ++e) {
    CHECK(std::abs(a.record.epochs[e].total - b.record.epochs[e].total) < 1e-10);
    CHECK(std::abs(a.record.epochs[e].ce - b.record.epochs[e].ce) < 1e-10);
    CHECK(std::abs(a.record.epochs[e].kl - b.record.epochs[e].kl) < 1e-10);
  }
  CHECK(params_equal(a.params, b.params));
}

TEST_CASE("kd-entout-ce flags exactly floor(fraction * N_train) samples") {
  GaussianMixtureDataset gm = small_benchmark(13);
  TrainResult teacher = train_teacher(gm.data, small_teacher(13));
  const std::size_t n_train = gm.data.indices_of(Split::train).size();

  DistillConfig cfg = default_distill_config(Method::kd_entout_ce, 13);
  cfg.epochs = 3;
  cfg.optim.decay_epochs = {};
  std::vector<std::size_t> hidden{16};
  TrainResult r = distill_student(teacher.params, gm.data, hidden, cfg);
  CHECK(r.record.entout_outlier_count ==
        static_cast<std::size_t>(0.05 * static_cast<double>(n_train)));
}

TEST_CASE("with lambda_kl = 0 every method reduces to the CE-only trajectory") {
  GaussianMixtureDataset gm = small_benchmark(17);
  TrainResult teacher = train_teacher(gm.data, small_teacher(17));
  std::vector<std::size_t> hidden{16};

  auto run = [&](DistillConfig cfg) {
    cfg.epochs = 5;
    cfg.optim.decay_epochs = {};
    return distill_student(teacher.params, gm.data, hidden, cfg);
  };

  // kd family: CE at the shared fixed temperature.
  DistillConfig kd_cfg = default_distill_config(Method::kd, 17);
  kd_cfg.lambda_kl = 0.0;
  DistillConfig ce_fixed = default_distill_config(Method::ce_only, 17);
  ce_fixed.fixed_tau = 4.0;
  ce_fixed.lambda_ce = kd_cfg.lambda_ce;
  ce_fixed.lambda_kl = 0.0;
  CHECK(params_equal(run(kd_cfg).params, run(ce_fixed).params));

  // cist family: CE at the adaptive student temperature.
  DistillConfig cist_cfg = default_distill_config(Method::cist, 17);
  cist_cfg.lambda_kl = 0.0;
  DistillConfig ce_adaptive = default_distill_config(Method::ce_only, 17);
  ce_adaptive.fixed_tau.reset();
  ce_adaptive.rho = 3.0;
  ce_adaptive.lambda_ce = cist_cfg.lambda_ce;
  ce_adaptive.lambda_kl = 0.0;
  CHECK(params_equal(run(cist_cfg).params, run(ce_adaptive).params));
}

TEST_CASE("per-epoch teacher-label entropy std under cist stays at or below kd") {
  GaussianMixtureDataset gm = small_benchmark(19);
  TrainResult teacher = train_teacher(gm.data, small_teacher(19));
  std::vector<std::size_t> hidden{16};

  DistillConfig cist_cfg = default_distill_config(Method::cist, 19);
  cist_cfg.epochs = 4;
  cist_cfg.optim.decay_epochs = {};
  DistillConfig kd_cfg = default_distill_config(Method::kd, 19);
  kd_cfg.epochs = 4;
  kd_cfg.optim.decay_epochs = {};

  TrainResult a = distill_student(teacher.params, gm.data, hidden, cist_cfg);
  TrainResult b = distill_student(teacher.params, gm.data, hidden, kd_cfg);
  for (std::size_t e = 0; e < 4; ++e) {
    CHECK(a.record.epochs[e].ent_std <= b.record.epochs[e].ent_std);
  }
}

TEST_CASE("a larger teacher beats a student trained from scratch, 3 seeds") {
  double teacher_sum = 0.0, scratch_sum = 0.0;
  for (std::uint64_t seed : {31ull, 32ull, 33ull}) {
    GaussianMixtureDataset gm = small_benchmark(101);  // shared data across seeds
    TrainResult teacher = train_teacher(gm.data, small_teacher(seed));
    teacher_sum += teacher.record.final_test_acc;

    DistillConfig ce = default_distill_config(Method::ce_only, seed);
    ce.epochs = 30;
    ce.optim.decay_epochs = {20, 26};
    std::vector<std::size_t> hidden{8};
    TrainResult scratch = distill_student(teacher.params, gm.data, hidden, ce);
    scratch_sum += scratch.record.final_test_acc;
  }
  CHECK(teacher_sum / 3.0 >= scratch_sum / 3.0);
}

TEST_CASE("run_ablation_suite: duplicate methods give identical rows") {
  GaussianMixtureDataset gm = small_benchmark(23);
  AblationConfig cfg;
  cfg.methods = {Method::kd, Method::kd};
  cfg.seeds = {1, 2};
  cfg.teacher = small_teacher(0);
  cfg.student_hidden = {12};
  cfg.epochs = 5;
  cfg.batch_size = 32;
  cfg.optim.decay_epochs = {};

  auto rows = run_ablation_suite(gm.data, cfg);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].per_seed_acc == rows[1].per_seed_acc);
  CHECK(rows[0].mean_acc == rows[1].mean_acc);

  AblationConfig bad = cfg;
  bad.methods = {Method::kd};
  CHECK_THROWS_AS(run_ablation_suite(gm.data, bad), ConfigError);
}

TEST_CASE("run record serialization is deterministic and omits timing") {
  GaussianMixtureDataset gm = small_benchmark(29);
  TeacherConfig cfg = small_teacher(29);
  cfg.epochs = 3;
  TrainResult a = train_teacher(gm.data, cfg);
  TrainResult b = train_teacher(gm.data, cfg);
  const std::string ja = run_record_jsonl(a.record);
  CHECK(ja == run_record_jsonl(b.record));
  CHECK(ja.find("wall") == std::string::npos);
  CHECK(run_record_summary_json(a.record) == run_record_summary_json(b.record));
}
