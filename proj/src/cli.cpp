#include "cist/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cist/analysis.hpp"
#include "cist/datasets.hpp"
#include "cist/distill.hpp"
#include "cist/losses.hpp"
#include "cist/model.hpp"
#include "cist/rng.hpp"
#include "cist/temperature.hpp"
#include "json.hpp"

namespace cist {

namespace {

constexpr const char* kToolVersion = "cist 0.1.0";

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInput = 2;
constexpr int kExitVerification = 3;
constexpr int kExitDivergence = 4;

namespace fs = std::filesystem;

std::string config_hash_hex(const nlohmann::json& manifest_core) {
  const std::uint64_t h = fnv1a64(manifest_core.dump());
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  out << content;
  if (!out) throw FormatError("write failed: " + path.string());
}

// The manifest lands on disk before any computation output, so a run is
// reproducible from the manifest alone.
void write_manifest(const fs::path& path, const std::string& command,
                    const nlohmann::json& config, std::uint64_t seed,
                    const std::vector<std::string>& artifacts) {
  nlohmann::json core;
  core["command"] = command;
  core["config"] = config;
  core["seed"] = seed;
  nlohmann::json j = core;
  j["artifacts"] = artifacts;
  j["tool_version"] = kToolVersion;
  j["config_hash"] = config_hash_hex(core);
  write_text_file(path, j.dump(2) + "\n");
}

struct OptimFlags {
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double decay_factor = 0.1;
  std::vector<int> decay_epochs = {40, 50};

  OptimFlags() = default;
  explicit OptimFlags(double initial_lr) : lr(initial_lr) {}

  void attach(CLI::App* app) {
    app->add_option("--lr", lr, "initial learning rate");
    app->add_option("--momentum", momentum, "SGD momentum");
    app->add_option("--weight-decay", weight_decay, "L2 weight decay");
    app->add_option("--decay-factor", decay_factor, "learning-rate decay factor");
    app->add_option("--decay-epochs", decay_epochs, "epochs at which the rate decays")
        ->delimiter(',');
  }

  OptimConfig to_config() const {
    return OptimConfig{lr, momentum, weight_decay, decay_factor, decay_epochs};
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["lr"] = lr;
    j["momentum"] = momentum;
    j["weight_decay"] = weight_decay;
    j["decay_factor"] = decay_factor;
    j["decay_epochs"] = decay_epochs;
    return j;
  }
};

LabeledDataset load_dataset_checked(const std::string& path) {
  if (!fs::exists(path)) throw FormatError("dataset file not found: " + path);
  return load_dataset_csv(path);
}

MlpParams load_teacher_checked(const std::string& path) {
  if (!fs::exists(path)) throw FormatError("checkpoint file not found: " + path);
  return load_checkpoint(path);
}

// ---- command implementations ----------------------------------------------

int run_parsed(CLI::App& app, int argc, const char* const* argv) {
  // Subcommand state lives here so setup and execution share one scope.
  auto* gen = app.add_subcommand("gen-data", "generate a Gaussian-mixture dataset CSV");
  struct {
    std::size_t classes = 20, dims = 16, per_class = 200;
    double spread = 4.0, overlap = 1.5;
    std::uint64_t seed = 1;
    std::string out;
    bool force = false;
  } g;
  gen->add_option("--classes", g.classes, "number of classes");
  gen->add_option("--dims", g.dims, "feature dimensionality");
  gen->add_option("--per-class", g.per_class, "samples per class");
  gen->add_option("--spread", g.spread, "radius of the class-mean sphere");
  gen->add_option("--overlap", g.overlap, "isotropic noise std");
  gen->add_option("--seed", g.seed, "random seed")->envname("CIST_SEED");
  gen->add_option("--out", g.out, "output CSV path")->required();
  gen->add_flag("--force", g.force, "overwrite an existing output file");

  auto* teach = app.add_subcommand("train-teacher", "train the frozen teacher with CE");
  struct {
    std::string data, out;
    std::vector<std::size_t> hidden = {128, 128};
    int epochs = 60, batch_size = 64;
    std::uint64_t seed = 1;
    OptimFlags optim;
    bool quiet = false;
  } t;
  teach->add_option("--data", t.data, "dataset CSV")->required();
  teach->add_option("--out", t.out, "output checkpoint path")->required();
  teach->add_option("--hidden", t.hidden, "hidden layer widths")->delimiter(',');
  teach->add_option("--epochs", t.epochs, "training epochs")->envname("CIST_EPOCHS");
  teach->add_option("--batch-size", t.batch_size, "minibatch size");
  teach->add_option("--seed", t.seed, "random seed")->envname("CIST_SEED");
  t.optim.attach(teach);
  teach->add_flag("--quiet", t.quiet, "suppress progress output");

  auto* dist = app.add_subcommand("distill", "distill a student from a frozen teacher");
  struct {
    std::string data, teacher, out, method;
    std::vector<std::size_t> hidden = {32};
    double rho = 3.0, tau = 4.0, lambda_kl = 0.0, lambda_ce = 0.0;
    double entout_fraction = 0.05, entout_delta = 1.0;
    int epochs = 60, batch_size = 64, eval_cadence = 1;
    std::uint64_t seed = 1;
    OptimFlags optim{0.01};
    bool quiet = false;
  } d;
  dist->add_option("--data", d.data, "dataset CSV")->required();
  dist->add_option("--teacher", d.teacher, "teacher checkpoint")->required();
  dist->add_option("--out", d.out, "output checkpoint path")->required();
  auto* method_opt =
      dist->add_option("--method", d.method,
                       "ce|kd|kd-entout-ce|kd-entout-ht|cist|cist-no-reweight|cist-no-temp")
          ->required();
  (void)method_opt;
  dist->add_option("--hidden", d.hidden, "student hidden widths")->delimiter(',');
  auto* rho_opt = dist->add_option("--rho", d.rho, "entropy control constant")
                      ->envname("CIST_RHO");
  auto* tau_opt = dist->add_option("--tau", d.tau, "fixed temperature")->envname("CIST_TAU");
  auto* lkl_opt = dist->add_option("--lambda-kl", d.lambda_kl, "KL loss weight")
                      ->envname("CIST_LAMBDA_KL");
  auto* lce_opt = dist->add_option("--lambda-ce", d.lambda_ce, "CE loss weight")
                      ->envname("CIST_LAMBDA_CE");
  dist->add_option("--entout-fraction", d.entout_fraction, "entropy-outlier fraction");
  dist->add_option("--entout-delta", d.entout_delta, "temperature bump for outliers");
  dist->add_option("--epochs", d.epochs, "training epochs")->envname("CIST_EPOCHS");
  dist->add_option("--batch-size", d.batch_size, "minibatch size");
  dist->add_option("--eval-cadence", d.eval_cadence, "console reporting cadence");
  dist->add_option("--seed", d.seed, "random seed")->envname("CIST_SEED");
  d.optim.attach(dist);
  dist->add_flag("--quiet", d.quiet, "suppress progress output");

  auto* calib = app.add_subcommand("calibrate-rho", "sweep rho over a calibration subset");
  struct {
    std::string dump, teacher, data, out;
    std::vector<double> rhos = {2.0, 3.0, 4.0, 5.0};
    std::size_t subset = 512;
    std::uint64_t seed = 1;
  } c;
  calib->add_option("--dump", c.dump, "external logit dump CSV");
  calib->add_option("--teacher", c.teacher, "teacher checkpoint (with --data)");
  calib->add_option("--data", c.data, "dataset CSV (with --teacher)");
  calib->add_option("--out", c.out, "output CSV path")->required();
  calib->add_option("--rhos", c.rhos, "candidate rho values")->delimiter(',');
  calib->add_option("--subset", c.subset, "calibration subset size");
  calib->add_option("--seed", c.seed, "random seed")->envname("CIST_SEED");

  auto* analyze = app.add_subcommand("analyze-entropy", "soft-label entropy report");
  struct {
    std::string dump, teacher, data, out, policy = "adaptive", split = "train";
    double tau = 4.0, rho = 3.0, quantile = 0.05;
    std::size_t bins = 40;
    std::uint64_t seed = 1;
  } a;
  analyze->add_option("--dump", a.dump, "external logit dump CSV");
  analyze->add_option("--teacher", a.teacher, "teacher checkpoint (with --data)");
  analyze->add_option("--data", a.data, "dataset CSV (with --teacher)");
  analyze->add_option("--split", a.split, "dataset split to analyze (train|val|test)");
  analyze->add_option("--out", a.out, "output prefix")->required();
  analyze->add_option("--policy", a.policy, "fixed|adaptive");
  analyze->add_option("--tau", a.tau, "fixed temperature")->envname("CIST_TAU");
  analyze->add_option("--rho", a.rho, "entropy control constant")->envname("CIST_RHO");
  analyze->add_option("--bins", a.bins, "histogram bins");
  analyze->add_option("--quantile", a.quantile, "outlier quantile");
  analyze->add_option("--seed", a.seed, "random seed")->envname("CIST_SEED");

  auto* verify = app.add_subcommand("verify", "run every invariant and gradient suite");
  struct {
    std::uint64_t seed = 1;
    std::string out_dir;
    bool inject_fault = false;
  } v;
  verify->add_option("--seed", v.seed, "random seed")->envname("CIST_SEED");
  verify->add_option("--out-dir", v.out_dir, "directory for CSV report tables");
  verify->add_flag("--inject-fault", v.inject_fault,
                   "corrupt one analytic gradient (negative control)");

  auto* ablate = app.add_subcommand("run-ablation", "method comparison over seeds");
  struct {
    std::string data, out;
    std::vector<std::string> methods;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::vector<std::size_t> teacher_hidden = {128, 128};
    std::vector<std::size_t> student_hidden = {32};
    int teacher_epochs = 60, epochs = 60, batch_size = 64;
    double teacher_lr = 0.05, teacher_weight_decay = 5e-3;
    OptimFlags optim{0.01};
    bool quiet = false;
  } ab;
  ablate->add_option("--data", ab.data, "dataset CSV")->required();
  ablate->add_option("--out", ab.out, "output prefix")->required();
  ablate->add_option("--methods", ab.methods, "comma-separated methods")
      ->required()
      ->delimiter(',');
  ablate->add_option("--seeds", ab.seeds, "comma-separated seeds")->delimiter(',');
  ablate->add_option("--teacher-hidden", ab.teacher_hidden, "teacher hidden widths")
      ->delimiter(',');
  ablate->add_option("--student-hidden", ab.student_hidden, "student hidden widths")
      ->delimiter(',');
  ablate->add_option("--teacher-epochs", ab.teacher_epochs, "teacher training epochs");
  ablate->add_option("--teacher-lr", ab.teacher_lr, "teacher learning rate");
  ablate->add_option("--teacher-weight-decay", ab.teacher_weight_decay,
                     "teacher L2 weight decay");
  ablate->add_option("--epochs", ab.epochs, "student training epochs")->envname("CIST_EPOCHS");
  ablate->add_option("--batch-size", ab.batch_size, "minibatch size");
  ab.optim.attach(ablate);
  ablate->add_flag("--quiet", ab.quiet, "suppress progress output");

  app.require_subcommand(1);
  try {
    app.parse(argc, const_cast<char**>(argv));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (gen->parsed()) {
    if (fs::exists(g.out) && !g.force) {
      throw FormatError("output exists (use --force to overwrite): " + g.out);
    }
    nlohmann::json cfg;
    cfg["classes"] = g.classes;
    cfg["dims"] = g.dims;
    cfg["per_class"] = g.per_class;
    cfg["spread"] = g.spread;
    cfg["overlap"] = g.overlap;
    cfg["out"] = g.out;
    write_manifest(g.out + ".manifest.json", "gen-data", cfg, g.seed, {g.out});
    GaussianMixtureDataset gm =
        gen_gaussian_mixture(g.classes, g.dims, g.per_class, g.spread, g.overlap, g.seed);
    save_dataset_csv(g.out, gm.data);
    std::printf("wrote %s (%zu samples, %zu classes)\n", g.out.c_str(),
                gm.data.labels.size(), g.classes);
    return kExitOk;
  }

  if (teach->parsed()) {
    nlohmann::json cfg;
    cfg["data"] = t.data;
    cfg["out"] = t.out;
    cfg["hidden"] = t.hidden;
    cfg["epochs"] = t.epochs;
    cfg["batch_size"] = t.batch_size;
    cfg["optim"] = t.optim.to_json();
    write_manifest(t.out + ".manifest.json", "train-teacher", cfg, t.seed,
                   {t.out, t.out + ".meta.json", t.out + ".epochs.jsonl",
                    t.out + ".summary.json"});
    LabeledDataset data = load_dataset_checked(t.data);
    TeacherConfig tcfg{t.hidden, t.epochs, t.batch_size, t.optim.to_config(), t.seed};
    TrainResult result = train_teacher(data, tcfg);
    nlohmann::json core;
    core["command"] = "train-teacher";
    core["config"] = cfg;
    core["seed"] = t.seed;
    save_checkpoint(t.out, result.params,
                    CheckpointMeta{t.epochs, t.seed, config_hash_hex(core)});
    write_text_file(t.out + ".epochs.jsonl", run_record_jsonl(result.record));
    write_text_file(t.out + ".summary.json", run_record_summary_json(result.record));
    if (!t.quiet) {
      std::printf("teacher: best val %.4f (epoch %d), test %.4f\n",
                  result.record.best_val_acc, result.record.best_val_epoch,
                  result.record.final_test_acc);
    }
    return kExitOk;
  }

  if (dist->parsed()) {
    auto method = method_from_name(d.method);
    if (!method.has_value()) {
      std::fprintf(stderr, "error: unknown --method '%s'\n", d.method.c_str());
      return kExitUsage;
    }
    DistillConfig cfg = default_distill_config(*method, d.seed);
    // Explicit flags override the per-method defaults.
    if (rho_opt->count() > 0) cfg.rho = d.rho;
    if (tau_opt->count() > 0) cfg.fixed_tau = d.tau;
    if (lkl_opt->count() > 0) cfg.lambda_kl = d.lambda_kl;
    if (lce_opt->count() > 0) cfg.lambda_ce = d.lambda_ce;
    cfg.entout_fraction = d.entout_fraction;
    cfg.entout_ht_delta = d.entout_delta;
    cfg.epochs = d.epochs;
    cfg.batch_size = d.batch_size;
    cfg.eval_cadence = d.eval_cadence;
    cfg.optim = d.optim.to_config();

    nlohmann::json jcfg;
    jcfg["data"] = d.data;
    jcfg["teacher"] = d.teacher;
    jcfg["out"] = d.out;
    jcfg["method"] = method_name(*method);
    jcfg["hidden"] = d.hidden;
    if (cfg.rho.has_value()) jcfg["rho"] = *cfg.rho;
    if (cfg.fixed_tau.has_value()) jcfg["tau"] = *cfg.fixed_tau;
    jcfg["lambda_kl"] = cfg.lambda_kl;
    jcfg["lambda_ce"] = cfg.lambda_ce;
    jcfg["entout_fraction"] = cfg.entout_fraction;
    jcfg["entout_delta"] = cfg.entout_ht_delta;
    jcfg["epochs"] = cfg.epochs;
    jcfg["batch_size"] = cfg.batch_size;
    jcfg["optim"] = d.optim.to_json();
    write_manifest(d.out + ".manifest.json", "distill", jcfg, d.seed,
                   {d.out, d.out + ".meta.json", d.out + ".epochs.jsonl",
                    d.out + ".summary.json"});

    LabeledDataset data = load_dataset_checked(d.data);
    MlpParams teacher = load_teacher_checked(d.teacher);
    try {
      cfg.validate();
    } catch (const ConfigError& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return kExitUsage;
    }
    TrainResult result = distill_student(teacher, data, d.hidden, cfg);
    nlohmann::json core;
    core["command"] = "distill";
    core["config"] = jcfg;
    core["seed"] = d.seed;
    save_checkpoint(d.out, result.params,
                    CheckpointMeta{cfg.epochs, d.seed, config_hash_hex(core)});
    write_text_file(d.out + ".epochs.jsonl", run_record_jsonl(result.record));
    write_text_file(d.out + ".summary.json", run_record_summary_json(result.record));
    if (!d.quiet) {
      std::printf("%s: best val %.4f (epoch %d), test %.4f\n", method_name(*method),
                  result.record.best_val_acc, result.record.best_val_epoch,
                  result.record.final_test_acc);
    }
    return kExitOk;
  }

  if (calib->parsed()) {
    const bool from_dump = !c.dump.empty();
    if (from_dump == (!c.teacher.empty() || !c.data.empty())) {
      std::fprintf(stderr, "error: supply either --dump or --teacher with --data\n");
      return kExitUsage;
    }
    nlohmann::json cfg;
    cfg["dump"] = c.dump;
    cfg["teacher"] = c.teacher;
    cfg["data"] = c.data;
    cfg["out"] = c.out;
    cfg["rhos"] = c.rhos;
    cfg["subset"] = c.subset;
    write_manifest(c.out + ".manifest.json", "calibrate-rho", cfg, c.seed, {c.out});

    Matrix logits;
    if (from_dump) {
      logits = load_logit_dump_csv(c.dump).logits;
    } else {
      if (c.teacher.empty() || c.data.empty()) {
        std::fprintf(stderr, "error: --teacher requires --data\n");
        return kExitUsage;
      }
      LabeledDataset data = load_dataset_checked(c.data);
      MlpParams teacher = load_teacher_checked(c.teacher);
      Matrix train_x;
      data.gather(Split::train, &train_x, nullptr);
      logits = mlp_forward(teacher, train_x);
    }
    const std::size_t rows = std::min<std::size_t>(c.subset, logits.rows());
    Matrix subset(rows, logits.cols());
    for (std::size_t i = 0; i < rows; ++i) {
      auto src = logits.row(i);
      std::copy(src.begin(), src.end(), subset.row(i).begin());
    }
    auto table = calibrate_rho(subset, c.rhos);
    write_calibration_csv(c.out, table);
    std::printf("wrote %s (%zu candidates over %zu samples)\n", c.out.c_str(), table.size(),
                rows);
    return kExitOk;
  }

  if (analyze->parsed()) {
    const bool from_dump = !a.dump.empty();
    if (from_dump == (!a.teacher.empty() || !a.data.empty())) {
      std::fprintf(stderr, "error: supply either --dump or --teacher with --data\n");
      return kExitUsage;
    }
    TemperaturePolicy policy;
    if (a.policy == "fixed") {
      policy = TemperaturePolicy::fixed(a.tau);
    } else if (a.policy == "adaptive") {
      policy = TemperaturePolicy::adaptive(a.rho);
    } else {
      std::fprintf(stderr, "error: --policy must be fixed or adaptive\n");
      return kExitUsage;
    }
    nlohmann::json cfg;
    cfg["dump"] = a.dump;
    cfg["teacher"] = a.teacher;
    cfg["data"] = a.data;
    cfg["split"] = a.split;
    cfg["out"] = a.out;
    cfg["policy"] = a.policy;
    cfg["tau"] = a.tau;
    cfg["rho"] = a.rho;
    cfg["bins"] = a.bins;
    cfg["quantile"] = a.quantile;
    write_manifest(a.out + ".manifest.json", "analyze-entropy", cfg, a.seed,
                   {a.out + ".summary.json", a.out + ".hist.csv", a.out + ".entropies.csv"});

    Matrix logits;
    if (from_dump) {
      logits = load_logit_dump_csv(a.dump).logits;
    } else {
      if (a.teacher.empty() || a.data.empty()) {
        std::fprintf(stderr, "error: --teacher requires --data\n");
        return kExitUsage;
      }
      Split split = Split::train;
      if (a.split == "val") {
        split = Split::val;
      } else if (a.split == "test") {
        split = Split::test;
      } else if (a.split != "train") {
        std::fprintf(stderr, "error: --split must be train, val or test\n");
        return kExitUsage;
      }
      LabeledDataset data = load_dataset_checked(a.data);
      MlpParams teacher = load_teacher_checked(a.teacher);
      Matrix x;
      data.gather(split, &x, nullptr);
      logits = mlp_forward(teacher, x);
    }
    EntropyReport report = entropy_report(logits, policy, a.quantile, a.bins);
    write_text_file(a.out + ".summary.json", entropy_report_summary_json(report));
    write_text_file(a.out + ".hist.csv", entropy_report_histogram_csv(report));
    std::string per_sample = "index,entropy\n";
    char buf[64];
    for (std::size_t i = 0; i < report.per_sample_entropy.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, report.per_sample_entropy[i]);
      per_sample += buf;
    }
    write_text_file(a.out + ".entropies.csv", per_sample);
    std::printf("entropy [%s]: mean %.4f std %.4f min %.4f max %.4f (n=%zu)\n",
                a.policy.c_str(), report.mean, report.stddev, report.min, report.max,
                report.per_sample_entropy.size());
    return kExitOk;
  }

  if (verify->parsed()) {
    VerificationReport report = run_verification(v.seed, v.inject_fault);
    std::fputs(verification_report_text(report).c_str(), stdout);
    if (!v.out_dir.empty()) {
      fs::create_directories(v.out_dir);
      const fs::path dir(v.out_dir);
      nlohmann::json cfg;
      cfg["out_dir"] = v.out_dir;
      cfg["inject_fault"] = v.inject_fault;
      write_manifest(dir / "verify.manifest.json", "verify", cfg, v.seed,
                     {(dir / "prop1.csv").string(), (dir / "hightemp.csv").string(),
                      (dir / "gradcheck.txt").string()});
      write_text_file(dir / "prop1.csv", prop1_table_csv(report.prop1_rows));
      write_text_file(dir / "hightemp.csv", hightemp_table_csv(report.hightemp_rows));
      GradCheckReport grad = grad_check_suite(v.seed, v.inject_fault);
      write_text_file(dir / "gradcheck.txt", grad_check_report_text(grad));
    }
    return report.all_pass ? kExitOk : kExitVerification;
  }

  if (ablate->parsed()) {
    AblationConfig cfg;
    for (const std::string& name : ab.methods) {
      auto m = method_from_name(name);
      if (!m.has_value()) {
        std::fprintf(stderr, "error: unknown method '%s' in --methods\n", name.c_str());
        return kExitUsage;
      }
      cfg.methods.push_back(*m);
    }
    cfg.seeds = ab.seeds;
    OptimConfig teacher_optim = ab.optim.to_config();
    teacher_optim.lr = ab.teacher_lr;
    teacher_optim.weight_decay = ab.teacher_weight_decay;
    cfg.teacher =
        TeacherConfig{ab.teacher_hidden, ab.teacher_epochs, ab.batch_size, teacher_optim, 0};
    cfg.student_hidden = ab.student_hidden;
    cfg.epochs = ab.epochs;
    cfg.batch_size = ab.batch_size;
    cfg.optim = ab.optim.to_config();
    cfg.verbose = !ab.quiet;

    nlohmann::json jcfg;
    jcfg["data"] = ab.data;
    jcfg["out"] = ab.out;
    jcfg["methods"] = ab.methods;
    jcfg["seeds"] = ab.seeds;
    jcfg["teacher_hidden"] = ab.teacher_hidden;
    jcfg["student_hidden"] = ab.student_hidden;
    jcfg["teacher_epochs"] = ab.teacher_epochs;
    jcfg["teacher_lr"] = ab.teacher_lr;
    jcfg["teacher_weight_decay"] = ab.teacher_weight_decay;
    jcfg["epochs"] = ab.epochs;
    jcfg["batch_size"] = ab.batch_size;
    jcfg["optim"] = ab.optim.to_json();
    const std::uint64_t suite_seed = ab.seeds.empty() ? 0 : ab.seeds.front();
    write_manifest(ab.out + ".manifest.json", "run-ablation", jcfg, suite_seed,
                   {ab.out + ".csv"});

    LabeledDataset data = load_dataset_checked(ab.data);
    auto rows = run_ablation_suite(data, cfg);
    write_text_file(ab.out + ".csv", ablation_csv(rows, cfg.seeds));
    for (const auto& row : rows) {
      std::printf("%-18s mean %.4f std %.4f\n", method_name(row.method), row.mean_acc,
                  row.std_acc);
    }
    return kExitOk;
  }

  return kExitUsage;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"CIST distillation laboratory"};
  app.set_version_flag("--version", kToolVersion);
  try {
    return run_parsed(app, argc, argv);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  } catch (const TrainingError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDivergence;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  } catch (const InvalidArgumentError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
}

}  // namespace cist
