#include "cli/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <tuple>

#include "cli/config.hpp"
#include "cli/pool.hpp"
#include "deferral/io.hpp"
#include "deferral/rng.hpp"

namespace deferral::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t Seeded(const Options& options, std::uint64_t configured) {
  return options.seed.value_or(configured);
}

fs::path Resolve(const Options& options, const std::string& path) {
  const fs::path p(path);
  if (p.is_absolute()) return p;
  return fs::path(options.config_path).parent_path() / p;
}

void WriteOutput(const Options& options, const std::string& name,
                 const std::string& text) {
  fs::create_directories(options.out_dir);
  io::WriteTextFile((fs::path(options.out_dir) / name).string(), text);
}

json Manifest(const std::string& command, std::uint64_t seed,
              const json& config) {
  return {{"command", command},
          {"seed", seed},
          {"config_hash", HashHex(config.dump())},
          {"generator_version", synthdata::kGeneratorVersion}};
}

synthdata::MogConfig ReadMog(const ConfigObject& g, bool with_samples) {
  synthdata::MogConfig cfg;
  cfg.input_dim = g.Int("input_dim", cfg.input_dim);
  cfg.components = g.Int("components", cfg.components);
  cfg.n = g.Int("n", cfg.n);
  cfg.n_e = g.Int("n_e", cfg.n_e);
  if (with_samples) {
    cfg.samples = g.Int("samples", cfg.samples);
    cfg.seed = g.U64("seed", cfg.seed);
  }
  try {
    cfg.Validate();
  } catch (const Error& e) {
    throw ConfigError(g.context() + ": " + e.what());
  }
  return cfg;
}

models::TrainConfig ReadTrain(const ConfigObject& t, models::TrainConfig cfg) {
  cfg.learning_rate = t.Number("learning_rate", cfg.learning_rate);
  cfg.epochs = t.Int("epochs", cfg.epochs);
  cfg.batch_size = t.Int("batch_size", cfg.batch_size);
  cfg.seed = t.U64("seed", cfg.seed);
  const std::string opt = t.String(
      "optimizer", cfg.optimizer == models::Optimizer::kGd ? "gd" : "momentum");
  if (opt == "gd") {
    cfg.optimizer = models::Optimizer::kGd;
  } else if (opt == "momentum") {
    cfg.optimizer = models::Optimizer::kMomentum;
  } else {
    throw ConfigError("unknown optimizer '" + opt + "'");
  }
  cfg.momentum = t.Number("momentum", cfg.momentum);
  cfg.standardize = t.Bool("standardize", cfg.standardize);
  try {
    cfg.Validate();
  } catch (const Error& e) {
    throw ConfigError(t.context() + ": " + e.what());
  }
  return cfg;
}

constexpr std::initializer_list<const char*> kTrainKeys = {
    "learning_rate", "epochs",   "batch_size", "seed",
    "optimizer",     "momentum", "standardize"};

// ---------------------------------------------------------------------------

std::string KindOf(const ConfigObject& parent, const char* key) {
  const json& raw = parent.Raw(key);
  if (!raw.is_object() || !raw.contains("kind") || !raw.at("kind").is_string()) {
    throw ConfigError(std::string("missing string field '") + key + ".kind'");
  }
  return raw.at("kind").get<std::string>();
}

template <typename F>
auto AsConfigError(F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

int CmdGenData(const json& doc, const Options& options, std::ostream& out) {
  ConfigObject root(doc, "", {"version", "generator"});
  const std::string kind = KindOf(root, "generator");
  std::string dataset_name = "dataset.json";
  std::string dataset_text;
  std::uint64_t seed = 0;
  if (kind == "mog") {
    synthdata::MogConfig cfg = ReadMog(
        root.Object("generator", {"kind", "input_dim", "components", "n", "n_e",
                                  "samples", "seed"}),
        true);
    cfg.seed = seed = Seeded(options, cfg.seed);
    const auto sample = synthdata::GenRealizableMog(cfg);
    dataset_text = io::DatasetToJson(sample.data).dump() + "\n";
    WriteOutput(options, "ground_truth.json",
                io::ScorerToJson(sample.truth, cfg.seed).dump(2) + "\n");
  } else if (kind == "two_stage") {
    const ConfigObject g = root.Object(
        "generator", {"kind", "n_e", "input_dim", "samples", "seed"});
    synthdata::TwoStageConfig cfg;
    cfg.n_e = g.Int("n_e", cfg.n_e);
    cfg.input_dim = g.Int("input_dim", cfg.input_dim);
    cfg.samples = g.Int("samples", cfg.samples);
    cfg.seed = seed = Seeded(options, g.U64("seed", cfg.seed));
    AsConfigError([&] {
      cfg.Validate();
      return 0;
    });
    const auto sample = synthdata::GenRealizableTwoStage(cfg);
    dataset_text = io::DatasetToJson(sample.data).dump() + "\n";
    WriteOutput(options, "ground_truth.json",
                io::ScorerToJson(sample.truth, cfg.seed).dump(2) + "\n");
  } else if (kind == "task") {
    const ConfigObject g = root.Object(
        "generator", {"kind", "n_min", "n_max", "ne_min", "ne_max", "k_min",
                      "k_max", "constraint", "margin_stage", "min_margin",
                      "seed"});
    synthdata::TaskSamplerConfig cfg;
    cfg.n_min = g.Int("n_min", cfg.n_min);
    cfg.n_max = g.Int("n_max", cfg.n_max);
    cfg.ne_min = g.Int("ne_min", cfg.ne_min);
    cfg.ne_max = g.Int("ne_max", cfg.ne_max);
    cfg.k_min = g.Int("k_min", cfg.k_min);
    cfg.k_max = g.Int("k_max", cfg.k_max);
    cfg.min_margin = g.Number("min_margin", cfg.min_margin);
    AsConfigError([&] {
      cfg.constraint =
          synthdata::TaskConstraintFromString(g.String("constraint", "none"));
      cfg.margin_stage = StageFromString(g.String("margin_stage", "single"));
      cfg.Validate();
      return 0;
    });
    seed = Seeded(options, g.U64("seed", 0));
    dataset_name = "task.json";
    dataset_text =
        io::TaskToJson(synthdata::GenRandomDiscreteTask(seed, cfg)).dump(2) + "\n";
  } else {
    throw ConfigError("unknown generator kind '" + kind + "'");
  }
  WriteOutput(options, dataset_name, dataset_text);
  json manifest = Manifest("gen-data", seed, doc);
  manifest["dataset"] = dataset_name;
  manifest["dataset_hash"] = HashHex(dataset_text);
  WriteOutput(options, "manifest.json", manifest.dump(2) + "\n");
  out << "wrote " << dataset_name << " hash "
      << manifest["dataset_hash"].get<std::string>() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

losses::LossSpec ReadLoss(const ConfigObject& l) {
  return AsConfigError([&] {
    return losses::LossSpec::FromName(
        l.RequiredString("name"), l.Number("q", 1.0),
        PhiKindFromString(l.String("phi", "logistic")));
  });
}

int CmdTrain(const json& doc, const Options& options, std::ostream& out) {
  ConfigObject root(doc, "", {"version", "dataset", "test_dataset", "model",
                              "loss", "train"});
  const auto loss = ReadLoss(root.Object("loss", {"name", "q", "phi"}));
  if (loss.is_target()) throw ConfigError("loss: cannot train on a target loss");
  const ConfigObject model = root.Object("model", {"kind", "hidden_dim"});
  const std::string model_kind = model.String("kind", "linear");
  if (model_kind != "linear" && model_kind != "mlp") {
    throw ConfigError("unknown model kind '" + model_kind + "'");
  }
  const int hidden = model.Int("hidden_dim", 32);
  if (hidden < 1) throw ConfigError("model.hidden_dim must be positive");
  models::TrainConfig train =
      ReadTrain(root.Object("train", kTrainKeys), models::TrainConfig{});
  train.seed = Seeded(options, train.seed);
  const std::string dataset_path = root.RequiredString("dataset");

  const auto data = io::DatasetFromJson(
      io::ReadJsonFile(Resolve(options, dataset_path).string()));
  std::optional<models::LabeledDataset> test;
  if (root.Has("test_dataset")) {
    test = io::DatasetFromJson(io::ReadJsonFile(
        Resolve(options, root.String("test_dataset", "")).string()));
  }

  const int width = loss.stage() == Stage::kSingle ? data.shape.augmented_size()
                                                   : data.shape.n_e();
  models::Scorer init;
  if (model_kind == "linear") {
    init = models::InitLinear(width, data.input_dim(), train.seed);
  } else {
    init = models::InitMlp(width, data.input_dim(), hidden, train.seed);
  }
  const auto result = models::Train(init, data, loss, train);
  const auto final_metrics = models::Evaluate(result.scorer, data, loss);

  std::string csv = "epoch,surrogate_loss,deferral_loss,system_accuracy\n";
  auto add = [&](int epoch, double surrogate, double target) {
    csv += std::to_string(epoch) + "," + FormatDouble(surrogate) + "," +
           FormatDouble(target) + "," + FormatDouble(1.0 - target) + "\n";
  };
  for (const auto& m : result.trajectory) {
    add(m.epoch, m.surrogate_loss, m.deferral_loss);
  }
  add(train.epochs, final_metrics.surrogate_loss, final_metrics.deferral_loss);
  WriteOutput(options, "metrics.csv", csv);
  const std::string model_text =
      io::ScorerToJson(result.scorer, train.seed).dump(2) + "\n";
  WriteOutput(options, "model.json", model_text);

  json manifest = Manifest("train", train.seed, doc);
  manifest["model_hash"] = HashHex(model_text);
  manifest["metrics_hash"] = HashHex(csv);
  manifest["train_system_accuracy"] = 1.0 - final_metrics.deferral_loss;
  out << "train system_accuracy "
      << FormatDouble(1.0 - final_metrics.deferral_loss) << "\n";
  if (test) {
    const double acc = models::SystemAccuracy(result.scorer, *test, loss.stage());
    manifest["test_system_accuracy"] = acc;
    out << "test system_accuracy " << FormatDouble(acc) << "\n";
  }
  WriteOutput(options, "manifest.json", manifest.dump(2) + "\n");
  return kExitOk;
}

// ---------------------------------------------------------------------------

template <typename T, typename Convert>
std::vector<T> ReadArray(const ConfigObject& obj, const char* key,
                         Convert convert) {
  const json& raw = obj.Raw(key);
  if (!raw.is_array() || raw.empty()) {
    throw ConfigError(obj.context() + "." + key + " must be a nonempty array");
  }
  std::vector<T> out;
  for (const auto& v : raw) out.push_back(convert(v));
  return out;
}

int CmdSweep(const json& doc, const Options& options, std::ostream& out) {
  ConfigObject root(doc, "", {"version", "generator", "sweep", "train"});
  SweepSpec spec;
  spec.mog = ReadMog(
      root.Object("generator", {"input_dim", "components", "n", "n_e"}), false);
  const ConfigObject sweep = root.Object(
      "sweep", {"sample_sizes", "methods", "trials", "test_samples", "seed"});
  if (sweep.Has("sample_sizes")) {
    spec.sample_sizes = ReadArray<int>(sweep, "sample_sizes", [](const json& v) {
      if (!v.is_number_integer() || v.get<long long>() < 1 ||
          v.get<long long>() > 100000000) {
        throw ConfigError("sweep.sample_sizes entries must be positive integers");
      }
      return v.get<int>();
    });
  }
  if (sweep.Has("methods")) {
    spec.methods = ReadArray<std::string>(sweep, "methods", [](const json& v) {
      if (!v.is_string()) throw ConfigError("sweep.methods entries must be strings");
      return v.get<std::string>();
    });
  }
  for (const auto& m : spec.methods) {
    AsConfigError([&] { return MethodLoss(m); });
  }
  spec.trials = sweep.Int("trials", spec.trials);
  spec.test_samples = sweep.Int("test_samples", spec.test_samples);
  if (spec.trials < 1) throw ConfigError("sweep.trials must be positive");
  if (spec.test_samples < 1) {
    throw ConfigError("sweep.test_samples must be positive");
  }
  spec.seed = Seeded(options, sweep.U64("seed", spec.seed));
  spec.train = ReadTrain(root.Object("train", kTrainKeys), spec.train);

  const auto rows = RunSweep(spec, options.jobs);
  const std::string csv = SweepCsv(rows);
  WriteOutput(options, "sweep.csv", csv);
  json manifest = Manifest("sweep", spec.seed, doc);
  manifest["sweep_hash"] = HashHex(csv);
  WriteOutput(options, "manifest.json", manifest.dump(2) + "\n");

  std::map<std::pair<std::string, int>, std::pair<double, int>> means;
  for (const auto& r : rows) {
    auto& [sum, count] = means[{r.method, r.sample_size}];
    sum += r.system_accuracy;
    ++count;
  }
  out << "method,sample_size,mean_system_accuracy\n";
  for (const auto& [key, value] : means) {
    out << key.first << "," << key.second << ","
        << FormatDouble(value.first / value.second) << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

int CmdVerify(const json& doc, const Options& options, std::ostream& out) {
  ConfigObject root(doc, "", {"version", "suite", "instances", "seed",
                              "hypotheses", "alpha", "s", "stage", "task",
                              "task_path"});
  VerifySpec spec;
  spec.suite = root.RequiredString("suite");
  spec.instances = root.Int("instances", spec.instances);
  spec.hypotheses = root.Int("hypotheses", spec.hypotheses);
  spec.alpha = root.Number("alpha", spec.alpha);
  spec.s = root.Number("s", spec.s);
  spec.seed = Seeded(options, root.U64("seed", spec.seed));
  if (spec.instances < 1) throw ConfigError("instances must be positive");
  if (spec.hypotheses < 1) throw ConfigError("hypotheses must be positive");
  if (!(spec.alpha > 0.0 && spec.alpha < 1.0)) {
    throw ConfigError("alpha must lie in (0, 1)");
  }
  if (!(spec.s >= 1.0)) throw ConfigError("s must be at least 1");
  AsConfigError([&] {
    spec.stage = StageFromString(root.String("stage", "single"));
    if (root.Has("task")) spec.task = io::TaskFromJson(root.Raw("task"));
    if (root.Has("task_path")) {
      spec.task = io::TaskFromJson(io::ReadJsonFile(
          Resolve(options, root.String("task_path", "")).string()));
    }
    return 0;
  });

  const VerifySummary summary = RunVerify(spec, options.jobs);
  WriteOutput(options, "report.csv",
              std::string(oracles::kReportCsvHeader) + summary.report_csv);
  const std::string verdict =
      "suite,instances,violations,max_negative_slack,premise_unmet\n" +
      summary.suite + "," + std::to_string(summary.instances) + "," +
      std::to_string(summary.violations) + "," +
      FormatDouble(summary.max_negative_slack) + "," +
      std::to_string(summary.premise_unmet) + "\n";
  WriteOutput(options, "summary.csv", verdict);
  out << verdict;
  return summary.violations == 0 ? kExitOk : kExitViolations;
}

// ---------------------------------------------------------------------------
// Verification corpus

struct SuiteShape {
  synthdata::TaskSamplerConfig sampler;
  Stage stage = Stage::kSingle;
};

SuiteShape ShapeFor(const VerifySpec& spec) {
  SuiteShape shape;
  auto& s = shape.sampler;
  s.n_max = 4;
  s.ne_max = 3;
  s.k_max = 6;
  const std::string& suite = spec.suite;
  if (suite == "theorem3") {
    shape.stage = Stage::kSingle;
  } else if (suite == "theorem5") {
    shape.stage = Stage::kTwo;
    s.ne_min = s.ne_max = 2;
  } else if (suite == "theorem7_q0" || suite == "theorem7_q05" ||
             suite == "theorem7_q1") {
    shape.stage = Stage::kTwo;
    s.ne_min = 2;
    s.ne_max = 4;
    s.constraint = synthdata::TaskConstraint::kTheorem7Premise;
  } else if (suite == "lemma_noise" || suite == "enhanced_mm") {
    shape.stage = spec.stage;
    s.constraint = synthdata::TaskConstraint::kPositiveMargin;
    s.margin_stage = spec.stage;
    if (spec.stage == Stage::kTwo) s.ne_min = s.ne_max = 2;
  } else if (suite == "enhanced_multi") {
    shape.stage = spec.stage;
    if (spec.stage == Stage::kTwo) s.ne_min = s.ne_max = 2;
  } else {
    throw ConfigError("unknown suite '" + suite + "'");
  }
  return shape;
}

losses::LossSpec EnhancedLoss(Stage stage) {
  return stage == Stage::kSingle
             ? losses::LossSpec::Make(losses::LossKind::kSurrogateMae)
             : losses::LossSpec::Make(losses::LossKind::kTwoStagePsi, 0.0);
}

oracles::RegretReport CheckOne(const VerifySpec& spec, Stage stage,
                               const oracles::DiscreteTask& task,
                               const oracles::TabularHypothesis& h) {
  const std::string& suite = spec.suite;
  if (suite == "theorem3") return oracles::VerifyBoundSingleMae(task, h);
  if (suite == "theorem5") return oracles::VerifyBoundTwoExpert(task, h);
  if (suite == "theorem7_q0") return oracles::VerifyBoundTwoStage(task, h, 0.0);
  if (suite == "theorem7_q05") return oracles::VerifyBoundTwoStage(task, h, 0.5);
  if (suite == "theorem7_q1") return oracles::VerifyBoundTwoStage(task, h, 1.0);
  if (suite == "enhanced_multi") {
    return oracles::VerifyEnhancedBound(task, h, EnhancedLoss(stage), spec.s,
                                        oracles::EnhancedMode::kTheoremMulti);
  }
  const auto profile = oracles::FitTsybakovB(oracles::MinimalMargin(task, stage),
                                             task.mu, spec.alpha);
  if (suite == "lemma_noise") {
    return oracles::VerifyLemmaNoise(task, h, profile, stage);
  }
  return oracles::VerifyEnhancedBound(task, h, EnhancedLoss(stage), spec.s,
                                      oracles::EnhancedMode::kTheoremMm, profile);
}

oracles::TabularHypothesis CorpusHypothesis(const oracles::DiscreteTask& task,
                                            Stage stage, rng::Stream stream) {
  const auto mode = stream.Below(3);
  if (mode < 2) {
    return synthdata::RandomTabularHypothesis(
        task, stage, mode == 0 ? 1.0 : 5.0, stream.Derive("scores"));
  }
  // Scaled Bayes decisions plus noise: near-optimal hypotheses.
  oracles::TabularHypothesis h = oracles::Bayes(task, stage);
  const double scale = stream.Uniform(0.5, 10.0);
  rng::Stream noise = stream.Derive("noise");
  for (auto& row : h.scores) {
    for (double& v : row) v = scale * v + 0.5 * noise.Normal();
  }
  return h;
}

}  // namespace

// ---------------------------------------------------------------------------

losses::LossSpec MethodLoss(const std::string& method) {
  using losses::LossKind;
  using losses::LossSpec;
  if (method == "ours_q07") return LossSpec::Make(LossKind::kSurrogateSingle, 0.7);
  if (method == "ours_q1") return LossSpec::Make(LossKind::kSurrogateSingle, 1.0);
  if (method == "verma23") return LossSpec::Make(LossKind::kBaselineVerma, 0.0);
  if (method == "mao24") return LossSpec::Make(LossKind::kBaselineMao, 0.0);
  throw Error("unknown method '" + method + "'");
}

SweepSpec::SweepSpec() {
  train.learning_rate = 5.0;
  train.epochs = 3000;
  train.optimizer = models::Optimizer::kMomentum;
  train.momentum = 0.9;
}

std::vector<SweepRow> RunSweep(const SweepSpec& spec, int jobs) {
  for (const auto& m : spec.methods) MethodLoss(m);
  std::vector<SweepRow> rows;
  for (const auto& m : spec.methods) {
    for (int size : spec.sample_sizes) {
      for (int t = 0; t < spec.trials; ++t) rows.push_back({m, size, t, 0.0});
    }
  }
  std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return std::tie(a.method, a.sample_size, a.trial) <
           std::tie(b.method, b.sample_size, b.trial);
  });

  const rng::Stream master = rng::Stream(spec.seed).Derive("sweep");
  ParallelFor(static_cast<int>(rows.size()), jobs, [&](int i) {
    SweepRow& row = rows[i];
    synthdata::MogConfig mog = spec.mog;
    mog.samples = row.sample_size;
    mog.seed = master.Derive("distribution", row.trial).NextU64();
    const auto dist = synthdata::MakeMogDistribution(mog);
    const rng::Stream data_root(mog.seed);
    const auto train = synthdata::SampleMog(
        dist, row.sample_size, data_root.Derive("train", row.sample_size));
    const auto test =
        synthdata::SampleMog(dist, spec.test_samples, data_root.Derive("test"));
    models::TrainConfig cfg = spec.train;
    cfg.seed = master.Derive(row.method)
                   .Derive("size", row.sample_size)
                   .Derive("trial", row.trial)
                   .NextU64();
    const auto init =
        models::InitLinear(mog.n + mog.n_e, mog.input_dim, cfg.seed);
    const auto result = models::Train(init, train, MethodLoss(row.method), cfg);
    row.system_accuracy =
        models::SystemAccuracy(result.scorer, test, Stage::kSingle);
  });
  return rows;
}

std::string SweepCsv(const std::vector<SweepRow>& rows) {
  std::string csv = "method,sample_size,trial,system_accuracy\n";
  for (const auto& r : rows) {
    csv += r.method + "," + std::to_string(r.sample_size) + "," +
           std::to_string(r.trial) + "," + FormatDouble(r.system_accuracy) +
           "\n";
  }
  return csv;
}

VerifySummary RunVerify(const VerifySpec& spec, int jobs) {
  const SuiteShape shape = ShapeFor(spec);
  const rng::Stream master = rng::Stream(spec.seed).Derive(spec.suite);
  std::vector<std::vector<oracles::RegretReport>> reports(spec.instances);
  ParallelFor(spec.instances, jobs, [&](int i) {
    const oracles::DiscreteTask task =
        spec.task ? *spec.task
                  : synthdata::GenRandomDiscreteTask(
                        master.Derive("task", i).NextU64(), shape.sampler);
    for (int h = 0; h < spec.hypotheses; ++h) {
      const auto hyp = CorpusHypothesis(
          task, shape.stage, master.Derive("hypothesis", i).Derive("draw", h));
      reports[i].push_back(CheckOne(spec, shape.stage, task, hyp));
    }
  });
  VerifySummary summary;
  summary.suite = spec.suite;
  summary.instances = spec.instances;
  for (int i = 0; i < spec.instances; ++i) {
    for (std::size_t h = 0; h < reports[i].size(); ++h) {
      const auto& r = reports[i][h];
      summary.violations += r.violations();
      summary.premise_unmet += r.premise_met ? 0 : 1;
      summary.max_negative_slack =
          std::min(summary.max_negative_slack, r.max_negative_slack());
      summary.report_csv += oracles::ReportCsvRows(
          std::to_string(i) + "." + std::to_string(h), r);
    }
  }
  return summary;
}

int Run(const std::string& command, const Options& options, std::ostream& out,
        std::ostream& err) {
  try {
    json doc;
    try {
      doc = io::ReadJsonFile(options.config_path);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
    RequireVersion(doc);
    if (options.jobs < 1) throw ConfigError("--jobs must be at least 1");
    if (command == "gen-data") return CmdGenData(doc, options, out);
    if (command == "train") return CmdTrain(doc, options, out);
    if (command == "sweep") return CmdSweep(doc, options, out);
    if (command == "verify") return CmdVerify(doc, options, out);
    throw ConfigError("unknown command '" + command + "'");
  } catch (const ConfigError& e) {
    err << "invalid config: " << e.what() << "\n";
    return kExitInvalidConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntimeFailure;
  }
}

}  // namespace deferral::cli
