#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deferral/models.hpp"
#include "deferral/oracles.hpp"
#include "deferral/synthdata.hpp"

namespace deferral::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitInvalidConfig = 1,
  kExitRuntimeFailure = 2,
  kExitViolations = 3,
};

struct Options {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

/// Loads the config, dispatches to the command and maps failures to exit
/// codes. Progress and verdict lines go to out, diagnostics to err.
int Run(const std::string& command, const Options& options, std::ostream& out,
        std::ostream& err);

// ---------------------------------------------------------------------------
// Method sweep on the mixture

/// ours_q07, ours_q1, verma23, mao24.
losses::LossSpec MethodLoss(const std::string& method);

struct SweepSpec {
  synthdata::MogConfig mog;
  std::vector<int> sample_sizes{250, 500, 1000, 2000, 4000, 8000, 16000};
  std::vector<std::string> methods{"ours_q07", "ours_q1", "verma23", "mao24"};
  int trials = 5;
  int test_samples = 10000;
  std::uint64_t seed = 0;
  models::TrainConfig train;

  SweepSpec();
};

struct SweepRow {
  std::string method;
  int sample_size = 0;
  int trial = 0;
  double system_accuracy = 0.0;
};

/// One row per (method, size, trial), sorted by (method, size, trial).
std::vector<SweepRow> RunSweep(const SweepSpec& spec, int jobs);

std::string SweepCsv(const std::vector<SweepRow>& rows);

// ---------------------------------------------------------------------------
// Verification suites

struct VerifySpec {
  std::string suite = "theorem3";
  int instances = 100;
  std::uint64_t seed = 0;
  int hypotheses = 10;
  double alpha = 0.5;
  double s = 2.0;
  Stage stage = Stage::kSingle;
  std::optional<oracles::DiscreteTask> task;
};

struct VerifySummary {
  std::string suite;
  int instances = 0;
  int violations = 0;
  int premise_unmet = 0;
  double max_negative_slack = 0.0;
  std::string report_csv;
};

/// theorem3, theorem5, theorem7_q0, theorem7_q05, theorem7_q1, lemma_noise,
/// enhanced_multi, enhanced_mm.
VerifySummary RunVerify(const VerifySpec& spec, int jobs);

}  // namespace deferral::cli
