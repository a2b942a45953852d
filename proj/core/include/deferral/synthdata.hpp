#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "deferral/models.hpp"
#include "deferral/oracles.hpp"
#include "deferral/rng.hpp"

namespace deferral::synthdata {

inline constexpr int kGeneratorVersion = 1;

struct MogConfig {
  int input_dim = 16;
  int components = 8;
  int n = 4;
  int n_e = 2;
  int samples = 1000;
  std::uint64_t seed = 0;

  void Validate() const;
};

/// Mixture geometry plus a ground-truth linear scorer over n + n_e outputs.
/// Every augmented action is chosen by h_star on a 10^4-point probe.
struct MogDistribution {
  MogConfig config;
  Eigen::MatrixXd means;  // components x input_dim
  models::LinearScorer h_star;
};

/// Draws component means and h_star from config.seed, redrawing h_star until
/// no augmented action is left unused on the probe.
MogDistribution MakeMogDistribution(const MogConfig& config);

/// Features from the mixture. When h_star predicts label a, y = a and every
/// expert costs 1. When it defers to expert j, y is uniform, expert j costs 0
/// and the others cost 1.
models::LabeledDataset SampleMog(const MogDistribution& dist, int samples,
                                 rng::Stream stream);

struct RealizableSample {
  models::LabeledDataset data;
  models::LinearScorer truth;
};

/// MakeMogDistribution followed by SampleMog on the "train" sub-stream.
RealizableSample GenRealizableMog(const MogConfig& config);

/// Half-open label ranges [begin, end), one per expert.
struct ExpertRangeSpec {
  std::vector<std::pair<int, int>> ranges;
};

/// Expert j predicts y when y lies in its range and otherwise a uniform label
/// from its own range.
class ClassRangeExperts {
 public:
  ClassRangeExperts(int n, ExpertRangeSpec spec, std::uint64_t seed);

  int n() const { return n_; }
  int n_e() const { return static_cast<int>(spec_.ranges.size()); }

  /// Prediction of expert j on draw `index` with true label y.
  int Predict(int expert, int y, std::uint64_t index) const;
  /// Realized costs 1{prediction != y} for every expert.
  std::vector<double> Costs(int y, std::uint64_t index) const;

 private:
  int n_;
  ExpertRangeSpec spec_;
  rng::Stream stream_;
};

/// Splits [0, n) into consecutive ranges with the given fractions.
ExpertRangeSpec SplitRanges(int n, const std::vector<double>& fractions);

struct TwoStageConfig {
  int n_e = 2;
  int input_dim = 16;
  int samples = 1000;
  std::uint64_t seed = 0;

  void Validate() const;
};

struct TwoStageDistribution {
  TwoStageConfig config;
  models::LinearScorer r_star;
};

/// Random r_star over standard normal features, redrawn until every expert is
/// chosen on the probe.
TwoStageDistribution MakeTwoStageDistribution(const TwoStageConfig& config);

/// n = n_e labels, y = r_star's choice, expert j always predicts label j.
models::LabeledDataset SampleTwoStage(const TwoStageDistribution& dist,
                                      int samples, rng::Stream stream);

RealizableSample GenRealizableTwoStage(const TwoStageConfig& config);

enum class TaskConstraint { kNone, kTheorem7Premise, kPositiveMargin };

const char* ToString(TaskConstraint constraint);
TaskConstraint TaskConstraintFromString(const std::string& name);

struct TaskSamplerConfig {
  int n_min = 2;
  int n_max = 4;
  int ne_min = 1;
  int ne_max = 3;
  int k_min = 1;
  int k_max = 6;
  TaskConstraint constraint = TaskConstraint::kNone;
  /// Stage whose margins kPositiveMargin bounds below.
  Stage margin_stage = Stage::kSingle;
  double min_margin = 1e-3;

  void Validate() const;
};

/// Dimensions uniform in range, flat-simplex marginals and conditionals,
/// uniform costs. kTheorem7Premise redraws each cost vector until it meets
/// the premise; kPositiveMargin redraws the task until every margin reaches
/// min_margin. Gives up after 10^4 redraws.
oracles::DiscreteTask GenRandomDiscreteTask(std::uint64_t seed,
                                            const TaskSamplerConfig& config);

/// Uniform sample from the probability simplex of the given size.
std::vector<double> FlatSimplex(int size, rng::Stream& stream);

/// Tabular hypothesis with i.i.d. normal scores times scale.
oracles::TabularHypothesis RandomTabularHypothesis(
    const oracles::DiscreteTask& task, Stage stage, double scale,
    rng::Stream stream);

}  // namespace deferral::synthdata
