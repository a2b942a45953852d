#include "deferral/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>

namespace deferral::synthdata {
namespace {

constexpr int kProbeSamples = 10000;
constexpr int kMaxRedraws = 10000;

models::LinearScorer RandomLinear(int outputs, int input_dim,
                                  rng::Stream stream) {
  models::LinearScorer s;
  s.weights.resize(outputs, input_dim);
  for (int i = 0; i < outputs; ++i) {
    for (int j = 0; j < input_dim; ++j) s.weights(i, j) = stream.Uniform(-1.0, 1.0);
  }
  s.bias = Eigen::VectorXd::Zero(outputs);
  return s;
}

models::RowMatrix MogFeatures(const Eigen::MatrixXd& means, int samples,
                              rng::Stream& stream) {
  const int dim = static_cast<int>(means.cols());
  models::RowMatrix x(samples, dim);
  for (int i = 0; i < samples; ++i) {
    const auto c = static_cast<Eigen::Index>(stream.Below(means.rows()));
    for (int d = 0; d < dim; ++d) x(i, d) = means(c, d) + stream.Normal();
  }
  return x;
}

models::RowMatrix NormalFeatures(int samples, int dim, rng::Stream& stream) {
  models::RowMatrix x(samples, dim);
  for (int i = 0; i < samples; ++i) {
    for (int d = 0; d < dim; ++d) x(i, d) = stream.Normal();
  }
  return x;
}

std::vector<int> Decisions(const models::LinearScorer& s,
                           const models::RowMatrix& x) {
  const models::RowMatrix z = models::ForwardBatch(s, x);
  std::vector<int> out(z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    out[i] = losses::Argmax(std::span<const double>(z.row(i).data(), z.cols()));
  }
  return out;
}

bool CoversAll(const std::vector<int>& actions, int width) {
  std::vector<bool> seen(width, false);
  for (int a : actions) seen[a] = true;
  return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

void Certify(const models::LabeledDataset& data,
             const models::LinearScorer& truth, Stage stage) {
  if (data.rows() == 0) return;
  if (models::SystemAccuracy(truth, data, stage) != 1.0) {
    throw Error("generator failed to certify zero target loss");
  }
}

}  // namespace

void MogConfig::Validate() const {
  if (input_dim < 1) throw Error("input_dim must be positive");
  if (components < 1) throw Error("components must be positive");
  if (n < 2) throw Error("n must be at least 2");
  if (n_e < 1) throw Error("n_e must be at least 1");
  if (samples < 1) throw Error("samples must be at least 1");
}

MogDistribution MakeMogDistribution(const MogConfig& config) {
  config.Validate();
  const rng::Stream root = rng::Stream(config.seed).Derive("mog");
  MogDistribution dist;
  dist.config = config;
  dist.means.resize(config.components, config.input_dim);
  rng::Stream means = root.Derive("means");
  for (int c = 0; c < config.components; ++c) {
    for (int d = 0; d < config.input_dim; ++d) {
      dist.means(c, d) = 2.0 * means.Normal();
    }
  }
  rng::Stream probe_stream = root.Derive("probe");
  const models::RowMatrix probe =
      MogFeatures(dist.means, kProbeSamples, probe_stream);
  const int width = config.n + config.n_e;
  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    dist.h_star = RandomLinear(width, config.input_dim,
                               root.Derive("h_star", attempt));
    if (CoversAll(Decisions(dist.h_star, probe), width)) return dist;
  }
  throw Error("no nondegenerate ground-truth scorer after 10000 draws");
}

models::LabeledDataset SampleMog(const MogDistribution& dist, int samples,
                                 rng::Stream stream) {
  const MogConfig& cfg = dist.config;
  models::LabeledDataset data;
  data.shape = ProblemShape(cfg.n, cfg.n_e);
  rng::Stream feature_stream = stream.Derive("features");
  rng::Stream label_stream = stream.Derive("labels");
  data.features = MogFeatures(dist.means, samples, feature_stream);
  data.labels.resize(samples);
  data.costs = models::RowMatrix::Ones(samples, cfg.n_e);
  const std::vector<int> actions = Decisions(dist.h_star, data.features);
  for (int i = 0; i < samples; ++i) {
    const int a = actions[i];
    if (a < cfg.n) {
      data.labels[i] = a;
    } else {
      data.labels[i] = static_cast<int>(label_stream.Below(cfg.n));
      data.costs(i, a - cfg.n) = 0.0;
    }
  }
  Certify(data, dist.h_star, Stage::kSingle);
  return data;
}

RealizableSample GenRealizableMog(const MogConfig& config) {
  const MogDistribution dist = MakeMogDistribution(config);
  return {SampleMog(dist, config.samples,
                    rng::Stream(config.seed).Derive("train")),
          dist.h_star};
}

ClassRangeExperts::ClassRangeExperts(int n, ExpertRangeSpec spec,
                                     std::uint64_t seed)
    : n_(n), spec_(std::move(spec)), stream_(seed) {
  if (n < 2) throw Error("n must be at least 2");
  if (spec_.ranges.empty()) throw Error("at least one expert range is needed");
  for (const auto& [begin, end] : spec_.ranges) {
    if (begin >= end) throw Error("empty expert range");
    if (begin < 0 || end > n) throw Error("expert range outside [0, n)");
  }
}

int ClassRangeExperts::Predict(int expert, int y, std::uint64_t index) const {
  const auto [begin, end] = spec_.ranges.at(expert);
  if (y >= begin && y < end) return y;
  rng::Stream draw = stream_.Derive("expert", expert).Derive("draw", index);
  return begin + static_cast<int>(draw.Below(end - begin));
}

std::vector<double> ClassRangeExperts::Costs(int y, std::uint64_t index) const {
  std::vector<double> costs(n_e());
  for (int j = 0; j < n_e(); ++j) costs[j] = Predict(j, y, index) != y ? 1.0 : 0.0;
  return costs;
}

ExpertRangeSpec SplitRanges(int n, const std::vector<double>& fractions) {
  ExpertRangeSpec spec;
  double cumulative = 0.0;
  int begin = 0;
  for (double f : fractions) {
    cumulative += f;
    const int end = std::min(n, static_cast<int>(std::lround(cumulative * n)));
    spec.ranges.emplace_back(begin, end);
    begin = end;
  }
  return spec;
}

void TwoStageConfig::Validate() const {
  if (n_e < 2) throw Error("two-stage data requires n_e >= 2");
  if (input_dim < 1) throw Error("input_dim must be positive");
  if (samples < 1) throw Error("samples must be at least 1");
}

TwoStageDistribution MakeTwoStageDistribution(const TwoStageConfig& config) {
  config.Validate();
  const rng::Stream root = rng::Stream(config.seed).Derive("two_stage");
  rng::Stream probe_stream = root.Derive("probe");
  const models::RowMatrix probe =
      NormalFeatures(kProbeSamples, config.input_dim, probe_stream);
  TwoStageDistribution dist;
  dist.config = config;
  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    dist.r_star = RandomLinear(config.n_e, config.input_dim,
                               root.Derive("r_star", attempt));
    if (CoversAll(Decisions(dist.r_star, probe), config.n_e)) return dist;
  }
  throw Error("no nondegenerate ground-truth scorer after 10000 draws");
}

models::LabeledDataset SampleTwoStage(const TwoStageDistribution& dist,
                                      int samples, rng::Stream stream) {
  const int n_e = dist.config.n_e;
  models::LabeledDataset data;
  data.shape = ProblemShape(n_e, n_e);
  rng::Stream feature_stream = stream.Derive("features");
  data.features = NormalFeatures(samples, dist.config.input_dim, feature_stream);
  data.labels = Decisions(dist.r_star, data.features);
  data.costs = models::RowMatrix::Ones(samples, n_e);
  for (int i = 0; i < samples; ++i) data.costs(i, data.labels[i]) = 0.0;
  Certify(data, dist.r_star, Stage::kTwo);
  return data;
}

RealizableSample GenRealizableTwoStage(const TwoStageConfig& config) {
  const TwoStageDistribution dist = MakeTwoStageDistribution(config);
  return {SampleTwoStage(dist, config.samples,
                         rng::Stream(config.seed).Derive("train")),
          dist.r_star};
}

const char* ToString(TaskConstraint constraint) {
  switch (constraint) {
    case TaskConstraint::kNone:
      return "none";
    case TaskConstraint::kTheorem7Premise:
      return "theorem7_premise";
    case TaskConstraint::kPositiveMargin:
      return "positive_margin";
  }
  return "?";
}

TaskConstraint TaskConstraintFromString(const std::string& name) {
  for (auto c : {TaskConstraint::kNone, TaskConstraint::kTheorem7Premise,
                 TaskConstraint::kPositiveMargin}) {
    if (name == ToString(c)) return c;
  }
  throw Error("unknown task constraint '" + name + "'");
}

void TaskSamplerConfig::Validate() const {
  if (n_min < 2 || n_max < n_min) throw Error("need 2 <= n_min <= n_max");
  if (ne_min < 1 || ne_max < ne_min) throw Error("need 1 <= ne_min <= ne_max");
  if (k_min < 1 || k_max < k_min) throw Error("need 1 <= k_min <= k_max");
  const bool two_stage = constraint == TaskConstraint::kTheorem7Premise ||
                         (constraint == TaskConstraint::kPositiveMargin &&
                          margin_stage == Stage::kTwo);
  if (two_stage && ne_min < 2) {
    throw Error("two-stage constraints need ne_min >= 2");
  }
  if (!(min_margin > 0.0)) throw Error("min_margin must be positive");
}

std::vector<double> FlatSimplex(int size, rng::Stream& stream) {
  std::vector<double> v(size);
  double total = 0.0;
  for (double& x : v) {
    x = stream.Exponential();
    total += x;
  }
  for (double& x : v) x /= total;
  return v;
}

oracles::DiscreteTask GenRandomDiscreteTask(std::uint64_t seed,
                                            const TaskSamplerConfig& config) {
  config.Validate();
  const rng::Stream root = rng::Stream(seed).Derive("task");
  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    rng::Stream s = root.Derive("attempt", attempt);
    const int n = s.Between(config.n_min, config.n_max);
    const int n_e = s.Between(config.ne_min, config.ne_max);
    const int k_count = s.Between(config.k_min, config.k_max);
    oracles::DiscreteTask task;
    task.shape = ProblemShape(n, n_e);
    task.mu = FlatSimplex(k_count, s);
    task.conditionals.resize(k_count);
    task.costs.assign(k_count, std::vector<std::vector<double>>(n));
    for (int k = 0; k < k_count; ++k) {
      task.conditionals[k] = FlatSimplex(n, s);
      for (int y = 0; y < n; ++y) {
        auto& c = task.costs[k][y];
        c.resize(n_e);
        int draws = 0;
        for (;;) {
          for (double& v : c) v = s.Uniform();
          if (config.constraint != TaskConstraint::kTheorem7Premise) break;
          const double total = std::accumulate(c.begin(), c.end(), 0.0);
          const double smallest_rest = total - *std::max_element(c.begin(), c.end());
          if (smallest_rest >= n_e - 2.0) break;
          if (++draws >= kMaxRedraws) {
            throw Error("task constraint unsatisfiable after 10000 resamples");
          }
        }
      }
    }
    if (config.constraint == TaskConstraint::kPositiveMargin) {
      const std::vector<double> margins =
          oracles::MinimalMargin(task, config.margin_stage);
      if (*std::min_element(margins.begin(), margins.end()) < config.min_margin) {
        continue;
      }
    }
    return task;
  }
  throw Error("task constraint unsatisfiable after 10000 resamples");
}

oracles::TabularHypothesis RandomTabularHypothesis(
    const oracles::DiscreteTask& task, Stage stage, double scale,
    rng::Stream stream) {
  const int width = stage == Stage::kSingle ? task.shape.augmented_size()
                                            : task.shape.n_e();
  oracles::TabularHypothesis h;
  h.scores.assign(task.size(), std::vector<double>(width));
  for (auto& row : h.scores) {
    for (double& v : row) v = scale * stream.Normal();
  }
  return h;
}

}  // namespace deferral::synthdata
