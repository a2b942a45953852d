#include "deferral/models.hpp"

#include <cmath>
#include <numeric>
#include <span>
#include <utility>

#include "deferral/rng.hpp"

namespace deferral::models {
namespace {

template <typename... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <typename... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

Eigen::MatrixXd UniformMatrix(int rows, int cols, double limit,
                              rng::Stream stream) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = stream.Uniform(-limit, limit);
  }
  return m;
}

// Parameter arithmetic shared by both scorer kinds.
void Axpy(LinearScorer& y, double a, const LinearScorer& x) {
  y.weights += a * x.weights;
  y.bias += a * x.bias;
}
void Axpy(MlpScorer& y, double a, const MlpScorer& x) {
  y.w1 += a * x.w1;
  y.b1 += a * x.b1;
  y.w2 += a * x.w2;
  y.b2 += a * x.b2;
}
LinearScorer ZerosLike(const LinearScorer& s) {
  return {Eigen::MatrixXd::Zero(s.weights.rows(), s.weights.cols()),
          Eigen::VectorXd::Zero(s.bias.size())};
}
MlpScorer ZerosLike(const MlpScorer& s) {
  return {Eigen::MatrixXd::Zero(s.w1.rows(), s.w1.cols()),
          Eigen::VectorXd::Zero(s.b1.size()),
          Eigen::MatrixXd::Zero(s.w2.rows(), s.w2.cols()),
          Eigen::VectorXd::Zero(s.b2.size())};
}
std::pair<Eigen::MatrixXd&, Eigen::VectorXd&> FirstLayer(LinearScorer& s) {
  return {s.weights, s.bias};
}
std::pair<Eigen::MatrixXd&, Eigen::VectorXd&> FirstLayer(MlpScorer& s) {
  return {s.w1, s.b1};
}
bool AllFinite(const LinearScorer& s) {
  return s.weights.allFinite() && s.bias.allFinite();
}
bool AllFinite(const MlpScorer& s) {
  return s.w1.allFinite() && s.b1.allFinite() && s.w2.allFinite() &&
         s.b2.allFinite();
}

// First-layer affine maps between raw features x and standardized
// z = (x - mean) / scale: W z + b = (W / scale) x + (b - W (mean / scale)).
void ToStandardized(Eigen::MatrixXd& w, Eigen::VectorXd& b,
                    const Eigen::RowVectorXd& mean,
                    const Eigen::RowVectorXd& scale) {
  b += w * mean.transpose();
  w = w * scale.asDiagonal();
}
void ToRaw(Eigen::MatrixXd& w, Eigen::VectorXd& b,
           const Eigen::RowVectorXd& mean, const Eigen::RowVectorXd& scale) {
  w = w * scale.cwiseInverse().asDiagonal();
  b -= w * mean.transpose();
}

double TargetLoss(std::span<const double> scores, int y,
                  std::span<const double> costs, const ProblemShape& shape,
                  Stage stage) {
  return stage == Stage::kSingle ? losses::DeferralLoss(scores, y, costs, shape)
                                 : losses::TwoStageDeferralLoss(scores, costs);
}

void CheckWidths(const Scorer& scorer, const LabeledDataset& data,
                 Stage stage) {
  const int width = stage == Stage::kSingle ? data.shape.augmented_size()
                                            : data.shape.n_e();
  if (OutputWidth(scorer) != width) {
    throw Error("scorer output width " + std::to_string(OutputWidth(scorer)) +
                " does not match the " + ToString(stage) +
                "-stage width " + std::to_string(width));
  }
  if (InputDim(scorer) != data.input_dim()) {
    throw Error("scorer input dimension does not match the dataset");
  }
}

struct PassResult {
  double surrogate_sum = 0.0;
  double target_sum = 0.0;
};

// Losses over the given rows; when grad is non-null also writes
// d(mean surrogate)/d(scores) for those rows into grad (rows x width).
PassResult LossPass(const RowMatrix& scores, const LabeledDataset& data,
                    std::span<const int> rows, const losses::LossSpec& loss,
                    RowMatrix* grad, int epoch) {
  PassResult result;
  const Stage stage = loss.stage();
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int r = rows[i];
    std::span<const double> z(scores.row(i).data(), scores.cols());
    std::span<const double> c(data.costs.row(r).data(), data.costs.cols());
    const int y = data.labels[r];
    double value = 0.0;
    try {
      if (grad != nullptr) {
        std::span<double> g(grad->row(i).data(), grad->cols());
        value = losses::ValueAndGradient(loss, z, y, c, data.shape, g);
        for (double& v : g) v *= inv;
      } else {
        value = losses::Evaluate(loss, z, y, c, data.shape);
      }
    } catch (const Error& e) {
      throw TrainingDivergence(epoch, std::string("training diverged at epoch ") +
                                          std::to_string(epoch) + ": " +
                                          e.what());
    }
    result.surrogate_sum += value;
    result.target_sum += TargetLoss(z, y, c, data.shape, stage);
  }
  return result;
}

RowMatrix GatherRows(const RowMatrix& x, std::span<const int> rows) {
  RowMatrix out(rows.size(), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = x.row(rows[i]);
  return out;
}

LinearScorer Backward(const LinearScorer&, const RowMatrix& x,
                      const RowMatrix& grad) {
  return {grad.transpose() * x, grad.colwise().sum().transpose()};
}

MlpScorer Backward(const MlpScorer& s, const RowMatrix& x,
                   const RowMatrix& grad) {
  RowMatrix pre = x * s.w1.transpose();
  pre.rowwise() += s.b1.transpose();
  const RowMatrix hidden = pre.cwiseMax(0.0);
  RowMatrix d_hidden = grad * s.w2;
  d_hidden = d_hidden.cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
  return {d_hidden.transpose() * x, d_hidden.colwise().sum().transpose(),
          grad.transpose() * hidden, grad.colwise().sum().transpose()};
}

}  // namespace

void LabeledDataset::Validate() const {
  const auto m = static_cast<Eigen::Index>(labels.size());
  if (features.rows() != m || costs.rows() != m) {
    throw Error("dataset arrays disagree on the number of rows");
  }
  if (costs.cols() != shape.n_e()) {
    throw Error("dataset cost width does not match n_e");
  }
  for (int y : labels) {
    if (y < 0 || y >= shape.n()) throw Error("dataset label out of range");
  }
  if ((costs.array() < 0.0).any() || (costs.array() > 1.0).any()) {
    throw Error("costs must lie in [0, 1]");
  }
  if (!features.allFinite()) throw Error("dataset features must be finite");
}

int OutputWidth(const Scorer& scorer) {
  return std::visit(
      Overloaded{[](const LinearScorer& s) { return int(s.weights.rows()); },
                 [](const MlpScorer& s) { return int(s.w2.rows()); }},
      scorer);
}

int InputDim(const Scorer& scorer) {
  return std::visit(
      Overloaded{[](const LinearScorer& s) { return int(s.weights.cols()); },
                 [](const MlpScorer& s) { return int(s.w1.cols()); }},
      scorer);
}

const char* KindName(const Scorer& scorer) {
  return std::holds_alternative<LinearScorer>(scorer) ? "linear" : "mlp";
}

LinearScorer InitLinear(int output_width, int input_dim, std::uint64_t seed) {
  if (output_width < 1 || input_dim < 1) throw Error("invalid scorer shape");
  rng::Stream stream(seed);
  return {UniformMatrix(output_width, input_dim, 1.0 / std::sqrt(input_dim),
                        stream.Derive("init.w")),
          Eigen::VectorXd::Zero(output_width)};
}

MlpScorer InitMlp(int output_width, int input_dim, int hidden_dim,
                  std::uint64_t seed) {
  if (output_width < 1 || input_dim < 1 || hidden_dim < 1) {
    throw Error("invalid scorer shape");
  }
  rng::Stream stream(seed);
  return {UniformMatrix(hidden_dim, input_dim, 1.0 / std::sqrt(input_dim),
                        stream.Derive("init.w1")),
          Eigen::VectorXd::Zero(hidden_dim),
          UniformMatrix(output_width, hidden_dim, 1.0 / std::sqrt(hidden_dim),
                        stream.Derive("init.w2")),
          Eigen::VectorXd::Zero(output_width)};
}

Eigen::VectorXd Forward(const Scorer& scorer, const Eigen::VectorXd& x) {
  if (x.size() != InputDim(scorer)) {
    throw Error("feature dimension " + std::to_string(x.size()) +
                " does not match scorer input " +
                std::to_string(InputDim(scorer)));
  }
  return std::visit(
      Overloaded{[&](const LinearScorer& s) -> Eigen::VectorXd {
                   return s.weights * x + s.bias;
                 },
                 [&](const MlpScorer& s) -> Eigen::VectorXd {
                   const Eigen::VectorXd h = (s.w1 * x + s.b1).cwiseMax(0.0);
                   return s.w2 * h + s.b2;
                 }},
      scorer);
}

RowMatrix ForwardBatch(const Scorer& scorer, const RowMatrix& features) {
  if (features.cols() != InputDim(scorer)) {
    throw Error("feature dimension does not match scorer input");
  }
  return std::visit(
      Overloaded{[&](const LinearScorer& s) -> RowMatrix {
                   RowMatrix z = features * s.weights.transpose();
                   z.rowwise() += s.bias.transpose();
                   return z;
                 },
                 [&](const MlpScorer& s) -> RowMatrix {
                   RowMatrix h = features * s.w1.transpose();
                   h.rowwise() += s.b1.transpose();
                   h = h.cwiseMax(0.0);
                   RowMatrix z = h * s.w2.transpose();
                   z.rowwise() += s.b2.transpose();
                   return z;
                 }},
      scorer);
}

Scorer Scale(const Scorer& scorer, double alpha) {
  return std::visit(
      [&](auto s) -> Scorer {
        auto zero = ZerosLike(s);
        Axpy(zero, alpha, s);
        return zero;
      },
      scorer);
}

void TrainConfig::Validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw Error("learning_rate must be a finite nonnegative number");
  }
  if (epochs < 1) throw Error("epochs must be at least 1");
  if (batch_size < 0) throw Error("batch_size must be nonnegative");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw Error("momentum must lie in [0, 1)");
  }
}

TrainResult Train(const Scorer& init, const LabeledDataset& data,
                  const losses::LossSpec& loss, const TrainConfig& config) {
  config.Validate();
  data.Validate();
  if (loss.is_target()) throw Error("cannot train on a target loss");
  if (data.rows() == 0) throw Error("empty dataset");
  CheckWidths(init, data, loss.stage());

  const int m = data.rows();
  const int d = data.input_dim();
  Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(d);
  Eigen::RowVectorXd scale = Eigen::RowVectorXd::Ones(d);
  RowMatrix x = data.features;
  if (config.standardize) {
    mean = x.colwise().mean();
    x.rowwise() -= mean;
    scale = (x.array().square().colwise().sum() / m).sqrt().matrix();
    for (int j = 0; j < d; ++j) {
      if (!(scale(j) > 0.0)) scale(j) = 1.0;
    }
    x = x * scale.cwiseInverse().asDiagonal();
  }

  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  const int batch = config.batch_size == 0 ? m : std::min(config.batch_size, m);
  const bool full_batch = batch == m;
  const rng::Stream shuffle_root = rng::Stream(config.seed).Derive("shuffle");

  TrainResult result;
  result.trajectory.reserve(config.epochs);
  result.scorer = std::visit(
      [&](auto params) -> Scorer {
        if (config.standardize) {
          auto [w, b] = FirstLayer(params);
          ToStandardized(w, b, mean, scale);
        }
        auto velocity = ZerosLike(params);
        auto step = [&](const RowMatrix& xs, const RowMatrix& g, int epoch) {
          const auto grad = Backward(params, xs, g);
          if (config.optimizer == Optimizer::kMomentum) {
            auto v = ZerosLike(params);
            Axpy(v, config.momentum, velocity);
            Axpy(v, 1.0, grad);
            velocity = std::move(v);
            Axpy(params, -config.learning_rate, velocity);
          } else {
            Axpy(params, -config.learning_rate, grad);
          }
          if (!AllFinite(params)) {
            throw TrainingDivergence(
                epoch, "training diverged at epoch " + std::to_string(epoch) +
                           ": non-finite parameters");
          }
        };

        const int width = OutputWidth(params);
        for (int epoch = 0; epoch < config.epochs; ++epoch) {
          const RowMatrix scores = ForwardBatch(params, x);
          RowMatrix full_grad;
          if (full_batch) full_grad.resize(m, width);
          const PassResult pass = LossPass(scores, data, order, loss,
                                           full_batch ? &full_grad : nullptr,
                                           epoch);
          const EpochMetrics metrics{epoch, pass.surrogate_sum / m,
                                     pass.target_sum / m};
          if (!std::isfinite(metrics.surrogate_loss)) {
            throw TrainingDivergence(
                epoch, "training diverged at epoch " + std::to_string(epoch) +
                           ": non-finite loss");
          }
          result.trajectory.push_back(metrics);

          if (full_batch) {
            step(x, full_grad, epoch);
            continue;
          }
          std::vector<int> perm = order;
          rng::Stream s = shuffle_root.Derive("epoch", epoch);
          for (int i = m - 1; i > 0; --i) {
            std::swap(perm[i], perm[s.Below(static_cast<std::uint64_t>(i) + 1)]);
          }
          for (int start = 0; start < m; start += batch) {
            std::span<const int> rows(perm.data() + start,
                                      std::min(batch, m - start));
            const RowMatrix xb = GatherRows(x, rows);
            RowMatrix g(rows.size(), width);
            LossPass(ForwardBatch(params, xb), data, rows, loss, &g, epoch);
            step(xb, g, epoch);
          }
        }
        if (config.standardize) {
          auto [w, b] = FirstLayer(params);
          ToRaw(w, b, mean, scale);
        }
        return params;
      },
      init);
  return result;
}

EpochMetrics Evaluate(const Scorer& scorer, const LabeledDataset& data,
                      const losses::LossSpec& loss) {
  data.Validate();
  if (data.rows() == 0) throw Error("empty dataset");
  CheckWidths(scorer, data, loss.stage());
  const RowMatrix scores = ForwardBatch(scorer, data.features);
  PassResult pass;
  for (int i = 0; i < data.rows(); ++i) {
    std::span<const double> z(scores.row(i).data(), scores.cols());
    std::span<const double> c(data.costs.row(i).data(), data.costs.cols());
    pass.surrogate_sum += losses::Evaluate(loss, z, data.labels[i], c, data.shape);
    pass.target_sum += TargetLoss(z, data.labels[i], c, data.shape, loss.stage());
  }
  return {0, pass.surrogate_sum / data.rows(), pass.target_sum / data.rows()};
}

double SystemAccuracy(const Scorer& scorer, const LabeledDataset& data,
                      Stage stage) {
  data.Validate();
  if (data.rows() == 0) throw Error("empty dataset");
  CheckWidths(scorer, data, stage);
  const RowMatrix scores = ForwardBatch(scorer, data.features);
  double total = 0.0;
  for (int i = 0; i < data.rows(); ++i) {
    std::span<const double> z(scores.row(i).data(), scores.cols());
    std::span<const double> c(data.costs.row(i).data(), data.costs.cols());
    total += 1.0 - TargetLoss(z, data.labels[i], c, data.shape, stage);
  }
  return total / data.rows();
}

}  // namespace deferral::models
