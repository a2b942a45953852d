#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "deferral/losses.hpp"
#include "deferral/types.hpp"

namespace deferral::models {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Rows of features with their labels and realized expert costs.
struct LabeledDataset {
  ProblemShape shape{2, 1};
  RowMatrix features;       // m x input_dim
  std::vector<int> labels;  // m
  RowMatrix costs;          // m x n_e

  int rows() const { return static_cast<int>(labels.size()); }
  int input_dim() const { return static_cast<int>(features.cols()); }
  void Validate() const;
};

struct LinearScorer {
  Eigen::MatrixXd weights;  // output_width x input_dim
  Eigen::VectorXd bias;     // output_width
};

/// Two affine layers with a rectifier in between.
struct MlpScorer {
  Eigen::MatrixXd w1;  // hidden_dim x input_dim
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // output_width x hidden_dim
  Eigen::VectorXd b2;
};

using Scorer = std::variant<LinearScorer, MlpScorer>;

int OutputWidth(const Scorer& scorer);
int InputDim(const Scorer& scorer);
const char* KindName(const Scorer& scorer);

/// Weights uniform in +-1/sqrt(fan_in), biases zero.
LinearScorer InitLinear(int output_width, int input_dim, std::uint64_t seed);
MlpScorer InitMlp(int output_width, int input_dim, int hidden_dim,
                  std::uint64_t seed);

/// Scores for one feature row.
Eigen::VectorXd Forward(const Scorer& scorer, const Eigen::VectorXd& x);

/// Scores for every row, returned as m x output_width.
RowMatrix ForwardBatch(const Scorer& scorer, const RowMatrix& features);

/// Multiplies every parameter by alpha.
Scorer Scale(const Scorer& scorer, double alpha);

enum class Optimizer { kGd, kMomentum };

struct TrainConfig {
  double learning_rate = 0.5;
  int epochs = 500;
  int batch_size = 0;  // 0 means full batch
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::kGd;
  double momentum = 0.9;
  bool standardize = true;

  void Validate() const;
};

struct EpochMetrics {
  int epoch = 0;
  double surrogate_loss = 0.0;
  double deferral_loss = 0.0;
};

struct TrainResult {
  Scorer scorer;
  std::vector<EpochMetrics> trajectory;
};

/// Raised when the training loss or a parameter becomes non-finite.
class TrainingDivergence : public Error {
 public:
  TrainingDivergence(int epoch, const std::string& what)
      : Error(what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

/// Metrics for epoch e are measured on the full training set before that
/// epoch's updates. With standardization on, the statistics are folded into
/// the first layer of the returned scorer, so it consumes raw features.
TrainResult Train(const Scorer& init, const LabeledDataset& data,
                  const losses::LossSpec& loss, const TrainConfig& config);

/// Mean surrogate and target loss over the dataset.
EpochMetrics Evaluate(const Scorer& scorer, const LabeledDataset& data,
                      const losses::LossSpec& loss);

/// Mean of 1 - target loss, where the target follows the stage.
double SystemAccuracy(const Scorer& scorer, const LabeledDataset& data,
                      Stage stage);

}  // namespace deferral::models
