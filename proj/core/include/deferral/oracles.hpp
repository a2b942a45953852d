#pragma once

// Exact computations on finite-support distributions.
//
// A DiscreteTask lists K points with marginals mu_k, label conditionals
// p(y | x_k) and realized costs c_j(x_k, y). Every expectation below is a
// finite sum, so regrets, excess errors and bound slacks are exact up to
// floating-point rounding. The hypothesis class is tabular (one free score
// vector per point), which makes minimizability gaps vanish.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deferral/losses.hpp"
#include "deferral/types.hpp"

namespace deferral::oracles {

/// Regrets above -kSlackFloor count as numerically zero.
inline constexpr double kSlackFloor = 1e-9;

struct DiscreteTask {
  ProblemShape shape{2, 1};
  std::vector<double> mu;                                // K
  std::vector<std::vector<double>> conditionals;         // K x n
  std::vector<std::vector<std::vector<double>>> costs;   // K x n x n_e

  int size() const { return static_cast<int>(mu.size()); }
  std::span<const double> Costs(int k, int y) const { return costs[k][y]; }

  /// Throws Error describing the first broken invariant.
  void Validate() const;
};

/// One score vector per point; width n + n_e or n_e depending on stage.
struct TabularHypothesis {
  std::vector<std::vector<double>> scores;

  int Action(int k) const;
};

/// p_a for a < n and p_{n+j} = sum_y p(y|x)(1 - c_j(x, y)).
std::vector<double> ActionValues(const DiscreteTask& task, int k);

/// E_j = sum_y p(y|x) c_j(x, y).
std::vector<double> ExpectedCosts(const DiscreteTask& task, int k);

double ConditionalRegretDef(const DiscreteTask& task,
                            const TabularHypothesis& h, int k);
double ConditionalRegretTdef(const DiscreteTask& task,
                             const TabularHypothesis& r, int k);

/// One-hot hypotheses (score 1 on the chosen action, 0 elsewhere).
TabularHypothesis BayesDeferral(const DiscreteTask& task);
TabularHypothesis BayesTwoStage(const DiscreteTask& task);
TabularHypothesis Bayes(const DiscreteTask& task, Stage stage);

/// sum_y p(y|x_k) L(scores, y, c(x_k, y)).
double ConditionalError(const DiscreteTask& task, int k,
                        const losses::LossSpec& loss,
                        std::span<const double> scores);

/// Infimum of ConditionalError over all score vectors. Supported: both
/// target losses, single-stage q = 1 surrogates, two-stage Psi_q and
/// two-stage Phi. Two-stage Psi_q needs nonnegative coefficients.
double ConditionalMinSurrogate(const DiscreteTask& task, int k,
                               const losses::LossSpec& loss);

/// ConditionalError - ConditionalMinSurrogate.
double ConditionalRegret(const DiscreteTask& task, const TabularHypothesis& h,
                         int k, const losses::LossSpec& loss);

double ExpectedLoss(const DiscreteTask& task, const TabularHypothesis& h,
                    const losses::LossSpec& loss);

/// Excess error over the tabular-class optimum.
double EmpiricalExcess(const DiscreteTask& task, const TabularHypothesis& h,
                       const losses::LossSpec& loss);

enum class HypothesisClass { kTabularAll, kFixedFamily };

/// Best-in-class error minus the expected pointwise best-in-class conditional
/// error. kFixedFamily takes its class from candidates.
double MinimizabilityGap(const DiscreteTask& task, const losses::LossSpec& loss,
                         HypothesisClass cls,
                         std::span<const TabularHypothesis> candidates = {});

// ---------------------------------------------------------------------------
// Reports

enum class Verdict { kOk, kViolation, kPremiseUnmet };

const char* ToString(Verdict verdict);

struct ReportRow {
  std::string point;  // point index, or the name of an aggregate
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;
  Verdict verdict = Verdict::kOk;
};

struct RegretReport {
  std::vector<double> target_regret;
  std::vector<double> surrogate_regret;
  double excess_target = 0.0;
  double excess_surrogate = 0.0;
  std::vector<ReportRow> rows;
  bool premise_met = true;

  int violations() const;
  /// Most negative slack over rows, or 0 when every slack is nonnegative.
  double max_negative_slack() const;
};

/// Adds a row comparing lhs <= rhs with the numerical floor applied.
void AddRow(RegretReport& report, std::string point, double lhs, double rhs);

/// task_id,point,lhs,rhs,slack,verdict lines, 17 significant digits.
std::string ReportCsvRows(const std::string& task_id,
                          const RegretReport& report);
inline constexpr const char* kReportCsvHeader =
    "task_id,point,lhs,rhs,slack,verdict\n";

// ---------------------------------------------------------------------------
// Bound verifiers

/// Per point: regret_def <= (n + n_e) regret_mae; then the same in excess
/// errors.
RegretReport VerifyBoundSingleMae(const DiscreteTask& task,
                                  const TabularHypothesis& h);

/// Lower and upper cost bounds per expert over the support.
struct CostBounds {
  std::vector<double> lower;
  std::vector<double> upper;
};
CostBounds ComputeCostBounds(const DiscreteTask& task);

/// Throws Error("assumption Σ c ≥ n_e − 2 fails") unless
/// sum_{j' != j} c_j'(x, y) >= n_e - 2 on the support.
void CheckTwoStagePremise(const DiscreteTask& task);
bool TwoStagePremiseHolds(const DiscreteTask& task);

/// (n_e - 1) max_j upper_j - n_e + 2.
double TwoStageCbar(const DiscreteTask& task);

/// Gamma(t) for the two-stage Psi_q surrogate.
double TwoStageGamma(double t, double q, int n_e, double cbar);

/// Per point: regret_tdef <= Gamma(regret_psi); then the excess-error form.
RegretReport VerifyBoundTwoStage(const DiscreteTask& task,
                                 const TabularHypothesis& r, double q);

/// Two experts: regret_tdef <= (cu_1 + cu_2) Gamma(regret_phi / (cl_1 + cl_2))
/// with Gamma(t) = sqrt(2t) for logistic and exponential Phi, and
/// regret_tdef <= regret_phi for hinge.
RegretReport VerifyBoundTwoExpert(const DiscreteTask& task,
                                  const TabularHypothesis& r,
                                  PhiKind phi = PhiKind::kLogistic);

// ---------------------------------------------------------------------------
// Low-noise analysis

/// Gap between the best action value and the runner-up. Single stage ranks
/// ActionValues descending; two stage ranks ExpectedCosts ascending.
std::vector<double> MinimalMargin(const DiscreteTask& task, Stage stage);

struct NoiseProfile {
  double alpha = 0.5;
  double B = 1.0;
  double c_const = 1.0;
  std::vector<double> margins;

  /// Pr[gamma <= t] <= B t^(alpha / (1 - alpha)) at every margin value.
  bool Holds(std::span<const double> marginals) const;
};

/// Smallest B satisfying the noise inequality. Throws Error("zero margin")
/// if any margin with positive mass is zero.
NoiseProfile FitTsybakovB(std::span<const double> margins,
                          std::span<const double> marginals, double alpha);

/// Chain Pr[h != h*] <= c E[gamma 1{h != h*}]^alpha <= c excess^alpha.
RegretReport VerifyLemmaNoise(const DiscreteTask& task,
                              const TabularHypothesis& h,
                              const NoiseProfile& profile, Stage stage);

enum class EnhancedMode { kTheoremMulti, kTheoremMm };

const char* ToString(EnhancedMode mode);

/// Checks regret_target <= regret_L^(1/s) pointwise first; when it fails the
/// report carries premise_met = false and no violation. kTheoremMm needs a
/// profile fitted to the target margins.
RegretReport VerifyEnhancedBound(const DiscreteTask& task,
                                 const TabularHypothesis& h,
                                 const losses::LossSpec& loss, double s,
                                 EnhancedMode mode,
                                 const std::optional<NoiseProfile>& profile =
                                     std::nullopt);

// ---------------------------------------------------------------------------
// Optimization on the tabular class

struct TabularDescentConfig {
  double learning_rate = 1.0;
  int steps = 1000;
};

/// Full-batch gradient descent on ExpectedLoss starting from init.
TabularHypothesis TabularGradientDescent(const DiscreteTask& task,
                                         const losses::LossSpec& loss,
                                         TabularHypothesis init,
                                         const TabularDescentConfig& config);

}  // namespace deferral::oracles
