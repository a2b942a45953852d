#pragma once

// Target and surrogate losses for learning to defer with multiple experts.
//
// Single-stage scores have width n + n_e: entries [0, n) score the labels and
// entry n + j scores deferral to expert j. Two-stage scores have width n_e and
// score the experts directly. Costs always have width n_e, entry j holding the
// realized cost c_j(x, y) in [0, 1].
//
// Predictions take the argmax with ties broken to the lowest index.

#include <span>
#include <string>
#include <vector>

#include "deferral/types.hpp"

namespace deferral::losses {

/// Lowest-index argmax.
int Argmax(std::span<const double> scores);

/// Max-shifted softmax. Throws Error("invalid scores") on non-finite input.
std::vector<double> Softmax(std::span<const double> scores);

double Psi(double u, const PsiSpec& psi);
double Phi(double t, PhiKind kind);
double PhiDerivative(double t, PhiKind kind);

// ---------------------------------------------------------------------------
// Target losses

double DeferralLoss(std::span<const double> scores, int y,
                    std::span<const double> costs, const ProblemShape& shape);

/// Same value as DeferralLoss, evaluated through the rewritten form
/// [sum_j c_j + 1 - n_e] 1{h != y} + sum_j (1 - c_j) 1{h != y} 1{h != n + j}.
double DeferralLossAlt(std::span<const double> scores, int y,
                       std::span<const double> costs,
                       const ProblemShape& shape);

double TwoStageDeferralLoss(std::span<const double> scores,
                            std::span<const double> costs);

// ---------------------------------------------------------------------------
// Single-stage surrogates

/// [sum_j c_j + 1 - n_e] Psi(s_y) + sum_j (1 - c_j) Psi(s_y + s_{n+j}).
/// The first coefficient is negative when sum_j c_j < n_e - 1 and is used
/// as-is.
double SurrogateSingle(std::span<const double> scores, int y,
                       std::span<const double> costs,
                       const ProblemShape& shape, const PsiSpec& psi);
std::vector<double> SurrogateSingleGrad(std::span<const double> scores, int y,
                                        std::span<const double> costs,
                                        const ProblemShape& shape,
                                        const PsiSpec& psi);

/// SurrogateSingle with q = 1.
double SurrogateMae(std::span<const double> scores, int y,
                    std::span<const double> costs, const ProblemShape& shape);

/// -log s_y - sum_j (1 - c_j) log s_{n+j}, softmax clamped at clamp_epsilon.
double BaselineVerma(std::span<const double> scores, int y,
                     std::span<const double> costs, const ProblemShape& shape,
                     double clamp_epsilon = 1e-12);
std::vector<double> BaselineVermaGrad(std::span<const double> scores, int y,
                                      std::span<const double> costs,
                                      const ProblemShape& shape,
                                      double clamp_epsilon = 1e-12);

/// Psi(s_y) + sum_j (1 - c_j) Psi(s_{n+j}); reduces to BaselineVerma at q = 0.
double BaselineMao(std::span<const double> scores, int y,
                   std::span<const double> costs, const ProblemShape& shape,
                   const PsiSpec& psi);
std::vector<double> BaselineMaoGrad(std::span<const double> scores, int y,
                                    std::span<const double> costs,
                                    const ProblemShape& shape,
                                    const PsiSpec& psi);

// ---------------------------------------------------------------------------
// Two-stage surrogates

/// c_1 Phi(r_2 - r_1) + c_2 Phi(r_1 - r_2). Two experts only.
double TwoStageSurrogatePhi(std::span<const double> scores,
                            std::span<const double> costs, const PhiSpec& phi);
std::vector<double> TwoStageSurrogatePhiGrad(std::span<const double> scores,
                                             std::span<const double> costs,
                                             const PhiSpec& phi);

/// sum_j (sum_{j' != j} c_{j'} - n_e + 2) Psi(s_j).
double TwoStageSurrogatePsi(std::span<const double> scores,
                            std::span<const double> costs, const PsiSpec& psi);
std::vector<double> TwoStageSurrogatePsiGrad(std::span<const double> scores,
                                             std::span<const double> costs,
                                             const PsiSpec& psi);

// ---------------------------------------------------------------------------
// Loss selection

enum class LossKind {
  kDeferral,
  kTwoStageDeferral,
  kSurrogateSingle,
  kSurrogateMae,
  kBaselineVerma,
  kBaselineMao,
  kTwoStagePhi,
  kTwoStagePsi,
};

/// Names one of the losses above together with its parameters.
struct LossSpec {
  LossKind kind = LossKind::kSurrogateMae;
  PsiSpec psi;
  PhiSpec phi;

  Stage stage() const;
  bool is_target() const;
  std::string name() const;

  static LossSpec Make(LossKind kind, double q = 1.0,
                       PhiKind phi = PhiKind::kLogistic);
  /// Accepts the names returned by name(): "deferral", "two_stage_deferral",
  /// "surrogate_single", "surrogate_mae", "baseline_verma", "baseline_mao",
  /// "two_stage_phi", "two_stage_psi".
  static LossSpec FromName(const std::string& name, double q = 1.0,
                           PhiKind phi = PhiKind::kLogistic);
};

/// y is ignored by two-stage losses.
double Evaluate(const LossSpec& loss, std::span<const double> scores, int y,
                std::span<const double> costs, const ProblemShape& shape);

/// Gradient with respect to the scores. Throws for target losses.
std::vector<double> Gradient(const LossSpec& loss,
                             std::span<const double> scores, int y,
                             std::span<const double> costs,
                             const ProblemShape& shape);

/// Evaluate and Gradient in one pass; writes the gradient into grad, which
/// must have the width of scores. Throws for target losses.
double ValueAndGradient(const LossSpec& loss, std::span<const double> scores,
                        int y, std::span<const double> costs,
                        const ProblemShape& shape, std::span<double> grad);

}  // namespace deferral::losses
