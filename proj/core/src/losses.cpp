#include "deferral/losses.hpp"

#include <algorithm>
#include <cmath>

namespace deferral::losses {
namespace {

void CheckCosts(std::span<const double> costs, int n_e) {
  if (static_cast<int>(costs.size()) != n_e) {
    throw Error("cost vector width " + std::to_string(costs.size()) +
                " does not match n_e = " + std::to_string(n_e));
  }
  for (double c : costs) {
    if (!(c >= 0.0 && c <= 1.0)) throw Error("costs must lie in [0, 1]");
  }
}

void CheckSingle(std::span<const double> scores, int y,
                 std::span<const double> costs, const ProblemShape& shape) {
  if (static_cast<int>(scores.size()) != shape.augmented_size()) {
    throw Error("score width " + std::to_string(scores.size()) +
                " does not match n + n_e = " +
                std::to_string(shape.augmented_size()));
  }
  if (y < 0 || y >= shape.n()) {
    throw Error("label " + std::to_string(y) + " out of range [0, " +
                std::to_string(shape.n()) + ")");
  }
  CheckCosts(costs, shape.n_e());
}

// Sums weight * Psi(sum_{a in members} s_a) over terms and, when grad is
// non-empty, the gradient with respect to the pre-softmax scores. Each term
// contributes rho(u) (pi - s), where rho(u) = u Psi'(u) and pi is s
// renormalized over the members.
class PsiAccumulator {
 public:
  PsiAccumulator(std::span<const double> s, const PsiSpec& psi,
                 std::span<double> grad)
      : s_(s), psi_(psi), grad_(grad) {
    std::fill(grad_.begin(), grad_.end(), 0.0);
  }

  void Add(std::initializer_list<int> members, double weight) {
    if (weight == 0.0) return;
    double u = 0.0;
    for (int a : members) u += s_[a];
    double rho = 0.0;
    if (psi_.q == 0.0) {
      value_ += weight * -std::log(std::max(u, psi_.clamp_epsilon));
      rho = u < psi_.clamp_epsilon ? 0.0 : -1.0;
    } else {
      const double uq = std::pow(u, psi_.q);
      value_ += weight * (1.0 - uq) / psi_.q;
      rho = -uq;
    }
    if (grad_.empty() || u <= 0.0 || rho == 0.0) return;
    rho *= weight;
    for (std::size_t i = 0; i < grad_.size(); ++i) grad_[i] -= rho * s_[i];
    for (int a : members) grad_[a] += rho * s_[a] / u;
  }

  double value() const { return value_; }

 private:
  std::span<const double> s_;
  const PsiSpec& psi_;
  std::span<double> grad_;
  double value_ = 0.0;
};

double CostSum(std::span<const double> costs) {
  double total = 0.0;
  for (double c : costs) total += c;
  return total;
}

double SingleTerms(std::span<const double> s, int y,
                   std::span<const double> costs, const ProblemShape& shape,
                   const PsiSpec& psi, std::span<double> grad) {
  PsiAccumulator acc(s, psi, grad);
  acc.Add({y}, CostSum(costs) + 1.0 - shape.n_e());
  for (int j = 0; j < shape.n_e(); ++j) {
    acc.Add({y, shape.n() + j}, 1.0 - costs[j]);
  }
  return acc.value();
}

double MaoTerms(std::span<const double> s, int y,
                std::span<const double> costs, const ProblemShape& shape,
                const PsiSpec& psi, std::span<double> grad) {
  PsiAccumulator acc(s, psi, grad);
  acc.Add({y}, 1.0);
  for (int j = 0; j < shape.n_e(); ++j) acc.Add({shape.n() + j}, 1.0 - costs[j]);
  return acc.value();
}

double TwoStagePsiTerms(std::span<const double> s,
                        std::span<const double> costs, const PsiSpec& psi,
                        std::span<double> grad) {
  const int n_e = static_cast<int>(costs.size());
  const double total = CostSum(costs);
  PsiAccumulator acc(s, psi, grad);
  for (int j = 0; j < n_e; ++j) acc.Add({j}, total - costs[j] - n_e + 2.0);
  return acc.value();
}

double SigmoidStable(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace

int Argmax(std::span<const double> scores) {
  if (scores.empty()) throw Error("argmax of empty score vector");
  int best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = static_cast<int>(i);
  }
  return best;
}

std::vector<double> Softmax(std::span<const double> scores) {
  if (scores.empty()) throw Error("invalid scores");
  for (double v : scores) {
    if (!std::isfinite(v)) throw Error("invalid scores");
  }
  const double top = *std::max_element(scores.begin(), scores.end());
  std::vector<double> out(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - top);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

double Psi(double u, const PsiSpec& psi) {
  if (psi.q == 0.0) return -std::log(std::max(u, psi.clamp_epsilon));
  return (1.0 - std::pow(u, psi.q)) / psi.q;
}

double Phi(double t, PhiKind kind) {
  switch (kind) {
    case PhiKind::kLogistic:
      return t > 0.0 ? std::log1p(std::exp(-t)) : -t + std::log1p(std::exp(t));
    case PhiKind::kExponential:
      return std::exp(-t);
    case PhiKind::kHinge:
      return std::max(0.0, 1.0 - t);
  }
  return 0.0;
}

double PhiDerivative(double t, PhiKind kind) {
  switch (kind) {
    case PhiKind::kLogistic:
      return -SigmoidStable(-t);
    case PhiKind::kExponential:
      return -std::exp(-t);
    case PhiKind::kHinge:
      return t < 1.0 ? -1.0 : 0.0;
  }
  return 0.0;
}

double DeferralLoss(std::span<const double> scores, int y,
                    std::span<const double> costs, const ProblemShape& shape) {
  CheckSingle(scores, y, costs, shape);
  const int action = Argmax(scores);
  if (action < shape.n()) return action == y ? 0.0 : 1.0;
  return costs[action - shape.n()];
}

double DeferralLossAlt(std::span<const double> scores, int y,
                       std::span<const double> costs,
                       const ProblemShape& shape) {
  CheckSingle(scores, y, costs, shape);
  const int action = Argmax(scores);
  const double wrong = action != y ? 1.0 : 0.0;
  double cost_sum = 0.0;
  for (double c : costs) cost_sum += c;
  double value = (cost_sum + 1.0 - shape.n_e()) * wrong;
  for (int j = 0; j < shape.n_e(); ++j) {
    const double not_j = action != shape.n() + j ? 1.0 : 0.0;
    value += (1.0 - costs[j]) * wrong * not_j;
  }
  return value;
}

double TwoStageDeferralLoss(std::span<const double> scores,
                            std::span<const double> costs) {
  if (scores.size() != costs.size() || scores.empty()) {
    throw Error("two-stage scores and costs must have the same width n_e");
  }
  CheckCosts(costs, static_cast<int>(costs.size()));
  return costs[Argmax(scores)];
}

double SurrogateSingle(std::span<const double> scores, int y,
                       std::span<const double> costs,
                       const ProblemShape& shape, const PsiSpec& psi) {
  psi.Validate();
  CheckSingle(scores, y, costs, shape);
  return SingleTerms(Softmax(scores), y, costs, shape, psi, {});
}

std::vector<double> SurrogateSingleGrad(std::span<const double> scores, int y,
                                        std::span<const double> costs,
                                        const ProblemShape& shape,
                                        const PsiSpec& psi) {
  psi.Validate();
  CheckSingle(scores, y, costs, shape);
  std::vector<double> grad(scores.size());
  SingleTerms(Softmax(scores), y, costs, shape, psi, grad);
  return grad;
}

double SurrogateMae(std::span<const double> scores, int y,
                    std::span<const double> costs, const ProblemShape& shape) {
  return SurrogateSingle(scores, y, costs, shape, PsiSpec{.q = 1.0});
}

double BaselineVerma(std::span<const double> scores, int y,
                     std::span<const double> costs, const ProblemShape& shape,
                     double clamp_epsilon) {
  return BaselineMao(scores, y, costs, shape,
                     PsiSpec{.q = 0.0, .clamp_epsilon = clamp_epsilon});
}

std::vector<double> BaselineVermaGrad(std::span<const double> scores, int y,
                                      std::span<const double> costs,
                                      const ProblemShape& shape,
                                      double clamp_epsilon) {
  return BaselineMaoGrad(scores, y, costs, shape,
                         PsiSpec{.q = 0.0, .clamp_epsilon = clamp_epsilon});
}

double BaselineMao(std::span<const double> scores, int y,
                   std::span<const double> costs, const ProblemShape& shape,
                   const PsiSpec& psi) {
  psi.Validate();
  CheckSingle(scores, y, costs, shape);
  return MaoTerms(Softmax(scores), y, costs, shape, psi, {});
}

std::vector<double> BaselineMaoGrad(std::span<const double> scores, int y,
                                    std::span<const double> costs,
                                    const ProblemShape& shape,
                                    const PsiSpec& psi) {
  psi.Validate();
  CheckSingle(scores, y, costs, shape);
  std::vector<double> grad(scores.size());
  MaoTerms(Softmax(scores), y, costs, shape, psi, grad);
  return grad;
}

namespace {

void CheckTwoExpert(std::span<const double> scores,
                    std::span<const double> costs) {
  if (scores.size() != 2 || costs.size() != 2) {
    throw Error("two-expert surrogate requires width 2");
  }
  CheckCosts(costs, 2);
}

double TwoExpertTerms(std::span<const double> scores,
                      std::span<const double> costs, PhiKind phi,
                      std::span<double> grad) {
  const double margin = scores[0] - scores[1];
  if (!grad.empty()) {
    const double d_margin = -costs[0] * PhiDerivative(-margin, phi) +
                            costs[1] * PhiDerivative(margin, phi);
    grad[0] = d_margin;
    grad[1] = -d_margin;
  }
  return costs[0] * Phi(-margin, phi) + costs[1] * Phi(margin, phi);
}

void CheckTwoStage(std::span<const double> scores,
                   std::span<const double> costs) {
  if (scores.size() < 2) throw Error("two-stage deferral requires n_e >= 2");
  if (scores.size() != costs.size()) {
    throw Error("two-stage scores and costs must have the same width n_e");
  }
  CheckCosts(costs, static_cast<int>(costs.size()));
}

}  // namespace

double TwoStageSurrogatePhi(std::span<const double> scores,
                            std::span<const double> costs, const PhiSpec& phi) {
  CheckTwoExpert(scores, costs);
  return TwoExpertTerms(scores, costs, phi.kind, {});
}

std::vector<double> TwoStageSurrogatePhiGrad(std::span<const double> scores,
                                             std::span<const double> costs,
                                             const PhiSpec& phi) {
  CheckTwoExpert(scores, costs);
  std::vector<double> grad(2);
  TwoExpertTerms(scores, costs, phi.kind, grad);
  return grad;
}

double TwoStageSurrogatePsi(std::span<const double> scores,
                            std::span<const double> costs, const PsiSpec& psi) {
  psi.Validate();
  CheckTwoStage(scores, costs);
  return TwoStagePsiTerms(Softmax(scores), costs, psi, {});
}

std::vector<double> TwoStageSurrogatePsiGrad(std::span<const double> scores,
                                             std::span<const double> costs,
                                             const PsiSpec& psi) {
  psi.Validate();
  CheckTwoStage(scores, costs);
  std::vector<double> grad(scores.size());
  TwoStagePsiTerms(Softmax(scores), costs, psi, grad);
  return grad;
}

// ---------------------------------------------------------------------------

Stage LossSpec::stage() const {
  switch (kind) {
    case LossKind::kTwoStageDeferral:
    case LossKind::kTwoStagePhi:
    case LossKind::kTwoStagePsi:
      return Stage::kTwo;
    default:
      return Stage::kSingle;
  }
}

bool LossSpec::is_target() const {
  return kind == LossKind::kDeferral || kind == LossKind::kTwoStageDeferral;
}

std::string LossSpec::name() const {
  switch (kind) {
    case LossKind::kDeferral:
      return "deferral";
    case LossKind::kTwoStageDeferral:
      return "two_stage_deferral";
    case LossKind::kSurrogateSingle:
      return "surrogate_single";
    case LossKind::kSurrogateMae:
      return "surrogate_mae";
    case LossKind::kBaselineVerma:
      return "baseline_verma";
    case LossKind::kBaselineMao:
      return "baseline_mao";
    case LossKind::kTwoStagePhi:
      return "two_stage_phi";
    case LossKind::kTwoStagePsi:
      return "two_stage_psi";
  }
  return "?";
}

LossSpec LossSpec::Make(LossKind kind, double q, PhiKind phi) {
  LossSpec spec;
  spec.kind = kind;
  spec.psi.q = q;
  spec.phi.kind = phi;
  if (kind == LossKind::kSurrogateMae) spec.psi.q = 1.0;
  if (kind == LossKind::kBaselineVerma) spec.psi.q = 0.0;
  spec.psi.Validate();
  return spec;
}

LossSpec LossSpec::FromName(const std::string& name, double q, PhiKind phi) {
  for (LossKind kind :
       {LossKind::kDeferral, LossKind::kTwoStageDeferral,
        LossKind::kSurrogateSingle, LossKind::kSurrogateMae,
        LossKind::kBaselineVerma, LossKind::kBaselineMao,
        LossKind::kTwoStagePhi, LossKind::kTwoStagePsi}) {
    LossSpec probe;
    probe.kind = kind;
    if (probe.name() == name) return Make(kind, q, phi);
  }
  throw Error("unknown loss '" + name + "'");
}

double Evaluate(const LossSpec& loss, std::span<const double> scores, int y,
                std::span<const double> costs, const ProblemShape& shape) {
  switch (loss.kind) {
    case LossKind::kDeferral:
      return DeferralLoss(scores, y, costs, shape);
    case LossKind::kTwoStageDeferral:
      return TwoStageDeferralLoss(scores, costs);
    case LossKind::kSurrogateSingle:
      return SurrogateSingle(scores, y, costs, shape, loss.psi);
    case LossKind::kSurrogateMae:
      return SurrogateMae(scores, y, costs, shape);
    case LossKind::kBaselineVerma:
      return BaselineVerma(scores, y, costs, shape, loss.psi.clamp_epsilon);
    case LossKind::kBaselineMao:
      return BaselineMao(scores, y, costs, shape, loss.psi);
    case LossKind::kTwoStagePhi:
      return TwoStageSurrogatePhi(scores, costs, loss.phi);
    case LossKind::kTwoStagePsi:
      return TwoStageSurrogatePsi(scores, costs, loss.psi);
  }
  throw Error("unknown loss kind");
}

std::vector<double> Gradient(const LossSpec& loss,
                             std::span<const double> scores, int y,
                             std::span<const double> costs,
                             const ProblemShape& shape) {
  switch (loss.kind) {
    case LossKind::kDeferral:
    case LossKind::kTwoStageDeferral:
      throw Error("target loss '" + loss.name() + "' has no gradient");
    case LossKind::kSurrogateSingle:
      return SurrogateSingleGrad(scores, y, costs, shape, loss.psi);
    case LossKind::kSurrogateMae:
      return SurrogateSingleGrad(scores, y, costs, shape, PsiSpec{.q = 1.0});
    case LossKind::kBaselineVerma:
      return BaselineVermaGrad(scores, y, costs, shape,
                               loss.psi.clamp_epsilon);
    case LossKind::kBaselineMao:
      return BaselineMaoGrad(scores, y, costs, shape, loss.psi);
    case LossKind::kTwoStagePhi:
      return TwoStageSurrogatePhiGrad(scores, costs, loss.phi);
    case LossKind::kTwoStagePsi:
      return TwoStageSurrogatePsiGrad(scores, costs, loss.psi);
  }
  throw Error("unknown loss kind");
}

double ValueAndGradient(const LossSpec& loss, std::span<const double> scores,
                        int y, std::span<const double> costs,
                        const ProblemShape& shape, std::span<double> grad) {
  if (loss.is_target()) {
    throw Error("target loss '" + loss.name() + "' has no gradient");
  }
  if (grad.size() != scores.size()) {
    throw Error("gradient buffer width does not match the scores");
  }
  switch (loss.kind) {
    case LossKind::kTwoStagePhi:
      CheckTwoExpert(scores, costs);
      return TwoExpertTerms(scores, costs, loss.phi.kind, grad);
    case LossKind::kTwoStagePsi:
      loss.psi.Validate();
      CheckTwoStage(scores, costs);
      return TwoStagePsiTerms(Softmax(scores), costs, loss.psi, grad);
    default:
      break;
  }
  CheckSingle(scores, y, costs, shape);
  switch (loss.kind) {
    case LossKind::kSurrogateSingle:
      loss.psi.Validate();
      return SingleTerms(Softmax(scores), y, costs, shape, loss.psi, grad);
    case LossKind::kSurrogateMae:
      return SingleTerms(Softmax(scores), y, costs, shape, PsiSpec{.q = 1.0},
                         grad);
    case LossKind::kBaselineVerma:
      return MaoTerms(Softmax(scores), y, costs, shape,
                      PsiSpec{.q = 0.0,
                              .clamp_epsilon = loss.psi.clamp_epsilon},
                      grad);
    case LossKind::kBaselineMao:
      loss.psi.Validate();
      return MaoTerms(Softmax(scores), y, costs, shape, loss.psi, grad);
    default:
      break;
  }
  throw Error("unknown loss kind");
}

}  // namespace deferral::losses
