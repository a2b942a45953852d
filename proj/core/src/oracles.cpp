#include "deferral/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>

namespace deferral::oracles {
namespace {

constexpr const char* kPremiseMessage = "assumption Σ c ≥ n_e − 2 fails";

int ArgmaxOf(const std::vector<double>& v) {
  return losses::Argmax(std::span<const double>(v));
}

int ArgminOf(const std::vector<double>& v) {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] < v[best]) best = static_cast<int>(i);
  }
  return best;
}

TabularHypothesis OneHot(int rows, int width, const std::vector<int>& actions) {
  TabularHypothesis h;
  h.scores.assign(rows, std::vector<double>(width, 0.0));
  for (int k = 0; k < rows; ++k) h.scores[k][actions[k]] = 1.0;
  return h;
}

void CheckWidth(const DiscreteTask& task, const TabularHypothesis& h,
                int width) {
  if (static_cast<int>(h.scores.size()) != task.size()) {
    throw Error("hypothesis has " + std::to_string(h.scores.size()) +
                " rows for a task with " + std::to_string(task.size()) +
                " points");
  }
  for (const auto& row : h.scores) {
    if (static_cast<int>(row.size()) != width) {
      throw Error("hypothesis width " + std::to_string(row.size()) +
                  " does not match expected width " + std::to_string(width));
    }
  }
}

int WidthFor(const DiscreteTask& task, Stage stage) {
  return stage == Stage::kSingle ? task.shape.augmented_size()
                                 : task.shape.n_e();
}

// sum_y p(y|x) (sum_{j' != j} c_j' - n_e + 2), clamped at 0 against rounding.
std::vector<double> TwoStageWeights(const DiscreteTask& task, int k) {
  const int n_e = task.shape.n_e();
  std::vector<double> weights(n_e, 0.0);
  for (int y = 0; y < task.shape.n(); ++y) {
    const double p = task.conditionals[k][y];
    if (p == 0.0) continue;
    const auto c = task.Costs(k, y);
    const double total = std::accumulate(c.begin(), c.end(), 0.0);
    for (int j = 0; j < n_e; ++j) weights[j] += p * (total - c[j] - n_e + 2.0);
  }
  for (double& w : weights) {
    if (w < 0.0) {
      if (w < -1e-12) throw Error(kPremiseMessage);
      w = 0.0;
    }
  }
  return weights;
}

double TwoStagePsiMin(const std::vector<double>& weights, double q) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (total == 0.0) return 0.0;
  if (q == 1.0) {
    return total - *std::max_element(weights.begin(), weights.end());
  }
  if (q == 0.0) {
    double value = 0.0;
    for (double w : weights) {
      if (w > 0.0) value -= w * std::log(w / total);
    }
    return value;
  }
  // Stationarity gives S_j proportional to w_j^(1 / (1 - q)).
  const double power = 1.0 / (1.0 - q);
  const double top = *std::max_element(weights.begin(), weights.end());
  std::vector<double> share(weights.size());
  double norm = 0.0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    share[j] = std::pow(weights[j] / top, power);
    norm += share[j];
  }
  double value = 0.0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    value += weights[j] * (1.0 - std::pow(share[j] / norm, q)) / q;
  }
  return value;
}

template <typename F>
double GoldenSectionMin(F f, double lo, double hi, double tol) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo;
  double b = hi;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = f(x1);
  double f2 = f(x2);
  while (b - a > tol) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = f(x2);
    }
  }
  return std::min({f1, f2, f(0.5 * (a + b))});
}

double TwoExpertPhiMin(const DiscreteTask& task, int k, PhiKind phi) {
  if (task.shape.n_e() != 2) throw Error("two-expert surrogate requires n_e = 2");
  const std::vector<double> e = ExpectedCosts(task, k);
  const double a = e[0];
  const double b = e[1];
  if (a == 0.0 || b == 0.0) return 0.0;
  // Conditional error as a function of the margin m = r_1 - r_2.
  auto f = [&](double m) {
    return a * losses::Phi(-m, phi) + b * losses::Phi(m, phi);
  };
  return GoldenSectionMin(f, -100.0, 100.0, 1e-10);
}

// Single-stage q = 1 conditional error at softmax output s, where every Psi
// term is affine.
double SingleQ1AtSimplex(const DiscreteTask& task, int k,
                         losses::LossKind kind, const std::vector<double>& s) {
  const int n = task.shape.n();
  const int n_e = task.shape.n_e();
  double value = 0.0;
  for (int y = 0; y < n; ++y) {
    const double p = task.conditionals[k][y];
    if (p == 0.0) continue;
    const auto c = task.Costs(k, y);
    double term = 0.0;
    if (kind == losses::LossKind::kBaselineMao) {
      term = 1.0 - s[y];
      for (int j = 0; j < n_e; ++j) term += (1.0 - c[j]) * (1.0 - s[n + j]);
    } else {
      const double total = std::accumulate(c.begin(), c.end(), 0.0);
      term = (total + 1.0 - n_e) * (1.0 - s[y]);
      for (int j = 0; j < n_e; ++j) {
        term += (1.0 - c[j]) * (1.0 - s[y] - s[n + j]);
      }
    }
    value += p * term;
  }
  return value;
}

double SingleQ1Min(const DiscreteTask& task, int k, losses::LossKind kind) {
  const int width = task.shape.augmented_size();
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> vertex(width, 0.0);
  for (int a = 0; a < width; ++a) {
    vertex[a] = 1.0;
    best = std::min(best, SingleQ1AtSimplex(task, k, kind, vertex));
    vertex[a] = 0.0;
  }
  return best;
}

bool OnSupport(const DiscreteTask& task, int k, int y) {
  return task.mu[k] > 0.0 && task.conditionals[k][y] > 0.0;
}

losses::LossSpec TargetFor(const losses::LossSpec& loss) {
  return losses::LossSpec::Make(loss.stage() == Stage::kSingle
                                    ? losses::LossKind::kDeferral
                                    : losses::LossKind::kTwoStageDeferral);
}

}  // namespace

void DiscreteTask::Validate() const {
  const int k_count = size();
  if (k_count < 1) throw Error("task needs at least one point");
  if (static_cast<int>(conditionals.size()) != k_count ||
      static_cast<int>(costs.size()) != k_count) {
    throw Error("task arrays disagree on the number of points");
  }
  double mass = 0.0;
  for (double m : mu) {
    if (!(m >= 0.0)) throw Error("task marginals must be nonnegative");
    mass += m;
  }
  if (std::abs(mass - 1.0) > 1e-12) throw Error("task marginals must sum to 1");
  for (int k = 0; k < k_count; ++k) {
    if (static_cast<int>(conditionals[k].size()) != shape.n()) {
      throw Error("conditional row width does not match n");
    }
    double row = 0.0;
    for (double p : conditionals[k]) {
      if (!(p >= 0.0)) throw Error("conditionals must be nonnegative");
      row += p;
    }
    if (std::abs(row - 1.0) > 1e-12) {
      throw Error("conditional row " + std::to_string(k) + " must sum to 1");
    }
    if (static_cast<int>(costs[k].size()) != shape.n()) {
      throw Error("cost tensor label width does not match n");
    }
    for (const auto& c : costs[k]) {
      if (static_cast<int>(c.size()) != shape.n_e()) {
        throw Error("cost tensor expert width does not match n_e");
      }
      for (double v : c) {
        if (!(v >= 0.0 && v <= 1.0)) throw Error("costs must lie in [0, 1]");
      }
    }
  }
}

int TabularHypothesis::Action(int k) const {
  return losses::Argmax(std::span<const double>(scores.at(k)));
}

std::vector<double> ActionValues(const DiscreteTask& task, int k) {
  const int n = task.shape.n();
  const int n_e = task.shape.n_e();
  std::vector<double> values(n + n_e, 0.0);
  for (int y = 0; y < n; ++y) {
    const double p = task.conditionals[k][y];
    values[y] = p;
    const auto c = task.Costs(k, y);
    for (int j = 0; j < n_e; ++j) values[n + j] += p * (1.0 - c[j]);
  }
  return values;
}

std::vector<double> ExpectedCosts(const DiscreteTask& task, int k) {
  std::vector<double> e(task.shape.n_e(), 0.0);
  for (int y = 0; y < task.shape.n(); ++y) {
    const double p = task.conditionals[k][y];
    const auto c = task.Costs(k, y);
    for (int j = 0; j < task.shape.n_e(); ++j) e[j] += p * c[j];
  }
  return e;
}

double ConditionalRegretDef(const DiscreteTask& task,
                            const TabularHypothesis& h, int k) {
  CheckWidth(task, h, task.shape.augmented_size());
  const std::vector<double> values = ActionValues(task, k);
  const double best = *std::max_element(values.begin(), values.end());
  return best - values[h.Action(k)];
}

double ConditionalRegretTdef(const DiscreteTask& task,
                             const TabularHypothesis& r, int k) {
  CheckWidth(task, r, task.shape.n_e());
  const std::vector<double> e = ExpectedCosts(task, k);
  return e[r.Action(k)] - *std::min_element(e.begin(), e.end());
}

TabularHypothesis BayesDeferral(const DiscreteTask& task) {
  std::vector<int> actions(task.size());
  for (int k = 0; k < task.size(); ++k) {
    actions[k] = ArgmaxOf(ActionValues(task, k));
  }
  return OneHot(task.size(), task.shape.augmented_size(), actions);
}

TabularHypothesis BayesTwoStage(const DiscreteTask& task) {
  std::vector<int> actions(task.size());
  for (int k = 0; k < task.size(); ++k) {
    actions[k] = ArgminOf(ExpectedCosts(task, k));
  }
  return OneHot(task.size(), task.shape.n_e(), actions);
}

TabularHypothesis Bayes(const DiscreteTask& task, Stage stage) {
  return stage == Stage::kSingle ? BayesDeferral(task) : BayesTwoStage(task);
}

double ConditionalError(const DiscreteTask& task, int k,
                        const losses::LossSpec& loss,
                        std::span<const double> scores) {
  double value = 0.0;
  for (int y = 0; y < task.shape.n(); ++y) {
    const double p = task.conditionals[k][y];
    if (p == 0.0) continue;
    value += p * losses::Evaluate(loss, scores, y, task.Costs(k, y), task.shape);
  }
  return value;
}

double ConditionalMinSurrogate(const DiscreteTask& task, int k,
                               const losses::LossSpec& loss) {
  using losses::LossKind;
  switch (loss.kind) {
    case LossKind::kDeferral: {
      const std::vector<double> values = ActionValues(task, k);
      return 1.0 - *std::max_element(values.begin(), values.end());
    }
    case LossKind::kTwoStageDeferral: {
      const std::vector<double> e = ExpectedCosts(task, k);
      return *std::min_element(e.begin(), e.end());
    }
    case LossKind::kSurrogateMae:
      return SingleQ1Min(task, k, LossKind::kSurrogateSingle);
    case LossKind::kSurrogateSingle:
    case LossKind::kBaselineMao:
      if (loss.psi.q != 1.0) break;
      return SingleQ1Min(task, k, loss.kind);
    case LossKind::kTwoStagePsi:
      if (task.shape.n_e() < 2) break;
      return TwoStagePsiMin(TwoStageWeights(task, k), loss.psi.q);
    case LossKind::kTwoStagePhi:
      return TwoExpertPhiMin(task, k, loss.phi.kind);
    default:
      break;
  }
  throw Error("unsupported loss for conditional minimum: " + loss.name());
}

double ConditionalRegret(const DiscreteTask& task, const TabularHypothesis& h,
                         int k, const losses::LossSpec& loss) {
  return ConditionalError(task, k, loss, h.scores.at(k)) -
         ConditionalMinSurrogate(task, k, loss);
}

double ExpectedLoss(const DiscreteTask& task, const TabularHypothesis& h,
                    const losses::LossSpec& loss) {
  CheckWidth(task, h, WidthFor(task, loss.stage()));
  double value = 0.0;
  for (int k = 0; k < task.size(); ++k) {
    if (task.mu[k] == 0.0) continue;
    value += task.mu[k] * ConditionalError(task, k, loss, h.scores[k]);
  }
  return value;
}

double EmpiricalExcess(const DiscreteTask& task, const TabularHypothesis& h,
                       const losses::LossSpec& loss) {
  CheckWidth(task, h, WidthFor(task, loss.stage()));
  double value = 0.0;
  for (int k = 0; k < task.size(); ++k) {
    if (task.mu[k] == 0.0) continue;
    value += task.mu[k] * ConditionalRegret(task, h, k, loss);
  }
  return value;
}

double MinimizabilityGap(const DiscreteTask& task, const losses::LossSpec& loss,
                         HypothesisClass cls,
                         std::span<const TabularHypothesis> candidates) {
  if (cls == HypothesisClass::kTabularAll) {
    // The tabular class can pick the conditional minimizer independently at
    // every point, so its best error is the expected pointwise infimum.
    double best_in_class = 0.0;
    double expected_inf = 0.0;
    for (int k = 0; k < task.size(); ++k) {
      const double m = ConditionalMinSurrogate(task, k, loss);
      best_in_class += task.mu[k] * m;
      expected_inf += task.mu[k] * m;
    }
    return best_in_class - expected_inf;
  }
  if (candidates.empty()) throw Error("empty candidate set");
  double best_in_class = std::numeric_limits<double>::infinity();
  for (const auto& h : candidates) {
    best_in_class = std::min(best_in_class, ExpectedLoss(task, h, loss));
  }
  double expected_inf = 0.0;
  for (int k = 0; k < task.size(); ++k) {
    double inf = std::numeric_limits<double>::infinity();
    for (const auto& h : candidates) {
      inf = std::min(inf, ConditionalError(task, k, loss, h.scores[k]));
    }
    expected_inf += task.mu[k] * inf;
  }
  return best_in_class - expected_inf;
}

// ---------------------------------------------------------------------------

const char* ToString(Verdict verdict) {
  switch (verdict) {
    case Verdict::kOk:
      return "ok";
    case Verdict::kViolation:
      return "violation";
    case Verdict::kPremiseUnmet:
      return "premise_unmet";
  }
  return "?";
}

int RegretReport::violations() const {
  return static_cast<int>(std::count_if(rows.begin(), rows.end(), [](auto& r) {
    return r.verdict == Verdict::kViolation;
  }));
}

double RegretReport::max_negative_slack() const {
  double worst = 0.0;
  for (const auto& row : rows) {
    if (row.verdict != Verdict::kPremiseUnmet) worst = std::min(worst, row.slack);
  }
  return worst;
}

void AddRow(RegretReport& report, std::string point, double lhs, double rhs) {
  ReportRow row;
  row.point = std::move(point);
  row.lhs = lhs;
  row.rhs = rhs;
  row.slack = rhs - lhs;
  row.verdict = row.slack >= -kSlackFloor ? Verdict::kOk : Verdict::kViolation;
  report.rows.push_back(std::move(row));
}

std::string ReportCsvRows(const std::string& task_id,
                          const RegretReport& report) {
  std::string out;
  char buf[128];
  for (const auto& row : report.rows) {
    std::snprintf(buf, sizeof(buf), ",%.17g,%.17g,%.17g,", row.lhs, row.rhs,
                  row.slack);
    out += task_id;
    out += ',';
    out += row.point;
    out += buf;
    out += ToString(row.verdict);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------

RegretReport VerifyBoundSingleMae(const DiscreteTask& task,
                                  const TabularHypothesis& h) {
  CheckWidth(task, h, task.shape.augmented_size());
  const auto mae = losses::LossSpec::Make(losses::LossKind::kSurrogateMae);
  const double factor = task.shape.augmented_size();
  RegretReport report;
  for (int k = 0; k < task.size(); ++k) {
    const double d_def = ConditionalRegretDef(task, h, k);
    const double d_mae = ConditionalRegret(task, h, k, mae);
    report.target_regret.push_back(d_def);
    report.surrogate_regret.push_back(d_mae);
    report.excess_target += task.mu[k] * d_def;
    report.excess_surrogate += task.mu[k] * d_mae;
    AddRow(report, std::to_string(k), d_def, factor * d_mae);
  }
  AddRow(report, "excess", report.excess_target,
         factor * report.excess_surrogate);
  return report;
}

CostBounds ComputeCostBounds(const DiscreteTask& task) {
  const int n_e = task.shape.n_e();
  CostBounds bounds{std::vector<double>(n_e, 1.0),
                    std::vector<double>(n_e, 0.0)};
  bool any = false;
  for (int k = 0; k < task.size(); ++k) {
    for (int y = 0; y < task.shape.n(); ++y) {
      if (!OnSupport(task, k, y)) continue;
      any = true;
      const auto c = task.Costs(k, y);
      for (int j = 0; j < n_e; ++j) {
        bounds.lower[j] = std::min(bounds.lower[j], c[j]);
        bounds.upper[j] = std::max(bounds.upper[j], c[j]);
      }
    }
  }
  if (!any) throw Error("task has empty support");
  return bounds;
}

bool TwoStagePremiseHolds(const DiscreteTask& task) {
  const int n_e = task.shape.n_e();
  for (int k = 0; k < task.size(); ++k) {
    for (int y = 0; y < task.shape.n(); ++y) {
      if (!OnSupport(task, k, y)) continue;
      const auto c = task.Costs(k, y);
      const double total = std::accumulate(c.begin(), c.end(), 0.0);
      for (int j = 0; j < n_e; ++j) {
        if (total - c[j] < n_e - 2.0 - 1e-12) return false;
      }
    }
  }
  return true;
}

void CheckTwoStagePremise(const DiscreteTask& task) {
  if (!TwoStagePremiseHolds(task)) throw Error(kPremiseMessage);
}

double TwoStageCbar(const DiscreteTask& task) {
  const CostBounds bounds = ComputeCostBounds(task);
  const int n_e = task.shape.n_e();
  const double top = *std::max_element(bounds.upper.begin(), bounds.upper.end());
  return (n_e - 1) * top - n_e + 2.0;
}

double TwoStageGamma(double t, double q, int n_e, double cbar) {
  t = std::max(t, 0.0);
  if (q == 1.0) return n_e * t;
  const double scale = q == 0.0 ? 1.0 : std::sqrt(std::pow(n_e, q));
  return 2.0 * scale * std::sqrt(std::max(cbar, 0.0)) * std::sqrt(t);
}

RegretReport VerifyBoundTwoStage(const DiscreteTask& task,
                                 const TabularHypothesis& r, double q) {
  if (task.shape.n_e() < 2) throw Error("two-stage deferral requires n_e >= 2");
  CheckWidth(task, r, task.shape.n_e());
  CheckTwoStagePremise(task);
  const auto psi = losses::LossSpec::Make(losses::LossKind::kTwoStagePsi, q);
  const double cbar = TwoStageCbar(task);
  const int n_e = task.shape.n_e();
  RegretReport report;
  for (int k = 0; k < task.size(); ++k) {
    const double d_tdef = ConditionalRegretTdef(task, r, k);
    const double d_psi = ConditionalRegret(task, r, k, psi);
    report.target_regret.push_back(d_tdef);
    report.surrogate_regret.push_back(d_psi);
    report.excess_target += task.mu[k] * d_tdef;
    report.excess_surrogate += task.mu[k] * d_psi;
    AddRow(report, std::to_string(k), d_tdef, TwoStageGamma(d_psi, q, n_e, cbar));
  }
  AddRow(report, "excess", report.excess_target,
         TwoStageGamma(report.excess_surrogate, q, n_e, cbar));
  return report;
}

RegretReport VerifyBoundTwoExpert(const DiscreteTask& task,
                                  const TabularHypothesis& r, PhiKind phi) {
  if (task.shape.n_e() != 2) throw Error("two-expert bound requires n_e = 2");
  CheckWidth(task, r, 2);
  const auto loss = losses::LossSpec::Make(losses::LossKind::kTwoStagePhi, 1.0, phi);
  const CostBounds bounds = ComputeCostBounds(task);
  const double upper = bounds.upper[0] + bounds.upper[1];
  const double lower = bounds.lower[0] + bounds.lower[1];
  auto bound = [&](double t) {
    t = std::max(t, 0.0);
    if (phi == PhiKind::kHinge) return t;
    if (lower == 0.0) return std::numeric_limits<double>::infinity();
    return upper * std::sqrt(2.0 * t / lower);
  };
  RegretReport report;
  for (int k = 0; k < task.size(); ++k) {
    const double d_tdef = ConditionalRegretTdef(task, r, k);
    const double d_phi = ConditionalRegret(task, r, k, loss);
    report.target_regret.push_back(d_tdef);
    report.surrogate_regret.push_back(d_phi);
    report.excess_target += task.mu[k] * d_tdef;
    report.excess_surrogate += task.mu[k] * d_phi;
    AddRow(report, std::to_string(k), d_tdef, bound(d_phi));
  }
  AddRow(report, "excess", report.excess_target, bound(report.excess_surrogate));
  return report;
}

// ---------------------------------------------------------------------------

std::vector<double> MinimalMargin(const DiscreteTask& task, Stage stage) {
  std::vector<double> margins(task.size());
  for (int k = 0; k < task.size(); ++k) {
    std::vector<double> v;
    if (stage == Stage::kSingle) {
      v = ActionValues(task, k);
      std::sort(v.begin(), v.end(), std::greater<>());
    } else {
      if (task.shape.n_e() < 2) {
        throw Error("two-stage margin requires n_e >= 2");
      }
      v = ExpectedCosts(task, k);
      std::sort(v.begin(), v.end());
    }
    margins[k] = std::abs(v[1] - v[0]);
  }
  return margins;
}

bool NoiseProfile::Holds(std::span<const double> marginals) const {
  const double power = alpha / (1.0 - alpha);
  for (double t : margins) {
    double mass = 0.0;
    for (std::size_t k = 0; k < margins.size(); ++k) {
      if (margins[k] <= t) mass += marginals[k];
    }
    if (mass > B * std::pow(t, power) * (1.0 + 1e-12)) return false;
  }
  return true;
}

NoiseProfile FitTsybakovB(std::span<const double> margins,
                          std::span<const double> marginals, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("alpha must lie in (0, 1)");
  if (margins.size() != marginals.size()) {
    throw Error("margins and marginals differ in length");
  }
  std::map<double, double> mass_at;
  for (std::size_t k = 0; k < margins.size(); ++k) {
    if (marginals[k] == 0.0) continue;
    if (!(margins[k] > 0.0)) throw Error("zero margin");
    mass_at[margins[k]] += marginals[k];
  }
  if (mass_at.empty()) throw Error("no margin carries positive mass");
  const double power = alpha / (1.0 - alpha);
  NoiseProfile profile;
  profile.alpha = alpha;
  profile.B = 0.0;
  double cumulative = 0.0;
  for (const auto& [t, mass] : mass_at) {
    cumulative += mass;
    profile.B = std::max(profile.B, cumulative / std::pow(t, power));
  }
  profile.c_const = std::pow(profile.B, 1.0 - alpha) / std::pow(alpha, alpha);
  profile.margins.assign(margins.begin(), margins.end());
  return profile;
}

RegretReport VerifyLemmaNoise(const DiscreteTask& task,
                              const TabularHypothesis& h,
                              const NoiseProfile& profile, Stage stage) {
  CheckWidth(task, h, WidthFor(task, stage));
  if (static_cast<int>(profile.margins.size()) != task.size()) {
    throw Error("noise profile does not match the task");
  }
  const TabularHypothesis best = Bayes(task, stage);
  RegretReport report;
  double disagree = 0.0;
  double weighted_margin = 0.0;
  for (int k = 0; k < task.size(); ++k) {
    const double regret = stage == Stage::kSingle
                              ? ConditionalRegretDef(task, h, k)
                              : ConditionalRegretTdef(task, h, k);
    report.target_regret.push_back(regret);
    report.excess_target += task.mu[k] * regret;
    if (h.Action(k) != best.Action(k)) {
      disagree += task.mu[k];
      weighted_margin += task.mu[k] * profile.margins[k];
    }
  }
  const double c = profile.c_const;
  const double middle = c * std::pow(weighted_margin, profile.alpha);
  AddRow(report, "disagreement", disagree, middle);
  AddRow(report, "margin_mass", middle,
         c * std::pow(std::max(report.excess_target, 0.0), profile.alpha));
  return report;
}

const char* ToString(EnhancedMode mode) {
  return mode == EnhancedMode::kTheoremMulti ? "theorem_multi" : "theorem_mm";
}

RegretReport VerifyEnhancedBound(const DiscreteTask& task,
                                 const TabularHypothesis& h,
                                 const losses::LossSpec& loss, double s,
                                 EnhancedMode mode,
                                 const std::optional<NoiseProfile>& profile) {
  if (!(s >= 1.0)) throw Error("enhanced bound requires s >= 1");
  if (loss.is_target()) throw Error("enhanced bound needs a surrogate loss");
  const Stage stage = loss.stage();
  CheckWidth(task, h, WidthFor(task, stage));
  if (mode == EnhancedMode::kTheoremMm) {
    if (!profile) throw Error("theorem_mm requires a noise profile");
    if (static_cast<int>(profile->margins.size()) != task.size()) {
      throw Error("noise profile does not match the task");
    }
  }
  const losses::LossSpec target = TargetFor(loss);
  const TabularHypothesis best = Bayes(task, stage);
  RegretReport report;
  double disagree = 0.0;
  for (int k = 0; k < task.size(); ++k) {
    const double d_target = ConditionalRegret(task, h, k, target);
    const double d_loss = ConditionalRegret(task, h, k, loss);
    report.target_regret.push_back(d_target);
    report.surrogate_regret.push_back(d_loss);
    report.excess_target += task.mu[k] * d_target;
    report.excess_surrogate += task.mu[k] * d_loss;
    if (h.Action(k) != best.Action(k)) disagree += task.mu[k];
    const double premise = std::pow(std::max(d_loss, 0.0), 1.0 / s);
    if (d_target > premise + kSlackFloor) {
      report.premise_met = false;
      report.rows.push_back({std::to_string(k), d_target, premise,
                             premise - d_target, Verdict::kPremiseUnmet});
    }
  }
  if (!report.premise_met) return report;

  const double excess_loss = std::max(report.excess_surrogate, 0.0);
  double rhs = 0.0;
  if (mode == EnhancedMode::kTheoremMulti) {
    rhs = std::pow(disagree, 1.0 - 1.0 / s) * std::pow(excess_loss, 1.0 / s);
  } else {
    const double exponent = 1.0 / (s - profile->alpha * (s - 1.0));
    rhs = std::pow(profile->c_const, (s - 1.0) * exponent) *
          std::pow(excess_loss, exponent);
  }
  AddRow(report, ToString(mode), report.excess_target, rhs);
  return report;
}

// ---------------------------------------------------------------------------

TabularHypothesis TabularGradientDescent(const DiscreteTask& task,
                                         const losses::LossSpec& loss,
                                         TabularHypothesis init,
                                         const TabularDescentConfig& config) {
  if (loss.is_target()) throw Error("cannot descend on a target loss");
  CheckWidth(task, init, WidthFor(task, loss.stage()));
  for (int step = 0; step < config.steps; ++step) {
    for (int k = 0; k < task.size(); ++k) {
      if (task.mu[k] == 0.0) continue;
      auto& scores = init.scores[k];
      std::vector<double> grad(scores.size(), 0.0);
      for (int y = 0; y < task.shape.n(); ++y) {
        const double p = task.conditionals[k][y];
        if (p == 0.0) continue;
        const auto g = losses::Gradient(loss, scores, y, task.Costs(k, y),
                                        task.shape);
        for (std::size_t i = 0; i < g.size(); ++i) grad[i] += p * g[i];
      }
      for (std::size_t i = 0; i < scores.size(); ++i) {
        scores[i] -= config.learning_rate * task.mu[k] * grad[i];
      }
    }
  }
  return init;
}

}  // namespace deferral::oracles
