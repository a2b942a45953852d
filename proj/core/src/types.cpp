#include "deferral/types.hpp"

namespace deferral {

const char* ToString(Stage stage) {
  return stage == Stage::kSingle ? "single" : "two";
}

Stage StageFromString(const std::string& name) {
  if (name == "single") return Stage::kSingle;
  if (name == "two") return Stage::kTwo;
  throw Error("unknown stage '" + name + "'");
}

ProblemShape::ProblemShape(int n, int n_e) : n_(n), n_e_(n_e) {
  if (n < 2) throw Error("problem shape requires n >= 2");
  if (n_e < 1) throw Error("problem shape requires n_e >= 1");
}

void PsiSpec::Validate() const {
  if (!(q >= 0.0 && q <= 1.0)) throw Error("invalid psi: q must lie in [0, 1]");
  if (!(clamp_epsilon > 0.0 && clamp_epsilon <= 1e-6)) {
    throw Error("invalid psi: clamp_epsilon must lie in (0, 1e-6]");
  }
}

const char* ToString(PhiKind kind) {
  switch (kind) {
    case PhiKind::kLogistic:
      return "logistic";
    case PhiKind::kExponential:
      return "exponential";
    case PhiKind::kHinge:
      return "hinge";
  }
  return "?";
}

PhiKind PhiKindFromString(const std::string& name) {
  if (name == "logistic") return PhiKind::kLogistic;
  if (name == "exponential") return PhiKind::kExponential;
  if (name == "hinge") return PhiKind::kHinge;
  throw Error("unknown phi kind '" + name + "'");
}

}  // namespace deferral
