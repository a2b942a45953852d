#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace deferral {

/// Raised for every contract violation in the library: bad dimensions,
/// out-of-range labels, invalid loss parameters, unsatisfiable sampler
/// constraints.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Stage { kSingle, kTwo };

const char* ToString(Stage stage);
Stage StageFromString(const std::string& name);

/// Label set [0, n) augmented with one deferral action per expert.
/// Action a < n predicts label a; action n + j defers to expert j.
class ProblemShape {
 public:
  ProblemShape(int n, int n_e);

  int n() const { return n_; }
  int n_e() const { return n_e_; }
  int augmented_size() const { return n_ + n_e_; }

  bool operator==(const ProblemShape&) const = default;

 private:
  int n_;
  int n_e_;
};

/// Selects Psi_q: -log(u) for q == 0 and (1 - u^q) / q for q in (0, 1].
struct PsiSpec {
  double q = 1.0;
  double clamp_epsilon = 1e-12;

  void Validate() const;
};

enum class PhiKind { kLogistic, kExponential, kHinge };

const char* ToString(PhiKind kind);
PhiKind PhiKindFromString(const std::string& name);

/// Decreasing margin loss used by the two-expert two-stage surrogate.
struct PhiSpec {
  PhiKind kind = PhiKind::kLogistic;
};

}  // namespace deferral
