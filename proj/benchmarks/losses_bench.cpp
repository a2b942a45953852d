#include <vector>

#include <benchmark/benchmark.h>

#include "deferral/losses.hpp"
#include "deferral/rng.hpp"

namespace {

using deferral::ProblemShape;
using deferral::losses::LossKind;
using deferral::losses::LossSpec;

struct Batch {
  ProblemShape shape{10, 3};
  std::vector<std::vector<double>> scores;
  std::vector<std::vector<double>> costs;
  std::vector<int> labels;
};

Batch MakeBatch(int rows, bool two_stage) {
  Batch b;
  if (two_stage) b.shape = ProblemShape(3, 3);
  deferral::rng::Stream rs(17);
  const int width = two_stage ? b.shape.n_e() : b.shape.augmented_size();
  for (int i = 0; i < rows; ++i) {
    std::vector<double> s(width);
    for (double& v : s) v = rs.Normal();
    std::vector<double> c(b.shape.n_e());
    for (double& v : c) v = rs.Uniform();
    b.scores.push_back(std::move(s));
    b.costs.push_back(std::move(c));
    b.labels.push_back(rs.Between(0, b.shape.n() - 1));
  }
  return b;
}

void BM_ValueAndGradient(benchmark::State& state, LossKind kind, double q) {
  const bool two_stage = kind == LossKind::kTwoStagePsi;
  const Batch b = MakeBatch(1024, two_stage);
  const LossSpec loss = LossSpec::Make(kind, q);
  std::vector<double> grad(b.scores[0].size());
  for (auto _ : state) {
    double total = 0.0;
    for (std::size_t i = 0; i < b.scores.size(); ++i) {
      total += deferral::losses::ValueAndGradient(loss, b.scores[i], b.labels[i],
                                                  b.costs[i], b.shape, grad);
    }
    benchmark::DoNotOptimize(total);
  }
  state.SetItemsProcessed(state.iterations() * 1024);
}

void BM_DeferralLoss(benchmark::State& state) {
  const Batch b = MakeBatch(1024, false);
  for (auto _ : state) {
    double total = 0.0;
    for (std::size_t i = 0; i < b.scores.size(); ++i) {
      total += deferral::losses::DeferralLoss(b.scores[i], b.labels[i],
                                              b.costs[i], b.shape);
    }
    benchmark::DoNotOptimize(total);
  }
  state.SetItemsProcessed(state.iterations() * 1024);
}

}  // namespace

BENCHMARK_CAPTURE(BM_ValueAndGradient, surrogate_q07, LossKind::kSurrogateSingle, 0.7);
BENCHMARK_CAPTURE(BM_ValueAndGradient, surrogate_q1, LossKind::kSurrogateSingle, 1.0);
BENCHMARK_CAPTURE(BM_ValueAndGradient, verma, LossKind::kBaselineVerma, 0.0);
BENCHMARK_CAPTURE(BM_ValueAndGradient, two_stage_psi_q0, LossKind::kTwoStagePsi, 0.0);
BENCHMARK(BM_DeferralLoss);

BENCHMARK_MAIN();
