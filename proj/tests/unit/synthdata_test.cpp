#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "deferral/io.hpp"
#include "deferral/synthdata.hpp"
#include "support/reference.hpp"

namespace deferral::synthdata {
namespace {

TEST(Mog, GroundTruthIsPerfect) {
  for (std::uint64_t seed : {0ull, 1ull, 7ull}) {
    MogConfig cfg;
    cfg.samples = 2000;
    cfg.seed = seed;
    const auto sample = GenRealizableMog(cfg);
    EXPECT_EQ(sample.data.rows(), 2000);
    EXPECT_EQ(sample.data.shape.augmented_size(), 6);
    EXPECT_EQ(models::SystemAccuracy(sample.truth, sample.data, Stage::kSingle),
              1.0);
  }
}

TEST(Mog, SameSeedIsByteIdentical) {
  MogConfig cfg;
  cfg.samples = 400;
  cfg.seed = 7;
  const std::string a = io::DatasetToJson(GenRealizableMog(cfg).data).dump();
  const std::string b = io::DatasetToJson(GenRealizableMog(cfg).data).dump();
  EXPECT_EQ(a, b);
  cfg.seed = 8;
  EXPECT_NE(a, io::DatasetToJson(GenRealizableMog(cfg).data).dump());
}

TEST(Mog, DeferralFractionIsNondegenerate) {
  MogConfig cfg;
  cfg.samples = 10000;
  cfg.seed = 3;
  const auto sample = GenRealizableMog(cfg);
  const auto scores = models::ForwardBatch(sample.truth, sample.data.features);
  std::vector<int> chosen(6, 0);
  for (int i = 0; i < scores.rows(); ++i) {
    std::vector<double> row(scores.row(i).data(), scores.row(i).data() + 6);
    ++chosen[ref::FirstArgmax(row)];
  }
  const int deferred = chosen[4] + chosen[5];
  EXPECT_GT(deferred, 0);
  EXPECT_LT(deferred, cfg.samples);
}

TEST(Mog, LabelsAndCostsFollowGroundTruth) {
  MogConfig cfg;
  cfg.samples = 1000;
  const auto sample = GenRealizableMog(cfg);
  const auto scores = models::ForwardBatch(sample.truth, sample.data.features);
  for (int i = 0; i < scores.rows(); ++i) {
    std::vector<double> row(scores.row(i).data(), scores.row(i).data() + 6);
    const int a = ref::FirstArgmax(row);
    if (a < cfg.n) {
      EXPECT_EQ(sample.data.labels[i], a);
      EXPECT_EQ(sample.data.costs.row(i).sum(), 2.0);
    } else {
      EXPECT_EQ(sample.data.costs(i, a - cfg.n), 0.0);
      EXPECT_EQ(sample.data.costs.row(i).sum(), 1.0);
    }
  }
}

TEST(Mog, FreshSamplesShareTheDistribution) {
  MogConfig cfg;
  cfg.seed = 5;
  const auto dist = MakeMogDistribution(cfg);
  const auto test = SampleMog(dist, 3000, rng::Stream(1).Derive("test"));
  EXPECT_EQ(models::SystemAccuracy(dist.h_star, test, Stage::kSingle), 1.0);
}

TEST(Mog, ValidateRejectsZeroSamples) {
  MogConfig cfg;
  cfg.samples = 0;
  EXPECT_THROW(cfg.Validate(), Error);
  EXPECT_THROW(GenRealizableMog(cfg), Error);
}

TEST(ClassRangeExperts, CostsFollowRanges) {
  const ClassRangeExperts experts(10, SplitRanges(10, {0.3, 0.3, 0.4}), 1);
  for (std::uint64_t draw = 0; draw < 50; ++draw) {
    for (int y = 0; y < 10; ++y) {
      const auto c = experts.Costs(y, draw);
      const int free = static_cast<int>(std::count(c.begin(), c.end(), 0.0));
      EXPECT_EQ(free, 1) << "label " << y;
      const int owner = y < 3 ? 0 : (y < 6 ? 1 : 2);
      EXPECT_EQ(c[owner], 0.0);
      for (int j = 0; j < 3; ++j) {
        if (j == owner) continue;
        const int p = experts.Predict(j, y, draw);
        EXPECT_NE(p, y);
        EXPECT_EQ(c[j], 1.0);
      }
    }
  }
}

TEST(ClassRangeExperts, RejectsEmptyRange) {
  EXPECT_THROW(ClassRangeExperts(5, ExpertRangeSpec{{{2, 2}}}, 0), Error);
  EXPECT_THROW(ClassRangeExperts(5, ExpertRangeSpec{{{0, 6}}}, 0), Error);
}

TEST(TwoStage, GroundTruthAndPremise) {
  for (int ne : {2, 4}) {
    TwoStageConfig cfg;
    cfg.n_e = ne;
    cfg.samples = 1500;
    const auto sample = GenRealizableTwoStage(cfg);
    EXPECT_EQ(models::SystemAccuracy(sample.truth, sample.data, Stage::kTwo),
              1.0);
    for (int i = 0; i < sample.data.rows(); ++i) {
      const auto c = sample.data.costs.row(i);
      EXPECT_LE((c.array() == 0.0).count(), 1);
      for (int j = 0; j < ne; ++j) {
        EXPECT_GE(c.sum() - c(j), ne - 2.0);
      }
    }
  }
  TwoStageConfig bad;
  bad.n_e = 1;
  EXPECT_THROW(GenRealizableTwoStage(bad), Error);
}

TEST(RandomTask, Deterministic) {
  TaskSamplerConfig cfg;
  const auto a = io::TaskToJson(GenRandomDiscreteTask(42, cfg)).dump();
  EXPECT_EQ(a, io::TaskToJson(GenRandomDiscreteTask(42, cfg)).dump());
  EXPECT_NE(a, io::TaskToJson(GenRandomDiscreteTask(43, cfg)).dump());
}

TEST(RandomTask, RespectsRangesAndSimplex) {
  TaskSamplerConfig cfg;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto task = GenRandomDiscreteTask(seed, cfg);
    EXPECT_GE(task.shape.n(), 2);
    EXPECT_LE(task.shape.n(), 4);
    EXPECT_LE(task.shape.n_e(), 3);
    EXPECT_LE(task.size(), 6);
    EXPECT_NEAR(std::accumulate(task.mu.begin(), task.mu.end(), 0.0), 1.0,
                1e-12);
    for (const auto& p : task.conditionals) {
      EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
    }
    EXPECT_NO_THROW(task.Validate());
  }
}

TEST(RandomTask, PremiseConstraint) {
  TaskSamplerConfig cfg;
  cfg.ne_min = 2;
  cfg.ne_max = 4;
  cfg.constraint = TaskConstraint::kTheorem7Premise;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto task = GenRandomDiscreteTask(seed, cfg);
    EXPECT_TRUE(oracles::TwoStagePremiseHolds(task));
    EXPECT_NO_THROW(oracles::CheckTwoStagePremise(task));
  }
}

TEST(RandomTask, PositiveMarginAllowsNoiseFit) {
  for (Stage stage : {Stage::kSingle, Stage::kTwo}) {
    TaskSamplerConfig cfg;
    cfg.constraint = TaskConstraint::kPositiveMargin;
    cfg.margin_stage = stage;
    if (stage == Stage::kTwo) cfg.ne_min = 2;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const auto task = GenRandomDiscreteTask(seed, cfg);
      const auto margins = oracles::MinimalMargin(task, stage);
      for (double m : margins) EXPECT_GE(m, 1e-3);
      EXPECT_NO_THROW(oracles::FitTsybakovB(margins, task.mu, 0.5));
    }
  }
}

TEST(RandomTask, UnsatisfiableConstraintThrows) {
  TaskSamplerConfig cfg;
  cfg.constraint = TaskConstraint::kPositiveMargin;
  cfg.min_margin = 0.99;
  cfg.k_min = cfg.k_max = 6;
  try {
    GenRandomDiscreteTask(0, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "task constraint unsatisfiable after 10000 resamples");
  }
}

TEST(RandomTask, ConfigValidation) {
  TaskSamplerConfig cfg;
  cfg.n_max = 1;
  EXPECT_THROW(cfg.Validate(), Error);
  cfg = {};
  cfg.constraint = TaskConstraint::kTheorem7Premise;
  cfg.ne_min = 1;
  EXPECT_THROW(cfg.Validate(), Error);
  EXPECT_EQ(TaskConstraintFromString("positive_margin"),
            TaskConstraint::kPositiveMargin);
  EXPECT_THROW(TaskConstraintFromString("strict"), Error);
}

TEST(FlatSimplex, SumsToOne) {
  rng::Stream rs(6);
  for (int i = 0; i < 1000; ++i) {
    const auto p = FlatSimplex(rs.Between(1, 9), rs);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
    for (double v : p) EXPECT_GE(v, 0.0);
  }
}

}  // namespace
}  // namespace deferral::synthdata
