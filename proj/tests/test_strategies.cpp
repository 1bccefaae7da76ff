#include <gtest/gtest.h>

#include <cmath>

#include "eshotgun/strategies.hpp"
#include "test_util.hpp"

using namespace eshotgun;

namespace {

// Small inner budgets keep these tests quick; strategy logic does not depend on them.
InnerSearchSettings quick() {
  InnerSearchSettings s;
  s.evaluations_per_dim = 2000;
  s.presample_points = 500;
  s.nsga2_generations = 20;
  return s;
}

GpModel model_1d(int seed) {
  Rng rng(seed);
  return GpModel::fit(testutil::random_dataset(6, 1, rng), Box::unit(1), {}, rng);
}

// A model whose posterior at `x` has exactly the requested mean and variance:
// a single datum far away leaves the prior, which we shift via the output scaling.
GpModel prior_model(int d, double mean, double variance) {
  Matrix x = Matrix::Constant(1, d, 1e6);
  Scaling s = Scaling::identity(d);
  s.output_offset = mean;
  return GpModel(Dataset(x, Vector::Constant(1, mean)), GpHyperparams{0.1, variance, 1e-6}, s);
}

void expect_valid(const BatchProposal& b, const Box& box, int q) {
  ASSERT_EQ(b.size(), q);
  for (int i = 0; i < q; ++i) {
    EXPECT_TRUE(box.contains(b.locations.row(i).transpose(), 0.0)) << "row " << i;
    for (int j = i + 1; j < q; ++j) {
      EXPECT_GT((b.locations.row(i) - b.locations.row(j)).norm(), 1e-12 * box.diagonal());
    }
  }
  EXPECT_EQ(b.anchor, Vector(b.locations.row(0).transpose()));
}

}  // namespace

TEST(ShotgunRadius, HandEvaluatedExample) {
  const Box box = Box::unit(1);
  const GpModel m = prior_model(1, 5.0, 0.25);
  const Vector x = Vector::Constant(1, 0.5);
  ASSERT_NEAR(m.posterior(x).mean, 5.0, 1e-12);
  ASSERT_NEAR(m.posterior(x).variance, 0.25, 1e-12);
  EXPECT_NEAR(shotgun_radius(m, x, 3.0, 2.0, 1.0, box), 1.25, 1e-12);
  EXPECT_NEAR(shotgun_radius(m, x, 3.0, 4.0, 1.0, box), 0.625, 1e-12);
  // Variance form of the uncertainty term.
  EXPECT_NEAR(shotgun_radius(m, x, 3.0, 2.0, 1.0, box, RadiusForm::Variance), 1.125, 1e-12);
}

TEST(ShotgunRadius, DegenerateShrinkHitsFloor) {
  const Box box = Box::uniform(2, 0.0, 3.0);
  const GpModel m = prior_model(2, 3.0, 0.25);
  EXPECT_DOUBLE_EQ(shotgun_radius(m, Vector::Constant(2, 1.0), 3.0, 2.0, 0.0, box), 1e-6 * box.diagonal());
}

TEST(ShotgunRadius, MonotoneInSigmaAndLipschitz) {
  const Box box = Box::unit(1);
  const Vector x = Vector::Constant(1, 0.5);
  double prev = 0.0;
  for (double var : {0.0, 0.01, 0.1, 1.0, 4.0}) {
    const double r = shotgun_radius(prior_model(1, 1.0, std::max(var, 1e-12)), x, 0.0, 2.0, 1.0, box);
    EXPECT_GE(r, prev);
    prev = r;
  }
  prev = 1e300;
  for (double lip : {0.1, 1.0, 10.0, 100.0}) {
    const double r = shotgun_radius(prior_model(1, 1.0, 0.5), x, 0.0, lip, 1.0, box);
    EXPECT_LE(r, prev);
    prev = r;
  }
}

TEST(PenalisationRadius, HandEvaluatedExample) {
  const Box box = Box::unit(1);
  const GpModel m = prior_model(1, 5.0, 0.25);
  const Vector x = Vector::Constant(1, 0.5);
  EXPECT_NEAR(penalisation_radius(m, x, 3.0, 2.0, 1.0, box), 1.125, 1e-12);
  // gamma = 0 ignores the variance.
  EXPECT_NEAR(penalisation_radius(m, x, 3.0, 2.0, 0.0, box), 1.0, 1e-12);
  EXPECT_NEAR(penalisation_radius(prior_model(1, 3.0, 9.0), x, 3.0, 2.0, 0.0, box), 1e-6 * box.diagonal(), 1e-18);
}

TEST(Penaliser, SoftAndHardForms) {
  const Vector c = Vector::Zero(2);
  Vector at_r(2);
  at_r << 0.6, 0.8;
  EXPECT_NEAR(penaliser(PenaliserKind::Soft, at_r, c, 1.0), 1.0 - std::exp(-0.5), 1e-15);
  EXPECT_NEAR(penaliser(PenaliserKind::Soft, at_r, c, 1.0), 0.393469, 1e-6);
  EXPECT_EQ(penaliser(PenaliserKind::Hard, c, c, 0.3), 0.0);
  EXPECT_EQ(penaliser(PenaliserKind::Hard, at_r, c, 0.5), 1.0);
  EXPECT_NEAR(penaliser(PenaliserKind::Hard, at_r, c, 2.0), 0.5, 1e-15);
}

TEST(Penaliser, RangeFarFieldAndGradientProperty) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const Vector c = Vector::Random(3);
    const Vector x = Vector::Random(3);
    const double r = 0.05 + uniform01(rng);
    for (auto kind : {PenaliserKind::Soft, PenaliserKind::Hard}) {
      Vector g;
      const double v = penaliser(kind, x, c, r, &g);
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
      EXPECT_NEAR(penaliser(kind, Vector(c + Vector::Constant(3, 1e3)), c, r), 1.0, 1e-12);
      const double dist = (x - c).norm();
      if (kind == PenaliserKind::Hard && std::abs(dist - r) < 1e-4) continue;
      for (int k = 0; k < 3; ++k) {
        Vector a = x, b = x;
        a[k] += 1e-7;
        b[k] -= 1e-7;
        EXPECT_NEAR(g[k], (penaliser(kind, a, c, r) - penaliser(kind, b, c, r)) / 2e-7, 1e-5);
      }
    }
  }
}

TEST(EshotgunSelect, SingletonBatchIsAnchor) {
  const GpModel m = model_1d(2);
  ShotgunConfig cfg;
  cfg.batch_size = 1;
  Rng rng(3);
  const auto b = eshotgun_select(m, cfg, Box::unit(1), rng, quick());
  expect_valid(b, Box::unit(1), 1);
}

TEST(EshotgunSelect, PureExploitAnchorIsMeanArgmin) {
  const GpModel m = model_1d(4);
  double best_x = 0.0, best_mu = 1e300;
  for (int i = 0; i <= 100000; ++i) {
    const Vector x = Vector::Constant(1, i / 100000.0);
    if (m.posterior(x).mean < best_mu) {
      best_mu = m.posterior(x).mean;
      best_x = x[0];
    }
  }
  ShotgunConfig cfg;
  cfg.mode = SelectionMode::PureExploit;
  cfg.epsilon = 0.0;
  Rng a(5), b(5);
  const auto pa = eshotgun_select(m, cfg, Box::unit(1), a, quick());
  const auto pb = eshotgun_select(m, cfg, Box::unit(1), b, quick());
  EXPECT_NEAR(pa.anchor[0], best_x, 1e-3);
  EXPECT_EQ(pa.anchor, pb.anchor);
  EXPECT_FALSE(pa.explored);
  expect_valid(pa, Box::unit(1), cfg.batch_size);
}

TEST(EshotgunSelect, RandomSpaceAnchorsAreUniform) {
  Rng data(6);
  const GpModel m = GpModel::fit(testutil::random_dataset(6, 2, data), Box::unit(2), {}, data);
  ShotgunConfig cfg;
  cfg.epsilon = 1.0;
  cfg.batch_size = 1;
  InnerSearchSettings inner = quick();
  inner.evaluations_per_dim = 100;
  Rng rng(7);
  std::array<int, 4> quadrant{};
  const int n = 2000;
  for (int i = 0; i < n; ++i) {
    const auto b = eshotgun_select(m, cfg, Box::unit(2), rng, inner);
    EXPECT_TRUE(b.explored);
    ++quadrant[(b.anchor[0] > 0.5 ? 1 : 0) + (b.anchor[1] > 0.5 ? 2 : 0)];
  }
  const double se = std::sqrt(0.25 * 0.75 / n);
  for (int c : quadrant) EXPECT_NEAR(static_cast<double>(c) / n, 0.25, 3.0 * se);
}

TEST(EshotgunSelect, ParetoFrontAnchorIsOnTheFront) {
  const GpModel m = model_1d(8);
  ShotgunConfig cfg;
  cfg.epsilon = 1.0;
  cfg.mode = SelectionMode::ParetoFront;
  Rng rng(9);
  const auto b = eshotgun_select(m, cfg, Box::unit(1), rng, quick());
  EXPECT_TRUE(b.explored);
  expect_valid(b, Box::unit(1), cfg.batch_size);
}

TEST(EshotgunSelect, SpreadMatchesRadius) {
  // Wide box relative to the radius, so rejection never triggers.
  const Box box = Box::uniform(2, -1000.0, 1000.0);
  Matrix x(3, 2);
  x << 0.0, 0.0, 1.0, 0.0, 0.0, 1.0;
  Vector f(3);
  f << -1.0, 0.0, 0.0;  // interior mean minimum near the origin
  const GpModel m(Dataset(x, f), GpHyperparams{1.0, 1.0, 1e-6});
  ShotgunConfig cfg;
  cfg.mode = SelectionMode::PureExploit;
  cfg.batch_size = 10001;
  InnerSearchSettings inner = quick();
  Rng rng(10);
  const auto b = eshotgun_select(m, cfg, box, rng, inner);
  ASSERT_FALSE(b.used_fallback);
  const Matrix offsets = b.locations.bottomRows(10000).rowwise() - b.anchor.transpose();
  for (int k = 0; k < 2; ++k) {
    const double sd = std::sqrt(offsets.col(k).squaredNorm() / 10000.0);
    EXPECT_NEAR(sd, b.radius, 0.03 * b.radius);
  }
}

TEST(EshotgunSelect, CornerAnchorFallsBackInsideBox) {
  // Data pulling the mean minimum into a corner, with a radius far larger than the box.
  Matrix x(3, 2);
  x << 0.0, 0.0, 1.0, 1.0, 0.0, 1.0;
  Vector f(3);
  f << -100.0, 100.0, 50.0;
  const GpModel m(Dataset(x, f), GpHyperparams{0.5, 1e4, 1e-6});
  ShotgunConfig cfg;
  cfg.mode = SelectionMode::PureExploit;
  cfg.max_rejection_attempts = 1;
  cfg.batch_size = 20;
  Rng rng(11);
  const auto b = eshotgun_select(m, cfg, Box::unit(2), rng, quick());
  EXPECT_TRUE(b.used_fallback);
  expect_valid(b, Box::unit(2), 20);
}

TEST(KrigingBeliever, SingletonEqualsEiMaximisation) {
  const GpModel m = model_1d(12);
  const SearchBudget budget = SearchBudget::for_dimension(1, 13);
  const auto b = kriging_believer_select(m, 1, m.incumbent(), Box::unit(1), budget);
  SearchBudget first = budget;
  first.rng_seed = derive_seed(budget.rng_seed, 0, 1);
  const auto direct = global_maximize(expected_improvement_field(m, Box::unit(1), m.incumbent()), first);
  EXPECT_EQ(b.anchor, direct.location);
}

TEST(KrigingBeliever, HallucinatedFirstPointHasNoImprovementLeft) {
  const GpModel m = model_1d(14);
  const auto b = kriging_believer_select(m, 3, m.incumbent(), Box::unit(1), SearchBudget::for_dimension(1, 15));
  expect_valid(b, Box::unit(1), 3);
  const Vector x1 = b.locations.row(0).transpose();
  const double mu = m.posterior(x1).mean;
  const GpModel h = m.hallucinate(x1, mu);
  if (mu >= m.incumbent()) {
    EXPECT_LE(expected_improvement(h.posterior(x1), m.incumbent()), 1e-8);
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) EXPECT_GT((b.locations.row(i) - b.locations.row(j)).norm(), 1e-6);
  }
}

TEST(LocalPenalisation, SingletonIsEiArgmax) {
  const GpModel m = model_1d(16);
  for (auto kind : {PenaliserKind::Soft, PenaliserKind::Hard}) {
    Rng rng(17);
    const auto b = local_penalisation_select(m, 1, kind, Box::unit(1), rng, quick());
    const auto direct = global_maximize(expected_improvement_field(m, Box::unit(1), m.incumbent()),
                                        SearchBudget::for_dimension(1, 18));
    EXPECT_NEAR(expected_improvement(m.posterior(b.anchor), m.incumbent()), direct.value, 1e-6 * direct.value + 1e-12);
  }
}

TEST(LocalPenalisation, BatchesAreDistinctAndInBounds) {
  Rng data(19);
  const GpModel m = GpModel::fit(testutil::random_dataset(8, 2, data), Box::unit(2), {}, data);
  for (auto kind : {PenaliserKind::Soft, PenaliserKind::Hard}) {
    Rng rng(20);
    const auto b = local_penalisation_select(m, 5, kind, Box::unit(2), rng, quick());
    expect_valid(b, Box::unit(2), 5);
  }
}

TEST(ThompsonSelect, ZeroVarianceCandidatesPickTrainingArgmin) {
  Rng data(21);
  const auto ds = testutil::random_dataset(6, 2, data);
  const GpModel m(ds, GpHyperparams{0.2, 1.0, 1e-10});
  Rng rng(22);
  for (int slot = 0; slot < 5; ++slot) EXPECT_EQ(thompson_pick(m, ds.inputs, rng), ds.argmin());
}

TEST(ThompsonSelect, DeterministicForSeed) {
  const GpModel m = model_1d(23);
  Rng a(24), b(24);
  EXPECT_EQ(thompson_select(m, 4, 200, Box::unit(1), a).locations,
            thompson_select(m, 4, 200, Box::unit(1), b).locations);
  Rng c(25);
  expect_valid(thompson_select(m, 4, 200, Box::unit(1), c), Box::unit(1), 4);
  EXPECT_THROW(thompson_select(m, 4, 3, Box::unit(1), c), ConfigError);
}

TEST(ThompsonSelect, SymmetricCandidatesChosenEvenly) {
  Matrix far(1, 1);
  far << 1e6;
  const GpModel prior(Dataset(far, Vector::Zero(1)), GpHyperparams{0.1, 1.0, 1e-6});
  Matrix candidates(2, 1);
  candidates << 0.25, 0.75;
  Rng rng(26);
  const int n = 2000;
  int first = 0;
  for (int i = 0; i < n; ++i) first += thompson_pick(prior, candidates, rng) == 0 ? 1 : 0;
  EXPECT_NEAR(static_cast<double>(first) / n, 0.5, 3.0 * std::sqrt(0.25 / n));
}

TEST(InnerSearchSettings, ThompsonCandidateCount) {
  InnerSearchSettings s;
  s.ts_candidates_cap = 5000;
  EXPECT_EQ(s.ts_candidates(1), 1000);
  EXPECT_EQ(s.ts_candidates(4), 4000);
  EXPECT_EQ(s.ts_candidates(10), 5000);
}
