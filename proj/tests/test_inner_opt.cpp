#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "eshotgun/benchmarks.hpp"
#include "eshotgun/design.hpp"
#include "eshotgun/fields.hpp"
#include "eshotgun/inner_opt.hpp"
#include "test_util.hpp"

using namespace eshotgun;

namespace {

ScalarField quadratic_field(const Vector& c) {
  ScalarField f;
  f.bounds = Box::unit(static_cast<int>(c.size()));
  f.value = [c](const Vector& x) { return -(x - c).squaredNorm(); };
  f.value_and_gradient = [c](const Vector& x, Vector& g) {
    g = -2.0 * (x - c);
    return -(x - c).squaredNorm();
  };
  return f;
}

ScalarField negated_branin_field() {
  const ProblemSpec p = make_problem("branin");
  ScalarField f;
  f.bounds = p.bounds;
  f.value = [](const Vector& x) { return -functions::branin(x); };
  return f;
}

// Three peaks on [0, 1]; the tallest sits at 0.8.
double three_peaks(double x) {
  return 0.8 * std::exp(-std::pow((x - 0.15) / 0.03, 2)) + 0.9 * std::exp(-std::pow((x - 0.45) / 0.03, 2)) +
         1.0 * std::exp(-std::pow((x - 0.8) / 0.03, 2));
}

}  // namespace

TEST(SearchBudget, Validation) {
  EXPECT_THROW((SearchBudget{99, 1, 0}.validate()), ConfigError);
  EXPECT_THROW((SearchBudget{1000, 0, 0}.validate()), ConfigError);
  EXPECT_NO_THROW((SearchBudget{100, 1, 0}.validate()));
  EXPECT_EQ(SearchBudget::for_dimension(3, 0).max_evaluations, 30000);
}

TEST(GlobalMaximize, FindsQuadraticOptimum) {
  Vector c(2);
  c << 0.3, 0.7;
  for (bool with_gradient : {true, false}) {
    ScalarField f = quadratic_field(c);
    if (!with_gradient) f.value_and_gradient = nullptr;
    const auto r = global_maximize(f, SearchBudget::for_dimension(2, 1));
    EXPECT_LT((r.location - c).norm(), 1e-3);
    EXPECT_DOUBLE_EQ(r.value, f.value(r.location));
  }
}

TEST(GlobalMaximize, NegatedBraninReachesKnownOptimum) {
  const auto r = global_maximize(negated_branin_field(), SearchBudget::for_dimension(2, 2));
  EXPECT_NEAR(r.value, -0.397887, 1e-2);
  EXPECT_TRUE(make_problem("branin").bounds.contains(r.location));
}

TEST(GlobalMaximize, DeterministicForSeed) {
  const auto a = global_maximize(negated_branin_field(), SearchBudget::for_dimension(2, 3));
  const auto b = global_maximize(negated_branin_field(), SearchBudget::for_dimension(2, 3));
  EXPECT_EQ(a.location, b.location);
  EXPECT_EQ(a.value, b.value);
}

TEST(GlobalMaximize, NeverWorseThanQuasiUniformProbe) {
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const int d = 1 + seed % 4;
    const GpModel model = GpModel::fit(testutil::random_dataset(12, d, rng), Box::unit(d), {}, rng);
    const ScalarField ei = expected_improvement_field(model, Box::unit(d), model.incumbent());
    const auto r = global_maximize(ei, SearchBudget::for_dimension(d, seed));
    const Matrix probe = latin_hypercube(256, d, rng);
    EXPECT_GE(r.value, ei.evaluate_rows(probe).maxCoeff() - 1e-12) << "seed " << seed;
    EXPECT_LE(r.evaluations, SearchBudget::for_dimension(d, seed).max_evaluations + 1);
  }
}

TEST(GlobalMaximize, BeatsRandomSearchOnBranin) {
  const ScalarField f = negated_branin_field();
  int wins = 0;
  for (int seed = 0; seed < 100; ++seed) {
    SearchBudget budget = SearchBudget::for_dimension(2, seed);
    budget.max_evaluations = 2000;
    const auto r = global_maximize(f, budget);
    Rng rng(10000 + seed);
    const Matrix random = uniform_in(f.bounds, static_cast<int>(r.evaluations), rng);
    if (r.value >= f.evaluate_rows(random).maxCoeff()) ++wins;
  }
  EXPECT_GE(wins, 95);
}

TEST(GlobalMaximize, LocationsStayInBounds) {
  Vector c(3);
  c << -0.5, 0.5, 1.7;  // optimum outside the box
  const auto r = global_maximize(quadratic_field(c), SearchBudget::for_dimension(3, 4));
  EXPECT_TRUE(Box::unit(3).contains(r.location, 0.0));
  EXPECT_NEAR(r.location[0], 0.0, 1e-9);
  EXPECT_NEAR(r.location[2], 1.0, 1e-9);
}

TEST(PresampleThenRefine, MatchesGlobalOnUnimodalField) {
  Vector c(2);
  c << 0.62, 0.21;
  const ScalarField f = quadratic_field(c);
  const auto a = presample_then_refine(f, 3000, 5, SearchBudget::for_dimension(2, 5));
  const auto b = global_maximize(f, SearchBudget::for_dimension(2, 5));
  EXPECT_LT((a.location - b.location).norm(), 1e-3);
}

TEST(PresampleThenRefine, SingleSampleSingleRefine) {
  Vector c(2);
  c << 0.5, 0.5;
  const auto r = presample_then_refine(quadratic_field(c), 1, 1, SearchBudget::for_dimension(2, 6));
  EXPECT_LT((r.location - c).norm(), 1e-3);
  EXPECT_THROW(presample_then_refine(quadratic_field(c), 1, 2, SearchBudget::for_dimension(2, 6)), ConfigError);
}

TEST(PresampleThenRefine, FindsTallestOfThreePeaks) {
  ScalarField f;
  f.bounds = Box::unit(1);
  f.value = [](const Vector& x) { return three_peaks(x[0]); };
  // Dense-grid oracle for the true peak.
  double best_x = 0.0, best_v = -1.0;
  for (int i = 0; i <= 100000; ++i) {
    const double x = i / 100000.0;
    if (three_peaks(x) > best_v) {
      best_v = three_peaks(x);
      best_x = x;
    }
  }
  int found = 0;
  for (int seed = 0; seed < 100; ++seed) {
    const auto r = presample_then_refine(f, 3000, 5, SearchBudget::for_dimension(1, seed));
    if (std::abs(r.location[0] - best_x) < 1e-3) ++found;
  }
  EXPECT_GE(found, 95);
}

TEST(Lipschitz, LinearFieldGivesSlope) {
  ScalarField f;
  f.bounds = Box::unit(2);
  f.value = [](const Vector& x) { return 3.0 * x[0]; };
  f.value_and_gradient = [](const Vector& x, Vector& g) {
    g = Vector::Zero(2);
    g[0] = 3.0;
    return 3.0 * x[0];
  };
  EXPECT_NEAR(estimate_local_lipschitz(f, Vector::Constant(2, 0.5), 0.2, 1e-9, SearchBudget::for_dimension(2, 1)),
              3.0, 1e-12);
}

TEST(Lipschitz, ConstantFieldGivesFloor) {
  ScalarField f;
  f.bounds = Box::unit(2);
  f.value = [](const Vector&) { return 1.0; };
  f.value_and_gradient = [](const Vector&, Vector& g) {
    g = Vector::Zero(2);
    return 1.0;
  };
  EXPECT_DOUBLE_EQ(estimate_local_lipschitz(f, Vector::Constant(2, 0.5), 0.2, 1e-7, SearchBudget::for_dimension(2, 1)),
                   1e-7);
}

TEST(Lipschitz, GpMeanMatchesDenseGridOracle) {
  for (int d : {1, 2}) {
    Rng rng(40 + d);
    const GpModel model = GpModel::fit(testutil::random_dataset(6, d, rng), Box::unit(d), {}, rng);
    const ScalarField mu = mean_field(model, Box::unit(d));
    const Vector centre = Vector::Constant(d, 0.4);
    const double half = 0.3;
    const double est = estimate_local_lipschitz(mu, centre, half, 1e-12, SearchBudget::for_dimension(d, 7));
    const int per_dim = d == 1 ? 100000 : 317;  // about 1e5 points either way
    double oracle = 0.0;
    Vector x(d);
    for (int i = 0; i < per_dim; ++i) {
      x[0] = centre[0] - half + 2.0 * half * i / (per_dim - 1);
      if (d == 1) {
        oracle = std::max(oracle, model.mean_gradient(x).norm());
        continue;
      }
      for (int j = 0; j < per_dim; ++j) {
        x[1] = centre[1] - half + 2.0 * half * j / (per_dim - 1);
        oracle = std::max(oracle, model.mean_gradient(x).norm());
      }
    }
    EXPECT_NEAR(est, oracle, 0.05 * oracle) << "d=" << d;
    EXPECT_GE(est, oracle * (1.0 - 1e-6)) << "d=" << d;
  }
}

TEST(Lipschitz, ScalesWithField) {
  Rng rng(50);
  const GpModel model = GpModel::fit(testutil::random_dataset(8, 2, rng), Box::unit(2), {}, rng);
  const ScalarField mu = mean_field(model, Box::unit(2));
  ScalarField scaled = mu;
  scaled.value = [&mu](const Vector& x) { return 4.0 * mu.value(x); };
  scaled.value_and_gradient = [&mu](const Vector& x, Vector& g) {
    const double v = mu.value_and_gradient(x, g);
    g *= 4.0;
    return 4.0 * v;
  };
  scaled.hessian = [&mu](const Vector& x) { return Matrix(4.0 * mu.hessian(x)); };
  scaled.batch_value = nullptr;
  const Vector c = Vector::Constant(2, 0.5);
  const double a = estimate_local_lipschitz(mu, c, 0.25, 1e-12, SearchBudget::for_dimension(2, 8));
  const double b = estimate_local_lipschitz(scaled, c, 0.25, 1e-12, SearchBudget::for_dimension(2, 8));
  EXPECT_NEAR(b, 4.0 * a, 1e-3 * b);
}

TEST(Lipschitz, RegionIsClippedToBounds) {
  ScalarField f;
  f.bounds = Box::unit(1);
  // Gradient norm grows with x; the unclipped region would reach x = 1.5.
  f.value = [](const Vector& x) { return x[0] * x[0]; };
  f.value_and_gradient = [](const Vector& x, Vector& g) {
    g = Vector::Constant(1, 2.0 * x[0]);
    return x[0] * x[0];
  };
  EXPECT_NEAR(estimate_local_lipschitz(f, Vector::Constant(1, 0.9), 0.6, 1e-9, SearchBudget::for_dimension(1, 9)),
              2.0, 1e-6);
}
