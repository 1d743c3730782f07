#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "crm/likelihood.hpp"
#include "crm/posterior.hpp"
#include "test_support.hpp"

namespace crm {
namespace {

using testing::illustration_model;
using testing::rec;

TEST(LogLikelihood, SingleToxicRecord) {
  const auto m = illustration_model();
  TrialHistory h;
  h.add(rec(0, 1));
  EXPECT_NEAR(log_likelihood(m, h, Params{1.0}), std::log(0.04), 1e-14);
}

TEST(LogLikelihood, EmptyHistoryIsZero) {
  const auto m = illustration_model();
  EXPECT_EQ(log_likelihood(m, TrialHistory{}, Params{0.7}), 0.0);
}

TEST(LogLikelihood, IllustrationHasLocalMaximumNearReportedEstimate) {
  const auto m = illustration_model();
  const auto h = testing::illustration_first_nine();
  const double at = log_likelihood(m, h, Params{0.715});
  EXPECT_GT(at, log_likelihood(m, h, Params{0.665}));
  EXPECT_GT(at, log_likelihood(m, h, Params{0.765}));
}

TEST(LogLikelihood, HomogeneousNonToxicIncreasesTowardBoundary) {
  const auto m = illustration_model();
  TrialHistory h;
  for (int j = 0; j < 4; ++j) h.add(rec(2, 0));
  double prev = log_likelihood(m, h, Params{0.1});
  for (double a = 0.2; a < 10.0; a *= 1.5) {
    const double cur = log_likelihood(m, h, Params{a});
    EXPECT_GT(cur, prev);
    prev = cur;
  }
}

TEST(LogLikelihood, MatchesDirectEvaluationOnRandomHistories) {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    const auto alpha = testing::random_skeleton(rng, 5);
    const WorkingModel pe(ModelKind::PowerExp, Skeleton(alpha));
    const WorkingModel pd(ModelKind::PowerDirect, Skeleton(alpha));
    const auto h = testing::random_history(rng, 5, 12, false);
    EXPECT_NEAR(log_likelihood(pe, h, Params{0.3}), testing::direct_loglik(alpha, true, h, 0.3), 1e-10);
    EXPECT_NEAR(log_likelihood(pd, h, Params{1.7}), testing::direct_loglik(alpha, false, h, 1.7), 1e-10);
  }
}

TEST(Mle, ReproducesIllustrationEstimates) {
  const auto m = illustration_model();
  EXPECT_NEAR(mle(m, testing::illustration_first_nine()).a, 0.715, 1e-3);
  EXPECT_NEAR(mle(m, testing::illustration_first_ten()).a, 0.759, 1e-3);
}

TEST(Mle, ScoreVanishesAtEstimate) {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 40; ++rep) {
    const auto alpha = testing::random_skeleton(rng, 6);
    for (auto kind : {ModelKind::PowerExp, ModelKind::PowerDirect}) {
      const WorkingModel m(kind, Skeleton(alpha));
      const auto h = testing::random_history(rng, 6, 15, true);
      const auto t = tally_toxicity(h, 6);
      const double a_hat = mle(m, t);
      EXPECT_LT(std::abs(score(m, t, a_hat)), 1e-10);
      const double fd = testing::central_difference([&](double a) { return testing::direct_loglik(alpha, kind == ModelKind::PowerExp, h, a); }, a_hat, 1e-5);
      EXPECT_NEAR(fd, 0.0, 1e-5);
    }
  }
}

TEST(Mle, BalancedOutcomesAtOneDoseGiveHalf) {
  const auto m = illustration_model();
  for (DoseIndex i = 0; i < 6; ++i) {
    TrialHistory h;
    h.add(rec(i, 1));
    h.add(rec(i, 0));
    EXPECT_NEAR(m.psi(i, mle(m, h).a), 0.5, 1e-10);
  }
}

TEST(Mle, HomogeneousHistoryHasNoInteriorMaximum) {
  const auto m = illustration_model();
  TrialHistory h;
  h.add(rec(0, 0));
  h.add(rec(1, 0));
  try {
    mle(m, h);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoInteriorMaximum);
  }
  TrialHistory all_toxic;
  all_toxic.add(rec(3, 1));
  EXPECT_THROW(mle(m, all_toxic), Error);
}

TEST(Mle, LogisticTwoParameterFit) {
  const WorkingModel m(ModelKind::Logistic2p, Skeleton(testing::kIllustrationSkeleton));
  TrialHistory h;
  // 2/10 at dose 2, 5/10 at dose 4: the saturated fit reproduces both rates
  for (int j = 0; j < 10; ++j) h.add(rec(1, j < 2 ? 1 : 0));
  for (int j = 0; j < 10; ++j) h.add(rec(3, j < 5 ? 1 : 0));
  const Params p = mle(m, h);
  EXPECT_NEAR(m.psi(1, p), 0.2, 1e-8);
  EXPECT_NEAR(m.psi(3, p), 0.5, 1e-8);
}

TEST(Mle, PermutationInvariance) {
  std::mt19937_64 rng(9);
  const auto m = illustration_model(ModelKind::PowerExp);
  for (int rep = 0; rep < 20; ++rep) {
    auto h = testing::random_history(rng, 6, 14, true);
    auto records = h.records();
    std::shuffle(records.begin(), records.end(), rng);
    const TrialHistory shuffled(records);
    EXPECT_EQ(mle(m, h).a, mle(m, shuffled).a);
    EXPECT_EQ(log_likelihood(m, h, Params{0.4}), log_likelihood(m, shuffled, Params{0.4}));
    const auto p1 = posterior(m, h, NormalPrior{0.0, 1.34 * 1.34});
    const auto p2 = posterior(m, shuffled, NormalPrior{0.0, 1.34 * 1.34});
    EXPECT_EQ(p1.mean, p2.mean);
    EXPECT_EQ(p1.tox_mean, p2.tox_mean);
  }
}

TEST(Posterior, ExponentialPriorWithoutDataHasUnitMean) {
  const auto m = illustration_model(ModelKind::PowerDirect);
  const auto s = posterior(m, TrialHistory{}, GammaPrior{1.0, 1.0});
  EXPECT_NEAR(s.mean, 1.0, 1e-7);
  EXPECT_NEAR(s.log_normalizer, 0.0, 1e-7);
}

TEST(Posterior, NormalPriorMatchesRiemannOracle) {
  const auto m = illustration_model(ModelKind::PowerExp);
  const NormalPrior prior{0.0, 1.34 * 1.34};
  const auto s = posterior(m, TrialHistory{}, prior);
  const auto oracle = testing::riemann_moments([&](double a) { return prior.log_density(a); },
                                               [&](std::size_t i, double a) { return m.psi(i, a); }, 6, -10.0, 10.0,
                                               1'000'000);
  EXPECT_NEAR(s.mean, oracle[1], 1e-6);
  for (DoseIndex i = 0; i < 6; ++i) {
    EXPECT_NEAR(s.tox_mean[i], oracle[2 + i], 1e-6);
    EXPECT_NEAR(s.tox_plugin[i], m.psi(i, s.mean), 1e-15);
  }
  for (DoseIndex i = 1; i < 6; ++i) EXPECT_LT(s.tox_mean[i - 1], s.tox_mean[i]);
}

TEST(Posterior, PseudoDataWithFullWeightReproducesPseudoFit) {
  const auto m = illustration_model(ModelKind::PowerExp);
  TrialHistory pseudo;
  pseudo.add(rec(1, 1));
  pseudo.add(rec(1, 0));
  pseudo.add(rec(2, 0));
  pseudo.add(rec(3, 1));
  const auto s = posterior(m, TrialHistory{}, PseudoDataPrior{pseudo, 1.0});
  EXPECT_NEAR(s.mode, mle(m, pseudo).a, 1e-6);
}

TEST(Posterior, PseudoDataMatchesRiemannOracle) {
  const auto m = illustration_model(ModelKind::PowerExp);
  TrialHistory pseudo;
  for (int j = 0; j < 5; ++j) pseudo.add(rec(2, j == 0 ? 1 : 0));
  const auto data = testing::illustration_first_nine();
  const double w = 0.3;
  const auto s = posterior(m, data, PseudoDataPrior{pseudo, w});
  const auto oracle = testing::riemann_moments(
      [&](double a) {
        return w * testing::direct_loglik(testing::kIllustrationSkeleton, true, pseudo, a) +
               (1 - w) * testing::direct_loglik(testing::kIllustrationSkeleton, true, data, a);
      },
      [&](std::size_t i, double a) { return m.psi(i, a); }, 6, -10.0, 10.0, 1'000'000);
  EXPECT_NEAR(s.mean, oracle[1], 1e-6);
  for (DoseIndex i = 0; i < 6; ++i) EXPECT_NEAR(s.tox_mean[i], oracle[2 + i], 1e-6);
}

TEST(Posterior, NoPriorGivesMlePlugIn) {
  const auto m = illustration_model();
  const auto s = posterior(m, testing::illustration_first_nine(), NoPrior{});
  EXPECT_TRUE(s.likelihood_only);
  EXPECT_NEAR(s.mean, 0.7151125964930347, 1e-9);
  EXPECT_NEAR(s.tox_mean[1], 0.149, 1e-3);
  EXPECT_THROW(posterior(m, TrialHistory{}, NoPrior{}), Error);
}

TEST(Posterior, FlatNormalPriorModeEqualsMle) {
  std::mt19937_64 rng(21);
  const auto m = illustration_model(ModelKind::PowerExp);
  for (int rep = 0; rep < 15; ++rep) {
    const auto h = testing::random_history(rng, 6, 20, true);
    const auto s = posterior(m, h, NormalPrior{0.0, 1e6});
    EXPECT_NEAR(s.mode, mle(m, h).a, 1e-4);
  }
}

TEST(Posterior, RandomBankMatchesRiemannOracle) {
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> var(0.5, 4.0), lam(0.5, 2.0), shape(1.0, 3.0);
  for (int rep = 0; rep < 6; ++rep) {
    const auto alpha = testing::random_skeleton(rng, 5);
    const auto h = testing::random_history(rng, 5, 8, false);
    if (rep % 2 == 0) {
      const WorkingModel m(ModelKind::PowerExp, Skeleton(alpha));
      const NormalPrior prior{0.0, var(rng)};
      const auto s = posterior(m, h, prior);
      const auto o = testing::riemann_moments(
          [&](double a) { return prior.log_density(a) + testing::direct_loglik(alpha, true, h, a); },
          [&](std::size_t i, double a) { return m.psi(i, a); }, 5, -10.0, 10.0, 1'000'000);
      EXPECT_NEAR(s.mean, o[1], 1e-6);
      for (DoseIndex i = 0; i < 5; ++i) EXPECT_NEAR(s.tox_mean[i], o[2 + i], 1e-6);
    } else {
      const WorkingModel m(ModelKind::PowerDirect, Skeleton(alpha));
      const GammaPrior prior{lam(rng), shape(rng)};
      const auto s = posterior(m, h, prior);
      const auto o = testing::riemann_moments(
          [&](double a) { return prior.log_density(a) + testing::direct_loglik(alpha, false, h, a); },
          [&](std::size_t i, double a) { return m.psi(i, a); }, 5, 0.0, 60.0, 1'000'000);
      EXPECT_NEAR(s.mean, o[1], 1e-6);
      for (DoseIndex i = 0; i < 5; ++i) EXPECT_NEAR(s.tox_mean[i], o[2 + i], 1e-6);
    }
  }
}

TEST(Posterior, PriorValidation) {
  const auto pd = illustration_model(ModelKind::PowerDirect);
  const auto pe = illustration_model(ModelKind::PowerExp);
  EXPECT_THROW(posterior(pd, TrialHistory{}, GammaPrior{-1.0, 1.0}), Error);
  EXPECT_THROW(posterior(pe, TrialHistory{}, GammaPrior{1.0, 1.0}), Error);
  EXPECT_THROW(posterior(pd, TrialHistory{}, NormalPrior{0.0, 1.0}), Error);
  EXPECT_THROW(posterior(pe, TrialHistory{}, NormalPrior{0.0, 0.0}), Error);
  EXPECT_THROW(posterior(pe, TrialHistory{}, PseudoDataPrior{testing::illustration_first_nine(), 0.0}), Error);
  EXPECT_THROW(posterior(pe, TrialHistory{}, PartitionPrior{{0.5, 0.5}, 0.2, std::nullopt}), Error);
}

TEST(ConfidenceInterval, VarianceFollowsNonToxicFormula) {
  const auto m = illustration_model();
  const auto h = testing::illustration_full();
  const double a_hat = mle(m, h).a;
  const auto ci = confidence_interval(m, h, a_hat, 1, 0.90);
  double inv = 0.0;
  for (const auto& r : h.records()) {
    if (r.toxicity) continue;
    const double p = m.psi(r.dose, a_hat);
    const double la = std::log(m.skeleton().alpha(r.dose));
    inv += p * la * la / ((1 - p) * (1 - p));
  }
  EXPECT_NEAR(ci.variance, 1.0 / inv, 1e-12);
  EXPECT_LT(ci.lower, m.psi(1, a_hat));
  EXPECT_GT(ci.upper, m.psi(1, a_hat));
}

TEST(ConfidenceInterval, NestsInLevel) {
  const auto m = illustration_model();
  const auto h = testing::illustration_full();
  const double a_hat = mle(m, h).a;
  const auto narrow = confidence_interval(m, h, a_hat, 1, 0.90);
  const auto wide = confidence_interval(m, h, a_hat, 1, 0.99);
  EXPECT_LT(wide.lower, narrow.lower);
  EXPECT_GT(wide.upper, narrow.upper);
}

TEST(ConfidenceInterval, CollapsesAsVarianceVanishes) {
  const auto m = illustration_model();
  TrialHistory h;
  for (int j = 0; j < 2'000'000; ++j) h.add(rec(1, j % 5 == 0 ? 1 : 0));
  const double a_hat = mle(m, h).a;
  const auto ci = confidence_interval(m, h, a_hat, 1, 0.90);
  EXPECT_NEAR(ci.lower, m.psi(1, a_hat), 1e-3);
  EXPECT_NEAR(ci.upper, m.psi(1, a_hat), 1e-3);
  EXPECT_LT(ci.upper - ci.lower, 2e-3);
}

TEST(ConfidenceInterval, Errors) {
  const auto m = illustration_model();
  TrialHistory all_toxic;
  all_toxic.add(rec(2, 1));
  EXPECT_THROW(confidence_interval(m, all_toxic, 0.5, 1, 0.9), Error);
  EXPECT_THROW(confidence_interval(m, testing::illustration_full(), 0.5, 1, 1.5), Error);
}

TEST(ConfidenceInterval, InformationEqualsNegativeCurvatureOfNonToxicTerms) {
  std::mt19937_64 rng(41);
  for (int rep = 0; rep < 20; ++rep) {
    const auto alpha = testing::random_skeleton(rng, 5);
    const auto h = testing::random_history(rng, 5, 12, true);
    TrialHistory non_toxic;
    for (const auto& r : h.records())
      if (!r.toxicity) non_toxic.add(r);
    for (auto kind : {ModelKind::PowerDirect, ModelKind::PowerExp}) {
      const WorkingModel m(kind, Skeleton(alpha));
      const bool exp_scale = kind == ModelKind::PowerExp;
      const double a = exp_scale ? 0.2 : 1.3;
      const double step = 1e-4;
      auto f = [&](double x) { return testing::direct_loglik(alpha, exp_scale, non_toxic, x); };
      const double curvature = -(f(a + step) - 2 * f(a) + f(a - step)) / (step * step);
      const double info = observed_information(m, tally_toxicity(h, 5), a, true);
      EXPECT_NEAR(info, curvature, 1e-5 * std::max(1.0, std::abs(curvature)));
    }
  }
}

TEST(ModelClassPosterior, EmptyHistoryKeepsPriorWeights) {
  const auto m1 = WorkingModel(ModelKind::PowerExp, Skeleton({0.05, 0.10, 0.20, 0.30}));
  const auto m2 = WorkingModel(ModelKind::PowerExp, Skeleton({0.15, 0.25, 0.40, 0.55}));
  const ModelClass cls({{m1, 0}, {m2, 0}}, {0.3, 0.7});
  const auto post = model_class_posterior(cls, TrialHistory{}, NormalPrior{0.0, 1.34 * 1.34});
  EXPECT_NEAR(post.weights[0], 0.3, 1e-12);
  EXPECT_NEAR(post.weights[1], 0.7, 1e-12);
}

TEST(ModelClassPosterior, IdenticalMembersKeepPriorWeights) {
  const auto m = illustration_model(ModelKind::PowerExp);
  const ModelClass cls({{m, 0}, {m, 0}, {m, 0}}, {0.2, 0.3, 0.5});
  const auto post = model_class_posterior(cls, testing::illustration_full(), NormalPrior{0.0, 1.34 * 1.34});
  EXPECT_NEAR(post.weights[0], 0.2, 1e-12);
  EXPECT_NEAR(post.weights[1], 0.3, 1e-12);
  EXPECT_NEAR(post.weights[2], 0.5, 1e-12);
  EXPECT_NEAR(post.weights[0] + post.weights[1] + post.weights[2], 1.0, 1e-12);
}

TEST(ModelClassPosterior, MatchesGridMarginals) {
  const std::vector<double> s1{0.05, 0.10, 0.20, 0.30}, s2{0.15, 0.25, 0.40, 0.55};
  const WorkingModel m1(ModelKind::PowerExp, Skeleton(s1)), m2(ModelKind::PowerExp, Skeleton(s2));
  const ModelClass cls({{m1, 0}, {m2, 0}}, {0.5, 0.5});
  TrialHistory h;
  h.add(rec(0, 0));
  h.add(rec(1, 0));
  h.add(rec(2, 1));
  h.add(rec(2, 0));
  h.add(rec(3, 1));
  const NormalPrior prior{0.0, 1.34 * 1.34};
  const auto post = model_class_posterior(cls, h, prior);
  auto marginal = [&](const std::vector<double>& alpha) {
    return testing::riemann_moments([&](double a) { return prior.log_density(a) + testing::direct_loglik(alpha, true, h, a); },
                                    [](std::size_t, double) { return 0.0; }, 0, -10.0, 10.0, 1'000'000)[0];
  };
  const double z1 = marginal(s1), z2 = marginal(s2);
  EXPECT_NEAR(post.weights[0], z1 / (z1 + z2), 1e-6);
  EXPECT_NEAR(post.weights[1], z2 / (z1 + z2), 1e-6);
}

TEST(ModelClassPosterior, RejectsImproperPriors) {
  const auto m = illustration_model(ModelKind::PowerExp);
  EXPECT_THROW(model_class_posterior(ModelClass::two_group(m), TrialHistory{}, NoPrior{}), Error);
}

}  // namespace
}  // namespace crm
