#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "support.hpp"

namespace mpes {
namespace {

using test::config;

TEST(ParameterSpace, ThreeRegionConfigurationHas147BasicCoordinates) {
  const auto sp = build_parameter_space(test::three_region_config());
  EXPECT_EQ(sp.count(Family::rho), 45u);
  EXPECT_EQ(sp.count(Family::pi) + sp.count(Family::eta), 51u);
  EXPECT_EQ(sp.count(Family::delta), 51u);
  EXPECT_EQ(sp.basic_count(), 147u);
}

TEST(ParameterSpace, AmsterdamLayout) {
  const auto sp = build_parameter_space(test::amsterdam_config());
  EXPECT_EQ(sp.basic_count(), 49u);
  EXPECT_EQ(sp.strata.size(), 17u);
  EXPECT_EQ(sp.count(Family::eta), 7u);
  EXPECT_EQ(sp.opt_out.size(), 7u);
  EXPECT_EQ(sp.legal_migrant.size(), 2u);
  EXPECT_TRUE(sp.pi_floor_coord.has_value());
}

TEST(ParameterSpace, SingleStratumHasPiAndDeltaOnly) {
  const auto sp = build_parameter_space(config(test::one_stratum_json));
  EXPECT_EQ(sp.dimension(), 2u);
  EXPECT_EQ(sp.count(Family::rho), 0u);
  const auto st = to_constrained(sp, std::vector<double>{0.3, -0.2});
  EXPECT_DOUBLE_EQ(st.rho[0], 1.0);
}

TEST(ParameterSpace, TwoGroupsWithoutHierarchy) {
  const auto sp = build_parameter_space(config(test::two_group_json));
  EXPECT_EQ(sp.count(Family::rho), 2u);
  EXPECT_EQ(sp.count(Family::pi), 4u);
  EXPECT_EQ(sp.count(Family::delta), 4u);
  EXPECT_EQ(sp.dimension(), 10u);
}

TEST(ParameterSpace, InvalidGenderCombinationsAreUnconstructible) {
  const auto sp = build_parameter_space(test::amsterdam_config());
  const auto& idx = sp.strata;
  EXPECT_FALSE(idx.find(0, idx.group_index("MSM_STI"), Gender::female));
  EXPECT_FALSE(idx.find(0, idx.group_index("FSW"), Gender::male));
  EXPECT_THROW(idx.at("A", "FSW", Gender::male), ConfigError);
  EXPECT_THROW(config(R"({"regions":[{"id":"A","pop_male":1,"pop_female":1}],"groups":[{"id":"G","genders":"x"}]})"),
               ConfigError);
}

TEST(ParameterSpace, DuplicateStratumIsConfigError) {
  EXPECT_THROW(build_parameter_space(config(R"({"regions":[{"id":"A","pop_male":1,"pop_female":1}],
      "groups":[{"id":"G"},{"id":"G"}]})")),
               ConfigError);
  EXPECT_THROW(build_parameter_space(config(R"({"regions":[{"id":"A","pop_male":1,"pop_female":1},
      {"id":"A","pop_male":2,"pop_female":2}],"groups":[{"id":"G"}]})")),
               ConfigError);
}

TEST(ToConstrained, ZeroLogOddsIsOneHalf) {
  const auto sp = build_parameter_space(config(test::one_stratum_json));
  const auto st = to_constrained(sp, std::vector<double>{0.0, 0.0});
  EXPECT_DOUBLE_EQ(st.pi[0], 0.5);
  EXPECT_DOUBLE_EQ(st.delta[0], 0.5);
}

TEST(ToConstrained, ZeroAlrIsUniformSimplex) {
  const auto sp = build_parameter_space(config(test::three_group_json));
  const auto st = to_constrained(sp, std::vector<double>(sp.dimension(), 0.0));
  for (double r : st.rho) EXPECT_NEAR(r, 1.0 / 3.0, 1e-15);
}

TEST(ToConstrained, MalePrevalenceDerivedThroughEta) {
  const auto sp = build_parameter_space(config(R"({"regions":[{"id":"A","pop_male":1000,"pop_female":1000}],
      "groups":[{"id":"H"},{"id":"REF"}], "hierarchy":{"groups":["H"]}})"));
  std::vector<double> u(sp.dimension(), 0.0);
  const auto& idx = sp.strata;
  const auto f = idx.at("A", "H", Gender::female);
  const auto m = idx.at("A", "H", Gender::male);
  u[*sp.pi_coord[f]] = math::logit(0.2);
  u[sp.index_of("eta[A,H]")] = 0.4055;
  const auto st = to_constrained(sp, u);
  EXPECT_NEAR(st.pi[m], 0.2727, 5e-5);
  EXPECT_FALSE(sp.pi_coord[m].has_value());
}

TEST(ToConstrained, RejectsNonFiniteAndWrongDimension) {
  const auto sp = build_parameter_space(config(test::one_stratum_json));
  EXPECT_THROW(to_constrained(sp, std::vector<double>{NAN, 0.0}), NumericError);
  EXPECT_THROW(to_constrained(sp, std::vector<double>{INFINITY, 0.0}), NumericError);
  EXPECT_THROW(to_constrained(sp, std::vector<double>{0.0}), NumericError);
}

class AmsterdamSpace : public ::testing::Test {
 protected:
  ParameterSpace sp = build_parameter_space(test::amsterdam_config(), std::vector<std::string>{"a1", "a2"});
};

TEST_F(AmsterdamSpace, RoundTripOnThousandRandomPoints) {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto u = test::random_point(sp.dimension(), rng);
    const auto st = to_constrained(sp, u);
    const auto back = to_constrained(sp, from_constrained(sp, st));
    const auto a = test::constrained_values(sp, st);
    const auto b = test::constrained_values(sp, back);
    for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(a[k] - b[k]) / std::max(std::abs(a[k]), 1e-300));
    for (std::size_t s = 0; s < sp.strata.size(); ++s)
      worst = std::max(worst, std::abs(st.pi[s] - back.pi[s]) / st.pi[s]);
  }
  EXPECT_LT(worst, 1e-12);
}

TEST_F(AmsterdamSpace, SimplexClosureAndEtaLinkage) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 500; ++i) {
    const auto st = to_constrained(sp, test::random_point(sp.dimension(), rng, 3.0));
    for (const auto& b : sp.simplices) {
      double sum = st.rho[b.reference];
      for (auto m : b.members) sum += st.rho[m];
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
    for (std::size_t h = 0; h < sp.hierarchy.size(); ++h) {
      const auto& m = sp.hierarchy[h];
      EXPECT_NEAR(math::logit(st.pi[m.male]) - math::logit(st.pi[m.female]) - st.eta[h], 0.0, 1e-9);
    }
    for (double p : st.pi) EXPECT_TRUE(math::is_open_probability(p));
  }
}

TEST_F(AmsterdamSpace, LogJacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(99);
  const std::size_t d = sp.dimension();
  for (int rep = 0; rep < 5; ++rep) {
    const auto u = test::random_point(d, rng, 1.0);
    Eigen::MatrixXd J(d, d);
    const double h = 1e-6;
    for (std::size_t k = 0; k < d; ++k) {
      auto up = u, dn = u;
      up[k] += h;
      dn[k] -= h;
      const auto a = test::constrained_values(sp, to_constrained(sp, up));
      const auto b = test::constrained_values(sp, to_constrained(sp, dn));
      for (std::size_t i = 0; i < d; ++i) J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = (a[i] - b[i]) / (2 * h);
    }
    const double numeric = std::log(std::abs(J.determinant()));
    const auto st = to_constrained(sp, u);
    EXPECT_NEAR(log_jacobian(sp, u, st), numeric, 1e-4 * std::max(1.0, std::abs(numeric)));
  }
}

TEST(Evaluators, MuExamples) {
  auto sp = build_parameter_space(config(R"({"regions":[{"id":"A","pop_male":284002,"pop_female":1000}],
      "groups":[{"id":"G","genders":"m"},{"id":"REF","genders":"m"}]})"));
  auto st = make_state(sp);
  st.rho = {0.00879, 1 - 0.00879};
  st.pi = {0.291, 0.01};
  st.delta = {0.9351, 0.0};
  EXPECT_NEAR(eval_mu(sp, st, 0), 679.4, 0.5);
  EXPECT_EQ(eval_mu(sp, st, 1), 0.0);

  auto sp2 = build_parameter_space(config(R"({"regions":[{"id":"A","pop_male":1000,"pop_female":1000}],
      "groups":[{"id":"G","genders":"m"},{"id":"REF","genders":"m"}]})"));
  auto st2 = make_state(sp2);
  st2.rho = {0.1, 0.9};
  st2.pi = {0.2, 0.0};
  st2.delta = {0.5, 0.5};
  EXPECT_NEAR(eval_mu(sp2, st2, 0), 10.0, 1e-12);
}

TEST(Evaluators, XiSharesAndDegenerateDenominator) {
  auto sp = build_parameter_space(config(R"({"regions":[{"id":"A","pop_male":100,"pop_female":100}],
      "groups":[{"id":"G1","genders":"m"},{"id":"G2","genders":"m"}]})"));
  auto st = make_state(sp);
  st.rho = {0.5, 0.5};
  st.pi = {0.6, 0.4};
  st.delta = {1.0, 0.5};  // mu = (30, 10)
  const auto xi = eval_xi(sp, st, {{0}, {1}});
  EXPECT_NEAR(xi[0], 0.75, 1e-15);
  EXPECT_NEAR(xi[0] + xi[1], 1.0, 1e-12);
  st.delta = {0.0, 0.0};
  EXPECT_THROW(eval_xi(sp, st, {{0}, {1}}), DegenerateDenominatorError);
}

TEST(Evaluators, XiCoveringPartitionSumsToOne) {
  const auto sp = build_parameter_space(test::amsterdam_config());
  std::mt19937_64 rng(5);
  const auto m = sp.strata.strata_of(0, Gender::male);
  std::vector<std::vector<std::size_t>> part;
  for (auto s : m) part.push_back({s});
  for (int i = 0; i < 200; ++i) {
    const auto st = to_constrained(sp, test::random_point(sp.dimension(), rng));
    const auto xi = eval_xi(sp, st, part);
    double total = 0.0, mu_total = 0.0, mu_sum = 0.0;
    for (double x : xi) total += x;
    EXPECT_NEAR(total, 1.0, 1e-12);
    for (auto s : m) mu_sum += eval_mu(sp, st, s);
    for (auto s : m) mu_total += sp.strata.population(s) * st.rho[s] * st.pi[s] * st.delta[s];
    EXPECT_NEAR(mu_sum, mu_total, 1e-10 * mu_total);
  }
}

TEST(Evaluators, SsaCategoryShareIsUnionOfStiAndNonSti) {
  const auto sp = build_parameter_space(test::amsterdam_config());
  std::mt19937_64 rng(6);
  const auto st = to_constrained(sp, test::random_point(sp.dimension(), rng));
  const auto& idx = sp.strata;
  const auto a = idx.at("A", "SSA_STI", Gender::female), b = idx.at("A", "SSA_nonSTI", Gender::female);
  std::vector<std::size_t> rest;
  for (auto s : idx.strata_of(0, Gender::female))
    if (s != a && s != b) rest.push_back(s);
  const auto xi = eval_xi(sp, st, {{a, b}, rest});
  double total = 0.0;
  for (auto s : idx.strata_of(0, Gender::female)) total += eval_mu(sp, st, s);
  EXPECT_NEAR(xi[0], (eval_mu(sp, st, a) + eval_mu(sp, st, b)) / total, 1e-14);
}

TEST(Evaluators, StiAggregates) {
  BasicState st;
  st.rho = {0.02, 0.01};
  st.pi = {0.01, 0.04};
  st.delta = {0.5, 1.0};
  const std::vector<std::size_t> both{0, 1};
  const auto agg = eval_sti_aggregates(st, both);
  EXPECT_NEAR(agg.prevalence, 0.02, 1e-15);
  EXPECT_NEAR(agg.diagnosed, 5.0 / 6.0, 1e-15);

  const std::vector<std::size_t> one{1};
  const auto single = eval_sti_aggregates(st, one);
  EXPECT_DOUBLE_EQ(single.prevalence, 0.04);
  EXPECT_DOUBLE_EQ(single.diagnosed, 1.0);

  st.pi = {0.3, 0.3};
  st.delta = {0.6, 0.6};
  const auto flat = eval_sti_aggregates(st, both);
  EXPECT_NEAR(flat.prevalence, 0.3, 1e-15);
  EXPECT_NEAR(flat.diagnosed, 0.6, 1e-15);

  st.pi = {0.0, 0.0};
  EXPECT_THROW(eval_sti_aggregates(st, both), DegenerateDenominatorError);
}

TEST(Evaluators, StiDiagnosedLiesBetweenMemberExtremes) {
  const auto sp = build_parameter_space(test::amsterdam_config());
  std::mt19937_64 rng(8);
  for (int i = 0; i < 500; ++i) {
    const auto st = to_constrained(sp, test::random_point(sp.dimension(), rng, 2.5));
    for (Gender g : {Gender::male, Gender::female}) {
      const auto strata = sti_aggregate_strata(sp, 0, g);
      const auto agg = eval_sti_aggregates(sp, st, 0, g);
      double lo = 1.0, hi = 0.0;
      for (auto s : strata) {
        lo = std::min(lo, st.delta[s]);
        hi = std::max(hi, st.delta[s]);
      }
      EXPECT_GE(agg.diagnosed, lo - 1e-15);
      EXPECT_LE(agg.diagnosed, hi + 1e-15);
    }
  }
}

TEST(Evaluators, LegalMigrantSize) {
  const auto sp = build_parameter_space(test::amsterdam_config());
  auto st = make_state(sp);
  const auto& idx = sp.strata;
  const auto ssa = find_legal_migrant(sp, 0, "SSA");
  const auto crb = find_legal_migrant(sp, 0, "CRB");
  st.rho[idx.at("A", "SSA_STI", Gender::male)] = 0.001;
  st.rho[idx.at("A", "SSA_nonSTI", Gender::male)] = 0.033;
  st.gamma[ssa] = 0.85;
  EXPECT_NEAR(eval_legal_migrant_size(sp, st, ssa, Gender::male), 0.0289, 1e-12);
  st.gamma[ssa] = 1.0;
  EXPECT_NEAR(eval_legal_migrant_size(sp, st, ssa, Gender::male), 0.034, 1e-15);
  st.rho[idx.at("A", "CRB_STI", Gender::female)] = 0.003;
  st.rho[idx.at("A", "CRB_nonSTI", Gender::female)] = 0.110;
  st.gamma[crb] = 0.975;
  EXPECT_NEAR(eval_legal_migrant_size(sp, st, crb, Gender::female), 0.110175, 1e-12);
}

TEST(Evaluators, OptOutIdentityHoldsForFeasibleSplits) {
  const auto sp = build_parameter_space(test::amsterdam_config());
  std::mt19937_64 rng(12);
  int feasible = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto st = to_constrained(sp, test::random_point(sp.dimension(), rng, 2.0));
    for (std::size_t k = 0; k < sp.opt_out.size(); ++k) {
      const auto& o = st.opt_out[k];
      if (!o.feasible) continue;
      ++feasible;
      EXPECT_NEAR(o.pi_in + o.pi_out, st.pi[sp.opt_out[k].stratum], 1e-14);
      EXPECT_GE(o.p_out, o.p_in);
    }
  }
  EXPECT_GT(feasible, 0);
}

}  // namespace
}  // namespace mpes
