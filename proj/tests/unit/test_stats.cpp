#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "ustat/clt.hpp"
#include "ustat/error.hpp"
#include "ustat/hoeffding.hpp"
#include "ustat/inequality.hpp"
#include "ustat/kernel.hpp"
#include "ustat/numeric.hpp"
#include "ustat/ustat.hpp"
#include "ustat/weights.hpp"

using namespace ustat;

namespace {

std::vector<Point> pts(std::initializer_list<double> xs) {
  std::vector<Point> out;
  for (double x : xs) out.push_back(scalar(x));
  return out;
}

// midpoint rule for int_0^inf g(#{i : |xi_i| > t}) dt
double count_integral_midpoint(const std::vector<double>& xi, const std::vector<double>& g, std::size_t steps) {
  double top = 0.0;
  for (double v : xi) top = std::max(top, std::abs(v));
  const double h = top / static_cast<double>(steps);
  long double total = 0.0;
  for (std::size_t s = 0; s < steps; ++s) {
    const double t = (static_cast<double>(s) + 0.5) * h;
    std::size_t count = 0;
    for (double v : xi) count += std::abs(v) > t ? 1 : 0;
    total += g[count];
  }
  return static_cast<double>(total * h);
}

}  // namespace

TEST_SUITE("hoeffding") {
  TEST_CASE("projections of xy under Uniform01 in closed form") {
    const auto d = decompose(builtin::product_xy(), Law::uniform01(), {});
    REQUIRE(d.projections.size() == 3);
    const auto p0 = std::vector<Point>{};
    CHECK(d.projections[0](p0) == doctest::Approx(0.25));
    for (double x : {0.0, 0.3, 0.9}) {
      CHECK(d.projections[1](pts({x})) == doctest::Approx((x - 0.5) / 2.0));
      for (double y : {0.1, 0.7}) {
        CHECK(d.projections[2](pts({x, y})) == doctest::Approx((x - 0.5) * (y - 0.5)));
      }
    }
  }

  TEST_CASE("finite support exact projections agree with the symbolic route") {
    const Law law = Law::finite_support(pts({-1.0, 0.5, 2.0}), {0.2, 0.5, 0.3});
    const auto sym = decompose(builtin::product_xy(), law, {});
    ProjectionConfig cfg;
    cfg.method = ProjectionMethod::FiniteSupportExact;
    const auto fin = decompose(builtin::product_xy(), law, cfg);
    for (double x : {-1.0, 0.5, 2.0}) {
      CHECK(fin.projections[1](pts({x})) == doctest::Approx(sym.projections[1](pts({x}))).epsilon(1e-12));
      CHECK(fin.projections[2](pts({x, 2.0})) == doctest::Approx(sym.projections[2](pts({x, 2.0}))).epsilon(1e-12));
    }
  }

  TEST_CASE("finite support projections of a general kernel sum to the kernel") {
    const Law law = Law::finite_support(pts({0.0, 1.0, 3.0}), {0.5, 0.25, 0.25});
    const Kernel k = Kernel::general(
        2, [](std::span<const Point> a) { return std::abs(a[0][0] - a[1][0]); }, "gini");
    ProjectionConfig cfg;
    cfg.method = ProjectionMethod::FiniteSupportExact;
    const auto d = decompose(k, law, cfg);
    const std::vector<Point> none;
    for (double x : {0.0, 1.0, 3.0}) {
      for (double y : {0.0, 1.0, 3.0}) {
        const double sum = d.projections[0](none) + d.projections[1](pts({x})) + d.projections[1](pts({y})) +
                           d.projections[2](pts({x, y}));
        CHECK(sum == doctest::Approx(std::abs(x - y)).epsilon(1e-12));
      }
    }
    Rng rng(4);
    const Sample x = law.sample(20, rng);
    CHECK(reconstruct(d, x).residual <= 1e-12);
  }

  TEST_CASE("monte carlo projections are close to the truth") {
    ProjectionConfig cfg;
    cfg.method = ProjectionMethod::MonteCarlo;
    cfg.n_mc = 20000;
    cfg.seed = 3;
    const auto d = decompose(builtin::product_xy(), Law::uniform01(), cfg);
    CHECK(d.projections[1](pts({0.8})) == doctest::Approx(0.15).epsilon(0.05));
  }

  TEST_CASE("degeneracy detection") {
    DegeneracyOptions opt;
    opt.n_mc = 20000;
    opt.seed = 5;
    CHECK(check_complete_degeneracy(builtin::centered_legendre1_pair(), Law::uniform01(), opt).pass);
    CHECK_FALSE(check_complete_degeneracy(builtin::product_xy(), Law::uniform01(), opt).pass);
    CHECK(check_degeneracy(builtin::product_xy(), Law::uniform01(), 0, opt).pass);
  }
}

TEST_SUITE("weights") {
  TEST_CASE("generator supports") {
    const auto efron = gen_weights(WeightScheme::efron(), 37, 1);
    CHECK(std::accumulate(efron.begin(), efron.end(), 0.0) == 37.0);
    for (double v : efron) CHECK(v == std::floor(v));
    const auto bayes = gen_weights(WeightScheme::bayesian(), 37, 2);
    CHECK(std::accumulate(bayes.begin(), bayes.end(), 0.0) == doctest::Approx(37.0).epsilon(1e-12));
    for (double v : bayes) CHECK(v > 0.0);
    for (double v : gen_weights(WeightScheme::rademacher(), 100, 3)) CHECK(std::abs(v) == 1.0);
    for (double v : gen_weights(WeightScheme::pareto(3.0), 100, 4)) CHECK(v >= 1.0);
  }

  TEST_CASE("c2 estimates") {
    for (const auto& s : {WeightScheme::efron(), WeightScheme::bayesian()}) {
      const auto e = estimate_c2(s, 1000, 400, 9);
      CHECK(std::abs(e.mean - 1.0) <= 4.0 * e.se + 1e-3);
    }
    const auto one = estimate_c2(WeightScheme::constant(1.0), 100, 100, 1);
    CHECK(one.mean == 0.0);
  }

  TEST_CASE("W1 validation") {
    const auto e = validate_W(WeightScheme::efron(), 400, 200, 5);
    CHECK(e.w1_pass);
    CHECK(e.max_term_decreasing);
    CHECK(validate_W(WeightScheme::bayesian(), 400, 100, 6).w1_pass);
    const auto g = validate_W(WeightScheme::gaussian(), 400, 50, 7);
    CHECK_FALSE(g.w1_pass);
    CHECK(g.multiplier_only);
  }

  TEST_CASE("exchangeability of the first two coordinates") {
    for (const auto& s : {WeightScheme::efron(), WeightScheme::bayesian()}) {
      std::vector<double> a, b;
      for (std::size_t r = 0; r < 10000; ++r) {
        const auto w = gen_weights(s, 20, derive_seed(11, {r}));
        a.push_back(w[0] + 0.37 * w[1]);
        b.push_back(w[1] + 0.37 * w[0]);
      }
      CHECK(ks_distance(a, b) <= 0.03);
    }
  }

  TEST_CASE("Lp1 norms in closed form") {
    CHECK(lp1_norm(Law::uniform01(), 2.0).value == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
    CHECK(lp1_norm(WeightScheme::constant(2.5), 10, 3.0).value == doctest::Approx(2.5));
    CHECK(lp1_norm(WeightScheme::pareto(1.5), 10, 2.0).infinite);
    // Rademacher: |xi| = 1
    CHECK(lp1_norm(WeightScheme::rademacher(), 10, 4.0).value == doctest::Approx(1.0));
    // standard normal p = 1 gives E|G|
    CHECK(lp1_norm(WeightScheme::gaussian(), 10, 1.0).value == doctest::Approx(std::sqrt(2.0 / M_PI)).epsilon(1e-8));
  }

  TEST_CASE("Lp1 norm is non-decreasing in p") {
    for (const auto& s : {WeightScheme::gaussian(), WeightScheme::uniform01(), WeightScheme::pareto(6.0)}) {
      double prev = 0.0;
      for (double p : {1.0, 1.5, 2.0, 3.0, 4.0}) {
        const auto r = lp1_norm(s, 50, p);
        REQUIRE_FALSE(r.infinite);
        CHECK(r.value >= prev - 1e-12);
        prev = r.value;
      }
    }
  }

  TEST_CASE("Monte Carlo Lp1 agrees with quadrature") {
    auto draw = [](Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); };
    const auto mc = lp1_norm_mc(draw, 2.0, 1000000, 3);
    const auto q = lp1_norm(WeightScheme::gaussian(), 10, 2.0);
    CHECK(mc.value == doctest::Approx(q.value).epsilon(0.01));
  }
}

TEST_SUITE("clt") {
  TEST_CASE("Newton polynomial values") {
    const std::vector<double> b{6.0, 14.0, 36.0};
    CHECK(eval_R_m(b, 1) == 6.0);
    CHECK(eval_R_m(b, 2) == doctest::Approx(11.0));
    CHECK(eval_R_m(b, 3) == doctest::Approx(6.0));
  }

  TEST_CASE("chaos draws for m = 2 have mean 0 and variance 1") {
    const auto spec = ChaosSpec::from_kernel(builtin::centered_legendre1_pair(), Law::uniform01());
    const auto d = sample_chaos(spec, 200000, 3);
    const auto e = mean_and_se(d);
    CHECK(std::abs(e.mean) <= 4.0 * e.se);
    const double var = sample_sd(d) * sample_sd(d);
    // Var of a squared chi^2_1 scaled: E (G^2-1)^4 / 4 = 60 / 4, so SE(var) ~ sqrt((15 - 1) / N)
    CHECK(std::abs(var - 1.0) <= 4.0 * std::sqrt(14.0 / 200000.0));
    CHECK(*std::min_element(d.begin(), d.end()) >= -1.0 / std::sqrt(2.0) - 1e-12);
  }

  TEST_CASE("chaos draws for m = 1 are Gaussian") {
    const Kernel k = Kernel::separable(1, {2.0}, {Factor::legendre(1)}, "lin");
    const auto d = sample_chaos(ChaosSpec::from_kernel(k, Law::uniform01()), 200000, 8);
    // moments of N(0, 4): 0, 4, 0, 48
    double m1 = 0, m2 = 0, m3 = 0, m4 = 0;
    for (double v : d) {
      m1 += v;
      m2 += v * v;
      m3 += v * v * v;
      m4 += v * v * v * v;
    }
    const double n = static_cast<double>(d.size());
    CHECK(std::abs(m1 / n) <= 4.0 * std::sqrt(4.0 / n));
    CHECK(std::abs(m2 / n - 4.0) <= 4.0 * std::sqrt(32.0 / n));
    CHECK(std::abs(m3 / n) <= 4.0 * std::sqrt(960.0 / n));
    CHECK(std::abs(m4 / n - 48.0) <= 4.0 * std::sqrt((10395.0 - 9.0) * 256.0 / n));
  }

  TEST_CASE("zero kernel gives zero replicates") {
    const Kernel zero = Kernel::separable(2, {0.0}, {Factor::legendre(1)}, "zero");
    CltConfig c;
    c.n = 30;
    c.B = 50;
    c.ref_draws = 100;
    const auto r = multiplier_clt_experiment(zero, Law::uniform01(), WeightScheme::gaussian(), c);
    for (double v : r.replicates) CHECK(v == 0.0);
    CHECK(r.ks == 0.0);
  }

  TEST_CASE("non-degenerate kernel is rejected") {
    CltConfig c;
    c.n = 30;
    c.B = 10;
    CHECK_THROWS_AS(multiplier_clt_experiment(builtin::product_xy(), Law::uniform01(), WeightScheme::gaussian(), c),
                    Error);
    CHECK_THROWS_AS(bootstrap_clt_experiment(builtin::centered_legendre1_pair(), Law::uniform01(),
                                             WeightScheme::gaussian(), c),
                    Error);
  }

  TEST_CASE("finite-n gap is larger at n = 10 than at n = 500") {
    CltConfig c;
    c.B = 2000;
    c.ref_draws = 20000;
    c.seed = 21;
    c.n = 10;
    const double small = multiplier_clt_experiment(builtin::centered_legendre1_pair(), Law::uniform01(),
                                                   WeightScheme::gaussian(), c).ks;
    c.n = 500;
    const double large = multiplier_clt_experiment(builtin::centered_legendre1_pair(), Law::uniform01(),
                                                   WeightScheme::gaussian(), c).ks;
    CHECK(small > large);
  }

  TEST_CASE("Rademacher and Gaussian multipliers agree within the null band") {
    CltConfig c;
    c.n = 500;
    c.B = 2000;
    c.ref_draws = 20000;
    c.seed = 22;
    const Kernel k = builtin::centered_legendre1_pair();
    const auto g = multiplier_clt_experiment(k, Law::uniform01(), WeightScheme::gaussian(), c);
    const auto r = multiplier_clt_experiment(k, Law::uniform01(), WeightScheme::rademacher(), c);
    CHECK(ks_distance(g.replicates, r.replicates) <= 0.06);
  }

  TEST_CASE("constant unit weights give a zero bootstrap statistic") {
    CltConfig c;
    c.n = 60;
    c.B = 20;
    c.ref_draws = 100;
    const auto r = bootstrap_clt_experiment(builtin::centered_legendre1_pair(), Law::uniform01(),
                                            WeightScheme::constant(1.0), c);
    for (double v : r.replicates) CHECK(v == 0.0);
    CHECK(r.c_hat == 0.0);
  }
}

TEST_SUITE("inequality") {
  TEST_CASE("K_m constants") {
    CHECK(K_m(2) == 48.0);
    CHECK(K_m(3) == 64.0 * 3.0 * 26.0);
  }

  TEST_CASE("exact count integral matches the layer-cake identities and quadrature") {
    Rng rng(31);
    for (int draw = 0; draw < 10; ++draw) {
      const std::size_t n = 8;
      const auto xi = gen_weights(WeightScheme::gaussian(), n, rng);
      // psi(l) = l: integral = sum |xi|
      const PsiEnvelope lin = PsiEnvelope::power_law(1, n, 1.0, 1.0);
      double abs_sum = 0.0;
      for (double v : xi) abs_sum += std::abs(v);
      CHECK(exact_count_integral(lin, xi) == doctest::Approx(abs_sum).epsilon(1e-12));
      // m = 2 product: (sum |xi|)^2
      const PsiEnvelope prod = PsiEnvelope::power_law(2, n, 1.0, 1.0);
      CHECK(exact_count_integral(prod, xi) == doctest::Approx(abs_sum * abs_sum).epsilon(1e-12));
      // arbitrary table against a dense midpoint rule
      PsiEnvelope table = PsiEnvelope::zero(1, n);
      std::vector<double> g(n + 1, 0.0);
      for (std::size_t l = 1; l <= n; ++l) g[l] = table.values[l] = std::sqrt(static_cast<double>(l)) + 0.1 * (l % 3);
      const double want = count_integral_midpoint(xi, g, 10000000);
      CHECK(exact_count_integral(table, xi) == doctest::Approx(want).epsilon(1e-6));
    }
  }

  TEST_CASE("rhs with constant weights and square-root envelope") {
    const std::size_t n = 9;
    const PsiEnvelope env = PsiEnvelope::power_law(2, n, 1.0, 2.0);
    const auto r = multiplier_rhs(env, WeightScheme::constant(2.0), n, 10, 1);
    // K_2 * a^2 * n
    CHECK(r.mean == doctest::Approx(48.0 * 4.0 * 9.0));
    CHECK(multiplier_rhs(PsiEnvelope::zero(2, n), WeightScheme::gaussian(), n, 10, 1).mean == 0.0);
  }

  TEST_CASE("rhs for m = 1 with uniform weights") {
    const std::size_t n = 20;
    PsiEnvelope env = PsiEnvelope::power_law(1, n, 1.0, 1.0);
    const auto r = multiplier_rhs(env, WeightScheme::uniform01(), n, 20000, 3);
    // K_1 * n / 2
    CHECK(std::abs(r.mean - K_m(1) * n / 2.0) <= 4.0 * r.se);
  }

  TEST_CASE("corollary bound") {
    CHECK(rhs_corollary23(1.0, 2.0, WeightScheme::rademacher(), 2, 100) == doctest::Approx(4800.0));
    CHECK(rhs_corollary23(1.0, 2.0, WeightScheme::uniform01(), 2, 100) <= 4800.0);
    CHECK(rhs_corollary23(2.0, 2.0, WeightScheme::rademacher(), 2, 1) == doctest::Approx(96.0));
    CHECK_THROWS_AS(rhs_corollary23(1.0, 2.0, WeightScheme::pareto(3.0), 2, 10), Error);
  }

  TEST_CASE("power-law envelope rhs stays below the corollary") {
    const std::size_t n = 15;
    const PsiEnvelope env = PsiEnvelope::power_law(2, n, 0.7, 2.0);
    for (const auto& s : {WeightScheme::gaussian(), WeightScheme::uniform01(), WeightScheme::pareto(6.0)}) {
      const auto r = multiplier_rhs(env, s, n, 4000, 5);
      CHECK(r.mean - 4.0 * r.se <= rhs_corollary23(0.7, 2.0, s, 2, n));
    }
  }

  TEST_CASE("m = 1 lhs matches direct simulation") {
    const FunctionClass cls({builtin::legendre_power(1, 1)});
    const auto lhs = lhs_estimate(cls, Law::uniform01(), WeightScheme::rademacher(), 10, 20000, 4);
    Rng rng(99);
    RunningStats direct;
    for (int r = 0; r < 20000; ++r) {
      double s = 0.0;
      for (int i = 0; i < 10; ++i) {
        const double x = uniform_open(rng);
        const double e = (rng() >> 63) ? 1.0 : -1.0;
        s += e * std::sqrt(3.0) * (2.0 * x - 1.0);
      }
      direct.push(std::abs(s));
    }
    CHECK(std::abs(lhs.mean - direct.mean()) <= 4.0 * std::hypot(lhs.se, direct.standard_error()));
  }

  TEST_CASE("envelope is monotone and the zero envelope fails") {
    const FunctionClass cls = legendre_class(2);
    PsiOptions opt;
    opt.reps = 200;
    opt.seed = 3;
    const auto env = estimate_psi(cls, Law::uniform01(), 20, opt);
    REQUIRE(env.values.size() == 21 * 21);
    for (std::size_t a = 0; a <= 20; ++a) {
      for (std::size_t b = 0; b <= 20; ++b) {
        const double v = env.values[a * 21 + b];
        if (a == 0 || b == 0) CHECK(v == 0.0);
        if (a > 0) CHECK(v >= env.values[(a - 1) * 21 + b]);
        if (b > 0) CHECK(v >= env.values[a * 21 + b - 1]);
      }
    }
    InequalityConfig bad{"zero", cls, Law::uniform01(), WeightScheme::gaussian(), 10, 500, 100, opt,
                         PsiEnvelope::zero(2, 10)};
    const auto r = check_inequality(bad);
    CHECK_FALSE(r.pass);
    InequalityConfig good = bad;
    good.envelope.reset();
    CHECK(check_inequality(good).pass);
  }

  TEST_CASE("huskova identities") {
    const std::vector<double> w{3.0, 0.0, 1.0, 2.0, 0.0, 0.0};
    const std::vector<int> a1{1};
    CHECK(huskova_check(w, a1, HuskovaMode::Exhaustive).lhs_signed == 0.0);
    const std::vector<int> a2{2};
    double ss = 0.0;
    for (double v : w) ss += (v - 1.0) * (v - 1.0);
    CHECK(huskova_check(w, a2, HuskovaMode::Exhaustive).lhs == doctest::Approx(ss / 6.0).epsilon(1e-14));
    const std::vector<double> bad{1.0, 1.0, 2.0};
    CHECK_THROWS_AS(huskova_check(bad, a1, HuskovaMode::Exhaustive), Error);
  }

  TEST_CASE("huskova exhaustive matches Monte Carlo") {
    const auto w = gen_weights(WeightScheme::efron(), 6, 12);
    const std::vector<int> alpha{2, 1, 1};
    const auto ex = huskova_check(w, alpha, HuskovaMode::Exhaustive);
    const auto mc = huskova_check(w, alpha, HuskovaMode::MonteCarlo, 200000, 13);
    CHECK(std::abs(ex.lhs_signed - mc.lhs_signed) <= 4.0 * mc.lhs_se + 1e-12);
    // hand oracle: average over ordered triples of distinct indices
    double total = 0.0, count = 0.0;
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j)
        for (int k = 0; k < 6; ++k) {
          if (i == j || i == k || j == k) continue;
          total += (w[i] - 1) * (w[i] - 1) * (w[j] - 1) * (w[k] - 1);
          count += 1.0;
        }
    CHECK(ex.lhs_signed == doctest::Approx(total / count).epsilon(1e-12));
  }

  TEST_CASE("huskova odd degree with symmetric weights is zero") {
    const std::vector<double> w{2.0, 1.5, 1.0, 0.5, 0.0, 1.0};
    for (const auto& alpha : std::vector<std::vector<int>>{{3}, {2, 1}, {1, 1, 1}, {3, 2}, {1, 1, 1, 1, 1}}) {
      CHECK(huskova_check(w, alpha, HuskovaMode::Exhaustive).lhs_signed == 0.0);
    }
  }
}
