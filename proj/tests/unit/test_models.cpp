#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "ustat/error.hpp"
#include "ustat/mestimation.hpp"
#include "ustat/numeric.hpp"
#include "ustat/sampling.hpp"
#include "ustat/ustat.hpp"
#include "ustat/weights.hpp"

using namespace ustat;

namespace {

Sample planar(std::initializer_list<Point> ps) { return Sample(std::vector<Point>(ps), 2); }

double weighted_pair_mean(const Sample& x, const std::vector<double>& w) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      num += w[i] * w[j] * (x[i][0] + x[j][0]) / 2.0;
      den += w[i] * w[j];
    }
  }
  return num / den;
}

// pairwise ranking risk by 2-d midpoint rule; cell edges fall on tau
double ranking_risk_oracle(double tau) {
  const int cells = 2000;
  const double h = 1.0 / cells;
  long double total = 0.0;
  for (int a = 0; a < cells; ++a) {
    const double x = (a + 0.5) * h;
    const int sx = x >= tau;
    for (int b = 0; b < cells; ++b) {
      const double y = (b + 0.5) * h;
      const int sy = y >= tau;
      const double tie = sx == sy ? 0.5 : 0.0;
      total += x * (1.0 - y) * ((sx < sy ? 1.0 : 0.0) + tie) + (1.0 - x) * y * ((sx > sy ? 1.0 : 0.0) + tie);
    }
  }
  return static_cast<double>(total * h * h);
}

}  // namespace

TEST_SUITE("mestimation") {
  TEST_CASE("depth of a triangle and of an exterior point") {
    const Sample tri = planar({Point{0.0, 0.0}, Point{3.0, 0.0}, Point{0.0, 3.0}});
    for (auto algo : {DepthAlgo::Brute, DepthAlgo::Sweep}) {
      CHECK(simplicial_depth(tri, Point{1.0, 1.0}, {}, algo) == 1.0);
      CHECK(simplicial_depth(tri, Point{5.0, 5.0}, {}, algo) == 0.0);
    }
  }

  TEST_CASE("degenerate positions raise") {
    const Sample x = planar({Point{0.0, 0.0}, Point{1.0, 0.0}, Point{0.0, 1.0}, Point{-1.0, -1.0}});
    for (auto algo : {DepthAlgo::Brute, DepthAlgo::Sweep}) {
      CHECK_THROWS_AS(simplicial_depth(x, Point{0.0, 0.0}, {}, algo), Error);
      // collinear with (1,0) and (-1,-1)? no: with (0,0) and (1,0)
      CHECK_THROWS_AS(simplicial_depth(x, Point{0.5, 0.0}, {}, algo), Error);
    }
  }

  TEST_CASE("sweep equals brute on random weighted configurations") {
    Rng rng(41);
    const Law law = Law::bivariate_normal({0.0, 0.0}, {{{1.0, 0.3}, {0.3, 1.0}}});
    for (int s = 0; s < 100; ++s) {
      const Sample x = law.sample(25, rng);
      std::vector<double> w(25);
      for (double& v : w) v = 0.1 + 2.0 * uniform_open(rng);
      const Point theta{0.5 * (uniform_open(rng) - 0.5), 0.5 * (uniform_open(rng) - 0.5)};
      const double unit = simplicial_depth(x, theta, {}, DepthAlgo::Brute);
      CHECK(simplicial_depth(x, theta, {}, DepthAlgo::Sweep) == unit);
      CHECK(unit == std::floor(unit));
      CHECK(unit <= binomial(25, 3));
      const double wb = simplicial_depth(x, theta, w, DepthAlgo::Brute);
      CHECK(simplicial_depth(x, theta, w, DepthAlgo::Sweep) == doctest::Approx(wb).epsilon(1e-9));
    }
  }

  TEST_CASE("quadratic criterion recovers the sample mean") {
    Rng rng(3);
    const Sample x = Law::normal(2.0, 1.5).sample(60, rng);
    const auto xs = x.coordinate(0);
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / 60.0;
    const auto fit = fit_m_estimator(MCriterion::quadratic_mean(), x, {}, Optimizer::grid_refine(10, 21));
    CHECK(fit[0] == doctest::Approx(mean).epsilon(1e-9));
    CHECK(quadratic_argmax(x, {}) == doctest::Approx(mean).epsilon(1e-12));
    const auto nm = fit_m_estimator(MCriterion::quadratic_mean(), x, {}, Optimizer::simplex(500, 1e-12));
    CHECK(nm[0] == doctest::Approx(mean).epsilon(1e-6));
  }

  TEST_CASE("weighted quadratic criterion gives the weighted pair mean") {
    Rng rng(4);
    const Sample x = Law::uniform01().sample(40, rng);
    const auto w = gen_weights(WeightScheme::efron(), 40, 5);
    const double want = weighted_pair_mean(x, w);
    const auto fit = fit_m_estimator(MCriterion::quadratic_mean(), x, w, Optimizer::grid_refine(10, 21));
    CHECK(fit[0] == doctest::Approx(want).epsilon(1e-9));
    // dense grid over the objective
    const auto obj = MCriterion::quadratic_mean().objective(x, w);
    double best = -INFINITY, arg = 0.0;
    for (int g = 0; g <= 100000; ++g) {
      const std::vector<double> t{g / 100000.0};
      const double v = obj(t);
      if (v > best) {
        best = v;
        arg = t[0];
      }
    }
    CHECK(std::abs(fit[0] - arg) <= 1e-5);
  }

  TEST_CASE("argmax is invariant to scaling the weights") {
    Rng rng(6);
    const Sample x = Law::bivariate_normal({0.0, 0.0}, {{{1.0, 0.0}, {0.0, 1.0}}}).sample(30, rng);
    const auto w = gen_weights(WeightScheme::bayesian(), 30, 7);
    std::vector<double> w2(w);
    for (double& v : w2) v *= 2.0;
    const auto opt = Optimizer::grid_refine(3, 21);
    CHECK(fit_m_estimator(MCriterion::simplicial_median(), x, w, opt) ==
          fit_m_estimator(MCriterion::simplicial_median(), x, w2, opt));
  }

  TEST_CASE("simplicial median of a square with its center") {
    const Sample x = planar({Point{-1.0, -1.0}, Point{1.0, -1.0}, Point{1.0, 1.0}, Point{-1.0, 1.0}, Point{0.0, 0.0}});
    const auto opt = Optimizer::grid_refine(3, 21);
    const auto fit = fit_m_estimator(MCriterion::simplicial_median(), x, {}, opt);
    // the center itself is a data point, so the fit lands next to it
    CHECK(std::hypot(fit[0], fit[1]) <= 2.0 * opt.resolution(2.0) + 1e-12);
    CHECK(simplicial_depth(x, Point{fit[0], fit[1]}) == 3.0);
  }

  TEST_CASE("simplicial median is translation equivariant") {
    Rng rng(8);
    const Sample x = Law::bivariate_normal({0.0, 0.0}, {{{1.0, 0.0}, {0.0, 1.0}}}).sample(40, rng);
    std::vector<Point> shifted;
    for (const auto& p : x.points()) shifted.push_back(Point{p[0] + 3.0, p[1] - 2.0});
    const auto opt = Optimizer::grid_refine(3, 21);
    const auto a = fit_m_estimator(MCriterion::simplicial_median(), x, {}, opt);
    const auto b = fit_m_estimator(MCriterion::simplicial_median(), Sample(shifted, 2), {}, opt);
    double width = 0.0;
    for (int c = 0; c < 2; ++c) {
      const auto col = x.coordinate(c);
      width = std::max(width, *std::max_element(col.begin(), col.end()) - *std::min_element(col.begin(), col.end()));
    }
    CHECK(std::abs(b[0] - a[0] - 3.0) <= opt.resolution(width) + 1e-9);
    CHECK(std::abs(b[1] - a[1] + 2.0) <= opt.resolution(width) + 1e-9);
  }

  TEST_CASE("missing bounds") {
    Optimizer o = Optimizer::grid_refine(2, 5);
    o.data_bounds = false;
    const Sample x = Sample::from_scalars(std::vector<double>{1.0, 2.0, 3.0});
    CHECK_THROWS_AS(fit_m_estimator(MCriterion::quadratic_mean(), x, {}, o), Error);
    o.bounds = Bounds{{0.0}, {4.0}};
    CHECK(fit_m_estimator(MCriterion::quadratic_mean(), x, {}, o)[0] == doctest::Approx(2.0));
  }

  TEST_CASE("constant unit weights give a point mass bootstrap") {
    BootstrapMConfig c;
    c.n = 50;
    c.B = 20;
    c.mc_datasets = 20;
    c.c2_reps = 100;
    c.seed = 2;
    const auto r = bootstrap_m_experiment(MCriterion::quadratic_mean(0.5), Law::uniform01(),
                                          WeightScheme::constant(1.0), Optimizer::grid_refine(10, 21), c);
    for (double v : r.bootstrap[0]) CHECK(v == 0.0);
  }

  TEST_CASE("bootstrap experiment needs the true parameter") {
    BootstrapMConfig c;
    c.n = 20;
    c.B = 5;
    c.mc_datasets = 5;
    CHECK_THROWS_AS(bootstrap_m_experiment(MCriterion::quadratic_mean(), Law::uniform01(), WeightScheme::efron(),
                                           Optimizer::grid_refine(10, 21), c),
                    Error);
  }
}

TEST_SUITE("sampling") {
  TEST_CASE("Bernoulli marginals") {
    const std::size_t N = 1000;
    std::vector<double> freq(N, 0.0);
    for (std::size_t r = 0; r < 10000; ++r) {
      const auto d = draw_design(Design::bernoulli(0.5), N, {}, derive_seed(1, {r}));
      for (std::size_t i = 0; i < N; ++i) freq[i] += d.xi[i];
    }
    const double se = std::sqrt(0.25 / 10000.0);
    std::size_t outside = 0;
    for (double f : freq) outside += std::abs(f / 10000.0 - 0.5) > 4.0 * se ? 1 : 0;
    CHECK(outside <= 1);
    CHECK(design_probabilities(Design::bernoulli(0.5), N).pi[17] == 0.5);
  }

  TEST_CASE("SRSWOR size and pair frequencies") {
    const auto d = draw_design(Design::srswor(100), 400, {}, 3);
    CHECK(d.sample_size() == 100);
    CHECK(d.pi[0] == 0.25);
    const std::size_t N = 20, n = 5;
    double both = 0.0;
    const std::size_t reps = 100000;
    for (std::size_t r = 0; r < reps; ++r) {
      const auto e = draw_design(Design::srswor(n), N, {}, derive_seed(4, {r}));
      REQUIRE(e.sample_size() == n);
      both += e.xi[2] * e.xi[11];
    }
    const double p = static_cast<double>(n * (n - 1)) / static_cast<double>(N * (N - 1));
    CHECK(std::abs(both / reps - p) <= 4.0 * std::sqrt(p * (1 - p) / reps));
    CHECK(d.pair_probability(0, 1) == doctest::Approx(100.0 * 99.0 / (400.0 * 399.0)));
  }

  TEST_CASE("stratified probabilities") {
    std::vector<double> z(400);
    for (std::size_t i = 0; i < 400; ++i) z[i] = i < 200 ? -1.0 : 1.0;
    const auto d = draw_design(Design::stratified({0.0}, {50, 100}), 400, z, 5);
    CHECK(d.pi[0] == 0.25);
    CHECK(d.pi[399] == 0.5);
    double first = 0.0;
    for (std::size_t i = 0; i < 200; ++i) first += d.xi[i];
    CHECK(first == 50.0);
    CHECK(d.sample_size() == 150);
  }

  TEST_CASE("B1 violation") {
    CHECK_THROWS_AS(design_probabilities(Design::bernoulli(0.005, 0.01), 10), Error);
    CHECK_THROWS_AS(design_probabilities(Design::srswor(1, 0.2), 10), Error);
  }

  TEST_CASE("Poisson unequal probabilities follow the logistic map") {
    const std::vector<double> z{-2.0, 0.0, 3.0};
    const auto d = design_probabilities(Design::poisson_unequal(0.1), 3, z);
    CHECK(d.pi[1] == doctest::Approx(0.1 + 0.9 * 0.5));
    CHECK(d.pi[2] == doctest::Approx(0.1 + 0.9 / (1.0 + std::exp(-3.0))));
  }

  TEST_CASE("full sampling reproduces the plain statistics") {
    Rng rng(6);
    const Sample x = Law::uniform01().sample(30, rng);
    const auto full = DesignDraw::full(30);
    CHECK(ht_ustat(x, full, builtin::product_xy()) == doctest::Approx(ustat::ustat(x, builtin::product_xy()).value));
    const auto opt = Optimizer::grid_refine(10, 21);
    CHECK(ht_m_estimator(MCriterion::quadratic_mean(), x, full, opt) ==
          fit_m_estimator(MCriterion::quadratic_mean(), x, {}, opt));
  }

  TEST_CASE("HT quadratic fit is the HT pair mean") {
    Rng rng(7);
    const Sample x = Law::normal(0.0, 1.0).sample(80, rng);
    const auto d = draw_design(Design::bernoulli(0.5), 80, {}, 8);
    const auto fit = ht_m_estimator(MCriterion::quadratic_mean(), x, d, Optimizer::grid_refine(10, 21));
    CHECK(fit[0] == doctest::Approx(weighted_pair_mean(x, d.ht_weights())).epsilon(1e-9));
  }

  TEST_CASE("HT simplicial median lies inside the observed hull") {
    Rng rng(9);
    const Sample x = Law::bivariate_normal({0.0, 0.0}, {{{1.0, 0.0}, {0.0, 1.0}}}).sample(200, rng);
    const auto d = draw_design(Design::srswor(100), 200, {}, 10);
    const auto fit = ht_m_estimator(MCriterion::simplicial_median(), x, d, Optimizer::grid_refine(3, 21));
    std::vector<Point> observed;
    for (std::size_t i = 0; i < 200; ++i) {
      if (d.xi[i] > 0.0) observed.push_back(x[i]);
    }
    CHECK(std::isfinite(fit[0]));
    CHECK(simplicial_depth(Sample(observed, 2), Point{fit[0], fit[1]}) > 0.0);
  }

  TEST_CASE("HT unbiasedness under independent designs") {
    Rng rng(11);
    const Sample pop = Law::uniform01().sample(100, rng);
    const auto z = pop.coordinate(0);
    for (const auto& design : {Design::bernoulli(0.4), Design::poisson_unequal(0.05)}) {
      const auto r = ht_bias_experiment(pop, design, builtin::product_xy(), z, 10000, 12);
      CHECK(std::abs(r.z_unbiased) <= 4.0);
      REQUIRE(r.exact_bias.has_value());
      CHECK(std::abs(*r.exact_bias) <= 1e-12);
    }
  }

  TEST_CASE("SRSWOR exact bias and its Monte Carlo estimate") {
    Rng rng(13);
    const Sample pop = Law::uniform01().sample(60, rng);
    const auto r = ht_bias_experiment(pop, Design::srswor(20), builtin::product_xy(), {}, 40000, 14);
    // E[HT] = (N / n)^2 pi_ij U = ((n - 1) N / (n (N - 1))) U
    const double want = (19.0 * 60.0 / (20.0 * 59.0) - 1.0) * r.full_value;
    CHECK(*r.exact_bias == doctest::Approx(want).epsilon(1e-12));
    CHECK(std::abs(r.mc_bias - want) <= 4.0 * r.ht.se);
  }

  TEST_CASE("linearization residual vanishes under full sampling") {
    const std::vector<std::size_t> Ns{50, 100};
    const auto lv = linearization_check(MCriterion::quadratic_mean(0.0), Law::normal(0.0, 1.0), Design::bernoulli(1.0),
                                        Ns, 20, Optimizer::grid_refine(10, 21), 15);
    for (const auto& l : lv) CHECK(l.max_abs <= 1e-8);
    const std::vector<std::size_t> tiny{2};
    CHECK_THROWS_AS(linearization_check(MCriterion::quadratic_mean(0.0), Law::normal(0.0, 1.0),
                                        Design::bernoulli(0.5), tiny, 5, Optimizer::grid_refine(10, 21), 1),
                    Error);
    CHECK_THROWS_AS(linearization_check(MCriterion::quadratic_mean(), Law::normal(0.0, 1.0), Design::bernoulli(0.5),
                                        Ns, 5, Optimizer::grid_refine(10, 21), 1),
                    Error);
  }

  TEST_CASE("ranking risks match numerical integration") {
    for (double tau : {0.0, 0.25, 0.5, 0.7, 1.0}) {
      CHECK(threshold_ranking_risk(tau) == doctest::Approx(ranking_risk_oracle(tau)).epsilon(1e-6));
    }
    const auto p = ErmProblem::threshold_ranking(0.05);
    CHECK(*std::min_element(p.excess_risk.begin(), p.excess_risk.end()) == 0.0);
  }

  TEST_CASE("ranking fast path agrees with the kernel") {
    Rng rng(16);
    const auto p = ErmProblem::threshold_ranking(0.1);
    const Sample x = p.law.sample(30, rng);
    const auto w = draw_design(Design::bernoulli(0.5), 30, {}, 17).ht_weights();
    const auto fast = p.criterion_values(x, w);
    for (std::size_t k = 0; k < p.kernels.size(); ++k) {
      const double slow = multiplier_ustat(x, w, p.kernels[k], Normalization::DistinctTupleSum).value;
      CHECK(fast[k] == doctest::Approx(slow).epsilon(1e-12));
    }
  }

  TEST_CASE("singleton ERM has constant excess risk") {
    const auto p = ErmProblem::singleton(builtin::product_xy(), Law::uniform01(), 0.125);
    const std::vector<std::size_t> Ns{20, 40};
    for (const auto& l : erm_experiment(p, Design::bernoulli(0.5), Ns, 10, 3)) {
      for (double e : l.excess) CHECK(e == 0.125);
    }
  }

  TEST_CASE("B2 law of large numbers statistic") {
    const auto b = validate_B(Design::bernoulli(0.5), 200, 2000, 1);
    CHECK(b.b1_pass);
    CHECK(b.sd_decreasing);
    for (std::size_t k = 1; k < b.levels.size(); ++k) {
      const double ratio = b.levels[k - 1].sd / b.levels[k].sd;
      CHECK(ratio >= std::sqrt(2.0) / 1.3);
      CHECK(ratio <= std::sqrt(2.0) * 1.3);
    }
    for (const auto& l : validate_B(Design::bernoulli(1.0), 100, 50, 2).levels) CHECK(l.max_abs == 0.0);
    for (const auto& l : validate_B(Design::srswor_fraction(0.5), 100, 50, 3).levels) CHECK(l.max_abs <= 1e-12);
  }

  TEST_CASE("population csv") {
    const auto path = std::filesystem::temp_directory_path() / "ustat_population_test.csv";
    std::ofstream(path) << "x1,x2,z\n1.0,2.0,0.5\n3.0,4.0,-0.5\n";
    const auto pop = read_population_csv(path.string());
    CHECK(pop.x.size() == 2);
    CHECK(pop.x.dim() == 2);
    CHECK(pop.x[1][1] == 4.0);
    REQUIRE(pop.z.has_value());
    CHECK((*pop.z)[1] == -0.5);
    std::ofstream(path) << "a,b\n1,2\n";
    CHECK_THROWS_AS(read_population_csv(path.string()), Error);
    std::filesystem::remove(path);
  }
}
