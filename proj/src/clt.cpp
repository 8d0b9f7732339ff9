#include "ustat/clt.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "ustat/error.hpp"
#include "ustat/numeric.hpp"
#include "ustat/ustat.hpp"

namespace ustat {

ChaosSpec ChaosSpec::from_kernel(const Kernel& kernel, const Law& law) {
  const SeparableForm* sep = kernel.separable();
  if (sep == nullptr) throw Error(ErrorCode::UnsupportedMethod, "chaos limit needs a separable kernel");
  ChaosSpec spec;
  spec.m = kernel.order();
  if (spec.m < 1) throw Error(ErrorCode::OrderOutOfRange, "chaos limit needs order >= 1");
  std::vector<Factor> factors;
  for (std::size_t q = 0; q < sep->coeffs.size(); ++q) {
    if (sep->coeffs[q] == 0.0) continue;
    const auto mu = sep->factors[q].mean(law);
    if (!mu) throw Error(ErrorCode::UnsupportedMethod, "factor mean unknown under " + law.name());
    if (std::abs(*mu) > 1e-10) {
      throw Error(ErrorCode::DegeneracyCheckFailed, "factor '" + sep->factors[q].name() + "' is not centered");
    }
    spec.coeffs.push_back(sep->coeffs[q]);
    factors.push_back(sep->factors[q]);
  }
  const std::size_t k = factors.size();
  spec.sigma.assign(k, std::vector<double>(k, 0.0));
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a; b < k; ++b) {
      const auto v = factors[a].times(factors[b]).mean(law);
      if (!v) throw Error(ErrorCode::UnsupportedMethod, "factor covariance unknown under " + law.name());
      spec.sigma[a][b] = spec.sigma[b][a] = *v;
    }
  }
  return spec;
}

std::vector<double> ChaosSpec::second_moments() const {
  std::vector<double> out;
  for (std::size_t q = 0; q < sigma.size(); ++q) out.push_back(sigma[q][q]);
  return out;
}

double eval_R_m(std::span<const double> b, int m) {
  if (m < 1) throw Error(ErrorCode::OrderOutOfRange, "R_m needs m >= 1");
  return newton_polynomial(b, m);
}

namespace {

Eigen::MatrixXd psd_sqrt(const std::vector<std::vector<double>>& sigma) {
  const auto k = static_cast<Eigen::Index>(sigma.size());
  Eigen::MatrixXd s(k, k);
  for (Eigen::Index a = 0; a < k; ++a) {
    for (Eigen::Index b = 0; b < k; ++b) {
      s(a, b) = sigma[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
      if (std::abs(s(a, b) - sigma[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)]) > 1e-12) {
        throw Error(ErrorCode::CovarianceNotPSD, "factor covariance is not symmetric");
      }
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
  Eigen::VectorXd vals = eig.eigenvalues();
  const double scale = std::max(1.0, vals.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < vals.size(); ++i) {
    if (vals(i) < -1e-10 * scale) throw Error(ErrorCode::CovarianceNotPSD, "factor covariance has a negative eigenvalue");
    vals(i) = std::sqrt(std::max(vals(i), 0.0));
  }
  return eig.eigenvectors() * vals.asDiagonal();
}

}  // namespace

std::vector<double> sample_chaos(const ChaosSpec& spec, std::size_t n_draws, std::uint64_t seed) {
  if (n_draws < 1) throw Error(ErrorCode::InvalidArgument, "n_draws must be positive");
  std::vector<double> out(n_draws, 0.0);
  const std::size_t k = spec.coeffs.size();
  if (k == 0) return out;
  const Eigen::MatrixXd root = psd_sqrt(spec.sigma);
  const auto second = spec.second_moments();
  const double scale = std::sqrt(factorial(spec.m));
  Rng rng(derive_seed(seed, {"chaos"}));
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(static_cast<Eigen::Index>(k));
  std::vector<double> b(static_cast<std::size_t>(spec.m), 0.0);
  for (std::size_t d = 0; d < n_draws; ++d) {
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
    const Eigen::VectorXd g = root * z;
    double total = 0.0;
    for (std::size_t q = 0; q < k; ++q) {
      if (spec.coeffs[q] == 0.0) continue;
      b[0] = g(static_cast<Eigen::Index>(q));
      if (spec.m >= 2) b[1] = second[q];
      total += spec.coeffs[q] * scale * eval_R_m(b, spec.m);
    }
    out[d] = total;
  }
  return out;
}

double null_ks_quantile(const ChaosSpec& spec, std::size_t replicates, std::size_t reference, std::size_t reps,
                        double level, std::uint64_t seed) {
  std::vector<double> ks(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    const auto a = sample_chaos(spec, replicates, derive_seed(seed, {"null-ks", r, "a"}));
    const auto b = sample_chaos(spec, reference, derive_seed(seed, {"null-ks", r, "b"}));
    ks[r] = ks_distance(a, b);
  }
  return quantile(ks, level);
}

namespace {

// exact when every factor mean is known, MC otherwise
bool centered_factors(const Kernel& kernel, const Law& law) {
  const SeparableForm* sep = kernel.separable();
  if (sep == nullptr) return false;
  for (std::size_t q = 0; q < sep->coeffs.size(); ++q) {
    if (sep->coeffs[q] == 0.0) continue;
    const auto mu = sep->factors[q].mean(law);
    if (!mu || std::abs(*mu) > 1e-10) return false;
  }
  return true;
}

void require_degenerate(const Kernel& kernel, const Law& law, const CltConfig& config) {
  if (centered_factors(kernel, law)) return;
  DegeneracyOptions options;
  options.n_mc = config.degeneracy_mc;
  options.seed = derive_seed(config.seed, {"degeneracy"});
  options.threads = config.threads;
  const auto report = check_complete_degeneracy(kernel, law, options);
  if (!report.pass) {
    throw Error(ErrorCode::DegeneracyCheckFailed,
                "kernel '" + kernel.name() + "' is not completely degenerate (max standardized " +
                    std::to_string(report.max_standardized) + ")");
  }
}

}  // namespace

CltExperimentResult multiplier_clt_experiment(const Kernel& kernel, const Law& law, const WeightScheme& scheme,
                                              const CltConfig& config) {
  if (!scheme.is_iid() || !scheme.is_centered_unit_variance()) {
    throw Error(ErrorCode::InvalidArgument, "multiplier CLT needs iid centered unit-variance multipliers");
  }
  require_degenerate(kernel, law, config);
  const ChaosSpec spec = ChaosSpec::from_kernel(kernel, law);
  const int m = kernel.order();
  const double root_binom = std::sqrt(binomial(config.n, static_cast<std::size_t>(m)));

  CltExperimentResult out;
  out.kind = "multiplier-clt";
  out.data_seed = derive_seed(config.seed, {"multiplier-clt", "data"});
  out.weight_seed = derive_seed(config.seed, {"multiplier-clt", "weights"});
  out.reference_seed = derive_seed(config.seed, {"multiplier-clt", "reference"});
  out.replicates.assign(config.B, 0.0);
  parallel_for(config.B, config.threads, [&](std::size_t r) {
    Rng data_rng(derive_seed(out.data_seed, {r}));
    const Sample x = law.sample(config.n, data_rng);
    const auto xi = gen_weights(scheme, config.n, derive_seed(out.weight_seed, {r}));
    out.replicates[r] = root_binom * multiplier_ustat(x, xi, kernel).value;
  });
  out.reference = sample_chaos(spec, config.ref_draws, out.reference_seed);
  out.ks = ks_distance(out.replicates, out.reference);
  return out;
}

CltExperimentResult bootstrap_clt_experiment(const Kernel& kernel, const Law& law, const WeightScheme& scheme,
                                             const CltConfig& config) {
  const auto w = validate_W(scheme, config.n, 20, derive_seed(config.seed, {"bootstrap-clt", "w1"}));
  if (!w.w1_pass) throw Error(ErrorCode::W1Violation, scheme.name() + ": " + w.w1_failure);
  require_degenerate(kernel, law, config);
  const ChaosSpec spec = ChaosSpec::from_kernel(kernel, law);
  const int m = kernel.order();
  const double root_binom = std::sqrt(binomial(config.n, static_cast<std::size_t>(m)));

  CltExperimentResult out;
  out.kind = "bootstrap-clt";
  out.data_seed = derive_seed(config.seed, {"bootstrap-clt", "data"});
  out.weight_seed = derive_seed(config.seed, {"bootstrap-clt", "weights"});
  out.reference_seed = derive_seed(config.seed, {"bootstrap-clt", "reference"});
  Rng data_rng(out.data_seed);
  const Sample x = law.sample(config.n, data_rng);

  const Estimate c2 = estimate_c2(scheme, config.n, config.c2_reps, derive_seed(config.seed, {"bootstrap-clt", "c2"}));
  out.c_hat = std::sqrt(std::max(c2.mean, 0.0));
  out.c_hat_se = out.c_hat > 0.0 ? c2.se / (2.0 * out.c_hat) : 0.0;

  out.replicates.assign(config.B, 0.0);
  parallel_for(config.B, config.threads, [&](std::size_t r) {
    const auto xi = gen_weights(scheme, config.n, derive_seed(out.weight_seed, {r}));
    out.replicates[r] = root_binom * centered_multiplier_ustat(x, xi, kernel).value;
  });
  out.reference = sample_chaos(spec, config.ref_draws, out.reference_seed);
  for (double& v : out.reference) v *= out.c_hat;
  out.ks = ks_distance(out.replicates, out.reference);
  return out;
}

}  // namespace ustat
