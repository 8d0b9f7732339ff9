#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ustat/law.hpp"

namespace ustat {

/// A polynomial a_0 + a_1 x + ... in one coordinate of an observation.
/// Factors are closed under centering and multiplication, and their means
/// are exact under every built-in law, which is what makes symbolic
/// Hoeffding projections possible.
class Factor {
 public:
  Factor() = default;
  explicit Factor(std::vector<double> coeffs, int coord = 0, std::string name = {});

  static Factor constant(double c);
  static Factor identity(int coord = 0);
  /// Shifted Legendre polynomial of the given degree, orthonormal and
  /// centered under Uniform(0,1).
  static Factor legendre(int degree, int coord = 0);

  double operator()(const Point& x) const noexcept;
  std::optional<double> mean(const Law& law) const;
  Factor shifted(double delta) const;  // this - delta
  Factor times(const Factor& other) const;

  const std::vector<double>& coeffs() const noexcept { return coeffs_; }
  int coord() const noexcept { return coord_; }
  const std::string& name() const noexcept { return name_; }

 private:
  std::vector<double> coeffs_{0.0};
  int coord_ = 0;
  std::string name_;
};

/// f = sum_q c_q psi_q(x_1) ... psi_q(x_m).
struct SeparableForm {
  std::vector<double> coeffs;
  std::vector<Factor> factors;
};

using KernelFn = std::function<double(std::span<const Point>)>;

/// A symmetric real kernel of order m.
class Kernel {
 public:
  enum class Structure { General, Separable, Indicator };
  enum class Symmetry { Asserted, Symmetrize };

  /// `Symmetrize` averages fn over all m! argument orders (m <= 4).
  static Kernel general(int order, KernelFn fn, std::string name,
                        Symmetry symmetry = Symmetry::Asserted);
  static Kernel indicator(int order, KernelFn fn, std::string name);
  static Kernel separable(int order, std::vector<double> coeffs, std::vector<Factor> factors,
                          std::string name);
  static Kernel constant(int order, double c);

  double operator()(std::span<const Point> args) const;

  int order() const noexcept { return order_; }
  Structure structure() const noexcept { return structure_; }
  const SeparableForm* separable() const noexcept { return sep_ ? &*sep_ : nullptr; }
  const std::string& name() const noexcept { return name_; }

 private:
  Kernel() = default;

  int order_ = 0;
  Structure structure_ = Structure::General;
  KernelFn fn_;
  std::optional<SeparableForm> sep_;
  std::string name_;
};

/// Largest |f(x_sigma) - f(x)| over random inputs and random permutations.
double max_asymmetry(const Kernel& kernel, const Law& law, int trials, Rng& rng);

/// A finite class of kernels sharing one order.
class FunctionClass {
 public:
  explicit FunctionClass(std::vector<Kernel> kernels);

  int order() const noexcept { return kernels_.front().order(); }
  std::size_t size() const noexcept { return kernels_.size(); }
  const Kernel& operator[](std::size_t i) const { return kernels_[i]; }
  const std::vector<Kernel>& kernels() const noexcept { return kernels_; }
  bool all_separable() const noexcept;

 private:
  std::vector<Kernel> kernels_;
};

namespace builtin {

Kernel product_xy();
/// psi(x) psi(y) with psi = sqrt(3) (2x - 1).
Kernel centered_legendre1_pair();
/// psi(x) psi(y) with psi the degree-d centered Legendre factor, order m.
Kernel legendre_power(int degree, int order);
/// Indicator that theta lies in the open triangle spanned by three points.
Kernel simplicial_indicator(Point theta);

/// Names accepted by kernel_by_name.
std::vector<std::string> kernel_names();
std::optional<Kernel> kernel_by_name(const std::string& name);

}  // namespace builtin

}  // namespace ustat
