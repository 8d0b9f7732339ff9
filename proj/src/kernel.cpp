#include "ustat/kernel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "ustat/error.hpp"
#include "ustat/geometry.hpp"
#include "ustat/numeric.hpp"

namespace ustat {

Factor::Factor(std::vector<double> coeffs, int coord, std::string name)
    : coeffs_(std::move(coeffs)), coord_(coord), name_(std::move(name)) {
  if (coeffs_.empty()) coeffs_.push_back(0.0);
  if (coord_ < 0 || coord_ > 1) throw Error(ErrorCode::InvalidArgument, "factor coordinate must be 0 or 1");
}

Factor Factor::constant(double c) { return Factor({c}, 0, "const"); }

Factor Factor::identity(int coord) { return Factor({0.0, 1.0}, coord, "x"); }

Factor Factor::legendre(int degree, int coord) {
  if (degree < 0 || degree > 12) throw Error(ErrorCode::InvalidArgument, "Legendre degree out of range");
  // sqrt(2d+1) * sum_k (-1)^(d+k) binom(d,k) binom(d+k,k) x^k
  std::vector<double> c(static_cast<std::size_t>(degree) + 1);
  const double norm = std::sqrt(2.0 * degree + 1.0);
  for (int k = 0; k <= degree; ++k) {
    const double sign = ((degree + k) % 2 == 0) ? 1.0 : -1.0;
    c[static_cast<std::size_t>(k)] = norm * sign * binomial(degree, k) * binomial(degree + k, k);
  }
  return Factor(std::move(c), coord, "legendre" + std::to_string(degree));
}

double Factor::operator()(const Point& x) const noexcept {
  const double v = x[static_cast<std::size_t>(coord_)];
  double acc = 0.0;
  for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) acc = acc * v + *it;
  return acc;
}

std::optional<double> Factor::mean(const Law& law) const {
  if (coord_ >= law.dim()) return std::nullopt;
  KahanSum s;
  for (std::size_t k = 0; k < coeffs_.size(); ++k) {
    if (coeffs_[k] == 0.0) continue;
    const auto m = law.raw_moment(coord_, static_cast<int>(k));
    if (!m) return std::nullopt;
    s += coeffs_[k] * *m;
  }
  return s.value();
}

Factor Factor::shifted(double delta) const {
  Factor out = *this;
  out.coeffs_[0] -= delta;
  return out;
}

Factor Factor::times(const Factor& other) const {
  const bool this_const = coeffs_.size() == 1;
  const bool other_const = other.coeffs_.size() == 1;
  if (coord_ != other.coord_ && !this_const && !other_const) {
    throw Error(ErrorCode::UnsupportedMethod, "product of factors in different coordinates");
  }
  std::vector<double> c(coeffs_.size() + other.coeffs_.size() - 1, 0.0);
  for (std::size_t i = 0; i < coeffs_.size(); ++i) {
    for (std::size_t j = 0; j < other.coeffs_.size(); ++j) c[i + j] += coeffs_[i] * other.coeffs_[j];
  }
  return Factor(std::move(c), this_const ? other.coord_ : coord_, name_ + "*" + other.name_);
}

Kernel Kernel::general(int order, KernelFn fn, std::string name, Symmetry symmetry) {
  if (order < 1) throw Error(ErrorCode::OrderOutOfRange, "kernel order must be positive");
  if (!fn) throw Error(ErrorCode::InvalidArgument, "kernel function is empty");
  Kernel k;
  k.order_ = order;
  k.structure_ = Structure::General;
  k.name_ = std::move(name);
  if (symmetry == Symmetry::Symmetrize && order > 1) {
    if (order > 4) throw Error(ErrorCode::OrderOutOfRange, "symmetrization supports order <= 4");
    std::vector<std::vector<int>> perms;
    std::vector<int> p(static_cast<std::size_t>(order));
    std::iota(p.begin(), p.end(), 0);
    do perms.push_back(p);
    while (std::next_permutation(p.begin(), p.end()));
    k.fn_ = [fn = std::move(fn), perms = std::move(perms)](std::span<const Point> args) {
      std::array<Point, 4> buf{};
      KahanSum s;
      for (const auto& perm : perms) {
        for (std::size_t i = 0; i < perm.size(); ++i) buf[i] = args[static_cast<std::size_t>(perm[i])];
        s += fn(std::span<const Point>(buf.data(), perm.size()));
      }
      return s.value() / static_cast<double>(perms.size());
    };
  } else {
    k.fn_ = std::move(fn);
  }
  return k;
}

Kernel Kernel::indicator(int order, KernelFn fn, std::string name) {
  Kernel k = general(order, std::move(fn), std::move(name), Symmetry::Asserted);
  k.structure_ = Structure::Indicator;
  return k;
}

Kernel Kernel::separable(int order, std::vector<double> coeffs, std::vector<Factor> factors,
                         std::string name) {
  if (order < 0) throw Error(ErrorCode::OrderOutOfRange, "kernel order must be non-negative");
  if (coeffs.size() != factors.size() || coeffs.empty()) {
    throw Error(ErrorCode::InvalidArgument, "separable kernel needs one coefficient per factor");
  }
  Kernel k;
  k.order_ = order;
  k.structure_ = Structure::Separable;
  k.name_ = std::move(name);
  k.sep_ = SeparableForm{std::move(coeffs), std::move(factors)};
  return k;
}

Kernel Kernel::constant(int order, double c) {
  return separable(order, {c}, {Factor::constant(1.0)}, "constant");
}

double Kernel::operator()(std::span<const Point> args) const {
  if (args.size() != static_cast<std::size_t>(order_)) {
    throw Error(ErrorCode::LengthMismatch, "kernel called with wrong number of arguments");
  }
  if (sep_) {
    double total = 0.0;
    for (std::size_t q = 0; q < sep_->coeffs.size(); ++q) {
      double prod = sep_->coeffs[q];
      for (const Point& x : args) prod *= sep_->factors[q](x);
      total += prod;
    }
    return total;
  }
  return fn_(args);
}

double max_asymmetry(const Kernel& kernel, const Law& law, int trials, Rng& rng) {
  const auto m = static_cast<std::size_t>(kernel.order());
  std::vector<Point> args(m);
  std::vector<Point> perm(m);
  std::vector<std::size_t> idx(m);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    for (auto& a : args) a = law.draw(rng);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i = 0; i < m; ++i) perm[i] = args[idx[i]];
    worst = std::max(worst, std::abs(kernel(perm) - kernel(args)));
  }
  return worst;
}

FunctionClass::FunctionClass(std::vector<Kernel> kernels) : kernels_(std::move(kernels)) {
  if (kernels_.empty()) throw Error(ErrorCode::InvalidArgument, "function class must be non-empty");
  for (const Kernel& k : kernels_) {
    if (k.order() != kernels_.front().order()) {
      throw Error(ErrorCode::OrderOutOfRange, "function class mixes kernel orders");
    }
  }
}

bool FunctionClass::all_separable() const noexcept {
  return std::all_of(kernels_.begin(), kernels_.end(), [](const Kernel& k) { return k.separable() != nullptr; });
}

namespace builtin {

Kernel product_xy() { return Kernel::separable(2, {1.0}, {Factor::identity(0)}, "product_xy"); }

Kernel centered_legendre1_pair() {
  return Kernel::separable(2, {1.0}, {Factor::legendre(1)}, "centered_legendre1_pair");
}

Kernel legendre_power(int degree, int order) {
  return Kernel::separable(order, {1.0}, {Factor::legendre(degree)},
                           "legendre" + std::to_string(degree) + "^" + std::to_string(order));
}

Kernel simplicial_indicator(Point theta) {
  return Kernel::indicator(
      3,
      [theta](std::span<const Point> x) { return in_open_triangle(theta, x[0], x[1], x[2]) ? 1.0 : 0.0; },
      "simplicial_indicator");
}

std::vector<std::string> kernel_names() {
  return {"product_xy",          "centered_legendre1_pair", "centered_legendre2_pair",
          "centered_legendre3_pair", "simplicial_indicator",  "identity", "zero_pair"};
}

std::optional<Kernel> kernel_by_name(const std::string& name) {
  if (name == "product_xy") return product_xy();
  if (name == "centered_legendre1_pair") return centered_legendre1_pair();
  if (name == "centered_legendre2_pair") return legendre_power(2, 2);
  if (name == "centered_legendre3_pair") return legendre_power(3, 2);
  if (name == "simplicial_indicator") return simplicial_indicator(Point{0.0, 0.0});
  if (name == "identity") return Kernel::separable(1, {1.0}, {Factor::identity(0)}, "identity");
  if (name == "zero_pair") return Kernel::constant(2, 0.0);
  return std::nullopt;
}

}  // namespace builtin

}  // namespace ustat
