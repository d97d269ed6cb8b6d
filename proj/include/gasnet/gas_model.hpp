#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include "gasnet/profile.hpp"

namespace gasnet {

// Barotropic pressure laws p(rho) and the associated pressure potential
//   P(rho) = rho * int_1^rho p(r) / r^2 dr,
// normalised so that P(1) = 0. Densities are dimensionless (reference 1).
class GasLaw {
public:
  enum class Kind { isothermal, power_law, tabulated };

  /// p = c^2 rho.
  static GasLaw isothermal(double sound_speed) {
    if (!(sound_speed > 0.0)) throw std::invalid_argument("gas law: sound speed must be positive");
    GasLaw law;
    law.kind_ = Kind::isothermal;
    law.c2_ = sound_speed * sound_speed;
    return law;
  }

  /// p = kappa rho^exponent.
  static GasLaw power_law(double coefficient, double exponent) {
    if (!(coefficient > 0.0) || !(exponent > 0.0))
      throw std::invalid_argument("gas law: power-law coefficient and exponent must be positive");
    GasLaw law;
    law.kind_ = Kind::power_law;
    law.kappa_ = coefficient;
    law.exponent_ = exponent;
    return law;
  }

  /// Monotone cubic interpolation through (rho_k, p_k). Both columns must be
  /// strictly increasing and the density range must contain rho = 1.
  static GasLaw tabulated(std::vector<double> rho, std::vector<double> p) {
    GasLaw law;
    law.kind_ = Kind::tabulated;
    law.table_ = std::make_shared<const Table>(std::move(rho), std::move(p));
    return law;
  }

  /// Reads a two-column (rho, p) plain-text table; '#' starts a comment.
  static GasLaw from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("gas law: cannot open table '" + path + "'");
    std::vector<double> rho, p;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
      for (char& ch : line)
        if (ch == ',') ch = ' ';
      std::istringstream ls(line);
      double r, q;
      if (!(ls >> r)) continue;
      if (!(ls >> q))
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected two columns");
      rho.push_back(r);
      p.push_back(q);
    }
    return tabulated(std::move(rho), std::move(p));
  }

  Kind kind() const { return kind_; }
  double sound_speed_sq() const { return c2_; }
  double coefficient() const { return kappa_; }
  double exponent() const { return exponent_; }
  const std::vector<double>& table_density() const { return table_->rho; }
  const std::vector<double>& table_pressure() const { return table_->p; }

  double pressure(double rho) const {
    require_positive(rho);
    switch (kind_) {
    case Kind::isothermal: return c2_ * rho;
    case Kind::power_law: return kappa_ * std::pow(rho, exponent_);
    case Kind::tabulated: return table_->eval(rho).value;
    }
    return 0.0;
  }

  /// P(rho).
  double potential(double rho) const {
    require_positive(rho);
    switch (kind_) {
    case Kind::isothermal: return c2_ * rho * std::log(rho);
    case Kind::power_law:
      if (exponent_ == 1.0) return kappa_ * rho * std::log(rho);
      return kappa_ * rho * (std::pow(rho, exponent_ - 1.0) - 1.0) / (exponent_ - 1.0);
    case Kind::tabulated: return rho * table_->integral(rho);
    }
    return 0.0;
  }

  /// P'(rho) = int_1^rho p/r^2 dr + p/rho.
  double potential_d1(double rho) const {
    require_positive(rho);
    switch (kind_) {
    case Kind::isothermal: return c2_ * (std::log(rho) + 1.0);
    case Kind::power_law:
      if (exponent_ == 1.0) return kappa_ * (std::log(rho) + 1.0);
      return kappa_ * (exponent_ * std::pow(rho, exponent_ - 1.0) - 1.0) / (exponent_ - 1.0);
    case Kind::tabulated: return table_->integral(rho) + table_->eval(rho).value / rho;
    }
    return 0.0;
  }

  /// P''(rho) = p'(rho) / rho.
  double potential_d2(double rho) const {
    require_positive(rho);
    switch (kind_) {
    case Kind::isothermal: return c2_ / rho;
    case Kind::power_law: return kappa_ * exponent_ * std::pow(rho, exponent_ - 2.0);
    case Kind::tabulated: return table_->eval(rho).slope / rho;
    }
    return 0.0;
  }

  double potential_d3(double rho) const {
    require_positive(rho);
    switch (kind_) {
    case Kind::isothermal: return -c2_ / (rho * rho);
    case Kind::power_law:
      return kappa_ * exponent_ * (exponent_ - 2.0) * std::pow(rho, exponent_ - 3.0);
    case Kind::tabulated: {
      auto v = table_->eval(rho);
      return (v.curvature * rho - v.slope) / (rho * rho);
    }
    }
    return 0.0;
  }

  /// Solves P'(rho) = h for rho (P' is strictly increasing).
  double inverse_potential_d1(double h) const {
    if (kind_ == Kind::isothermal) return std::exp(h / c2_ - 1.0);
    double lo = 1.0, hi = 1.0;
    if (kind_ == Kind::tabulated) {
      lo = table_->rho.front();
      hi = table_->rho.back();
    } else {
      while (potential_d1(lo) > h) {
        lo *= 0.5;
        if (lo < 1e-300) throw std::domain_error("gas law: enthalpy below attainable range");
      }
      while (potential_d1(hi) < h) {
        hi *= 2.0;
        if (hi > 1e300) throw std::domain_error("gas law: enthalpy above attainable range");
      }
    }
    if (potential_d1(lo) > h || potential_d1(hi) < h)
      throw std::domain_error("gas law: enthalpy outside tabulated range");
    auto f = [&](double r) { return potential_d1(r) - h; };
    boost::math::tools::eps_tolerance<double> tol(52);
    std::uintmax_t iters = 200;
    auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, tol, iters);
    return 0.5 * (a + b);
  }

  /// Density range on which the law is defined.
  std::pair<double, double> domain() const {
    if (kind_ == Kind::tabulated) return {table_->rho.front(), table_->rho.back()};
    return {0.0, std::numeric_limits<double>::infinity()};
  }

private:
  struct Sample {
    double value, slope, curvature;
  };

  // Fritsch-Carlson monotone cubic Hermite interpolant of p, with the
  // antiderivative of p(r)/r^2 precomputed at the knots.
  struct Table {
    std::vector<double> rho, p, dp, cumulative;
    double offset = 0.0; // cumulative integral from rho_0 to 1

    Table(std::vector<double> r, std::vector<double> q) : rho(std::move(r)), p(std::move(q)) {
      const std::size_t n = rho.size();
      if (n < 2 || n != p.size())
        throw std::invalid_argument("gas law: table needs at least two (rho, p) rows");
      for (std::size_t k = 0; k < n; ++k)
        if (!(rho[k] > 0.0)) throw std::invalid_argument("gas law: table densities must be positive");
      for (std::size_t k = 1; k < n; ++k)
        if (!(rho[k] > rho[k - 1]) || !(p[k] > p[k - 1]))
          throw std::invalid_argument("gas law: table columns must be strictly increasing");
      if (rho.front() > 1.0 || rho.back() < 1.0)
        throw std::invalid_argument("gas law: table must cover the reference density 1");

      std::vector<double> secant(n - 1);
      for (std::size_t k = 0; k + 1 < n; ++k)
        secant[k] = (p[k + 1] - p[k]) / (rho[k + 1] - rho[k]);
      dp.assign(n, 0.0);
      dp.front() = secant.front();
      dp.back() = secant.back();
      for (std::size_t k = 1; k + 1 < n; ++k) {
        // weighted harmonic mean (Fritsch-Butland), positive for increasing data
        double h0 = rho[k] - rho[k - 1], h1 = rho[k + 1] - rho[k];
        double w0 = 2.0 * h1 + h0, w1 = h1 + 2.0 * h0;
        dp[k] = (w0 + w1) / (w0 / secant[k - 1] + w1 / secant[k]);
      }

      cumulative.assign(n, 0.0);
      for (std::size_t k = 0; k + 1 < n; ++k)
        cumulative[k + 1] = cumulative[k] + integrate(rho[k], rho[k + 1]);
      offset = integral_from_start(1.0);
    }

    std::size_t interval(double r) const {
      if (r < rho.front() || r > rho.back())
        throw std::domain_error("gas law: density " + std::to_string(r) +
                                " outside tabulated range");
      auto it = std::upper_bound(rho.begin(), rho.end(), r);
      std::size_t k = static_cast<std::size_t>(it - rho.begin());
      return k == 0 ? 0 : std::min(k - 1, rho.size() - 2);
    }

    Sample eval(double r) const {
      std::size_t k = interval(r);
      double h = rho[k + 1] - rho[k];
      double t = (r - rho[k]) / h;
      double t2 = t * t, t3 = t2 * t;
      double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t;
      double h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
      double v = h00 * p[k] + h10 * h * dp[k] + h01 * p[k + 1] + h11 * h * dp[k + 1];
      double d00 = 6 * t2 - 6 * t, d10 = 3 * t2 - 4 * t + 1;
      double d01 = -6 * t2 + 6 * t, d11 = 3 * t2 - 2 * t;
      double s = (d00 * p[k] + d01 * p[k + 1]) / h + d10 * dp[k] + d11 * dp[k + 1];
      double e00 = 12 * t - 6, e10 = 6 * t - 4, e01 = -12 * t + 6, e11 = 6 * t - 2;
      double c = (e00 * p[k] + e01 * p[k + 1]) / (h * h) + (e10 * dp[k] + e11 * dp[k + 1]) / h;
      return {v, s, c};
    }

    double integrate(double a, double b) const {
      if (a == b) return 0.0;
      auto f = [this](double r) { return eval(r).value / (r * r); };
      double err = 0.0;
      return boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, 15, 1e-14, &err);
    }

    double integral_from_start(double r) const {
      std::size_t k = interval(r);
      return cumulative[k] + integrate(rho[k], r);
    }

    double integral(double r) const { return integral_from_start(r) - offset; }
  };

  static void require_positive(double rho) {
    if (!(rho > 0.0) || !std::isfinite(rho))
      throw std::domain_error("gas law: density must be positive and finite, got " +
                              std::to_string(rho));
  }

  Kind kind_ = Kind::isothermal;
  double c2_ = 1.0;
  double kappa_ = 1.0;
  double exponent_ = 1.0;
  std::shared_ptr<const Table> table_;
};

/// Geometry and rescaled model parameters of one pipe.
struct PipeParameters {
  double length = 1.0;
  Profile area = Profile::constant(1.0);
  Profile friction = Profile::constant(1.0);
  Profile elevation = Profile::constant(0.0);
  double gravity = 0.0;
  double epsilon = 1.0;

  void validate() const {
    if (!(length > 0.0) || !std::isfinite(length))
      throw std::invalid_argument("pipe: length must be positive");
    if (!(area.min() > 0.0)) throw std::invalid_argument("pipe: cross-section must be positive");
    if (!(friction.min() >= 0.0)) throw std::invalid_argument("pipe: friction must be non-negative");
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon))
      throw std::invalid_argument("pipe: epsilon must be non-negative");
    if (!std::isfinite(gravity)) throw std::invalid_argument("pipe: gravity must be finite");
  }
};

/// Uniform bounds on states and coefficients; defines the admissible set.
struct AdmissibleBounds {
  double rho_min = 0.5, rho_max = 2.0;
  double w_max = 1.0;
  double eps_max = 1.0;
  double area_min = 1.0, area_max = 1.0;
  double gamma_min = 1.0, gamma_max = 1.0;
  double gz_max = 0.0;
};

/// Number of interior sample points used for continuum conditions on [rho_min, rho_max].
inline constexpr int kDensitySamples = 1024;

template <class F>
inline void for_each_density_sample(const AdmissibleBounds& b, F&& f) {
  f(b.rho_min);
  for (int k = 1; k <= kDensitySamples; ++k)
    f(b.rho_min + (b.rho_max - b.rho_min) * k / (kDensitySamples + 1.0));
  f(b.rho_max);
}

struct DensityExtremes {
  double d2_min, d2_max; // P''
  double d3_abs_max;     // |P'''|
  double margin_min;     // rho P''(rho)
};

inline DensityExtremes density_extremes(const AdmissibleBounds& b, const GasLaw& law) {
  DensityExtremes ex{std::numeric_limits<double>::infinity(), 0.0, 0.0,
                     std::numeric_limits<double>::infinity()};
  for_each_density_sample(b, [&](double rho) {
    double d2 = law.potential_d2(rho);
    ex.d2_min = std::min(ex.d2_min, d2);
    ex.d2_max = std::max(ex.d2_max, d2);
    ex.d3_abs_max = std::max(ex.d3_abs_max, std::abs(law.potential_d3(rho)));
    ex.margin_min = std::min(ex.margin_min, rho * d2);
  });
  return ex;
}

/// True if rho P''(rho) >= 4 eps_max^2 w_max^2 at every sample of [rho_min, rho_max].
inline bool subsonic_margin_holds(const AdmissibleBounds& b, const GasLaw& law) {
  return density_extremes(b, law).margin_min >= 4.0 * b.eps_max * b.eps_max * b.w_max * b.w_max;
}

// Pointwise kernels.

inline double pressure_potential(const GasLaw& law, double rho) { return law.potential(rho); }

struct PointCostate {
  double h, m;
};

/// h = eps^2 w^2/2 + P'(rho) + g z, m = a rho w.
inline PointCostate costate_point(const GasLaw& law, double rho, double w, double area,
                                  double elevation, double gravity, double epsilon) {
  return {0.5 * epsilon * epsilon * w * w + law.potential_d1(rho) + gravity * elevation,
          area * rho * w};
}

/// Applies [[P''(rho), eps^2 w], [a w, a rho]] to (d_rho, d_w).
inline std::pair<double, double> hessian_point(const GasLaw& law, double rho, double w,
                                               double area, double epsilon, double d_rho,
                                               double d_w) {
  return {law.potential_d2(rho) * d_rho + epsilon * epsilon * w * d_w,
          area * w * d_rho + area * rho * d_w};
}

struct PhysicalParameters {
  double friction_factor = 0.02; // lambda
  double diameter = 0.5;         // d
  double velocity = 1.0;         // physical velocity v
  double time = 1.0;             // physical time t
};

struct RescaledParameters {
  double gamma;           // eps^2 lambda / (2 d)
  double velocity_factor; // w = velocity_factor * v
  double time_factor;     // tau = time_factor * t
  double velocity;        // rescaled w for the given v
  double time;            // rescaled tau for the given t
};

/// Long-pipe rescaling: lambda/(2d) = gamma/eps^2, v = eps w, t = tau/eps.
inline RescaledParameters rescale_physical(const PhysicalParameters& phys, double epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon))
    throw std::invalid_argument("rescale: epsilon must be positive");
  if (!(phys.friction_factor > 0.0) || !(phys.diameter > 0.0))
    throw std::invalid_argument("rescale: friction factor and diameter must be positive");
  double gamma = epsilon * epsilon * phys.friction_factor / (2.0 * phys.diameter);
  return {gamma, 1.0 / epsilon, epsilon, phys.velocity / epsilon, phys.time * epsilon};
}

/// Inverse of the friction rescaling: returns lambda / (2 d).
inline double physical_friction_ratio(double gamma, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("rescale: epsilon must be positive");
  return gamma / (epsilon * epsilon);
}

} // namespace gasnet
