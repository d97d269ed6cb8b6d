#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace gasnet {

/// Piecewise-linear function given by breakpoints (x_k, y_k), constant
/// beyond the first and last breakpoint. A single breakpoint is a constant.
class Profile {
public:
  Profile() : x_{0.0}, y_{0.0} {}

  static Profile constant(double value) { return Profile({0.0}, {value}); }

  Profile(std::vector<double> x, std::vector<double> y)
      : x_(std::move(x)), y_(std::move(y)) {
    if (x_.empty() || x_.size() != y_.size())
      throw std::invalid_argument("profile: breakpoint lists must be non-empty and of equal size");
    for (std::size_t k = 1; k < x_.size(); ++k)
      if (!(x_[k] > x_[k - 1]))
        throw std::invalid_argument("profile: breakpoints must be strictly increasing");
    for (double v : y_)
      if (!std::isfinite(v))
        throw std::invalid_argument("profile: non-finite value");
  }

  double operator()(double s) const {
    if (x_.size() == 1 || s <= x_.front()) return y_.front();
    if (s >= x_.back()) return y_.back();
    auto it = std::upper_bound(x_.begin(), x_.end(), s);
    std::size_t k = static_cast<std::size_t>(it - x_.begin());
    double t = (s - x_[k - 1]) / (x_[k] - x_[k - 1]);
    return (1.0 - t) * y_[k - 1] + t * y_[k];
  }

  bool is_constant() const {
    return std::all_of(y_.begin(), y_.end(), [&](double v) { return v == y_.front(); });
  }

  double min() const { return *std::min_element(y_.begin(), y_.end()); }
  double max() const { return *std::max_element(y_.begin(), y_.end()); }

  const std::vector<double>& breakpoints() const { return x_; }
  const std::vector<double>& values() const { return y_; }

  /// Adds a constant to every value.
  Profile shifted(double delta) const {
    Profile p = *this;
    for (double& v : p.y_) v += delta;
    return p;
  }

  friend bool operator==(const Profile& a, const Profile& b) {
    return a.x_ == b.x_ && a.y_ == b.y_;
  }

private:
  std::vector<double> x_;
  std::vector<double> y_;
};

} // namespace gasnet
