#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace polyrg {

// Pairwise summation keeps Monte Carlo reductions reproducible and accurate.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 16) {
    double s = 0;
    for (double x : v) s += x;
    return s;
  }
  std::size_t h = v.size() / 2;
  return pairwise_sum(v.first(h)) + pairwise_sum(v.subspan(h));
}

struct MeanEstimate {
  double mean = 0;
  double std_error = 0;
  std::size_t n = 0;
};

inline MeanEstimate mean_estimate(std::span<const double> v) {
  if (v.size() < 2) throw std::invalid_argument("mean_estimate needs at least two samples");
  double mean = pairwise_sum(v) / static_cast<double>(v.size());
  std::vector<double> sq(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) sq[k] = (v[k] - mean) * (v[k] - mean);
  double var = pairwise_sum(sq) / static_cast<double>(v.size() - 1);
  return {mean, std::sqrt(var / static_cast<double>(v.size())), v.size()};
}

struct LinearFit {
  double slope = 0;
  double intercept = 0;
  double slope_se = 0;
  double intercept_se = 0;
  double residual_rms = 0;
  std::size_t n = 0;
};

// Ordinary least squares y = intercept + slope * x with standard errors.
inline LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 3) throw std::invalid_argument("linear_fit needs >= 3 matched points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
  }
  if (sxx == 0) throw std::invalid_argument("linear_fit: degenerate abscissae");
  LinearFit f;
  f.n = x.size();
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rss = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    double r = y[k] - f.intercept - f.slope * x[k];
    rss += r * r;
  }
  double s2 = rss / (n - 2);
  f.slope_se = std::sqrt(s2 / sxx);
  f.intercept_se = std::sqrt(s2 * (1.0 / n + mx * mx / sxx));
  f.residual_rms = std::sqrt(rss / n);
  return f;
}

}  // namespace polyrg
