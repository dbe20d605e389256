#pragma once

/**
 * Coverage scaling law: c(k) ~= exp(a * k^b).
 *
 * fit_scaling_law() initializes (a, b) by double-log linearization — for
 * c in (0,1), log(-log c) = log(-a) + b log k is linear in log k — and then
 * refines with damped Gauss-Newton on coverage-scale residuals
 * r_i = c_i - exp(a k_i^b). Goodness-of-fit statistics (R^2, RMSE, MAE,
 * residuals, relative errors) are reported on coverage expressed in percent.
 */

#include <cmath>
#include <cstdio>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace selfsearch::scaling {

struct FitPoint {
  double k = 1.0;        // sample count, >= 1
  double coverage = 0.0; // in (0, 1)
};

struct FitModel {
  double a = 0.0;
  double b = 0.0;
  double r2 = 0.0;
  double rmse_pct = 0.0;
  double mae_pct = 0.0;
};

/// Forward model: coverage at k.
inline double eval_scaling_law(const FitModel& m, double k) {
  return std::exp(m.a * std::pow(k, m.b));
}

struct FitStats {
  double r2 = 0.0;
  double rmse_pct = 0.0;
  double mae_pct = 0.0;
  std::vector<double> fitted_pct;
  std::vector<double> residual;       // actual_pct - fitted_pct
  std::vector<double> rel_error_pct;  // |residual| / actual_pct * 100
};

/// Residual table and aggregate statistics on the percent scale.
inline FitStats fit_stats(std::span<const FitPoint> points, const FitModel& m) {
  if (points.empty()) {
    throw std::invalid_argument("fit_stats: no points");
  }
  FitStats s;
  const std::size_t n = points.size();
  s.fitted_pct.reserve(n);
  s.residual.reserve(n);
  s.rel_error_pct.reserve(n);
  double mean_actual = 0.0;
  for (const auto& p : points) mean_actual += p.coverage * 100.0;
  mean_actual /= static_cast<double>(n);

  double ss_res = 0.0;
  double ss_tot = 0.0;
  double abs_sum = 0.0;
  for (const auto& p : points) {
    const double actual = p.coverage * 100.0;
    const double fitted = eval_scaling_law(m, p.k) * 100.0;
    const double r = actual - fitted;
    s.fitted_pct.push_back(fitted);
    s.residual.push_back(r);
    s.rel_error_pct.push_back(actual != 0.0 ? std::abs(r) / actual * 100.0 : 0.0);
    ss_res += r * r;
    ss_tot += (actual - mean_actual) * (actual - mean_actual);
    abs_sum += std::abs(r);
  }
  s.rmse_pct = std::sqrt(ss_res / static_cast<double>(n));
  s.mae_pct = abs_sum / static_cast<double>(n);
  s.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
  return s;
}

namespace detail {

inline double sse(std::span<const FitPoint> pts, double a, double b) {
  double s = 0.0;
  for (const auto& p : pts) {
    const double r = p.coverage - std::exp(a * std::pow(p.k, b));
    s += r * r;
  }
  return s;
}

}  // namespace detail

/// Fit (a, b) to coverage points. Requires >= 3 points, coverages strictly
/// inside (0, 1), and distinct k >= 1.
inline FitModel fit_scaling_law(std::span<const FitPoint> points) {
  if (points.size() < 3) {
    throw std::invalid_argument("fit_scaling_law: need at least 3 points");
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (!(p.coverage > 0.0 && p.coverage < 1.0)) {
      throw std::invalid_argument("fit_scaling_law: coverage at point " + std::to_string(i) +
                                  " must lie strictly in (0, 1)");
    }
    if (!(p.k >= 1.0)) {
      throw std::invalid_argument("fit_scaling_law: k at point " + std::to_string(i) +
                                  " must be >= 1");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (points[j].k == p.k) {
        throw std::invalid_argument("fit_scaling_law: k values must be distinct");
      }
    }
  }

  // Linearized start: regress log(-log c) on log k.
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double n = static_cast<double>(points.size());
  for (const auto& p : points) {
    const double x = std::log(p.k);
    const double y = std::log(-std::log(p.coverage));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = n * sxx - sx * sx;
  double b = denom != 0.0 ? (n * sxy - sx * sy) / denom : 0.0;
  double a = -std::exp((sy - b * sx) / n);

  // Damped Gauss-Newton on coverage-scale residuals.
  double lambda = 1e-3;
  double current = detail::sse(points, a, b);
  for (int iter = 0; iter < 300; ++iter) {
    double jtj00 = 0.0, jtj01 = 0.0, jtj11 = 0.0, jtr0 = 0.0, jtr1 = 0.0;
    for (const auto& p : points) {
      const double u = std::pow(p.k, b);
      const double model = std::exp(a * u);
      const double r = p.coverage - model;
      const double da = u * model;
      const double db = a * u * std::log(p.k) * model;
      jtj00 += da * da;
      jtj01 += da * db;
      jtj11 += db * db;
      jtr0 += da * r;
      jtr1 += db * r;
    }
    bool stepped = false;
    for (int attempt = 0; attempt < 12; ++attempt) {
      const double m00 = jtj00 * (1.0 + lambda);
      const double m11 = jtj11 * (1.0 + lambda);
      const double det = m00 * m11 - jtj01 * jtj01;
      if (det == 0.0 || !std::isfinite(det)) break;
      const double step_a = (m11 * jtr0 - jtj01 * jtr1) / det;
      const double step_b = (m00 * jtr1 - jtj01 * jtr0) / det;
      const double trial = detail::sse(points, a + step_a, b + step_b);
      if (trial < current) {
        a += step_a;
        b += step_b;
        current = trial;
        lambda = std::max(lambda * 0.3, 1e-12);
        stepped = std::abs(step_a) > 1e-14 || std::abs(step_b) > 1e-14;
        break;
      }
      lambda *= 10.0;
    }
    if (!stepped) break;
  }

  FitModel m;
  m.a = a;
  m.b = b;
  const FitStats s = fit_stats(points, m);
  m.r2 = s.r2;
  m.rmse_pct = s.rmse_pct;
  m.mae_pct = s.mae_pct;
  return m;
}

/// CSV residual report, one row per point:
/// k,actual_pct,fitted_pct,residual,rel_error_pct
inline std::string fit_report_csv(std::span<const FitPoint> points, const FitModel& m) {
  const FitStats s = fit_stats(points, m);
  std::string out = "k,actual_pct,fitted_pct,residual,rel_error_pct\n";
  char buf[160];
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%g,%.4f,%.4f,%.4f,%.4f\n", points[i].k,
                  points[i].coverage * 100.0, s.fitted_pct[i], s.residual[i], s.rel_error_pct[i]);
    out += buf;
  }
  return out;
}

}  // namespace selfsearch::scaling
