// Copyright the talr authors. Licensed under the Apache License, Version 2.0;
// see LICENSE in the project root.
#include "talr/relaxed.hpp"

#include <algorithm>
#include <cmath>

namespace talr {

namespace {

constexpr double kEmptyBin = 1e-12;  // below this a soft bin is treated as empty
constexpr double kLn2 = 0.6931471805599453;

double integrand(double t) { return 1.0 / std::log(t); }

double simpson(double a, double b, double fa, double fm, double fb) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive_simpson(double a, double b, double fa, double fm, double fb,
                        double whole, double tol, int depth, int max_depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = integrand(lm), frm = integrand(rm);
  const double left = simpson(a, m, fa, flm, fm);
  const double right = simpson(m, b, fm, frm, fb);
  const double delta = left + right - whole;
  if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  if (depth >= max_depth)
    throw numeric_error("log_integral_segment: quadrature did not converge");
  return adaptive_simpson(a, m, fa, flm, fm, left, 0.5 * tol, depth + 1, max_depth) +
         adaptive_simpson(m, b, fm, frm, fb, right, 0.5 * tol, depth + 1, max_depth);
}

}  // namespace

double log_integral_segment(double a, double b, double tol, int max_depth) {
  if (!(a > 1.0) || b < a)
    throw std::invalid_argument("log_integral_segment: requires 1 < a <= b");
  if (b - a < 1e-6) {
    // Short segments lose accuracy as a difference of quadratures; a midpoint
    // step is exact to O((b-a)^3) here.
    return b == a ? 0.0 : (b - a) * integrand(0.5 * (a + b));
  }
  const double m = 0.5 * (a + b);
  const double fa = integrand(a), fm = integrand(m), fb = integrand(b);
  return adaptive_simpson(a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), tol, 0,
                          max_depth);
}

RelaxedCodes relax_codes(const Matrix& activations, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("relax_codes: alpha must be positive");
  RelaxedCodes out;
  out.alpha = alpha;
  out.values = Matrix(activations.rows, activations.cols);
  for (std::size_t k = 0; k < activations.data.size(); ++k) {
    const double a = activations.data[k];
    if (!std::isfinite(a))
      throw std::invalid_argument("relax_codes: non-finite activation");
    out.values.data[k] = std::tanh(alpha * a);
  }
  return out;
}

double relaxed_distance(std::span<const double> q, std::span<const double> x) {
  if (q.size() != x.size())
    throw std::invalid_argument("relaxed_distance: dimension mismatch");
  return 0.5 * (static_cast<double>(q.size()) - dot(q, x));
}

double soft_bin(double z, std::size_t d, double slope) {
  if (!(slope > 0.0)) throw std::invalid_argument("soft_bin: slope must be positive");
  const double u = std::abs(z - static_cast<double>(d));
  return u >= slope ? 0.0 : 1.0 - u / slope;
}

double soft_bin_deriv(double z, std::size_t d, double slope) {
  if (!(slope > 0.0)) throw std::invalid_argument("soft_bin_deriv: slope must be positive");
  const double u = z - static_cast<double>(d);
  const double au = std::abs(u);
  if (au <= 0.0 || au >= slope) return 0.0;  // zero at the kinks
  return u > 0.0 ? -1.0 / slope : 1.0 / slope;
}

SoftHistogramSet build_soft_histograms_from_distances(
    std::span<const double> distances, std::span<const int> level_index,
    const std::vector<int>& levels, std::size_t num_bins, double slope,
    std::size_t skip_index) {
  if (distances.size() != level_index.size())
    throw std::invalid_argument("build_soft_histograms: size mismatch");
  const std::size_t count =
      distances.size() - (skip_index < distances.size() ? 1 : 0);
  if (count == 0) throw std::invalid_argument("build_soft_histograms: empty database");

  SoftHistogramSet s;
  s.levels = levels;
  s.num_bins = num_bins;
  s.bin_slope = slope;
  const std::size_t nl = levels.size();
  s.soft.assign(num_bins * nl, 0.0);

  for (std::size_t i = 0; i < distances.size(); ++i) {
    if (i == skip_index) continue;
    const double z = distances[i];
    const std::size_t vi = static_cast<std::size_t>(level_index[i]);
    const double lo = std::ceil(z - slope);
    const auto d0 = static_cast<std::size_t>(std::max(0.0, lo));
    for (std::size_t d = d0; d < num_bins; ++d) {
      if (static_cast<double>(d) > z + slope) break;
      const double w = soft_bin(z, d, slope);
      if (w > 0.0) s.soft[d * nl + vi] += w;
    }
  }

  s.cum.assign(num_bins * nl, 0.0);
  s.bin_total.assign(num_bins, 0.0);
  s.cum_total.assign(num_bins, 0.0);
  s.bin_pos.assign(num_bins, 0.0);
  s.cum_pos.assign(num_bins, 0.0);
  std::vector<double> run(nl, 0.0);
  double run_total = 0.0, run_pos = 0.0;
  for (std::size_t d = 0; d < num_bins; ++d) {
    double total = 0.0, pos = 0.0;
    for (std::size_t vi = 0; vi < nl; ++vi) {
      const double c = s.soft[d * nl + vi];
      run[vi] += c;
      s.cum[d * nl + vi] = run[vi];
      total += c;
      if (levels[vi] > 0) pos += c;
    }
    run_total += total;
    run_pos += pos;
    s.bin_total[d] = total;
    s.bin_pos[d] = pos;
    s.cum_total[d] = run_total;
    s.cum_pos[d] = run_pos;
  }
  return s;
}

SoftHistogramSet build_soft_histograms(std::size_t query_index,
                                       const RelaxedCodes& codes,
                                       const AffinityLevels& affinities,
                                       double slope) {
  if (affinities.per_item.size() != codes.num_items())
    throw std::invalid_argument("build_soft_histograms: size mismatch");
  const std::size_t m = codes.num_items();
  std::vector<double> distances(m, 0.0);
  std::vector<int> level_index(m, 0);
  const auto q = codes.values.row(query_index);
  for (std::size_t i = 0; i < m; ++i) {
    if (i == query_index) continue;
    distances[i] = relaxed_distance(q, codes.values.row(i));
    level_index[i] = static_cast<int>(affinities.level_index(affinities.per_item[i]));
  }
  return build_soft_histograms_from_distances(distances, level_index,
                                              affinities.levels,
                                              codes.num_bits() + 1, slope,
                                              query_index);
}

double ap_relaxed(const SoftHistogramSet& s, double n_plus,
                  const RelaxConfig& cfg) {
  if (!(n_plus > 0.0)) throw std::invalid_argument("ap_relaxed: n_plus must be positive");
  double ap = 0.0;
  for (std::size_t d = 0; d < s.num_bins; ++d) {
    const double c = s.bin_total[d];
    if (c < kEmptyBin) continue;
    const double cp = s.bin_pos[d];
    const double c_before = s.cum_total_before(d);
    const double c_after = s.cum_total[d];
    const double cp_before = s.cum_pos_before(d);

    const bool singleton = !cfg.paper_exact && c < 1.0 + cfg.guard_eps;
    double ratio;
    if (singleton || (cfg.paper_exact && std::abs(c - 1.0) <= cfg.guard_eps)) {
      ratio = cp / c;
    } else {
      ratio = (cp - 1.0) / (c - 1.0);
    }

    // Approximation of the within-tie harmonic sum. Near-singleton bins use
    // the exact single-rank value so empty-or-one bins carry no error.
    double harm;
    if (cfg.paper_exact) {
      harm = std::log(std::max(c_after, 1.0) / std::max(c_before, 1.0));
    } else if (singleton) {
      harm = c / (c_before + 0.5 * c + 0.5);
    } else {
      harm = std::log((c_after + 0.5) / (c_before + 0.5));
    }

    const double k_const = cp_before + 1.0 - ratio * (c_before + 1.0);
    ap += cp / n_plus * ratio + cp / (c * n_plus) * k_const * harm;
  }
  return ap;
}

double dcg_relaxed(const SoftHistogramSet& s, const RelaxConfig& cfg) {
  const double sigma = cfg.paper_exact ? 0.0 : cfg.li_shift;
  const std::size_t nl = s.levels.size();
  double dcg = 0.0;
  for (std::size_t d = 0; d < s.num_bins; ++d) {
    const double c = s.bin_total[d];
    if (c < kEmptyBin) continue;
    double gain_mass = 0.0;
    for (std::size_t vi = 0; vi < nl; ++vi)
      gain_mass += gain_of_level(s.levels[vi]) * s.soft[d * nl + vi];
    double lower = s.cum_total_before(d) + 1.0 + sigma;
    if (cfg.paper_exact) lower = std::max(lower, 1.0 + 1e-6);
    const double upper = std::max(s.cum_total[d] + 1.0 + sigma, lower);
    const double seg =
        log_integral_segment(lower, upper, cfg.li_tol, cfg.li_max_depth);
    dcg += kLn2 * gain_mass / c * seg;
  }
  return dcg;
}

double ap_simplified(const SoftHistogramSet& s, double n_plus) {
  if (!(n_plus > 0.0))
    throw std::invalid_argument("ap_simplified: n_plus must be positive");
  double ap = 0.0;
  for (std::size_t d = 0; d < s.num_bins; ++d) {
    const double cp = s.bin_pos[d];
    if (cp <= 0.0) continue;
    const double num = s.cum_pos_before(d) + s.cum_pos[d] + 1.0;
    const double den = s.cum_total_before(d) + s.cum_total[d] + 1.0;
    ap += cp / n_plus * num / den;
  }
  return ap;
}

double dcg_simplified(const SoftHistogramSet& s) {
  const std::size_t nl = s.levels.size();
  double dcg = 0.0;
  for (std::size_t d = 0; d < s.num_bins; ++d) {
    double gain_mass = 0.0;
    for (std::size_t vi = 0; vi < nl; ++vi)
      gain_mass += gain_of_level(s.levels[vi]) * s.soft[d * nl + vi];
    if (gain_mass <= 0.0) continue;
    const double arg = s.cum_total_before(d) + 0.5 * s.bin_total[d] + 1.5;
    dcg += gain_mass / std::log2(arg);
  }
  return dcg;
}

}  // namespace talr
