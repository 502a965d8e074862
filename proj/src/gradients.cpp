// Copyright the talr authors. Licensed under the Apache License, Version 2.0;
// see LICENSE in the project root.
#include "talr/gradients.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace talr {

namespace {
constexpr double kEmptyBin = 1e-12;
constexpr double kLn2 = 0.6931471805599453;
}  // namespace

const char* objective_name(Objective o) {
  switch (o) {
    case Objective::ap_s: return "ap_s";
    case Objective::dcg_s: return "dcg_s";
    case Objective::ap_r: return "ap_r";
    case Objective::dcg_r: return "dcg_r";
  }
  return "?";
}

Objective objective_from_name(const std::string& name) {
  if (name == "ap_s") return Objective::ap_s;
  if (name == "dcg_s") return Objective::dcg_s;
  if (name == "ap_r") return Objective::ap_r;
  if (name == "dcg_r") return Objective::dcg_r;
  throw std::invalid_argument("unknown objective: " + name +
                              " (expected ap_s, dcg_s, ap_r or dcg_r)");
}

bool objective_is_binary(Objective o) {
  return o == Objective::ap_s || o == Objective::ap_r;
}

namespace {

void ap_s_grads(const SoftHistogramSet& s, double n_plus, BinGradients& g) {
  const std::size_t nl = s.levels.size();
  for (std::size_t d = 0; d < s.num_bins; ++d) {
    const double cp = s.bin_pos[d];
    const double num = s.cum_pos_before(d) + s.cum_pos[d] + 1.0;
    const double den = s.cum_total_before(d) + s.cum_total[d] + 1.0;
    for (std::size_t vi = 0; vi < nl; ++vi) {
      const double pv = s.levels[vi] > 0 ? 1.0 : 0.0;
      g.zeta[d * nl + vi] =
          (pv * num / den + cp * (pv * den - num) / (den * den)) / n_plus;
      g.theta[d * nl + vi] = 2.0 * cp * (pv * den - num) / (den * den * n_plus);
    }
  }
}

void dcg_s_grads(const SoftHistogramSet& s, BinGradients& g) {
  const std::size_t nl = s.levels.size();
  for (std::size_t d = 0; d < s.num_bins; ++d) {
    double gain_mass = 0.0;
    for (std::size_t vi = 0; vi < nl; ++vi)
      gain_mass += gain_of_level(s.levels[vi]) * s.soft[d * nl + vi];
    const double arg = s.cum_total_before(d) + 0.5 * s.bin_total[d] + 1.5;
    const double ln_arg = std::log(arg);
    const double upstream = -kLn2 * gain_mass / (arg * ln_arg * ln_arg);
    for (std::size_t vi = 0; vi < nl; ++vi) {
      g.zeta[d * nl + vi] =
          kLn2 * gain_of_level(s.levels[vi]) / ln_arg + 0.5 * upstream;
      g.theta[d * nl + vi] = upstream;
    }
  }
}

void ap_r_grads(const SoftHistogramSet& s, double n_plus, const RelaxConfig& cfg,
                BinGradients& g) {
  const std::size_t nl = s.levels.size();
  for (std::size_t d = 0; d < s.num_bins; ++d) {
    const double c = s.bin_total[d];
    if (c < kEmptyBin) continue;  // empty bin: no contribution, no gradient
    const double cp = s.bin_pos[d];
    const double c_before = s.cum_total_before(d);
    const double c_after = s.cum_total[d];
    const double cp_before = s.cum_pos_before(d);

    const bool singleton = !cfg.paper_exact && c < 1.0 + cfg.guard_eps;
    const bool ratio_guarded =
        singleton || (cfg.paper_exact && std::abs(c - 1.0) <= cfg.guard_eps);
    const double ratio = ratio_guarded ? cp / c : (cp - 1.0) / (c - 1.0);

    double harm, dharm_bin, dharm_up;
    if (cfg.paper_exact) {
      harm = std::log(std::max(c_after, 1.0) / std::max(c_before, 1.0));
      dharm_bin = c_after > 1.0 ? 1.0 / c_after : 0.0;
      dharm_up = dharm_bin - (c_before > 1.0 ? 1.0 / c_before : 0.0);
    } else if (singleton) {
      const double dn = c_before + 0.5 * c + 0.5;
      harm = c / dn;
      dharm_bin = (c_before + 0.5) / (dn * dn);
      dharm_up = -c / (dn * dn);
    } else {
      harm = std::log((c_after + 0.5) / (c_before + 0.5));
      dharm_bin = 1.0 / (c_after + 0.5);
      dharm_up = dharm_bin - 1.0 / (c_before + 0.5);
    }

    const double k_const = cp_before + 1.0 - ratio * (c_before + 1.0);
    for (std::size_t vi = 0; vi < nl; ++vi) {
      const double pv = s.levels[vi] > 0 ? 1.0 : 0.0;
      const double dratio =
          ratio_guarded ? (pv - ratio) / c : (pv - ratio) / (c - 1.0);
      const double dterm1 = (pv * ratio + cp * dratio) / n_plus;
      const double dk = -dratio * (c_before + 1.0);
      const double dterm2 =
          ((pv * c - cp) / (c * c) * k_const * harm +
           cp / c * (dk * harm + k_const * dharm_bin)) /
          n_plus;
      g.zeta[d * nl + vi] = dterm1 + dterm2;
      g.theta[d * nl + vi] =
          cp / (c * n_plus) * ((pv - ratio) * harm + k_const * dharm_up);
    }
  }
}

void dcg_r_grads(const SoftHistogramSet& s, const RelaxConfig& cfg,
                 BinGradients& g) {
  const double sigma = cfg.paper_exact ? 0.0 : cfg.li_shift;
  const std::size_t nl = s.levels.size();
  for (std::size_t d = 0; d < s.num_bins; ++d) {
    const double c = s.bin_total[d];
    double lower = s.cum_total_before(d) + 1.0 + sigma;
    if (cfg.paper_exact) lower = std::max(lower, 1.0 + 1e-6);
    if (c < kEmptyBin) {
      // Limit of the exact partials as the bin empties.
      for (std::size_t vi = 0; vi < nl; ++vi)
        g.zeta[d * nl + vi] =
            kLn2 * gain_of_level(s.levels[vi]) / std::log(lower);
      continue;
    }
    const double upper = std::max(s.cum_total[d] + 1.0 + sigma, lower);
    double gain_mass = 0.0;
    for (std::size_t vi = 0; vi < nl; ++vi)
      gain_mass += gain_of_level(s.levels[vi]) * s.soft[d * nl + vi];
    const double seg =
        log_integral_segment(lower, upper, cfg.li_tol, cfg.li_max_depth);
    const double at_upper = 1.0 / std::log(upper);
    const double at_lower = 1.0 / std::log(lower);
    const double upstream = kLn2 * gain_mass / c * (at_upper - at_lower);
    for (std::size_t vi = 0; vi < nl; ++vi) {
      const double gv = gain_of_level(s.levels[vi]);
      g.zeta[d * nl + vi] = kLn2 * ((gv * c - gain_mass) / (c * c) * seg +
                                    gain_mass / c * at_upper);
      g.theta[d * nl + vi] = upstream;
    }
  }
}

}  // namespace

BinGradients objective_bin_grads(Objective objective, const SoftHistogramSet& s,
                                 double n_plus, const RelaxConfig& cfg) {
  BinGradients g;
  g.num_bins = s.num_bins;
  g.num_levels = s.levels.size();
  g.zeta.assign(g.num_bins * g.num_levels, 0.0);
  g.theta.assign(g.num_bins * g.num_levels, 0.0);
  g.alpha.assign(g.num_bins * g.num_levels, 0.0);

  switch (objective) {
    case Objective::ap_s:
      if (!(n_plus > 0.0))
        throw std::invalid_argument("objective_bin_grads: n_plus must be positive");
      ap_s_grads(s, n_plus, g);
      break;
    case Objective::dcg_s:
      dcg_s_grads(s, g);
      break;
    case Objective::ap_r:
      if (!(n_plus > 0.0))
        throw std::invalid_argument("objective_bin_grads: n_plus must be positive");
      ap_r_grads(s, n_plus, cfg, g);
      break;
    case Objective::dcg_r:
      dcg_r_grads(s, cfg, g);
      break;
  }

  // alpha = zeta + U theta, with U theta realized as a reversed cumulative sum.
  const std::size_t nl = g.num_levels;
  for (std::size_t vi = 0; vi < nl; ++vi) {
    double suffix = 0.0;
    for (std::size_t d = g.num_bins; d-- > 0;) {
      g.alpha[d * nl + vi] = g.zeta[d * nl + vi] + suffix;
      suffix += g.theta[d * nl + vi];
    }
  }
  return g;
}

void HistogramGradients::set_column(std::size_t i, const BinGradients& g,
                                    double scale) {
  for (std::size_t vi = 0; vi < num_levels; ++vi)
    for (std::size_t d = 0; d < num_bins; ++d)
      alpha[(vi * num_bins + d) * batch + i] =
          scale * g.alpha[d * g.num_levels + vi];
}

BetaMatrices beta_matrices(const Matrix& dist,
                           const std::vector<int>& pair_level_index,
                           std::size_t num_bins, std::size_t num_levels,
                           double slope) {
  const std::size_t m = dist.rows;
  if (dist.cols != m || pair_level_index.size() != m * m)
    throw std::invalid_argument("beta_matrices: shape mismatch");
  BetaMatrices out;
  out.batch = m;
  out.num_bins = num_bins;
  out.num_levels = num_levels;
  out.values.assign(num_bins * num_levels * m * m, 0.0);
  out.has_entries.assign(num_bins * num_levels, 0);

  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const double z = dist(i, j);
      const auto vi = static_cast<std::size_t>(pair_level_index[i * m + j]);
      const double lo = std::ceil(z - slope);
      const auto d0 = static_cast<std::size_t>(std::max(0.0, lo));
      for (std::size_t d = d0; d < num_bins; ++d) {
        if (static_cast<double>(d) > z + slope) break;
        const double deriv = soft_bin_deriv(z, d, slope);
        if (deriv == 0.0) continue;
        const std::size_t block = (d * num_levels + vi) * m * m;
        out.values[block + i * m + j] = deriv;
        out.values[block + j * m + i] = deriv;
        out.has_entries[d * num_levels + vi] = 1;
      }
    }
  }
  return out;
}

BatchJacobian minibatch_backprop(const Matrix& codes,
                                 const HistogramGradients& grads,
                                 const BetaMatrices& betas) {
  const std::size_t m = codes.rows;
  if (betas.batch != m || grads.batch != m ||
      grads.num_bins != betas.num_bins || grads.num_levels != betas.num_levels)
    throw std::invalid_argument("minibatch_backprop: shape mismatch");

  // S = sum_{d,v} (A B + B A); entries B(i,j) * (alpha_i + alpha_j), so the
  // diagonal products reduce to row/column scalings.
  Matrix s(m, m);
  for (std::size_t d = 0; d < betas.num_bins; ++d) {
    for (std::size_t vi = 0; vi < betas.num_levels; ++vi) {
      if (!betas.has_entries[d * betas.num_levels + vi]) continue;
      const double* block =
          betas.values.data() + (d * betas.num_levels + vi) * m * m;
      const double* a =
          grads.alpha.data() + (vi * grads.num_bins + d) * m;
      for (std::size_t i = 0; i < m; ++i) {
        const double ai = a[i];
        const double* brow = block + i * m;
        double* srow = s.data.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) {
          const double bv = brow[j];
          if (bv != 0.0) srow[j] += bv * (ai + a[j]);
        }
      }
    }
  }

  BatchJacobian jac;
  jac.d_codes = matmul(s, codes);
  const double scale = -1.0 / (2.0 * static_cast<double>(m));
  for (double& x : jac.d_codes.data) x *= scale;
  return jac;
}

BatchJacobian naive_minibatch_backprop(const Matrix& codes,
                                       const HistogramGradients& grads,
                                       const Matrix& dist,
                                       const std::vector<int>& pair_level_index,
                                       double slope) {
  const std::size_t m = codes.rows;
  const std::size_t b = codes.cols;
  BatchJacobian jac;
  jac.d_codes = Matrix(m, b);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      const double z = dist(i, j);
      const auto vi = static_cast<std::size_t>(pair_level_index[i * m + j]);
      for (std::size_t d = 0; d < grads.num_bins; ++d) {
        const double deriv = soft_bin_deriv(z, d, slope);
        if (deriv == 0.0) continue;
        const double a = grads.at(vi, d, i);
        if (a == 0.0) continue;
        const double w = -0.5 * a * deriv;
        for (std::size_t r = 0; r < b; ++r) {
          jac.d_codes(j, r) += w * codes(i, r);
          jac.d_codes(i, r) += w * codes(j, r);
        }
      }
    }
  }
  const double scale = 1.0 / static_cast<double>(m);
  for (double& x : jac.d_codes.data) x *= scale;
  return jac;
}

Matrix model_backprop(const BatchJacobian& jac, const Matrix& codes,
                      const Matrix& features, double alpha) {
  if (!jac.d_codes.same_shape(codes) || features.rows != codes.rows)
    throw std::invalid_argument("model_backprop: dimension mismatch");
  Matrix d_act(codes.rows, codes.cols);
  for (std::size_t k = 0; k < codes.data.size(); ++k) {
    const double phi = codes.data[k];
    d_act.data[k] = jac.d_codes.data[k] * alpha * (1.0 - phi * phi);
  }
  return matmul_at(d_act, features);  // b x D
}

FdReport finite_diff_compare(const std::function<double(const Matrix&)>& value,
                             const Matrix& analytic, const Matrix& point,
                             double h, std::size_t min_coords, Rng* rng) {
  if (!analytic.same_shape(point))
    throw std::invalid_argument("finite_diff_compare: shape mismatch");
  const std::size_t total = point.data.size();
  std::vector<std::size_t> coords;
  if (total <= min_coords || rng == nullptr) {
    coords.resize(total);
    for (std::size_t k = 0; k < total; ++k) coords[k] = k;
  } else {
    std::vector<std::size_t> all(total);
    for (std::size_t k = 0; k < total; ++k) all[k] = k;
    rng->shuffle(all);
    coords.assign(all.begin(), all.begin() + static_cast<long>(min_coords));
  }

  FdReport report;
  Matrix probe = point;
  for (std::size_t k : coords) {
    const double saved = probe.data[k];
    probe.data[k] = saved + h;
    const double up = value(probe);
    probe.data[k] = saved - h;
    const double down = value(probe);
    probe.data[k] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw numeric_error("finite_diff_compare: non-finite objective");
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic.data[k];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_row = k / point.cols;
      report.worst_col = k % point.cols;
    }
  }
  return report;
}

}  // namespace talr
