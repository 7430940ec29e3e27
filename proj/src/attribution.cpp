// Copyright 2026 The actree Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "actree/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "actree/numeric.hpp"

namespace actree {

using nlohmann::json;

Eigen::Index FeatureMatrix::column(const std::string& name) const {
  auto it = std::find(column_names.begin(), column_names.end(), name);
  return it == column_names.end() ? -1 : static_cast<Eigen::Index>(it - column_names.begin());
}

std::size_t char_count(const std::string& text) {
  std::size_t n = 0;
  for (unsigned char c : text) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

namespace {

void check_unique(const std::vector<std::string>& names) {
  std::unordered_set<std::string> seen;
  for (const std::string& n : names) {
    if (!seen.insert(n).second) throw FeatureError("duplicate feature name " + n);
  }
}

// Template index per dimension for one step, FeatureError on unknown names.
std::vector<std::size_t> step_digits(const ActionChoice& choice, const ActionSpace& space,
                                     const std::string& trace_id) {
  if (choice.is_finish) throw FeatureError("trace " + trace_id + " has FINISH inside its trajectory");
  std::vector<std::size_t> digits;
  for (std::size_t d = 0; d < space.dimension_count(); ++d) {
    const Dimension& dim = space.dimensions()[d];
    auto it = choice.per_dimension.find(dim.name);
    if (it == choice.per_dimension.end()) {
      throw FeatureError("trace " + trace_id + " lacks dimension " + dim.name);
    }
    try {
      digits.push_back(space.template_index(d, it->second));
    } catch (const ValidationError&) {
      throw FeatureError("trace " + trace_id + " uses unknown action " + dim.name + "." +
                         it->second);
    }
  }
  if (choice.per_dimension.size() != space.dimension_count()) {
    throw FeatureError("trace " + trace_id + " names dimensions outside the space");
  }
  return digits;
}

void append_length(FeatureMatrix& fm, const std::vector<Trace>& traces) {
  const Eigen::Index c = fm.values.cols();
  fm.values.conservativeResize(Eigen::NoChange, c + 1);
  for (std::size_t r = 0; r < traces.size(); ++r) {
    fm.values(static_cast<Eigen::Index>(r), c) =
        static_cast<double>(char_count(traces[r].final_answer));
  }
  fm.column_names.push_back(kLengthFeature);
}

struct SequentialLayout {
  std::vector<std::size_t> sizes, dim_start, trans_start;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<std::size_t> pair_start;
  std::size_t S = 0, P = 0, T = 0;
  int depth = 0;

  SequentialLayout(const ActionSpace& space, int d) : depth(d) {
    for (const Dimension& dim : space.dimensions()) {
      sizes.push_back(dim.templates.size());
      dim_start.push_back(S);
      S += dim.templates.size();
      trans_start.push_back(T);
      T += dim.templates.size() * dim.templates.size();
    }
    for (std::size_t a = 0; a < sizes.size(); ++a) {
      for (std::size_t b = a + 1; b < sizes.size(); ++b) {
        pairs.emplace_back(a, b);
        pair_start.push_back(P);
        P += sizes[a] * sizes[b];
      }
    }
  }
  std::size_t total() const {
    const auto d = static_cast<std::size_t>(depth);
    return d * S + d * P + (d > 0 ? d - 1 : 0) * T;
  }
  std::size_t pos(std::size_t k, std::size_t dim, std::size_t a) const {
    return k * S + dim_start[dim] + a;
  }
  std::size_t step(std::size_t k, std::size_t p, std::size_t a, std::size_t b) const {
    return static_cast<std::size_t>(depth) * S + k * P + pair_start[p] +
           a * sizes[pairs[p].second] + b;
  }
  std::size_t trans(std::size_t k, std::size_t dim, std::size_t a, std::size_t b) const {
    const auto d = static_cast<std::size_t>(depth);
    return d * S + d * P + k * T + trans_start[dim] + a * sizes[dim] + b;
  }
};

}  // namespace

std::vector<std::string> presence_feature_names(const ActionSpace& space,
                                                const std::vector<std::string>& dimensions) {
  std::vector<std::string> names;
  for (const std::string& dn : dimensions) {
    const Dimension& dim = space.dimensions()[space.dimension_index(dn)];
    for (std::size_t a = 1; a < dim.templates.size(); ++a) {
      names.push_back("presence." + dim.name + "." + dim.templates[a].name);
    }
  }
  check_unique(names);
  return names;
}

std::vector<std::string> sequential_feature_names(const ActionSpace& space, int depth) {
  if (depth < 1) throw FeatureError("sequential features need depth >= 1");
  SequentialLayout L(space, depth);
  std::vector<std::string> names(L.total());
  const auto& dims = space.dimensions();
  for (std::size_t k = 0; k < static_cast<std::size_t>(depth); ++k) {
    const std::string ks = std::to_string(k + 1);
    for (std::size_t d = 0; d < dims.size(); ++d) {
      for (std::size_t a = 0; a < L.sizes[d]; ++a) {
        names[L.pos(k, d, a)] = "pos[" + ks + "]." + dims[d].name + "." + dims[d].templates[a].name;
      }
    }
    for (std::size_t p = 0; p < L.pairs.size(); ++p) {
      const auto [da, db] = L.pairs[p];
      for (std::size_t a = 0; a < L.sizes[da]; ++a) {
        for (std::size_t b = 0; b < L.sizes[db]; ++b) {
          names[L.step(k, p, a, b)] = "step[" + ks + "]." + dims[da].templates[a].name + "x" +
                                      dims[db].templates[b].name;
        }
      }
    }
    if (k + 1 < static_cast<std::size_t>(depth)) {
      const std::string span = "[" + ks + "->" + std::to_string(k + 2) + "]";
      for (std::size_t d = 0; d < dims.size(); ++d) {
        for (std::size_t a = 0; a < L.sizes[d]; ++a) {
          for (std::size_t b = 0; b < L.sizes[d]; ++b) {
            names[L.trans(k, d, a, b)] = "trans." + dims[d].name + "." + dims[d].templates[a].name +
                                         "->" + dims[d].templates[b].name + span;
          }
        }
      }
    }
  }
  check_unique(names);
  return names;
}

FeatureMatrix extract_presence_features(const std::vector<Trace>& traces,
                                        const ActionSpace& space,
                                        const std::vector<std::string>& dimensions,
                                        bool length_feature) {
  FeatureMatrix fm;
  fm.column_names = presence_feature_names(space, dimensions);
  std::vector<std::size_t> dim_idx, offset;
  std::size_t off = 0;
  for (const std::string& dn : dimensions) {
    dim_idx.push_back(space.dimension_index(dn));
    offset.push_back(off);
    off += space.dimensions()[dim_idx.back()].templates.size() - 1;
  }
  fm.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(traces.size()),
                                    static_cast<Eigen::Index>(fm.column_names.size()));
  for (std::size_t r = 0; r < traces.size(); ++r) {
    fm.row_ids.push_back(traces[r].id());
    for (const ActionChoice& c : traces[r].trajectory) {
      std::vector<std::size_t> digits = step_digits(c, space, traces[r].id());
      for (std::size_t s = 0; s < dim_idx.size(); ++s) {
        std::size_t a = digits[dim_idx[s]];
        if (a == 0) continue;  // reference action
        fm.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(offset[s] + a - 1)) = 1.0;
      }
    }
  }
  if (length_feature) append_length(fm, traces);
  return fm;
}

FeatureMatrix extract_sequential_features(const std::vector<Trace>& traces,
                                          const ActionSpace& space, int depth,
                                          bool length_feature) {
  FeatureMatrix fm;
  fm.column_names = sequential_feature_names(space, depth);
  SequentialLayout L(space, depth);
  fm.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(traces.size()),
                                    static_cast<Eigen::Index>(L.total()));
  for (std::size_t r = 0; r < traces.size(); ++r) {
    const Trace& t = traces[r];
    fm.row_ids.push_back(t.id());
    if (t.trajectory.size() != static_cast<std::size_t>(depth)) {
      throw FeatureError("trace " + t.id() + " has " + std::to_string(t.trajectory.size()) +
                         " steps, expected " + std::to_string(depth) +
                         "; filter to fixed-length traces first");
    }
    const auto row = static_cast<Eigen::Index>(r);
    std::vector<std::size_t> prev;
    for (std::size_t k = 0; k < t.trajectory.size(); ++k) {
      std::vector<std::size_t> dg = step_digits(t.trajectory[k], space, t.id());
      for (std::size_t d = 0; d < dg.size(); ++d) {
        fm.values(row, static_cast<Eigen::Index>(L.pos(k, d, dg[d]))) = 1.0;
        if (k > 0) fm.values(row, static_cast<Eigen::Index>(L.trans(k - 1, d, prev[d], dg[d]))) = 1.0;
      }
      for (std::size_t p = 0; p < L.pairs.size(); ++p) {
        fm.values(row, static_cast<Eigen::Index>(
                           L.step(k, p, dg[L.pairs[p].first], dg[L.pairs[p].second]))) = 1.0;
      }
      prev = std::move(dg);
    }
  }
  if (length_feature) append_length(fm, traces);
  return fm;
}

std::vector<Trace> filter_fixed_length(const std::vector<Trace>& traces, int depth) {
  std::vector<Trace> out;
  for (const Trace& t : traces) {
    if (t.trajectory.size() == static_cast<std::size_t>(depth)) out.push_back(t);
  }
  return out;
}

std::string to_string(AttributionModel m) {
  switch (m) {
    case AttributionModel::kM1a: return "m1a";
    case AttributionModel::kM1b: return "m1b";
    case AttributionModel::kM1c: return "m1c";
    case AttributionModel::kM2: return "m2";
  }
  return "unknown";
}

AttributionModel attribution_model_from_string(const std::string& name) {
  if (name == "m1a") return AttributionModel::kM1a;
  if (name == "m1b") return AttributionModel::kM1b;
  if (name == "m1c") return AttributionModel::kM1c;
  if (name == "m2") return AttributionModel::kM2;
  throw ValidationError("unknown attribution model '" + name + "' (m1a, m1b, m1c, m2)");
}

FeatureMatrix extract_model_features(AttributionModel model, const std::vector<Trace>& traces,
                                     const ActionSpace& space, int depth, bool length_feature) {
  const auto& dims = space.dimensions();
  auto need = [&](std::size_t n) {
    if (dims.size() < n) {
      throw FeatureError("model " + to_string(model) + " needs " + std::to_string(n) +
                         " dimensions");
    }
  };
  switch (model) {
    case AttributionModel::kM1a:
      return extract_presence_features(traces, space, {dims[0].name}, length_feature);
    case AttributionModel::kM1b:
      need(2);
      return extract_presence_features(traces, space, {dims[1].name}, length_feature);
    case AttributionModel::kM1c: {
      std::vector<std::string> all;
      for (const Dimension& d : dims) all.push_back(d.name);
      return extract_presence_features(traces, space, all, length_feature);
    }
    case AttributionModel::kM2:
      return extract_sequential_features(traces, space, depth, length_feature);
  }
  throw UsageError("unreachable attribution model");
}

std::map<std::string, double> RegressionFit::coefficient_map() const {
  std::map<std::string, double> m;
  for (std::size_t i = 0; i < feature_names.size(); ++i) {
    m[feature_names[i]] = coefficients(static_cast<Eigen::Index>(i));
  }
  return m;
}

namespace {

void check_inputs(const FeatureMatrix& X, const Eigen::VectorXd& y) {
  if (X.values.rows() == 0) throw NumericError("regression on zero rows");
  if (X.values.rows() != y.size()) throw NumericError("design rows and outcome length differ");
  if (!X.values.allFinite() || !y.allFinite()) throw NumericError("non-finite regression input");
}

double safe_r2(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  try {
    return numeric::r_squared(y, yhat);
  } catch (const NumericError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace

RegressionFit fit_ols(const FeatureMatrix& X, const Eigen::VectorXd& y) {
  check_inputs(X, y);
  numeric::LinearFit<double> lf = numeric::ols_min_norm(X.values, y);
  RegressionFit f;
  f.model_kind = ModelKind::kOls;
  f.feature_names = X.column_names;
  f.coefficients = lf.beta;
  f.intercept = lf.intercept;
  f.rank = lf.rank;
  f.train_rows = static_cast<std::size_t>(X.values.rows());
  f.nonzero_count = static_cast<int>((f.coefficients.array() != 0.0).count());
  if (lf.rank < X.values.cols()) {
    log_info("OLS design rank " + std::to_string(lf.rank) + " of " +
             std::to_string(X.values.cols()) + " columns; minimum-norm solution used");
  }
  f.train_r2 = safe_r2(y, predict(f, X));
  return f;
}

namespace {

struct PathRun {
  std::vector<numeric::LinearFit<double>> fits;  // per grid point
  int sweeps = 0;
  bool converged = true;
  int objective_increases = 0;
  double max_kkt_excess = 0;
};

// Warm-started coordinate descent along grid[0..count).
PathRun run_path(const numeric::LassoProblem<double>& p, const std::vector<double>& grid,
                 std::size_t count, double tol, int max_sweeps) {
  PathRun run;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p.c.size());
  Eigen::VectorXd prev = beta, start;
  for (std::size_t i = 0; i < count; ++i) {
    // Warm start from a linear extrapolation of the last two solutions,
    // zeroing coefficients whose sign would flip.
    start = beta;
    if (i >= 2 && grid[i - 1] != grid[i - 2]) {
      const double f = (grid[i] - grid[i - 1]) / (grid[i - 1] - grid[i - 2]);
      for (Eigen::Index j = 0; j < beta.size(); ++j) {
        const double v = beta(j) + f * (beta(j) - prev(j));
        start(j) = beta(j) != 0.0 && (v > 0) == (beta(j) > 0) ? v : 0.0;
      }
    }
    prev = beta;
    numeric::CDResult<double> r = numeric::lasso_cd(p, grid[i], start, tol, max_sweeps);
    run.sweeps += r.sweeps;
    run.objective_increases += r.objective_increases;
    if (r.converged) {
      run.max_kkt_excess = std::max(run.max_kkt_excess, r.max_kkt_violation);
    } else {
      run.converged = false;
    }
    beta = r.beta;
    run.fits.push_back(numeric::lasso_unstandardize(p, r.beta));
  }
  return run;
}

RegressionFit lasso_result(const FeatureMatrix& X, const Eigen::VectorXd& y,
                           const numeric::LinearFit<double>& lf, double alpha) {
  RegressionFit f;
  f.model_kind = ModelKind::kLasso;
  f.feature_names = X.column_names;
  f.coefficients = lf.beta;
  f.intercept = lf.intercept;
  f.alpha = alpha;
  f.nonzero_count = static_cast<int>((f.coefficients.array() != 0.0).count());
  f.train_rows = static_cast<std::size_t>(X.values.rows());
  f.train_r2 = safe_r2(y, predict(f, X));
  return f;
}

}  // namespace

RegressionFit fit_lasso_at(const FeatureMatrix& X, const Eigen::VectorXd& y, double alpha,
                           double tolerance, int max_sweeps) {
  check_inputs(X, y);
  if (!(alpha >= 0)) throw NumericError("LASSO alpha must be >= 0");
  auto p = numeric::make_lasso_problem(numeric::gram_stats(X.values, y));
  PathRun run = run_path(p, {alpha}, 1, tolerance, max_sweeps);
  RegressionFit f = lasso_result(X, y, run.fits.back(), alpha);
  f.sweeps = run.sweeps;
  f.converged = run.converged;
  f.objective_increases = run.objective_increases;
  f.max_kkt_excess = run.max_kkt_excess;
  return f;
}

RegressionFit fit_lasso(const FeatureMatrix& X, const Eigen::VectorXd& y,
                        const LassoOptions& opt) {
  check_inputs(X, y);
  if (opt.folds < 2) throw UsageError("LASSO cross-validation needs at least 2 folds");
  const Eigen::Index n = X.values.rows();
  if (n < opt.folds) throw NumericError("fewer rows than cross-validation folds");

  // Seeded shuffle, then contiguous blocks.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  Rng rng(opt.seed);
  shuffle_in_place(order, rng);
  std::vector<std::vector<Eigen::Index>> fold_rows(static_cast<std::size_t>(opt.folds));
  for (int f = 0; f < opt.folds; ++f) {
    const auto lo = static_cast<std::size_t>(n * f / opt.folds);
    const auto hi = static_cast<std::size_t>(n * (f + 1) / opt.folds);
    fold_rows[static_cast<std::size_t>(f)].assign(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                                  order.begin() + static_cast<std::ptrdiff_t>(hi));
  }

  std::vector<numeric::GramStats<double>> fold_stats;
  std::vector<Eigen::MatrixXd> fold_X;
  std::vector<Eigen::VectorXd> fold_y;
  numeric::GramStats<double> total;
  for (std::size_t f = 0; f < fold_rows.size(); ++f) {
    fold_X.push_back(X.values(fold_rows[f], Eigen::all));
    fold_y.push_back(y(fold_rows[f]));
    fold_stats.push_back(numeric::gram_stats(fold_X.back(), fold_y.back()));
    if (f == 0) {
      total = fold_stats.back();
    } else {
      total += fold_stats.back();
    }
  }
  const auto full = numeric::make_lasso_problem(total);

  std::vector<double> grid = opt.alpha_grid;
  if (grid.empty()) {
    const double amax = full.alpha_max();
    grid = amax > 0 ? numeric::log_grid(amax, opt.grid_ratio, opt.grid_size)
                    : std::vector<double>{0.0};
  }
  for (double a : grid) {
    if (!(a >= 0) || !std::isfinite(a)) throw NumericError("alpha grid values must be finite and >= 0");
  }

  int objective_increases = 0, sweeps = 0;
  double kkt = 0;
  bool converged = true;
  std::vector<double> r2_sum(grid.size(), 0.0);
  std::vector<int> r2_count(grid.size(), 0);
  for (std::size_t f = 0; f < fold_rows.size(); ++f) {
    const auto prob = numeric::make_lasso_problem(total - fold_stats[f]);
    PathRun run = run_path(prob, grid, grid.size(), opt.tolerance, opt.max_sweeps);
    objective_increases += run.objective_increases;
    sweeps += run.sweeps;
    kkt = std::max(kkt, run.max_kkt_excess);
    converged = converged && run.converged;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      Eigen::VectorXd pred = (fold_X[f] * run.fits[g].beta).array() + run.fits[g].intercept;
      double r2 = safe_r2(fold_y[f], pred);
      if (std::isfinite(r2)) {
        r2_sum[g] += r2;
        ++r2_count[g];
      }
    }
  }

  std::vector<std::pair<double, double>> curve;
  std::size_t best = 0;
  double best_r2 = -std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double mean = r2_count[g] ? r2_sum[g] / r2_count[g] : std::numeric_limits<double>::quiet_NaN();
    curve.emplace_back(grid[g], mean);
    if (std::isfinite(mean) && mean > best_r2) {
      best_r2 = mean;
      best = g;
    }
  }

  PathRun final_run = run_path(full, grid, best + 1, opt.tolerance, opt.max_sweeps);
  RegressionFit fit = lasso_result(X, y, final_run.fits.back(), grid[best]);
  fit.cv_curve = std::move(curve);
  fit.sweeps = sweeps + final_run.sweeps;
  fit.converged = converged && final_run.converged;
  fit.objective_increases = objective_increases + final_run.objective_increases;
  fit.max_kkt_excess = std::max(kkt, final_run.max_kkt_excess);
  if (!fit.converged) log_warning("LASSO coordinate descent hit the sweep limit");
  return fit;
}

Eigen::VectorXd predict(const RegressionFit& fit, const FeatureMatrix& X) {
  if (X.column_names != fit.feature_names) {
    throw FeatureError("feature columns do not match the fitted model");
  }
  return (X.values * fit.coefficients).array() + fit.intercept;
}

namespace {
double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}
}  // namespace

FitEvaluation evaluate_fit(const RegressionFit& fit, const FeatureMatrix& X_test,
                           const Eigen::VectorXd& y_test, int bootstrap_iterations,
                           std::uint64_t seed) {
  check_inputs(X_test, y_test);
  const Eigen::VectorXd pred = predict(fit, X_test);
  FitEvaluation ev;
  ev.r2 = numeric::r_squared(y_test, pred);
  ev.bootstrap_iterations = bootstrap_iterations;
  const Eigen::Index n = y_test.size();
  std::vector<double> draws;
  Rng rng(seed);
  Eigen::VectorXd yb(n), pb(n);
  for (int b = 0; b < bootstrap_iterations; ++b) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto j = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n)));
      yb(i) = y_test(j);
      pb(i) = pred(j);
    }
    double r2 = safe_r2(yb, pb);
    if (std::isfinite(r2)) {
      draws.push_back(r2);
    } else {
      ++ev.degenerate_resamples;
    }
  }
  if (draws.empty()) {
    ev.ci_low = ev.ci_high = ev.r2;
  } else {
    std::sort(draws.begin(), draws.end());
    ev.ci_low = quantile_sorted(draws, 0.025);
    ev.ci_high = quantile_sorted(draws, 0.975);
  }
  return ev;
}

TrainTestSplit split_train_test(const std::vector<Trace>& traces, double train_fraction,
                                std::uint64_t seed, bool remove_duplicates) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw UsageError("train fraction must lie in (0, 1)");
  }
  TrainTestSplit s;
  std::vector<std::string> ids;
  std::unordered_set<std::string> answers;
  for (const Trace& t : traces) {
    if (remove_duplicates && !answers.insert(t.final_answer).second) {
      s.removed_duplicates.push_back(t.id());
      continue;
    }
    ids.push_back(t.id());
  }
  Rng rng(seed);
  shuffle_in_place(ids, rng);
  const auto cut = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(ids.size())));
  s.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(cut));
  s.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(cut), ids.end());
  return s;
}

FeatureMatrix select_rows(const FeatureMatrix& X, const std::vector<std::string>& ids) {
  std::map<std::string, Eigen::Index> where;
  for (std::size_t r = 0; r < X.row_ids.size(); ++r) {
    where.emplace(X.row_ids[r], static_cast<Eigen::Index>(r));
  }
  std::vector<Eigen::Index> rows;
  for (const std::string& id : ids) {
    auto it = where.find(id);
    if (it == where.end()) throw FeatureError("row id " + id + " not in feature matrix");
    rows.push_back(it->second);
  }
  FeatureMatrix out;
  out.row_ids = ids;
  out.column_names = X.column_names;
  out.values = X.values(rows, Eigen::all);
  return out;
}

void write_feature_csv(const std::filesystem::path& path, const FeatureMatrix& X,
                       const std::optional<Eigen::VectorXd>& y, const std::string& comment) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  if (!comment.empty()) out << "# " << comment << '\n';
  out << "id";
  for (const std::string& c : X.column_names) out << ',' << c;
  if (y) out << ",Y";
  out << '\n';
  char buf[64];
  for (Eigen::Index r = 0; r < X.values.rows(); ++r) {
    out << X.row_ids[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < X.values.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", X.values(r, c));
      out << ',' << buf;
    }
    if (y) {
      std::snprintf(buf, sizeof buf, "%.17g", (*y)(r));
      out << ',' << buf;
    }
    out << '\n';
  }
}

json to_json(const RegressionFit& f) {
  json coef = json::object();
  for (std::size_t i = 0; i < f.feature_names.size(); ++i) {
    coef[f.feature_names[i]] = f.coefficients(static_cast<Eigen::Index>(i));
  }
  json curve = json::array();
  for (const auto& [a, r2] : f.cv_curve) {
    curve.push_back({{"alpha", a}, {"mean_cv_r2", std::isfinite(r2) ? json(r2) : json(nullptr)}});
  }
  json out = {{"model_kind", f.model_kind == ModelKind::kOls ? "ols" : "lasso"},
              {"features", f.feature_names},
              {"coefficients", coef},
              {"intercept", f.intercept},
              {"alpha", f.alpha},
              {"cv_curve", curve},
              {"train_r2", std::isfinite(f.train_r2) ? json(f.train_r2) : json(nullptr)},
              {"nonzero_count", f.nonzero_count},
              {"train_rows", f.train_rows},
              {"diagnostics",
               {{"rank", f.rank},
                {"sweeps", f.sweeps},
                {"converged", f.converged},
                {"objective_increases", f.objective_increases},
                {"max_kkt_excess", f.max_kkt_excess}}}};
  out["test_r2"] = f.test_r2 ? json(*f.test_r2) : json(nullptr);
  out["test_r2_ci"] =
      f.test_r2_ci ? json::array({f.test_r2_ci->first, f.test_r2_ci->second}) : json(nullptr);
  return out;
}

RegressionFit regression_fit_from_json(const json& doc) {
  try {
    RegressionFit f;
    f.model_kind = doc.value("model_kind", "lasso") == "ols" ? ModelKind::kOls : ModelKind::kLasso;
    f.feature_names = doc.at("features").get<std::vector<std::string>>();
    const json& coef = doc.at("coefficients");
    f.coefficients.resize(static_cast<Eigen::Index>(f.feature_names.size()));
    for (std::size_t i = 0; i < f.feature_names.size(); ++i) {
      f.coefficients(static_cast<Eigen::Index>(i)) = coef.at(f.feature_names[i]).get<double>();
    }
    f.intercept = doc.at("intercept").get<double>();
    f.alpha = doc.value("alpha", 0.0);
    f.nonzero_count = static_cast<int>((f.coefficients.array() != 0.0).count());
    if (doc.contains("train_r2") && doc["train_r2"].is_number()) f.train_r2 = doc["train_r2"].get<double>();
    if (doc.contains("test_r2") && doc["test_r2"].is_number()) f.test_r2 = doc["test_r2"].get<double>();
    if (doc.contains("cv_curve")) {
      for (const json& p : doc["cv_curve"]) {
        double r2 = p["mean_cv_r2"].is_number() ? p["mean_cv_r2"].get<double>()
                                                : std::numeric_limits<double>::quiet_NaN();
        f.cv_curve.emplace_back(p.at("alpha").get<double>(), r2);
      }
    }
    return f;
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad fit report: ") + e.what());
  }
}

}  // namespace actree
