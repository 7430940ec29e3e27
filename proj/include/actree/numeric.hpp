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


// Dense numeric kernels shared by the preference and attribution modules.
// Everything is templated on the scalar type and works on Eigen expressions;
// the string-keyed wrappers live in preference.hpp and attribution.hpp.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "actree/common.hpp"

namespace actree::numeric {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// S(z, g) = sign(z) max(|z| - g, 0).
template <typename Scalar>
Scalar soft_threshold(Scalar z, Scalar gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return Scalar(0);
}

// 1 - SSE/SST. Throws NumericError when SST is zero.
template <typename A, typename B>
typename A::Scalar r_squared(const Eigen::MatrixBase<A>& y,
                             const Eigen::MatrixBase<B>& yhat) {
  using Scalar = typename A::Scalar;
  const Scalar mean = y.mean();
  const Scalar sst = (y.array() - mean).square().sum();
  if (!(sst > Scalar(0))) throw NumericError("R^2 undefined: total sum of squares is 0");
  const Scalar sse = (y - yhat).squaredNorm();
  return Scalar(1) - sse / sst;
}

// Average ranks (1-based) with ties grouped when within tol of each other.
template <typename Derived>
Vec<typename Derived::Scalar> average_ranks(const Eigen::MatrixBase<Derived>& v,
                                            typename Derived::Scalar tol) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = v.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return v(a) < v(b); });
  Vec<Scalar> ranks(n);
  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    while (j + 1 < n && v(order[j + 1]) - v(order[i]) <= tol) ++j;
    const Scalar avg = Scalar(i + j + 2) / Scalar(2);
    for (Eigen::Index t = i; t <= j; ++t) ranks(order[t]) = avg;
    i = j + 1;
  }
  return ranks;
}

// Population z-scores; all zeros when the input is constant.
template <typename Derived>
Vec<typename Derived::Scalar> z_scores(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  const Scalar mean = v.mean();
  Vec<Scalar> c = v.array() - mean;
  const Scalar sd = std::sqrt(c.squaredNorm() / Scalar(v.size()));
  if (!(sd > Scalar(0))) return Vec<Scalar>::Zero(v.size());
  return c / sd;
}

// ---------------------------------------------------------------------------
// Bradley-Terry

// Aggregated comparisons: for pair e, item first[e] beat second[e] wins(e, 0)
// times and lost wins(e, 1) times.
template <typename Scalar>
struct PairCounts {
  Eigen::Index items = 0;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
  Mat<Scalar> wins;  // |pairs| x 2
};

template <typename Scalar>
Scalar bt_log_likelihood(const PairCounts<Scalar>& pc, const Vec<Scalar>& pi) {
  Scalar ll(0);
  for (std::size_t e = 0; e < pc.pairs.size(); ++e) {
    const auto [i, j] = pc.pairs[e];
    const Scalar denom = std::log(pi(i) + pi(j));
    const auto ei = static_cast<Eigen::Index>(e);
    ll += pc.wins(ei, 0) * (std::log(pi(i)) - denom) +
          pc.wins(ei, 1) * (std::log(pi(j)) - denom);
  }
  return ll;
}

template <typename Scalar>
struct BTResult {
  Vec<Scalar> strengths;
  int iterations = 0;
  bool converged = false;
  std::vector<Scalar> log_likelihood;  // after each iteration, index 0 = start
};

// Minorize-maximize updates pi_i <- W_i / sum_j n_ij / (pi_i + pi_j), then
// rescaled to geometric mean 1. Every item must have at least one win and
// one loss for the maximum to exist; callers add pseudo-counts otherwise.
// Throws NumericError if the log-likelihood ever decreases.
template <typename Scalar>
BTResult<Scalar> bt_mm(const PairCounts<Scalar>& pc, Scalar tol = Scalar(1e-8),
                       int max_iterations = 10000) {
  const Eigen::Index n = pc.items;
  Vec<Scalar> total_wins = Vec<Scalar>::Zero(n);
  for (std::size_t e = 0; e < pc.pairs.size(); ++e) {
    const auto ei = static_cast<Eigen::Index>(e);
    total_wins(pc.pairs[e].first) += pc.wins(ei, 0);
    total_wins(pc.pairs[e].second) += pc.wins(ei, 1);
  }
  BTResult<Scalar> r;
  r.strengths = Vec<Scalar>::Ones(n);
  r.log_likelihood.push_back(bt_log_likelihood(pc, r.strengths));
  Vec<Scalar> denom(n);
  for (int it = 1; it <= max_iterations; ++it) {
    denom.setZero();
    for (std::size_t e = 0; e < pc.pairs.size(); ++e) {
      const auto [i, j] = pc.pairs[e];
      const auto ei = static_cast<Eigen::Index>(e);
      const Scalar nij = pc.wins(ei, 0) + pc.wins(ei, 1);
      const Scalar t = nij / (r.strengths(i) + r.strengths(j));
      denom(i) += t;
      denom(j) += t;
    }
    Vec<Scalar> next = total_wins.cwiseQuotient(denom);
    if ((next.array() <= Scalar(0)).any() || !next.allFinite()) {
      throw NumericError("Bradley-Terry strengths left the positive orthant");
    }
    next /= std::exp(next.array().log().mean());
    const Scalar change =
        ((next - r.strengths).cwiseAbs().cwiseQuotient(r.strengths)).maxCoeff();
    r.strengths = std::move(next);
    r.iterations = it;
    const Scalar ll = bt_log_likelihood(pc, r.strengths);
    const Scalar prev = r.log_likelihood.back();
    if (ll < prev - Scalar(1e-10) * (Scalar(1) + std::abs(prev))) {
      throw NumericError("Bradley-Terry log-likelihood decreased");
    }
    r.log_likelihood.push_back(ll);
    if (change < tol) {
      r.converged = true;
      break;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Least squares

template <typename Scalar>
struct LinearFit {
  Vec<Scalar> beta;
  Scalar intercept = 0;
  Eigen::Index rank = 0;
};

// Centers X and y, then takes the minimum-norm least-squares solution from a
// complete orthogonal decomposition.
template <typename DX, typename DY>
LinearFit<typename DX::Scalar> ols_min_norm(const Eigen::MatrixBase<DX>& X,
                                            const Eigen::MatrixBase<DY>& y) {
  using Scalar = typename DX::Scalar;
  if (X.rows() == 0) throw NumericError("least squares on an empty matrix");
  if (X.rows() != y.size()) throw NumericError("least squares: row count mismatch");
  const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> means = X.colwise().mean();
  const Scalar ymean = y.mean();
  LinearFit<Scalar> fit;
  if (X.cols() == 0) {
    fit.beta.resize(0);
    fit.intercept = ymean;
    return fit;
  }
  Mat<Scalar> Xc = X.rowwise() - means;
  Vec<Scalar> yc = y.array() - ymean;
  Eigen::CompleteOrthogonalDecomposition<Mat<Scalar>> cod(Xc);
  fit.rank = cod.rank();
  fit.beta = cod.solve(yc);
  fit.intercept = ymean - means.dot(fit.beta);
  return fit;
}

// ---------------------------------------------------------------------------
// LASSO by cyclic coordinate descent in covariance form

// Raw sufficient statistics over a row subset. Differences of two Gram
// blocks give the statistics of the complement rows.
template <typename Scalar>
struct GramStats {
  Scalar n = 0;
  Mat<Scalar> xx;  // sum x x^T
  Vec<Scalar> x;   // sum x
  Vec<Scalar> xy;  // sum x y
  Scalar y = 0, yy = 0;

  GramStats operator-(const GramStats& o) const {
    return GramStats{n - o.n, xx - o.xx, x - o.x, xy - o.xy, y - o.y, yy - o.yy};
  }
  GramStats& operator+=(const GramStats& o) {
    n += o.n;
    xx += o.xx;
    x += o.x;
    xy += o.xy;
    y += o.y;
    yy += o.yy;
    return *this;
  }
};

template <typename DX, typename DY>
GramStats<typename DX::Scalar> gram_stats(const Eigen::MatrixBase<DX>& X,
                                          const Eigen::MatrixBase<DY>& y) {
  using Scalar = typename DX::Scalar;
  GramStats<Scalar> g;
  g.n = Scalar(X.rows());
  g.xx = Mat<Scalar>::Zero(X.cols(), X.cols());
  g.xx.template selfadjointView<Eigen::Lower>().rankUpdate(X.transpose());
  g.xx = g.xx.template selfadjointView<Eigen::Lower>();
  g.x = X.colwise().sum().transpose();
  g.xy = X.transpose() * y;
  g.y = y.sum();
  g.yy = y.squaredNorm();
  return g;
}

// Standardized covariance-form problem: G = X_s^T X_s / N, c = X_s^T y_c / N
// over the non-constant columns.
template <typename Scalar>
struct LassoProblem {
  Eigen::Index total_columns = 0;
  std::vector<Eigen::Index> columns;  // kept original column indices
  Vec<Scalar> mean, sd;               // of the kept columns
  Mat<Scalar> G;
  Vec<Scalar> c;
  Scalar y_mean = 0;
  Scalar y_var = 0;  // centered sum of squares / N

  // Smallest alpha with an all-zero solution.
  Scalar alpha_max() const { return c.size() ? c.cwiseAbs().maxCoeff() : Scalar(0); }
};

template <typename Scalar>
LassoProblem<Scalar> make_lasso_problem(const GramStats<Scalar>& g,
                                        Scalar constant_tol = Scalar(1e-12)) {
  if (!(g.n > 0)) throw NumericError("LASSO on zero rows");
  LassoProblem<Scalar> p;
  p.total_columns = g.x.size();
  const Vec<Scalar> m = g.x / g.n;
  for (Eigen::Index j = 0; j < m.size(); ++j) {
    const Scalar var = g.xx(j, j) / g.n - m(j) * m(j);
    if (var > constant_tol * (Scalar(1) + m(j) * m(j))) p.columns.push_back(j);
  }
  const auto k = static_cast<Eigen::Index>(p.columns.size());
  p.mean.resize(k);
  p.sd.resize(k);
  p.y_mean = g.y / g.n;
  p.y_var = g.yy / g.n - p.y_mean * p.y_mean;
  p.G.resize(k, k);
  p.c.resize(k);
  for (Eigen::Index a = 0; a < k; ++a) {
    const Eigen::Index ja = p.columns[a];
    p.mean(a) = m(ja);
    p.sd(a) = std::sqrt(g.xx(ja, ja) / g.n - m(ja) * m(ja));
  }
  for (Eigen::Index a = 0; a < k; ++a) {
    const Eigen::Index ja = p.columns[a];
    p.c(a) = (g.xy(ja) / g.n - p.mean(a) * p.y_mean) / p.sd(a);
    for (Eigen::Index b = 0; b <= a; ++b) {
      const Eigen::Index jb = p.columns[b];
      const Scalar cov = g.xx(ja, jb) / g.n - p.mean(a) * p.mean(b);
      p.G(a, b) = p.G(b, a) = cov / (p.sd(a) * p.sd(b));
    }
  }
  return p;
}

template <typename Scalar>
struct CDResult {
  Vec<Scalar> beta;  // standardized scale, aligned with problem.columns
  int sweeps = 0;
  bool converged = false;
  int objective_increases = 0;
  Scalar objective = 0;
  Scalar max_kkt_violation = 0;  // max_j (|grad_j| - alpha)+ at exit
};

// (1/2) y_var - c^T b + (1/2) b^T G b + alpha |b|_1, which equals
// (1/2N) ||y - X b||^2 + alpha |b|_1 on the standardized data.
template <typename Scalar>
Scalar lasso_objective(const LassoProblem<Scalar>& p, const Vec<Scalar>& beta,
                       const Vec<Scalar>& grad, Scalar alpha) {
  // grad = c - G beta, so beta^T G beta = beta^T (c - grad).
  return Scalar(0.5) * p.y_var - p.c.dot(beta) +
         Scalar(0.5) * beta.dot(p.c - grad) + alpha * beta.template lpNorm<1>();
}

// Anderson weights from K+1 consecutive sweep iterates (columns of `hist`,
// oldest first): the affine combination of the last K iterates that best
// cancels their successive differences. Empty when degenerate.
template <typename Scalar>
Vec<Scalar> anderson_weights(const Mat<Scalar>& hist) {
  const Eigen::Index K = hist.cols() - 1;
  const Mat<Scalar> U = hist.rightCols(K) - hist.leftCols(K);
  Mat<Scalar> A = U.transpose() * U;
  const Scalar scale = A.trace();
  if (!(scale > 0) || !std::isfinite(scale)) return {};
  A.diagonal().array() += Scalar(1e-10) * scale;
  const Vec<Scalar> z = A.ldlt().solve(Vec<Scalar>::Ones(K));
  const Scalar total = z.sum();
  if (!std::isfinite(total) || std::abs(total) < std::numeric_limits<Scalar>::epsilon()) return {};
  return z / total;
}

namespace detail {

// Moves `beta` toward `target` on the segment between them, stopping where
// the first coefficient would cross zero. Keeps `grad` = c - G beta.
template <typename Scalar>
void clipped_move(const Mat<Scalar>& G, Vec<Scalar>& beta, Vec<Scalar>& grad,
                  const Vec<Scalar>& target, const Vec<Scalar>& target_grad) {
  Scalar t = 1;
  Eigen::Index hit = -1;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    if (beta(j) != Scalar(0) && (target(j) > 0) != (beta(j) > 0)) {
      const Scalar tj = beta(j) / (beta(j) - target(j));
      if (tj < t) {
        t = tj;
        hit = j;
      }
    }
  }
  beta += t * (target - beta);
  grad += t * (target_grad - grad);
  if (hit >= 0) {
    grad.noalias() += beta(hit) * G.col(hit);
    beta(hit) = 0;
  }
}

// Conjugate gradient on G_AA x = c_A - alpha s_A from the current support
// and signs. Returns the iterate and its full-length gradient.
template <typename Scalar>
bool support_cg(const Mat<Scalar>& G, const Vec<Scalar>& c, Scalar alpha,
                const Vec<Scalar>& beta, const Vec<Scalar>& grad, int max_iter,
                Vec<Scalar>& out, Vec<Scalar>& out_grad) {
  std::vector<Eigen::Index> A;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    if (beta(j) != Scalar(0)) A.push_back(j);
  }
  if (A.empty()) return false;
  const Mat<Scalar> GA = G(A, A);
  Vec<Scalar> x = beta(A);
  Vec<Scalar> res(x.size());
  for (Eigen::Index a = 0; a < x.size(); ++a) {
    res(a) = grad(A[a]) - alpha * (x(a) > 0 ? Scalar(1) : Scalar(-1));
  }
  const Scalar stop = Scalar(1e-24) * std::max(Scalar(1), c.squaredNorm());
  Vec<Scalar> dir = res, q(x.size());
  Scalar rr = res.squaredNorm();
  for (int it = 0; it < max_iter && rr > stop; ++it) {
    q.noalias() = GA * dir;
    const Scalar curv = dir.dot(q);
    if (!(curv > 0)) break;
    const Scalar step = rr / curv;
    x += step * dir;
    res -= step * q;
    const Scalar next = res.squaredNorm();
    dir = res + (next / rr) * dir;
    rr = next;
  }
  if (!x.allFinite()) return false;
  out = Vec<Scalar>::Zero(beta.size());
  out(A) = x;
  out_grad = c;
  out_grad.noalias() -= G(Eigen::all, A) * x;
  return true;
}

}  // namespace detail

template <typename Scalar>
CDResult<Scalar> lasso_cd(const LassoProblem<Scalar>& p, Scalar alpha,
                          Vec<Scalar> beta, Scalar tol = Scalar(1e-7),
                          int max_sweeps = 10000) {
  constexpr Eigen::Index kAnderson = 5;
  constexpr int kStableSweeps = 3, kCGAfter = 200, kCGIterations = 100;
  const Eigen::Index k = p.c.size();
  if (beta.size() != k) beta = Vec<Scalar>::Zero(k);
  Vec<Scalar> grad = p.c - p.G * beta;
  CDResult<Scalar> r;
  Scalar obj = lasso_objective(p, beta, grad, alpha);
  // Jumps between sweeps are kept only when they lower the objective, so
  // the iterates stay monotone.
  // grad is affine in beta, so extrapolated gradients come from the same
  // weights applied to stored gradients.
  Mat<Scalar> hist_b(k, kAnderson + 1), hist_g(k, kAnderson + 1);
  Eigen::Index filled = 0;
  Eigen::Array<signed char, Eigen::Dynamic, 1> signs =
      Eigen::Array<signed char, Eigen::Dynamic, 1>::Zero(k);
  int stable = 0, next_cg = kStableSweeps;
  Vec<Scalar> tb, tg;
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    Scalar max_change = 0;
    for (Eigen::Index j = 0; j < k; ++j) {
      const Scalar gjj = p.G(j, j);
      const Scalar old = beta(j);
      const Scalar next = soft_threshold(grad(j) + gjj * old, alpha) / gjj;
      const Scalar delta = next - old;
      if (delta != Scalar(0)) {
        beta(j) = next;
        grad.noalias() -= delta * p.G.col(j);
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    const Scalar next_obj = lasso_objective(p, beta, grad, alpha);
    if (next_obj > obj + Scalar(1e-12) * (Scalar(1) + std::abs(obj))) {
      ++r.objective_increases;
    }
    obj = next_obj;
    r.sweeps = sweep;
    if (max_change < tol) {
      r.converged = true;
      break;
    }

    bool same = true;
    for (Eigen::Index j = 0; j < k; ++j) {
      const signed char sj = beta(j) > 0 ? 1 : (beta(j) < 0 ? -1 : 0);
      if (sj != signs(j)) {
        same = false;
        signs(j) = sj;
      }
    }
    stable = same ? stable + 1 : 0;
    if (stable == 0) next_cg = kStableSweeps;

    bool jumped = false;
    Vec<Scalar> keep_b = beta, keep_g = grad;
    // Long stalls on a fixed sign pattern get a CG jump, with backoff.
    if (sweep >= kCGAfter && stable >= next_cg && (next_cg = 2 * stable) &&
        detail::support_cg(p.G, p.c, alpha, beta, grad, kCGIterations, tb, tg)) {
      jumped = true;
    } else {
      // Anderson step over the last K+1 iterates.
      if (filled == kAnderson + 1) {
        hist_b.leftCols(kAnderson) = hist_b.rightCols(kAnderson).eval();
        hist_g.leftCols(kAnderson) = hist_g.rightCols(kAnderson).eval();
        filled = kAnderson;
      }
      hist_b.col(filled) = beta;
      hist_g.col(filled) = grad;
      if (++filled == kAnderson + 1) {
        const Vec<Scalar> z = anderson_weights(hist_b);
        if (z.size() == kAnderson) {
          tb = hist_b.rightCols(kAnderson) * z;
          tg = hist_g.rightCols(kAnderson) * z;
          jumped = tb.allFinite();
        }
      }
    }
    if (jumped) {
      detail::clipped_move(p.G, beta, grad, tb, tg);
      const Scalar tobj = lasso_objective(p, beta, grad, alpha);
      if (tobj < obj) {
        obj = tobj;
        filled = 0;
      } else {
        beta = std::move(keep_b);
        grad = std::move(keep_g);
      }
    }
  }
  r.objective = obj;
  grad = p.c - p.G * beta;  // refresh against drift
  for (Eigen::Index j = 0; j < k; ++j) {
    r.max_kkt_violation = std::max(r.max_kkt_violation, std::abs(grad(j)) - alpha);
  }
  r.beta = std::move(beta);
  return r;
}

// Maps standardized coefficients back to the original columns.
template <typename Scalar>
LinearFit<Scalar> lasso_unstandardize(const LassoProblem<Scalar>& p,
                                      const Vec<Scalar>& beta_std) {
  LinearFit<Scalar> f;
  f.beta = Vec<Scalar>::Zero(p.total_columns);
  f.intercept = p.y_mean;
  for (std::size_t a = 0; a < p.columns.size(); ++a) {
    const auto ai = static_cast<Eigen::Index>(a);
    const Scalar b = beta_std(ai) / p.sd(ai);
    f.beta(p.columns[a]) = b;
    f.intercept -= b * p.mean(ai);
  }
  f.rank = static_cast<Eigen::Index>((f.beta.array() != Scalar(0)).count());
  return f;
}

// `count` log-spaced values from hi down to hi * ratio.
template <typename Scalar>
std::vector<Scalar> log_grid(Scalar hi, Scalar ratio, int count) {
  std::vector<Scalar> g;
  if (count <= 0) return g;
  if (count == 1) return {hi};
  const Scalar step = std::log(ratio) / Scalar(count - 1);
  for (int i = 0; i < count; ++i) g.push_back(hi * std::exp(step * Scalar(i)));
  return g;
}

}  // namespace actree::numeric
