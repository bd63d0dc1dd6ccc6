#pragma once

// L1-regularised reconstruction of a query vector from a gallery track.
//
// Objective, with no sample-count scaling:
//
//     J(g) = ||y - X g||_2^2 + alpha * ||g||_1
//
// Its optimality conditions are |2 x_i^T (y - X g)| <= alpha, with equality
// and matching sign wherever g_i != 0. The LARS path below works in
// correlation units c = X^T r, where the target level is lambda = alpha / 2.

#include "reid/core.hpp"
#include "reid/kernels.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

namespace reid {

using MatrixCRef = Eigen::Ref<const FeatureMatrix>;
using VectorCRef = Eigen::Ref<const LatentVector>;

struct SparseCode {
  Eigen::VectorXd coefficients;
  std::vector<std::size_t> support;
  double objective_value = 0.0;
};

namespace detail {

inline void require_finite(const double* p, Eigen::Index n, const char* what) {
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(p[i])) fail(ErrorKind::numerical, std::string(what) + " contains a non-finite value");
  }
}

inline double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

inline std::vector<std::size_t> support_of(const Eigen::VectorXd& g) {
  std::vector<std::size_t> s;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (g[i] != 0.0) s.push_back(static_cast<std::size_t>(i));
  }
  return s;
}

}  // namespace detail

/// Squared residual ||y - X g||^2 evaluated column by column in f-space.
inline double reconstruction_residual(MatrixCRef dictionary, VectorCRef target, const Eigen::VectorXd& code) {
  const auto f = static_cast<std::size_t>(dictionary.rows());
  std::vector<double> r(target.data(), target.data() + f);
  for (Eigen::Index i = 0; i < code.size(); ++i) {
    const double g = code[i];
    if (g == 0.0) continue;
    const double* x = dictionary.col(i).data();
    for (std::size_t k = 0; k < f; ++k) r[k] -= g * x[k];
  }
  return kernels::dot(r.data(), r.data(), f);
}

inline double lasso_objective(MatrixCRef dictionary, VectorCRef target, const Eigen::VectorXd& code, double alpha) {
  return reconstruction_residual(dictionary, target, code) + alpha * code.lpNorm<1>();
}

/// Largest violation of the optimality conditions (0 for an exact minimiser).
inline double kkt_violation(MatrixCRef dictionary, VectorCRef target, const Eigen::VectorXd& code, double alpha) {
  const Eigen::VectorXd residual = target - dictionary * code;
  const Eigen::VectorXd grad = 2.0 * (dictionary.transpose() * residual);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < code.size(); ++i) {
    const double v = code[i] != 0.0 ? std::abs(grad[i] - alpha * detail::sign_of(code[i]))
                                     : std::max(0.0, std::abs(grad[i]) - alpha);
    worst = std::max(worst, v);
  }
  return worst;
}

inline LatentVector normalized(VectorCRef v) {
  const double n = kernels::norm(v.data(), static_cast<std::size_t>(v.size()));
  if (!(n > 0.0)) fail(ErrorKind::numerical, "cannot normalise a zero-norm vector");
  return v / n;
}

inline FeatureMatrix normalized_columns(MatrixCRef m) {
  FeatureMatrix out(m.rows(), m.cols());
  const auto f = static_cast<std::size_t>(m.rows());
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const double n = kernels::norm(m.col(j).data(), f);
    if (!(n > 0.0)) {
      fail(ErrorKind::numerical, "cannot normalise zero-norm column " + std::to_string(j));
    }
    out.col(j) = m.col(j) / n;
  }
  return out;
}

inline Eigen::MatrixXd gram_matrix(MatrixCRef dictionary) {
  const Eigen::Index n = dictionary.cols();
  const auto f = static_cast<std::size_t>(dictionary.rows());
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      g(i, j) = g(j, i) = kernels::dot(dictionary.col(i).data(), dictionary.col(j).data(), f);
    }
  }
  return g;
}

namespace detail {

/// LARS with the lasso modification, entirely in coefficient space.
/// `gram` = X^T X, `xty` = X^T y; stops when the common correlation reaches
/// `lambda`. Collinear candidates are skipped; ties enter lowest index first.
inline Eigen::VectorXd lars_lasso_path(const Eigen::MatrixXd& gram, const Eigen::VectorXd& xty, double lambda) {
  const Eigen::Index n = xty.size();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::Index> active;
  std::vector<char> in_active(static_cast<std::size_t>(n), 0);
  std::vector<char> ignored(static_cast<std::size_t>(n), 0);
  // A variable that just left can only tie again with its old sign at gamma 0,
  // so that sign is barred for one step; the opposite sign may re-enter.
  Eigen::Index just_dropped = -1;
  double just_dropped_sign = 0.0;

  auto correlations = [&] {
    Eigen::VectorXd c = xty;
    for (Eigen::Index j : active) c -= gram.col(j) * beta[j];
    return c;
  };

  auto sub_gram = [&](const std::vector<Eigen::Index>& idx) {
    const auto k = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd g(k, k);
    for (Eigen::Index a = 0; a < k; ++a)
      for (Eigen::Index b = 0; b < k; ++b) g(a, b) = gram(idx[a], idx[b]);
    return g;
  };

  // Schur complement of a candidate against the active block; near zero means
  // the column is (numerically) in the span of the active ones.
  auto independent_of_active = [&](Eigen::Index j) {
    const double gjj = gram(j, j);
    if (!(gjj > 0.0)) return false;
    if (active.empty()) return true;
    Eigen::VectorXd cross(static_cast<Eigen::Index>(active.size()));
    for (std::size_t a = 0; a < active.size(); ++a) cross[static_cast<Eigen::Index>(a)] = gram(active[a], j);
    const Eigen::VectorXd w = sub_gram(active).ldlt().solve(cross);
    return gjj - cross.dot(w) > 1e-10 * gjj;
  };

  const Eigen::Index max_steps = 8 * n + 64;
  Eigen::Index step = 0;
  for (; step < max_steps; ++step) {
    const Eigen::VectorXd c = correlations();

    if (active.empty()) {
      Eigen::Index best = -1;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (ignored[static_cast<std::size_t>(j)]) continue;
        if (best < 0 || std::abs(c[j]) > std::abs(c[best])) best = j;
      }
      if (best < 0 || std::abs(c[best]) <= lambda) break;
      if (!independent_of_active(best)) {
        ignored[static_cast<std::size_t>(best)] = 1;
        continue;
      }
      active.push_back(best);
      in_active[static_cast<std::size_t>(best)] = 1;
    }

    double big_c = 0.0;
    for (Eigen::Index j : active) big_c = std::max(big_c, std::abs(c[j]));
    if (big_c <= lambda) break;

    const auto k = static_cast<Eigen::Index>(active.size());
    Eigen::VectorXd signs(k);
    for (Eigen::Index a = 0; a < k; ++a) {
      const Eigen::Index j = active[static_cast<std::size_t>(a)];
      signs[a] = beta[j] != 0.0 ? sign_of(beta[j]) : sign_of(c[j]);
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(sub_gram(active));
    if (llt.info() != Eigen::Success) fail(ErrorKind::numerical, "lasso-LARS: active Gram block is singular");
    const Eigen::VectorXd w = llt.solve(signs);
    const double s_dot_w = signs.dot(w);
    if (!(s_dot_w > 0.0)) fail(ErrorKind::numerical, "lasso-LARS: degenerate equiangular direction");
    const double equi = 1.0 / std::sqrt(s_dot_w);
    const Eigen::VectorXd direction = equi * w;  // coefficient-space step per unit gamma

    Eigen::VectorXd along = Eigen::VectorXd::Zero(n);  // x_j^T u for every j
    for (Eigen::Index a = 0; a < k; ++a) along += gram.col(active[static_cast<std::size_t>(a)]) * direction[a];

    enum class Event { finish, enter, drop } event = Event::finish;
    double gamma = (big_c - lambda) / equi;
    Eigen::Index who = -1;

    const double denom_floor = 1e-11 * equi;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (in_active[static_cast<std::size_t>(j)] || ignored[static_cast<std::size_t>(j)]) continue;
      for (const double s : {1.0, -1.0}) {
        if (j == just_dropped && s == just_dropped_sign) continue;
        const double denom = equi - s * along[j];
        if (denom <= denom_floor) continue;
        const double g = std::max(0.0, (big_c - s * c[j]) / denom);
        if (g < gamma) {
          gamma = g;
          event = Event::enter;
          who = j;
        }
      }
    }
    double who_sign = 0.0;
    for (Eigen::Index a = 0; a < k; ++a) {
      const Eigen::Index j = active[static_cast<std::size_t>(a)];
      if (direction[a] == 0.0 || beta[j] == 0.0) continue;
      const double g = -beta[j] / direction[a];
      if (g > 0.0 && g < gamma) {
        gamma = g;
        event = Event::drop;
        who = j;
        who_sign = signs[a];
      }
    }

    for (Eigen::Index a = 0; a < k; ++a) beta[active[static_cast<std::size_t>(a)]] += gamma * direction[a];
    just_dropped = -1;

    if (event == Event::finish) {
      ++step;
      break;
    }
    if (event == Event::enter) {
      if (independent_of_active(who)) {
        active.push_back(who);
        in_active[static_cast<std::size_t>(who)] = 1;
      } else {
        ignored[static_cast<std::size_t>(who)] = 1;
      }
    } else {
      beta[who] = 0.0;
      active.erase(std::find(active.begin(), active.end(), who));
      in_active[static_cast<std::size_t>(who)] = 0;
      just_dropped = who;
      just_dropped_sign = who_sign;
    }
  }
  if (step >= max_steps) fail(ErrorKind::numerical, "lasso-LARS did not terminate");

  // Re-solve the final active system from scratch; the stepwise updates
  // accumulate rounding that the direct solve does not.
  if (!active.empty()) {
    const Eigen::VectorXd c = correlations();
    const auto k = static_cast<Eigen::Index>(active.size());
    Eigen::VectorXd rhs(k), signs(k);
    for (Eigen::Index a = 0; a < k; ++a) {
      const Eigen::Index j = active[static_cast<std::size_t>(a)];
      signs[a] = sign_of(c[j]);
      rhs[a] = xty[j] - lambda * signs[a];
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(sub_gram(active));
    if (llt.info() == Eigen::Success) {
      const Eigen::VectorXd refined = llt.solve(rhs);
      bool consistent = refined.allFinite();
      for (Eigen::Index a = 0; a < k && consistent; ++a) {
        if (refined[a] * signs[a] < 0.0) consistent = false;
      }
      if (consistent) {
        for (Eigen::Index a = 0; a < k; ++a) beta[active[static_cast<std::size_t>(a)]] = refined[a];
      }
    }
  }
  return beta;
}

}  // namespace detail

/// Lasso solution by least-angle regression, with a precomputed Gram matrix.
inline SparseCode lasso_lars(MatrixCRef dictionary, const Eigen::MatrixXd& gram, VectorCRef target, double alpha) {
  if (dictionary.rows() != target.size()) {
    fail(ErrorKind::invalid_argument, "lasso: dictionary has " + std::to_string(dictionary.rows()) +
                                          " rows, target has " + std::to_string(target.size()));
  }
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) fail(ErrorKind::invalid_argument, "lasso: alpha must be >= 0");
  detail::require_finite(dictionary.data(), dictionary.size(), "lasso dictionary");
  detail::require_finite(target.data(), target.size(), "lasso target");
  for (Eigen::Index j = 0; j < dictionary.cols(); ++j) {
    if (!(gram(j, j) > 0.0)) fail(ErrorKind::numerical, "lasso: zero-norm dictionary column " + std::to_string(j));
  }

  const auto f = static_cast<std::size_t>(dictionary.rows());
  Eigen::VectorXd xty(dictionary.cols());
  for (Eigen::Index j = 0; j < dictionary.cols(); ++j) xty[j] = kernels::dot(dictionary.col(j).data(), target.data(), f);

  SparseCode code;
  code.coefficients = detail::lars_lasso_path(gram, xty, 0.5 * alpha);
  code.support = detail::support_of(code.coefficients);
  code.objective_value = lasso_objective(dictionary, target, code.coefficients, alpha);
  return code;
}

inline SparseCode lasso_lars(MatrixCRef dictionary, VectorCRef target, double alpha) {
  return lasso_lars(dictionary, gram_matrix(dictionary), target, alpha);
}

/// Cyclic coordinate descent on the same objective. Verification oracle only:
/// it shares no code with the LARS path beyond the objective evaluation.
inline SparseCode coordinate_descent_oracle(MatrixCRef dictionary, VectorCRef target, double alpha,
                                            double tolerance = 1e-12, long max_sweeps = 1'000'000) {
  if (dictionary.rows() != target.size()) fail(ErrorKind::invalid_argument, "oracle: dimension mismatch");
  if (!(alpha >= 0.0)) fail(ErrorKind::invalid_argument, "oracle: alpha must be >= 0");
  detail::require_finite(dictionary.data(), dictionary.size(), "oracle dictionary");
  detail::require_finite(target.data(), target.size(), "oracle target");

  const Eigen::Index n = dictionary.cols();
  const Eigen::VectorXd col_sq = dictionary.colwise().squaredNorm().transpose();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(col_sq[i] > 0.0)) fail(ErrorKind::numerical, "oracle: zero-norm dictionary column");
  }
  const double threshold = 0.5 * alpha;

  Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd r = target;
  for (long sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double rho = dictionary.col(i).dot(r) + col_sq[i] * g[i];
      const double shrunk = std::copysign(std::max(0.0, std::abs(rho) - threshold), rho);
      const double next = shrunk / col_sq[i];
      const double delta = next - g[i];
      if (delta != 0.0) {
        r -= delta * dictionary.col(i);
        g[i] = next;
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    if (max_change < tolerance) {
      SparseCode code;
      code.coefficients = g;
      code.support = detail::support_of(g);
      code.objective_value = lasso_objective(dictionary, target, g, alpha);
      return code;
    }
  }
  fail(ErrorKind::numerical, "coordinate descent did not converge within " + std::to_string(max_sweeps) + " sweeps");
}

// ----------------------------------------------------------------------------
// Residual of the sparse coding reconstruction
// ----------------------------------------------------------------------------

/// Normalised gallery track ready for repeated solves.
struct SparseDictionary {
  FeatureMatrix unit;
  Eigen::MatrixXd gram;

  explicit SparseDictionary(MatrixCRef track) : unit(normalized_columns(track)), gram(gram_matrix(unit)) {}
};

/// Squared residual of one already-normalised query column.
inline double unit_residual(const SparseDictionary& dict, VectorCRef unit_query, double alpha) {
  const SparseCode code = lasso_lars(dict.unit, dict.gram, unit_query, alpha);
  return reconstruction_residual(dict.unit, unit_query, code.coefficients);
}

/// Image-to-track RSCR: squared L2 residual.
inline double rscr_i2t(VectorCRef query, MatrixCRef track, double alpha) {
  if (query.size() != track.rows()) fail(ErrorKind::invalid_argument, "rscr: dimension mismatch");
  const SparseDictionary dict(track);
  return unit_residual(dict, normalized(query), alpha);
}

/// Track-to-track RSCR over already-normalised query columns: Frobenius norm
/// (not squared) of the column-wise residual.
inline double rscr_t2t_unit(const SparseDictionary& dict, MatrixCRef unit_query, double alpha) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < unit_query.cols(); ++j) total += unit_residual(dict, unit_query.col(j), alpha);
  return std::sqrt(total);
}

inline double rscr_t2t(MatrixCRef query, MatrixCRef track, double alpha) {
  if (query.rows() != track.rows()) fail(ErrorKind::invalid_argument, "rscr: dimension mismatch");
  const SparseDictionary dict(track);
  return rscr_t2t_unit(dict, normalized_columns(query), alpha);
}

}  // namespace reid
