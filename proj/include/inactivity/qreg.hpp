#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "inactivity/error.hpp"

namespace inactivity {

/// rho_lambda(u) = u (lambda - I(u < 0)).
constexpr double check_loss(double u, double lambda) noexcept {
  return u * (lambda - (u < 0.0 ? 1.0 : 0.0));
}

/// First derivative of the check loss; lambda at u = 0.
constexpr double psi(double u, double lambda) noexcept { return lambda - (u < 0.0 ? 1.0 : 0.0); }

/// min_beta sum_i w_i rho_lambda(y_i - x_i' beta). Rows with zero weight are
/// ignored entirely, including their response values.
struct QRProblem {
  Eigen::MatrixXd design;
  Eigen::VectorXd response;
  Eigen::VectorXd weights;
  double lambda = 0.5;
};

struct QRSolution {
  Eigen::VectorXd beta;
  double objective = 0.0;
  /// Positive-weight rows whose residual is zero within tolerance, ascending.
  std::vector<std::size_t> active_set;
  /// Rows interpolated by the final vertex, in basis order.
  std::vector<std::size_t> basis;
  std::size_t iterations = 0;
};

struct SolverOptions {
  /// Residuals within tolerance * (1 + max|y|) count as zero; a directional
  /// derivative must be below -tolerance * sum(w) to count as descent.
  double tolerance = 1e-9;
  /// 0 selects 50 (n + p).
  std::size_t max_iterations = 0;
  /// Optional warm start (row indices of the full problem). Ignored when it
  /// does not name p + 1 independent positive-weight rows.
  std::vector<std::size_t> initial_basis;
  /// Cap on the subsets examined at one degenerate vertex.
  std::size_t max_degenerate_subsets = 200000;
};

inline double objective(const QRProblem& problem, const Eigen::VectorXd& beta) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < problem.design.rows(); ++i) {
    const double w = problem.weights[i];
    if (w == 0.0) continue;
    total += w * check_loss(problem.response[i] - problem.design.row(i).dot(beta), problem.lambda);
  }
  return total;
}

namespace detail {

class QuantileSimplex {
 public:
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  QuantileSimplex(const QRProblem& problem, const SolverOptions& options)
      : lambda_(problem.lambda), options_(options) {
    const Eigen::Index n = problem.design.rows();
    m_ = static_cast<std::size_t>(problem.design.cols());
    if (!(lambda_ > 0.0 && lambda_ < 1.0))
      throw Error(ErrorCode::InvalidArgument, "quantile level must be in (0,1)");
    if (problem.response.size() != n || problem.weights.size() != n)
      throw Error(ErrorCode::LengthMismatch, "design, response and weights disagree in length");
    if (m_ == 0) throw Error(ErrorCode::InvalidArgument, "design has no columns");

    for (Eigen::Index i = 0; i < n; ++i) {
      const double w = problem.weights[i];
      if (!(w >= 0.0) || !std::isfinite(w))
        throw Error(ErrorCode::InvalidArgument, "weights must be finite and nonnegative");
      if (w > 0.0) rows_.push_back(static_cast<std::size_t>(i));
    }
    const std::size_t nc = rows_.size();
    if (nc < m_)
      throw Error(ErrorCode::RankDeficient, "fewer positive-weight rows than coefficients");

    x_.resize(static_cast<Eigen::Index>(nc), static_cast<Eigen::Index>(m_));
    y_.resize(static_cast<Eigen::Index>(nc));
    w_.resize(static_cast<Eigen::Index>(nc));
    double ymax = 0.0;
    for (std::size_t c = 0; c < nc; ++c) {
      const auto i = static_cast<Eigen::Index>(rows_[c]);
      x_.row(static_cast<Eigen::Index>(c)) = problem.design.row(i);
      y_[static_cast<Eigen::Index>(c)] = problem.response[i];
      w_[static_cast<Eigen::Index>(c)] = problem.weights[i];
      if (!std::isfinite(problem.response[i]) || !problem.design.row(i).allFinite())
        throw Error(ErrorCode::InvalidArgument, "non-finite data on a positive-weight row");
      ymax = std::max(ymax, std::abs(problem.response[i]));
    }
    zero_tol_ = options_.tolerance * (1.0 + ymax);
    descent_tol_ = options_.tolerance * w_.sum();
    max_iterations_ = options_.max_iterations != 0 ? options_.max_iterations : 50 * (nc + m_ - 1);
  }

  QRSolution run() {
    choose_initial_basis();
    std::size_t iteration = 0;
    for (;; ++iteration) {
      if (iteration >= max_iterations_)
        throw Error(ErrorCode::IterationLimit,
                    "no optimum after " + std::to_string(max_iterations_) + " iterations");
      if (!step()) break;
    }
    for (;; ++iteration) {
      if (iteration >= max_iterations_)
        throw Error(ErrorCode::IterationLimit,
                    "no optimum after " + std::to_string(max_iterations_) + " iterations");
      Direction dir;
      if (!flat_edge(dir)) break;
      line_search(dir);
      // A flat move can expose a descent direction only through rounding.
      while (step()) {
        if (++iteration >= max_iterations_)
          throw Error(ErrorCode::IterationLimit,
                      "no optimum after " + std::to_string(max_iterations_) + " iterations");
      }
    }
    return finish(iteration);
  }

 private:
  struct Direction {
    Eigen::VectorXd a;               // x_i' d for every compact row
    std::vector<std::size_t> fixed;  // rows that stay interpolated
    std::size_t replace = 0;         // basis slot receiving the entering row
    double slope = 0.0;
  };

  std::size_t nc() const noexcept { return rows_.size(); }

  double zero_slope(double a) const noexcept {
    return std::max(-lambda_ * a, (1.0 - lambda_) * a);
  }

  void choose_initial_basis() {
    if (try_warm_start()) return;
    std::vector<Eigen::VectorXd> ortho;
    std::vector<std::size_t> chosen;
    for (std::size_t c = 0; c < nc() && chosen.size() < m_; ++c) {
      Eigen::VectorXd v = x_.row(static_cast<Eigen::Index>(c)).transpose();
      const double norm0 = v.norm();
      if (norm0 == 0.0) continue;
      for (const auto& q : ortho) v -= q.dot(v) * q;
      for (const auto& q : ortho) v -= q.dot(v) * q;
      if (v.norm() > 1e-10 * norm0) {
        ortho.push_back(v / v.norm());
        chosen.push_back(c);
      }
    }
    if (chosen.size() < m_)
      throw Error(ErrorCode::RankDeficient, "design restricted to positive-weight rows is rank deficient");
    basis_ = std::move(chosen);
    if (!factor()) throw Error(ErrorCode::RankDeficient, "initial basis is numerically singular");
  }

  bool try_warm_start() {
    if (options_.initial_basis.size() != m_) return false;
    std::vector<std::size_t> chosen;
    for (std::size_t original : options_.initial_basis) {
      const auto it = std::lower_bound(rows_.begin(), rows_.end(), original);
      if (it == rows_.end() || *it != original) return false;
      const auto c = static_cast<std::size_t>(it - rows_.begin());
      if (std::find(chosen.begin(), chosen.end(), c) != chosen.end()) return false;
      chosen.push_back(c);
    }
    basis_ = std::move(chosen);
    return factor();
  }

  // Rebuilds the inverse basis, the vertex and its residuals.
  bool factor() {
    Eigen::MatrixXd xb(static_cast<Eigen::Index>(m_), static_cast<Eigen::Index>(m_));
    Eigen::VectorXd yb(static_cast<Eigen::Index>(m_));
    for (std::size_t k = 0; k < m_; ++k) {
      xb.row(static_cast<Eigen::Index>(k)) = x_.row(static_cast<Eigen::Index>(basis_[k]));
      yb[static_cast<Eigen::Index>(k)] = y_[static_cast<Eigen::Index>(basis_[k])];
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(xb);
    lu.setThreshold(1e-12);
    if (!lu.isInvertible()) return false;
    inverse_ = lu.inverse();
    beta_ = inverse_ * yb;
    residual_ = y_ - x_ * beta_;
    in_basis_.assign(nc(), false);
    for (std::size_t c : basis_) {
      residual_[static_cast<Eigen::Index>(c)] = 0.0;
      in_basis_[c] = true;
    }
    return true;
  }

  bool is_zero(std::size_t c) const noexcept {
    return in_basis_[c] || std::abs(residual_[static_cast<Eigen::Index>(c)]) <= zero_tol_;
  }

  // One descent step. Returns false at an optimum.
  bool step() {
    Direction dir;
    if (!best_basis_edge(dir) && !best_degenerate_edge(dir)) return false;
    line_search(dir);
    return true;
  }

  // Directional derivatives of the objective along +/- each basis edge.
  void edge_slopes(const RowMatrix& g, Eigen::VectorXd& up, Eigen::VectorXd& down) const {
    const auto mm = static_cast<Eigen::Index>(m_);
    Eigen::VectorXd linear = Eigen::VectorXd::Zero(mm);
    Eigen::VectorXd plus = Eigen::VectorXd::Zero(mm);
    Eigen::VectorXd minus = Eigen::VectorXd::Zero(mm);
    for (std::size_t c = 0; c < nc(); ++c) {
      if (in_basis_[c]) continue;
      const auto ci = static_cast<Eigen::Index>(c);
      const double r = residual_[ci];
      if (std::abs(r) > zero_tol_) {
        linear -= (w_[ci] * psi(r, lambda_)) * g.row(ci).transpose();
      } else {
        for (Eigen::Index k = 0; k < mm; ++k) {
          plus[k] += w_[ci] * zero_slope(g(ci, k));
          minus[k] += w_[ci] * zero_slope(-g(ci, k));
        }
      }
    }
    up.resize(mm);
    down.resize(mm);
    for (std::size_t k = 0; k < m_; ++k) {
      const auto ki = static_cast<Eigen::Index>(k);
      const double wk = w_[static_cast<Eigen::Index>(basis_[k])];
      up[ki] = wk * (1.0 - lambda_) + linear[ki] + plus[ki];
      down[ki] = wk * lambda_ - linear[ki] + minus[ki];
    }
  }

  void set_edge(const RowMatrix& g, std::size_t k, double sign, double slope, Direction& out) const {
    out.a = sign * g.col(static_cast<Eigen::Index>(k));
    out.fixed.clear();
    for (std::size_t j = 0; j < m_; ++j)
      if (j != k) out.fixed.push_back(basis_[j]);
    out.replace = k;
    out.slope = slope;
  }

  bool best_basis_edge(Direction& out) {
    const RowMatrix g = x_ * inverse_;
    Eigen::VectorXd up, down;
    edge_slopes(g, up, down);
    double best = -descent_tol_;
    std::size_t best_k = m_;
    double best_sign = 0.0;
    for (std::size_t k = 0; k < m_; ++k) {
      const auto ki = static_cast<Eigen::Index>(k);
      if (up[ki] < best) {
        best = up[ki];
        best_k = k;
        best_sign = 1.0;
      }
      if (down[ki] < best) {
        best = down[ki];
        best_k = k;
        best_sign = -1.0;
      }
    }
    if (best_k == m_) return false;
    set_edge(g, best_k, best_sign, best, out);
    return true;
  }

  // At an optimum, an edge along which the objective is flat and the
  // intercept decreases. Following these selects, among the minimisers,
  // the one with the smallest intercept (for an intercept-only model, the
  // first point where the weighted empirical CDF reaches lambda).
  bool flat_edge(Direction& out) {
    const RowMatrix g = x_ * inverse_;
    Eigen::VectorXd up, down;
    edge_slopes(g, up, down);
    const double flat_tol = 1e-12 * w_.sum();
    for (std::size_t k = 0; k < m_; ++k) {
      const auto ki = static_cast<Eigen::Index>(k);
      const Eigen::VectorXd d = inverse_.col(ki);
      const double drop = 1e-12 * d.cwiseAbs().maxCoeff();
      if (d[0] < -drop && up[ki] <= flat_tol) {
        set_edge(g, k, 1.0, std::min(up[ki], 0.0), out);
        return true;
      }
      if (d[0] > drop && down[ki] <= flat_tol) {
        set_edge(g, k, -1.0, std::min(down[ki], 0.0), out);
        return true;
      }
    }
    return false;
  }

  double slope_along(const Eigen::VectorXd& a) const {
    double s = 0.0;
    for (std::size_t c = 0; c < nc(); ++c) {
      const auto ci = static_cast<Eigen::Index>(c);
      s += is_zero(c) ? w_[ci] * zero_slope(a[ci]) : -a[ci] * w_[ci] * psi(residual_[ci], lambda_);
    }
    return s;
  }

  // At a vertex interpolating more than p + 1 rows the edges of the current
  // basis do not generate every direction. The directional derivative is
  // linear on each cone cut out by the zero-residual hyperplanes, whose
  // extreme rays are the null directions of (p)-subsets of those rows.
  bool best_degenerate_edge(Direction& out) {
    std::vector<std::size_t> zeros;
    for (std::size_t c = 0; c < nc(); ++c)
      if (is_zero(c)) zeros.push_back(c);
    if (zeros.size() <= m_) return false;

    const std::size_t pick = m_ - 1;
    std::vector<std::size_t> comb(pick);
    std::iota(comb.begin(), comb.end(), std::size_t{0});
    std::size_t examined = 0;
    for (;;) {
      if (++examined > options_.max_degenerate_subsets) return false;
      Eigen::VectorXd d;
      if (pick == 0) {
        d = Eigen::VectorXd::Ones(1);
      } else {
        Eigen::MatrixXd xs(static_cast<Eigen::Index>(pick), static_cast<Eigen::Index>(m_));
        for (std::size_t k = 0; k < pick; ++k)
          xs.row(static_cast<Eigen::Index>(k)) = x_.row(static_cast<Eigen::Index>(zeros[comb[k]]));
        Eigen::FullPivLU<Eigen::MatrixXd> lu(xs);
        lu.setThreshold(1e-12);
        if (static_cast<std::size_t>(lu.rank()) == pick) {
          d = lu.kernel().col(0);
          d.normalize();
        }
      }
      if (d.size() != 0) {
        Eigen::VectorXd a = x_ * d;
        for (std::size_t k = 0; k < pick; ++k) a[static_cast<Eigen::Index>(zeros[comb[k]])] = 0.0;
        for (double sign : {1.0, -1.0}) {
          const Eigen::VectorXd signed_a = sign * a;
          const double s = slope_along(signed_a);
          if (s < -descent_tol_) {
            out.a = signed_a;
            out.fixed.clear();
            for (std::size_t k = 0; k < pick; ++k) out.fixed.push_back(zeros[comb[k]]);
            out.replace = m_;
            out.slope = s;
            return true;
          }
        }
      }
      // next combination in lexicographic order
      std::size_t k = pick;
      while (k > 0 && comb[k - 1] == zeros.size() - pick + (k - 1)) --k;
      if (k == 0) return false;
      ++comb[k - 1];
      for (std::size_t j = k; j < pick; ++j) comb[j] = comb[j - 1] + 1;
    }
  }

  // Exact minimisation of the convex piecewise-linear objective along the
  // chosen edge, possibly passing several vertices in one move.
  void line_search(const Direction& dir) {
    struct Breakpoint {
      double t;
      std::size_t row;
      double gain;
    };
    std::vector<Breakpoint> points;
    const double dnorm = std::sqrt(dir.a.squaredNorm() / static_cast<double>(nc())) + 1.0;
    for (std::size_t c = 0; c < nc(); ++c) {
      if (is_zero(c)) continue;
      const auto ci = static_cast<Eigen::Index>(c);
      const double a = dir.a[ci];
      const double r = residual_[ci];
      if (std::abs(a) <= 1e-13 * dnorm * (1.0 + x_.row(ci).norm())) continue;
      if ((r > 0.0) != (a > 0.0)) continue;
      points.push_back({r / a, c, w_[ci] * std::abs(a)});
    }
    std::sort(points.begin(), points.end(), [](const Breakpoint& l, const Breakpoint& r) {
      return l.t != r.t ? l.t < r.t : l.row < r.row;
    });

    double slope = dir.slope;
    const Breakpoint* chosen = nullptr;
    for (const auto& bp : points) {
      slope += bp.gain;
      chosen = &bp;
      if (slope >= 0.0) break;
    }
    if (chosen == nullptr || slope < -descent_tol_)
      throw Error(ErrorCode::Unbounded, "objective decreases without bound along an edge");

    std::vector<std::size_t> next = dir.fixed;
    if (dir.replace < m_) {
      next = basis_;
      next[dir.replace] = chosen->row;
    } else {
      next.push_back(chosen->row);
    }
    const auto previous = basis_;
    basis_ = std::move(next);
    if (!factor()) {
      basis_ = previous;
      factor();
      throw Error(ErrorCode::RankDeficient, "pivot produced a numerically singular basis");
    }
  }

  QRSolution finish(std::size_t iterations) const {
    QRSolution sol;
    sol.beta = beta_;
    sol.iterations = iterations;
    const Eigen::VectorXd fresh = y_ - x_ * beta_;
    double total = 0.0;
    for (std::size_t c = 0; c < nc(); ++c) {
      const auto ci = static_cast<Eigen::Index>(c);
      total += w_[ci] * check_loss(fresh[ci], lambda_);
      if (is_zero(c)) sol.active_set.push_back(rows_[c]);
    }
    sol.objective = total;
    for (std::size_t c : basis_) sol.basis.push_back(rows_[c]);
    return sol;
  }

  double lambda_;
  SolverOptions options_;
  std::size_t m_ = 0;
  std::vector<std::size_t> rows_;
  RowMatrix x_;
  Eigen::VectorXd y_;
  Eigen::VectorXd w_;
  double zero_tol_ = 0.0;
  double descent_tol_ = 0.0;
  std::size_t max_iterations_ = 0;

  std::vector<std::size_t> basis_;
  std::vector<bool> in_basis_;
  Eigen::MatrixXd inverse_;
  Eigen::VectorXd beta_;
  Eigen::VectorXd residual_;
};

}  // namespace detail

/// Global minimiser of the weighted check loss. Deterministic: identical input
/// bits give identical output bits, and zero-weight rows never influence the
/// pivoting sequence.
inline QRSolution solve(const QRProblem& problem, const SolverOptions& options = {}) {
  return detail::QuantileSimplex(problem, options).run();
}

/// Subgradient optimality certificate: for each coefficient k,
/// |sum_i w_i x_ik psi(r_i)| <= sum_{i active} w_i |x_ik|.
struct Certificate {
  Eigen::VectorXd gradient;
  Eigen::VectorXd bound;

  bool holds(double slack = 0.0) const {
    for (Eigen::Index k = 0; k < gradient.size(); ++k)
      if (std::abs(gradient[k]) > bound[k] + slack) return false;
    return true;
  }
};

inline Certificate certify(const QRProblem& problem, const QRSolution& solution) {
  const auto m = problem.design.cols();
  Certificate cert{Eigen::VectorXd::Zero(m), Eigen::VectorXd::Zero(m)};
  std::vector<bool> active(static_cast<std::size_t>(problem.design.rows()), false);
  for (std::size_t i : solution.active_set) active[i] = true;
  for (Eigen::Index i = 0; i < problem.design.rows(); ++i) {
    const double w = problem.weights[i];
    if (w == 0.0) continue;
    const double r = problem.response[i] - problem.design.row(i).dot(solution.beta);
    cert.gradient += w * psi(r, problem.lambda) * problem.design.row(i).transpose();
    if (active[static_cast<std::size_t>(i)]) cert.bound += w * problem.design.row(i).cwiseAbs().transpose();
  }
  return cert;
}

}  // namespace inactivity
