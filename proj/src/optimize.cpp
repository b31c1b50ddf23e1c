#include "nphmm/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nphmm/errors.hpp"

namespace nphmm {

namespace {

constexpr double kArmijo = 1e-4;
constexpr double kCurvature = 0.9;
constexpr int kMaxLineSearchSteps = 40;

struct Trial {
  double alpha = 0.0;
  double f = 0.0;
  double slope = 0.0;  // directional derivative
  Eigen::VectorXd x;
  Eigen::VectorXd g;
};

class LineSearch {
 public:
  LineSearch(const Objective& objective, const Eigen::VectorXd& x, double f0, double slope0,
             const Eigen::VectorXd& direction, int& evaluations)
      : objective_(objective), x_(x), f0_(f0), slope0_(slope0), p_(direction), evals_(evaluations) {}

  // Strong-Wolfe search. Returns false if not even sufficient decrease was found.
  bool run(double alpha0, Trial& out) {
    Trial prev{0.0, f0_, slope0_, x_, {}};
    double alpha = alpha0;
    for (int i = 0; i < kMaxLineSearchSteps; ++i) {
      Trial cur = evaluate(alpha);
      if (!std::isfinite(cur.f) || cur.f > f0_ + kArmijo * alpha * slope0_ || (i > 0 && cur.f >= prev.f)) {
        return zoom(prev, cur, out);
      }
      if (std::abs(cur.slope) <= -kCurvature * slope0_) {
        out = std::move(cur);
        return true;
      }
      if (cur.slope >= 0.0) return zoom(cur, prev, out);
      prev = std::move(cur);
      alpha *= 2.0;
    }
    return take_best(out);
  }

 private:
  Trial evaluate(double alpha) {
    Trial t;
    t.alpha = alpha;
    t.x = x_ + alpha * p_;
    t.f = objective_(t.x, t.g);
    ++evals_;
    if (std::isfinite(t.f)) {
      t.slope = t.g.dot(p_);
      if (t.f <= f0_ + kArmijo * alpha * slope0_ && (!have_best_ || t.f < best_.f)) {
        best_ = t;
        have_best_ = true;
      }
    } else {
      t.f = std::numeric_limits<double>::infinity();
    }
    return t;
  }

  bool zoom(Trial lo, Trial hi, Trial& out) {
    for (int i = 0; i < kMaxLineSearchSteps; ++i) {
      const double a = lo.alpha, b = hi.alpha;
      double alpha = 0.5 * (a + b);
      if (std::isfinite(hi.f)) {
        // Minimizer of the cubic through (a, f_lo, slope_lo) and (b, f_hi, slope_hi).
        const double d1 = lo.slope + hi.slope - 3.0 * (lo.f - hi.f) / (a - b);
        const double disc = d1 * d1 - lo.slope * hi.slope;
        if (disc >= 0.0) {
          const double d2 = std::copysign(std::sqrt(disc), b - a);
          const double cubic = b - (b - a) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
          if (std::isfinite(cubic)) alpha = cubic;
        }
      }
      const double lo_edge = std::min(a, b), hi_edge = std::max(a, b);
      const double margin = 0.1 * (hi_edge - lo_edge);
      alpha = std::clamp(alpha, lo_edge + margin, hi_edge - margin);
      if (hi_edge - lo_edge <= 1e-16 * std::max(1.0, hi_edge)) break;

      Trial cur = evaluate(alpha);
      if (!std::isfinite(cur.f) || cur.f > f0_ + kArmijo * alpha * slope0_ || cur.f >= lo.f) {
        hi = std::move(cur);
      } else {
        if (std::abs(cur.slope) <= -kCurvature * slope0_) {
          out = std::move(cur);
          return true;
        }
        if (cur.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
        lo = std::move(cur);
      }
    }
    return take_best(out);
  }

  bool take_best(Trial& out) {
    if (!have_best_) return false;
    out = best_;
    return true;
  }

  const Objective& objective_;
  const Eigen::VectorXd& x_;
  double f0_;
  double slope0_;
  const Eigen::VectorXd& p_;
  int& evals_;
  Trial best_;
  bool have_best_ = false;
};

}  // namespace

OptimizerResult minimize_bfgs(const Objective& objective, const Eigen::VectorXd& x0,
                              const OptimizerOptions& options) {
  OptimizerResult r;
  r.x = x0;
  r.value = objective(r.x, r.gradient);
  r.evaluations = 1;
  if (!std::isfinite(r.value)) throw NumericalError("objective is not finite at the starting point");

  const Eigen::Index n = x0.size();
  if (n == 0) {
    r.converged = true;
    r.status = "no free parameters";
    return r;
  }

  Eigen::MatrixXd inv_hessian = Eigen::MatrixXd::Identity(n, n);
  bool scaled = false;
  bool just_reset = true;
  r.status = "iteration limit";

  while (r.iterations < options.max_iterations) {
    const double gnorm = r.gradient.lpNorm<Eigen::Infinity>();
    if (gnorm < options.gradient_tolerance) {
      r.converged = true;
      r.status = "gradient tolerance";
      break;
    }

    Eigen::VectorXd direction = -inv_hessian * r.gradient;
    double slope = direction.dot(r.gradient);
    if (!(slope < 0.0)) {
      inv_hessian.setIdentity();
      scaled = false;
      just_reset = true;
      direction = -r.gradient;
      slope = direction.dot(r.gradient);
    }
    const double alpha0 = scaled ? 1.0 : std::min(1.0, 1.0 / gnorm);

    Trial step;
    LineSearch search(objective, r.x, r.value, slope, direction, r.evaluations);
    if (!search.run(alpha0, step)) {
      if (!just_reset) {
        inv_hessian.setIdentity();
        scaled = false;
        just_reset = true;
        continue;
      }
      // Not even a steepest-descent step lowers the objective in floating point.
      r.converged = true;
      r.status = "no further decrease";
      break;
    }
    just_reset = false;
    ++r.iterations;

    const Eigen::VectorXd s = step.x - r.x;
    const Eigen::VectorXd y = step.g - r.gradient;
    const double previous = r.value;
    r.x = std::move(step.x);
    r.value = step.f;
    r.gradient = std::move(step.g);

    if (std::abs(previous - r.value) <= options.relative_tolerance * std::max(std::abs(previous), 1.0)) {
      r.converged = true;
      r.status = "relative tolerance";
      break;
    }

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        inv_hessian *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd hy = inv_hessian * y;
      const double yhy = y.dot(hy);
      inv_hessian.noalias() += (rho * (1.0 + rho * yhy)) * (s * s.transpose()) -
                               rho * (hy * s.transpose() + s * hy.transpose());
    }
  }
  return r;
}

namespace {

// Central differences of the gradient, symmetrized.
Eigen::MatrixXd hessian_by_differences(const Objective& objective, const Eigen::VectorXd& x, int& evaluations) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd h(n, n);
  Eigen::VectorXd xp = x, gp, gm;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double step = 1e-5 * std::max(1.0, std::abs(x(i)));
    xp(i) = x(i) + step;
    const double fp = objective(xp, gp);
    xp(i) = x(i) - step;
    const double fm = objective(xp, gm);
    xp(i) = x(i);
    evaluations += 2;
    if (!std::isfinite(fp) || !std::isfinite(fm)) throw NumericalError("objective not finite near the current point");
    h.col(i) = (gp - gm) / (2.0 * step);
  }
  return 0.5 * (h + h.transpose());
}

}  // namespace

OptimizerResult refine_newton(const Objective& objective, const Eigen::VectorXd& x0,
                              const OptimizerOptions& options) {
  OptimizerResult r;
  r.x = x0;
  r.value = objective(r.x, r.gradient);
  r.evaluations = 1;
  if (!std::isfinite(r.value)) throw NumericalError("objective is not finite at the starting point");
  if (x0.size() == 0) {
    r.converged = true;
    r.status = "no free parameters";
    return r;
  }

  r.status = "iteration limit";
  while (r.iterations < options.max_iterations) {
    if (r.gradient.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
      r.converged = true;
      r.status = "gradient tolerance";
      break;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hessian_by_differences(objective, r.x, r.evaluations));
    Eigen::VectorXd values = eig.eigenvalues().cwiseAbs();
    const double floor = std::max(1e-10 * values.maxCoeff(), 1e-12);
    values = values.cwiseMax(floor);
    const Eigen::MatrixXd& v = eig.eigenvectors();
    const Eigen::VectorXd direction = -(v * (v.transpose() * r.gradient).cwiseQuotient(values));
    const double slope = direction.dot(r.gradient);

    Trial step;
    LineSearch search(objective, r.x, r.value, slope, direction, r.evaluations);
    if (!(slope < 0.0) || !search.run(1.0, step)) {
      r.converged = true;
      r.status = "no further decrease";
      break;
    }
    ++r.iterations;
    r.x = std::move(step.x);
    r.value = step.f;
    r.gradient = std::move(step.g);
  }
  return r;
}

}  // namespace nphmm
