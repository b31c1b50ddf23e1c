#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace nphmm {

struct OptimizerOptions {
  int max_iterations = 2000;
  double gradient_tolerance = 1e-6;   // on the sup-norm of the gradient
  double relative_tolerance = 1e-10;  // on |f_k - f_{k+1}| / max(|f_k|, 1)
};

struct OptimizerResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd gradient;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string status;
};

// Objective to minimize. Must fill grad when the returned value is finite;
// may return +infinity for points outside the domain.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

// BFGS with a strong-Wolfe line search. Never returns a point worse than x0.
// Throws NumericalError if the objective is not finite at x0.
OptimizerResult minimize_bfgs(const Objective& objective, const Eigen::VectorXd& x0,
                              const OptimizerOptions& options = {});

// Newton iterations with a finite-difference Hessian of the analytic gradient,
// eigenvalues flipped and floored so every step is a descent direction. Meant
// for polishing a quasi-Newton solution on badly conditioned objectives; stops
// on the gradient tolerance or when the line search makes no progress.
OptimizerResult refine_newton(const Objective& objective, const Eigen::VectorXd& x0,
                              const OptimizerOptions& options = {});

}  // namespace nphmm
