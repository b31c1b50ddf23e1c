#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nphmm/errors.hpp"
#include "nphmm/likelihood.hpp"
#include "nphmm/model.hpp"

namespace nphmm {

struct FitConfig {
  int n_starts = 10;
  int max_iterations = 2000;
  double gradient_tolerance = 1e-6;
  double relative_tolerance = 1e-10;
  bool stationary = true;
  std::uint64_t seed = 1;

  void validate() const;
};

struct StartDiagnostic {
  int index = 0;
  double penalized_loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string status;
};

struct FitResult {
  HmmParams params;             // canonical state order (ascending pmf mean)
  UnconstrainedParams working;  // optimum on the logit scale, optimizer's labelling
  double loglik = 0.0;
  double penalized_loglik = 0.0;
  bool converged = false;
  int n_iterations = 0;
  int start_index_of_best = 0;
  std::uint64_t seed = 0;
  std::vector<int> state_order;  // params state s is the optimizer's state state_order[s]
  std::vector<double> lambdas;   // smoothing parameters in params' state order
  std::vector<StartDiagnostic> starts;
};

// Every start diverged or produced a non-finite objective.
class FitError : public NumericalError {
 public:
  FitError(const std::string& what, std::vector<StartDiagnostic> diagnostics)
      : NumericalError(what), diagnostics_(std::move(diagnostics)) {}
  const std::vector<StartDiagnostic>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<StartDiagnostic> diagnostics_;
};

// Start 0 splits the observed counts at empirical quantiles into N groups and
// mixes each group's histogram 50/50 with the uniform pmf; gamma has 0.9 on
// the diagonal. Starts 1.. jitter start 0 with uniform noise on [-1, 1].
std::vector<UnconstrainedParams> make_starts(const CountSeries& data, int states, int n_starts,
                                             std::uint64_t seed, bool stationary = true);

// Maximum penalized likelihood over the nonparametric pmfs.
FitResult fit(const CountSeries& data, int states, const FitConfig& config,
              const PenaltyConfig& penalty);

// Same, from caller-supplied starting points (config.n_starts is ignored).
FitResult fit_from(const CountSeries& data, std::span<const UnconstrainedParams> starts,
                   const FitConfig& config, const PenaltyConfig& penalty);

// Poisson state-dependent distributions truncated and renormalized on {0..K}.
// The fitted rates are returned in rates (canonical order).
FitResult fit_poisson(const CountSeries& data, int states, const FitConfig& config,
                      Eigen::VectorXd* rates = nullptr);

// Only the state process is estimated; pmfs stay fixed at the given matrix.
FitResult fit_fixed_pmfs(const CountSeries& data, const Eigen::MatrixXd& pmfs,
                         const FitConfig& config);

// Poisson pmf on {0..K}, renormalized to sum to one.
Eigen::VectorXd truncated_poisson(double rate, int support_bound);

}  // namespace nphmm
