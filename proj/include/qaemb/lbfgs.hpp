#pragma once

#include <ceres/ceres.h>

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "qaemb/error.hpp"

namespace qaemb {

struct LbfgsOptions {
  std::size_t memory = 10;
  std::size_t max_iterations = 500;
  // Stop when max_i |grad_i| falls below this.
  double gradient_tolerance = 1e-10;
  // Stop when the relative decrease of an iteration falls below this.
  double function_tolerance = 1e-13;
  double parameter_tolerance = 1e-12;
};

struct LbfgsResult {
  std::vector<double> x;
  double value = 0.0;
  std::size_t iterations = 0;
  std::vector<double> trace;  // objective at x0 and after each accepted iteration
  bool converged = false;
  std::string status;
};

namespace detail {

class CallbackObjective final : public ceres::FirstOrderFunction {
 public:
  using Fn = std::function<double(const std::vector<double>&, std::vector<double>&)>;

  CallbackObjective(Fn fn, std::size_t n) : fn_(std::move(fn)), n_(n), x_(n), g_(n) {}

  bool Evaluate(const double* parameters, double* cost, double* gradient) const override {
    x_.assign(parameters, parameters + n_);
    const double v = fn_(x_, g_);
    if (!std::isfinite(v)) return false;
    *cost = v;
    if (gradient) {
      for (std::size_t i = 0; i < n_; ++i) gradient[i] = g_[i];
    }
    return true;
  }

  int NumParameters() const override { return static_cast<int>(n_); }

 private:
  Fn fn_;
  std::size_t n_;
  mutable std::vector<double> x_;
  mutable std::vector<double> g_;
};

}  // namespace detail

// L-BFGS with a Wolfe line search (Ceres). `fg(x, grad)` returns f(x) and
// fills grad; the objective must be C^1. Throws NumericalError when the
// solve fails or the objective rises between accepted iterations.
template <class ValueAndGradient>
LbfgsResult minimize_lbfgs(ValueAndGradient&& fg, std::vector<double> x0,
                           const LbfgsOptions& opt = {}) {
  const std::size_t n = x0.size();
  ceres::GradientProblem problem(new detail::CallbackObjective(
      [&fg](const std::vector<double>& x, std::vector<double>& g) { return fg(x, g); }, n));

  ceres::GradientProblemSolver::Options options;
  options.line_search_direction_type = ceres::LBFGS;
  options.line_search_type = ceres::WOLFE;
  options.max_lbfgs_rank = static_cast<int>(opt.memory);
  options.max_num_iterations = static_cast<int>(opt.max_iterations);
  options.gradient_tolerance = opt.gradient_tolerance;
  options.function_tolerance = opt.function_tolerance;
  options.parameter_tolerance = opt.parameter_tolerance;
  options.logging_type = ceres::SILENT;

  ceres::GradientProblemSolver::Summary summary;
  LbfgsResult res;
  res.x = std::move(x0);
  ceres::Solve(options, problem, res.x.data(), &summary);
  if (!summary.IsSolutionUsable()) {
    throw NumericalError("L-BFGS failed: " + summary.message);
  }

  for (const auto& it : summary.iterations) {
    if (it.iteration == 0 || it.step_is_successful) res.trace.push_back(it.cost);
  }
  res.iterations = res.trace.empty() ? 0 : res.trace.size() - 1;
  for (std::size_t i = 1; i < res.trace.size(); ++i) {
    if (res.trace[i] > res.trace[i - 1]) {
      std::string msg = "L-BFGS objective increased; trace:";
      for (double v : res.trace) msg += " " + std::to_string(v);
      throw NumericalError(msg);
    }
  }
  res.value = summary.final_cost;
  res.converged = summary.termination_type == ceres::CONVERGENCE;
  res.status = summary.message;
  return res;
}

}  // namespace qaemb
