#pragma once

#include <span>
#include <vector>

namespace mixehr {

// Digamma via upward recurrence to x >= 6 and the asymptotic series.
// Absolute error below 1e-10 on (0, inf). Throws ValidationError for x <= 0.
double digamma(double x);

// E_q[log theta_k] = digamma(param_k) - digamma(sum(param)) for
// theta ~ Dirichlet(param). Throws ValidationError on a non-positive entry.
std::vector<double> dirichlet_log_expectation(std::span<const double> param);

// In-place variant used on hot paths; `out` must have param.size() entries.
void dirichlet_log_expectation(std::span<const double> param, std::span<double> out);

}  // namespace mixehr
