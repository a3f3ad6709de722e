#include "mixehr/special.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "mixehr/error.hpp"

namespace mixehr {

double digamma(double x) {
    if (!(x > 0.0) || std::isinf(x))
        throw ValidationError("digamma: argument must be positive and finite, got " +
                              std::to_string(x));
    double shift = 0.0;
    while (x < 6.0) {
        shift -= 1.0 / x;
        x += 1.0;
    }
    // Bernoulli-number tail: -sum B_2n / (2n x^2n), n = 1..7.
    const double z = 1.0 / (x * x);
    const double tail =
        z * (1.0 / 12 -
             z * (1.0 / 120 -
                  z * (1.0 / 252 -
                       z * (1.0 / 240 - z * (1.0 / 132 - z * (691.0 / 32760 - z / 12))))));
    return shift + std::log(x) - 0.5 / x - tail;
}

void dirichlet_log_expectation(std::span<const double> param, std::span<double> out) {
    double total = 0.0;
    for (double p : param) {
        if (!(p > 0.0))
            throw ValidationError("dirichlet_log_expectation: non-positive parameter " +
                                  std::to_string(p));
        total += p;
    }
    const double psi_total = digamma(total);
    for (std::size_t k = 0; k < param.size(); ++k) out[k] = digamma(param[k]) - psi_total;
}

std::vector<double> dirichlet_log_expectation(std::span<const double> param) {
    std::vector<double> out(param.size());
    dirichlet_log_expectation(param, out);
    return out;
}

}  // namespace mixehr
