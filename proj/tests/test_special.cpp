#include <cmath>
#include <numeric>

#include "doctest.h"
#include "mixehr/error.hpp"
#include "mixehr/special.hpp"
#include "oracles.hpp"

using namespace mixehr;

namespace {
constexpr double kEulerGamma = 0.57721566490153286061;
}

TEST_CASE("digamma at known points") {
    CHECK(std::abs(digamma(1.0) + kEulerGamma) < 1e-12);
    CHECK(std::abs(digamma(0.5) + kEulerGamma + 2 * std::log(2.0)) < 1e-12);
    CHECK(std::abs(digamma(2.0) - digamma(1.0) - 1.0) < 1e-12);
    CHECK(std::abs(digamma(1000.0) - (std::log(1000.0) - 1.0 / 2000)) < 1e-7);
}

TEST_CASE("digamma oracle agrees with the published constant") {
    CHECK(std::abs(static_cast<double>(oracle::digamma(1.0L)) + kEulerGamma) < 1e-15);
}

TEST_CASE("digamma recurrence holds across scales") {
    for (double x : {1e-4, 0.01, 0.3, 1.7, 5.99, 6.0, 42.0, 1e3, 1e6})
        CHECK(std::abs(digamma(x + 1) - digamma(x) - 1 / x) < 1e-10);
}

TEST_CASE("digamma rejects non-positive input") {
    CHECK_THROWS_AS(digamma(0.0), ValidationError);
    CHECK_THROWS_AS(digamma(-1.5), ValidationError);
    CHECK_THROWS_AS(digamma(std::nan("")), ValidationError);
}

TEST_CASE("dirichlet log expectation examples") {
    const auto ones = dirichlet_log_expectation(std::vector<double>{1.0, 1.0});
    CHECK(std::abs(ones[0] + 1.0) < 1e-12);
    CHECK(std::abs(ones[1] + 1.0) < 1e-12);
    CHECK(std::abs(std::exp(ones[0]) - 0.36788) < 1e-5);

    const auto two_one = dirichlet_log_expectation(std::vector<double>{2.0, 1.0});
    CHECK(std::abs(two_one[0] + 0.5) < 1e-12);
    CHECK(std::abs(two_one[1] + 1.5) < 1e-12);

    for (double c : {0.01, 0.5, 3.0, 250.0}) {
        const auto v = dirichlet_log_expectation(std::vector<double>(7, c));
        for (double x : v) CHECK(x == v[0]);
    }

    CHECK_THROWS_AS(dirichlet_log_expectation(std::vector<double>{1.0, 0.0}), ValidationError);
    CHECK_THROWS_AS(dirichlet_log_expectation(std::vector<double>{1.0, -2.0}), ValidationError);
}

TEST_CASE("exp of dirichlet log expectation sums to at most one") {
    const std::vector<std::vector<double>> params = {
        {0.01, 0.01, 0.01}, {1e-3, 50.0}, {3.0, 1.0, 4.0, 1.0, 5.0}, {1e4, 1e4}};
    for (const auto& p : params) {
        const auto e = dirichlet_log_expectation(p);
        double s = 0.0;
        for (double x : e) s += std::exp(x);
        CHECK(s <= 1.0 + 1e-9);
    }
}
