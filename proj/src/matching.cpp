#include "mixehr/matching.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "mixehr/error.hpp"

namespace mixehr {

std::vector<std::size_t> hungarian(const Matrix& cost) {
    const std::size_t n = cost.rows;
    const std::size_t m = cost.cols;
    if (n > m) throw ValidationError("hungarian: more rows than columns");
    if (n == 0) return {};

    // Shortest augmenting path with row/column potentials, 1-based with a
    // virtual column 0.
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<std::size_t> owner(m + 1, 0), way(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        owner[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<char> used(m + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = owner[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (owner[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<std::size_t> assignment(n);
    for (std::size_t j = 1; j <= m; ++j)
        if (owner[j] != 0) assignment[owner[j] - 1] = j - 1;
    return assignment;
}

double cosine(std::span<const double> a, std::span<const double> b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return dot / std::sqrt(na * nb);
}

std::vector<std::size_t> match_topics(const std::vector<Matrix>& learned,
                                      const std::vector<Matrix>& truth) {
    if (learned.size() != truth.size() || learned.empty())
        throw ValidationError("match_topics: category counts differ");
    const std::size_t K_true = truth[0].rows;
    const std::size_t K_learned = learned[0].rows;
    Matrix cost(K_true, K_learned);
    for (std::size_t t = 0; t < truth.size(); ++t) {
        if (truth[t].cols != learned[t].cols || truth[t].rows != K_true ||
            learned[t].rows != K_learned)
            throw ValidationError("match_topics: shape mismatch");
        for (std::size_t a = 0; a < K_true; ++a)
            for (std::size_t b = 0; b < K_learned; ++b)
                cost(a, b) -= cosine(truth[t].row(a), learned[t].row(b));
    }
    return hungarian(cost);
}

double total_variation(std::span<const double> p, std::span<const double> q) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
    return 0.5 * s;
}

double adjusted_rand_index(std::span<const std::size_t> a, std::span<const std::size_t> b) {
    if (a.size() != b.size()) throw ValidationError("adjusted_rand_index: label counts differ");
    const auto pairs = [](double x) { return x * (x - 1.0) / 2.0; };
    std::map<std::pair<std::size_t, std::size_t>, double> joint;
    std::map<std::size_t, double> ca, cb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[{a[i], b[i]}] += 1.0;
        ca[a[i]] += 1.0;
        cb[b[i]] += 1.0;
    }
    double index = 0.0, sa = 0.0, sb = 0.0;
    for (const auto& [_, n] : joint) index += pairs(n);
    for (const auto& [_, n] : ca) sa += pairs(n);
    for (const auto& [_, n] : cb) sb += pairs(n);
    const double total = pairs(static_cast<double>(a.size()));
    if (total == 0.0) return 1.0;
    const double expected = sa * sb / total;
    const double max_index = 0.5 * (sa + sb);
    if (max_index == expected) return 1.0;  // both partitions trivial and equal in structure
    return (index - expected) / (max_index - expected);
}

}  // namespace mixehr
