#include "oracles.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unistd.h>

namespace oracle {

long double digamma(long double x) {
    if (!(x > 0)) throw std::domain_error("digamma oracle needs x > 0");
    long double shift = 0;
    while (x < 30) {
        shift += 1 / x;
        x += 1;
    }
    const long double x2 = 1 / (x * x);
    // Bernoulli numbers B2..B16 over 2n.
    const long double c[] = {1.0L / 12,   -1.0L / 120,       1.0L / 252, -1.0L / 240,
                             1.0L / 132, -691.0L / 32760,   1.0L / 12,  -3617.0L / 8160};
    long double series = 0, p = x2;
    for (long double ci : c) {
        series += ci * p;
        p *= x2;
    }
    return std::log(x) - 1 / (2 * x) - series - shift;
}

DenseDoc densify(const mixehr::Document& doc, const std::vector<std::size_t>& vocab_sizes) {
    DenseDoc out(vocab_sizes.size());
    for (std::size_t t = 0; t < vocab_sizes.size(); ++t) {
        out[t].assign(vocab_sizes[t], 0);
        for (const auto& tc : doc.cats[t]) out[t][tc.id] += tc.count;
    }
    return out;
}

EStep brute_force_estep(const DenseDoc& doc, const std::vector<mixehr::Matrix>& lambda,
                        double alpha, double divisor, double tol, int max_iters) {
    const std::size_t T = lambda.size();
    const std::size_t K = lambda[0].rows;

    std::vector<std::vector<std::vector<long double>>> elog_beta(T);
    for (std::size_t t = 0; t < T; ++t) {
        const auto& lam = lambda[t];
        elog_beta[t].assign(K, std::vector<long double>(lam.cols));
        for (std::size_t k = 0; k < K; ++k) {
            long double row = 0;
            for (std::size_t w = 0; w < lam.cols; ++w) row += lam(k, w);
            for (std::size_t w = 0; w < lam.cols; ++w)
                elog_beta[t][k][w] = digamma(lam(k, w)) - digamma(row);
        }
    }

    long double N = 0;
    for (const auto& cat : doc)
        for (long double n : cat) N += n;

    EStep r;
    r.gamma.assign(K, alpha + N / (divisor * K));
    r.phi.resize(T);
    for (std::size_t t = 0; t < T; ++t)
        r.phi[t].assign(doc[t].size(), std::vector<long double>(K, 0));

    for (int iter = 0; iter < max_iters; ++iter) {
        long double gsum = 0;
        for (long double g : r.gamma) gsum += g;
        std::vector<long double> elog_theta(K);
        for (std::size_t k = 0; k < K; ++k) elog_theta[k] = digamma(r.gamma[k]) - digamma(gsum);

        std::vector<long double> next(K, 0);
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t w = 0; w < doc[t].size(); ++w) {
                if (doc[t][w] == 0) continue;
                long double z = 0;
                for (std::size_t k = 0; k < K; ++k) {
                    r.phi[t][w][k] = std::exp(elog_theta[k] + elog_beta[t][k][w]);
                    z += r.phi[t][w][k];
                }
                for (std::size_t k = 0; k < K; ++k) {
                    r.phi[t][w][k] /= z;
                    next[k] += doc[t][w] * r.phi[t][w][k];
                }
            }

        long double change = 0;
        for (std::size_t k = 0; k < K; ++k) {
            next[k] = alpha + next[k] / divisor;
            change += std::fabs(next[k] - r.gamma[k]);
        }
        r.gamma = next;
        r.iters = iter + 1;
        if (change / K < tol) break;
    }
    return r;
}

std::vector<mixehr::Matrix> batch_vb(const mixehr::MultiCorpus& corpus,
                                     std::vector<mixehr::Matrix> lambda, double alpha,
                                     const std::vector<double>& eta, int iterations) {
    const auto sizes = corpus.vocab_sizes();
    const std::size_t T = sizes.size();
    const std::size_t K = lambda[0].rows;
    std::vector<DenseDoc> dense;
    for (const auto& d : corpus.docs)
        if (!d.empty()) dense.push_back(densify(d, sizes));

    for (int it = 0; it < iterations; ++it) {
        std::vector<std::vector<long double>> s(T);
        for (std::size_t t = 0; t < T; ++t) s[t].assign(K * sizes[t], 0);
        for (const auto& doc : dense) {
            const auto e = brute_force_estep(doc, lambda, alpha, static_cast<double>(T), 1e-3, 100);
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t w = 0; w < sizes[t]; ++w)
                    for (std::size_t k = 0; k < K; ++k)
                        s[t][k * sizes[t] + w] += doc[t][w] * e.phi[t][w][k];
        }
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < s[t].size(); ++j)
                lambda[t].data[j] = static_cast<double>(eta[t] + s[t][j]);
    }
    return lambda;
}

}  // namespace oracle

namespace testing {

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("mixehr_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

}  // namespace testing
