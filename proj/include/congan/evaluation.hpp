#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "congan/math.hpp"
#include "congan/rng.hpp"

namespace congan {

// 1-Wasserstein distance between empirical distributions: mean absolute
// difference of sorted samples when sizes match, exact quantile-function
// integral otherwise.
inline double wasserstein_1d(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein_1d: empty sample");
    std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    if (sa.size() == sb.size()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < sa.size(); ++i) acc += std::abs(sa[i] - sb[i]);
        return acc / static_cast<double>(sa.size());
    }
    // walk the merged quantile breakpoints
    const double na = static_cast<double>(sa.size()), nb = static_cast<double>(sb.size());
    std::size_t ia = 0, ib = 0;
    double p = 0.0, acc = 0.0;
    while (ia < sa.size() && ib < sb.size()) {
        double pa = static_cast<double>(ia + 1) / na;
        double pb = static_cast<double>(ib + 1) / nb;
        double pn = std::min(pa, pb);
        acc += (pn - p) * std::abs(sa[ia] - sb[ib]);
        p = pn;
        if (pa <= pn + 1e-15) ++ia;
        if (pb <= pn + 1e-15) ++ib;
    }
    return acc;
}

// Keeps the observations between the Lambda and 1-Lambda empirical
// quantiles: drop floor(n*Lambda) order statistics from each end.
inline std::vector<double> quantile_restrict(std::span<const double> sample, double lambda) {
    if (!(lambda > 0.0 && lambda < 0.5)) throw std::invalid_argument("quantile_restrict: Lambda outside (0, 0.5)");
    std::vector<double> s(sample.begin(), sample.end());
    std::sort(s.begin(), s.end());
    std::size_t k = static_cast<std::size_t>(std::floor(static_cast<double>(s.size()) * lambda));
    if (2 * k >= s.size()) return s;
    return std::vector<double>(s.begin() + static_cast<std::ptrdiff_t>(k),
                               s.end() - static_cast<std::ptrdiff_t>(k));
}

struct SimilarityReport {
    double distance = 0.0;   // spread-normalized restricted W1 statistic
    double p_value = 1.0;
    bool pass = false;       // p_value > alpha
    double alpha = 0.05;
    double lambda = 0.05;
    int n_permutations = 0;
};

namespace eval_detail {

inline double pooled_sd(std::span<const double> a, std::span<const double> b) {
    std::vector<double> pool(a.begin(), a.end());
    pool.insert(pool.end(), b.begin(), b.end());
    double m = mean(pool);
    double ss = 0.0;
    for (double v : pool) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(pool.size() - 1));
}

inline double restricted_stat(std::span<const double> a, std::span<const double> b, double lambda,
                              double scale) {
    auto ra = quantile_restrict(a, lambda);
    auto rb = quantile_restrict(b, lambda);
    double d = wasserstein_1d(ra, rb);
    return scale > 0.0 ? d / scale : 0.0;
}

}  // namespace eval_detail

// Two-sample permutation test on the interior-quantile Wasserstein
// statistic, normalized by the pooled spread so common affine rescalings
// cancel. Deterministic per seed.
inline SimilarityReport similarity_test(std::span<const double> seq_a, std::span<const double> seq_b,
                                        double alpha = 0.05, double lambda = 0.05,
                                        int n_perm = 999, std::uint64_t seed = 0) {
    if (seq_a.size() < 10 || seq_b.size() < 10)
        throw std::invalid_argument("similarity_test: need sequences of length >= 10");
    const double scale = eval_detail::pooled_sd(seq_a, seq_b);
    SimilarityReport rep;
    rep.alpha = alpha;
    rep.lambda = lambda;
    rep.n_permutations = n_perm;
    rep.distance = eval_detail::restricted_stat(seq_a, seq_b, lambda, scale);

    std::vector<double> pool(seq_a.begin(), seq_a.end());
    pool.insert(pool.end(), seq_b.begin(), seq_b.end());
    const std::size_t na = seq_a.size();
    int count = 0;
    std::vector<double> perm(pool);
    for (int p = 0; p < n_perm; ++p) {
        Rng rng = substream(seed, 0x5157 + static_cast<std::uint64_t>(p));
        perm = pool;
        for (std::size_t i = perm.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(rng.raw() % i);
            std::swap(perm[i - 1], perm[j]);
        }
        double stat = eval_detail::restricted_stat(
            std::span<const double>(perm.data(), na),
            std::span<const double>(perm.data() + na, perm.size() - na), lambda, scale);
        if (stat >= rep.distance) ++count;
    }
    rep.p_value = static_cast<double>(count + 1) / static_cast<double>(n_perm + 1);
    rep.pass = rep.p_value > alpha;
    return rep;
}

}  // namespace congan
