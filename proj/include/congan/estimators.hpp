#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "congan/dataset.hpp"
#include "congan/dgp.hpp"
#include "congan/math.hpp"

namespace congan {

inline constexpr double kWeightFloor = 1e-300;

// Nadaraya-Watson conditional mean. Empty result means the query sits
// outside the empirical support (all kernel weights underflowed).
inline std::optional<double> nw_mean(std::span<const double> ys, std::span<const double> xs,
                                     double x, double sigma_x) {
    if (ys.size() != xs.size() || ys.empty()) throw std::invalid_argument("nw_mean: bad sample");
    if (!(sigma_x > 0.0)) throw std::invalid_argument("nw_mean: sigma_x must be positive");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double u = (xs[i] - x) / sigma_x;
        double w = std::exp(-0.5 * u * u);
        num += w * ys[i];
        den += w;
    }
    if (den < kWeightFloor) return std::nullopt;
    return num / den;
}

// Kernel-smoothed conditional CDF F(X <= x | Z = z): exact indicator in x,
// Gaussian weights in z, clipped to [0,1].
inline std::optional<double> cond_cdf_hat(std::span<const double> xs, std::span<const double> zs,
                                          double x, double z, double sigma_z) {
    if (xs.size() != zs.size() || xs.empty()) throw std::invalid_argument("cond_cdf_hat: bad sample");
    if (!(sigma_z > 0.0)) throw std::invalid_argument("cond_cdf_hat: sigma_z must be positive");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double u = (zs[i] - z) / sigma_z;
        double w = std::exp(-0.5 * u * u);
        if (xs[i] <= x) num += w;
        den += w;
    }
    if (den < kWeightFloor) return std::nullopt;
    double v = num / den;
    return std::min(1.0, std::max(0.0, v));
}

struct PartialMeansResult {
    std::optional<double> value;
    std::size_t n_unsupported = 0;
};

// (1/N) sum_i m_hat(x, w_i) with m_hat a 2D Nadaraya-Watson surface;
// out-of-support cells are skipped and counted.
inline PartialMeansResult partial_means(std::span<const double> ys, std::span<const double> xs,
                                        std::span<const double> ws, double x, double sigma_x,
                                        double sigma_w) {
    if (ys.size() != xs.size() || xs.size() != ws.size() || ys.empty())
        throw std::invalid_argument("partial_means: bad sample");
    if (!(sigma_x > 0.0 && sigma_w > 0.0))
        throw std::invalid_argument("partial_means: bandwidths must be positive");
    const std::size_t n = ys.size();
    std::vector<double> kx(n);
    for (std::size_t i = 0; i < n; ++i) {
        double u = (xs[i] - x) / sigma_x;
        kx[i] = std::exp(-0.5 * u * u);
    }
    PartialMeansResult out;
    double acc = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double num = 0.0, den = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double u = (ws[j] - ws[i]) / sigma_w;
            double w = kx[j] * std::exp(-0.5 * u * u);
            num += w * ys[j];
            den += w;
        }
        if (den < kWeightFloor) {
            ++out.n_unsupported;
            continue;
        }
        acc += num / den;
        ++used;
    }
    if (used > 0) out.value = acc / static_cast<double>(used);
    return out;
}

struct ControlVariableResult {
    std::optional<double> value;
    std::size_t n_unsupported = 0;
};

// Imbens-Newey benchmark: V_i = F_hat(X_i | Z_i), then partial means over V.
inline ControlVariableResult control_variable(std::span<const double> ys,
                                              std::span<const double> xs,
                                              std::span<const double> zs, double x,
                                              double sigma_x, double sigma_v, double sigma_z) {
    if (ys.size() != xs.size() || xs.size() != zs.size() || ys.empty())
        throw std::invalid_argument("control_variable: bad sample");
    const std::size_t n = ys.size();
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto c = cond_cdf_hat(xs, zs, xs[i], zs[i], sigma_z);
        v[i] = c.value_or(0.5);
    }
    auto pm = partial_means(ys, xs, v, x, sigma_x, sigma_v);
    return {pm.value, pm.n_unsupported};
}

inline std::vector<double> control_values(std::span<const double> xs, std::span<const double> zs,
                                          double sigma_z) {
    std::vector<double> v(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i)
        v[i] = cond_cdf_hat(xs, zs, xs[i], zs[i], sigma_z).value_or(0.5);
    return v;
}

// Counterfactual dataset from the true structural functions: the action is
// driven by omega, the outcome by an independent copy omega-tilde; the
// conditional disturbance is resampled as epsilon-tilde from fresh normal
// draws, which realizes F^{-1}_{eps|eta}(nu | F^{-1}_eta(omega-tilde)).
inline Dataset make_cf_dataset(const DGPSpec& spec, std::span<const double> zs,
                               std::uint64_t seed) {
    if (zs.empty()) throw std::invalid_argument("make_cf_dataset: empty z sample");
    Rng rom = substream(seed, 10);
    Rng romt = substream(seed, 11);
    Rng rnu = substream(seed, 12);
    Dataset ds;
    ds.records.resize(zs.size());
    for (std::size_t i = 0; i < zs.size(); ++i) {
        Record& r = ds.records[i];
        r.z = zs[i];
        r.omega = rom.uniform();
        double eta_x = inv_normal_cdf(r.omega);
        r.x = h_value(spec, r.z, eta_x);
        double eta_t = inv_normal_cdf(romt.uniform());
        double nu_t = inv_normal_cdf(rnu.uniform());
        r.eta = eta_t;
        r.nu = nu_t;
        r.epsilon = epsilon_value(spec.gamma, eta_t, nu_t);
        r.y = g_value(spec, r.x, r.epsilon);
        r.has_latents = true;
    }
    return ds;
}

// Observed dataset regenerated from the structural functions with shared
// omega (the confounded pairing), useful when fresh draws are needed.
inline Dataset make_observed_dataset(const DGPSpec& spec, std::span<const double> zs,
                                     std::uint64_t seed) {
    if (zs.empty()) throw std::invalid_argument("make_observed_dataset: empty z sample");
    Rng rom = substream(seed, 20);
    Rng rnu = substream(seed, 21);
    Dataset ds;
    ds.records.resize(zs.size());
    for (std::size_t i = 0; i < zs.size(); ++i) {
        Record& r = ds.records[i];
        r.z = zs[i];
        r.omega = rom.uniform();
        r.eta = inv_normal_cdf(r.omega);
        r.nu = inv_normal_cdf(rnu.uniform());
        r.epsilon = epsilon_value(spec.gamma, r.eta, r.nu);
        r.x = h_value(spec, r.z, r.eta);
        r.y = g_value(spec, r.x, r.epsilon);
        r.has_latents = true;
    }
    return ds;
}

}  // namespace congan
