#pragma once

#include <cmath>
#include <span>
#include <stdexcept>

#include "congan/dataset.hpp"
#include "congan/math.hpp"

namespace congan {

inline constexpr double kDensityFloor = 1e-14;

// Product-Gaussian kernel bandwidths, one per coordinate.
struct Bandwidths {
    double x = 1.0;
    double y = 1.0;
    double z = 1.0;

    void require_positive() const {
        if (!(x > 0.0 && y > 0.0 && z > 0.0))
            throw std::invalid_argument("Bandwidths: all must be strictly positive");
    }
};

namespace kde_detail {

// exp argument of the 3D product kernel for a pair of points
inline double quad3(double dx, double dy, double dz, const Bandwidths& s) {
    return 0.5 * (dx * dx / (s.x * s.x) + dy * dy / (s.y * s.y) + dz * dz / (s.z * s.z));
}

inline double norm3(const Bandwidths& s) {
    return std::pow(2.0 * kPi, 1.5) * s.x * s.y * s.z;
}

}  // namespace kde_detail

// (1/N) sum_i prod_d K((d_i - d)/sigma_d)/sigma_d with standard normal K.
inline double kde3(const Dataset& data, double x, double y, double z, const Bandwidths& s) {
    if (data.empty()) throw std::invalid_argument("kde3: empty data");
    s.require_positive();
    double acc = 0.0;
    for (const auto& r : data.records)
        acc += std::exp(-kde_detail::quad3(r.x - x, r.y - y, r.z - z, s));
    return acc / (static_cast<double>(data.size()) * kde_detail::norm3(s));
}

// -(1/N) sum_i log(max(p_{-i}(record_i), 1e-14))
inline double loo_entropy(const Dataset& data, const Bandwidths& s) {
    const std::size_t n = data.size();
    if (n < 2) throw std::invalid_argument("loo_entropy: need at least 2 records");
    s.require_positive();
    const double norm = kde_detail::norm3(s);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const auto& a = data.records[i];
            const auto& b = data.records[j];
            sum += std::exp(-kde_detail::quad3(b.x - a.x, b.y - a.y, b.z - a.z, s));
        }
        double dens = sum / (static_cast<double>(n - 1) * norm);
        acc += std::log(std::max(dens, kDensityFloor));
    }
    return -acc / static_cast<double>(n);
}

// Rule-of-thumb 1.06 * sd * N^(-1/5).
inline double silverman_bandwidth(std::span<const double> samples) {
    if (samples.size() < 2) throw std::invalid_argument("silverman_bandwidth: need >= 2 samples");
    double sd = sample_sd(samples);
    if (sd == 0.0) throw std::invalid_argument("silverman_bandwidth: degenerate (zero-spread) sample");
    return 1.06 * sd * std::pow(static_cast<double>(samples.size()), -0.2);
}

// Variant with the IQR guard, used by the estimator harness on heavy-tailed
// action samples.
inline double silverman_bandwidth_robust(std::span<const double> samples) {
    if (samples.size() < 2) throw std::invalid_argument("silverman_bandwidth_robust: need >= 2 samples");
    double sd = robust_sd(samples);
    if (sd == 0.0) throw std::invalid_argument("silverman_bandwidth_robust: degenerate sample");
    return 1.06 * sd * std::pow(static_cast<double>(samples.size()), -0.2);
}

// Analytic sigma-derivatives of kde3 and loo_entropy; the training loop and
// the finite-difference tests both go through these.
struct SigmaGrad {
    double dx = 0, dy = 0, dz = 0;
};

inline SigmaGrad kde3_sigma_grad(const Dataset& data, double x, double y, double z,
                                 const Bandwidths& s) {
    if (data.empty()) throw std::invalid_argument("kde3_sigma_grad: empty data");
    s.require_positive();
    const double norm = kde_detail::norm3(s);
    SigmaGrad g;
    for (const auto& r : data.records) {
        double dx = r.x - x, dy = r.y - y, dz = r.z - z;
        double k = std::exp(-kde_detail::quad3(dx, dy, dz, s)) / norm;
        g.dx += k * (dx * dx / (s.x * s.x * s.x) - 1.0 / s.x);
        g.dy += k * (dy * dy / (s.y * s.y * s.y) - 1.0 / s.y);
        g.dz += k * (dz * dz / (s.z * s.z * s.z) - 1.0 / s.z);
    }
    double n = static_cast<double>(data.size());
    g.dx /= n;
    g.dy /= n;
    g.dz /= n;
    return g;
}

inline SigmaGrad loo_entropy_sigma_grad(const Dataset& data, const Bandwidths& s) {
    const std::size_t n = data.size();
    if (n < 2) throw std::invalid_argument("loo_entropy_sigma_grad: need at least 2 records");
    s.require_positive();
    const double norm = kde_detail::norm3(s);
    SigmaGrad g;
    for (std::size_t i = 0; i < n; ++i) {
        double dens = 0.0;
        SigmaGrad gi;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const auto& a = data.records[i];
            const auto& b = data.records[j];
            double dx = b.x - a.x, dy = b.y - a.y, dz = b.z - a.z;
            double k = std::exp(-kde_detail::quad3(dx, dy, dz, s)) / norm;
            dens += k;
            gi.dx += k * (dx * dx / (s.x * s.x * s.x) - 1.0 / s.x);
            gi.dy += k * (dy * dy / (s.y * s.y * s.y) - 1.0 / s.y);
            gi.dz += k * (dz * dz / (s.z * s.z * s.z) - 1.0 / s.z);
        }
        double m = static_cast<double>(n - 1);
        dens /= m;
        if (dens <= kDensityFloor) continue;  // clamp active: zero gradient
        g.dx += gi.dx / (m * dens);
        g.dy += gi.dy / (m * dens);
        g.dz += gi.dz / (m * dens);
    }
    double nn = static_cast<double>(n);
    g.dx /= -nn;
    g.dy /= -nn;
    g.dz /= -nn;
    return g;
}

}  // namespace congan
