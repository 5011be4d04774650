#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "congan/dataset.hpp"
#include "congan/kde.hpp"
#include "congan/math.hpp"
#include "congan/rng.hpp"

namespace congan {

// Scalar parameter functions of the Gaussian example: affine plus a tanh
// term, with an optional positive floor for scale functions.
struct ScalarFn {
    double c0 = 0.0;
    double c1 = 0.0;       // linear coefficient
    double ct = 0.0;       // tanh amplitude
    double cs = 1.0;       // tanh argument scale
    double floor = -1e300; // set > 0 for sigma-type functions

    double operator()(double t) const {
        double v = c0 + c1 * t + ct * std::tanh(cs * t);
        return v > floor ? v : floor;
    }
};

struct UnidentifiedError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ZLaw { Normal01, UniformSym2 };

struct GaussianSpec {
    ScalarFn mu1, sigma1, mu2, sigma2;
    double rho12 = 0.6;
    ScalarFn rho13;  // must map into (-1, 1)
    double mu_eta = 0.0;
    double sigma_eta = 1.0;
    ZLaw zlaw = ZLaw::Normal01;
    std::string name = "custom";

    void validate() const {
        if (!(std::abs(rho12) < 1.0)) throw std::invalid_argument("GaussianSpec: |rho12| must be < 1");
        if (!(sigma_eta > 0.0)) throw std::invalid_argument("GaussianSpec: sigma_eta must be positive");
    }
};

struct GaussianLatents {
    double eta = 0, eps_x = 0, nu = 0;
};

struct GaussianSample {
    Dataset data;
    std::vector<GaussianLatents> latents;
};

// Exact Cholesky-form simulation of the diffusion example.
inline GaussianSample sample_gaussian(const GaussianSpec& spec, std::size_t n, std::uint64_t seed) {
    spec.validate();
    if (n < 1) throw std::invalid_argument("sample_gaussian: n must be >= 1");
    Rng rz = substream(seed, 30);
    Rng re = substream(seed, 31);
    Rng rx = substream(seed, 32);
    Rng rn = substream(seed, 33);
    GaussianSample out;
    out.data.records.resize(n);
    out.latents.resize(n);
    const double s12 = std::sqrt(1.0 - spec.rho12 * spec.rho12);
    for (std::size_t i = 0; i < n; ++i) {
        Record& r = out.data.records[i];
        GaussianLatents& l = out.latents[i];
        r.z = spec.zlaw == ZLaw::Normal01 ? rz.normal() : rz.uniform(-2.0, 2.0);
        double u_eta = re.uniform();
        l.eta = spec.mu_eta + spec.sigma_eta * inv_normal_cdf(u_eta);
        l.eps_x = rx.uniform();
        l.nu = rn.uniform();
        double etn = (l.eta - spec.mu_eta) / spec.sigma_eta;
        r.x = spec.mu1(r.z) + spec.rho12 * spec.sigma1(r.z) * etn +
              spec.sigma1(r.z) * s12 * inv_normal_cdf(l.eps_x);
        double r13 = spec.rho13(r.x);
        r.y = spec.mu2(r.x) + r13 * spec.sigma2(r.x) * etn +
              spec.sigma2(r.x) * std::sqrt(1.0 - r13 * r13) * inv_normal_cdf(l.nu);
        r.eta = l.eta;
        r.omega = u_eta;
        r.nu = l.nu;
        r.has_latents = true;
    }
    return out;
}

// Recovers rho12 from the covariance identity: the residual X - mu1(Z) is
// projected on the known noise direction sigma1(Z) Phi^-1(eps_x), giving
// sqrt(1 - rho12^2); the sign comes from the covariance of the residual with
// the eta latent. Requires in-sample variation of mu1(Z) or sigma1(Z)
// (otherwise Z is a vacuous instrument and the identity degenerates to 0/0).
inline double identify_rho12(const GaussianSample& sample, const ScalarFn& mu1,
                             const ScalarFn& sigma1) {
    const auto& recs = sample.data.records;
    if (recs.size() < 3) throw std::invalid_argument("identify_rho12: need >= 3 records");
    std::vector<double> m1(recs.size()), s1(recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        m1[i] = mu1(recs[i].z);
        s1[i] = sigma1(recs[i].z);
    }
    double vm = sample_sd(m1), vs = sample_sd(s1);
    double scale = std::max(std::abs(mean(m1)), std::abs(mean(s1))) + 1.0;
    if (vm < 1e-9 * scale && vs < 1e-9 * scale)
        throw UnidentifiedError("identify_rho12: constant mu1 and sigma1 leave the covariance identity 0/0");

    double num = 0.0, den = 0.0, sgn = 0.0;
    for (std::size_t i = 0; i < recs.size(); ++i) {
        double resid = recs[i].x - m1[i];
        double w = s1[i] * inv_normal_cdf(sample.latents[i].eps_x);
        num += resid * w;
        den += w * w;
        sgn += resid * sample.latents[i].eta;
    }
    if (den <= 0.0) throw UnidentifiedError("identify_rho12: degenerate noise direction");
    double s = num / den;  // estimate of sqrt(1 - rho12^2)
    double rho2 = std::max(0.0, 1.0 - s * s);
    double rho = std::sqrt(rho2);
    return sgn >= 0.0 ? rho : -rho;
}

// Queryable local-linear estimate of rho13(x): at each query the outcome is
// regressed on the known confounding regressor sigma2(x)(X - mu1(Z)) /
// (sigma1(Z) rho12) with a Gaussian window in X.
class Rho13Estimate {
  public:
    Rho13Estimate(const GaussianSample& sample, double rho12, ScalarFn mu1, ScalarFn sigma1,
                  ScalarFn mu2, ScalarFn sigma2)
        : rho12_(rho12), mu1_(mu1), sigma1_(sigma1), sigma2_(sigma2) {
        (void)mu2;
        if (rho12_ == 0.0)
            throw UnidentifiedError("identify_rho13: rho12 = 0 leaves no confounding path through eta");
        xs_ = sample.data.xs();
        zs_ = sample.data.zs();
        ys_ = sample.data.ys();
        h_ = silverman_bandwidth_robust(xs_);
    }

    double operator()(double x) const {
        // weighted least squares of y on [1, W, (X - x)]
        double S[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
        double b[3] = {0, 0, 0};
        const double s2x = sigma2_(x);
        for (std::size_t i = 0; i < xs_.size(); ++i) {
            double u = (xs_[i] - x) / h_;
            if (std::abs(u) > 8.0) continue;
            double w = std::exp(-0.5 * u * u);
            double reg = s2x * (xs_[i] - mu1_(zs_[i])) / (sigma1_(zs_[i]) * rho12_);
            double d[3] = {1.0, reg, xs_[i] - x};
            for (int r = 0; r < 3; ++r) {
                for (int c = 0; c < 3; ++c) S[r][c] += w * d[r] * d[c];
                b[r] += w * d[r] * ys_[i];
            }
        }
        double sol[3];
        if (!solve3(S, b, sol)) throw UnidentifiedError("identify_rho13: singular local regression");
        return std::min(0.999, std::max(-0.999, sol[1]));
    }

  private:
    static bool solve3(double A[3][3], const double b[3], double x[3]) {
        double M[3][4];
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) M[r][c] = A[r][c];
            M[r][3] = b[r];
        }
        for (int col = 0; col < 3; ++col) {
            int piv = col;
            for (int r = col + 1; r < 3; ++r)
                if (std::abs(M[r][col]) > std::abs(M[piv][col])) piv = r;
            if (std::abs(M[piv][col]) < 1e-12) return false;
            for (int c = 0; c < 4; ++c) std::swap(M[col][c], M[piv][c]);
            for (int r = 0; r < 3; ++r) {
                if (r == col) continue;
                double f = M[r][col] / M[col][col];
                for (int c = col; c < 4; ++c) M[r][c] -= f * M[col][c];
            }
        }
        for (int r = 0; r < 3; ++r) x[r] = M[r][3] / M[r][r];
        return true;
    }

    double rho12_;
    ScalarFn mu1_, sigma1_, sigma2_;
    std::vector<double> xs_, zs_, ys_;
    double h_ = 1.0;
};

inline Rho13Estimate identify_rho13(const GaussianSample& sample, double rho12, const ScalarFn& mu1,
                                    const ScalarFn& sigma1, const ScalarFn& mu2,
                                    const ScalarFn& sigma2) {
    return Rho13Estimate(sample, rho12, mu1, sigma1, mu2, sigma2);
}

// Draws from the closed-form counterfactual law: eta comes from its prior,
// never from the posterior given (x, z).
inline std::vector<double> closed_form_cf(const GaussianSpec& spec, double x, std::size_t n_draws,
                                          std::uint64_t seed) {
    spec.validate();
    double r13 = spec.rho13(x);
    if (!(std::abs(r13) < 1.0)) throw std::invalid_argument("closed_form_cf: |rho13(x)| must be < 1");
    Rng re = substream(seed, 40);
    Rng rn = substream(seed, 41);
    std::vector<double> out(n_draws);
    const double tail = spec.sigma2(x) * std::sqrt(1.0 - r13 * r13);
    for (auto& v : out) {
        double etn = inv_normal_cdf(re.uniform());
        v = spec.mu2(x) + r13 * spec.sigma2(x) * etn + tail * inv_normal_cdf(rn.uniform());
    }
    return out;
}

namespace oracle_detail {

struct CondEta {
    double mean, sd;
};

// eta | X=x, Z=z under the Cholesky form.
inline CondEta eta_given_xz(const GaussianSpec& spec, double x, double z) {
    if (spec.rho12 == 0.0) return {spec.mu_eta, spec.sigma_eta};
    double m = spec.mu_eta + spec.sigma_eta * (x - spec.mu1(z)) / (spec.sigma1(z) * spec.rho12);
    double s = spec.sigma_eta * std::sqrt(1.0 - spec.rho12 * spec.rho12) / std::abs(spec.rho12);
    return {m, s};
}

inline double F_y_given_x_eta(const GaussianSpec& spec, double y, double x, double etn) {
    double r13 = spec.rho13(x);
    double sd = spec.sigma2(x) * std::sqrt(1.0 - r13 * r13);
    return normal_cdf((y - spec.mu2(x) - r13 * spec.sigma2(x) * etn) / sd);
}

}  // namespace oracle_detail

struct FredholmReport {
    double max_residual = 0.0;
    struct Node {
        double x, y, z, lhs, rhs, residual;
    };
    std::vector<Node> nodes;
};

// Residual of the first-kind integral equation tying the observed
// conditional law to the latent-conditional one. The omega-integral is
// evaluated as composite Simpson over omega in [delta, 1-delta], carried out
// in the eta domain through the exact substitution omega = F_eta(eta) (the
// integrand is smooth there), plus analytic corrections for the trimmed
// tails.
inline FredholmReport fredholm_residual(const GaussianSpec& spec, std::span<const double> grid_x,
                                        std::span<const double> grid_y, std::span<const double> grid_z,
                                        std::size_t n_omega, double delta = 1e-6) {
    spec.validate();
    if (n_omega < 8) throw std::invalid_argument("fredholm_residual: omega grid too coarse");
    if (spec.rho12 == 0.0)
        throw std::invalid_argument("fredholm_residual: rho12 = 0 makes the conditional kernel improper");
    std::size_t m = n_omega;
    if (m % 2 == 1) ++m;  // Simpson needs an even panel count

    FredholmReport rep;
    const double eta_lo = spec.mu_eta + spec.sigma_eta * inv_normal_cdf(delta);
    const double eta_hi = spec.mu_eta + spec.sigma_eta * inv_normal_cdf(1.0 - delta);
    for (double x : grid_x) {
        const double r13 = spec.rho13(x);
        for (double z : grid_z) {
            auto ce = oracle_detail::eta_given_xz(spec, x, z);
            for (double y : grid_y) {
                // closed-form LHS
                double mean_y = spec.mu2(x) + r13 * spec.sigma2(x) * (ce.mean - spec.mu_eta) / spec.sigma_eta;
                double var_y = spec.sigma2(x) * spec.sigma2(x) * (1.0 - r13 * r13) +
                               std::pow(r13 * spec.sigma2(x) * ce.sd / spec.sigma_eta, 2);
                double lhs = normal_cdf((y - mean_y) / std::sqrt(var_y));

                // Simpson over eta of F(y | x, eta) f(eta | x, z)
                auto integrand = [&](double eta) {
                    double etn = (eta - spec.mu_eta) / spec.sigma_eta;
                    double f = normal_pdf((eta - ce.mean) / ce.sd) / ce.sd;
                    return oracle_detail::F_y_given_x_eta(spec, y, x, etn) * f;
                };
                const double h = (eta_hi - eta_lo) / static_cast<double>(m);
                double acc = integrand(eta_lo) + integrand(eta_hi);
                for (std::size_t k = 1; k < m; ++k)
                    acc += integrand(eta_lo + h * static_cast<double>(k)) * (k % 2 == 1 ? 4.0 : 2.0);
                double rhs = acc * h / 3.0;

                // trimmed-tail mass, with F nearly constant over each tail
                double lo_mass = normal_cdf((eta_lo - ce.mean) / ce.sd);
                double hi_mass = 1.0 - normal_cdf((eta_hi - ce.mean) / ce.sd);
                rhs += lo_mass * oracle_detail::F_y_given_x_eta(spec, y, x,
                                                               (eta_lo - spec.mu_eta) / spec.sigma_eta);
                rhs += hi_mass * oracle_detail::F_y_given_x_eta(spec, y, x,
                                                               (eta_hi - spec.mu_eta) / spec.sigma_eta);

                double res = std::abs(lhs - rhs);
                rep.nodes.push_back({x, y, z, lhs, rhs, res});
                rep.max_residual = std::max(rep.max_residual, res);
            }
        }
    }
    return rep;
}

struct HTCheck {
    double H = 0, T = 0;
    double se_H = 0, se_T = 0;
    double combined_se() const { return std::sqrt(se_H * se_H + se_T * se_T); }
};

// Two independent Monte-Carlo routes to the interventional CDF: H averages
// F(y | x, eta) over the eta prior; T draws outcomes from the structural
// form with the disturbance taken from its marginal law.
inline HTCheck lemma_HT_check(const GaussianSpec& spec, double x, double y, std::size_t n,
                              std::uint64_t seed) {
    spec.validate();
    Rng rh = substream(seed, 50);
    double sum = 0, sum2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double etn = inv_normal_cdf(rh.uniform());
        double F = oracle_detail::F_y_given_x_eta(spec, y, x, etn);
        sum += F;
        sum2 += F * F;
    }
    HTCheck out;
    double nn = static_cast<double>(n);
    out.H = sum / nn;
    out.se_H = std::sqrt(std::max(0.0, sum2 / nn - out.H * out.H) / nn);

    auto cf = closed_form_cf(spec, x, n, seed + 1);
    std::size_t cnt = 0;
    for (double v : cf) cnt += (v <= y);
    out.T = static_cast<double>(cnt) / nn;
    out.se_T = std::sqrt(out.T * (1.0 - out.T) / nn);
    return out;
}

inline GaussianSpec gaussian_preset(std::string_view name) {
    GaussianSpec s;
    s.mu1 = {0.0, 1.0, 0.0, 1.0};                 // mu1(z) = z
    s.sigma1 = {1.0, 0.2, 0.0, 1.0, 0.05};        // sigma1(z) = max(1 + 0.2 z, 0.05)
    if (name == "gauss-a") {
        s.mu2 = {1.0, 0.5, 0.0, 1.0};             // mu2(x) = 1 + 0.5 x
        s.sigma2 = {1.0, 0.0, 0.0, 1.0, 0.05};
        s.rho12 = 0.6;
        s.rho13 = {0.5, 0.0, 0.0, 1.0};           // constant 0.5
    } else if (name == "gauss-b") {
        s.mu2 = {0.5, 1.0, 0.0, 1.0};
        s.sigma2 = {0.8, 0.0, 0.0, 1.0, 0.05};
        s.rho12 = 0.8;
        s.rho13 = {0.3, 0.0, 0.0, 1.0};
    } else if (name == "gauss-c") {
        s.mu2 = {1.0, 0.5, 0.0, 1.0};
        s.sigma2 = {1.2, 0.0, 0.0, 1.0, 0.05};
        s.rho12 = 0.3;
        s.rho13 = {0.0, 0.0, 0.0, 1.0};           // no confounding of the outcome
    } else if (name == "gauss-tanh") {
        s.mu2 = {1.0, 0.5, 0.0, 1.0};
        s.sigma2 = {1.0, 0.0, 0.3, 0.5, 0.05};    // sigma2(x) = 1 + 0.3 tanh(x/2)
        s.rho12 = 0.6;
        s.rho13 = {0.0, 0.0, 0.5, 0.5};           // rho13(x) = 0.5 tanh(x/2)
    } else {
        throw std::invalid_argument("unknown gaussian preset: " + std::string(name));
    }
    s.name = std::string(name);
    return s;
}

}  // namespace congan
