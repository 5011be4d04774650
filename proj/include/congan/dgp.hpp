#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "congan/dataset.hpp"
#include "congan/math.hpp"
#include "congan/rng.hpp"

namespace congan {

enum class HForm { Translog, Aids, Ces, BackwardBending, GenCobbDouglas, TanhPair };
enum class GForm { Interact, PowerInteract, TanhPair };

// Input transform applied to the structural arguments before the h-form.
enum class ArgTransform { Identity, Zeta, ExpScale };

// 1.5 + 1.5*tanh(0.15 t), the squashing used to keep log/power forms in
// their domain; range (0, 3).
inline double zeta(double t) { return 1.5 + 1.5 * std::tanh(0.15 * t); }

struct DGPSpec {
    HForm h = HForm::Ces;
    GForm g = GForm::Interact;
    std::vector<double> alpha;
    std::vector<double> beta;
    std::array<double, 3> gamma{1.0, 1.0, 1.0};
    ArgTransform transform_z = ArgTransform::Identity;
    ArgTransform transform_eta = ArgTransform::Identity;
    double exp_scale = 0.5;  // for ArgTransform::ExpScale
    double rho = 0.5;        // CES / AIDS exponent parameter
    std::string name = "custom";
};

struct LatentRecord {
    double eta = 0, nu = 0, epsilon = 0, omega = 0;
};

namespace dgp_detail {

inline double apply_transform(ArgTransform t, double scale, double v) {
    switch (t) {
        case ArgTransform::Identity: return v;
        case ArgTransform::Zeta: return zeta(v);
        case ArgTransform::ExpScale: return std::exp(scale * v);
    }
    return v;
}

inline void require_positive(double v, const char* what) {
    if (!(v > 0.0)) throw std::domain_error(std::string("structural form: nonpositive argument for ") + what);
}

}  // namespace dgp_detail

// h-forms take the already-transformed arguments.
inline double structural_h(HForm form, double a, double b, const std::vector<double>& alpha,
                           double rho) {
    switch (form) {
        case HForm::Translog: {
            if (alpha.size() < 6) throw std::invalid_argument("Translog needs alpha[0..5]");
            dgp_detail::require_positive(a, "log");
            dgp_detail::require_positive(b, "log");
            double la = std::log(a), lb = std::log(b);
            return alpha[0] + alpha[1] * la + alpha[2] * lb + alpha[3] * la * la +
                   alpha[4] * lb * lb + alpha[5] * la * lb;
        }
        case HForm::Aids: {
            if (alpha.size() < 7) throw std::invalid_argument("Aids needs alpha[0..6]");
            dgp_detail::require_positive(a * b, "power");
            double base = structural_h(HForm::Translog, a, b, alpha, rho);
            return base + alpha[6] * std::pow(a * b, rho);
        }
        case HForm::Ces: {
            if (alpha.size() < 4) throw std::invalid_argument("Ces needs alpha[0..3]");
            dgp_detail::require_positive(a, "power");
            dgp_detail::require_positive(b, "power");
            double inner = alpha[1] * std::pow(a, -rho) + alpha[2] * std::pow(b, -rho);
            dgp_detail::require_positive(inner, "CES aggregate");
            return alpha[0] * std::pow(inner, -alpha[3] / rho);
        }
        case HForm::BackwardBending: {
            if (alpha.size() < 2) throw std::invalid_argument("BackwardBending needs alpha[0..1]");
            double t = a * b - alpha[0] * a;
            return std::exp(t) - alpha[1] * t;
        }
        case HForm::GenCobbDouglas: {
            if (alpha.size() < 5) throw std::invalid_argument("GenCobbDouglas needs alpha[0..4]");
            double inter = 0.0;
            if (alpha[2] != 0.0) {
                if (alpha[3] != std::floor(alpha[3]) || alpha[4] != std::floor(alpha[4])) {
                    dgp_detail::require_positive(a, "power");
                    dgp_detail::require_positive(b, "power");
                }
                inter = alpha[2] * std::pow(a, alpha[3]) * std::pow(b, alpha[4]);
            }
            return alpha[0] * a + alpha[1] * b + inter;
        }
        case HForm::TanhPair: {
            if (alpha.size() < 5) throw std::invalid_argument("TanhPair needs alpha[0..4]");
            return alpha[0] * std::tanh(alpha[1] * a + alpha[2] * b) +
                   alpha[3] * std::tanh(alpha[4] * b);
        }
    }
    throw std::invalid_argument("structural_h: unknown form");
}

inline double structural_g(GForm form, double x, double eps, const std::vector<double>& beta) {
    switch (form) {
        case GForm::Interact:
            if (beta.size() < 3) throw std::invalid_argument("Interact needs beta[0..2]");
            return beta[0] * x + beta[1] * eps + beta[2] * x * eps;
        case GForm::PowerInteract: {
            if (beta.size() < 5) throw std::invalid_argument("PowerInteract needs beta[0..4]");
            double inter = 0.0;
            if (beta[2] != 0.0) {
                if (beta[3] != std::floor(beta[3]) || beta[4] != std::floor(beta[4])) {
                    dgp_detail::require_positive(x, "power");
                    dgp_detail::require_positive(eps, "power");
                }
                inter = beta[2] * std::pow(x, beta[3]) * std::pow(eps, beta[4]);
            }
            return beta[0] * x + beta[1] * eps + inter;
        }
        case GForm::TanhPair:
            if (beta.size() < 5) throw std::invalid_argument("TanhPair needs beta[0..4]");
            return beta[0] * std::tanh(beta[1] * x + beta[2] * eps) +
                   beta[3] * std::tanh(beta[4] * eps);
    }
    throw std::invalid_argument("structural_g: unknown form");
}

inline double h_value(const DGPSpec& spec, double z, double eta) {
    double a = dgp_detail::apply_transform(spec.transform_z, spec.exp_scale, z);
    double b = dgp_detail::apply_transform(spec.transform_eta, spec.exp_scale, eta);
    return structural_h(spec.h, a, b, spec.alpha, spec.rho);
}

inline double g_value(const DGPSpec& spec, double x, double eps) {
    return structural_g(spec.g, x, eps, spec.beta);
}

inline double epsilon_value(const std::array<double, 3>& gamma, double eta, double nu) {
    return gamma[0] * eta * nu + gamma[1] * eta + gamma[2] * nu;
}

// i.i.d. standard-normal (eta, nu) with omega = Phi(eta) and the gamma-law
// epsilon. eta is derived from omega through the inverse probability
// integral transform so the pair is exactly consistent.
inline std::vector<LatentRecord> gen_disturbances(std::size_t n, const std::array<double, 3>& gamma,
                                                  std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("gen_disturbances: n must be >= 1");
    Rng rom = substream(seed, 1);
    Rng rnu = substream(seed, 2);
    std::vector<LatentRecord> out(n);
    for (auto& l : out) {
        l.omega = rom.uniform();
        l.eta = inv_normal_cdf(l.omega);
        l.nu = inv_normal_cdf(rnu.uniform());
        l.epsilon = epsilon_value(gamma, l.eta, l.nu);
    }
    return out;
}

// Z ~ N(0,1); X = h(Z, eta), Y = g(X, epsilon); latents retained.
inline Dataset simulate(const DGPSpec& spec, std::size_t n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("simulate: n must be >= 1");
    auto latents = gen_disturbances(n, spec.gamma, seed);
    Rng rz = substream(seed, 0);
    Dataset ds;
    ds.records.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        Record& r = ds.records[i];
        r.z = rz.normal();
        r.eta = latents[i].eta;
        r.omega = latents[i].omega;
        r.nu = latents[i].nu;
        r.epsilon = latents[i].epsilon;
        r.has_latents = true;
        r.x = h_value(spec, r.z, r.eta);
        r.y = g_value(spec, r.x, r.epsilon);
    }
    return ds;
}

// Named presets reproducing the Monte-Carlo tables. Parameter slots are the
// ones consistent with the reported per-quantile action means; where a table
// caption disagrees with its own numbers, the numbers win.
inline DGPSpec preset(std::string_view name) {
    DGPSpec s;
    if (name == "ces") {
        s.h = HForm::Ces;
        s.alpha = {6.0, 0.5, 0.5, 1.625};
        s.rho = 1.0;
        s.transform_z = s.transform_eta = ArgTransform::ExpScale;
        s.exp_scale = 0.4;
        s.g = GForm::Interact;
        s.beta = {2.0, 1.0, -0.25};
        s.gamma = {1.0, 1.0, 1.0};
    } else if (name == "translog") {
        s.h = HForm::Translog;
        s.alpha = {0.0, 10.0, 5.0, 3.25, 0.0, -26.25};
        s.transform_z = s.transform_eta = ArgTransform::Zeta;
        s.g = GForm::Interact;
        s.beta = {8.0, 6.0, -1.0};
        s.gamma = {1.0, 1.0, -3.0};
    } else if (name == "aids") {
        s.h = HForm::Aids;
        s.alpha = {0.0, 10.0, 5.0, 3.25, 0.0, -26.25, -0.15};
        s.rho = 0.5;
        s.transform_z = s.transform_eta = ArgTransform::Zeta;
        s.g = GForm::Interact;
        s.beta = {8.0, 6.0, -1.0};
        s.gamma = {1.0, 1.0, 1.0};
    } else if (name == "tanh") {
        s.h = HForm::TanhPair;
        s.alpha = {6.0, 0.25, -0.5, 5.0, 0.5};
        s.g = GForm::TanhPair;
        s.beta = {6.0, 0.25, -0.5, 10.0, 0.5};
        s.gamma = {1.0, 1.0, -3.0};
    } else if (name == "backbend") {
        s.h = HForm::BackwardBending;
        s.alpha = {1.0, 3.0};
        s.g = GForm::Interact;
        s.beta = {0.5, 0.6, 0.1};
        s.gamma = {1.0, 1.0, -3.0};
    } else {
        throw std::invalid_argument("unknown preset: " + std::string(name));
    }
    s.name = std::string(name);
    return s;
}

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names = {"ces", "translog", "aids", "tanh", "backbend"};
    return names;
}

}  // namespace congan
