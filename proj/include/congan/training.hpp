#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "congan/dataset.hpp"
#include "congan/generators.hpp"
#include "congan/kde.hpp"
#include "congan/rng.hpp"

namespace congan {

struct TrainConfig {
    double tol = 1e-16;
    int max_iterations = 10000;
    double step = 0.01;       // Lambda
    int inner_samples = 32;   // J draws per record in the init stage
    std::uint64_t seed = 0;
    int checkpoint_every = 0;
    std::function<void(int, const GeneratorParams&, const Bandwidths&)> on_checkpoint;

    void validate() const {
        if (tol < 0.0) throw std::invalid_argument("TrainConfig: tol must be >= 0");
        if (!(step > 0.0)) throw std::invalid_argument("TrainConfig: step must be > 0");
        if (inner_samples < 1) throw std::invalid_argument("TrainConfig: inner_samples must be >= 1");
        if (max_iterations < 0) throw std::invalid_argument("TrainConfig: max_iterations must be >= 0");
    }
};

enum class StopReason { NoIterations, Tolerance, MaxIterations, NonFinite };

struct IterStat {
    int iter = 0;
    double loss = 0.0;        // objective driving the weight update
    double loss_sigma = 0.0;  // leave-one-out entropy driving the bandwidths
    double sigma_x = 0.0, sigma_y = 0.0, sigma_z = 0.0;
};

struct TrainTrace {
    std::vector<IterStat> iters;
    StopReason stop = StopReason::NoIterations;

    double first_loss() const { return iters.empty() ? 0.0 : iters.front().loss; }
    double last_loss() const { return iters.empty() ? 0.0 : iters.back().loss; }
};

inline const char* to_string(StopReason r) {
    switch (r) {
        case StopReason::NoIterations: return "no_iterations";
        case StopReason::Tolerance: return "tolerance";
        case StopReason::MaxIterations: return "max_iterations";
        case StopReason::NonFinite: return "non_finite";
    }
    return "?";
}

struct StageResult {
    GeneratorParams params;
    Bandwidths sigma;
    TrainTrace trace;
};

// Smoothing Jensen-Shannon divergence between the real and synthetic
// triplets; synthetic records reuse the real z per index. Always <= 0, and
// exactly 2 log(1/2) when the samples coincide.
inline double jsd_loss(const Dataset& real, const Dataset& synth, const Bandwidths& s) {
    if (real.empty() || synth.empty()) throw std::invalid_argument("jsd_loss: empty dataset");
    if (real.size() != synth.size()) throw std::invalid_argument("jsd_loss: mismatched sizes");
    s.require_positive();
    const std::size_t n = real.size();
    const double norm = std::pow(2.0 * kPi, 1.5) * s.x * s.y * s.z;
    auto dens = [&](const Dataset& from, double x, double y, double z) {
        double acc = 0.0;
        for (const auto& r : from.records) {
            double qx = (r.x - x) / s.x, qy = (r.y - y) / s.y, qz = (r.z - z) / s.z;
            acc += std::exp(-0.5 * (qx * qx + qy * qy + qz * qz));
        }
        return std::max(acc / (static_cast<double>(n) * norm), kDensityFloor);
    };
    double acc = 0.0;
    for (const auto& r : real.records) {
        double p = dens(real, r.x, r.y, r.z);
        double q = dens(synth, r.x, r.y, r.z);
        acc += std::log(p / (p + q));
    }
    for (const auto& r : synth.records) {
        double p = dens(real, r.x, r.y, r.z);
        double q = dens(synth, r.x, r.y, r.z);
        acc += std::log(q / (p + q));
    }
    return acc / static_cast<double>(n);
}

namespace train_detail {

struct Scratch {
    explicit Scratch(const GeneratorParams& shape) : tape(shape), ws(tape.tape().make_workspace()) {
        // adjoint seeds unused on the forward-only path
        ws.value[static_cast<std::size_t>(tape.ax_node())] = 0.0;
        ws.value[static_cast<std::size_t>(tape.ay_node())] = 0.0;
    }

    void bind_params(const GeneratorParams& p) { tape.bind_weights(p, ws); }

    void forward(double z, double omega, double nu) {
        ws.value[static_cast<std::size_t>(tape.z_node())] = z;
        ws.value[static_cast<std::size_t>(tape.omega_node())] = omega;
        ws.value[static_cast<std::size_t>(tape.nu_node())] = nu;
        tape.tape().forward(ws);
    }

    double xhat() const { return ws.value[static_cast<std::size_t>(tape.xhat_node())]; }
    double yhat() const { return ws.value[static_cast<std::size_t>(tape.yhat_node())]; }

    // d(gx*Xhat + gy*Yhat)/dw accumulated into grad, after a fresh forward.
    void backprop(double gx, double gy, std::span<double> grad) {
        tape.tape().zero_adjoints(ws);
        ws.adjoint[static_cast<std::size_t>(tape.xhat_node())] = gx;
        ws.adjoint[static_cast<std::size_t>(tape.yhat_node())] = gy;
        tape.tape().backward(ws);
        tape.accumulate_weight_grad(ws, grad);
    }

    PairTape tape;
    ad::Tape::Workspace ws;
};

inline void sigma_log_step(double& sigma, double grad, double step) {
    // gradient step taken on log(sigma); keeps the bandwidth positive while
    // following the written update direction
    sigma *= std::exp(-step * grad * sigma);
}

}  // namespace train_detail

// Gradient of the init-stage likelihood loss with respect to the flattened
// weights, plus the loss values. Exposed separately so the finite-difference
// acceptance checks exercise exactly the gradients the optimizer uses.
struct InitLossEval {
    double loss = 0.0;        // L
    double loss_sigma = 0.0;  // L_sigma (leave-equal-out form)
    std::vector<double> weight_grad;
    double d_sx = 0.0, d_sy = 0.0;        // d loss_sigma / d sigma
    double d_loss_sx = 0.0, d_loss_sy = 0.0;  // d loss / d sigma
};

inline InitLossEval init_loss_eval(const Dataset& data, const GeneratorParams& params,
                                   double sx, double sy, std::span<const double> omega_draws,
                                   std::span<const double> nu_draws, int J, bool want_grad = true) {
    const std::size_t n = data.size();
    if (n < 1) throw std::invalid_argument("init_loss_eval: empty data");
    if (omega_draws.size() != n * static_cast<std::size_t>(J) || nu_draws.size() != omega_draws.size())
        throw std::invalid_argument("init_loss_eval: draw buffers must be n*J");
    train_detail::Scratch sc(params);
    sc.bind_params(params);

    std::vector<double> xh(n * static_cast<std::size_t>(J)), yh(xh.size());
    for (std::size_t i = 0; i < n; ++i)
        for (int j = 0; j < J; ++j) {
            std::size_t k = i * static_cast<std::size_t>(J) + static_cast<std::size_t>(j);
            sc.forward(data.records[i].z, omega_draws[k], nu_draws[k]);
            xh[k] = sc.xhat();
            yh[k] = sc.yhat();
        }

    const double norm = 2.0 * kPi * sx * sy;
    InitLossEval out;
    if (want_grad) out.weight_grad.assign(params.n_weights(), 0.0);
    std::vector<double> density(n, 0.0), ploo(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double dsum = 0.0, wsum = 0.0, dcount = 0.0;
        for (int j = 0; j < J; ++j) {
            std::size_t k = i * static_cast<std::size_t>(J) + static_cast<std::size_t>(j);
            double dx = (xh[k] - data.records[i].x) / sx;
            double dy = (yh[k] - data.records[i].y) / sy;
            double t = std::exp(-0.5 * (dx * dx + dy * dy)) / norm;
            dsum += t;
            // exclude draws that coincide with the record exactly
            bool distinct = (xh[k] != data.records[i].x) || (yh[k] != data.records[i].y);
            if (distinct) {
                wsum += t;
                dcount += 1.0;
            }
        }
        density[i] = dsum / static_cast<double>(J);
        ploo[i] = dcount > 0.0 ? wsum / dcount : 0.0;
        out.loss += std::log(std::max(density[i], kDensityFloor));
        out.loss_sigma += std::log(std::max(ploo[i], kDensityFloor));
    }
    double nn = static_cast<double>(n);
    out.loss = -out.loss / nn;
    out.loss_sigma = -out.loss_sigma / nn;

    for (std::size_t i = 0; i < n; ++i) {
        bool live = density[i] > kDensityFloor;
        bool live_s = ploo[i] > kDensityFloor;
        double dcount = 0.0;
        for (int j = 0; j < J; ++j) {
            std::size_t k = i * static_cast<std::size_t>(J) + static_cast<std::size_t>(j);
            if ((xh[k] != data.records[i].x) || (yh[k] != data.records[i].y)) dcount += 1.0;
        }
        for (int j = 0; j < J; ++j) {
            std::size_t k = i * static_cast<std::size_t>(J) + static_cast<std::size_t>(j);
            double dx = xh[k] - data.records[i].x;
            double dy = yh[k] - data.records[i].y;
            double t = std::exp(-0.5 * (dx * dx / (sx * sx) + dy * dy / (sy * sy))) / norm;
            if (live) {
                double c = 1.0 / (nn * density[i] * static_cast<double>(J));
                out.d_loss_sx += -c * t * (dx * dx / (sx * sx * sx) - 1.0 / sx);
                out.d_loss_sy += -c * t * (dy * dy / (sy * sy * sy) - 1.0 / sy);
                if (want_grad) {
                    double gx = c * t * dx / (sx * sx);
                    double gy = c * t * dy / (sy * sy);
                    sc.forward(data.records[i].z, omega_draws[k], nu_draws[k]);
                    sc.backprop(gx, gy, out.weight_grad);
                }
            }
            bool distinct = (dx != 0.0) || (dy != 0.0);
            if (live_s && distinct && dcount > 0.0) {
                double cs = 1.0 / (nn * ploo[i] * dcount);
                out.d_sx += -cs * t * (dx * dx / (sx * sx * sx) - 1.0 / sx);
                out.d_sy += -cs * t * (dy * dy / (sy * sy * sy) - 1.0 / sy);
            }
        }
    }
    return out;
}

// One full evaluation of the CONGAN objective K_n together with its
// gradients: analytic adjoints of the six kernel-density quantities chained
// through one reverse sweep of the generator pair per record.
struct ConganLossEval {
    double kn = 0.0;          // K_n (the iteration loss)
    double loss_sigma = 0.0;  // sum of the two leave-one-out entropies
    std::vector<double> weight_grad;
    double d_sx = 0.0, d_sy = 0.0, d_sz = 0.0;              // d loss_sigma / d sigma
    double d_kn_sx = 0.0, d_kn_sy = 0.0, d_kn_sz = 0.0;     // d K_n / d sigma
};

inline ConganLossEval congan_loss_eval(const Dataset& data, const GeneratorParams& params,
                                       const Bandwidths& s, std::span<const double> omega_draws,
                                       std::span<const double> nu_draws, bool want_grad = true,
                                       std::vector<double>* krs_buf = nullptr,
                                       std::vector<double>* kss_buf = nullptr) {
    const std::size_t n = data.size();
    if (n < 2) throw std::invalid_argument("congan_loss_eval: need >= 2 records");
    if (omega_draws.size() != n || nu_draws.size() != n)
        throw std::invalid_argument("congan_loss_eval: draw buffers must have one entry per record");
    s.require_positive();

    train_detail::Scratch sc(params);
    sc.bind_params(params);
    std::vector<double> xh(n), yh(n);
    for (std::size_t i = 0; i < n; ++i) {
        sc.forward(data.records[i].z, omega_draws[i], nu_draws[i]);
        xh[i] = sc.xhat();
        yh[i] = sc.yhat();
    }

    const double norm = std::pow(2.0 * kPi, 1.5) * s.x * s.y * s.z;
    const double k0 = 1.0;  // unnormalized self kernel
    std::vector<double> local_krs, local_kss;
    std::vector<double>& krs = krs_buf ? *krs_buf : local_krs;
    std::vector<double>& kss = kss_buf ? *kss_buf : local_kss;
    krs.assign(n * n, 0.0);
    kss.assign(n * n, 0.0);

    std::vector<double> Pr(n, 0.0), Qr(n, 0.0), Ps(n, 0.0), Qs(n, 0.0), PrLoo(n, 0.0);
    // real-real pass: row sums only (kernels cheap enough to recompute in the
    // sigma-gradient pass below)
    for (std::size_t i = 0; i < n; ++i) {
        const Record& a = data.records[i];
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const Record& b = data.records[j];
            double dx = (b.x - a.x) / s.x, dy = (b.y - a.y) / s.y, dz = (b.z - a.z) / s.z;
            acc += std::exp(-0.5 * (dx * dx + dy * dy + dz * dz));
        }
        Pr[i] = acc / (static_cast<double>(n) * norm);
        PrLoo[i] = (acc - k0) / (static_cast<double>(n - 1) * norm);
    }
    // real x synth and synth x synth kernel caches
    for (std::size_t i = 0; i < n; ++i) {
        const Record& a = data.records[i];
        double accq = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double dx = (xh[j] - a.x) / s.x, dy = (yh[j] - a.y) / s.y,
                   dz = (data.records[j].z - a.z) / s.z;
            double k = std::exp(-0.5 * (dx * dx + dy * dy + dz * dz));
            krs[i * n + j] = k;
            accq += k;
        }
        Qr[i] = accq / (static_cast<double>(n) * norm);
    }
    for (std::size_t i = 0; i < n; ++i) {
        double accq = 0.0, accp = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double dx = (xh[j] - xh[i]) / s.x, dy = (yh[j] - yh[i]) / s.y,
                   dz = (data.records[j].z - data.records[i].z) / s.z;
            double k = std::exp(-0.5 * (dx * dx + dy * dy + dz * dz));
            kss[i * n + j] = k;
            accq += k;
            accp += krs[j * n + i];  // kernel between synth i and real j
        }
        Qs[i] = accq / (static_cast<double>(n) * norm);
        Ps[i] = accp / (static_cast<double>(n) * norm);
    }
    std::vector<double> QsLoo(n);
    for (std::size_t i = 0; i < n; ++i)
        QsLoo[i] = (Qs[i] * static_cast<double>(n) * norm - k0) / (static_cast<double>(n - 1) * norm);

    ConganLossEval out;
    const double nn = static_cast<double>(n);
    auto cl = [](double v) { return std::max(v, kDensityFloor); };
    for (std::size_t i = 0; i < n; ++i) {
        out.kn += std::log(cl(Pr[i]) / (cl(Pr[i]) + cl(Qr[i])));
        out.kn += std::log(cl(Qs[i]) / (cl(Ps[i]) + cl(Qs[i])));
        out.loss_sigma += -std::log(cl(PrLoo[i])) - std::log(cl(QsLoo[i]));
    }
    out.kn /= nn;
    out.loss_sigma /= nn;

    if (!want_grad) return out;

    // density-level adjoints of K_n
    std::vector<double> A(n), B(n), C(n), A0(n);
    for (std::size_t i = 0; i < n; ++i) {
        double pr = cl(Pr[i]), qr = cl(Qr[i]), ps = cl(Ps[i]), qs = cl(Qs[i]);
        A0[i] = (Pr[i] > kDensityFloor ? (1.0 / pr - 1.0 / (pr + qr)) / nn : 0.0);
        A[i] = (Qr[i] > kDensityFloor ? -1.0 / ((pr + qr) * nn) : 0.0);
        B[i] = (Ps[i] > kDensityFloor ? -1.0 / ((ps + qs) * nn) : 0.0);
        C[i] = (Qs[i] > kDensityFloor ? (1.0 / qs - 1.0 / (ps + qs)) / nn : 0.0);
    }

    std::vector<double> gX(n, 0.0), gY(n, 0.0);
    const double isx2 = 1.0 / (s.x * s.x), isy2 = 1.0 / (s.y * s.y), isz2 = 1.0 / (s.z * s.z);
    const double cn = 1.0 / (nn * norm);
    // contributions through Q_r (synthetic as kde data at real points) and
    // P_s (real kde evaluated at moving synthetic points)
    for (std::size_t i = 0; i < n; ++i) {
        const Record& a = data.records[i];
        const double* row = &krs[i * n];
        for (std::size_t j = 0; j < n; ++j) {
            double w = (A[i] + B[j]) * row[j] * cn;
            gX[j] += w * (a.x - xh[j]) * isx2;
            gY[j] += w * (a.y - yh[j]) * isy2;
            // sigma-derivatives of K_n through these kernels
            double dx = a.x - xh[j], dy = a.y - yh[j], dz = a.z - data.records[j].z;
            double wk = (A[i] + B[j]) * row[j] * cn;
            out.d_kn_sx += wk * (dx * dx * isx2 - 1.0);  // times 1/s.x below
            out.d_kn_sy += wk * (dy * dy * isy2 - 1.0);
            out.d_kn_sz += wk * (dz * dz * isz2 - 1.0);
        }
    }
    // contributions through Q_s (both sides synthetic); the diagonal kernel
    // is constant in the coordinates but still carries a sigma-derivative
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = &kss[i * n];
        out.d_kn_sx -= C[i] * cn;
        out.d_kn_sy -= C[i] * cn;
        out.d_kn_sz -= C[i] * cn;
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            double w = C[i] * row[j] * cn;
            double ddx = (xh[j] - xh[i]) * isx2, ddy = (yh[j] - yh[i]) * isy2;
            gX[j] -= w * ddx;
            gX[i] += w * ddx;
            gY[j] -= w * ddy;
            gY[i] += w * ddy;
            double dx = xh[j] - xh[i], dy = yh[j] - yh[i],
                   dz = data.records[j].z - data.records[i].z;
            out.d_kn_sx += w * (dx * dx * isx2 - 1.0);
            out.d_kn_sy += w * (dy * dy * isy2 - 1.0);
            out.d_kn_sz += w * (dz * dz * isz2 - 1.0);
        }
    }
    // contributions of P_r to the K_n sigma-gradient (no coordinate part)
    for (std::size_t i = 0; i < n; ++i) {
        const Record& a = data.records[i];
        for (std::size_t j = 0; j < n; ++j) {
            const Record& b = data.records[j];
            double dx = (b.x - a.x), dy = (b.y - a.y), dz = (b.z - a.z);
            double k = std::exp(-0.5 * (dx * dx * isx2 + dy * dy * isy2 + dz * dz * isz2));
            double w = A0[i] * k * cn;
            out.d_kn_sx += w * (dx * dx * isx2 - 1.0);
            out.d_kn_sy += w * (dy * dy * isy2 - 1.0);
            out.d_kn_sz += w * (dz * dz * isz2 - 1.0);
        }
    }
    out.d_kn_sx /= s.x;
    out.d_kn_sy /= s.y;
    out.d_kn_sz /= s.z;

    // leave-one-out entropy sigma-gradient
    const double cm = 1.0 / (static_cast<double>(n - 1) * norm);
    for (std::size_t i = 0; i < n; ++i) {
        const Record& a = data.records[i];
        double wr = (PrLoo[i] > kDensityFloor) ? -1.0 / (nn * PrLoo[i]) : 0.0;
        double ws = (QsLoo[i] > kDensityFloor) ? -1.0 / (nn * QsLoo[i]) : 0.0;
        if (wr != 0.0) {
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const Record& b = data.records[j];
                double dx = (b.x - a.x), dy = (b.y - a.y), dz = (b.z - a.z);
                double k = std::exp(-0.5 * (dx * dx * isx2 + dy * dy * isy2 + dz * dz * isz2)) * cm;
                out.d_sx += wr * k * (dx * dx * isx2 - 1.0);
                out.d_sy += wr * k * (dy * dy * isy2 - 1.0);
                out.d_sz += wr * k * (dz * dz * isz2 - 1.0);
            }
        }
        if (ws != 0.0) {
            const double* row = &kss[i * n];
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                double dx = xh[j] - xh[i], dy = yh[j] - yh[i],
                       dz = data.records[j].z - data.records[i].z;
                out.d_sx += ws * row[j] * cm * (dx * dx * isx2 - 1.0);
                out.d_sy += ws * row[j] * cm * (dy * dy * isy2 - 1.0);
                out.d_sz += ws * row[j] * cm * (dz * dz * isz2 - 1.0);
            }
        }
    }
    out.d_sx /= s.x;
    out.d_sy /= s.y;
    out.d_sz /= s.z;

    out.weight_grad.assign(params.n_weights(), 0.0);
    for (std::size_t m = 0; m < n; ++m) {
        if (gX[m] == 0.0 && gY[m] == 0.0) continue;
        sc.forward(data.records[m].z, omega_draws[m], nu_draws[m]);
        sc.backprop(gX[m], gY[m], out.weight_grad);
    }
    return out;
}

namespace train_detail {

// The loop shared by both stages: fresh noise each iteration, a plain
// gradient step of size Lambda, and the |gap| < tol stop. The written
// condition would exit before the first pass (gap starts at 0), so at least
// one iteration always runs when the budget allows.
template <typename EvalFn>
TrainTrace descend(int max_iterations, double tol, EvalFn eval) {
    TrainTrace trace;
    double prev = 0.0;
    for (int it = 0; it < max_iterations; ++it) {
        IterStat st;
        st.iter = it;
        try {
            if (!eval(it, st)) {
                trace.stop = StopReason::NonFinite;
                return trace;
            }
        } catch (const ad::NonFiniteError&) {
            trace.stop = StopReason::NonFinite;
            return trace;
        }
        trace.iters.push_back(st);
        if (it > 0 && std::abs(st.loss - prev) < tol) {
            trace.stop = StopReason::Tolerance;
            return trace;
        }
        prev = st.loss;
    }
    trace.stop = max_iterations > 0 ? StopReason::MaxIterations : StopReason::NoIterations;
    return trace;
}

}  // namespace train_detail

// Entropy-based warm start: per record, J fresh (omega, nu) pairs feed the
// conditional synthetic density at (X_i, Y_i); weights follow the negative
// log-likelihood, bandwidths follow the leave-one-out entropy.
inline StageResult init_stage(const Dataset& data, GeneratorParams params, const TrainConfig& cfg) {
    cfg.validate();
    if (data.size() < 2) throw std::invalid_argument("init_stage: need at least 2 records");
    StageResult out;
    out.sigma.x = silverman_bandwidth_robust(data.xs());
    out.sigma.y = silverman_bandwidth_robust(data.ys());
    out.sigma.z = silverman_bandwidth_robust(data.zs());
    const std::size_t n = data.size();
    const int J = cfg.inner_samples;
    Rng noise = substream(cfg.seed, 0xA161);
    std::vector<double> om(n * static_cast<std::size_t>(J)), nu(om.size());

    out.trace = train_detail::descend(
        cfg.max_iterations, cfg.tol,
        [&](int, IterStat& st) {
            for (auto& v : om) v = noise.uniform();
            for (auto& v : nu) v = noise.uniform();
            auto ev = init_loss_eval(data, params, out.sigma.x, out.sigma.y, om, nu, J);
            if (!std::isfinite(ev.loss) || !std::isfinite(ev.loss_sigma)) return false;
            st.loss = ev.loss;
            st.loss_sigma = ev.loss_sigma;
            st.sigma_x = out.sigma.x;
            st.sigma_y = out.sigma.y;
            st.sigma_z = out.sigma.z;
            detail::add_scaled(params, ev.weight_grad, -cfg.step);
            train_detail::sigma_log_step(out.sigma.x, ev.d_sx, cfg.step);
            train_detail::sigma_log_step(out.sigma.y, ev.d_sy, cfg.step);
            return true;
        });
    out.params = std::move(params);
    return out;
}

// The CONGAN stage: one fresh (omega, nu) per record per iteration, a joint
// gradient step on the generator weights against K_n and on the bandwidths
// against the summed leave-one-out entropies.
inline StageResult congan_stage(const Dataset& data, GeneratorParams params, Bandwidths sigma,
                                const TrainConfig& cfg) {
    cfg.validate();
    if (data.size() < 2) throw std::invalid_argument("congan_stage: need at least 2 records");
    sigma.require_positive();
    const std::size_t n = data.size();
    Rng noise = substream(cfg.seed, 0xC049);
    std::vector<double> om(n), nu(n);
    std::vector<double> krs, kss;  // kernel caches reused across iterations

    StageResult out;
    out.sigma = sigma;
    out.trace = train_detail::descend(
        cfg.max_iterations, cfg.tol,
        [&](int, IterStat& st) {
            for (auto& v : om) v = noise.uniform();
            for (auto& v : nu) v = noise.uniform();
            auto ev = congan_loss_eval(data, params, out.sigma, om, nu, true, &krs, &kss);
            if (!std::isfinite(ev.kn) || !std::isfinite(ev.loss_sigma)) return false;
            st.loss = ev.kn;
            st.loss_sigma = ev.loss_sigma;
            st.sigma_x = out.sigma.x;
            st.sigma_y = out.sigma.y;
            st.sigma_z = out.sigma.z;
            detail::add_scaled(params, ev.weight_grad, -cfg.step);
            train_detail::sigma_log_step(out.sigma.x, ev.d_sx, cfg.step);
            train_detail::sigma_log_step(out.sigma.y, ev.d_sy, cfg.step);
            train_detail::sigma_log_step(out.sigma.z, ev.d_sz, cfg.step);
            if (cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0 && cfg.on_checkpoint)
                cfg.on_checkpoint(it + 1, params, out.sigma);
            return true;
        });
    out.params = std::move(params);
    return out;
}

// Affine coordinate maps wrapping a trained generator pair: training runs in
// standardized coordinates, generation maps back.
struct AffineMap {
    double shift = 0.0;
    double scale = 1.0;
    double to_internal(double v) const { return (v - shift) / scale; }
    double to_external(double v) const { return v * scale + shift; }
};

struct TrainedModel {
    GeneratorParams params;
    Bandwidths sigma;          // bandwidths in standardized coordinates
    AffineMap z_in, x_out, y_out;

    double gen_x(double z, double omega) const {
        return x_out.to_external(h_tilde(params, z_in.to_internal(z), omega));
    }
    double gen_y_from_internal(double xhat_internal, double omega, double nu) const {
        return y_out.to_external(g_tilde(params, xhat_internal, omega, nu));
    }
};

inline AffineMap fit_affine(std::span<const double> v) {
    AffineMap m;
    m.shift = mean(v);
    m.scale = sample_sd(v);
    if (!(m.scale > 0.0)) m.scale = 1.0;
    return m;
}

inline Dataset standardize(const Dataset& data, const AffineMap& zm, const AffineMap& xm,
                           const AffineMap& ym) {
    Dataset out = data;
    for (auto& r : out.records) {
        r.x = xm.to_internal(r.x);
        r.y = ym.to_internal(r.y);
        r.z = zm.to_internal(r.z);
    }
    return out;
}

// Synthetic observed sample: shared omega contaminates both generators.
inline Dataset synth_observed(const TrainedModel& m, std::span<const double> zs,
                              std::uint64_t seed) {
    Rng rom = substream(seed, 60);
    Rng rnu = substream(seed, 61);
    Dataset ds;
    ds.records.resize(zs.size());
    for (std::size_t i = 0; i < zs.size(); ++i) {
        Record& r = ds.records[i];
        r.z = zs[i];
        r.omega = rom.uniform();
        r.nu = rnu.uniform();
        double xi = h_tilde(m.params, m.z_in.to_internal(r.z), r.omega);
        r.x = m.x_out.to_external(xi);
        r.y = m.gen_y_from_internal(xi, r.omega, r.nu);
        r.has_latents = true;
    }
    return ds;
}

// Synthetic counterfactual sample: the outcome generator receives an
// independent omega-tilde, severing the contamination path.
inline Dataset synth_cf(const TrainedModel& m, std::span<const double> zs, std::uint64_t seed) {
    Rng rom = substream(seed, 62);
    Rng romt = substream(seed, 63);
    Rng rnu = substream(seed, 64);
    Dataset ds;
    ds.records.resize(zs.size());
    for (std::size_t i = 0; i < zs.size(); ++i) {
        Record& r = ds.records[i];
        r.z = zs[i];
        r.omega = rom.uniform();
        double omt = romt.uniform();
        r.nu = rnu.uniform();
        double xi = h_tilde(m.params, m.z_in.to_internal(r.z), r.omega);
        r.x = m.x_out.to_external(xi);
        r.y = m.gen_y_from_internal(xi, omt, r.nu);
        r.eta = inv_normal_cdf(omt);
        r.has_latents = true;
    }
    return ds;
}

}  // namespace congan
