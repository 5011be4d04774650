#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "congan/autodiff.hpp"
#include "congan/rng.hpp"

namespace congan {

// Slopes plus a trailing bias column per output row: w is row-major
// fan_out x (fan_in + 1), the augmented constant-1 input slot carrying the
// intercepts.
struct LayerWeights {
    int fan_in = 0;
    int fan_out = 0;
    std::vector<double> w;

    double at(int row, int col) const { return w[static_cast<std::size_t>(row * (fan_in + 1) + col)]; }
    double& at(int row, int col) { return w[static_cast<std::size_t>(row * (fan_in + 1) + col)]; }
};

// The two sequential generator stacks: beta drives the action generator
// (inputs z, omega), theta the outcome generator (inputs x, omega, nu).
// Hidden layers are tanh, the output layer is identity.
struct GeneratorParams {
    std::vector<LayerWeights> beta;
    std::vector<LayerWeights> theta;
    std::vector<int> hidden;

    std::size_t n_weights() const {
        std::size_t n = 0;
        for (const auto& l : beta) n += l.w.size();
        for (const auto& l : theta) n += l.w.size();
        return n;
    }
};

namespace detail {

inline std::vector<LayerWeights> make_stack(int input_width, std::span<const int> hidden) {
    std::vector<int> widths;
    widths.push_back(input_width);
    for (int h : hidden) widths.push_back(h);
    widths.push_back(1);
    std::vector<LayerWeights> stack;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        LayerWeights lw;
        lw.fan_in = widths[l];
        lw.fan_out = widths[l + 1];
        lw.w.assign(static_cast<std::size_t>(lw.fan_out * (lw.fan_in + 1)), 0.0);
        stack.push_back(std::move(lw));
    }
    return stack;
}

inline void check_stack(const std::vector<LayerWeights>& stack, int input_width, const char* which) {
    if (stack.empty()) throw std::invalid_argument(std::string(which) + ": empty layer stack");
    int expect = input_width;
    for (const auto& l : stack) {
        if (l.fan_in != expect) throw std::invalid_argument(std::string(which) + ": layer shape mismatch");
        if (l.w.size() != static_cast<std::size_t>(l.fan_out * (l.fan_in + 1)))
            throw std::invalid_argument(std::string(which) + ": weight buffer size mismatch");
        expect = l.fan_out;
    }
    if (expect != 1) throw std::invalid_argument(std::string(which) + ": output width must be 1");
}

inline double eval_stack(const std::vector<LayerWeights>& stack, std::span<const double> input) {
    std::vector<double> cur(input.begin(), input.end());
    std::vector<double> next;
    for (std::size_t l = 0; l < stack.size(); ++l) {
        const auto& lw = stack[l];
        next.assign(static_cast<std::size_t>(lw.fan_out), 0.0);
        for (int r = 0; r < lw.fan_out; ++r) {
            double acc = lw.at(r, lw.fan_in);  // bias
            for (int c = 0; c < lw.fan_in; ++c) acc += lw.at(r, c) * cur[static_cast<std::size_t>(c)];
            next[static_cast<std::size_t>(r)] = (l + 1 < stack.size()) ? std::tanh(acc) : acc;
        }
        cur.swap(next);
    }
    return cur[0];
}

}  // namespace detail

inline double h_tilde(const GeneratorParams& p, double z, double omega) {
    detail::check_stack(p.beta, 2, "h_tilde");
    const double in[2] = {z, omega};
    return detail::eval_stack(p.beta, in);
}

inline double g_tilde(const GeneratorParams& p, double x, double omega, double nu) {
    detail::check_stack(p.theta, 3, "g_tilde");
    const double in[3] = {x, omega, nu};
    return detail::eval_stack(p.theta, in);
}

// Uniform +-sqrt(6/(fan_in+fan_out)) slopes, zero intercepts.
inline GeneratorParams init_weights(std::vector<int> hidden, std::uint64_t seed) {
    if (hidden.empty()) throw std::invalid_argument("init_weights: hidden sizes must be nonempty");
    for (int h : hidden)
        if (h < 1) throw std::invalid_argument("init_weights: hidden sizes must be positive");
    GeneratorParams p;
    p.hidden = hidden;
    p.beta = detail::make_stack(2, hidden);
    p.theta = detail::make_stack(3, hidden);
    Rng rng = substream(seed, 0x67656e);
    auto fill = [&](std::vector<LayerWeights>& stack) {
        for (auto& l : stack) {
            double bound = std::sqrt(6.0 / static_cast<double>(l.fan_in + l.fan_out));
            for (int r = 0; r < l.fan_out; ++r) {
                for (int c = 0; c < l.fan_in; ++c) l.at(r, c) = rng.uniform(-bound, bound);
                l.at(r, l.fan_in) = 0.0;
            }
        }
    };
    fill(p.beta);
    fill(p.theta);
    return p;
}

// Tape over the sequential pair. Slots: data inputs z/omega/nu, one slot per
// weight ("b<layer>_<row>_<col>", "t<layer>_<row>_<col>") and two adjoint
// seeds ax/ay so one backward pass yields d(ax*Xhat + ay*Yhat)/dw for all w.
class PairTape {
  public:
    explicit PairTape(const GeneratorParams& shape) {
        detail::check_stack(shape.beta, 2, "PairTape");
        detail::check_stack(shape.theta, 3, "PairTape");
        z_ = tape_.input("z");
        omega_ = tape_.input("omega");
        nu_ = tape_.input("nu");
        std::vector<int> hin = {z_, omega_};
        xhat_ = build_stack(shape.beta, hin, 'b');
        std::vector<int> gin = {xhat_, omega_, nu_};
        yhat_ = build_stack(shape.theta, gin, 't');
        int ax = tape_.input("ax");
        int ay = tape_.input("ay");
        tape_.set_output(tape_.add(tape_.mul(ax, xhat_), tape_.mul(ay, yhat_)));
        ax_ = ax;
        ay_ = ay;
    }

    const ad::Tape& tape() const { return tape_; }
    int xhat_node() const { return xhat_; }
    int yhat_node() const { return yhat_; }
    int z_node() const { return z_; }
    int omega_node() const { return omega_; }
    int nu_node() const { return nu_; }
    int ax_node() const { return ax_; }
    int ay_node() const { return ay_; }
    const std::vector<int>& weight_nodes() const { return weight_nodes_; }

    // Writes the current parameter values into a workspace.
    void bind_weights(const GeneratorParams& p, ad::Tape::Workspace& ws) const {
        std::size_t k = 0;
        for (const auto& l : p.beta)
            for (double w : l.w) ws.value[static_cast<std::size_t>(weight_nodes_[k++])] = w;
        for (const auto& l : p.theta)
            for (double w : l.w) ws.value[static_cast<std::size_t>(weight_nodes_[k++])] = w;
    }

    // Adds the weight adjoints from ws into grad (flat, beta then theta).
    void accumulate_weight_grad(const ad::Tape::Workspace& ws, std::span<double> grad) const {
        for (std::size_t k = 0; k < weight_nodes_.size(); ++k)
            grad[k] += ws.adjoint[static_cast<std::size_t>(weight_nodes_[k])];
    }

  private:
    int build_stack(const std::vector<LayerWeights>& stack, std::vector<int> input, char prefix) {
        std::vector<int> cur = std::move(input);
        std::vector<int> next;
        for (std::size_t l = 0; l < stack.size(); ++l) {
            const auto& lw = stack[l];
            next.clear();
            for (int r = 0; r < lw.fan_out; ++r) {
                // slot order mirrors LayerWeights::w: slopes, then the bias column
                std::string base = std::string(1, prefix) + std::to_string(l) + "_" + std::to_string(r) + "_";
                std::vector<int> slope(static_cast<std::size_t>(lw.fan_in));
                for (int c = 0; c < lw.fan_in; ++c) {
                    slope[static_cast<std::size_t>(c)] = tape_.input(base + std::to_string(c));
                    weight_nodes_.push_back(slope[static_cast<std::size_t>(c)]);
                }
                int acc = tape_.input(base + std::to_string(lw.fan_in));
                weight_nodes_.push_back(acc);
                for (int c = 0; c < lw.fan_in; ++c)
                    acc = tape_.add(acc, tape_.mul(slope[static_cast<std::size_t>(c)], cur[static_cast<std::size_t>(c)]));
                next.push_back(l + 1 < stack.size() ? tape_.tanh(acc) : acc);
            }
            cur = next;
        }
        return cur[0];
    }

    ad::Tape tape_;
    std::vector<int> weight_nodes_;
    int z_ = -1, omega_ = -1, nu_ = -1, xhat_ = -1, yhat_ = -1, ax_ = -1, ay_ = -1;
};

namespace detail {

// Flat views used by the gradient-descent updates.
inline void add_scaled(GeneratorParams& p, std::span<const double> dir, double scale) {
    std::size_t k = 0;
    for (auto& l : p.beta)
        for (auto& w : l.w) w += scale * dir[k++];
    for (auto& l : p.theta)
        for (auto& w : l.w) w += scale * dir[k++];
}

inline std::vector<double> flatten(const GeneratorParams& p) {
    std::vector<double> out;
    out.reserve(p.n_weights());
    for (const auto& l : p.beta) out.insert(out.end(), l.w.begin(), l.w.end());
    for (const auto& l : p.theta) out.insert(out.end(), l.w.begin(), l.w.end());
    return out;
}

inline void unflatten(GeneratorParams& p, std::span<const double> flat) {
    std::size_t k = 0;
    for (auto& l : p.beta)
        for (auto& w : l.w) w = flat[k++];
    for (auto& l : p.theta)
        for (auto& w : l.w) w = flat[k++];
}

}  // namespace detail

}  // namespace congan
