#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace congan::ad {

enum class Op : std::uint8_t { Constant, Input, Add, Mul, Div, Neg, Exp, Log, Tanh, Pow };

// One scalar node. `a`/`b` index parents (which always precede the node),
// `aux` holds the constant value for Constant nodes and the fixed real
// exponent for Pow nodes.
struct Node {
    Op op;
    std::int32_t a = -1;
    std::int32_t b = -1;
    double aux = 0.0;
};

struct NonFiniteError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Append-only computation graph over scalars. Build once, then evaluate many
// times through a Workspace; forward caches every node value, backward
// accumulates every adjoint in one reverse sweep.
class Tape {
  public:
    int constant(double v) { return push({Op::Constant, -1, -1, v}); }

    int input(const std::string& name) {
        auto it = slots_.find(name);
        if (it != slots_.end()) return it->second;
        int id = push({Op::Input, -1, -1, 0.0});
        slots_.emplace(name, id);
        input_ids_.push_back(id);
        return id;
    }

    int add(int x, int y) { return push({Op::Add, x, y, 0.0}); }
    int sub(int x, int y) { return add(x, neg(y)); }
    int mul(int x, int y) { return push({Op::Mul, x, y, 0.0}); }
    int div(int x, int y) { return push({Op::Div, x, y, 0.0}); }
    int neg(int x) { return push({Op::Neg, x, -1, 0.0}); }
    int exp(int x) { return push({Op::Exp, x, -1, 0.0}); }
    int log(int x) { return push({Op::Log, x, -1, 0.0}); }
    int tanh(int x) { return push({Op::Tanh, x, -1, 0.0}); }
    // pow is restricted to fixed real exponents
    int pow(int x, double exponent) { return push({Op::Pow, x, -1, exponent}); }

    void set_output(int id) { output_ = id; }
    int output() const { return output_; }

    std::size_t size() const { return nodes_.size(); }
    const std::vector<int>& input_ids() const { return input_ids_; }

    int slot(const std::string& name) const {
        auto it = slots_.find(name);
        if (it == slots_.end()) throw std::invalid_argument("tape: unknown input slot " + name);
        return it->second;
    }
    const std::map<std::string, int>& slots() const { return slots_; }

    struct Workspace {
        std::vector<double> value;
        std::vector<double> adjoint;
    };

    Workspace make_workspace() const {
        return Workspace{std::vector<double>(nodes_.size(), 0.0),
                         std::vector<double>(nodes_.size(), 0.0)};
    }

    void forward(Workspace& ws) const {
        auto& v = ws.value;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const Node& n = nodes_[i];
            switch (n.op) {
                case Op::Constant: v[i] = n.aux; break;
                case Op::Input: break;  // bound by caller
                case Op::Add: v[i] = v[n.a] + v[n.b]; break;
                case Op::Mul: v[i] = v[n.a] * v[n.b]; break;
                case Op::Div: v[i] = v[n.a] / v[n.b]; break;
                case Op::Neg: v[i] = -v[n.a]; break;
                case Op::Exp: v[i] = std::exp(v[n.a]); break;
                case Op::Log: v[i] = std::log(v[n.a]); break;
                case Op::Tanh: v[i] = std::tanh(v[n.a]); break;
                case Op::Pow: v[i] = std::pow(v[n.a], n.aux); break;
            }
            if (!std::isfinite(v[i]))
                throw NonFiniteError("tape forward: non-finite value at node " + std::to_string(i));
        }
    }

    // Reverse sweep; seed must already be placed on the adjoint of the node(s)
    // of interest (usually just the output).
    void backward(Workspace& ws) const {
        const auto& v = ws.value;
        auto& g = ws.adjoint;
        for (std::size_t k = nodes_.size(); k-- > 0;) {
            const Node& n = nodes_[k];
            const double gk = g[k];
            if (gk == 0.0) continue;
            switch (n.op) {
                case Op::Constant:
                case Op::Input: break;
                case Op::Add:
                    g[n.a] += gk;
                    g[n.b] += gk;
                    break;
                case Op::Mul:
                    g[n.a] += gk * v[n.b];
                    g[n.b] += gk * v[n.a];
                    break;
                case Op::Div:
                    g[n.a] += gk / v[n.b];
                    g[n.b] -= gk * v[k] / v[n.b];
                    break;
                case Op::Neg: g[n.a] -= gk; break;
                case Op::Exp: g[n.a] += gk * v[k]; break;
                case Op::Log: g[n.a] += gk / v[n.a]; break;
                case Op::Tanh: g[n.a] += gk * (1.0 - v[k] * v[k]); break;
                case Op::Pow: g[n.a] += gk * n.aux * std::pow(v[n.a], n.aux - 1.0); break;
            }
        }
    }

    void zero_adjoints(Workspace& ws) const { std::fill(ws.adjoint.begin(), ws.adjoint.end(), 0.0); }

  private:
    int push(Node n) {
        if ((n.a >= 0 && n.a >= static_cast<int>(nodes_.size())) ||
            (n.b >= 0 && n.b >= static_cast<int>(nodes_.size())))
            throw std::invalid_argument("tape: parent index out of range");
        nodes_.push_back(n);
        return static_cast<int>(nodes_.size()) - 1;
    }

    std::vector<Node> nodes_;
    std::map<std::string, int> slots_;
    std::vector<int> input_ids_;
    int output_ = -1;
};

inline void bind_inputs(const Tape& tape, Tape::Workspace& ws,
                        const std::map<std::string, double>& inputs) {
    for (const auto& [name, id] : tape.slots()) {
        auto it = inputs.find(name);
        if (it == inputs.end()) throw std::invalid_argument("tape: unbound input slot " + name);
        ws.value[static_cast<std::size_t>(id)] = it->second;
    }
}

inline double forward(const Tape& tape, const std::map<std::string, double>& inputs) {
    if (tape.output() < 0) throw std::invalid_argument("tape: no output set");
    auto ws = tape.make_workspace();
    bind_inputs(tape, ws, inputs);
    tape.forward(ws);
    return ws.value[static_cast<std::size_t>(tape.output())];
}

// Exact reverse-mode chain-rule derivatives of the output with respect to
// every bound input.
inline std::map<std::string, double> gradient(const Tape& tape,
                                              const std::map<std::string, double>& inputs) {
    if (tape.output() < 0) throw std::invalid_argument("tape: no output set");
    auto ws = tape.make_workspace();
    bind_inputs(tape, ws, inputs);
    tape.forward(ws);
    ws.adjoint[static_cast<std::size_t>(tape.output())] = 1.0;
    tape.backward(ws);
    std::map<std::string, double> out;
    for (const auto& [name, id] : tape.slots()) out[name] = ws.adjoint[static_cast<std::size_t>(id)];
    return out;
}

}  // namespace congan::ad
