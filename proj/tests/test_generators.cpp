#include <doctest.h>

#include <cmath>
#include <vector>

#include "congan/generators.hpp"

using namespace congan;

namespace {

// straight-line re-evaluation of the layer recursion, independent of the
// library traversal
double reference_eval(const std::vector<LayerWeights>& stack, std::vector<double> in) {
    for (std::size_t l = 0; l < stack.size(); ++l) {
        const auto& lw = stack[l];
        std::vector<double> out(static_cast<std::size_t>(lw.fan_out));
        for (int r = 0; r < lw.fan_out; ++r) {
            double acc = lw.at(r, lw.fan_in);
            for (int c = 0; c < lw.fan_in; ++c) acc += lw.at(r, c) * in[static_cast<std::size_t>(c)];
            out[static_cast<std::size_t>(r)] = (l + 1 < stack.size()) ? std::tanh(acc) : acc;
        }
        in = out;
    }
    return in[0];
}

}  // namespace

TEST_CASE("zero weights give the zero map") {
    GeneratorParams p;
    p.hidden = {4, 2};
    p.beta = detail::make_stack(2, p.hidden);
    p.theta = detail::make_stack(3, p.hidden);
    CHECK(h_tilde(p, 1.7, 0.3) == 0.0);
    CHECK(g_tilde(p, -2.0, 0.9, 0.1) == 0.0);
}

TEST_CASE("identity wiring passes the first coordinate through") {
    GeneratorParams p;
    p.beta = {LayerWeights{2, 1, {1.0, 0.0, 0.0}}};  // single linear layer, slope (1,0), zero bias
    p.hidden = {};
    for (double z : {-3.0, 0.0, 1.25}) CHECK(h_tilde(p, z, 0.5) == doctest::Approx(z));

    GeneratorParams q;
    q.theta = {LayerWeights{3, 1, {1.0, 0.0, 0.0, 0.0}}};
    for (double x : {-1.0, 0.0, 4.0}) CHECK(g_tilde(q, x, 0.2, 0.8) == doctest::Approx(x));
}

TEST_CASE("random weights match the straight-line oracle") {
    auto p = init_weights({5, 3}, 99);
    Rng rng(3);
    for (int k = 0; k < 50; ++k) {
        double z = rng.uniform(-2, 2), om = rng.uniform(), nu = rng.uniform();
        CHECK(h_tilde(p, z, om) == doctest::Approx(reference_eval(p.beta, {z, om})).epsilon(1e-14));
        CHECK(g_tilde(p, z, om, nu) ==
              doctest::Approx(reference_eval(p.theta, {z, om, nu})).epsilon(1e-14));
    }
}

TEST_CASE("init_weights is reproducible and respects the bound") {
    auto a = init_weights({16, 4, 3, 2}, 1234);
    auto b = init_weights({16, 4, 3, 2}, 1234);
    CHECK(detail::flatten(a) == detail::flatten(b));
    for (const auto& stack : {a.beta, a.theta})
        for (const auto& l : stack) {
            double bound = std::sqrt(6.0 / (l.fan_in + l.fan_out));
            for (int r = 0; r < l.fan_out; ++r) {
                for (int c = 0; c < l.fan_in; ++c) CHECK(std::abs(l.at(r, c)) <= bound);
                CHECK(l.at(r, l.fan_in) == 0.0);
            }
        }
}

TEST_CASE("drawn weights have near-zero empirical mean") {
    // accumulate ~1e4 draws over multiple seeds
    double sum = 0.0, sum2 = 0.0;
    std::size_t n = 0;
    double bound = 0.0;
    for (int s = 0; s < 40; ++s) {
        auto p = init_weights({16, 4, 3, 2}, 5000 + static_cast<std::uint64_t>(s));
        for (const auto& l : p.beta)
            for (int r = 0; r < l.fan_out; ++r)
                for (int c = 0; c < l.fan_in; ++c) {
                    double w = l.at(r, c);
                    sum += w;
                    sum2 += w * w;
                    ++n;
                    bound = std::max(bound, std::sqrt(6.0 / (l.fan_in + l.fan_out)));
                }
    }
    double m = sum / static_cast<double>(n);
    double sd = std::sqrt(sum2 / static_cast<double>(n) - m * m);
    CHECK(std::abs(m) < 3.0 * sd / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("sequential contamination: omega reaches both outputs, nu only the outcome") {
    auto p = init_weights({6, 3}, 42);
    double z = 0.4;
    double x1 = h_tilde(p, z, 0.2), x2 = h_tilde(p, z, 0.9);
    CHECK(x1 != x2);  // omega moves the action
    double y1 = g_tilde(p, x1, 0.2, 0.5), y2 = g_tilde(p, x2, 0.9, 0.5);
    CHECK(y1 != y2);  // and, through both arguments, the outcome
    double y3 = g_tilde(p, x1, 0.2, 0.51);
    CHECK(y3 != y1);                               // nu moves the outcome
    CHECK(h_tilde(p, z, 0.2) == x1);               // but never the action
}

TEST_CASE("tanh hidden layers keep huge inputs finite") {
    auto p = init_weights({8, 4}, 7);
    for (double z : {-1e10, -1e4, 1e4, 1e10}) {
        double v = h_tilde(p, z, 0.5);
        CHECK(std::isfinite(v));
    }
}

TEST_CASE("pair tape reproduces plain evaluation and its gradients match finite differences") {
    auto p = init_weights({4, 2}, 11);
    PairTape pt(p);
    auto ws = pt.tape().make_workspace();
    pt.bind_weights(p, ws);
    ws.value[static_cast<std::size_t>(pt.ax_node())] = 0.0;
    ws.value[static_cast<std::size_t>(pt.ay_node())] = 0.0;
    ws.value[static_cast<std::size_t>(pt.z_node())] = 0.37;
    ws.value[static_cast<std::size_t>(pt.omega_node())] = 0.62;
    ws.value[static_cast<std::size_t>(pt.nu_node())] = 0.18;
    pt.tape().forward(ws);
    double xh = ws.value[static_cast<std::size_t>(pt.xhat_node())];
    double yh = ws.value[static_cast<std::size_t>(pt.yhat_node())];
    CHECK(xh == doctest::Approx(h_tilde(p, 0.37, 0.62)).epsilon(1e-14));
    CHECK(yh == doctest::Approx(g_tilde(p, xh, 0.62, 0.18)).epsilon(1e-14));

    // end-to-end weight gradient of 2*Xhat - 3*Yhat vs central differences
    std::vector<double> grad(p.n_weights(), 0.0);
    pt.tape().zero_adjoints(ws);
    ws.adjoint[static_cast<std::size_t>(pt.xhat_node())] = 2.0;
    ws.adjoint[static_cast<std::size_t>(pt.yhat_node())] = -3.0;
    pt.tape().backward(ws);
    pt.accumulate_weight_grad(ws, grad);

    auto flat = detail::flatten(p);
    Rng pick(5);
    for (int k = 0; k < 30; ++k) {
        std::size_t i = pick.raw() % flat.size();
        const double h = 1e-6;
        auto eval = [&](double delta) {
            auto q = p;
            auto f = flat;
            f[i] += delta;
            detail::unflatten(q, f);
            double xv = h_tilde(q, 0.37, 0.62);
            return 2.0 * xv - 3.0 * g_tilde(q, xv, 0.62, 0.18);
        };
        double fd = (eval(h) - eval(-h)) / (2.0 * h);
        CHECK(std::abs(grad[i] - fd) / std::max(1.0, std::abs(fd)) < 1e-5);
    }
}
