#include <doctest.h>

#include <cmath>
#include <functional>
#include <map>

#include "congan/autodiff.hpp"
#include "congan/rng.hpp"

using namespace congan;

namespace {

// central finite differences, the independent oracle for every gradient here
double central_fd(const std::function<double(double)>& f, double x, double h = 1e-5) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

double rel_err(double got, double want) {
    return std::abs(got - want) / std::max(1.0, std::abs(want));
}

}  // namespace

TEST_CASE("forward evaluates simple expressions") {
    ad::Tape t;
    int x = t.input("x");
    t.set_output(t.mul(x, x));
    CHECK(ad::forward(t, {{"x", 3.0}}) == doctest::Approx(9.0));

    ad::Tape t2;
    int u = t2.input("x");
    t2.set_output(t2.tanh(u));
    CHECK(ad::forward(t2, {{"x", 0.0}}) == doctest::Approx(0.0));
}

TEST_CASE("forward matches a hand evaluation of exp(-x^2/(2 sigma^2))/sigma") {
    ad::Tape t;
    int x = t.input("x");
    int s = t.input("sigma");
    int x2 = t.mul(x, x);
    int s2 = t.mul(s, s);
    int arg = t.neg(t.div(x2, t.mul(t.constant(2.0), s2)));
    t.set_output(t.div(t.exp(arg), s));
    double got = ad::forward(t, {{"x", 1.0}, {"sigma", 2.0}});
    double want = std::exp(-1.0 / 8.0) / 2.0;
    CHECK(got == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("gradient of x^2 and tanh at fixed points") {
    ad::Tape t;
    int x = t.input("x");
    t.set_output(t.mul(x, x));
    auto g = ad::gradient(t, {{"x", 3.0}});
    CHECK(g["x"] == doctest::Approx(6.0));

    ad::Tape t2;
    int u = t2.input("x");
    t2.set_output(t2.tanh(u));
    auto g2 = ad::gradient(t2, {{"x", 0.0}});
    CHECK(g2["x"] == doctest::Approx(1.0));
}

TEST_CASE("every op matches central finite differences on random points") {
    // composite of {exp, log, tanh, *, +, /, pow, neg} probed at 100 points
    ad::Tape t;
    int x = t.input("x");
    int y = t.input("y");
    int e = t.exp(t.mul(t.constant(0.3), x));
    int lg = t.log(t.add(t.constant(3.5), t.tanh(y)));
    int p = t.pow(t.add(t.mul(x, x), t.constant(1.0)), 0.75);
    int r = t.div(t.add(e, lg), t.add(p, t.constant(0.5)));
    t.set_output(t.add(r, t.neg(t.mul(x, y))));

    Rng rng(7);
    for (int k = 0; k < 100; ++k) {
        double xv = rng.uniform(-3.0, 3.0);
        double yv = rng.uniform(-3.0, 3.0);
        auto g = ad::gradient(t, {{"x", xv}, {"y", yv}});
        auto fx = [&](double v) { return ad::forward(t, {{"x", v}, {"y", yv}}); };
        auto fy = [&](double v) { return ad::forward(t, {{"x", xv}, {"y", v}}); };
        CHECK(rel_err(g["x"], central_fd(fx, xv)) < 1e-5);
        CHECK(rel_err(g["y"], central_fd(fy, yv)) < 1e-5);
    }
}

TEST_CASE("gradient of a sum of tapes equals the sum of gradients") {
    auto build = [](double c) {
        ad::Tape t;
        int x = t.input("x");
        t.set_output(t.mul(t.constant(c), t.tanh(x)));
        return t;
    };
    ad::Tape a = build(2.0), b = build(-0.7);
    ad::Tape sum;
    int x = sum.input("x");
    sum.set_output(sum.add(sum.mul(sum.constant(2.0), sum.tanh(x)),
                           sum.mul(sum.constant(-0.7), sum.tanh(x))));
    for (double v : {-1.3, 0.2, 2.4}) {
        double ga = ad::gradient(a, {{"x", v}})["x"];
        double gb = ad::gradient(b, {{"x", v}})["x"];
        double gs = ad::gradient(sum, {{"x", v}})["x"];
        CHECK(gs == doctest::Approx(ga + gb).epsilon(1e-14));
    }
}

TEST_CASE("re-running forward+backward is bit identical") {
    ad::Tape t;
    int x = t.input("x");
    t.set_output(t.exp(t.tanh(t.mul(x, t.constant(1.7)))));
    double v1 = ad::forward(t, {{"x", 0.37}});
    double g1 = ad::gradient(t, {{"x", 0.37}})["x"];
    double v2 = ad::forward(t, {{"x", 0.37}});
    double g2 = ad::gradient(t, {{"x", 0.37}})["x"];
    CHECK(v1 == v2);
    CHECK(g1 == g2);
}

TEST_CASE("unbound input slot and non-finite guard raise") {
    ad::Tape t;
    int x = t.input("x");
    t.set_output(t.log(x));
    CHECK_THROWS_AS((void)ad::forward(t, {}), std::invalid_argument);
    CHECK_THROWS_AS((void)ad::forward(t, {{"x", -1.0}}), ad::NonFiniteError);
}
