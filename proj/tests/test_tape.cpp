// Finite-difference gradient checks for every tape operation.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "neuroddaf/rng.hpp"
#include "neuroddaf/tape.hpp"

#include <cmath>
#include <functional>
#include <vector>

using namespace neuroddaf;

namespace {

Tensor random_tensor(Rng& rng, int r, int c, double scale = 1.0, double shift = 0.0) {
    Tensor t(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) t(i, j) = shift + scale * rng.normal();
    return t;
}

// Builds the graph with `build` on fresh leaves bound to `inputs`, reduces the
// result with sum() to a scalar, and checks every analytic input gradient
// against central differences.
void check_gradients(const std::vector<Tensor>& inputs,
                     const std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>& build,
                     double tol = 1e-6, double h = 1e-6) {
    auto value_at = [&](const std::vector<Tensor>& in) {
        ad::Tape tape;
        std::vector<ad::Var> leaves;
        leaves.reserve(in.size());
        for (const auto& t : in) leaves.push_back(tape.leaf(t));
        ad::Var out = build(tape, leaves);
        return tape.val(tape.sum(out))(0, 0);
    };

    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
    ad::Var out = build(tape, leaves);
    ad::Var loss = tape.sum(out);
    tape.backward(loss);

    for (std::size_t p = 0; p < inputs.size(); ++p) {
        const Tensor& g = tape.grad(leaves[p]);
        REQUIRE(g.rows() == inputs[p].rows());
        REQUIRE(g.cols() == inputs[p].cols());
        for (int i = 0; i < inputs[p].rows(); ++i)
            for (int j = 0; j < inputs[p].cols(); ++j) {
                std::vector<Tensor> plus = inputs, minus = inputs;
                plus[p](i, j) += h;
                minus[p](i, j) -= h;
                double fd = (value_at(plus) - value_at(minus)) / (2.0 * h);
                double scale = std::max(1.0, std::abs(fd));
                INFO("input ", p, " entry (", i, ",", j, "): analytic ", g(i, j), " fd ", fd);
                CHECK(std::abs(g(i, j) - fd) / scale < tol);
            }
    }
}

} // namespace

TEST_CASE("arithmetic op gradients") {
    Rng rng(1);
    Tensor a = random_tensor(rng, 3, 4), b = random_tensor(rng, 3, 4);
    Tensor c = random_tensor(rng, 3, 4);
    check_gradients({a, b}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
        return t.add(v[0], v[1]);
    });
    check_gradients({a, b, c}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
        return t.add3(v[0], v[1], v[2]);
    });
    check_gradients({a, b}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
        return t.sub(v[0], v[1]);
    });
    check_gradients({a, b}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
        return t.mul(v[0], v[1]);
    });
    Tensor bpos = random_tensor(rng, 3, 4, 0.3, 2.0); // bounded away from zero
    check_gradients({a, bpos}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
        return t.div(v[0], v[1]);
    });
    check_gradients({a}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
        return t.neg(v[0]);
    });
    check_gradients({a}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
        return t.scale(v[0], -2.5);
    });
    check_gradients({a}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
        return t.add_scalar(v[0], 3.0);
    });
    check_gradients({a, b}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
        return t.axpy(0.7, v[0], v[1]);
    });
    Tensor s = random_tensor(rng, 1, 1);
    check_gradients({s, a}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
        return t.scalar_mul(v[0], v[1]);
    });
}

TEST_CASE("matrix product gradients") {
    Rng rng(2);
    Tensor a = random_tensor(rng, 3, 4), b = random_tensor(rng, 4, 2);
    Tensor bias = random_tensor(rng, 1, 2);
    check_gradients({a, b}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
        return t.matmul(v[0], v[1]);
    });
    Tensor ca = random_tensor(rng, 5, 3);
    check_gradients({a}, [ca](ad::Tape& t, const std::vector<ad::Var>& v) {
        return t.matmul_cl(ca, v[0]);
    });
    Tensor cb = random_tensor(rng, 4, 6);
    check_gradients({a}, [cb](ad::Tape& t, const std::vector<ad::Var>& v) {
        return t.matmul_cr(v[0], cb);
    });
    check_gradients({a, b, bias}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
        return t.linear(v[0], v[1], v[2]);
    });
    check_gradients({random_tensor(rng, 3, 2), bias},
                    [](ad::Tape& t, const std::vector<ad::Var>& v) {
                        return t.broadcast_add_row(v[0], v[1]);
                    });
    Tensor u = random_tensor(rng, 3, 1), w = random_tensor(rng, 5, 1);
    check_gradients({u, w}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
        return t.outer_add(v[0], v[1]);
    });
}

TEST_CASE("elementwise function gradients") {
    Rng rng(3);
    Tensor a = random_tensor(rng, 2, 5);
    auto unary = [&](ad::Var (ad::Tape::*op)(ad::Var), const Tensor& in, double tol = 1e-6) {
        check_gradients({in}, [op](ad::Tape& t, const std::vector<ad::Var>& v) {
            return (t.*op)(v[0]);
        }, tol);
    };
    unary(&ad::Tape::tanh_, a);
    unary(&ad::Tape::sigmoid_, a);
    unary(&ad::Tape::softplus_, a);
    unary(&ad::Tape::exp_, a);
    unary(&ad::Tape::square_, a);
    Tensor pos = random_tensor(rng, 2, 5, 0.4, 2.0);
    unary(&ad::Tape::log_, pos);
    unary(&ad::Tape::sqrt_, pos);
    unary(&ad::Tape::lgamma_, pos, 1e-5);
    Tensor away_from_zero = random_tensor(rng, 2, 5, 0.2, 1.0);
    unary(&ad::Tape::abs_, away_from_zero);
    check_gradients({away_from_zero}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
        return t.leaky_relu(v[0], 0.2);
    });
    Tensor mask = random_tensor(rng, 2, 5);
    check_gradients({a}, [mask](ad::Tape& t, const std::vector<ad::Var>& v) {
        return t.mul_const(v[0], mask);
    });
    check_gradients({a}, [mask](ad::Tape& t, const std::vector<ad::Var>& v) {
        return t.add_const(v[0], mask);
    });
}

TEST_CASE("shape op gradients") {
    Rng rng(4);
    Tensor a = random_tensor(rng, 3, 2), b = random_tensor(rng, 3, 4);
    check_gradients({a, b}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
        return t.concat_cols({v[0], v[1]});
    });
    check_gradients({b}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
        return t.square_(t.slice_cols(v[0], 1, 3));
    });
    check_gradients({b}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
        return t.square_(t.reshape(v[0], 4, 3));
    });
}

TEST_CASE("masked softmax gradients and properties") {
    Rng rng(5);
    Tensor logits = random_tensor(rng, 3, 4);
    Tensor mask(3, 4);
    mask(0, 0) = mask(0, 2) = 1;
    mask(1, 1) = mask(1, 2) = mask(1, 3) = 1;
    mask(2, 0) = 1;
    {
        ad::Tape tape;
        ad::Var out = tape.row_softmax_masked(tape.leaf(logits), mask);
        const Tensor& o = tape.val(out);
        for (int i = 0; i < 3; ++i) {
            double row_sum = 0.0;
            for (int j = 0; j < 4; ++j) {
                if (mask(i, j) == 0.0) CHECK(o(i, j) == 0.0);
                row_sum += o(i, j);
            }
            CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    // Weighted downstream use so the gradient is not identically zero.
    Tensor weights = random_tensor(rng, 3, 4);
    check_gradients({logits}, [mask, weights](ad::Tape& t, const std::vector<ad::Var>& v) {
        return t.mul_const(t.row_softmax_masked(v[0], mask), weights);
    });
}

TEST_CASE("reduction gradients") {
    Rng rng(6);
    Tensor a = random_tensor(rng, 4, 3);
    check_gradients({a}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
        return t.sum(v[0]);
    });
    check_gradients({a}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
        return t.mean(v[0]);
    });
}

TEST_CASE("composite graph with shared subexpressions") {
    Rng rng(7);
    Tensor x = random_tensor(rng, 2, 3), w = random_tensor(rng, 3, 3);
    Tensor bias = random_tensor(rng, 1, 3);
    check_gradients({x, w, bias}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
        ad::Var h = t.tanh_(t.linear(v[0], v[1], v[2]));
        ad::Var g = t.sigmoid_(h);
        return t.mul(h, g); // h used twice: gradient accumulation path
    }, 1e-5);
}

TEST_CASE("digamma matches the lgamma derivative") {
    for (double x : {0.5, 1.0, 2.0, 3.7, 10.0}) {
        double h = 1e-6;
        double fd = (std::lgamma(x + h) - std::lgamma(x - h)) / (2.0 * h);
        CHECK(ad::digamma(x) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("backward accumulates over reuse and clears between runs") {
    ad::Tape tape;
    Tensor x(1, 1);
    x(0, 0) = 2.0;
    ad::Var v = tape.leaf(x);
    ad::Var y = tape.mul(v, v); // d/dx x^2 = 2x = 4
    tape.backward(tape.sum(y));
    CHECK(tape.grad(v)(0, 0) == doctest::Approx(4.0));
    tape.clear();
    CHECK(tape.size() == 0);
}
