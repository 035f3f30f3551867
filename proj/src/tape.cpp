#include "neuroddaf/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace neuroddaf::ad {

int Tape::alloc(Tensor&& v) {
    Node n;
    n.grad.resize(v.rows(), v.cols());
    n.value = std::move(v);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::leaf(const Tensor& t) {
    Tensor copy = t;
    return {alloc(std::move(copy))};
}

Var Tape::leaf(Tensor&& t) { return {alloc(std::move(t))}; }

void Tape::clear() { nodes_.clear(); }

Var Tape::add(Var a, Var b) {
    Tensor out = v(a.idx) + v(b.idx);
    int o = alloc(std::move(out));
    nodes_[o].back = [this, a, b, o] {
        const Tensor& go = g(o);
        kernels::add(g(a.idx).data(), go.data(), g(a.idx).data(), go.size());
        kernels::add(g(b.idx).data(), go.data(), g(b.idx).data(), go.size());
    };
    return {o};
}

Var Tape::add3(Var a, Var b, Var c) { return add(add(a, b), c); }

Var Tape::sub(Var a, Var b) {
    Tensor out = v(a.idx) - v(b.idx);
    int o = alloc(std::move(out));
    nodes_[o].back = [this, a, b, o] {
        const Tensor& go = g(o);
        kernels::add(g(a.idx).data(), go.data(), g(a.idx).data(), go.size());
        kernels::sub(g(b.idx).data(), go.data(), g(b.idx).data(), go.size());
    };
    return {o};
}

Var Tape::mul(Var a, Var b) {
    const Tensor& va = v(a.idx);
    const Tensor& vb = v(b.idx);
    Tensor out(va.rows(), va.cols());
    kernels::mul(va.data(), vb.data(), out.data(), out.size());
    int o = alloc(std::move(out));
    nodes_[o].back = [this, a, b, o] {
        const Tensor& go = g(o);
        kernels::fmadd(go.data(), v(b.idx).data(), g(a.idx).data(), go.size());
        kernels::fmadd(go.data(), v(a.idx).data(), g(b.idx).data(), go.size());
    };
    return {o};
}

Var Tape::div(Var a, Var b) {
    const Tensor& va = v(a.idx);
    const Tensor& vb = v(b.idx);
    Tensor out(va.rows(), va.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] / vb[i];
    int o = alloc(std::move(out));
    nodes_[o].back = [this, a, b, o] {
        const Tensor& go = g(o);
        const Tensor& vo = v(o);
        Tensor& ga = g(a.idx);
        Tensor& gb = g(b.idx);
        const Tensor& vb2 = v(b.idx);
        for (std::size_t i = 0; i < go.size(); ++i) {
            ga[i] += go[i] / vb2[i];
            gb[i] -= go[i] * vo[i] / vb2[i];
        }
    };
    return {o};
}

Var Tape::neg(Var a) { return scale(a, -1.0); }

Var Tape::scale(Var a, double s) {
    Tensor out = s * v(a.idx);
    int o = alloc(std::move(out));
    nodes_[o].back = [this, a, o, s] {
        kernels::axpy(s, g(o).data(), g(a.idx).data(), g(o).size());
    };
    return {o};
}

Var Tape::add_scalar(Var a, double s) {
    Tensor out = v(a.idx);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += s;
    int o = alloc(std::move(out));
    nodes_[o].back = [this, a, o] {
        kernels::add(g(a.idx).data(), g(o).data(), g(a.idx).data(), g(o).size());
    };
    return {o};
}

Var Tape::axpy(double s, Var x, Var y) {
    Tensor out = v(y.idx);
    kernels::axpy(s, v(x.idx).data(), out.data(), out.size());
    int o = alloc(std::move(out));
    nodes_[o].back = [this, x, y, o, s] {
        const Tensor& go = g(o);
        kernels::axpy(s, go.data(), g(x.idx).data(), go.size());
        kernels::add(g(y.idx).data(), go.data(), g(y.idx).data(), go.size());
    };
    return {o};
}

Var Tape::scalar_mul(Var s, Var x) {
    double sv = v(s.idx)[0];
    Tensor out = sv * v(x.idx);
    int o = alloc(std::move(out));
    nodes_[o].back = [this, s, x, o] {
        const Tensor& go = g(o);
        double sv2 = v(s.idx)[0];
        kernels::axpy(sv2, go.data(), g(x.idx).data(), go.size());
        g(s.idx)[0] += kernels::dot(go.data(), v(x.idx).data(), go.size());
    };
    return {o};
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& va = v(a.idx);
    const Tensor& vb = v(b.idx);
    Tensor out(va.rows(), vb.cols());
    kernels::gemm_nn(va.data(), vb.data(), out.data(), va.rows(), va.cols(), vb.cols());
    int o = alloc(std::move(out));
    nodes_[o].back = [this, a, b, o] {
        const Tensor& go = g(o);
        const Tensor& va2 = v(a.idx);
        const Tensor& vb2 = v(b.idx);
        // dA += dC * B^T ; dB += A^T * dC
        kernels::gemm_nt(go.data(), vb2.data(), g(a.idx).data(), go.rows(), go.cols(), va2.cols(), true);
        kernels::gemm_tn(va2.data(), go.data(), g(b.idx).data(), va2.cols(), va2.rows(), go.cols(), true);
    };
    return {o};
}

Var Tape::matmul_cl(const Tensor& a, Var b) {
    const Tensor& vb = v(b.idx);
    Tensor out(a.rows(), vb.cols());
    kernels::gemm_nn(a.data(), vb.data(), out.data(), a.rows(), a.cols(), vb.cols());
    int o = alloc(std::move(out));
    nodes_[o].back = [this, a, b, o] {
        const Tensor& go = g(o);
        kernels::gemm_tn(a.data(), go.data(), g(b.idx).data(), a.cols(), a.rows(), go.cols(), true);
    };
    return {o};
}

Var Tape::matmul_cr(Var a, const Tensor& b) {
    const Tensor& va = v(a.idx);
    Tensor out(va.rows(), b.cols());
    kernels::gemm_nn(va.data(), b.data(), out.data(), va.rows(), va.cols(), b.cols());
    int o = alloc(std::move(out));
    nodes_[o].back = [this, a, b, o] {
        const Tensor& go = g(o);
        kernels::gemm_nt(go.data(), b.data(), g(a.idx).data(), go.rows(), go.cols(), b.rows(), true);
    };
    return {o};
}

Var Tape::broadcast_add_row(Var x, Var bias) {
    const Tensor& vx = v(x.idx);
    const Tensor& vb = v(bias.idx);
    Tensor out = vx;
    for (int i = 0; i < out.rows(); ++i)
        kernels::add(out.data() + static_cast<std::size_t>(i) * out.cols(), vb.data(),
                     out.data() + static_cast<std::size_t>(i) * out.cols(), out.cols());
    int o = alloc(std::move(out));
    nodes_[o].back = [this, x, bias, o] {
        const Tensor& go = g(o);
        kernels::add(g(x.idx).data(), go.data(), g(x.idx).data(), go.size());
        Tensor& gb = g(bias.idx);
        for (int i = 0; i < go.rows(); ++i)
            kernels::add(gb.data(), go.data() + static_cast<std::size_t>(i) * go.cols(), gb.data(), go.cols());
    };
    return {o};
}

Var Tape::linear(Var x, Var w, Var bias) { return broadcast_add_row(matmul(x, w), bias); }

Var Tape::outer_add(Var u, Var vv) {
    const Tensor& vu = v(u.idx);
    const Tensor& vw = v(vv.idx);
    int n = vu.rows();
    Tensor out(n, vw.rows());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < vw.rows(); ++j) out(i, j) = vu(i, 0) + vw(j, 0);
    int o = alloc(std::move(out));
    nodes_[o].back = [this, u, vv, o] {
        const Tensor& go = g(o);
        Tensor& gu = g(u.idx);
        Tensor& gv = g(vv.idx);
        for (int i = 0; i < go.rows(); ++i)
            for (int j = 0; j < go.cols(); ++j) {
                gu(i, 0) += go(i, j);
                gv(j, 0) += go(i, j);
            }
    };
    return {o};
}

namespace {
template <typename F>
Tensor map(const Tensor& x, F f) {
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
    return out;
}
} // namespace

Var Tape::tanh_(Var a) {
    int o = alloc(map(v(a.idx), [](double x) { return std::tanh(x); }));
    nodes_[o].back = [this, a, o] {
        const Tensor& go = g(o);
        const Tensor& vo = v(o);
        Tensor& ga = g(a.idx);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * (1.0 - vo[i] * vo[i]);
    };
    return {o};
}

Var Tape::sigmoid_(Var a) {
    int o = alloc(map(v(a.idx), [](double x) { return 1.0 / (1.0 + std::exp(-x)); }));
    nodes_[o].back = [this, a, o] {
        const Tensor& go = g(o);
        const Tensor& vo = v(o);
        Tensor& ga = g(a.idx);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * vo[i] * (1.0 - vo[i]);
    };
    return {o};
}

Var Tape::softplus_(Var a) {
    // log(1+e^x), stable for large |x|
    int o = alloc(map(v(a.idx), [](double x) {
        return x > 30.0 ? x : std::log1p(std::exp(x));
    }));
    nodes_[o].back = [this, a, o] {
        const Tensor& go = g(o);
        const Tensor& va = v(a.idx);
        Tensor& ga = g(a.idx);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] / (1.0 + std::exp(-va[i]));
    };
    return {o};
}

Var Tape::exp_(Var a) {
    int o = alloc(map(v(a.idx), [](double x) { return std::exp(x); }));
    nodes_[o].back = [this, a, o] {
        const Tensor& go = g(o);
        const Tensor& vo = v(o);
        kernels::fmadd(go.data(), vo.data(), g(a.idx).data(), go.size());
    };
    return {o};
}

Var Tape::log_(Var a) {
    int o = alloc(map(v(a.idx), [](double x) { return std::log(x); }));
    nodes_[o].back = [this, a, o] {
        const Tensor& go = g(o);
        const Tensor& va = v(a.idx);
        Tensor& ga = g(a.idx);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] / va[i];
    };
    return {o};
}

Var Tape::sqrt_(Var a) {
    int o = alloc(map(v(a.idx), [](double x) { return std::sqrt(x); }));
    nodes_[o].back = [this, a, o] {
        const Tensor& go = g(o);
        const Tensor& vo = v(o);
        Tensor& ga = g(a.idx);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * 0.5 / vo[i];
    };
    return {o};
}

Var Tape::square_(Var a) {
    int o = alloc(map(v(a.idx), [](double x) { return x * x; }));
    nodes_[o].back = [this, a, o] {
        const Tensor& go = g(o);
        const Tensor& va = v(a.idx);
        Tensor& ga = g(a.idx);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += 2.0 * go[i] * va[i];
    };
    return {o};
}

Var Tape::abs_(Var a) {
    int o = alloc(map(v(a.idx), [](double x) { return std::fabs(x); }));
    nodes_[o].back = [this, a, o] {
        const Tensor& go = g(o);
        const Tensor& va = v(a.idx);
        Tensor& ga = g(a.idx);
        for (std::size_t i = 0; i < go.size(); ++i)
            ga[i] += go[i] * (va[i] > 0.0 ? 1.0 : (va[i] < 0.0 ? -1.0 : 0.0));
    };
    return {o};
}

Var Tape::leaky_relu(Var a, double slope) {
    int o = alloc(map(v(a.idx), [slope](double x) { return x > 0.0 ? x : slope * x; }));
    nodes_[o].back = [this, a, o, slope] {
        const Tensor& go = g(o);
        const Tensor& va = v(a.idx);
        Tensor& ga = g(a.idx);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * (va[i] > 0.0 ? 1.0 : slope);
    };
    return {o};
}

Var Tape::lgamma_(Var a) {
    int o = alloc(map(v(a.idx), [](double x) { return std::lgamma(x); }));
    nodes_[o].back = [this, a, o] {
        const Tensor& go = g(o);
        const Tensor& va = v(a.idx);
        Tensor& ga = g(a.idx);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * digamma(va[i]);
    };
    return {o};
}

Var Tape::mul_const(Var a, const Tensor& m) {
    const Tensor& va = v(a.idx);
    Tensor out(va.rows(), va.cols());
    kernels::mul(va.data(), m.data(), out.data(), out.size());
    int o = alloc(std::move(out));
    nodes_[o].back = [this, a, m, o] {
        kernels::fmadd(g(o).data(), m.data(), g(a.idx).data(), g(o).size());
    };
    return {o};
}

Var Tape::add_const(Var a, const Tensor& c) {
    int o = alloc(v(a.idx) + c);
    nodes_[o].back = [this, a, o] {
        kernels::add(g(a.idx).data(), g(o).data(), g(a.idx).data(), g(o).size());
    };
    return {o};
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    int rows = v(parts[0].idx).rows();
    int cols = 0;
    for (Var p : parts) cols += v(p.idx).cols();
    Tensor out(rows, cols);
    int off = 0;
    for (Var p : parts) {
        const Tensor& vp = v(p.idx);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < vp.cols(); ++j) out(i, off + j) = vp(i, j);
        off += vp.cols();
    }
    int o = alloc(std::move(out));
    std::vector<Var> ps = parts;
    nodes_[o].back = [this, ps, o] {
        const Tensor& go = g(o);
        int off2 = 0;
        for (Var p : ps) {
            Tensor& gp = g(p.idx);
            for (int i = 0; i < gp.rows(); ++i)
                for (int j = 0; j < gp.cols(); ++j) gp(i, j) += go(i, off2 + j);
            off2 += gp.cols();
        }
    };
    return {o};
}

Var Tape::slice_cols(Var a, int j0, int j1) {
    const Tensor& va = v(a.idx);
    Tensor out(va.rows(), j1 - j0);
    for (int i = 0; i < va.rows(); ++i)
        for (int j = j0; j < j1; ++j) out(i, j - j0) = va(i, j);
    int o = alloc(std::move(out));
    nodes_[o].back = [this, a, o, j0] {
        const Tensor& go = g(o);
        Tensor& ga = g(a.idx);
        for (int i = 0; i < go.rows(); ++i)
            for (int j = 0; j < go.cols(); ++j) ga(i, j0 + j) += go(i, j);
    };
    return {o};
}

Var Tape::reshape(Var a, int rows, int cols) {
    const Tensor& va = v(a.idx);
    if (static_cast<std::size_t>(rows) * cols != va.size())
        throw std::invalid_argument("reshape: element count mismatch");
    Tensor out(rows, cols);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i];
    int o = alloc(std::move(out));
    nodes_[o].back = [this, a, o] {
        kernels::add(g(a.idx).data(), g(o).data(), g(a.idx).data(), g(o).size());
    };
    return {o};
}

Var Tape::row_softmax_masked(Var logits, const Tensor& mask) {
    const Tensor& vl = v(logits.idx);
    Tensor out(vl.rows(), vl.cols());
    for (int i = 0; i < vl.rows(); ++i) {
        double mx = -1e300;
        for (int j = 0; j < vl.cols(); ++j)
            if (mask(i, j) != 0.0) mx = std::max(mx, vl(i, j));
        double z = 0.0;
        for (int j = 0; j < vl.cols(); ++j)
            if (mask(i, j) != 0.0) z += std::exp(vl(i, j) - mx);
        for (int j = 0; j < vl.cols(); ++j)
            out(i, j) = mask(i, j) != 0.0 ? std::exp(vl(i, j) - mx) / z : 0.0;
    }
    int o = alloc(std::move(out));
    nodes_[o].back = [this, logits, mask, o] {
        const Tensor& go = g(o);
        const Tensor& vo = v(o);
        Tensor& gl = g(logits.idx);
        for (int i = 0; i < go.rows(); ++i) {
            double s = 0.0;
            for (int j = 0; j < go.cols(); ++j) s += go(i, j) * vo(i, j);
            for (int j = 0; j < go.cols(); ++j)
                if (mask(i, j) != 0.0) gl(i, j) += vo(i, j) * (go(i, j) - s);
        }
    };
    return {o};
}

Var Tape::sum(Var a) {
    Tensor out(1, 1);
    out[0] = v(a.idx).sum();
    int o = alloc(std::move(out));
    nodes_[o].back = [this, a, o] {
        double go = g(o)[0];
        Tensor& ga = g(a.idx);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go;
    };
    return {o};
}

Var Tape::mean(Var a) {
    double n = static_cast<double>(v(a.idx).size());
    return scale(sum(a), 1.0 / n);
}

void Tape::backward(Var loss) {
    if (v(loss.idx).size() != 1)
        throw std::invalid_argument("backward: loss must be scalar");
    g(loss.idx)[0] = 1.0;
    for (int i = loss.idx; i >= 0; --i)
        if (nodes_[i].back) nodes_[i].back();
}

double digamma(double x) {
    // Recurrence to push the argument above 6, then the asymptotic series.
    double result = 0.0;
    while (x < 6.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    double inv = 1.0 / x;
    double inv2 = inv * inv;
    result += std::log(x) - 0.5 * inv
        - inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0)));
    return result;
}

} // namespace neuroddaf::ad
