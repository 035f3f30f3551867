#pragma once
// Reverse-mode autodiff tape over Tensor-valued nodes. Operations record a
// backward closure; backward() walks the nodes in reverse execution order.
// Scalars are 1x1 tensors. Constants enter through leaf() and simply never
// have their gradient read.

#include "neuroddaf/tensor.hpp"

#include <functional>
#include <string>
#include <vector>

namespace neuroddaf::ad {

struct Var {
    int idx = -1;
    bool valid() const { return idx >= 0; }
};

class Tape {
public:
    Var leaf(const Tensor& v);
    Var leaf(Tensor&& v);

    const Tensor& val(Var v) const { return nodes_[v.idx].value; }
    const Tensor& grad(Var v) const { return nodes_[v.idx].grad; }
    Tensor& grad_mut(Var v) { return nodes_[v.idx].grad; }

    std::size_t size() const { return nodes_.size(); }
    void clear();

    // Arithmetic
    Var add(Var a, Var b);
    Var add3(Var a, Var b, Var c);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b); // elementwise
    Var div(Var a, Var b); // elementwise
    Var neg(Var a);
    Var scale(Var a, double s);
    Var add_scalar(Var a, double s);
    Var axpy(double s, Var x, Var y); // s*x + y

    // s is a 1x1 scalar node
    Var scalar_mul(Var s, Var x);

    // Matrix products
    Var matmul(Var a, Var b);
    Var matmul_cl(const Tensor& a, Var b); // constant left factor
    Var matmul_cr(Var a, const Tensor& b); // constant right factor
    Var linear(Var x, Var w, Var bias);    // x*w + row-broadcast bias (1xn)
    Var broadcast_add_row(Var x, Var bias);

    // out(i,j) = u(i,0) + v(j,0)
    Var outer_add(Var u, Var v);

    // Elementwise functions
    Var tanh_(Var a);
    Var sigmoid_(Var a);
    Var softplus_(Var a);
    Var exp_(Var a);
    Var log_(Var a);
    Var sqrt_(Var a);
    Var square_(Var a);
    Var abs_(Var a);
    Var leaky_relu(Var a, double slope);
    Var lgamma_(Var a);

    Var mul_const(Var a, const Tensor& m); // e.g. dropout masks
    Var add_const(Var a, const Tensor& c);

    // Shape ops
    Var concat_cols(const std::vector<Var>& parts);
    Var slice_cols(Var a, int j0, int j1); // [j0, j1)
    Var reshape(Var a, int rows, int cols); // same element count, row-major

    // Row-wise softmax over entries where mask != 0; masked-out entries are 0.
    Var row_softmax_masked(Var logits, const Tensor& mask);

    // Reductions (produce 1x1)
    Var sum(Var a);
    Var mean(Var a);

    void backward(Var loss);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void()> back;
    };

    int alloc(Tensor&& v);
    Tensor& g(int i) { return nodes_[i].grad; }
    const Tensor& v(int i) const { return nodes_[i].value; }

    std::vector<Node> nodes_;
};

// digamma(x) for x > 0; used by the lgamma backward pass.
double digamma(double x);

} // namespace neuroddaf::ad
