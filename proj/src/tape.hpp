#pragma once

#include "common.hpp"

#include <functional>
#include <vector>

namespace glma::ad {

// Reverse-mode autodiff over Eigen double matrices. A Tape owns the graph for
// one forward evaluation; Vars are cheap handles into it. Nodes whose inputs
// carry no gradient requirement skip closure construction entirely, so a
// value-only evaluation (e.g. finite-difference probing, sampling) pays almost
// nothing beyond the forward math.
//
// Single-threaded; build one Tape per evaluation.
class Tape;

struct Var {
    Tape* tape = nullptr;
    int idx = -1;
    bool valid() const { return tape != nullptr && idx >= 0; }
};

class Tape {
public:
    struct Node {
        Matrix value;
        Matrix grad;                       // lazily allocated during backward
        std::function<void(Tape&)> back;   // empty when needs_grad is false
        bool needs_grad = false;
        bool grad_live = false;
    };

    // Leaf with gradient tracking (a trainable parameter).
    Var param(Matrix value);
    // Leaf without gradient tracking (inputs, frozen weights).
    Var constant(Matrix value);

    const Matrix& val(Var v) const;
    // Accumulated gradient; zero matrix if the node never received one.
    Matrix grad(Var v) const;

    // Seeds d(root)/d(root) = 1 and propagates. root must be 1x1.
    void backward(Var root);

    size_t size() const { return nodes_.size(); }

    // Internal: used by op implementations.
    int emit(Matrix value, bool needs_grad, std::function<void(Tape&)> back);
    Node& node(int i) { return nodes_[i]; }
    const Node& node(int i) const { return nodes_[i]; }
    Matrix& grad_slot(int i); // allocates zeros on first touch

private:
    std::vector<Node> nodes_;
};

// ---- operations ----------------------------------------------------------

Var add(Var a, Var b);            // same shape
Var sub(Var a, Var b);            // same shape
Var add_rowvec(Var a, Var row);   // (n x d) + broadcast (1 x d)
Var matmul(Var a, Var b);
Var transpose(Var a);
Var scale(Var a, double s);
Var softmax_rows(Var a);
Var gelu(Var a);                  // tanh approximation
Var layernorm_rows(Var x, Var gamma, Var beta, double eps = 1e-5);
Var mean_rows(Var a);             // (n x d) -> (1 x d)
Var mse(Var a, Var b);            // mean squared difference -> (1 x 1)
Var mean_diff(Var a, Var b);      // mean raw difference -> (1 x 1)

} // namespace glma::ad
