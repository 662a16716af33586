#include "tape.hpp"

#include <cmath>

namespace glma::ad {

namespace {

void check_same_tape(Var a, Var b, const char* op) {
    if (!a.valid() || !b.valid() || a.tape != b.tape)
        fail(ErrorKind::internal, std::string(op) + ": vars must live on one tape");
}

constexpr double kGeluC = 0.7978845608028654; // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

} // namespace

Var Tape::param(Matrix value) {
    int i = emit(std::move(value), true, nullptr);
    return Var{this, i};
}

Var Tape::constant(Matrix value) {
    int i = emit(std::move(value), false, nullptr);
    return Var{this, i};
}

int Tape::emit(Matrix value, bool needs_grad, std::function<void(Tape&)> back) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    if (needs_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

const Matrix& Tape::val(Var v) const {
    return nodes_.at(static_cast<size_t>(v.idx)).value;
}

Matrix Tape::grad(Var v) const {
    const Node& n = nodes_.at(static_cast<size_t>(v.idx));
    if (!n.grad_live) return Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

Matrix& Tape::grad_slot(int i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.grad_live) {
        n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
        n.grad_live = true;
    }
    return n.grad;
}

void Tape::backward(Var root) {
    if (!root.valid() || root.tape != this)
        fail(ErrorKind::internal, "backward: root not on this tape");
    const Node& r = nodes_[static_cast<size_t>(root.idx)];
    if (r.value.rows() != 1 || r.value.cols() != 1)
        fail(ErrorKind::internal, "backward: root must be a 1x1 scalar");
    if (!r.needs_grad) return; // nothing upstream requires gradients
    grad_slot(root.idx)(0, 0) = 1.0;
    for (int i = root.idx; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (n.needs_grad && n.grad_live && n.back) n.back(*this);
    }
}

namespace {

// Shared helper: does either input require gradients?
bool needs(Var a) { return a.tape->node(a.idx).needs_grad; }

} // namespace

Var add(Var a, Var b) {
    check_same_tape(a, b, "add");
    Tape& t = *a.tape;
    if (t.val(a).rows() != t.val(b).rows() || t.val(a).cols() != t.val(b).cols())
        fail(ErrorKind::internal, "add: shape mismatch");
    Matrix v = t.val(a) + t.val(b);
    bool ng = needs(a) || needs(b);
    int ai = a.idx, bi = b.idx;
    int i = t.emit(std::move(v), ng, nullptr);
    if (ng) t.node(i).back = [ai, bi, i](Tape& tp) {
        const Matrix& g = tp.node(i).grad;
        if (tp.node(ai).needs_grad) tp.grad_slot(ai) += g;
        if (tp.node(bi).needs_grad) tp.grad_slot(bi) += g;
    };
    return Var{&t, i};
}

Var sub(Var a, Var b) {
    check_same_tape(a, b, "sub");
    Tape& t = *a.tape;
    if (t.val(a).rows() != t.val(b).rows() || t.val(a).cols() != t.val(b).cols())
        fail(ErrorKind::internal, "sub: shape mismatch");
    Matrix v = t.val(a) - t.val(b);
    bool ng = needs(a) || needs(b);
    int ai = a.idx, bi = b.idx;
    int i = t.emit(std::move(v), ng, nullptr);
    if (ng) t.node(i).back = [ai, bi, i](Tape& tp) {
        const Matrix& g = tp.node(i).grad;
        if (tp.node(ai).needs_grad) tp.grad_slot(ai) += g;
        if (tp.node(bi).needs_grad) tp.grad_slot(bi) -= g;
    };
    return Var{&t, i};
}

Var add_rowvec(Var a, Var row) {
    check_same_tape(a, row, "add_rowvec");
    Tape& t = *a.tape;
    if (t.val(row).rows() != 1 || t.val(row).cols() != t.val(a).cols())
        fail(ErrorKind::internal, "add_rowvec: row must be (1 x cols(a))");
    Matrix v = t.val(a).rowwise() + t.val(row).row(0);
    bool ng = needs(a) || needs(row);
    int ai = a.idx, ri = row.idx;
    int i = t.emit(std::move(v), ng, nullptr);
    if (ng) t.node(i).back = [ai, ri, i](Tape& tp) {
        const Matrix& g = tp.node(i).grad;
        if (tp.node(ai).needs_grad) tp.grad_slot(ai) += g;
        if (tp.node(ri).needs_grad) tp.grad_slot(ri) += g.colwise().sum();
    };
    return Var{&t, i};
}

Var matmul(Var a, Var b) {
    check_same_tape(a, b, "matmul");
    Tape& t = *a.tape;
    if (t.val(a).cols() != t.val(b).rows())
        fail(ErrorKind::internal, "matmul: inner dimension mismatch");
    Matrix v = t.val(a) * t.val(b);
    bool ng = needs(a) || needs(b);
    int ai = a.idx, bi = b.idx;
    int i = t.emit(std::move(v), ng, nullptr);
    if (ng) t.node(i).back = [ai, bi, i](Tape& tp) {
        const Matrix& g = tp.node(i).grad;
        if (tp.node(ai).needs_grad) tp.grad_slot(ai) += g * tp.node(bi).value.transpose();
        if (tp.node(bi).needs_grad) tp.grad_slot(bi) += tp.node(ai).value.transpose() * g;
    };
    return Var{&t, i};
}

Var transpose(Var a) {
    Tape& t = *a.tape;
    Matrix v = t.val(a).transpose();
    bool ng = needs(a);
    int ai = a.idx;
    int i = t.emit(std::move(v), ng, nullptr);
    if (ng) t.node(i).back = [ai, i](Tape& tp) {
        tp.grad_slot(ai) += tp.node(i).grad.transpose();
    };
    return Var{&t, i};
}

Var scale(Var a, double s) {
    Tape& t = *a.tape;
    Matrix v = t.val(a) * s;
    bool ng = needs(a);
    int ai = a.idx;
    int i = t.emit(std::move(v), ng, nullptr);
    if (ng) t.node(i).back = [ai, i, s](Tape& tp) {
        tp.grad_slot(ai) += s * tp.node(i).grad;
    };
    return Var{&t, i};
}

Var softmax_rows(Var a) {
    Tape& t = *a.tape;
    const Matrix& x = t.val(a);
    Matrix v(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        double mx = x.row(r).maxCoeff();
        Eigen::ArrayXd e = (x.row(r).array() - mx).exp();
        v.row(r) = (e / e.sum()).matrix();
    }
    bool ng = needs(a);
    int ai = a.idx;
    int i = t.emit(std::move(v), ng, nullptr);
    if (ng) t.node(i).back = [ai, i](Tape& tp) {
        const Matrix& s = tp.node(i).value;
        const Matrix& g = tp.node(i).grad;
        Matrix& ga = tp.grad_slot(ai);
        for (Eigen::Index r = 0; r < s.rows(); ++r) {
            double dot = g.row(r).dot(s.row(r));
            ga.row(r) += (s.row(r).array() * (g.row(r).array() - dot)).matrix();
        }
    };
    return Var{&t, i};
}

Var gelu(Var a) {
    Tape& t = *a.tape;
    const Matrix& x = t.val(a);
    Matrix v(x.rows(), x.cols());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        double xi = x.data()[k];
        double u = kGeluC * (xi + kGeluA * xi * xi * xi);
        v.data()[k] = 0.5 * xi * (1.0 + std::tanh(u));
    }
    bool ng = needs(a);
    int ai = a.idx;
    int i = t.emit(std::move(v), ng, nullptr);
    if (ng) t.node(i).back = [ai, i](Tape& tp) {
        const Matrix& xm = tp.node(ai).value;
        const Matrix& g = tp.node(i).grad;
        Matrix& ga = tp.grad_slot(ai);
        for (Eigen::Index k = 0; k < xm.size(); ++k) {
            double xi = xm.data()[k];
            double u = kGeluC * (xi + kGeluA * xi * xi * xi);
            double th = std::tanh(u);
            double du = kGeluC * (1.0 + 3.0 * kGeluA * xi * xi);
            double d = 0.5 * (1.0 + th) + 0.5 * xi * (1.0 - th * th) * du;
            ga.data()[k] += d * g.data()[k];
        }
    };
    return Var{&t, i};
}

Var layernorm_rows(Var x, Var gamma, Var beta, double eps) {
    check_same_tape(x, gamma, "layernorm_rows");
    check_same_tape(x, beta, "layernorm_rows");
    Tape& t = *x.tape;
    const Matrix& xm = t.val(x);
    Eigen::Index n = xm.rows(), d = xm.cols();
    if (t.val(gamma).rows() != 1 || t.val(gamma).cols() != d ||
        t.val(beta).rows() != 1 || t.val(beta).cols() != d)
        fail(ErrorKind::internal, "layernorm_rows: gamma/beta must be (1 x d)");

    Matrix xhat(n, d);
    Vector inv_std(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        double mu = xm.row(r).mean();
        double var = (xm.row(r).array() - mu).square().mean();
        double inv = 1.0 / std::sqrt(var + eps);
        inv_std(r) = inv;
        xhat.row(r) = ((xm.row(r).array() - mu) * inv).matrix();
    }
    Matrix v = (xhat.array().rowwise() * t.val(gamma).row(0).array()).matrix();
    v = v.rowwise() + t.val(beta).row(0);

    bool ng = needs(x) || needs(gamma) || needs(beta);
    int xi = x.idx, gi = gamma.idx, bi = beta.idx;
    int i = t.emit(std::move(v), ng, nullptr);
    if (ng) t.node(i).back = [xi, gi, bi, i, xhat, inv_std](Tape& tp) {
        const Matrix& g = tp.node(i).grad;
        const Matrix& gam = tp.node(gi).value;
        Eigen::Index n2 = g.rows(), d2 = g.cols();
        if (tp.node(bi).needs_grad) tp.grad_slot(bi) += g.colwise().sum();
        if (tp.node(gi).needs_grad)
            tp.grad_slot(gi) += (g.array() * xhat.array()).colwise().sum().matrix();
        if (tp.node(xi).needs_grad) {
            Matrix& gx = tp.grad_slot(xi);
            for (Eigen::Index r = 0; r < n2; ++r) {
                Eigen::ArrayXd dxhat = g.row(r).array() * gam.row(0).array();
                double m1 = dxhat.mean();
                double m2 = (dxhat * xhat.row(r).transpose().array()).mean();
                gx.row(r) += (inv_std(r) *
                              (dxhat - m1 - xhat.row(r).transpose().array() * m2))
                                 .matrix()
                                 .transpose();
            }
            (void)d2;
        }
    };
    return Var{&t, i};
}

Var mean_rows(Var a) {
    Tape& t = *a.tape;
    const Matrix& x = t.val(a);
    Matrix v = x.colwise().mean();
    bool ng = needs(a);
    int ai = a.idx;
    Eigen::Index n = x.rows();
    int i = t.emit(std::move(v), ng, nullptr);
    if (ng) t.node(i).back = [ai, i, n](Tape& tp) {
        const Matrix& g = tp.node(i).grad;
        Matrix& ga = tp.grad_slot(ai);
        ga += (Matrix::Ones(n, 1) * g) / static_cast<double>(n);
    };
    return Var{&t, i};
}

Var mse(Var a, Var b) {
    check_same_tape(a, b, "mse");
    Tape& t = *a.tape;
    if (t.val(a).rows() != t.val(b).rows() || t.val(a).cols() != t.val(b).cols())
        fail(ErrorKind::internal, "mse: shape mismatch");
    double n = static_cast<double>(t.val(a).size());
    Matrix v(1, 1);
    v(0, 0) = (t.val(a) - t.val(b)).squaredNorm() / n;
    bool ng = needs(a) || needs(b);
    int ai = a.idx, bi = b.idx;
    int i = t.emit(std::move(v), ng, nullptr);
    if (ng) t.node(i).back = [ai, bi, i, n](Tape& tp) {
        double c = 2.0 / n * tp.node(i).grad(0, 0);
        Matrix diff = tp.node(ai).value - tp.node(bi).value;
        if (tp.node(ai).needs_grad) tp.grad_slot(ai) += c * diff;
        if (tp.node(bi).needs_grad) tp.grad_slot(bi) -= c * diff;
    };
    return Var{&t, i};
}

Var mean_diff(Var a, Var b) {
    check_same_tape(a, b, "mean_diff");
    Tape& t = *a.tape;
    if (t.val(a).rows() != t.val(b).rows() || t.val(a).cols() != t.val(b).cols())
        fail(ErrorKind::internal, "mean_diff: shape mismatch");
    double n = static_cast<double>(t.val(a).size());
    Matrix v(1, 1);
    v(0, 0) = (t.val(a) - t.val(b)).sum() / n;
    bool ng = needs(a) || needs(b);
    int ai = a.idx, bi = b.idx;
    int i = t.emit(std::move(v), ng, nullptr);
    if (ng) t.node(i).back = [ai, bi, i, n](Tape& tp) {
        double c = tp.node(i).grad(0, 0) / n;
        if (tp.node(ai).needs_grad)
            tp.grad_slot(ai).array() += c;
        if (tp.node(bi).needs_grad)
            tp.grad_slot(bi).array() -= c;
    };
    return Var{&t, i};
}

} // namespace glma::ad
