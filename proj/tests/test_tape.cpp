#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "oracles.hpp"
#include "rng.hpp"
#include "tape.hpp"

#include <cmath>
#include <functional>

using namespace glma;
using namespace glma::ad;

namespace {

// Finite-difference check of d(f)/d(P) for every entry of one parameter
// matrix. `build` constructs a fresh tape around the current contents of the
// leaf matrices and returns the scalar root plus the Var of the probed leaf.
struct Probe {
    Var root;
    Var leaf;
};

void check_gradient(Matrix& leaf_storage,
                    const std::function<Probe(Tape&)>& build,
                    double tol = 5e-6) {
    Tape t;
    Probe p = build(t);
    REQUIRE(t.val(p.root).size() == 1);
    t.backward(p.root);
    Matrix analytic = t.grad(p.leaf);
    REQUIRE(analytic.rows() == leaf_storage.rows());
    REQUIRE(analytic.cols() == leaf_storage.cols());

    auto value = [&] {
        Tape fresh;
        return fresh.val(build(fresh).root)(0, 0);
    };
    for (Eigen::Index i = 0; i < leaf_storage.size(); ++i) {
        double fd = oracle::central_diff(value, leaf_storage.data()[i]);
        double an = analytic.data()[i];
        INFO("entry ", i, " analytic=", an, " fd=", fd);
        // Absolute escape hatch: a true-zero gradient meets only FD noise.
        CHECK((std::abs(an - fd) < 1e-9 || oracle::rel_err(an, fd) < tol));
    }
}

Matrix rand_mat(uint64_t seed, const char* label, int r, int c) {
    RngStream rng(seed, label);
    return randn_matrix(rng, r, c, 1.0);
}

} // namespace

TEST_CASE("forward values match Eigen math") {
    Matrix a = rand_mat(1, "a", 3, 4);
    Matrix b = rand_mat(2, "b", 3, 4);
    Matrix w = rand_mat(3, "w", 4, 2);
    Matrix row = rand_mat(4, "row", 1, 4);

    Tape t;
    Var va = t.constant(a);
    Var vb = t.constant(b);
    CHECK(t.val(add(va, vb)) == a + b);
    CHECK(t.val(sub(va, vb)) == a - b);
    CHECK(t.val(matmul(va, t.constant(w))) == a * w);
    CHECK(t.val(transpose(va)) == a.transpose());
    CHECK(t.val(scale(va, 2.5)) == 2.5 * a);
    CHECK(t.val(add_rowvec(va, t.constant(row))) == (a.rowwise() + row.row(0)).eval());
    CHECK(t.val(mean_rows(va)) == a.colwise().mean().eval());
    CHECK(t.val(mse(va, vb))(0, 0) == doctest::Approx(oracle::mse(a, b)).epsilon(1e-15));
    CHECK(t.val(mean_diff(va, vb))(0, 0) ==
          doctest::Approx(oracle::mean_diff(a, b)).epsilon(1e-15));
}

TEST_CASE("softmax rows sum to one and match the stable oracle") {
    Matrix a = rand_mat(5, "sm", 4, 6) * 3.0;
    Tape t;
    Matrix s = t.val(softmax_rows(t.constant(a)));
    for (int r = 0; r < 4; ++r) {
        CHECK(s.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
        for (int c = 0; c < 6; ++c) CHECK(s(r, c) > 0.0);
    }
    // Row-wise shift invariance: softmax(x + c) == softmax(x).
    Matrix shifted = a;
    shifted.array() += 123.0;
    Matrix s2 = t.val(softmax_rows(t.constant(shifted)));
    CHECK((s - s2).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gelu matches the tanh closed form") {
    Matrix a = rand_mat(6, "gelu", 2, 5);
    Tape t;
    Matrix g = t.val(gelu(t.constant(a)));
    constexpr double k = 0.7978845608028654; // sqrt(2/pi)
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        double x = a.data()[i];
        double ref = 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
        CHECK(g.data()[i] == doctest::Approx(ref).epsilon(1e-14));
    }
}

TEST_CASE("layernorm rows normalizes per row") {
    Matrix x = rand_mat(7, "ln", 3, 8) * 2.0;
    Matrix gamma = Matrix::Ones(1, 8);
    Matrix beta = Matrix::Zero(1, 8);
    Tape t;
    Matrix y = t.val(layernorm_rows(t.constant(x), t.constant(gamma), t.constant(beta)));
    for (int r = 0; r < 3; ++r) {
        CHECK(y.row(r).mean() == doctest::Approx(0.0).epsilon(1e-12));
        double var = (y.row(r).array() - y.row(r).mean()).square().mean();
        CHECK(var == doctest::Approx(1.0).epsilon(1e-4)); // eps shifts it slightly
    }
}

TEST_CASE("gradients match central differences") {
    SUBCASE("add/sub chain") {
        Matrix p = rand_mat(10, "p", 2, 3);
        Matrix c = rand_mat(11, "c", 2, 3);
        check_gradient(p, [&](Tape& t) {
            Var vp = t.param(p);
            Var r = mse(add(vp, t.constant(c)), sub(vp, t.constant(c)));
            return Probe{r, vp};
        });
    }
    SUBCASE("matmul left") {
        Matrix p = rand_mat(12, "p", 2, 4);
        Matrix w = rand_mat(13, "w", 4, 3);
        Matrix tgt = rand_mat(14, "t", 2, 3);
        check_gradient(p, [&](Tape& t) {
            Var vp = t.param(p);
            return Probe{mse(matmul(vp, t.constant(w)), t.constant(tgt)), vp};
        });
    }
    SUBCASE("matmul right") {
        Matrix a = rand_mat(15, "a", 2, 4);
        Matrix p = rand_mat(16, "p", 4, 3);
        Matrix tgt = rand_mat(17, "t", 2, 3);
        check_gradient(p, [&](Tape& t) {
            Var vp = t.param(p);
            return Probe{mse(matmul(t.constant(a), vp), t.constant(tgt)), vp};
        });
    }
    SUBCASE("transpose") {
        Matrix p = rand_mat(18, "p", 3, 2);
        Matrix tgt = rand_mat(19, "t", 2, 3);
        check_gradient(p, [&](Tape& t) {
            Var vp = t.param(p);
            return Probe{mse(transpose(vp), t.constant(tgt)), vp};
        });
    }
    SUBCASE("scale") {
        Matrix p = rand_mat(20, "p", 2, 2);
        Matrix tgt = rand_mat(21, "t", 2, 2);
        check_gradient(p, [&](Tape& t) {
            Var vp = t.param(p);
            return Probe{mse(scale(vp, -1.7), t.constant(tgt)), vp};
        });
    }
    SUBCASE("add_rowvec on the matrix") {
        Matrix p = rand_mat(22, "p", 3, 4);
        Matrix row = rand_mat(23, "r", 1, 4);
        Matrix tgt = rand_mat(24, "t", 3, 4);
        check_gradient(p, [&](Tape& t) {
            Var vp = t.param(p);
            return Probe{mse(add_rowvec(vp, t.constant(row)), t.constant(tgt)), vp};
        });
    }
    SUBCASE("add_rowvec on the broadcast row") {
        Matrix a = rand_mat(25, "a", 3, 4);
        Matrix p = rand_mat(26, "p", 1, 4);
        Matrix tgt = rand_mat(27, "t", 3, 4);
        check_gradient(p, [&](Tape& t) {
            Var vp = t.param(p);
            return Probe{mse(add_rowvec(t.constant(a), vp), t.constant(tgt)), vp};
        });
    }
    SUBCASE("softmax rows") {
        Matrix p = rand_mat(28, "p", 2, 5);
        Matrix tgt = rand_mat(29, "t", 2, 5);
        check_gradient(p, [&](Tape& t) {
            Var vp = t.param(p);
            return Probe{mse(softmax_rows(vp), t.constant(tgt)), vp};
        });
    }
    SUBCASE("gelu") {
        Matrix p = rand_mat(30, "p", 2, 4);
        Matrix tgt = rand_mat(31, "t", 2, 4);
        check_gradient(p, [&](Tape& t) {
            Var vp = t.param(p);
            return Probe{mse(gelu(vp), t.constant(tgt)), vp};
        });
    }
    SUBCASE("layernorm input") {
        Matrix p = rand_mat(32, "p", 3, 6);
        Matrix gamma = rand_mat(33, "g", 1, 6);
        Matrix beta = rand_mat(34, "b", 1, 6);
        Matrix tgt = rand_mat(35, "t", 3, 6);
        check_gradient(p, [&](Tape& t) {
            Var vp = t.param(p);
            Var y = layernorm_rows(vp, t.constant(gamma), t.constant(beta));
            return Probe{mse(y, t.constant(tgt)), vp};
        }, 2e-5);
    }
    SUBCASE("layernorm gamma") {
        Matrix x = rand_mat(36, "x", 3, 6);
        Matrix p = rand_mat(37, "g", 1, 6);
        Matrix beta = rand_mat(38, "b", 1, 6);
        Matrix tgt = rand_mat(39, "t", 3, 6);
        check_gradient(p, [&](Tape& t) {
            Var vp = t.param(p);
            Var y = layernorm_rows(t.constant(x), vp, t.constant(beta));
            return Probe{mse(y, t.constant(tgt)), vp};
        });
    }
    SUBCASE("layernorm beta") {
        Matrix x = rand_mat(40, "x", 3, 6);
        Matrix gamma = rand_mat(41, "g", 1, 6);
        Matrix p = rand_mat(42, "b", 1, 6);
        Matrix tgt = rand_mat(43, "t", 3, 6);
        check_gradient(p, [&](Tape& t) {
            Var vp = t.param(p);
            Var y = layernorm_rows(t.constant(x), t.constant(gamma), vp);
            return Probe{mse(y, t.constant(tgt)), vp};
        });
    }
    SUBCASE("mean_rows") {
        Matrix p = rand_mat(44, "p", 4, 3);
        Matrix tgt = rand_mat(45, "t", 1, 3);
        check_gradient(p, [&](Tape& t) {
            Var vp = t.param(p);
            return Probe{mse(mean_rows(vp), t.constant(tgt)), vp};
        });
    }
    SUBCASE("mean_diff both sides") {
        Matrix p = rand_mat(46, "p", 2, 3);
        Matrix b = rand_mat(47, "b", 2, 3);
        check_gradient(p, [&](Tape& t) {
            Var vp = t.param(p);
            return Probe{mean_diff(vp, t.constant(b)), vp};
        });
        check_gradient(p, [&](Tape& t) {
            Var vp = t.param(p);
            return Probe{mean_diff(t.constant(b), vp), vp};
        });
    }
    SUBCASE("mse second argument") {
        Matrix a = rand_mat(48, "a", 2, 3);
        Matrix p = rand_mat(49, "p", 2, 3);
        check_gradient(p, [&](Tape& t) {
            Var vp = t.param(p);
            return Probe{mse(t.constant(a), vp), vp};
        });
    }
    SUBCASE("deep composite expression") {
        // Exercises fan-out: the parameter feeds two branches that rejoin.
        Matrix p = rand_mat(50, "p", 3, 4);
        Matrix w = rand_mat(51, "w", 4, 4);
        Matrix gamma = Matrix::Ones(1, 4);
        Matrix beta = Matrix::Zero(1, 4);
        Matrix tgt = rand_mat(52, "t", 1, 4);
        check_gradient(p, [&](Tape& t) {
            Var vp = t.param(p);
            Var h = gelu(matmul(vp, t.constant(w)));
            Var n = layernorm_rows(add(h, vp), t.constant(gamma), t.constant(beta));
            Var attn = matmul(softmax_rows(matmul(n, transpose(n))), n);
            return Probe{mse(mean_rows(attn), t.constant(tgt)), vp};
        }, 5e-5);
    }
}

TEST_CASE("constants carry no gradient and skip closures") {
    Matrix a = rand_mat(60, "a", 2, 2);
    Matrix b = rand_mat(61, "b", 2, 2);
    Tape t;
    Var ca = t.constant(a);
    Var cb = t.constant(b);
    Var root = mse(matmul(ca, cb), ca);
    CHECK_FALSE(t.node(root.idx).needs_grad);
    t.backward(root);
    CHECK(t.grad(ca) == Matrix::Zero(2, 2));

    // A param anywhere in the expression re-enables tracking downstream.
    Tape t2;
    Var p = t2.param(a);
    Var mixed = mse(matmul(p, t2.constant(b)), t2.constant(a));
    CHECK(t2.node(mixed.idx).needs_grad);
}

TEST_CASE("gradient accumulates across reuse of one node") {
    // f = mse(p, 0) + mse(p, 0) via add of the two identical scalars.
    Matrix pv = rand_mat(62, "p", 2, 2);
    Tape t;
    Var p = t.param(pv);
    Var z = t.constant(Matrix::Zero(2, 2));
    Var l = add(mse(p, z), mse(p, z));
    t.backward(l);
    Matrix expect = 2.0 * (2.0 / pv.size()) * pv; // d/dp of 2*mean(p^2)
    CHECK((t.grad(p) - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("backward requires a scalar root") {
    Tape t;
    Var m = t.param(Matrix::Ones(2, 2));
    CHECK_THROWS_AS(t.backward(m), Error);
}

TEST_CASE("shape mismatches are rejected") {
    Tape t;
    Var a = t.constant(Matrix::Ones(2, 3));
    Var b = t.constant(Matrix::Ones(3, 2));
    CHECK_THROWS_AS(add(a, b), Error);
    CHECK_THROWS_AS(sub(a, b), Error);
    CHECK_THROWS_AS(mse(a, b), Error);
    CHECK_THROWS_AS(matmul(a, a), Error);
    CHECK_THROWS_AS(add_rowvec(a, t.constant(Matrix::Ones(1, 2))), Error);
}

TEST_CASE("attention built from tape ops matches the dense oracle") {
    Matrix q = rand_mat(70, "q", 2, 4);
    Matrix k = rand_mat(71, "k", 5, 4);
    Matrix v = rand_mat(72, "v", 5, 3);
    Tape t;
    Var scores = scale(matmul(t.constant(q), transpose(t.constant(k))),
                       1.0 / std::sqrt(4.0));
    Matrix out = t.val(matmul(softmax_rows(scores), t.constant(v)));
    Matrix ref = oracle::attention(q, k, v);
    CHECK((out - ref).cwiseAbs().maxCoeff() < 1e-9);
}
