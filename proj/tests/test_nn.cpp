#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "glamap/nn/autodiff.hpp"
#include "glamap/random.hpp"

using namespace glamap;
using namespace glamap::nn;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor t(shape);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal() * scale;
    return t;
}

// Central finite differences of a scalar-valued graph builder w.r.t. one leaf.
Tensor fd_grad(const std::function<Var(const std::vector<Var>&)>& f,
               std::vector<Var> leaves, size_t which, double h = 1e-6) {
    Tensor& w = leaves[which].mutable_val();
    Tensor g(w.shape());
    for (int64_t i = 0; i < w.numel(); ++i) {
        const double orig = w[i];
        w[i] = orig + h;
        const double lp = f(leaves).val()[0];
        w[i] = orig - h;
        const double lm = f(leaves).val()[0];
        w[i] = orig;
        g[i] = (lp - lm) / (2 * h);
    }
    return g;
}

void check_grads(const std::function<Var(const std::vector<Var>&)>& f,
                 std::vector<Var> leaves, double tol = 1e-6) {
    for (auto& l : leaves) l.zero_grad();
    Var loss = f(leaves);
    backward(loss);
    for (size_t k = 0; k < leaves.size(); ++k) {
        if (!leaves[k].requires_grad()) continue;
        Tensor fd = fd_grad(f, leaves, k);
        CAPTURE(k);
        CHECK(max_rel_err(leaves[k].grad(), fd) < tol);
    }
}

}  // namespace

TEST_CASE("elementwise ops match finite differences") {
    Rng rng(7);
    auto a = Var::leaf(random_tensor({3, 4}, rng), true);
    auto b = Var::leaf(random_tensor({3, 4}, rng), true);

    check_grads([](const std::vector<Var>& v) { return op::sum_all(op::mul(v[0], v[1])); },
                {a, b});
    check_grads(
        [](const std::vector<Var>& v) {
            return op::mean_all(op::gelu(op::sub(v[0], op::mul_scalar(v[1], 0.7))));
        },
        {a, b});
    check_grads(
        [](const std::vector<Var>& v) { return op::sum_all(op::sigmoid(op::add(v[0], v[1]))); },
        {a, b});

    auto pos = Var::leaf(Tensor::full({5}, 0.0), true);
    for (int i = 0; i < 5; ++i) pos.mutable_val()[i] = 0.3 + 0.4 * i;
    check_grads(
        [](const std::vector<Var>& v) {
            return op::sum_all(op::mul(op::log(v[0]), op::pow_const(v[0], 2.0)));
        },
        {pos}, 1e-5);
}

TEST_CASE("matmul, linear and bmm gradients") {
    Rng rng(11);
    auto a = Var::leaf(random_tensor({4, 3}, rng), true);
    auto b = Var::leaf(random_tensor({3, 5}, rng), true);
    check_grads([](const std::vector<Var>& v) { return op::sum_all(op::matmul(v[0], v[1])); },
                {a, b});

    auto x = Var::leaf(random_tensor({6, 4}, rng), true);
    auto w = Var::leaf(random_tensor({4, 3}, rng), true);
    auto bias = Var::leaf(random_tensor({3}, rng), true);
    check_grads(
        [](const std::vector<Var>& v) {
            return op::mean_all(op::gelu(op::linear(v[0], v[1], v[2])));
        },
        {x, w, bias});

    auto p = Var::leaf(random_tensor({2, 3, 4}, rng), true);
    auto q = Var::leaf(random_tensor({2, 4, 5}, rng), true);
    check_grads([](const std::vector<Var>& v) { return op::sum_all(op::bmm(v[0], v[1])); },
                {p, q});
}

TEST_CASE("conv2d gradients (stride and padding)") {
    Rng rng(13);
    auto x = Var::leaf(random_tensor({3, 6, 7}, rng), true);
    auto w = Var::leaf(random_tensor({4, 3, 3, 3}, rng, 0.4), true);
    auto b = Var::leaf(random_tensor({4}, rng), true);
    check_grads(
        [](const std::vector<Var>& v) {
            return op::mean_all(op::conv2d(v[0], v[1], v[2], 1, 1));
        },
        {x, w, b});
    auto x2 = Var::leaf(random_tensor({2, 8, 8}, rng), true);
    auto w2 = Var::leaf(random_tensor({3, 2, 3, 3}, rng, 0.4), true);
    auto b2 = Var::leaf(random_tensor({3}, rng), true);
    check_grads(
        [](const std::vector<Var>& v) {
            return op::mean_all(op::conv2d(v[0], v[1], v[2], 2, 1));
        },
        {x2, w2, b2});
}

TEST_CASE("softmax, layer_norm, upsample, pooling gradients") {
    Rng rng(17);
    auto x = Var::leaf(random_tensor({2, 4, 4}, rng), true);
    check_grads(
        [](const std::vector<Var>& v) {
            // weighted sum so the softmax jacobian is non-trivially exercised
            Var p = op::softmax_dim0(v[0]);
            return op::sum_all(op::mul(p, op::pow_const(p, 2.0)));
        },
        {x});

    auto t = Var::leaf(random_tensor({3, 5}, rng), true);
    auto gm = Var::leaf(random_tensor({5}, rng), true);
    auto bt = Var::leaf(random_tensor({5}, rng), true);
    check_grads(
        [](const std::vector<Var>& v) {
            return op::sum_all(op::gelu(op::layer_norm(v[0], v[1], v[2])));
        },
        {t, gm, bt}, 5e-6);

    auto s = Var::leaf(random_tensor({2, 3, 3}, rng), true);
    check_grads(
        [](const std::vector<Var>& v) {
            return op::mean_all(op::gelu(op::upsample_bilinear(v[0], 2)));
        },
        {s});

    auto g = Var::leaf(random_tensor({3, 4, 4}, rng), true);
    auto sc = Var::leaf(random_tensor({3}, rng), true);
    check_grads(
        [](const std::vector<Var>& v) {
            Var pooled = op::global_avg_pool(v[0]);
            Var gated = op::scale_channels(v[0], op::sigmoid(pooled));
            return op::mean_all(op::add_channel_bias(gated, v[1]));
        },
        {g, sc});
}

TEST_CASE("patchify, permute, reshape, concat gradients") {
    Rng rng(19);
    auto x = Var::leaf(random_tensor({2, 4, 4}, rng), true);
    check_grads(
        [](const std::vector<Var>& v) {
            Var tok = op::patchify(v[0], 2);                 // (4, 8)
            Var at = op::softmax_lastdim(tok);
            Var perm = op::permute(op::reshape(at, {4, 2, 4}), {1, 0, 2});
            return op::sum_all(op::pow_const(perm, 2.0));
        },
        {x});

    auto a = Var::leaf(random_tensor({2, 3, 3}, rng), true);
    auto b = Var::leaf(random_tensor({4, 3, 3}, rng), true);
    check_grads(
        [](const std::vector<Var>& v) {
            return op::mean_all(op::gelu(op::concat_channels({v[0], v[1]})));
        },
        {a, b});
}

TEST_CASE("dropout is identity at rate 0 and rescales otherwise") {
    Rng rng(23);
    auto x = Var::leaf(random_tensor({8, 8}, rng), true);
    Rng d(1);
    Var y = op::dropout(x, 0.0, d);
    CHECK(y.node() == x.node());

    // At rate>0, surviving entries are x/keep; mean is preserved in expectation.
    Rng d2(2);
    Var z = op::dropout(x, 0.5, d2);
    int zeros = 0;
    for (int64_t i = 0; i < z.val().numel(); ++i) {
        if (z.val()[i] == 0.0)
            ++zeros;
        else
            CHECK(z.val()[i] == doctest::Approx(x.val()[i] * 2.0));
    }
    CHECK(zeros > 5);
    CHECK(zeros < 60);

    backward(op::sum_all(z));
    for (int64_t i = 0; i < x.val().numel(); ++i)
        CHECK(x.grad()[i] == (z.val()[i] == 0.0 ? 0.0 : 2.0));
}

TEST_CASE("backward accumulates across shared subgraphs") {
    auto x = Var::leaf(Tensor::from({2.0}, {1}), true);
    Var y = op::mul(x, x);  // x^2
    Var z = op::add(y, op::mul_scalar(x, 3.0));
    backward(z);
    CHECK(x.grad()[0] == doctest::Approx(2 * 2.0 + 3.0));
}

TEST_CASE("rng determinism and fork independence") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
    Rng c = a.fork(1), d2 = a.fork(2);
    CHECK(c.next() != d2.next());
    double m = 0;
    Rng n(5);
    for (int i = 0; i < 20000; ++i) m += n.normal();
    CHECK(std::abs(m / 20000) < 0.03);
}
