#include <doctest.h>

#include <cmath>
#include <span>
#include <numeric>

#include "stylebias/nn.hpp"
#include "stylebias/rng.hpp"

using namespace stylebias;

namespace {

// Scalar objective used by the finite-difference checks: sum of squares of
// the output, so dL/dout = 2*out.
double sum_sq(const std::vector<float>& v) {
    double s = 0;
    for (float x : v) s += static_cast<double>(x) * x;
    return s;
}

std::vector<float> two_x(const std::vector<float>& v) {
    std::vector<float> g(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) g[i] = 2.f * v[i];
    return g;
}

}  // namespace

TEST_CASE("conv parameter and input gradients match finite differences") {
    Rng rng = make_rng(42);
    nn::Conv2d conv(2, 3, 1);
    conv.he_init(rng);
    Fmap x(2, 5, 5);
    for (float& v : x.v) v = uniform(rng, -1.f, 1.f);

    std::vector<float> col;
    Fmap out = conv.forward(x, &col);
    conv.zero_grad();
    Fmap gout(out.c, out.h, out.w);
    gout.v = two_x(out.v);
    conv.accumulate_grads(col, gout);
    const Fmap gin = conv.input_grad(gout, x.h, x.w);

    const float h = 1e-3f;
    // sampled weight entries
    Rng pick = make_rng(7);
    for (int trial = 0; trial < 25; ++trial) {
        const int i = uniform_int(pick, 0, static_cast<int>(conv.w.size()) - 1);
        const float keep = conv.w[i];
        conv.w[i] = keep + h;
        const double lp = sum_sq(conv.forward(x, nullptr).v);
        conv.w[i] = keep - h;
        const double lm = sum_sq(conv.forward(x, nullptr).v);
        conv.w[i] = keep;
        const double fd = (lp - lm) / (2 * h);
        CHECK(std::abs(conv.gw[i] - fd) <= 1e-3 * std::max(1.0, std::abs(fd)));
    }
    // bias entries
    for (int i = 0; i < static_cast<int>(conv.b.size()); ++i) {
        const float keep = conv.b[i];
        conv.b[i] = keep + h;
        const double lp = sum_sq(conv.forward(x, nullptr).v);
        conv.b[i] = keep - h;
        const double lm = sum_sq(conv.forward(x, nullptr).v);
        conv.b[i] = keep;
        const double fd = (lp - lm) / (2 * h);
        CHECK(std::abs(conv.gb[i] - fd) <= 1e-3 * std::max(1.0, std::abs(fd)));
    }
    // sampled input entries
    for (int trial = 0; trial < 25; ++trial) {
        const int i = uniform_int(pick, 0, static_cast<int>(x.v.size()) - 1);
        const float keep = x.v[i];
        x.v[i] = keep + h;
        const double lp = sum_sq(conv.forward(x, nullptr).v);
        x.v[i] = keep - h;
        const double lm = sum_sq(conv.forward(x, nullptr).v);
        x.v[i] = keep;
        const double fd = (lp - lm) / (2 * h);
        CHECK(std::abs(gin.v[i] - fd) <= 1e-3 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("strided conv output size and gradient") {
    Rng rng = make_rng(5);
    nn::Conv2d conv(1, 2, 2);
    conv.he_init(rng);
    Fmap x(1, 6, 6);
    for (float& v : x.v) v = uniform(rng, -1.f, 1.f);
    std::vector<float> col;
    Fmap out = conv.forward(x, &col);
    CHECK(out.h == 3);
    CHECK(out.w == 3);

    conv.zero_grad();
    Fmap gout(out.c, out.h, out.w);
    gout.v = two_x(out.v);
    conv.accumulate_grads(col, gout);
    const float h = 1e-3f;
    Rng pick = make_rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        const int i = uniform_int(pick, 0, static_cast<int>(conv.w.size()) - 1);
        const float keep = conv.w[i];
        conv.w[i] = keep + h;
        const double lp = sum_sq(conv.forward(x, nullptr).v);
        conv.w[i] = keep - h;
        const double lm = sum_sq(conv.forward(x, nullptr).v);
        conv.w[i] = keep;
        const double fd = (lp - lm) / (2 * h);
        CHECK(std::abs(conv.gw[i] - fd) <= 1e-3 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("linear layer gradients match finite differences") {
    Rng rng = make_rng(13);
    nn::Linear lin(6, 4);
    lin.he_init(rng);
    std::vector<float> x(6);
    for (float& v : x) v = uniform(rng, -1.f, 1.f);

    lin.zero_grad();
    std::vector<float> out = lin.forward(x);
    lin.accumulate_grads(x, two_x(out));
    const std::vector<float> gin = lin.input_grad(two_x(out));

    const float h = 1e-3f;
    for (std::size_t i = 0; i < lin.w.size(); ++i) {
        const float keep = lin.w[i];
        lin.w[i] = keep + h;
        const double lp = sum_sq(lin.forward(x));
        lin.w[i] = keep - h;
        const double lm = sum_sq(lin.forward(x));
        lin.w[i] = keep;
        CHECK(std::abs(lin.gw[i] - (lp - lm) / (2 * h)) <= 2e-3);
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        const float keep = x[i];
        x[i] = keep + h;
        const double lp = sum_sq(lin.forward(x));
        x[i] = keep - h;
        const double lm = sum_sq(lin.forward(x));
        x[i] = keep;
        CHECK(std::abs(gin[i] - (lp - lm) / (2 * h)) <= 2e-3);
    }
}

TEST_CASE("upsample and pooling backwards are adjoint to their forwards") {
    Rng rng = make_rng(77);
    // <A x, y> == <x, A^T y> for linear maps A
    Fmap x(2, 3, 3);
    for (float& v : x.v) v = uniform(rng, -1.f, 1.f);
    const Fmap up = nn::upsample2_nearest(x);
    Fmap y(up.c, up.h, up.w);
    for (float& v : y.v) v = uniform(rng, -1.f, 1.f);
    const Fmap xt = nn::upsample2_backward(y);
    double axy = 0, xaty = 0;
    for (std::size_t i = 0; i < up.v.size(); ++i) axy += static_cast<double>(up.v[i]) * y.v[i];
    for (std::size_t i = 0; i < x.v.size(); ++i) xaty += static_cast<double>(x.v[i]) * xt.v[i];
    CHECK(axy == doctest::Approx(xaty).epsilon(1e-5));

    const std::vector<float> pooled = nn::global_avg_pool(x);
    CHECK(pooled.size() == 2);
    std::vector<float> gy(2);
    for (float& v : gy) v = uniform(rng, -1.f, 1.f);
    const Fmap gx = nn::global_avg_pool_backward(gy, x.h, x.w);
    double pa = 0, pb = 0;
    for (int c = 0; c < 2; ++c) pa += static_cast<double>(pooled[c]) * gy[c];
    for (std::size_t i = 0; i < x.v.size(); ++i) pb += static_cast<double>(x.v[i]) * gx.v[i];
    CHECK(pa == doctest::Approx(pb).epsilon(1e-5));
}

TEST_CASE("relu backward gates on the post-activation sign") {
    Fmap x(1, 1, 4);
    x.v = {-1.f, 0.f, 2.f, 3.f};
    nn::relu_inplace(x);
    CHECK(x.v == std::vector<float>{0.f, 0.f, 2.f, 3.f});
    Fmap g(1, 1, 4);
    g.v = {5.f, 5.f, 5.f, 5.f};
    nn::relu_backward_inplace(g, x);
    CHECK(g.v == std::vector<float>{0.f, 0.f, 5.f, 5.f});
}

TEST_CASE("cross entropy matches closed forms") {
    // uniform logits over 7 classes -> log 7
    std::vector<float> u(7, 0.42f);
    CHECK(nn::cross_entropy(u, 3, nullptr) == doctest::Approx(1.9459101490553132).epsilon(1e-6));
    // logits [1,2,3], label 0 -> log(e + e^2 + e^3) - 1
    std::vector<float> l{1.f, 2.f, 3.f};
    CHECK(nn::cross_entropy(l, 0, nullptr) == doctest::Approx(2.40760596444438).epsilon(1e-6));

    std::vector<float> d;
    nn::cross_entropy(l, 0, &d);
    const std::vector<float> p = nn::softmax(l);
    CHECK(d[0] == doctest::Approx(p[0] - 1.0).epsilon(1e-6));
    CHECK(d[1] == doctest::Approx(p[1]).epsilon(1e-6));
    double psum = 0;
    for (float v : p) psum += v;
    CHECK(psum == doctest::Approx(1.0).epsilon(1e-7));

    CHECK_THROWS_AS(nn::cross_entropy(l, 3, nullptr), ArgumentError);
    CHECK_THROWS_AS(nn::cross_entropy(l, -1, nullptr), ArgumentError);
    std::vector<float> bad{1.f, std::nanf(""), 0.f};
    CHECK_THROWS_AS(nn::cross_entropy(bad, 0, nullptr), ArgumentError);
}

TEST_CASE("sgd recurrence follows the momentum + weight-decay closed trajectory") {
    // v <- mu v + g + wd w ; w <- w - lr v, checked in double precision
    std::vector<double> w{1.0}, v{0.0};
    const std::vector<double> grads{0.5, -0.2, 0.1, 0.0, 0.3};
    const std::vector<double> expected_w{0.949, 0.9221509999999999, 0.887064749,
                                         0.854600058351, 0.794527236708549};
    const std::vector<double> expected_v{0.51, 0.26849, 0.35086251, 0.32464690649,
                                         0.6007282164245099};
    for (std::size_t i = 0; i < grads.size(); ++i) {
        std::vector<double> g{grads[i]};
        nn::sgd_step<double>(std::span<double>(w), std::span<const double>(g),
                             std::span<double>(v), 0.1, 0.9, 0.01);
        CHECK(std::abs(w[0] - expected_w[i]) < 1e-10);
        CHECK(std::abs(v[0] - expected_v[i]) < 1e-10);
    }
}

TEST_CASE("param_hash tracks parameter bytes") {
    Rng rng = make_rng(3);
    nn::Linear lin(4, 2);
    lin.he_init(rng);
    std::vector<nn::ParamView> params = lin.params();
    const std::uint64_t h0 = nn::param_hash(params);
    CHECK(h0 == nn::param_hash(params));
    lin.w[0] += 0.25f;
    CHECK(nn::param_hash(params) != h0);
}
