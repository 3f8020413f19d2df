#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "testutil.hpp"
#include "uwkit/autograd.hpp"
#include "uwkit/nn.hpp"
#include "uwkit/rng.hpp"

using namespace uwkit;
namespace tu = testutil;

TEST_CASE("rng streams are deterministic and decorrelated") {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
        const double x = a.uniform();
        CHECK(x == b.uniform());
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
    }
    CHECK(a.uniform() != c.uniform());
    CHECK(derive_seed(1, "aug", 3, 4) != derive_seed(1, "aug", 4, 3));
    CHECK(derive_seed(1, "aug") != derive_seed(1, "mask"));
    CHECK(derive_seed(1, "aug", 2) == derive_seed(1, "aug", 2));
}

TEST_CASE("sample_without_replacement is uniform-ish and exact-count") {
    Rng rng(7);
    auto s = rng.sample_without_replacement(10, 4);
    CHECK(s.size() == 4);
    std::sort(s.begin(), s.end());
    CHECK(std::unique(s.begin(), s.end()) == s.end());
    for (int v : s) {
        CHECK(v >= 0);
        CHECK(v < 10);
    }
    Rng r2(7);
    CHECK(r2.sample_without_replacement(10, 4) == Rng(7).sample_without_replacement(10, 4));
}

TEST_CASE("elementwise and matmul gradients match finite differences") {
    Rng rng(11);
    auto a = ag::leaf(tu::random_tensor({3, 4}, rng), true);
    auto b = ag::leaf(tu::random_tensor({4, 5}, rng), true);
    auto c = ag::leaf(tu::random_tensor({3, 5}, rng), true);
    auto f = [&] {
        auto y = ag::matmul(a, b);
        y = ag::mul(y, c);
        y = ag::add(y, c);
        return ag::mean_all(ag::gelu(y));
    };
    auto res = tu::gradcheck(f, {{"a", a}, {"b", b}, {"c", c}});
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("activation gradients") {
    Rng rng(12);
    auto x = ag::leaf(tu::random_tensor({4, 6}, rng), true);
    for (auto fn : {0, 1, 2, 3, 4}) {
        auto f = [&] {
            ag::Var y;
            switch (fn) {
                case 0: y = ag::relu(x); break;
                case 1: y = ag::leaky_relu(x, 0.2); break;
                case 2: y = ag::elu(x); break;
                case 3: y = ag::sigmoid(x); break;
                default: y = ag::gelu(x); break;
            }
            return ag::sum_all(ag::mul(y, y));
        };
        auto res = tu::gradcheck(f, {{"x", x}});
        CHECK(res.max_rel_err < 1e-5);
    }
}

TEST_CASE("softmax rows sum to one and gradient is correct") {
    Rng rng(13);
    auto x = ag::leaf(tu::random_tensor({5, 7}, rng), true);
    auto y = ag::softmax_rows(x);
    for (int r = 0; r < 5; ++r) {
        double s = 0.0;
        for (int c = 0; c < 7; ++c) s += y->value.at(r, c);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    auto w = ag::constant(tu::random_tensor({5, 7}, rng));
    auto f = [&] { return ag::sum_all(ag::mul(ag::softmax_rows(x), w)); };
    CHECK(tu::gradcheck(f, {{"x", x}}).max_rel_err < 1e-6);
}

TEST_CASE("layer_norm gradient") {
    Rng rng(14);
    auto x = ag::leaf(tu::random_tensor({3, 8}, rng), true);
    auto g = ag::leaf(Tensor::full({8}, 1.1), true);
    auto b = ag::leaf(tu::random_tensor({8}, rng, 0.1), true);
    auto w = ag::constant(tu::random_tensor({3, 8}, rng));
    auto f = [&] { return ag::sum_all(ag::mul(ag::layer_norm(x, g, b), w)); };
    auto res = tu::gradcheck(f, {{"x", x}, {"g", g}, {"b", b}});
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("slice/concat/gather/row_zero gradients") {
    Rng rng(15);
    auto x = ag::leaf(tu::random_tensor({6, 8}, rng), true);
    auto f = [&] {
        auto a = ag::slice_cols(x, 0, 4);
        auto b = ag::slice_cols(x, 4, 4);
        auto cat = ag::concat_cols({b, a});
        auto g = ag::gather_rows(cat, {0, 0, 3, 5});
        auto z = ag::row_zero(g, {0, 1, 0, 0});
        auto rows = ag::concat_rows({g, z});
        return ag::mean_all(ag::mul(rows, rows));
    };
    CHECK(tu::gradcheck(f, {{"x", x}}).max_rel_err < 1e-6);
}

TEST_CASE("loss op gradients") {
    Rng rng(16);
    auto x = ag::leaf(tu::random_tensor({4, 5}, rng), true);
    Tensor t = tu::random_tensor({4, 5}, rng);
    Tensor t01({4, 5});
    for (auto& v : t01.data) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
    auto y = ag::leaf(tu::random_tensor({4, 5}, rng), true);

    CHECK(tu::gradcheck([&] { return ag::mse_loss(x, y); }, {{"x", x}, {"y", y}}).max_rel_err < 1e-6);
    CHECK(tu::gradcheck([&] { return ag::bce_with_logits_loss(x, t01); }, {{"x", x}}).max_rel_err <
          1e-6);
    CHECK(tu::gradcheck([&] { return ag::smooth_l1_loss(x, t, 1.0); }, {{"x", x}}).max_rel_err <
          1e-5);
    std::vector<int> labels{0, 3, 2, 4};
    CHECK(tu::gradcheck([&] { return ag::softmax_ce_loss(x, labels); }, {{"x", x}}).max_rel_err <
          1e-6);
}

TEST_CASE("conv2d matches direct computation and gradcheck") {
    Rng rng(17);
    auto x = ag::leaf(tu::random_tensor({5, 6, 3}, rng), true);
    auto w = ag::leaf(tu::random_tensor({3, 3, 3, 2}, rng), true);
    auto b = ag::leaf(tu::random_tensor({2}, rng), true);
    auto out = ag::conv2d(x, w, b, 1, 1);
    CHECK(out->value.shape == std::vector<int64_t>{5, 6, 2});
    // Direct evaluation of one output element.
    double acc = b->value[1];
    for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx)
            for (int ci = 0; ci < 3; ++ci) {
                const int iy = 2 + ky - 1, ix = 3 + kx - 1;
                acc += x->value.at(iy, ix, ci) * w->value.data[((ky * 3 + kx) * 3 + ci) * 2 + 1];
            }
    CHECK(out->value.at(2, 3, 1) == doctest::Approx(acc).epsilon(1e-12));
    auto f = [&] { return ag::mean_all(ag::mul(ag::conv2d(x, w, b, 1, 1), ag::conv2d(x, w, b, 1, 1))); };
    CHECK(tu::gradcheck(f, {{"x", x}, {"w", w}, {"b", b}}).max_rel_err < 1e-5);
}

TEST_CASE("conv_transpose2x doubles resolution with gradcheck") {
    Rng rng(18);
    auto x = ag::leaf(tu::random_tensor({3, 4, 4}, rng), true);
    auto w = ag::leaf(tu::random_tensor({2, 2, 4, 2}, rng), true);
    auto b = ag::leaf(tu::random_tensor({2}, rng), true);
    auto out = ag::conv_transpose2x(x, w, b);
    CHECK(out->value.shape == std::vector<int64_t>{6, 8, 2});
    auto f = [&] {
        auto y = ag::conv_transpose2x(x, w, b);
        return ag::mean_all(ag::mul(y, y));
    };
    CHECK(tu::gradcheck(f, {{"x", x}, {"w", w}, {"b", b}}).max_rel_err < 1e-5);
}

TEST_CASE("bilinear upsample, pools, channel_scale gradients") {
    Rng rng(19);
    auto x = ag::leaf(tu::random_tensor({4, 4, 3}, rng), true);
    auto g = ag::leaf(tu::random_tensor({3}, rng), true);
    auto f1 = [&] {
        auto y = ag::upsample_bilinear(x, 8, 8);
        return ag::mean_all(ag::mul(y, y));
    };
    CHECK(tu::gradcheck(f1, {{"x", x}}).max_rel_err < 1e-6);
    auto f2 = [&] {
        auto m = ag::global_max_pool(x);
        auto a = ag::global_avg_pool(x);
        return ag::sum_all(ag::mul(m, a));
    };
    CHECK(tu::gradcheck(f2, {{"x", x}}).max_rel_err < 1e-5);
    auto f3 = [&] {
        auto y = ag::channel_scale(x, ag::sigmoid(g));
        return ag::mean_all(ag::mul(y, y));
    };
    CHECK(tu::gradcheck(f3, {{"x", x}, {"g", g}}).max_rel_err < 1e-6);
}

TEST_CASE("roi_align: identity on aligned full-image box and gradcheck") {
    Rng rng(20);
    auto x = ag::leaf(tu::random_tensor({14, 14, 2}, rng), true);
    Tensor boxes({1, 4}, {0.0, 0.0, 14.0, 14.0});
    auto out = ag::roi_align(x, boxes, 1.0, 14);
    CHECK(out->value.shape == std::vector<int64_t>{1, 14, 14, 2});
    for (int r = 0; r < 14; ++r)
        for (int c = 0; c < 14; ++c)
            for (int ch = 0; ch < 2; ++ch)
                CHECK(out->value.data[((0 * 14 + r) * 14 + c) * 2 + ch] ==
                      doctest::Approx(x->value.at(r, c, ch)).epsilon(1e-6));

    Tensor boxes2({2, 4}, {1.3, 2.1, 9.7, 11.2, 4.0, 4.0, 4.0, 4.0});  // second is degenerate
    auto f = [&] {
        auto y = ag::roi_align(x, boxes2, 1.0, 7);
        return ag::mean_all(ag::mul(y, y));
    };
    CHECK(tu::gradcheck(f, {{"x", x}}).max_rel_err < 1e-6);
}

TEST_CASE("gat_aggregate gradcheck") {
    Rng rng(21);
    auto u = ag::leaf(tu::random_tensor({6, 4}, rng), true);
    auto si = ag::leaf(tu::random_tensor({6}, rng), true);
    auto sj = ag::leaf(tu::random_tensor({6}, rng), true);
    std::vector<std::vector<int>> nbr{{0, 1, 2}, {1, 3}, {0, 2, 4, 5}, {3}, {4, 5, 1}, {5, 0}};
    auto f = [&] {
        auto y = ag::gat_aggregate(u, si, sj, nbr, 0.2);
        return ag::mean_all(ag::mul(y, y));
    };
    CHECK(tu::gradcheck(f, {{"u", u}, {"si", si}, {"sj", sj}}).max_rel_err < 1e-5);
}

TEST_CASE("gradients do not flow into constants") {
    Rng rng(22);
    auto x = ag::leaf(tu::random_tensor({3, 3}, rng), true);
    auto frozen = ag::constant(tu::random_tensor({3, 3}, rng));
    auto y = ag::mse_loss(ag::matmul(x, frozen), frozen);
    ag::backward(y);
    CHECK(x->has_grad_buffer());
    CHECK_FALSE(frozen->has_grad_buffer());
}

TEST_CASE("AdamW determinism and decoupled decay") {
    auto run = [&] {
        nn::ParamStore ps(5, true);
        auto w = ps.add_normal("w", {4, 4}, 1.0);
        nn::AdamW opt(ps, {.lr = 1e-2, .weight_decay = 1e-2});
        for (int i = 0; i < 10; ++i) {
            ps.zero_grads();
            auto loss = ag::mse_loss(w, ag::constant(Tensor::zeros({4, 4})));
            ag::backward(loss);
            opt.step();
        }
        return w->value;
    };
    auto a = run(), b = run();
    CHECK(a.data == b.data);
}
