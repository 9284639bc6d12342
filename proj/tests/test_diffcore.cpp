#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "sf/adam.hpp"
#include "sf/checkpoint.hpp"
#include "sf/errors.hpp"
#include "sf/rng.hpp"
#include "sf/tape.hpp"

using namespace sf;

namespace {

Array random_array(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Array a(std::move(shape));
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(lo, hi);
    return a;
}

// Random values kept away from zero so relu/abs kinks cannot sit inside the
// finite-difference stencil.
Array random_array_away_from_zero(Shape shape, Rng& rng, double min_abs = 0.1) {
    Array a(std::move(shape));
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double mag = rng.uniform(min_abs, 1.0);
        a[i] = rng.uniform() < 0.5 ? -mag : mag;
    }
    return a;
}

}  // namespace

TEST_CASE("forward op examples") {
    auto x = constant(Array::scalar(0.0));
    CHECK(sf::sin(x)->value.item() == doctest::Approx(0.0));

    // d sin / dx at 0 is 1
    auto err = grad_check([](const NodePtr& v) { return sf::sin(v); }, Array::scalar(0.0), 1e-6);
    CHECK(err < 1e-8);

    // matmul(I3, A) == A
    Array eye(Shape{3, 3});
    for (int i = 0; i < 3; ++i) eye.at2(i, i) = 1.0;
    Rng rng(7);
    Array a = random_array({3, 5}, rng);
    Array out = matmul(constant(eye), constant(a))->value;
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(out[i] == a[i]);

    // softplus(0) = ln 2, derivative 1/2
    auto sp = softplus(constant(Array::scalar(0.0)));
    CHECK(sp->value.item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    auto x0 = param(Array::scalar(0.0));
    auto y = softplus(x0);
    backward(y);
    CHECK(x0->grad.item() == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("backward basics") {
    Rng rng(11);
    auto x = param(random_array({5}, rng));
    backward(sum_all(x));
    for (std::size_t i = 0; i < 5; ++i) CHECK(x->grad[i] == 1.0);

    // mean((x - y)^2) at x == y has zero gradient
    Array v = random_array({4}, rng);
    auto xa = param(v);
    auto ya = constant(v);
    auto d = sub(xa, ya);
    backward(mean_all(mul(d, d)));
    for (std::size_t i = 0; i < 4; ++i) CHECK(xa->grad[i] == 0.0);
}

TEST_CASE("backward accumulates across calls and errors on non-scalar root") {
    auto x = param(Array(Shape{3}, std::vector<double>{1.0, 2.0, 3.0}));
    auto y = sum_all(mul(x, x));
    backward(y);
    backward(y);
    for (std::size_t i = 0; i < 3; ++i) CHECK(x->grad[i] == doctest::Approx(4.0 * x->value[i]));

    CHECK_THROWS_AS(backward(mul(x, x)), Error);
}

TEST_CASE("3-layer MLP gradient matches finite differences") {
    Rng rng(23);
    const std::size_t in = 4, hidden = 6;
    Array w0 = random_array({in, hidden}, rng, -0.7, 0.7);
    Array b0 = random_array({hidden}, rng, -0.2, 0.2);
    Array w1 = random_array({hidden, hidden}, rng, -0.7, 0.7);
    Array b1 = random_array({hidden}, rng, -0.2, 0.2);
    Array w2 = random_array({hidden, 1}, rng, -0.7, 0.7);
    Array input = random_array({3, in}, rng);

    auto net = [&](const NodePtr& w0n, const NodePtr& w1n, const NodePtr& w2n) {
        auto h0 = relu(add(matmul(constant(input), w0n), constant(b0)));
        auto h1 = relu(add(matmul(h0, w1n), constant(b1)));
        return mean_all(matmul(h1, w2n));
    };

    auto check_param = [&](const Array& at, auto f) {
        const double err = grad_check(f, at, 1e-5);
        CHECK(err < 1e-4);
    };
    check_param(w0, [&](const NodePtr& v) { return net(v, constant(w1), constant(w2)); });
    check_param(w1, [&](const NodePtr& v) { return net(constant(w0), v, constant(w2)); });
    check_param(w2, [&](const NodePtr& v) { return net(constant(w0), constant(w1), v); });
}

TEST_CASE("grad_check closed forms") {
    // f(x) = x*x at 3 -> d/dx = 6, tight agreement
    auto err = grad_check([](const NodePtr& v) { return mul(v, v); }, Array::scalar(3.0), 1e-5);
    CHECK(err < 1e-8);

    // constant f -> both sides zero
    err = grad_check([](const NodePtr&) { return constant(Array::scalar(5.0)); },
                     Array::scalar(1.0), 1e-5);
    CHECK(err == 0.0);
}

// Per-op finite-difference sweep: every registered op, fixed seed, tol 1e-4.
TEST_CASE("gradient check of every registered op") {
    Rng rng(1234);
    const double h = 1e-5;
    const double tol = 1e-4;

    auto fd = [&](const std::string& name, const Array& point, auto f) {
        INFO("op: ", name);
        CHECK(grad_check(f, point, h) < tol);
    };

    Array a = random_array_away_from_zero({3, 4}, rng);
    Array b = random_array_away_from_zero({3, 4}, rng);
    Array proj = random_array({3, 4}, rng);
    auto weighted_sum = [&](const NodePtr& n) { return sum_all(mul(n, constant(proj))); };

    fd("add", a, [&](const NodePtr& v) { return weighted_sum(add(v, constant(b))); });
    fd("add.broadcast", random_array({4}, rng), [&](const NodePtr& v) {
        return weighted_sum(add(constant(a), v));
    });
    fd("sub", a, [&](const NodePtr& v) { return weighted_sum(sub(v, constant(b))); });
    fd("mul", a, [&](const NodePtr& v) { return weighted_sum(mul(v, constant(b))); });
    fd("mul.rhs", b, [&](const NodePtr& v) { return weighted_sum(mul(constant(a), v)); });
    fd("div", a, [&](const NodePtr& v) { return weighted_sum(div(v, constant(b))); });
    fd("div.rhs", b, [&](const NodePtr& v) { return weighted_sum(div(constant(a), v)); });
    fd("neg", a, [&](const NodePtr& v) { return weighted_sum(neg(v)); });
    fd("scale", a, [&](const NodePtr& v) { return weighted_sum(scale(v, -2.5)); });
    fd("add_scalar", a, [&](const NodePtr& v) { return weighted_sum(add_scalar(v, 0.7)); });

    Array m1 = random_array({3, 5}, rng), m2 = random_array({5, 2}, rng);
    Array projm = random_array({3, 2}, rng);
    fd("matmul.lhs", m1, [&](const NodePtr& v) {
        return sum_all(mul(matmul(v, constant(m2)), constant(projm)));
    });
    fd("matmul.rhs", m2, [&](const NodePtr& v) {
        return sum_all(mul(matmul(constant(m1), v), constant(projm)));
    });

    fd("sin", a, [&](const NodePtr& v) { return weighted_sum(sf::sin(v)); });
    fd("cos", a, [&](const NodePtr& v) { return weighted_sum(sf::cos(v)); });
    fd("exp", a, [&](const NodePtr& v) { return weighted_sum(sf::exp(v)); });
    fd("log", random_array({3, 4}, rng, 0.3, 2.0),
       [&](const NodePtr& v) { return weighted_sum(sf::log(v)); });
    fd("sqrt", random_array({3, 4}, rng, 0.3, 2.0),
       [&](const NodePtr& v) { return weighted_sum(sf::sqrt(v)); });
    fd("relu", a, [&](const NodePtr& v) { return weighted_sum(relu(v)); });
    fd("softplus", a, [&](const NodePtr& v) { return weighted_sum(softplus(v)); });
    fd("sigmoid", a, [&](const NodePtr& v) { return weighted_sum(sigmoid(v)); });

    Array cproj = random_array({3, 8}, rng);
    fd("concat", a, [&](const NodePtr& v) {
        return sum_all(mul(concat({v, constant(b)}), constant(cproj)));
    });
    Array sproj = random_array({3, 2}, rng);
    fd("slice_last", a, [&](const NodePtr& v) {
        return sum_all(mul(slice_last(v, 1, 3), constant(sproj)));
    });
    Array rproj = random_array({12}, rng);
    fd("reshape", a, [&](const NodePtr& v) {
        return sum_all(mul(reshape(v, {12}), constant(rproj)));
    });

    Array table = random_array({6, 3}, rng);
    std::vector<std::uint32_t> idx{0, 5, 2, 2};
    Array gproj = random_array({4, 3}, rng);
    fd("gather_rows", table, [&](const NodePtr& v) {
        return sum_all(mul(gather_rows(v, idx), constant(gproj)));
    });
    std::vector<std::uint32_t> widx{0, 1, 2, 3, 1, 1, 4, 5};
    std::vector<double> wts{0.1, 0.4, 0.3, 0.2, 0.25, 0.25, 0.25, 0.25};
    Array wproj = random_array({2, 3}, rng);
    fd("weighted_gather_rows", table, [&](const NodePtr& v) {
        return sum_all(mul(weighted_gather_rows(v, widx, wts, 4), constant(wproj)));
    });

    fd("sum_all", a, [&](const NodePtr& v) { return sum_all(v); });
    fd("mean_all", a, [&](const NodePtr& v) { return mean_all(v); });
    Array axproj = random_array({3, 1}, rng);
    fd("sum_axis", a, [&](const NodePtr& v) {
        return sum_all(mul(sum_axis(v, 1, true), constant(axproj)));
    });
    fd("cumsum_exclusive", a, [&](const NodePtr& v) {
        return weighted_sum(cumsum_exclusive_last(v));
    });

    Array img = random_array({5, 6, 2}, rng);
    Array cw = random_array({3, 3, 2, 3}, rng, -0.5, 0.5);
    Array cb = random_array({3}, rng, -0.2, 0.2);
    Array convproj = random_array({5, 6, 3}, rng);
    fd("conv2d.input", img, [&](const NodePtr& v) {
        return sum_all(mul(conv2d(v, constant(cw), constant(cb)), constant(convproj)));
    });
    fd("conv2d.weight", cw, [&](const NodePtr& v) {
        return sum_all(mul(conv2d(constant(img), v, constant(cb)), constant(convproj)));
    });
    fd("conv2d.bias", cb, [&](const NodePtr& v) {
        return sum_all(mul(conv2d(constant(img), constant(cw), v), constant(convproj)));
    });
    Array poolproj = random_array({3, 3, 2}, rng);
    fd("avgpool2", img, [&](const NodePtr& v) {
        return sum_all(mul(avgpool2(v), constant(poolproj)));
    });

    Array ca = random_array_away_from_zero({4, 5}, rng);
    Array cb2 = random_array_away_from_zero({4, 5}, rng);
    Array cosproj = random_array({4}, rng);
    fd("cosine_rows.a", ca, [&](const NodePtr& v) {
        return sum_all(mul(cosine_rows(v, constant(cb2)), constant(cosproj)));
    });
    fd("cosine_rows.b", cb2, [&](const NodePtr& v) {
        return sum_all(mul(cosine_rows(constant(ca), v), constant(cosproj)));
    });
}

TEST_CASE("shape mismatch errors name the op and shapes") {
    auto a = constant(Array(Shape{2, 3}));
    auto b = constant(Array(Shape{4, 5}));
    CHECK_THROWS_WITH_AS(matmul(a, b),
                         doctest::Contains("matmul: shapes [2,3] x [4,5]"), Error);
    CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("add"), Error);
}

TEST_CASE("backward is deterministic and graph construction reproducible") {
    auto build = [](std::uint64_t seed) {
        Rng rng(seed);
        auto w = param(random_array({4, 4}, rng));
        auto x = constant(random_array({2, 4}, rng));
        auto y = mean_all(relu(matmul(x, w)));
        backward(y);
        return std::make_pair(w, topo_tags(y));
    };
    auto [w1, tags1] = build(99);
    auto [w2, tags2] = build(99);
    REQUIRE(w1->grad.size() == w2->grad.size());
    for (std::size_t i = 0; i < w1->grad.size(); ++i) CHECK(w1->grad[i] == w2->grad[i]);
    CHECK(tags1 == tags2);
}

TEST_CASE("adam closed-form steps") {
    // constant gradient 1, lr 0.1: bias correction gives a first step of -lr
    auto p = param(Array::scalar(0.0));
    Adam opt({.lr = 0.1}, {p});
    p->ensure_grad()[0] = 1.0;
    opt.step();
    CHECK(p->value.item() == doctest::Approx(-0.1).epsilon(1e-7));
    CHECK(p->grad.item() == 0.0);  // grads zeroed after step

    // zero gradient: params unchanged, step still increments
    auto q = param(Array::scalar(2.5));
    Adam opt2({.lr = 0.1}, {q});
    opt2.step();
    CHECK(q->value.item() == 2.5);
    CHECK(opt2.steps() == 1);

    // alternating +-1 gradients keep |step| bounded by lr
    auto r = param(Array::scalar(0.0));
    Adam opt3({.lr = 0.1}, {r});
    double prev = 0.0;
    for (int t = 0; t < 6; ++t) {
        r->ensure_grad()[0] = (t % 2 == 0) ? 1.0 : -1.0;
        opt3.step();
        CHECK(std::abs(r->value.item() - prev) <= 0.1 + 1e-12);
        prev = r->value.item();
    }
}

TEST_CASE("adam rejects non-finite gradients") {
    auto p = param(Array::scalar(0.0));
    Adam opt({.lr = 0.1}, {p});
    p->ensure_grad()[0] = std::nan("");
    CHECK_THROWS_AS(opt.step(), Error);
}

TEST_CASE("checkpoint round trip and error contracts") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "sf_ckpt_test";
    fs::create_directories(dir);
    const std::string path = (dir / "t.sfck").string();

    Rng rng(5);
    NamedArrays arrays;
    arrays.emplace_back("coarse.w0", random_array({3, 4}, rng));
    arrays.emplace_back("grid.level0", random_array({8, 2}, rng));
    arrays.emplace_back("fine.bias", Array::scalar(0.25));
    save_named_arrays(path, arrays);

    NamedArrays back = load_named_arrays(path);
    REQUIRE(back.size() == arrays.size());
    for (std::size_t i = 0; i < arrays.size(); ++i) {
        CHECK(back[i].first == arrays[i].first);
        REQUIRE(back[i].second.shape() == arrays[i].second.shape());
        for (std::size_t j = 0; j < arrays[i].second.size(); ++j)
            CHECK(back[i].second[j] == arrays[i].second[j]);
    }
    CHECK(hash_arrays(back) == hash_arrays(arrays));

    // wrong magic
    CHECK_THROWS_AS(load_named_arrays(path, kExtractorMagic), Error);

    // truncation
    {
        std::ifstream in(path, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
        std::ofstream out(path + ".trunc", std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_AS(load_named_arrays(path + ".trunc"), Error);
}
