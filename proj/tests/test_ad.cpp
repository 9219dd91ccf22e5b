#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "mde/ad/graph.hpp"
#include "mde/ad/ops.hpp"
#include "mde/core/errors.hpp"
#include "mde/core/rng.hpp"

using namespace mde;
using namespace mde::ad;

namespace {

Tensor randn(Rng& rng, std::vector<int> shape, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.vec())
        v = rng.normal() * scale;
    return t;
}

Tensor rand01(Rng& rng, std::vector<int> shape, double lo = 0.05, double hi = 0.95) {
    Tensor t(std::move(shape));
    for (auto& v : t.vec())
        v = rng.uniform(lo, hi);
    return t;
}

using ScalarFn = std::function<Var(const std::vector<Var>&)>;

// Central-difference check of d(fn)/d(inputs) for a scalar-valued graph.
void check_grads(const ScalarFn& fn, std::vector<Tensor> inputs, double h = 1e-6,
                 double tol = 1e-5) {
    std::vector<Var> leaves;
    leaves.reserve(inputs.size());
    for (auto& t : inputs)
        leaves.push_back(leaf(t));
    Var out = fn(leaves);
    REQUIRE(out->value.numel() == 1);
    backward(out);

    auto eval = [&](const std::vector<Tensor>& vals) {
        NoGradGuard ng;
        std::vector<Var> ls;
        ls.reserve(vals.size());
        for (const auto& t : vals)
            ls.push_back(constant(t));
        return fn(ls)->value[0];
    };

    Rng pick(123);
    for (std::size_t which = 0; which < inputs.size(); ++which) {
        const std::size_t n = inputs[which].numel();
        // Check every coordinate for small tensors, a sample for large ones.
        std::vector<std::size_t> coords;
        if (n <= 24) {
            for (std::size_t i = 0; i < n; ++i)
                coords.push_back(i);
        } else {
            for (int i = 0; i < 12; ++i)
                coords.push_back(static_cast<std::size_t>(pick.uniform_int(0, static_cast<int>(n) - 1)));
        }
        for (std::size_t ci : coords) {
            auto plus = inputs;
            auto minus = inputs;
            plus[which][ci] += h;
            minus[which][ci] -= h;
            const double fd = (eval(plus) - eval(minus)) / (2.0 * h);
            const double an = leaves[which]->grad.numel() ? leaves[which]->grad[ci] : 0.0;
            const double scale = std::max({1.0, std::fabs(fd), std::fabs(an)});
            INFO("input ", which, " coord ", ci, " fd=", fd, " analytic=", an);
            CHECK(std::fabs(fd - an) <= tol * scale);
        }
    }
}

}  // namespace

TEST_CASE("elementwise op gradients match finite differences") {
    Rng rng(1);
    auto a = randn(rng, {3, 4});
    auto b = randn(rng, {3, 4});

    check_grads([](const std::vector<Var>& v) { return ops::mean_all(ops::add(v[0], v[1])); },
                {a, b});
    check_grads([](const std::vector<Var>& v) { return ops::mean_all(ops::sub(v[0], v[1])); },
                {a, b});
    check_grads([](const std::vector<Var>& v) { return ops::mean_all(ops::mul(v[0], v[1])); },
                {a, b});
    check_grads([](const std::vector<Var>& v) {
        return ops::mean_all(ops::scale_add(v[0], 1.5, v[1], -0.7));
    }, {a, b});
    check_grads([](const std::vector<Var>& v) {
        return ops::sum_all(ops::mul_scalar(ops::add_scalar(v[0], 0.3), 2.0));
    }, {a});
    check_grads([](const std::vector<Var>& v) { return ops::mean_all(ops::silu(v[0])); }, {a});
}

TEST_CASE("matrix product gradients match finite differences") {
    Rng rng(2);
    check_grads([](const std::vector<Var>& v) { return ops::mean_all(ops::matmul(v[0], v[1])); },
                {randn(rng, {3, 4}), randn(rng, {4, 5})});
    check_grads([](const std::vector<Var>& v) { return ops::mean_all(ops::matmul_nt(v[0], v[1])); },
                {randn(rng, {3, 4}), randn(rng, {5, 4})});
    check_grads([](const std::vector<Var>& v) {
        return ops::mean_all(ops::linear(v[0], v[1], v[2]));
    }, {randn(rng, {3, 4}), randn(rng, {6, 4}), randn(rng, {6})});
}

TEST_CASE("conv2d gradients match finite differences") {
    Rng rng(3);
    // stride 1 pad 1
    check_grads([](const std::vector<Var>& v) {
        return ops::mean_all(ops::conv2d(v[0], v[1], v[2], 1, 1));
    }, {randn(rng, {2, 5, 5}), randn(rng, {3, 2, 3, 3}), randn(rng, {3})});
    // stride 2
    check_grads([](const std::vector<Var>& v) {
        return ops::mean_all(ops::conv2d(v[0], v[1], v[2], 2, 1));
    }, {randn(rng, {2, 6, 6}), randn(rng, {3, 2, 3, 3}), randn(rng, {3})});
    // 1x1
    check_grads([](const std::vector<Var>& v) {
        return ops::mean_all(ops::conv2d(v[0], v[1], v[2], 1, 0));
    }, {randn(rng, {3, 4, 4}), randn(rng, {2, 3, 1, 1}), randn(rng, {2})});
}

TEST_CASE("normalization gradients match finite differences") {
    Rng rng(4);
    check_grads([](const std::vector<Var>& v) {
        return ops::mean_all(ops::mul(ops::group_norm(v[0], v[1], v[2], 2), v[3]));
    }, {randn(rng, {4, 3, 3}), rand01(rng, {4}, 0.5, 1.5), randn(rng, {4}, 0.1),
        randn(rng, {4, 3, 3})});
    check_grads([](const std::vector<Var>& v) {
        return ops::mean_all(ops::mul(ops::layer_norm_rows(v[0], v[1], v[2]), v[3]));
    }, {randn(rng, {3, 6}), rand01(rng, {6}, 0.5, 1.5), randn(rng, {6}, 0.1), randn(rng, {3, 6})});
}

TEST_CASE("softmax gradient matches finite differences") {
    Rng rng(5);
    check_grads([](const std::vector<Var>& v) {
        return ops::mean_all(ops::mul(ops::softmax_rows(v[0]), v[1]));
    }, {randn(rng, {4, 6}), randn(rng, {4, 6})});
}

TEST_CASE("shape plumbing gradients match finite differences") {
    Rng rng(6);
    check_grads([](const std::vector<Var>& v) {
        return ops::mean_all(ops::mul(ops::chw_to_rows(v[0]), v[1]));
    }, {randn(rng, {3, 2, 4}), randn(rng, {8, 3})});
    check_grads([](const std::vector<Var>& v) {
        return ops::mean_all(ops::mul(ops::rows_to_chw(v[0], 3, 2, 2), v[1]));
    }, {randn(rng, {4, 3}), randn(rng, {3, 2, 2})});
    check_grads([](const std::vector<Var>& v) {
        return ops::mean_all(ops::slice_cols(v[0], 1, 4));
    }, {randn(rng, {3, 6})});
    check_grads([](const std::vector<Var>& v) {
        return ops::mean_all(ops::concat_cols({v[0], v[1]}));
    }, {randn(rng, {3, 2}), randn(rng, {3, 4})});
    check_grads([](const std::vector<Var>& v) {
        return ops::mean_all(ops::mul(ops::concat_chw(v[0], v[1]), v[2]));
    }, {randn(rng, {2, 3, 3}), randn(rng, {1, 3, 3}), randn(rng, {3, 3, 3})});
    check_grads([](const std::vector<Var>& v) {
        return ops::mean_all(ops::mul(ops::upsample_nearest2x(v[0]), v[1]));
    }, {randn(rng, {2, 3, 3}), randn(rng, {2, 6, 6})});
    check_grads([](const std::vector<Var>& v) {
        return ops::mean_all(ops::add_channel_bias(v[0], v[1]));
    }, {randn(rng, {3, 2, 2}), randn(rng, {3})});
    check_grads([](const std::vector<Var>& v) {
        return ops::mean_all(ops::mul(ops::bilinear_resize(v[0], 7, 5), v[1]));
    }, {randn(rng, {4, 3}), randn(rng, {7, 5})});
    check_grads([](const std::vector<Var>& v) {
        return ops::mean_all(ops::mul(ops::embed_rows(v[0], {2, 0, 2, 1}), v[1]));
    }, {randn(rng, {4, 5}), randn(rng, {4, 5})});
    check_grads([](const std::vector<Var>& v) {
        return ops::mean_all(ops::mul(ops::slice_col_as_grid(v[0], 2, 2, 3), v[1]));
    }, {rand01(rng, {6, 4}), randn(rng, {2, 3})});
}

TEST_CASE("reduction and loss op gradients match finite differences") {
    Rng rng(7);
    Tensor target = randn(rng, {3, 4});
    check_grads([&](const std::vector<Var>& v) { return ops::mse_vs(v[0], target); },
                {randn(rng, {3, 4})});

    Tensor mask({2, 3}, std::vector<double>{1, 0, 1, 1, 0, 0});
    check_grads([&](const std::vector<Var>& v) { return ops::bce_vs_mask(v[0], mask, 1e-6); },
                {rand01(rng, {2, 3})});

    check_grads([](const std::vector<Var>& v) {
        return ops::mean_all(ops::stack_mean({v[0], v[1], v[2]}));
    }, {randn(rng, {2, 2}), randn(rng, {2, 2}), randn(rng, {2, 2})});
    check_grads([](const std::vector<Var>& v) {
        return ops::mean_all(ops::stack_sum({v[0], v[1]}));
    }, {randn(rng, {2, 2}), randn(rng, {2, 2})});
}

TEST_CASE("div_by_max gradient includes the argmax path") {
    Rng rng(8);
    // Values well separated so the argmax never flips under the FD step.
    Tensor x({5}, std::vector<double>{0.3, 0.8, 0.1, 0.55, 0.42});
    Tensor w = randn(rng, {5});
    check_grads([&](const std::vector<Var>& v) {
        return ops::mean_all(ops::mul(ops::div_by_max(v[0], 1e-8), constant(w)));
    }, {x});

    Tensor zeroish({3}, std::vector<double>{1e-12, 2e-12, 0.0});
    CHECK_THROWS_AS((void)ops::div_by_max(leaf(zeroish), 1e-8), DegenerateSegmentationError);
}

TEST_CASE("ccl_deficit gradient matches finite differences") {
    Rng rng(9);
    Tensor common = rand01(rng, {3, 3}, 0.0, 0.4);
    Tensor mask({3, 3}, std::vector<double>{1, 1, 0, 0, 1, 0, 1, 0, 1});
    check_grads([&](const std::vector<Var>& v) {
        return ops::ccl_deficit(v[0], common, mask, 1e-8, true);
    }, {rand01(rng, {3, 3})});
    check_grads([&](const std::vector<Var>& v) {
        return ops::ccl_deficit(v[0], common, mask, 1e-8, false);
    }, {rand01(rng, {3, 3})});

    Tensor empty_mask({2, 2}, 0.0);
    CHECK_THROWS_AS(
        (void)ops::ccl_deficit(leaf(rand01(rng, {2, 2})), rand01(rng, {2, 2}), empty_mask, 1e-8, true),
        EmptyMaskError);
}

TEST_CASE("inject_columns routes gradients only through editing columns") {
    Rng rng(10);
    Tensor recon = rand01(rng, {4, 3});
    std::vector<ColumnSource> sources = {
        {ColumnSource::Branch::reconstruction, 1},
        {ColumnSource::Branch::editing, 1},
        {ColumnSource::Branch::editing, 2},
    };
    Tensor w = randn(rng, {4, 3});
    check_grads([&](const std::vector<Var>& v) {
        return ops::mean_all(ops::mul(ops::inject_columns(v[0], recon, sources), constant(w)));
    }, {rand01(rng, {4, 3})});

    // Shared columns must be bit-identical to the reconstruction source.
    Var e = leaf(rand01(rng, {4, 3}));
    Var out = ops::inject_columns(e, recon, sources);
    for (int r = 0; r < 4; ++r) {
        CHECK(out->value.at(r, 0) == recon.at(r, 1));
        CHECK(out->value.at(r, 1) == e->value.at(r, 1));
        CHECK(out->value.at(r, 2) == e->value.at(r, 2));
    }
}

TEST_CASE("no-grad mode builds constant results") {
    Rng rng(11);
    NoGradGuard ng;
    Var a = leaf(randn(rng, {2, 2}));
    CHECK_FALSE(a->requires_grad);
    Var out = ops::mean_all(ops::mul(a, a));
    CHECK_FALSE(out->requires_grad);
    CHECK(out->parents.empty());
}

TEST_CASE("gradient accumulates when a var is used twice") {
    Tensor x({2}, std::vector<double>{3.0, -1.0});
    Var v = leaf(x);
    Var out = ops::sum_all(ops::mul(v, v));  // d/dx sum(x^2) = 2x
    backward(out);
    CHECK(v->grad[0] == doctest::Approx(6.0));
    CHECK(v->grad[1] == doctest::Approx(-2.0));
}
