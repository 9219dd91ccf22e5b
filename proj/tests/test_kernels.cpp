#include <doctest.h>

#include <cmath>
#include <vector>

#include "mde/core/rng.hpp"
#include "mde/kernels/kernels.hpp"

using namespace mde;
namespace kn = mde::kernels;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v)
        x = rng.normal();
    return v;
}

bool close_rel(double a, double b, double tol) {
    const double scale = std::max({1.0, std::fabs(a), std::fabs(b)});
    return std::fabs(a - b) <= tol * scale;
}

}  // namespace

#if defined(MDE_HAVE_AVX2_KERNELS)

TEST_CASE("scalar and avx2 reductions agree on random sizes") {
    if (kn::active_isa() != kn::Isa::avx2) {
        MESSAGE("AVX2 unavailable; skipping");
        return;
    }
    Rng rng(7);
    // Sizes straddle the vector width to hit every remainder path.
    for (std::size_t n : {1u, 2u, 3u, 4u, 5u, 7u, 8u, 9u, 15u, 16u, 17u, 63u, 64u, 257u, 1000u}) {
        auto a = random_vec(rng, n);
        auto b = random_vec(rng, n);
        CHECK(close_rel(kn::scalar::dot(a.data(), b.data(), n),
                        kn::avx2::dot(a.data(), b.data(), n), 1e-12));
        CHECK(close_rel(kn::scalar::sum(a.data(), n), kn::avx2::sum(a.data(), n), 1e-12));
        CHECK(close_rel(kn::scalar::sumsq(a.data(), n), kn::avx2::sumsq(a.data(), n), 1e-12));
        CHECK(kn::scalar::max_abs(a.data(), n) == kn::avx2::max_abs(a.data(), n));
    }
}

TEST_CASE("scalar and avx2 elementwise kernels agree exactly") {
    if (kn::active_isa() != kn::Isa::avx2) {
        MESSAGE("AVX2 unavailable; skipping");
        return;
    }
    Rng rng(11);
    for (std::size_t n : {1u, 4u, 6u, 32u, 33u, 127u}) {
        auto a = random_vec(rng, n);
        auto b = random_vec(rng, n);
        std::vector<double> r1(n), r2(n);

        kn::scalar::add(a.data(), b.data(), r1.data(), n);
        kn::avx2::add(a.data(), b.data(), r2.data(), n);
        CHECK(r1 == r2);

        kn::scalar::sub(a.data(), b.data(), r1.data(), n);
        kn::avx2::sub(a.data(), b.data(), r2.data(), n);
        CHECK(r1 == r2);

        kn::scalar::hadamard(a.data(), b.data(), r1.data(), n);
        kn::avx2::hadamard(a.data(), b.data(), r2.data(), n);
        CHECK(r1 == r2);

        kn::scalar::scale(a.data(), 1.7, r1.data(), n);
        kn::avx2::scale(a.data(), 1.7, r2.data(), n);
        CHECK(r1 == r2);

        r1 = b;
        r2 = b;
        kn::scalar::axpy(-0.3, a.data(), r1.data(), n);
        kn::avx2::axpy(-0.3, a.data(), r2.data(), n);
        for (std::size_t i = 0; i < n; ++i)
            CHECK(close_rel(r1[i], r2[i], 1e-15));
    }
}

TEST_CASE("scalar and avx2 matrix products agree") {
    if (kn::active_isa() != kn::Isa::avx2) {
        MESSAGE("AVX2 unavailable; skipping");
        return;
    }
    Rng rng(13);
    const int shapes[][3] = {{1, 1, 1},  {2, 3, 4},   {4, 4, 4},  {5, 7, 3},
                             {8, 16, 8}, {13, 29, 17}, {64, 33, 9}, {3, 288, 256}};
    for (const auto& s : shapes) {
        const std::size_t m = s[0], k = s[1], n = s[2];
        auto a = random_vec(rng, m * k);
        auto b = random_vec(rng, k * n);
        auto bt = random_vec(rng, n * k);
        auto at = random_vec(rng, k * m);
        std::vector<double> c1(m * n), c2(m * n);

        kn::scalar::matmul(a.data(), b.data(), c1.data(), m, k, n);
        kn::avx2::matmul(a.data(), b.data(), c2.data(), m, k, n);
        for (std::size_t i = 0; i < m * n; ++i)
            CHECK(close_rel(c1[i], c2[i], 1e-11));

        kn::scalar::matmul_nt(a.data(), bt.data(), c1.data(), m, k, n);
        kn::avx2::matmul_nt(a.data(), bt.data(), c2.data(), m, k, n);
        for (std::size_t i = 0; i < m * n; ++i)
            CHECK(close_rel(c1[i], c2[i], 1e-11));

        kn::scalar::matmul_tn(at.data(), b.data(), c1.data(), m, k, n);
        kn::avx2::matmul_tn(at.data(), b.data(), c2.data(), m, k, n);
        for (std::size_t i = 0; i < m * n; ++i)
            CHECK(close_rel(c1[i], c2[i], 1e-11));
    }
}

#endif  // MDE_HAVE_AVX2_KERNELS

TEST_CASE("matmul matches a hand-rolled triple loop") {
    Rng rng(17);
    const std::size_t m = 6, k = 5, n = 7;
    auto a = random_vec(rng, m * k);
    auto b = random_vec(rng, k * n);
    std::vector<double> c(m * n);
    kn::matmul(a.data(), b.data(), c.data(), m, k, n);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double ref = 0.0;
            for (std::size_t p = 0; p < k; ++p)
                ref += a[i * k + p] * b[p * n + j];
            CHECK(close_rel(c[i * n + j], ref, 1e-12));
        }
    }
}

TEST_CASE("transposed products match the plain product on rearranged inputs") {
    Rng rng(19);
    const std::size_t m = 4, k = 6, n = 5;
    auto a = random_vec(rng, m * k);
    auto b = random_vec(rng, k * n);
    std::vector<double> c_ref(m * n), c(m * n);
    kn::matmul(a.data(), b.data(), c_ref.data(), m, k, n);

    // B^T then matmul_nt must reproduce A*B.
    std::vector<double> bt(n * k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < n; ++j)
            bt[j * k + i] = b[i * n + j];
    kn::matmul_nt(a.data(), bt.data(), c.data(), m, k, n);
    for (std::size_t i = 0; i < m * n; ++i)
        CHECK(close_rel(c[i], c_ref[i], 1e-12));

    // A^T then matmul_tn must reproduce A*B.
    std::vector<double> at(k * m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j)
            at[j * m + i] = a[i * k + j];
    kn::matmul_tn(at.data(), b.data(), c.data(), m, k, n);
    for (std::size_t i = 0; i < m * n; ++i)
        CHECK(close_rel(c[i], c_ref[i], 1e-12));
}

TEST_CASE("isa dispatch reports a valid isa and can be forced to scalar") {
    const kn::Isa saved = kn::active_isa();
    CHECK((saved == kn::Isa::scalar || saved == kn::Isa::avx2));
    kn::force_isa(kn::Isa::scalar);
    CHECK(kn::active_isa() == kn::Isa::scalar);
    double a[3] = {1, 2, 3}, b[3] = {4, 5, 6};
    CHECK(kn::dot(a, b, 3) == doctest::Approx(32.0));
    kn::force_isa(saved);
}
