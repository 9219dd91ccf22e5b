#include "mde/kernels/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <stdexcept>

namespace mde::kernels {

namespace {

struct Table {
    double (*dot)(const double*, const double*, std::size_t);
    double (*sum)(const double*, std::size_t);
    double (*sumsq)(const double*, std::size_t);
    double (*max_abs)(const double*, std::size_t);
    void (*add)(const double*, const double*, double*, std::size_t);
    void (*sub)(const double*, const double*, double*, std::size_t);
    void (*hadamard)(const double*, const double*, double*, std::size_t);
    void (*scale)(const double*, double, double*, std::size_t);
    void (*axpy)(double, const double*, double*, std::size_t);
    void (*matmul)(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
    void (*matmul_nt)(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
    void (*matmul_tn)(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
};

constexpr Table kScalarTable = {
    scalar::dot, scalar::sum, scalar::sumsq, scalar::max_abs,
    scalar::add, scalar::sub, scalar::hadamard, scalar::scale, scalar::axpy,
    scalar::matmul, scalar::matmul_nt, scalar::matmul_tn,
};

#if defined(MDE_HAVE_AVX2_KERNELS)
constexpr Table kAvx2Table = {
    avx2::dot, avx2::sum, avx2::sumsq, avx2::max_abs,
    avx2::add, avx2::sub, avx2::hadamard, avx2::scale, avx2::axpy,
    avx2::matmul, avx2::matmul_nt, avx2::matmul_tn,
};
#endif

bool cpu_has_avx2() {
#if defined(MDE_HAVE_AVX2_KERNELS) && defined(__GNUC__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Isa pick_isa() {
    if (const char* env = std::getenv("MDE_SIMD")) {
        if (std::strcmp(env, "scalar") == 0)
            return Isa::scalar;
        if (std::strcmp(env, "avx2") == 0) {
            if (!cpu_has_avx2())
                throw std::runtime_error("MDE_SIMD=avx2 requested but CPU lacks AVX2/FMA");
            return Isa::avx2;
        }
    }
    return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}

Isa g_isa = pick_isa();

const Table& table() {
#if defined(MDE_HAVE_AVX2_KERNELS)
    return g_isa == Isa::avx2 ? kAvx2Table : kScalarTable;
#else
    return kScalarTable;
#endif
}

}  // namespace

Isa active_isa() { return g_isa; }

const char* isa_name(Isa isa) {
    return isa == Isa::avx2 ? "avx2" : "scalar";
}

void force_isa(Isa isa) {
    if (isa == Isa::avx2 && !cpu_has_avx2())
        throw std::invalid_argument("AVX2 kernels unavailable on this CPU");
    g_isa = isa;
}

double dot(const double* a, const double* b, std::size_t n) { return table().dot(a, b, n); }
double sum(const double* a, std::size_t n) { return table().sum(a, n); }
double sumsq(const double* a, std::size_t n) { return table().sumsq(a, n); }
double max_abs(const double* a, std::size_t n) { return table().max_abs(a, n); }

void add(const double* a, const double* b, double* out, std::size_t n) { table().add(a, b, out, n); }
void sub(const double* a, const double* b, double* out, std::size_t n) { table().sub(a, b, out, n); }
void hadamard(const double* a, const double* b, double* out, std::size_t n) {
    table().hadamard(a, b, out, n);
}
void scale(const double* a, double alpha, double* out, std::size_t n) {
    table().scale(a, alpha, out, n);
}
void axpy(double alpha, const double* x, double* y, std::size_t n) { table().axpy(alpha, x, y, n); }

void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n) {
    table().matmul(a, b, c, m, k, n);
}
void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
    table().matmul_nt(a, b, c, m, k, n);
}
void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
    table().matmul_tn(a, b, c, m, k, n);
}

}  // namespace mde::kernels
