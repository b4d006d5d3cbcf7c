#include "kfuse/simd/kernels.hpp"

#include <atomic>
#include <cassert>
#include <cstdlib>
#include <cstring>

namespace kfuse::simd {

namespace {

bool cpu_has_avx2() noexcept {
#if defined(__x86_64__) || defined(_M_X64)
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Backend detect() noexcept {
    // KFUSE_SIMD=scalar pins the reference kernels.
    if (const char* env = std::getenv("KFUSE_SIMD"); env != nullptr && std::strcmp(env, "scalar") == 0) {
        return Backend::Scalar;
    }
    return backend_supported(Backend::Avx2) ? Backend::Avx2 : Backend::Scalar;
}

std::atomic<Backend>& current() noexcept {
    static std::atomic<Backend> backend{detect()};
    return backend;
}

}  // namespace

std::string_view backend_name(Backend b) noexcept {
    switch (b) {
        case Backend::Scalar:
            return "scalar";
        case Backend::Avx2:
            return "avx2";
    }
    return "unknown";
}

bool backend_supported(Backend b) noexcept {
    switch (b) {
        case Backend::Scalar:
            return true;
        case Backend::Avx2:
            return avx2::compiled() && cpu_has_avx2();
    }
    return false;
}

Backend active_backend() noexcept { return current().load(std::memory_order_relaxed); }

bool set_backend(Backend b) noexcept {
    if (!backend_supported(b)) {
        return false;
    }
    current().store(b, std::memory_order_relaxed);
    return true;
}

double dot(std::span<const double> a, std::span<const double> b) noexcept {
    assert(a.size() == b.size());
    if (active_backend() == Backend::Avx2) {
        return avx2::dot(a.data(), b.data(), a.size());
    }
    return scalar::dot(a.data(), b.data(), a.size());
}

void gemv(std::span<const double> a, std::size_t rows, std::size_t cols, std::span<const double> x,
          std::span<double> y) noexcept {
    assert(a.size() == rows * cols && x.size() == cols && y.size() == rows);
    if (active_backend() == Backend::Avx2) {
        avx2::gemv(a.data(), rows, cols, x.data(), y.data());
        return;
    }
    scalar::gemv(a.data(), rows, cols, x.data(), y.data());
}

}  // namespace kfuse::simd
