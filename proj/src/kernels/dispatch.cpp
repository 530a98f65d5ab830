#include <atomic>
#include <cstdlib>
#include <string_view>

#include "ariapipe/simd_kernels.hpp"

namespace ariapipe::simd {

namespace {

constexpr KernelTable kScalar{&scalar::dot, &scalar::axpy, &scalar::gram};
#if ARIAPIPE_SIMD_X86
constexpr KernelTable kAvx2{&avx2::dot, &avx2::axpy, &avx2::gram};
#endif
#if ARIAPIPE_SIMD_NEON
constexpr KernelTable kNeon{&neon::dot, &neon::axpy, &neon::gram};
#endif

Isa initial_isa() noexcept {
    if (const char* env = std::getenv("ARIAPIPE_ISA")) {
        const std::string_view v(env);
        if (v == "scalar") return Isa::Scalar;
        if (v == "avx2" && isa_supported(Isa::Avx2)) return Isa::Avx2;
        if (v == "neon" && isa_supported(Isa::Neon)) return Isa::Neon;
    }
    return detect_isa();
}

std::atomic<Isa>& active() noexcept {
    static std::atomic<Isa> isa{initial_isa()};
    return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) noexcept {
    switch (isa) {
        case Isa::Scalar: return "scalar";
        case Isa::Avx2: return "avx2";
        case Isa::Neon: return "neon";
    }
    return "unknown";
}

bool isa_supported(Isa isa) noexcept {
    switch (isa) {
        case Isa::Scalar: return true;
        case Isa::Avx2:
#if ARIAPIPE_SIMD_X86 && (defined(__GNUC__) || defined(__clang__))
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
        case Isa::Neon: return ARIAPIPE_SIMD_NEON != 0;
    }
    return false;
}

Isa detect_isa() noexcept {
    if (isa_supported(Isa::Avx2)) return Isa::Avx2;
    if (isa_supported(Isa::Neon)) return Isa::Neon;
    return Isa::Scalar;
}

const KernelTable& kernels_for(Isa isa) noexcept {
    if (!isa_supported(isa)) return kScalar;
    switch (isa) {
#if ARIAPIPE_SIMD_X86
        case Isa::Avx2: return kAvx2;
#endif
#if ARIAPIPE_SIMD_NEON
        case Isa::Neon: return kNeon;
#endif
        default: return kScalar;
    }
}

Isa active_isa() noexcept { return active().load(std::memory_order_relaxed); }

const KernelTable& active_kernels() noexcept { return kernels_for(active_isa()); }

bool set_active_isa(Isa isa) noexcept {
    if (!isa_supported(isa)) return false;
    active().store(isa, std::memory_order_relaxed);
    return true;
}

}  // namespace ariapipe::simd
