#pragma once

// Dense double-precision kernels behind the contrastive loss. Each ISA gets
// its own translation unit; the scalar versions are the reference the others
// are equivalence-tested against.

#include <cstddef>
#include <string_view>

#if defined(__x86_64__) || defined(_M_X64)
#define ARIAPIPE_SIMD_X86 1
#else
#define ARIAPIPE_SIMD_X86 0
#endif

#if defined(__aarch64__) || defined(__ARM_NEON)
#define ARIAPIPE_SIMD_NEON 1
#else
#define ARIAPIPE_SIMD_NEON 0
#endif

namespace ariapipe::simd {

enum class Isa { Scalar, Avx2, Neon };

std::string_view isa_name(Isa isa) noexcept;

struct KernelTable {
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // out[i * rows + j] = <row i, row j>, rows stored contiguously with stride dim
    void (*gram)(const double* rows, std::size_t count, std::size_t dim, double* out);
};

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gram(const double* rows, std::size_t count, std::size_t dim, double* out);
}  // namespace scalar

#if ARIAPIPE_SIMD_X86
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gram(const double* rows, std::size_t count, std::size_t dim, double* out);
}  // namespace avx2
#endif

#if ARIAPIPE_SIMD_NEON
namespace neon {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gram(const double* rows, std::size_t count, std::size_t dim, double* out);
}  // namespace neon
#endif

/// Best ISA the running CPU supports.
Isa detect_isa() noexcept;
bool isa_supported(Isa isa) noexcept;

/// Table for a specific ISA; falls back to scalar when unsupported.
const KernelTable& kernels_for(Isa isa) noexcept;

/// Table used by the library. Defaults to detect_isa(), overridable with the
/// ARIAPIPE_ISA environment variable (scalar|avx2|neon) or set_active_isa().
const KernelTable& active_kernels() noexcept;
Isa active_isa() noexcept;
bool set_active_isa(Isa isa) noexcept;

}  // namespace ariapipe::simd
