#include "ariapipe/simd_kernels.hpp"

namespace ariapipe::simd::scalar {

double dot(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gram(const double* rows, std::size_t count, std::size_t dim, double* out) {
    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t j = i; j < count; ++j) {
            const double d = dot(rows + i * dim, rows + j * dim, dim);
            out[i * count + j] = d;
            out[j * count + i] = d;
        }
    }
}

}  // namespace ariapipe::simd::scalar
