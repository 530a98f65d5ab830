#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace ariapipe::embed {

inline constexpr std::size_t kDefaultDim = 512;
inline constexpr double kDefaultTemperature = 0.1;

/// Returns v / |v|. Throws std::invalid_argument on a zero or non-finite vector.
std::vector<double> normalize(std::span<const double> v);

/// Dot product of unit vectors, clamped to [-1, 1].
double cosine_sim(std::span<const double> a, std::span<const double> b);

/// 2N embeddings where row i and row i+N (0-based) form a positive pair.
/// Rows are L2-normalized at construction; the original norms are kept for
/// differentiating through the normalization.
class EmbeddingBatch {
public:
    /// rows: 2N vectors of equal dimension, N >= 1.
    explicit EmbeddingBatch(const std::vector<std::vector<double>>& rows);
    EmbeddingBatch(std::span<const double> flat, std::size_t row_count, std::size_t dim);

    std::size_t pair_count() const noexcept { return rows_ / 2; }
    std::size_t row_count() const noexcept { return rows_; }
    std::size_t dim() const noexcept { return dim_; }

    std::span<const double> row(std::size_t i) const { return {unit_.data() + i * dim_, dim_}; }
    double input_norm(std::size_t i) const { return norms_[i]; }
    std::size_t partner(std::size_t i) const noexcept { return (i + pair_count()) % rows_; }

    const std::vector<double>& unit_rows() const noexcept { return unit_; }

    /// Clamped cosine similarity matrix, row-major rows x rows.
    std::vector<double> similarity() const;

private:
    void init(std::span<const double> flat);

    std::size_t rows_ = 0;
    std::size_t dim_ = 0;
    std::vector<double> unit_;
    std::vector<double> norms_;
};

/// NT-Xent term for anchor i and positive j (0-based, i != j):
/// -log(exp(s_ij/tau) / sum_{k != i} exp(s_ik/tau)), evaluated with max
/// subtraction. Non-negative whenever j maximizes similarity among k != i.
double nt_xent_pairloss(const EmbeddingBatch& batch, std::size_t i, std::size_t j, double tau);

/// L = 1/2 sum_k (l_{k,k+N} + l_{k+N,k}).
double symmetric_loss(const EmbeddingBatch& batch, double tau);

/// Per-row loss terms l_{i, partner(i)}.
std::vector<double> pair_losses(const EmbeddingBatch& batch, double tau);

struct Gradient {
    std::size_t rows = 0;
    std::size_t dim = 0;
    std::vector<double> data;  // row-major

    std::span<const double> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
};

/// Analytic dL/dx for the pre-normalization inputs, chain rule through the L2
/// normalization included. The similarity clamp is treated as the identity.
Gradient symmetric_loss_grad(const EmbeddingBatch& batch, double tau);

struct GradientCheck {
    double max_abs_error = 0.0;
    double max_rel_error = 0.0;  // max |analytic - fd| / max |fd|
    std::size_t evaluations = 0;
};

/// Central finite differences of symmetric_loss over the raw inputs.
GradientCheck check_gradient(std::span<const double> raw, std::size_t row_count, std::size_t dim, double tau,
                             double step = 1e-4);

/// Mean of slice embeddings, renormalized to unit length.
std::vector<double> mean_pool_file_embedding(const std::vector<std::vector<double>>& slices);

}  // namespace ariapipe::embed
