#include "ariapipe/embed_math.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "ariapipe/simd_kernels.hpp"

namespace ariapipe::embed {

namespace {

void check_tau(double tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("temperature must be positive and finite");
}

struct RowSoftmax {
    double loss;                 // l_{i, target}
    std::vector<double> probs;   // softmax over k != i; probs[i] == 0
};

// Log-sum-exp over k != i with the max term split out, so the loss is
// (m - l_target) + log1p(sum of the remaining exp(l_k - m)).
RowSoftmax row_softmax(std::span<const double> sims, std::size_t i, std::size_t target, double tau,
                       bool want_probs) {
    const std::size_t n = sims.size();
    std::size_t arg = n;
    double m = -INFINITY;
    for (std::size_t k = 0; k < n; ++k) {
        if (k == i) continue;
        if (sims[k] / tau > m) {
            m = sims[k] / tau;
            arg = k;
        }
    }
    double rest = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (k == i || k == arg) continue;
        rest += std::exp(sims[k] / tau - m);
    }
    RowSoftmax out{(m - sims[target] / tau) + std::log1p(rest), {}};
    if (want_probs) {
        out.probs.assign(n, 0.0);
        const double denom = 1.0 + rest;
        for (std::size_t k = 0; k < n; ++k) {
            if (k == i) continue;
            out.probs[k] = (k == arg ? 1.0 : std::exp(sims[k] / tau - m)) / denom;
        }
    }
    return out;
}

}  // namespace

std::vector<double> normalize(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("cannot normalize an empty vector");
    for (double x : v) {
        if (!std::isfinite(x)) throw std::invalid_argument("embedding contains a non-finite value");
    }
    const double norm = std::sqrt(simd::scalar::dot(v.data(), v.data(), v.size()));
    if (!(norm > 0.0)) throw std::invalid_argument("cannot normalize a zero vector");
    std::vector<double> out(v.begin(), v.end());
    for (double& x : out) x /= norm;
    return out;
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument(fmt::format("dimension mismatch: {} vs {}", a.size(), b.size()));
    }
    return std::clamp(simd::active_kernels().dot(a.data(), b.data(), a.size()), -1.0, 1.0);
}

EmbeddingBatch::EmbeddingBatch(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw std::invalid_argument("embedding batch is empty");
    rows_ = rows.size();
    dim_ = rows.front().size();
    std::vector<double> flat;
    flat.reserve(rows_ * dim_);
    for (const auto& r : rows) {
        if (r.size() != dim_) throw std::invalid_argument("embedding rows differ in dimension");
        flat.insert(flat.end(), r.begin(), r.end());
    }
    init(flat);
}

EmbeddingBatch::EmbeddingBatch(std::span<const double> flat, std::size_t row_count, std::size_t dim)
    : rows_(row_count), dim_(dim) {
    if (flat.size() != row_count * dim) throw std::invalid_argument("flat buffer size != rows * dim");
    init(flat);
}

void EmbeddingBatch::init(std::span<const double> flat) {
    if (rows_ < 2 || rows_ % 2 != 0) {
        throw std::invalid_argument(fmt::format("embedding batch needs 2N rows with N >= 1, got {}", rows_));
    }
    if (dim_ == 0) throw std::invalid_argument("embedding dimension is zero");
    unit_.reserve(rows_ * dim_);
    norms_.reserve(rows_);
    for (std::size_t i = 0; i < rows_; ++i) {
        const auto r = flat.subspan(i * dim_, dim_);
        const auto u = normalize(r);
        norms_.push_back(std::sqrt(simd::scalar::dot(r.data(), r.data(), dim_)));
        unit_.insert(unit_.end(), u.begin(), u.end());
    }
}

std::vector<double> EmbeddingBatch::similarity() const {
    std::vector<double> s(rows_ * rows_);
    simd::active_kernels().gram(unit_.data(), rows_, dim_, s.data());
    for (double& x : s) x = std::clamp(x, -1.0, 1.0);
    return s;
}

double nt_xent_pairloss(const EmbeddingBatch& batch, std::size_t i, std::size_t j, double tau) {
    check_tau(tau);
    const std::size_t n = batch.row_count();
    if (i >= n || j >= n || i == j) {
        throw std::invalid_argument(fmt::format("invalid pair ({}, {}) for {} rows", i, j, n));
    }
    const auto& k = simd::active_kernels();
    std::vector<double> sims(n);
    for (std::size_t c = 0; c < n; ++c) {
        sims[c] = std::clamp(k.dot(batch.row(i).data(), batch.row(c).data(), batch.dim()), -1.0, 1.0);
    }
    return row_softmax(sims, i, j, tau, false).loss;
}

std::vector<double> pair_losses(const EmbeddingBatch& batch, double tau) {
    check_tau(tau);
    const std::size_t n = batch.row_count();
    const auto s = batch.similarity();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = row_softmax(std::span(s).subspan(i * n, n), i, batch.partner(i), tau, false).loss;
    }
    return out;
}

double symmetric_loss(const EmbeddingBatch& batch, double tau) {
    const auto terms = pair_losses(batch, tau);
    double sum = 0.0;
    for (double t : terms) sum += t;
    return 0.5 * sum;
}

Gradient symmetric_loss_grad(const EmbeddingBatch& batch, double tau) {
    check_tau(tau);
    const std::size_t n = batch.row_count();
    const std::size_t d = batch.dim();
    const auto& k = simd::active_kernels();
    const auto s = batch.similarity();

    // coef[i][c] = dL/ds_ic for the row-i term: (p_ic - [c == partner]) / (2 tau)
    std::vector<double> coef(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = row_softmax(std::span(s).subspan(i * n, n), i, batch.partner(i), tau, true);
        for (std::size_t c = 0; c < n; ++c) {
            if (c == i) continue;
            const double target = c == batch.partner(i) ? 1.0 : 0.0;
            coef[i * n + c] = 0.5 * (row.probs[c] - target) / tau;
        }
    }

    Gradient g{n, d, std::vector<double>(n * d, 0.0)};
    std::vector<double> dz(d);
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(dz.begin(), dz.end(), 0.0);
        for (std::size_t c = 0; c < n; ++c) {
            if (c == i) continue;
            k.axpy(coef[i * n + c] + coef[c * n + i], batch.row(c).data(), dz.data(), d);
        }
        // d(x/|x|)/dx = (I - z z^T) / |x|
        const auto z = batch.row(i);
        const double radial = k.dot(z.data(), dz.data(), d);
        k.axpy(-radial, z.data(), dz.data(), d);
        const double inv_norm = 1.0 / batch.input_norm(i);
        for (std::size_t t = 0; t < d; ++t) g.data[i * d + t] = dz[t] * inv_norm;
    }
    return g;
}

GradientCheck check_gradient(std::span<const double> raw, std::size_t row_count, std::size_t dim, double tau,
                             double step) {
    const EmbeddingBatch base(raw, row_count, dim);
    const auto analytic = symmetric_loss_grad(base, tau);

    std::vector<double> x(raw.begin(), raw.end());
    std::vector<double> fd(x.size());
    for (std::size_t t = 0; t < x.size(); ++t) {
        const double keep = x[t];
        x[t] = keep + step;
        const double up = symmetric_loss(EmbeddingBatch(x, row_count, dim), tau);
        x[t] = keep - step;
        const double down = symmetric_loss(EmbeddingBatch(x, row_count, dim), tau);
        x[t] = keep;
        fd[t] = (up - down) / (2.0 * step);
    }

    GradientCheck out;
    out.evaluations = 2 * x.size();
    double scale = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) {
        out.max_abs_error = std::max(out.max_abs_error, std::abs(analytic.data[t] - fd[t]));
        scale = std::max(scale, std::abs(fd[t]));
    }
    out.max_rel_error = scale > 0.0 ? out.max_abs_error / scale : out.max_abs_error;
    return out;
}

std::vector<double> mean_pool_file_embedding(const std::vector<std::vector<double>>& slices) {
    if (slices.empty()) throw std::invalid_argument("no slice embeddings to pool");
    const std::size_t d = slices.front().size();
    std::vector<double> mean(d, 0.0);
    for (const auto& s : slices) {
        if (s.size() != d) throw std::invalid_argument("slice embeddings differ in dimension");
        simd::active_kernels().axpy(1.0, s.data(), mean.data(), d);
    }
    for (double& x : mean) x /= static_cast<double>(slices.size());
    const double norm = std::sqrt(simd::scalar::dot(mean.data(), mean.data(), d));
    if (norm <= 1e-12) throw std::invalid_argument("pooled embedding has zero norm");
    for (double& x : mean) x /= norm;
    return mean;
}

}  // namespace ariapipe::embed
