#include "fadconv/freq.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace fadconv::freq {

const Matrix& dct_basis(int n) {
    static std::map<int, Matrix> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    if (n <= 0) throw std::invalid_argument("dct_basis: side must be positive");
    Matrix d(n, n);
    const double c0 = std::sqrt(1.0 / n), cu = std::sqrt(2.0 / n);
    for (int u = 0; u < n; ++u)
        for (int x = 0; x < n; ++x)
            d(u, x) = (u == 0 ? c0 : cu) * std::cos((2.0 * x + 1.0) * u * M_PI / (2.0 * n));
    return cache.emplace(n, std::move(d)).first->second;
}

SpectrumBlock dct2d(const Matrix& block) {
    if (block.rows() != block.cols() || block.rows() < 1)
        throw std::invalid_argument("dct2d: block must be square and nonempty");
    const int n = static_cast<int>(block.rows());
    const Matrix& d = dct_basis(n);
    SpectrumBlock spec;
    spec.side = n;
    spec.coeffs = d * block * d.transpose();
    return spec;
}

Matrix idct2d(const SpectrumBlock& spec) {
    if (spec.coeffs.rows() != spec.side || spec.coeffs.cols() != spec.side)
        throw std::invalid_argument("idct2d: coeffs shape mismatch");
    const Matrix& d = dct_basis(spec.side);
    return d.transpose() * spec.coeffs * d;
}

static inline int win_start(int i, int in, int out) { return (i * in) / out; }
static inline int win_end(int i, int in, int out) { return ((i + 1) * in + out - 1) / out; }

Tensor4 adaptive_avg_pool(const Tensor4& x, int p) {
    if (p <= 0) throw std::invalid_argument("adaptive_avg_pool: p must be positive");
    const int pe = std::min({p, x.height(), x.width()});
    Tensor4 out(x.batch(), x.channels(), pe, pe);
    for (int b = 0; b < x.batch(); ++b)
        for (int c = 0; c < x.channels(); ++c) {
            auto in = x.plane(b, c);
            auto o = out.plane(b, c);
            for (int i = 0; i < pe; ++i) {
                const int h0 = win_start(i, x.height(), pe), h1 = win_end(i, x.height(), pe);
                for (int j = 0; j < pe; ++j) {
                    const int w0 = win_start(j, x.width(), pe), w1 = win_end(j, x.width(), pe);
                    o(i, j) = in.block(h0, w0, h1 - h0, w1 - w0).mean();
                }
            }
        }
    return out;
}

Tensor4 adaptive_avg_pool_backward(const Tensor4& grad_out, int in_h, int in_w) {
    const int pe = grad_out.height();
    Tensor4 gx(grad_out.batch(), grad_out.channels(), in_h, in_w);
    for (int b = 0; b < grad_out.batch(); ++b)
        for (int c = 0; c < grad_out.channels(); ++c) {
            auto g = grad_out.plane(b, c);
            auto o = gx.plane(b, c);
            for (int i = 0; i < pe; ++i) {
                const int h0 = win_start(i, in_h, pe), h1 = win_end(i, in_h, pe);
                for (int j = 0; j < pe; ++j) {
                    const int w0 = win_start(j, in_w, pe), w1 = win_end(j, in_w, pe);
                    o.block(h0, w0, h1 - h0, w1 - w0).array() +=
                        g(i, j) / ((h1 - h0) * (w1 - w0));
                }
            }
        }
    return gx;
}

Vector extract_freq_block(const SpectrumBlock& spec, int n) {
    if (n <= 0 || n > spec.side)
        throw std::invalid_argument("extract_freq_block: n=" + std::to_string(n) +
                                    " out of range for side " + std::to_string(spec.side));
    Vector v(static_cast<long>(n) * n);
    for (int u = 0; u < n; ++u)
        for (int w = 0; w < n; ++w) v[u * n + w] = spec.coeffs(u, w);
    return v;
}

EnergyStats energy_stats(const Matrix& block) {
    EnergyStats s;
    const double n2 = static_cast<double>(block.size());
    s.mean = block.mean();
    s.total_energy = block.squaredNorm();
    s.avg_energy = s.total_energy / n2;
    return s;
}

bool dc_energy_identity(const Matrix& block) {
    const SpectrumBlock spec = dct2d(block);
    const double n = static_cast<double>(spec.side);
    const double mu = block.mean();
    const double lhs = spec.coeffs(0, 0) * spec.coeffs(0, 0);
    const double rhs = n * n * mu * mu;
    return std::abs(lhs - rhs) <= 1e-9 * std::max(1.0, rhs);
}

static Matrix resample_nearest(const Matrix& src, int h, int w) {
    Matrix out(h, w);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            out(i, j) = src(static_cast<int>(i * src.rows() / h),
                            static_cast<int>(j * src.cols() / w));
    return out;
}

static void normalize01(Matrix& m) {
    const double lo = m.minCoeff(), hi = m.maxCoeff();
    if (hi > lo)
        m = ((m.array() - lo) / (hi - lo)).matrix();
    else
        m.setZero();
}

HeatmapPair attention_heatmap(const Matrix& channel, int n, bool normalized) {
    const int h = static_cast<int>(channel.rows()), w = static_cast<int>(channel.cols());
    const int side = std::min(h, w);
    if (n <= 0 || n > side)
        throw std::invalid_argument("attention_heatmap: n out of range");

    // Square resample via mean pooling, transform, truncate, invert.
    Tensor4 t(1, 1, h, w);
    t.plane(0, 0) = channel;
    const Tensor4 sq = adaptive_avg_pool(t, side);
    SpectrumBlock spec = dct2d(Matrix(sq.plane(0, 0)));
    for (int u = 0; u < side; ++u)
        for (int v = 0; v < side; ++v)
            if (u >= n || v >= n) spec.coeffs(u, v) = 0.0;

    HeatmapPair out;
    out.freq_map = resample_nearest(idct2d(spec), h, w);
    out.gap_map = Matrix::Constant(h, w, channel.mean());
    if (normalized) {
        normalize01(out.freq_map);
        normalize01(out.gap_map);
    }
    return out;
}

}  // namespace fadconv::freq
