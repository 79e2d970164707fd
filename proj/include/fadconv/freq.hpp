#ifndef FADCONV_FREQ_HPP
#define FADCONV_FREQ_HPP

#include "fadconv/tensor.hpp"

namespace fadconv::freq {

// Orthonormal DCT-II basis for side N, cached. Row u of the returned matrix
// is the u-th basis vector: c(u) * cos((2x+1)u*pi/2N), c(0)=sqrt(1/N),
// c(u>0)=sqrt(2/N). The inverse transform is the transpose.
const Matrix& dct_basis(int n);

struct SpectrumBlock {
    int side = 0;
    Matrix coeffs;  // coeffs(u, v) = F(u, v)
};

struct EnergyStats {
    double mean = 0.0;
    double total_energy = 0.0;
    double avg_energy = 0.0;  // total_energy / N^2
};

// 2D orthonormal DCT-II: F = D * f * D^T.
SpectrumBlock dct2d(const Matrix& block);
// Exact inverse: f = D^T * F * D.
Matrix idct2d(const SpectrumBlock& spec);

// Mean pooling to (B, C, p', p') with p' = min(p, H, W); windows follow the
// standard start = floor(i*H/p'), end = ceil((i+1)*H/p') rule.
Tensor4 adaptive_avg_pool(const Tensor4& x, int p);
// Routes grad_out (B, C, p', p') back to input cells, 1/window_size each.
Tensor4 adaptive_avg_pool_backward(const Tensor4& grad_out, int in_h, int in_w);

// Row-major flattening of the top-left n x n coefficients; element 0 is DC.
Vector extract_freq_block(const SpectrumBlock& spec, int n);

EnergyStats energy_stats(const Matrix& block);
// |F(0,0)^2 - N^2 mu^2| <= 1e-9 * max(1, N^2 mu^2)
bool dc_energy_identity(const Matrix& block);

struct HeatmapPair {
    Matrix freq_map;  // IDCT of the top-left n x n truncated spectrum
    Matrix gap_map;   // constant map at the channel mean
};

// Fig.-style attention surfaces for one channel. The channel is resampled to
// a square side = min(H, W) via adaptive mean pooling before the DCT, and the
// reconstruction is resampled back to H x W (nearest neighbor). `normalized`
// maps both surfaces linearly to [0, 1] for emission.
HeatmapPair attention_heatmap(const Matrix& channel, int n, bool normalized = true);

}  // namespace fadconv::freq

#endif
