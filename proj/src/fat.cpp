#include "fadconv/fat.hpp"

#include <cmath>
#include <stdexcept>

namespace fadconv::fat {

Fusion fusion_from_string(const std::string& s) {
    if (s == "sum") return Fusion::Sum;
    if (s == "abs_sum") return Fusion::AbsSum;
    if (s == "learned") return Fusion::Learned;
    if (s == "fca") return Fusion::Fca;
    throw std::invalid_argument("unknown fusion strategy: " + s);
}

std::string to_string(Fusion f) {
    switch (f) {
        case Fusion::Sum: return "sum";
        case Fusion::AbsSum: return "abs_sum";
        case Fusion::Learned: return "learned";
        case Fusion::Fca: return "fca";
    }
    return "?";
}

AttentionKind attention_from_string(const std::string& s) {
    if (s == "fat") return AttentionKind::Fat;
    if (s == "gap") return AttentionKind::Gap;
    throw std::invalid_argument("unknown attention kind: " + s);
}

std::string to_string(AttentionKind k) { return k == AttentionKind::Fat ? "fat" : "gap"; }

void FatParams::validate() const {
    if (poolsize <= 0 || freq_side <= 0 || reduction <= 0 || num_experts <= 0)
        throw std::invalid_argument("FatParams: nonpositive field");
    if (freq_side > poolsize)
        throw std::invalid_argument("FatParams: freq_side must not exceed poolsize");
}

std::vector<int> zigzag_order(int n) {
    std::vector<int> order;
    order.reserve(static_cast<size_t>(n) * n);
    for (int s = 0; s <= 2 * (n - 1); ++s) {
        if (s % 2 == 0) {
            for (int u = std::min(s, n - 1); u >= std::max(0, s - n + 1); --u)
                order.push_back(u * n + (s - u));
        } else {
            for (int u = std::max(0, s - n + 1); u <= std::min(s, n - 1); ++u)
                order.push_back(u * n + (s - u));
        }
    }
    return order;
}

Vector fuse_frequencies(const Matrix& freq_vecs, Fusion strategy, const Vector* fuse_w,
                        const double* fuse_b, const std::vector<int>* assignment) {
    const long rows = freq_vecs.rows();
    Vector out(rows);
    switch (strategy) {
        case Fusion::Sum:
            out = freq_vecs.rowwise().sum();
            break;
        case Fusion::AbsSum:
            out = freq_vecs.array().abs().matrix().rowwise().sum();
            break;
        case Fusion::Learned: {
            if (!fuse_w || !fuse_b || fuse_w->size() != freq_vecs.cols())
                throw std::invalid_argument("fuse_frequencies: learned fusion weights missing");
            Vector z = freq_vecs * (*fuse_w);
            for (long r = 0; r < rows; ++r) out[r] = nn::sigmoid(z[r] + *fuse_b);
            break;
        }
        case Fusion::Fca: {
            if (!assignment || static_cast<long>(assignment->size()) != rows)
                throw std::invalid_argument("fuse_frequencies: fca assignment missing");
            for (long r = 0; r < rows; ++r) {
                const int idx = (*assignment)[r];
                if (idx < 0 || idx >= freq_vecs.cols())
                    throw std::invalid_argument("fuse_frequencies: fca index out of range");
                out[r] = freq_vecs(r, idx);
            }
            break;
        }
    }
    return out;
}

AttentionModule::AttentionModule(const std::string& name, int ch, const FatParams& p,
                                 AttentionKind k, Rng& rng)
    : channels(ch), params(p), kind(k) {
    params.validate();
    if (ch <= 0) throw std::invalid_argument("AttentionModule: channels must be positive");
    const int n2 = params.freq_side * params.freq_side;
    fuse_w.init(name + ".fuse.weight", {n2});
    fuse_b.init(name + ".fuse.bias", {1});
    // Zero init: training starts from the uniform-attention fixed point.
    reduce = nn::Dense(name + ".reduce", ch, params.reduced_dim(ch), &rng);
    expand = nn::Dense(name + ".expand", params.reduced_dim(ch), params.num_experts, nullptr);
    const std::vector<int> zz = zigzag_order(params.freq_side);
    fca_assignment.resize(ch);
    for (int c = 0; c < ch; ++c) fca_assignment[c] = zz[c % n2];
}

Matrix AttentionModule::forward(const Tensor4& x) {
    if (x.channels() != channels)
        throw std::invalid_argument("attention: input has " + std::to_string(x.channels()) +
                                    " channels, module expects " + std::to_string(channels));
    batch_ = x.batch();
    in_h_ = x.height();
    in_w_ = x.width();
    cached_desc_ = Matrix(batch_, channels);

    if (kind == AttentionKind::Gap) {
        for (int b = 0; b < batch_; ++b)
            for (int c = 0; c < channels; ++c) cached_desc_(b, c) = x.plane(b, c).mean();
    } else {
        const Tensor4 pooled = freq::adaptive_avg_pool(x, params.poolsize);
        pool_side_ = pooled.height();
        freq_side_eff_ = std::min(params.freq_side, pool_side_);
        const int ne = freq_side_eff_, n2 = ne * ne;
        const Matrix& d = freq::dct_basis(pool_side_);
        cached_freq_ = Matrix(static_cast<long>(batch_) * channels, n2);
        for (int b = 0; b < batch_; ++b)
            for (int c = 0; c < channels; ++c) {
                // Only the top-left ne rows/cols of the spectrum are kept, so
                // compute just those: F_nn = D_n f D_n^T with D_n = first ne rows.
                const Matrix fnn =
                    d.topRows(ne) * pooled.plane(b, c) * d.topRows(ne).transpose();
                for (int u = 0; u < ne; ++u)
                    for (int v = 0; v < ne; ++v)
                        cached_freq_(static_cast<long>(b) * channels + c, u * ne + v) = fnn(u, v);
            }

        // Fused descriptor per channel. The learned path uses the shared
        // n^2 -> 1 map even when the effective block is smaller (leading
        // zigzag... no: leading row-major entries of the weight vector).
        const Vector wsub = fuse_w.value.head(n2);
        const double b0 = fuse_b.value[0];
        std::vector<int> rows_assign;
        const std::vector<int>* assign = nullptr;
        if (params.fusion == Fusion::Fca) {
            rows_assign.resize(static_cast<size_t>(batch_) * channels);
            for (int b = 0; b < batch_; ++b)
                for (int c = 0; c < channels; ++c)
                    rows_assign[static_cast<size_t>(b) * channels + c] =
                        fca_assignment[c] < n2 ? fca_assignment[c] : 0;
            assign = &rows_assign;
        }
        const Vector desc = fuse_frequencies(cached_freq_, params.fusion, &wsub, &b0, assign);
        for (int b = 0; b < batch_; ++b)
            for (int c = 0; c < channels; ++c)
                cached_desc_(b, c) = desc[static_cast<long>(b) * channels + c];
    }

    cached_hidden_ = reduce.forward(cached_desc_);
    Matrix h = cached_hidden_.cwiseMax(0.0);
    cached_alpha_ = nn::softmax_rows(expand.forward(h));
    return cached_alpha_;
}

Tensor4 AttentionModule::backward(const Matrix& grad_alpha) {
    const Matrix gl = nn::softmax_rows_backward(cached_alpha_, grad_alpha);
    Matrix gh = expand.backward(gl);
    for (long i = 0; i < gh.size(); ++i)
        if (cached_hidden_.data()[i] <= 0.0) gh.data()[i] = 0.0;
    const Matrix gdesc = reduce.backward(gh);

    Tensor4 gx(batch_, channels, in_h_, in_w_);
    if (kind == AttentionKind::Gap) {
        const double inv = 1.0 / (static_cast<double>(in_h_) * in_w_);
        for (int b = 0; b < batch_; ++b)
            for (int c = 0; c < channels; ++c)
                gx.plane(b, c).setConstant(gdesc(b, c) * inv);
        return gx;
    }

    const int ne = freq_side_eff_, n2 = ne * ne;
    Matrix gfreq = Matrix::Zero(cached_freq_.rows(), n2);
    switch (params.fusion) {
        case Fusion::Sum:
            for (int b = 0; b < batch_; ++b)
                for (int c = 0; c < channels; ++c)
                    gfreq.row(static_cast<long>(b) * channels + c).setConstant(gdesc(b, c));
            break;
        case Fusion::AbsSum:
            for (int b = 0; b < batch_; ++b)
                for (int c = 0; c < channels; ++c) {
                    const long r = static_cast<long>(b) * channels + c;
                    for (int j = 0; j < n2; ++j) {
                        const double v = cached_freq_(r, j);
                        gfreq(r, j) = gdesc(b, c) * (v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0));
                    }
                }
            break;
        case Fusion::Learned: {
            const Vector wsub = fuse_w.value.head(n2);
            for (int b = 0; b < batch_; ++b)
                for (int c = 0; c < channels; ++c) {
                    const long r = static_cast<long>(b) * channels + c;
                    const double s = cached_desc_(b, c);
                    const double gz = gdesc(b, c) * s * (1.0 - s);
                    gfreq.row(r) = gz * wsub.transpose();
                    fuse_w.grad.head(n2) += gz * cached_freq_.row(r).transpose();
                    fuse_b.grad[0] += gz;
                }
            break;
        }
        case Fusion::Fca:
            for (int b = 0; b < batch_; ++b)
                for (int c = 0; c < channels; ++c) {
                    const int idx = fca_assignment[c] < n2 ? fca_assignment[c] : 0;
                    gfreq(static_cast<long>(b) * channels + c, idx) = gdesc(b, c);
                }
            break;
    }

    // Adjoint of the truncated transform: scatter into the pooled plane via
    // the transposed basis rows, then route through the pooling windows.
    const Matrix& d = freq::dct_basis(pool_side_);
    Tensor4 gpool(batch_, channels, pool_side_, pool_side_);
    Matrix gnn(ne, ne);
    for (int b = 0; b < batch_; ++b)
        for (int c = 0; c < channels; ++c) {
            const long r = static_cast<long>(b) * channels + c;
            for (int u = 0; u < ne; ++u)
                for (int v = 0; v < ne; ++v) gnn(u, v) = gfreq(r, u * ne + v);
            gpool.plane(b, c) = d.topRows(ne).transpose() * gnn * d.topRows(ne);
        }
    return freq::adaptive_avg_pool_backward(gpool, in_h_, in_w_);
}

void AttentionModule::collect_params(std::vector<nn::GradPair*>& out) {
    if (kind == AttentionKind::Fat && params.fusion == Fusion::Learned) {
        out.push_back(&fuse_w);
        out.push_back(&fuse_b);
    }
    reduce.collect_params(out);
    expand.collect_params(out);
}

}  // namespace fadconv::fat
