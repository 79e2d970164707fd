#include "fadconv/dynconv.hpp"

#include <stdexcept>

namespace fadconv::dynconv {

ExpertBank::ExpertBank(const std::string& name, nn::ConvGeometry g, int k, bool bias, Rng& rng)
    : geom(g), num_experts(k), has_bias(bias) {
    geom.validate();
    if (k < 1) throw std::invalid_argument("ExpertBank: need at least one expert");
    experts.init(name + ".experts", {k, geom.out_channels, geom.in_channels / geom.groups,
                                     geom.kernel, geom.kernel});
    const long fan_in =
        static_cast<long>(geom.in_channels / geom.groups) * geom.kernel * geom.kernel;
    // Each expert gets its own Kaiming draw, fan-in scaled by 1 (not 1/K).
    for (int e = 0; e < k; ++e) {
        Vector slice = experts.value.segment(e * kernel_size(), kernel_size());
        nn::kaiming_init(slice, fan_in, rng);
        experts.value.segment(e * kernel_size(), kernel_size()) = slice;
    }
    if (has_bias) biases.init(name + ".expert_biases", {k, geom.out_channels});
}

Matrix aggregate(const ExpertBank& bank, const Matrix& alphas) {
    if (alphas.cols() != bank.num_experts)
        throw std::invalid_argument("aggregate: alphas have " + std::to_string(alphas.cols()) +
                                    " columns, bank has " + std::to_string(bank.num_experts) +
                                    " experts");
    const long ws = bank.kernel_size();
    Matrix out = Matrix::Zero(alphas.rows(), ws);
    for (long b = 0; b < alphas.rows(); ++b)
        for (int e = 0; e < bank.num_experts; ++e)
            out.row(b) += alphas(b, e) * bank.experts.value.segment(e * ws, ws).transpose();
    return out;
}

Matrix aggregate_biases(const ExpertBank& bank, const Matrix& alphas) {
    if (!bank.has_bias) throw std::invalid_argument("aggregate_biases: bank has no biases");
    if (alphas.cols() != bank.num_experts)
        throw std::invalid_argument("aggregate_biases: expert count mismatch");
    const int co = bank.geom.out_channels;
    Matrix out = Matrix::Zero(alphas.rows(), co);
    for (long b = 0; b < alphas.rows(); ++b)
        for (int e = 0; e < bank.num_experts; ++e)
            out.row(b) += alphas(b, e) * bank.biases.value.segment(e * co, co).transpose();
    return out;
}

DynamicConvLayer::DynamicConvLayer(const std::string& name, nn::ConvGeometry geom,
                                   int num_experts, const fat::FatParams& params,
                                   fat::AttentionKind kind, bool relu, bool expert_bias,
                                   Rng& rng)
    : bank(name, geom, num_experts, expert_bias, rng),
      attn(name + ".attn", geom.in_channels,
           [&] {
               fat::FatParams p = params;
               p.num_experts = num_experts;
               return p;
           }(),
           kind, rng),
      bn(name + ".bn", geom.out_channels),
      use_relu(relu) {}

Tensor4 DynamicConvLayer::forward(const Tensor4& x, bool train) {
    cached_x_ = x;
    cached_alphas_ = attn.forward(x);
    cached_kernels_ = aggregate(bank, cached_alphas_);
    if (bank.has_bias) cached_biases_ = aggregate_biases(bank, cached_alphas_);

    const int ho = bank.geom.out_dim(x.height()), wo = bank.geom.out_dim(x.width());
    Tensor4 out(x.batch(), bank.geom.out_channels, ho, wo);
    for (int b = 0; b < x.batch(); ++b) {
        const Vector w = cached_kernels_.row(b).transpose();
        Vector bias;
        if (bank.has_bias) bias = cached_biases_.row(b).transpose();
        const Tensor4 y =
            nn::conv2d(x.slice_batch(b), w, bank.has_bias ? &bias : nullptr, bank.geom);
        out.data().segment(static_cast<long>(b) * y.size(), y.size()) = y.data();
    }
    Tensor4 z = bn.forward(out, train);
    return use_relu ? relu_.forward(z, train) : z;
}

Tensor4 DynamicConvLayer::backward(const Tensor4& grad_out) {
    if (cached_x_.size() == 0)
        throw std::logic_error("DynamicConvLayer: backward without cached forward");
    Tensor4 g = use_relu ? relu_.backward(grad_out) : grad_out;
    g = bn.backward(g);

    const long ws = bank.kernel_size();
    const int co = bank.geom.out_channels;
    const int batch = cached_x_.batch();
    Matrix grad_alpha = Matrix::Zero(batch, bank.num_experts);
    Tensor4 gx(batch, cached_x_.channels(), cached_x_.height(), cached_x_.width());

    for (int b = 0; b < batch; ++b) {
        const Tensor4 xb = cached_x_.slice_batch(b);
        Tensor4 gb(1, co, g.height(), g.width());
        gb.data() = g.data().segment(static_cast<long>(b) * gb.size(), gb.size());

        const Vector w = cached_kernels_.row(b).transpose();
        Vector gw = Vector::Zero(ws);
        Vector gbias = Vector::Zero(co);
        Tensor4 gxb(1, cached_x_.channels(), cached_x_.height(), cached_x_.width());
        nn::conv2d_backward(xb, w, gb, bank.geom, &gxb, &gw,
                            bank.has_bias ? &gbias : nullptr);
        gx.data().segment(static_cast<long>(b) * gxb.size(), gxb.size()) = gxb.data();

        for (int e = 0; e < bank.num_experts; ++e) {
            const double a = cached_alphas_(b, e);
            bank.experts.grad.segment(e * ws, ws) += a * gw;
            grad_alpha(b, e) += gw.dot(bank.experts.value.segment(e * ws, ws));
            if (bank.has_bias) {
                bank.biases.grad.segment(e * co, co) += a * gbias;
                grad_alpha(b, e) += gbias.dot(bank.biases.value.segment(e * co, co));
            }
        }
    }

    const Tensor4 gx_attn = attn.backward(grad_alpha);
    gx.data() += gx_attn.data();
    return gx;
}

void DynamicConvLayer::collect_params(std::vector<nn::GradPair*>& out) {
    out.push_back(&bank.experts);
    if (bank.has_bias) out.push_back(&bank.biases);
    attn.collect_params(out);
    bn.collect_params(out);
}

void DynamicConvLayer::collect_buffers(std::vector<std::pair<std::string, Vector*>>& out) {
    bn.collect_buffers(out);
}

StaticConvBlock::StaticConvBlock(const std::string& name, nn::ConvGeometry geom, bool relu,
                                 Rng& rng)
    : conv(name + ".conv", geom, false, rng), bn(name + ".bn", geom.out_channels),
      use_relu(relu) {}

Tensor4 StaticConvBlock::forward(const Tensor4& x, bool train) {
    Tensor4 y = bn.forward(conv.forward(x, train), train);
    return use_relu ? relu_.forward(y, train) : y;
}

Tensor4 StaticConvBlock::backward(const Tensor4& grad_out) {
    Tensor4 g = use_relu ? relu_.backward(grad_out) : grad_out;
    return conv.backward(bn.backward(g));
}

void StaticConvBlock::collect_params(std::vector<nn::GradPair*>& out) {
    conv.collect_params(out);
    bn.collect_params(out);
}

void StaticConvBlock::collect_buffers(std::vector<std::pair<std::string, Vector*>>& out) {
    bn.collect_buffers(out);
}

}  // namespace fadconv::dynconv
