#ifndef FADCONV_DYNCONV_HPP
#define FADCONV_DYNCONV_HPP

#include <memory>
#include <string>
#include <vector>

#include "fadconv/fat.hpp"
#include "fadconv/nn.hpp"

namespace fadconv::dynconv {

// K parallel kernels sharing one geometry. Kernel e occupies the contiguous
// slice [e * weight_count, (e+1) * weight_count) of `experts.value`.
struct ExpertBank {
    nn::ConvGeometry geom;
    int num_experts = 1;
    bool has_bias = false;
    nn::GradPair experts;  // (K, Cout, Cin/groups, k, k)
    nn::GradPair biases;   // (K, Cout), optional

    ExpertBank() = default;
    ExpertBank(const std::string& name, nn::ConvGeometry g, int k, bool bias, Rng& rng);

    long kernel_size() const { return geom.weight_count(); }
};

// W_final[b] = sum_e alphas(b, e) * W_e. Rows of the result are flattened
// per-sample kernels; biases likewise when present.
Matrix aggregate(const ExpertBank& bank, const Matrix& alphas);
Matrix aggregate_biases(const ExpertBank& bank, const Matrix& alphas);

// Complete dynamic layer: attention -> aggregate -> conv -> BN -> optional ReLU.
// kind == Gap gives the DYConv baseline; K == 1 degenerates to a static layer.
class DynamicConvLayer : public nn::Layer {
public:
    DynamicConvLayer(const std::string& name, nn::ConvGeometry geom, int num_experts,
                     const fat::FatParams& params, fat::AttentionKind kind, bool relu,
                     bool expert_bias, Rng& rng);

    Tensor4 forward(const Tensor4& x, bool train) override;
    Tensor4 backward(const Tensor4& grad_out) override;
    void collect_params(std::vector<nn::GradPair*>& out) override;
    void collect_buffers(std::vector<std::pair<std::string, Vector*>>& out) override;

    const Matrix& last_alphas() const { return cached_alphas_; }

    ExpertBank bank;
    fat::AttentionModule attn;
    nn::BatchNorm2d bn;
    bool use_relu;

private:
    Tensor4 cached_x_;
    Matrix cached_alphas_;   // (B, K)
    Matrix cached_kernels_;  // (B, weight_count)
    Matrix cached_biases_;   // (B, Cout) when expert bias on
    nn::ReluLayer relu_;
};

// Static conv -> BN -> optional ReLU with the same interface.
class StaticConvBlock : public nn::Layer {
public:
    StaticConvBlock(const std::string& name, nn::ConvGeometry geom, bool relu, Rng& rng);
    Tensor4 forward(const Tensor4& x, bool train) override;
    Tensor4 backward(const Tensor4& grad_out) override;
    void collect_params(std::vector<nn::GradPair*>& out) override;
    void collect_buffers(std::vector<std::pair<std::string, Vector*>>& out) override;

    nn::Conv2dLayer conv;
    nn::BatchNorm2d bn;
    bool use_relu;

private:
    nn::ReluLayer relu_;
};

}  // namespace fadconv::dynconv

#endif
