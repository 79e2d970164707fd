#ifndef FADCONV_FAT_HPP
#define FADCONV_FAT_HPP

#include <string>
#include <vector>

#include "fadconv/freq.hpp"
#include "fadconv/nn.hpp"

namespace fadconv::fat {

enum class Fusion { Sum, AbsSum, Learned, Fca };
enum class AttentionKind { Fat, Gap };

Fusion fusion_from_string(const std::string& s);
std::string to_string(Fusion f);
AttentionKind attention_from_string(const std::string& s);
std::string to_string(AttentionKind k);

struct FatParams {
    int poolsize = 16;
    int freq_side = 4;
    int reduction = 4;
    int num_experts = 4;
    Fusion fusion = Fusion::Learned;

    void validate() const;
    int reduced_dim(int channels) const { return (channels + reduction - 1) / reduction; }
};

// Zigzag traversal order of an n x n block (JPEG order), lowest frequency first.
std::vector<int> zigzag_order(int n);

// Collapse per-channel frequency vectors (rows, n^2) to one descriptor per row.
// `fuse_w`/`fuse_b` are required for Learned; `assignment` (one coefficient
// index per row) is required for Fca.
Vector fuse_frequencies(const Matrix& freq_vecs, Fusion strategy, const Vector* fuse_w,
                        const double* fuse_b, const std::vector<int>* assignment);

// Expert-weight attention head. Pipeline for kind == Fat:
//   adaptive pool (p) -> per-channel 2D DCT -> top-left n x n -> fusion
//   -> dense(C -> ceil(C/r)) -> relu -> dense(-> K) -> row softmax.
// For kind == Gap the descriptor is the per-channel spatial mean of the raw
// input; the tail is identical. Differentiable end to end.
class AttentionModule {
public:
    AttentionModule(const std::string& name, int channels, const FatParams& params,
                    AttentionKind kind, Rng& rng);

    Matrix forward(const Tensor4& x);            // (B, K) rows summing to 1
    Tensor4 backward(const Matrix& grad_alpha);  // gradient w.r.t. x
    void collect_params(std::vector<nn::GradPair*>& out);

    int channels;
    FatParams params;
    AttentionKind kind;
    nn::GradPair fuse_w;  // (n^2), Learned fusion only
    nn::GradPair fuse_b;  // (1)
    nn::Dense reduce, expand;
    std::vector<int> fca_assignment;  // per-channel coefficient index

private:
    int in_h_ = 0, in_w_ = 0, batch_ = 0;
    int pool_side_ = 0, freq_side_eff_ = 0;
    Matrix cached_freq_;    // (B*C, n_eff^2), Fat only
    Matrix cached_desc_;    // (B, C)
    Matrix cached_hidden_;  // pre-relu
    Matrix cached_alpha_;
};

}  // namespace fadconv::fat

#endif
