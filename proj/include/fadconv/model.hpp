#ifndef FADCONV_MODEL_HPP
#define FADCONV_MODEL_HPP

#include <memory>
#include <string>
#include <vector>

#include "fadconv/cost.hpp"
#include "fadconv/data.hpp"
#include "fadconv/dynconv.hpp"
#include "fadconv/metrics.hpp"

namespace fadconv::model {

enum class ConvKind { Static, DyConv, FadConv };
ConvKind conv_kind_from_string(const std::string& s);
std::string to_string(ConvKind k);

struct ModelConfig {
    ConvKind conv_kind = ConvKind::Static;
    int num_experts = 4;
    int poolsize = 16;
    int freq_side = 4;
    int reduction = 4;
    fat::Fusion fusion = fat::Fusion::Learned;
    std::vector<int> encoder_channels = {16, 32, 64, 128};
    int input_size = 64;
    int num_classes = 2;
    uint64_t seed = 0;
    double lr = 3e-4;
    double weight_decay = 1e-4;
    int batch_size = 16;
    int epochs = 20;
    bool replace_decoder = false;  // conv_kind applies to encoder only by default
    bool expert_bias = false;
    std::string loss = "cross_entropy";  // or "bce" (single-logit head, 2 classes)

    void validate() const;
    int head_channels() const { return loss == "bce" ? 1 : num_classes; }
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);  // strict: unknown keys rejected
};

// Nearest-neighbor x2 upsampling.
class Upsample2x : public nn::Layer {
public:
    Tensor4 forward(const Tensor4& x, bool train) override;
    Tensor4 backward(const Tensor4& grad_out) override;
};

// ResNet-style encoder (2 residual blocks per stage, stride-2 at stage entry)
// with a U-Net-style decoder (nearest x2 upsample + 3x3 conv, skip concat)
// and a 1x1 logit head.
class SegModel {
public:
    explicit SegModel(const ModelConfig& config);

    Tensor4 forward(const Tensor4& x, bool train);
    Tensor4 backward(const Tensor4& grad_logits);

    std::vector<nn::GradPair*> params();
    std::vector<std::pair<std::string, Vector*>> buffers();
    void zero_grad();
    long param_count();

    cost::CostReport cost_report() const;

    ModelConfig cfg;

private:
    struct ResidualBlock {
        std::unique_ptr<nn::Layer> conv1;     // relu inside
        std::unique_ptr<nn::Layer> conv2;     // no relu
        std::unique_ptr<nn::Layer> shortcut;  // nullptr = identity
        nn::ReluLayer relu;
    };
    struct DecoderLevel {
        Upsample2x up;
        std::unique_ptr<nn::Layer> conv_up;    // channel change after upsample
        std::unique_ptr<nn::Layer> conv_fuse;  // after skip concat
        int skip_channels = 0;
    };

    std::unique_ptr<nn::Layer> make_block(const std::string& path, nn::ConvGeometry geom,
                                          bool relu, bool encoder);
    void register_cost(const std::string& path, nn::Layer* layer, int in_h, int in_w);

    std::unique_ptr<nn::Layer> stem_;
    std::vector<std::vector<ResidualBlock>> stages_;
    std::vector<DecoderLevel> decoder_;
    std::unique_ptr<nn::Conv2dLayer> head_;

    struct CostEntry {
        std::string path;
        nn::Layer* layer;
        int in_h, in_w;
    };
    std::vector<CostEntry> cost_entries_;
    int block_counter_ = 0;

    // forward caches for the skip wiring
    std::vector<Tensor4> skip_cache_;
    std::vector<int> concat_split_;
};

Tensor4 batch_images(const std::vector<const data::Sample*>& samples);
std::vector<int> batch_labels(const std::vector<const data::Sample*>& samples);

metrics::MetricsReport evaluate(SegModel& model, const std::vector<data::Sample>& samples);

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    metrics::MetricsReport test;
};

// Deterministic given cfg.seed. Writes one CSV row per epoch to `log_csv`
// when nonempty. Throws on non-finite loss, naming the epoch and batch.
std::vector<EpochLog> train(SegModel& model, nn::Adam& opt, const data::Dataset& ds,
                            const std::string& log_csv = "");

// ---- checkpointing ------------------------------------------------------------

void save_checkpoint(const std::string& path, SegModel& model, const nn::Adam& opt, int epoch,
                     const Rng& train_rng);
// Rebuilds the model from the embedded config.
std::unique_ptr<SegModel> load_checkpoint(const std::string& path, nn::Adam& opt, int& epoch,
                                          Rng& train_rng);

}  // namespace fadconv::model

#endif
