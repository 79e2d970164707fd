#include "fadconv/model.hpp"

#include "json.hpp"

#include <algorithm>

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace fadconv::model {

using nlohmann::json;

ConvKind conv_kind_from_string(const std::string& s) {
    if (s == "static") return ConvKind::Static;
    if (s == "dyconv") return ConvKind::DyConv;
    if (s == "fadconv") return ConvKind::FadConv;
    throw std::invalid_argument("unknown conv_kind: " + s);
}

std::string to_string(ConvKind k) {
    switch (k) {
        case ConvKind::Static: return "static";
        case ConvKind::DyConv: return "dyconv";
        case ConvKind::FadConv: return "fadconv";
    }
    return "?";
}

void ModelConfig::validate() const {
    if (encoder_channels.empty()) throw std::invalid_argument("config: encoder_channels empty");
    for (size_t i = 1; i < encoder_channels.size(); ++i)
        if (encoder_channels[i] <= encoder_channels[i - 1])
            throw std::invalid_argument("config: encoder_channels must be strictly increasing");
    const int stages = static_cast<int>(encoder_channels.size());
    if (input_size % (1 << stages) != 0)
        throw std::invalid_argument("config: input_size must be divisible by 2^" +
                                    std::to_string(stages));
    if (num_classes < 2) throw std::invalid_argument("config: num_classes must be >= 2");
    if (loss != "cross_entropy" && loss != "bce")
        throw std::invalid_argument("config: loss must be cross_entropy or bce");
    if (loss == "bce" && num_classes != 2)
        throw std::invalid_argument("config: bce loss requires num_classes == 2");
    if (num_experts < 1 || poolsize < 1 || freq_side < 1 || reduction < 1 || batch_size < 1 ||
        epochs < 0)
        throw std::invalid_argument("config: nonpositive hyperparameter");
    if (freq_side > poolsize)
        throw std::invalid_argument("config: freq_side must not exceed poolsize");
}

std::string ModelConfig::to_json() const {
    json j;
    j["conv_kind"] = model::to_string(conv_kind);
    j["num_experts"] = num_experts;
    j["poolsize"] = poolsize;
    j["freq_side"] = freq_side;
    j["reduction"] = reduction;
    j["fusion"] = fat::to_string(fusion);
    j["encoder_channels"] = encoder_channels;
    j["input_size"] = input_size;
    j["num_classes"] = num_classes;
    j["seed"] = seed;
    j["lr"] = lr;
    j["weight_decay"] = weight_decay;
    j["batch_size"] = batch_size;
    j["epochs"] = epochs;
    j["replace_decoder"] = replace_decoder;
    j["expert_bias"] = expert_bias;
    j["loss"] = loss;
    return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    const json j = json::parse(text);
    static const std::vector<std::string> known = {
        "conv_kind",  "num_experts", "poolsize",   "freq_side",       "reduction",
        "fusion",     "encoder_channels", "input_size", "num_classes", "seed",
        "lr",         "weight_decay", "batch_size", "epochs",          "replace_decoder",
        "expert_bias", "loss"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw std::invalid_argument("config: unknown key '" + it.key() + "'");
    }
    ModelConfig c;
    if (j.contains("conv_kind")) c.conv_kind = conv_kind_from_string(j["conv_kind"]);
    if (j.contains("num_experts")) c.num_experts = j["num_experts"];
    if (j.contains("poolsize")) c.poolsize = j["poolsize"];
    if (j.contains("freq_side")) c.freq_side = j["freq_side"];
    if (j.contains("reduction")) c.reduction = j["reduction"];
    if (j.contains("fusion")) c.fusion = fat::fusion_from_string(j["fusion"]);
    if (j.contains("encoder_channels"))
        c.encoder_channels = j["encoder_channels"].get<std::vector<int>>();
    if (j.contains("input_size")) c.input_size = j["input_size"];
    if (j.contains("num_classes")) c.num_classes = j["num_classes"];
    if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
    if (j.contains("lr")) c.lr = j["lr"];
    if (j.contains("weight_decay")) c.weight_decay = j["weight_decay"];
    if (j.contains("batch_size")) c.batch_size = j["batch_size"];
    if (j.contains("epochs")) c.epochs = j["epochs"];
    if (j.contains("replace_decoder")) c.replace_decoder = j["replace_decoder"];
    if (j.contains("expert_bias")) c.expert_bias = j["expert_bias"];
    if (j.contains("loss")) c.loss = j["loss"];
    c.validate();
    return c;
}

// ---- layers ------------------------------------------------------------------

Tensor4 Upsample2x::forward(const Tensor4& x, bool) {
    Tensor4 out(x.batch(), x.channels(), x.height() * 2, x.width() * 2);
    for (int b = 0; b < x.batch(); ++b)
        for (int c = 0; c < x.channels(); ++c) {
            auto in = x.plane(b, c);
            auto o = out.plane(b, c);
            for (int i = 0; i < x.height(); ++i)
                for (int j = 0; j < x.width(); ++j) {
                    const double v = in(i, j);
                    o(2 * i, 2 * j) = v;
                    o(2 * i, 2 * j + 1) = v;
                    o(2 * i + 1, 2 * j) = v;
                    o(2 * i + 1, 2 * j + 1) = v;
                }
        }
    return out;
}

Tensor4 Upsample2x::backward(const Tensor4& g) {
    Tensor4 out(g.batch(), g.channels(), g.height() / 2, g.width() / 2);
    for (int b = 0; b < g.batch(); ++b)
        for (int c = 0; c < g.channels(); ++c) {
            auto in = g.plane(b, c);
            auto o = out.plane(b, c);
            for (int i = 0; i < out.height(); ++i)
                for (int j = 0; j < out.width(); ++j)
                    o(i, j) = in(2 * i, 2 * j) + in(2 * i, 2 * j + 1) + in(2 * i + 1, 2 * j) +
                              in(2 * i + 1, 2 * j + 1);
        }
    return out;
}

static Tensor4 concat_channels(const Tensor4& a, const Tensor4& b) {
    Tensor4 out(a.batch(), a.channels() + b.channels(), a.height(), a.width());
    for (int bi = 0; bi < a.batch(); ++bi) {
        for (int c = 0; c < a.channels(); ++c) out.plane(bi, c) = a.plane(bi, c);
        for (int c = 0; c < b.channels(); ++c) out.plane(bi, a.channels() + c) = b.plane(bi, c);
    }
    return out;
}

static void split_channels(const Tensor4& g, int ca, Tensor4& ga, Tensor4& gb) {
    ga = Tensor4(g.batch(), ca, g.height(), g.width());
    gb = Tensor4(g.batch(), g.channels() - ca, g.height(), g.width());
    for (int bi = 0; bi < g.batch(); ++bi) {
        for (int c = 0; c < ca; ++c) ga.plane(bi, c) = g.plane(bi, c);
        for (int c = ca; c < g.channels(); ++c) gb.plane(bi, c - ca) = g.plane(bi, c);
    }
}

// ---- model -------------------------------------------------------------------

std::unique_ptr<nn::Layer> SegModel::make_block(const std::string& path, nn::ConvGeometry geom,
                                                bool relu, bool encoder) {
    Rng rng = Rng::derive(cfg.seed, static_cast<uint64_t>(block_counter_++));
    const bool dynamic =
        cfg.conv_kind != ConvKind::Static && (encoder || cfg.replace_decoder);
    if (!dynamic) return std::make_unique<dynconv::StaticConvBlock>(path, geom, relu, rng);
    fat::FatParams p;
    p.poolsize = cfg.poolsize;
    p.freq_side = cfg.freq_side;
    p.reduction = cfg.reduction;
    p.num_experts = cfg.num_experts;
    p.fusion = cfg.fusion;
    const fat::AttentionKind kind =
        cfg.conv_kind == ConvKind::FadConv ? fat::AttentionKind::Fat : fat::AttentionKind::Gap;
    return std::make_unique<dynconv::DynamicConvLayer>(path, geom, cfg.num_experts, p, kind,
                                                       relu, cfg.expert_bias, rng);
}

void SegModel::register_cost(const std::string& path, nn::Layer* layer, int in_h, int in_w) {
    cost_entries_.push_back({path, layer, in_h, in_w});
}

SegModel::SegModel(const ModelConfig& config) : cfg(config) {
    cfg.validate();
    const std::vector<int>& ch = cfg.encoder_channels;
    const int stages = static_cast<int>(ch.size());
    const int hw = cfg.input_size;

    auto geom3 = [](int cin, int cout, int stride) {
        nn::ConvGeometry g;
        g.in_channels = cin;
        g.out_channels = cout;
        g.kernel = 3;
        g.stride = stride;
        g.padding = 1;
        return g;
    };
    auto geom1 = [](int cin, int cout, int stride) {
        nn::ConvGeometry g;
        g.in_channels = cin;
        g.out_channels = cout;
        g.kernel = 1;
        g.stride = stride;
        g.padding = 0;
        return g;
    };

    // Stem stays static regardless of conv_kind.
    {
        Rng rng = Rng::derive(cfg.seed, static_cast<uint64_t>(block_counter_++));
        stem_ = std::make_unique<dynconv::StaticConvBlock>("stem", geom3(3, ch[0], 1), true, rng);
        register_cost("stem", stem_.get(), hw, hw);
    }

    int size = hw;
    int in_ch = ch[0];
    for (int s = 0; s < stages; ++s) {
        std::vector<ResidualBlock> stage;
        for (int blk = 0; blk < 2; ++blk) {
            const int stride = blk == 0 ? 2 : 1;
            const int cin = blk == 0 ? in_ch : ch[s];
            const std::string base =
                "encoder.stage" + std::to_string(s) + ".block" + std::to_string(blk);
            ResidualBlock b;
            b.conv1 = make_block(base + ".conv1", geom3(cin, ch[s], stride), true, true);
            b.conv2 = make_block(base + ".conv2", geom3(ch[s], ch[s], 1), false, true);
            if (stride != 1 || cin != ch[s])
                b.shortcut =
                    make_block(base + ".shortcut", geom1(cin, ch[s], stride), false, true);
            const int in_size = blk == 0 ? size : size / 2;
            register_cost(base + ".conv1", b.conv1.get(), in_size, in_size);
            register_cost(base + ".conv2", b.conv2.get(), in_size / stride, in_size / stride);
            if (b.shortcut)
                register_cost(base + ".shortcut", b.shortcut.get(), in_size, in_size);
            stage.push_back(std::move(b));
        }
        stages_.push_back(std::move(stage));
        size /= 2;
        in_ch = ch[s];
    }

    // Decoder: level j consumes the current map, upsamples, and fuses with
    // the skip from stage (stages-2-j), the stem output on the last level.
    int cur_ch = ch[stages - 1];
    for (int j = 0; j < stages; ++j) {
        const int skip_ch = j < stages - 1 ? ch[stages - 2 - j] : ch[0];
        const int out_ch = skip_ch;
        DecoderLevel lvl;
        const std::string base = "decoder.level" + std::to_string(j);
        lvl.conv_up = make_block(base + ".up_conv", geom3(cur_ch, out_ch, 1), true, false);
        lvl.conv_fuse =
            make_block(base + ".fuse_conv", geom3(out_ch + skip_ch, out_ch, 1), true, false);
        lvl.skip_channels = skip_ch;
        const int lvl_size = size * 2;
        register_cost(base + ".up_conv", lvl.conv_up.get(), lvl_size, lvl_size);
        register_cost(base + ".fuse_conv", lvl.conv_fuse.get(), lvl_size, lvl_size);
        decoder_.push_back(std::move(lvl));
        size *= 2;
        cur_ch = out_ch;
    }

    {
        Rng rng = Rng::derive(cfg.seed, static_cast<uint64_t>(block_counter_++));
        head_ = std::make_unique<nn::Conv2dLayer>("head", geom1(ch[0], cfg.head_channels(), 1),
                                                  true, rng);
    }
}

Tensor4 SegModel::forward(const Tensor4& x, bool train) {
    if (x.channels() != 3 || x.height() != cfg.input_size || x.width() != cfg.input_size)
        throw std::invalid_argument("SegModel: expected (B,3," + std::to_string(cfg.input_size) +
                                    "," + std::to_string(cfg.input_size) + "), got " +
                                    x.shape_str());
    skip_cache_.clear();
    Tensor4 y = stem_->forward(x, train);
    skip_cache_.push_back(y);  // index 0 = stem
    for (auto& stage : stages_) {
        for (auto& blk : stage) {
            Tensor4 main = blk.conv2->forward(blk.conv1->forward(y, train), train);
            Tensor4 sc = blk.shortcut ? blk.shortcut->forward(y, train) : y;
            main.data() += sc.data();
            y = blk.relu.forward(main, train);
        }
        skip_cache_.push_back(y);
    }

    const int stages = static_cast<int>(stages_.size());
    concat_split_.clear();
    for (int j = 0; j < stages; ++j) {
        DecoderLevel& lvl = decoder_[j];
        y = lvl.conv_up->forward(lvl.up.forward(y, train), train);
        const Tensor4& skip = j < stages - 1 ? skip_cache_[stages - 1 - j] : skip_cache_[0];
        concat_split_.push_back(y.channels());
        y = lvl.conv_fuse->forward(concat_channels(y, skip), train);
    }
    return head_->forward(y, train);
}

Tensor4 SegModel::backward(const Tensor4& grad_logits) {
    const int stages = static_cast<int>(stages_.size());
    std::vector<Tensor4> skip_grads(stages + 1);
    for (int i = 0; i <= stages; ++i)
        skip_grads[i] = Tensor4(skip_cache_[i].batch(), skip_cache_[i].channels(),
                                skip_cache_[i].height(), skip_cache_[i].width());

    Tensor4 g = head_->backward(grad_logits);
    for (int j = stages - 1; j >= 0; --j) {
        DecoderLevel& lvl = decoder_[j];
        Tensor4 gcat = lvl.conv_fuse->backward(g);
        Tensor4 gup, gskip;
        split_channels(gcat, concat_split_[j], gup, gskip);
        const int skip_idx = j < stages - 1 ? stages - 1 - j : 0;
        skip_grads[skip_idx].data() += gskip.data();
        g = lvl.up.backward(lvl.conv_up->backward(gup));
    }

    for (int s = stages - 1; s >= 0; --s) {
        g.data() += skip_grads[s + 1].data();
        for (int blk = static_cast<int>(stages_[s].size()) - 1; blk >= 0; --blk) {
            ResidualBlock& b = stages_[s][blk];
            Tensor4 gm = b.relu.backward(g);
            Tensor4 gx = b.conv1->backward(b.conv2->backward(gm));
            if (b.shortcut)
                gx.data() += b.shortcut->backward(gm).data();
            else
                gx.data() += gm.data();
            g = std::move(gx);
        }
    }
    g.data() += skip_grads[0].data();
    return stem_->backward(g);
}

std::vector<nn::GradPair*> SegModel::params() {
    std::vector<nn::GradPair*> out;
    stem_->collect_params(out);
    for (auto& stage : stages_)
        for (auto& blk : stage) {
            blk.conv1->collect_params(out);
            blk.conv2->collect_params(out);
            if (blk.shortcut) blk.shortcut->collect_params(out);
        }
    for (auto& lvl : decoder_) {
        lvl.conv_up->collect_params(out);
        lvl.conv_fuse->collect_params(out);
    }
    head_->collect_params(out);
    return out;
}

std::vector<std::pair<std::string, Vector*>> SegModel::buffers() {
    std::vector<std::pair<std::string, Vector*>> out;
    stem_->collect_buffers(out);
    for (auto& stage : stages_)
        for (auto& blk : stage) {
            blk.conv1->collect_buffers(out);
            blk.conv2->collect_buffers(out);
            if (blk.shortcut) blk.shortcut->collect_buffers(out);
        }
    for (auto& lvl : decoder_) {
        lvl.conv_up->collect_buffers(out);
        lvl.conv_fuse->collect_buffers(out);
    }
    return out;
}

void SegModel::zero_grad() {
    for (nn::GradPair* p : params()) p->zero_grad();
}

long SegModel::param_count() {
    long n = 0;
    for (nn::GradPair* p : params()) n += p->value.size();
    return n;
}

cost::CostReport SegModel::cost_report() const {
    cost::CostReport rep;
    for (const CostEntry& e : cost_entries_) {
        if (auto* d = dynamic_cast<const dynconv::DynamicConvLayer*>(e.layer))
            rep.layers.push_back(cost::instrument(*d, e.path, e.in_h, e.in_w));
        else if (auto* s = dynamic_cast<const dynconv::StaticConvBlock*>(e.layer))
            rep.layers.push_back(cost::instrument(*s, e.path, e.in_h, e.in_w));
    }
    cost::LayerCost head;
    head.path = "head";
    head.params = head_->weight.value.size() + head_->bias.value.size();
    head.conv_madds = static_cast<long>(cfg.input_size) * cfg.input_size *
                      cfg.encoder_channels[0] * cfg.head_channels();
    head.b = static_cast<long>(cfg.input_size) * cfg.input_size * cfg.head_channels();
    rep.layers.push_back(head);
    return rep;
}

// ---- training / evaluation ------------------------------------------------------

Tensor4 batch_images(const std::vector<const data::Sample*>& samples) {
    if (samples.empty()) throw std::invalid_argument("batch_images: empty batch");
    const int h = samples[0]->image.height(), w = samples[0]->image.width();
    Tensor4 out(static_cast<int>(samples.size()), 3, h, w);
    for (size_t i = 0; i < samples.size(); ++i)
        out.data().segment(static_cast<long>(i) * 3 * h * w, static_cast<long>(3) * h * w) =
            samples[i]->image.data();
    return out;
}

std::vector<int> batch_labels(const std::vector<const data::Sample*>& samples) {
    std::vector<int> out;
    for (const data::Sample* s : samples) out.insert(out.end(), s->label.begin(), s->label.end());
    return out;
}

static std::vector<int> predict(const Tensor4& logits, bool bce) {
    const int b = logits.batch(), h = logits.height(), w = logits.width();
    std::vector<int> pred(static_cast<size_t>(b) * h * w);
    size_t i = 0;
    for (int bi = 0; bi < b; ++bi)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x, ++i) {
                if (bce) {
                    pred[i] = logits.at(bi, 0, y, x) > 0.0 ? 1 : 0;
                } else {
                    int best = 0;
                    double bv = logits.at(bi, 0, y, x);
                    for (int c = 1; c < logits.channels(); ++c)
                        if (logits.at(bi, c, y, x) > bv) {
                            bv = logits.at(bi, c, y, x);
                            best = c;
                        }
                    pred[i] = best;
                }
            }
    return pred;
}

metrics::MetricsReport evaluate(SegModel& model, const std::vector<data::Sample>& samples) {
    metrics::ConfusionMatrix cm(model.cfg.num_classes);
    const int bs = model.cfg.batch_size;
    for (size_t start = 0; start < samples.size(); start += bs) {
        std::vector<const data::Sample*> batch;
        for (size_t i = start; i < std::min(samples.size(), start + bs); ++i)
            batch.push_back(&samples[i]);
        const Tensor4 logits = model.forward(batch_images(batch), false);
        cm.update(batch_labels(batch), predict(logits, model.cfg.loss == "bce"));
    }
    return metrics::compute(cm);
}

std::vector<EpochLog> train(SegModel& model, nn::Adam& opt, const data::Dataset& ds,
                            const std::string& log_csv) {
    const ModelConfig& cfg = model.cfg;
    if (ds.train.empty()) throw std::invalid_argument("train: empty training split");
    Rng rng = Rng::derive(cfg.seed, 0x7261696eULL);  // shuffle stream

    std::ofstream csv;
    if (!log_csv.empty()) {
        csv.open(log_csv);
        metrics::MetricsReport header_shape;
        header_shape.per_class.resize(cfg.num_classes);
        csv << "epoch,train_loss," << header_shape.csv_header() << "\n";
    }

    std::vector<EpochLog> log;
    std::vector<int> order(ds.train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates with the portable stream
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
            std::swap(order[i], order[rng.uniform_int(0, i)]);

        double loss_sum = 0.0;
        long batches = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size, ++batches) {
            std::vector<const data::Sample*> batch;
            for (size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i)
                batch.push_back(&ds.train[order[i]]);
            const Tensor4 x = batch_images(batch);
            const std::vector<int> labels = batch_labels(batch);

            model.zero_grad();
            const Tensor4 logits = model.forward(x, true);
            Tensor4 grad;
            const double loss = cfg.loss == "bce" ? nn::bce_loss(logits, labels, &grad)
                                                  : nn::cross_entropy_loss(logits, labels, &grad);
            if (!std::isfinite(loss))
                throw std::runtime_error("train: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(batches));
            model.backward(grad);
            std::vector<nn::GradPair*> params = model.params();
            opt.step(params);
            loss_sum += loss;
        }

        EpochLog row;
        row.epoch = epoch;
        row.train_loss = loss_sum / std::max<long>(1, batches);
        row.test = evaluate(model, ds.test);
        if (csv.is_open())
            csv << epoch << "," << row.train_loss << "," << row.test.csv_row() << "\n";
        log.push_back(std::move(row));
    }
    return log;
}

// ---- checkpointing -----------------------------------------------------------------

static void write_u32(std::ostream& o, uint32_t v) { o.write(reinterpret_cast<char*>(&v), 4); }
static void write_u64(std::ostream& o, uint64_t v) { o.write(reinterpret_cast<char*>(&v), 8); }
static uint32_t read_u32(std::istream& i) {
    uint32_t v;
    i.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
static uint64_t read_u64(std::istream& i) {
    uint64_t v;
    i.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

static void write_named(std::ostream& o, const std::string& name,
                        const std::vector<long>& dims, const Vector& v) {
    write_u32(o, static_cast<uint32_t>(name.size()));
    o.write(name.data(), name.size());
    write_u32(o, static_cast<uint32_t>(dims.size()));
    for (long d : dims) write_u64(o, static_cast<uint64_t>(d));
    o.write(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
}

static constexpr char kMagic[8] = {'F', 'A', 'D', 'C', 'K', 'P', 'T', '1'};

void save_checkpoint(const std::string& path, SegModel& model, const nn::Adam& opt, int epoch,
                     const Rng& train_rng) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out.write(kMagic, 8);
    write_u32(out, 1);  // version
    const std::string cfg_json = model.cfg.to_json();
    write_u64(out, cfg_json.size());
    out.write(cfg_json.data(), cfg_json.size());
    write_u32(out, static_cast<uint32_t>(epoch));
    const std::string rng_state = train_rng.serialize();
    write_u64(out, rng_state.size());
    out.write(rng_state.data(), rng_state.size());
    write_u64(out, static_cast<uint64_t>(opt.t));

    std::vector<nn::GradPair*> params = model.params();
    std::vector<std::pair<std::string, Vector*>> buffers = model.buffers();
    const bool has_opt = opt.m.size() == params.size();
    const uint64_t ntensors = params.size() * (has_opt ? 3 : 1) + buffers.size();
    write_u64(out, ntensors);
    for (size_t i = 0; i < params.size(); ++i) {
        write_named(out, params[i]->name, params[i]->dims, params[i]->value);
        if (has_opt) {
            write_named(out, params[i]->name + ".adam_m", {params[i]->value.size()}, opt.m[i]);
            write_named(out, params[i]->name + ".adam_v", {params[i]->value.size()}, opt.v[i]);
        }
    }
    for (auto& [name, buf] : buffers) write_named(out, name, {buf->size()}, *buf);
}

std::unique_ptr<SegModel> load_checkpoint(const std::string& path, nn::Adam& opt, int& epoch,
                                          Rng& train_rng) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    const uint32_t version = read_u32(in);
    if (version != 1) throw std::runtime_error("load_checkpoint: unsupported version");
    std::string cfg_json(read_u64(in), '\0');
    in.read(cfg_json.data(), cfg_json.size());
    auto model = std::make_unique<SegModel>(ModelConfig::from_json(cfg_json));
    epoch = static_cast<int>(read_u32(in));
    std::string rng_state(read_u64(in), '\0');
    in.read(rng_state.data(), rng_state.size());
    train_rng.deserialize(rng_state);
    opt.t = static_cast<long>(read_u64(in));

    std::vector<nn::GradPair*> params = model->params();
    std::vector<std::pair<std::string, Vector*>> buffers = model->buffers();
    opt.m.assign(params.size(), Vector());
    opt.v.assign(params.size(), Vector());

    const uint64_t ntensors = read_u64(in);
    for (uint64_t t = 0; t < ntensors; ++t) {
        std::string name(read_u32(in), '\0');
        in.read(name.data(), name.size());
        const uint32_t rank = read_u32(in);
        long total = 1;
        for (uint32_t r = 0; r < rank; ++r) total *= static_cast<long>(read_u64(in));
        Vector v(total);
        in.read(reinterpret_cast<char*>(v.data()), total * sizeof(double));
        if (!in) throw std::runtime_error("load_checkpoint: truncated tensor " + name);

        bool found = false;
        for (size_t i = 0; i < params.size(); ++i) {
            if (name == params[i]->name) {
                params[i]->value = v;
                found = true;
            } else if (name == params[i]->name + ".adam_m") {
                opt.m[i] = v;
                found = true;
            } else if (name == params[i]->name + ".adam_v") {
                opt.v[i] = v;
                found = true;
            }
            if (found) break;
        }
        if (!found)
            for (auto& [bname, buf] : buffers)
                if (name == bname) {
                    *buf = v;
                    found = true;
                    break;
                }
        if (!found) throw std::runtime_error("load_checkpoint: unknown tensor " + name);
    }
    if (opt.m.empty() || opt.m[0].size() == 0) {
        opt.m.clear();
        opt.v.clear();
    }
    return model;
}

}  // namespace fadconv::model
