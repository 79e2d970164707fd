#include <doctest.h>

#include <cstdio>

#include "fadconv/model.hpp"

using namespace fadconv;
using namespace fadconv::model;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.conv_kind = ConvKind::FadConv;
    cfg.encoder_channels = {2, 4};
    cfg.input_size = 8;
    cfg.num_experts = 2;
    cfg.poolsize = 4;
    cfg.freq_side = 2;
    cfg.reduction = 2;
    cfg.batch_size = 4;
    cfg.epochs = 2;
    cfg.seed = 3;
    return cfg;
}

data::Dataset tiny_dataset(uint64_t seed) {
    data::DatasetSpec spec = data::DatasetSpec::defaults(2, 8, 20, seed);
    spec.min_cells = 2;
    spec.max_cells = 3;
    return data::generate(spec);
}

Tensor4 random_input(int b, int size, Rng& rng) {
    Tensor4 x(b, 3, size, size);
    for (long i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(0.0, 1.0);
    return x;
}

}  // namespace

TEST_CASE("config JSON round trips and rejects unknown keys") {
    ModelConfig cfg = tiny_config();
    cfg.fusion = fat::Fusion::AbsSum;
    cfg.loss = "bce";
    const ModelConfig back = ModelConfig::from_json(cfg.to_json());
    CHECK(back.conv_kind == cfg.conv_kind);
    CHECK(back.encoder_channels == cfg.encoder_channels);
    CHECK(back.fusion == cfg.fusion);
    CHECK(back.loss == cfg.loss);
    CHECK(back.seed == cfg.seed);
    CHECK(back.lr == cfg.lr);

    CHECK_THROWS_WITH_AS(ModelConfig::from_json(R"({"pool_size": 8})"), // typo of poolsize
                         doctest::Contains("pool_size"), std::invalid_argument);
    CHECK_THROWS(ModelConfig::from_json(R"({"input_size": 10})"));       // not divisible by 16
    CHECK_THROWS(ModelConfig::from_json(R"({"loss": "bce", "num_classes": 3})"));
    CHECK_THROWS(ModelConfig::from_json(R"({"conv_kind": "magic"})"));
}

TEST_CASE("model forward shape, determinism, and input validation") {
    const ModelConfig cfg = tiny_config();
    SegModel a(cfg), b(cfg);
    Rng rng(41);
    const Tensor4 x = random_input(2, 8, rng);
    const Tensor4 ya = a.forward(x, false);
    CHECK(ya.batch() == 2);
    CHECK(ya.channels() == 2);
    CHECK(ya.height() == 8);
    CHECK(ya.width() == 8);
    // two models built from the same config are bit-identical
    const Tensor4 yb = b.forward(x, false);
    CHECK((ya.data() - yb.data()).cwiseAbs().maxCoeff() == 0.0);

    Tensor4 wrong(1, 3, 16, 16);
    CHECK_THROWS(a.forward(wrong, false));
    CHECK(a.param_count() == b.param_count());
    CHECK(a.param_count() > 0);
}

TEST_CASE("single-expert fadconv model matches the static model bit for bit") {
    ModelConfig cfg = tiny_config();
    cfg.num_experts = 1;
    ModelConfig stat_cfg = cfg;
    stat_cfg.conv_kind = ConvKind::Static;

    SegModel dyn(cfg), stat(stat_cfg);
    Rng rng(43);
    const Tensor4 x = random_input(3, 8, rng);
    const Tensor4 yd = dyn.forward(x, true);
    const Tensor4 ys = stat.forward(x, true);
    CHECK((yd.data() - ys.data()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fadconv and dyconv models share identical expert banks under one seed") {
    ModelConfig cfg = tiny_config();
    ModelConfig gap_cfg = cfg;
    gap_cfg.conv_kind = ConvKind::DyConv;
    SegModel fad(cfg), gap(gap_cfg);
    auto pf = fad.params();
    auto pg = gap.params();
    // the fat model has extra learned-fusion params; every shared name matches bitwise
    int matched = 0;
    for (nn::GradPair* g : pg)
        for (nn::GradPair* f : pf)
            if (f->name == g->name) {
                CHECK((f->value - g->value).cwiseAbs().maxCoeff() == 0.0);
                ++matched;
            }
    CHECK(matched == static_cast<int>(pg.size()));
    int expert_banks = 0;
    for (nn::GradPair* g : pg)
        expert_banks += g->name.find(".experts") != std::string::npos;
    CHECK(expert_banks > 0);
}

TEST_CASE("cost report covers every conv block and scales with expert count") {
    const ModelConfig cfg = tiny_config();
    SegModel m(cfg);
    const cost::CostReport rep = m.cost_report();
    CHECK(rep.layers.size() > 10);  // stem + 2 stages x (2 blocks x 2-3 convs) + decoder + head
    const cost::LayerCost total = rep.total();
    CHECK(total.dct > 0);
    CHECK(total.fat > 0);
    CHECK(total.dyn_kernel > 0);

    // cost-model params equal the live parameter count
    long live = 0;
    for (nn::GradPair* p : const_cast<SegModel&>(m).params()) live += p->value.size();
    CHECK(total.params == live);

    ModelConfig big = cfg;
    big.num_experts = 4;
    SegModel m4(big);
    CHECK(m4.cost_report().total().dyn_kernel == 2 * total.dyn_kernel);
    CHECK(m4.cost_report().total().dct == total.dct);

    ModelConfig stat = cfg;
    stat.conv_kind = ConvKind::Static;
    SegModel ms(stat);
    const cost::LayerCost st = ms.cost_report().total();
    CHECK(st.dct == 0);
    CHECK(st.fat == 0);
    CHECK(st.dyn_kernel == 0);
    CHECK(st.conv_madds == total.conv_madds);  // same backbone geometry
}

TEST_CASE("training is deterministic and reduces the loss") {
    const data::Dataset ds = tiny_dataset(7);
    ModelConfig cfg = tiny_config();
    cfg.epochs = 3;
    cfg.lr = 1e-2;

    SegModel m1(cfg), m2(cfg);
    nn::Adam o1(cfg.lr, cfg.weight_decay), o2(cfg.lr, cfg.weight_decay);
    const auto log1 = model::train(m1, o1, ds);
    const auto log2 = model::train(m2, o2, ds);
    REQUIRE(log1.size() == 3);
    for (size_t e = 0; e < log1.size(); ++e) {
        CHECK(log1[e].train_loss == log2[e].train_loss);
        CHECK(log1[e].test.oa == log2[e].test.oa);
        CHECK(log1[e].test.miou == log2[e].test.miou);
    }
    CHECK(log1.back().train_loss < log1.front().train_loss);
}

TEST_CASE("bce loss path trains and evaluates") {
    const data::Dataset ds = tiny_dataset(9);
    ModelConfig cfg = tiny_config();
    cfg.loss = "bce";
    cfg.epochs = 1;
    SegModel m(cfg);
    Rng rng(47);
    const Tensor4 x = random_input(2, 8, rng);
    CHECK(m.forward(x, false).channels() == 1);
    nn::Adam opt(cfg.lr, cfg.weight_decay);
    const auto log = model::train(m, opt, ds);
    CHECK(std::isfinite(log[0].train_loss));
    CHECK(log[0].test.oa >= 0.0);
}

TEST_CASE("checkpoint round trip restores the exact model and optimizer") {
    const data::Dataset ds = tiny_dataset(11);
    ModelConfig cfg = tiny_config();
    cfg.epochs = 2;
    SegModel m(cfg);
    nn::Adam opt(cfg.lr, cfg.weight_decay);
    model::train(m, opt, ds);

    const std::string path = "/tmp/fadconv_test_ckpt.bin";
    Rng train_rng = Rng::derive(cfg.seed, 1);
    train_rng.normal();
    model::save_checkpoint(path, m, opt, 2, train_rng);

    nn::Adam opt2(cfg.lr, cfg.weight_decay);
    int epoch = 0;
    Rng rng_back;
    std::unique_ptr<SegModel> m2 = model::load_checkpoint(path, opt2, epoch, rng_back);
    CHECK(epoch == 2);
    CHECK(rng_back.normal() == train_rng.normal());
    CHECK(m2->cfg.to_json() == cfg.to_json());

    Rng rng(53);
    const Tensor4 x = random_input(2, 8, rng);
    const Tensor4 y1 = m.forward(x, false);   // eval mode exercises BN buffers
    const Tensor4 y2 = m2->forward(x, false);
    CHECK((y1.data() - y2.data()).cwiseAbs().maxCoeff() == 0.0);

    // optimizer moments restored exactly
    CHECK(opt2.t == opt.t);
    REQUIRE(opt2.m.size() == opt.m.size());
    for (size_t i = 0; i < opt.m.size(); ++i) {
        CHECK((opt2.m[i] - opt.m[i]).cwiseAbs().maxCoeff() == 0.0);
        CHECK((opt2.v[i] - opt.v[i]).cwiseAbs().maxCoeff() == 0.0);
    }
    std::remove(path.c_str());

    CHECK_THROWS(model::load_checkpoint("/tmp/fadconv_no_such.bin", opt2, epoch, rng_back));
}

TEST_CASE("upsample doubles sizes and routes gradients as window sums") {
    Upsample2x up;
    Tensor4 x(1, 1, 2, 2);
    x.data() << 1, 2, 3, 4;
    const Tensor4 y = up.forward(x, true);
    CHECK(y.height() == 4);
    CHECK(y.at(0, 0, 0, 0) == 1.0);
    CHECK(y.at(0, 0, 0, 1) == 1.0);
    CHECK(y.at(0, 0, 3, 3) == 4.0);

    Tensor4 g(1, 1, 4, 4);
    g.data().setConstant(0.5);
    const Tensor4 gx = up.backward(g);
    CHECK(gx.at(0, 0, 0, 0) == 2.0);
    CHECK(gx.at(0, 0, 1, 1) == 2.0);
}

TEST_CASE("evaluate produces metrics over the whole split") {
    const data::Dataset ds = tiny_dataset(13);
    SegModel m(tiny_config());
    const metrics::MetricsReport rep = model::evaluate(m, ds.test);
    CHECK(rep.oa >= 0.0);
    CHECK(rep.oa <= 1.0);
    REQUIRE(rep.per_class.size() == 2);
}
