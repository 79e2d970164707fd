#include <doctest.h>

#include "fadconv/cost.hpp"

using namespace fadconv;
using namespace fadconv::cost;

namespace {

nn::ConvGeometry make_geom(int cin, int cout, int k) {
    nn::ConvGeometry g;
    g.in_channels = cin;
    g.out_channels = cout;
    g.kernel = k;
    g.padding = k / 2;
    return g;
}

}  // namespace

TEST_CASE("instrumented dynamic-layer counts match the analytic model on the full grid") {
    const int reduction = 4;
    for (int c : {8, 16, 32})
        for (int k : {1, 3})
            for (int num_experts : {2, 4, 6, 8})
                for (int p : {8, 16, 32}) {
                    const nn::ConvGeometry g = make_geom(c, c, k);
                    fat::FatParams fp;
                    fp.poolsize = p;
                    fp.freq_side = 4;
                    fp.reduction = reduction;
                    fp.num_experts = num_experts;
                    Rng rng(1);
                    dynconv::DynamicConvLayer layer("l", g, num_experts, fp,
                                                    fat::AttentionKind::Fat, true, false, rng);
                    // 32x32 inputs keep the pooling clamp inactive for every p in the grid
                    const LayerCost got = instrument(layer, "l", 32, 32);
                    const ExtraMadds want = analytic_extra_madds(g, num_experts, p, reduction);
                    CHECK(got.dct == want.dct);
                    CHECK(got.fat == want.fat);
                    CHECK(got.dyn_kernel == want.dyn_kernel);

                    // spelled-out closed forms
                    const long cr = (c + reduction - 1) / reduction;
                    CHECK(want.dct == 2L * c * p * p * p);
                    CHECK(want.fat == static_cast<long>(c) * cr + cr * num_experts);
                    CHECK(want.dyn_kernel == static_cast<long>(num_experts) * c * c * k * k);
                }
}

TEST_CASE("static conv cost is h*w*Cin*Cout*k^2/groups exactly") {
    for (int c : {8, 16})
        for (int k : {1, 3})
            for (int groups : {1, 2}) {
                nn::ConvGeometry g = make_geom(c, c, k);
                g.groups = groups;
                Rng rng(2);
                dynconv::StaticConvBlock block("s", g, true, rng);
                const LayerCost got = instrument(block, "s", 16, 16);
                CHECK(got.conv_madds == 16L * 16 * c * (c / groups) * k * k);
                CHECK(got.params == g.weight_count() + 2L * c);
                CHECK(got.dct == 0);
                CHECK(got.fat == 0);
                CHECK(got.dyn_kernel == 0);
            }
}

TEST_CASE("strided output sizes feed the conv term") {
    nn::ConvGeometry g = make_geom(4, 8, 3);
    g.stride = 2;
    Rng rng(3);
    dynconv::StaticConvBlock block("s", g, true, rng);
    const LayerCost got = instrument(block, "s", 16, 16);
    CHECK(got.conv_madds == 8L * 8 * 8 * 4 * 9);  // 16x16 -> 8x8 with stride 2
}

TEST_CASE("pooling clamp switches the dct term to the effective side") {
    const nn::ConvGeometry g = make_geom(8, 8, 3);
    fat::FatParams fp;
    fp.poolsize = 16;
    fp.freq_side = 4;
    fp.reduction = 4;
    fp.num_experts = 2;
    Rng rng(4);
    dynconv::DynamicConvLayer layer("l", g, 2, fp, fat::AttentionKind::Fat, true, false, rng);
    const LayerCost got = instrument(layer, "l", 4, 4);  // input smaller than the pool size
    CHECK(got.dct == 2L * 8 * 4 * 4 * 4);
}

TEST_CASE("gap attention has no dct cost but keeps the shared tail term") {
    const nn::ConvGeometry g = make_geom(8, 8, 3);
    fat::FatParams fp;
    fp.poolsize = 16;
    fp.freq_side = 4;
    fp.reduction = 4;
    fp.num_experts = 4;
    Rng rng(5);
    dynconv::DynamicConvLayer layer("l", g, 4, fp, fat::AttentionKind::Gap, true, false, rng);
    const LayerCost got = instrument(layer, "l", 16, 16);
    CHECK(got.dct == 0);
    CHECK(got.fat == 8L * 2 + 2L * 4);  // cr = 2
}

TEST_CASE("report totals add the per-layer rows and the csv is well formed") {
    CostReport rep;
    LayerCost a;
    a.path = "a";
    a.params = 10;
    a.conv_madds = 100;
    a.dct = 5;
    LayerCost b;
    b.path = "b";
    b.params = 3;
    b.fat = 7;
    b.b = 2;
    rep.layers = {a, b};
    const LayerCost t = rep.total();
    CHECK(t.params == 13);
    CHECK(t.conv_madds == 100);
    CHECK(t.dct == 5);
    CHECK(t.fat == 7);
    CHECK(t.b == 2);
    CHECK(t.total_madds() == 114);

    const std::string csv = rep.csv();
    CHECK(csv.find("layer_path,params,madds,conv,dct,fat,dyn_kernel,b\n") == 0);
    CHECK(csv.find("total,13,114") != std::string::npos);
}

TEST_CASE("analytic model rejects nonpositive parameters") {
    const nn::ConvGeometry g = make_geom(4, 4, 3);
    CHECK_THROWS(analytic_extra_madds(g, 0, 8, 4));
    CHECK_THROWS(analytic_extra_madds(g, 2, 0, 4));
    CHECK_THROWS(analytic_extra_madds(g, 2, 8, 0));
}
