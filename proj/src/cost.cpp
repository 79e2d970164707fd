#include "fadconv/cost.hpp"

#include <iomanip>
#include <sstream>

namespace fadconv::cost {

long conv_param_count(const nn::ConvGeometry& geom) { return geom.weight_count(); }

LayerCost CostReport::total() const {
    LayerCost t;
    t.path = "total";
    for (const LayerCost& l : layers) {
        t.params += l.params;
        t.conv_madds += l.conv_madds;
        t.dct += l.dct;
        t.fat += l.fat;
        t.dyn_kernel += l.dyn_kernel;
        t.b += l.b;
    }
    return t;
}

std::string CostReport::csv() const {
    std::ostringstream os;
    os << "layer_path,params,madds,conv,dct,fat,dyn_kernel,b\n";
    auto row = [&os](const LayerCost& l) {
        os << l.path << "," << l.params << "," << l.total_madds() << "," << l.conv_madds << ","
           << l.dct << "," << l.fat << "," << l.dyn_kernel << "," << l.b << "\n";
    };
    for (const LayerCost& l : layers) row(l);
    row(total());
    return os.str();
}

std::string CostReport::pretty() const {
    std::ostringstream os;
    os << std::left << std::setw(42) << "layer" << std::right << std::setw(10) << "params"
       << std::setw(14) << "madds" << std::setw(12) << "dct" << std::setw(10) << "fat"
       << std::setw(12) << "dyn_kernel" << std::setw(10) << "b" << "\n";
    auto row = [&os](const LayerCost& l) {
        os << std::left << std::setw(42) << l.path << std::right << std::setw(10) << l.params
           << std::setw(14) << l.total_madds() << std::setw(12) << l.dct << std::setw(10)
           << l.fat << std::setw(12) << l.dyn_kernel << std::setw(10) << l.b << "\n";
    };
    for (const LayerCost& l : layers) row(l);
    row(total());
    return os.str();
}

ExtraMadds analytic_extra_madds(const nn::ConvGeometry& geom, int num_experts, int poolsize,
                                int reduction) {
    geom.validate();
    if (num_experts <= 0 || poolsize <= 0 || reduction <= 0)
        throw std::invalid_argument("analytic_extra_madds: nonpositive parameter");
    const long c = geom.in_channels;
    const long cr = (c + reduction - 1) / reduction;
    ExtraMadds e;
    e.dct = 2L * c * poolsize * poolsize * poolsize;
    e.fat = c * cr + cr * num_experts;
    e.dyn_kernel = static_cast<long>(num_experts) * geom.out_channels *
                   (geom.in_channels / geom.groups) * geom.kernel * geom.kernel;
    return e;
}

static long conv_madds(const nn::ConvGeometry& g, int ho, int wo) {
    return static_cast<long>(ho) * wo * g.out_channels * (g.in_channels / g.groups) * g.kernel *
           g.kernel;
}

LayerCost instrument(const dynconv::StaticConvBlock& layer, const std::string& path, int in_h,
                     int in_w) {
    const nn::ConvGeometry& g = layer.conv.geom;
    const int ho = g.out_dim(in_h), wo = g.out_dim(in_w);
    LayerCost c;
    c.path = path;
    c.params = conv_param_count(g) + 2L * g.out_channels;  // conv + BN gamma/beta
    c.conv_madds = conv_madds(g, ho, wo);
    c.b = static_cast<long>(ho) * wo * g.out_channels;  // BN scale-and-shift
    return c;
}

LayerCost instrument(const dynconv::DynamicConvLayer& layer, const std::string& path, int in_h,
                     int in_w) {
    const nn::ConvGeometry& g = layer.bank.geom;
    const fat::FatParams& p = layer.attn.params;
    const int k = layer.bank.num_experts;
    const int ho = g.out_dim(in_h), wo = g.out_dim(in_w);
    const long c_in = g.in_channels;
    const long cr = p.reduced_dim(static_cast<int>(c_in));

    LayerCost c;
    c.path = path;
    c.params = static_cast<long>(k) * conv_param_count(g) + 2L * g.out_channels;
    if (layer.bank.has_bias) c.params += static_cast<long>(k) * g.out_channels;
    c.params += c_in * cr + cr + cr * k + k;  // attention tail
    c.conv_madds = conv_madds(g, ho, wo);
    c.b = static_cast<long>(ho) * wo * g.out_channels;  // BN

    if (layer.attn.kind == fat::AttentionKind::Fat) {
        const int pe = std::min({p.poolsize, in_h, in_w});
        const int ne = std::min(p.freq_side, pe);
        if (p.fusion == fat::Fusion::Learned) c.params += static_cast<long>(p.freq_side) *
                                                              p.freq_side +
                                                          1;
        c.dct = 2L * c_in * pe * pe * pe;
        // pooling sums + fusion
        c.b += c_in * (static_cast<long>(in_h) * in_w + static_cast<long>(pe) * pe);
        if (p.fusion == fat::Fusion::Learned) c.b += c_in * (static_cast<long>(ne) * ne + 1);
        if (p.fusion == fat::Fusion::Sum || p.fusion == fat::Fusion::AbsSum)
            c.b += c_in * static_cast<long>(ne) * ne;
    } else {
        c.b += c_in * (static_cast<long>(in_h) * in_w + 1);  // GAP
    }
    c.fat = c_in * cr + cr * k;
    c.b += cr + k + 3L * k;  // tail biases + softmax
    c.dyn_kernel = static_cast<long>(k) * g.out_channels * (g.in_channels / g.groups) * g.kernel *
                   g.kernel;
    return c;
}

}  // namespace fadconv::cost
