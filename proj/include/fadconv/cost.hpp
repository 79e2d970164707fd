#ifndef FADCONV_COST_HPP
#define FADCONV_COST_HPP

#include <string>
#include <vector>

#include "fadconv/dynconv.hpp"

namespace fadconv::cost {

// All counts are per input sample. One MAdd = one multiply + one accumulate;
// additions without a multiply (pooling sums, softmax normalization, bias
// adds) are booked under `b`.
struct LayerCost {
    std::string path;
    long params = 0;
    long conv_madds = 0;   // the spatial convolution itself
    long dct = 0;          // 2 * C_in * p^3
    long fat = 0;          // attention tail: C*ceil(C/r) + ceil(C/r)*K
    long dyn_kernel = 0;   // expert aggregation: K * Cout * Cin/g * k^2
    long b = 0;            // everything else
    long total_madds() const { return conv_madds + dct + fat + dyn_kernel + b; }
};

struct CostReport {
    std::vector<LayerCost> layers;
    LayerCost total() const;
    std::string csv() const;
    std::string pretty() const;
};

struct ExtraMadds {
    long dct = 0;
    long fat = 0;
    long dyn_kernel = 0;
    long total() const { return dct + fat + dyn_kernel; }
};

// Closed-form extra cost of a dynamic layer over a static one (excluding b).
ExtraMadds analytic_extra_madds(const nn::ConvGeometry& geom, int num_experts, int poolsize,
                                int reduction);

// Symbolic dry-run counts for a built layer at a given input size.
LayerCost instrument(const dynconv::StaticConvBlock& layer, const std::string& path, int in_h,
                     int in_w);
LayerCost instrument(const dynconv::DynamicConvLayer& layer, const std::string& path, int in_h,
                     int in_w);

long conv_param_count(const nn::ConvGeometry& geom);

}  // namespace fadconv::cost

#endif
