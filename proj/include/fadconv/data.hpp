#ifndef FADCONV_DATA_HPP
#define FADCONV_DATA_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "fadconv/rng.hpp"
#include "fadconv/tensor.hpp"

namespace fadconv::data {

// Per-class texture recipe. Frequencies are integer cycles per image side,
// drawn from [band_lo, band_hi]; the texture is a sum of two axis-aligned
// sinusoids plus uniform noise on top of the base color.
struct ClassProfile {
    double base_r = 0.5, base_g = 0.5, base_b = 0.5;
    int band_lo = 2, band_hi = 4;
    double amplitude = 0.18;
    double noise_amp = 0.05;
};

struct DatasetSpec {
    uint64_t seed = 0;
    int count = 100;
    int size = 64;
    int num_classes = 2;
    std::vector<ClassProfile> profiles;
    double train_frac = 0.8, test_frac = 0.2, val_frac = 0.0;
    int min_cells = 3, max_cells = 6;

    void validate() const;
    static DatasetSpec defaults(int num_classes, int size, int count, uint64_t seed);
};

struct Sample {
    int id = 0;
    Tensor4 image;           // (1, 3, H, W), values in [0, 1]
    std::vector<int> label;  // H*W class indices, row-major
};

struct Dataset {
    std::vector<Sample> train, test, val;
};

// Grayscale texture field of one class (no regions), for spectrum checks.
Matrix texture_patch(const ClassProfile& profile, int h, int w, Rng& rng);

// Fraction of AC spectral energy inside the profile's declared band
// (DCT index interval [2*band_lo - 2, 2*band_hi + 2]; DC is excluded
// because the base color deliberately sits there).
double band_energy_fraction(const Matrix& patch, const ClassProfile& profile);

// Deterministic in (spec.seed, id); Voronoi regions filled per-class.
Sample make_sample(const DatasetSpec& spec, int id);
Dataset generate(const DatasetSpec& spec);

// Directory layout: images/NNNN.ppm, labels/NNNN.pgm, manifest.csv, spec.json.
void save_dataset(const std::string& dir, const DatasetSpec& spec, const Dataset& ds);
Dataset load_dataset(const std::string& dir);
DatasetSpec load_spec(const std::string& dir);

std::string spec_to_json(const DatasetSpec& spec);
DatasetSpec spec_from_json(const std::string& json);

}  // namespace fadconv::data

#endif
