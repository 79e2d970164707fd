#include "fadconv/data.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "fadconv/freq.hpp"
#include "fadconv/pnm.hpp"

namespace fadconv::data {

namespace fs = std::filesystem;
using nlohmann::json;

void DatasetSpec::validate() const {
    if (count <= 0 || size <= 0) throw std::invalid_argument("DatasetSpec: nonpositive size");
    if (num_classes < 2) throw std::invalid_argument("DatasetSpec: need >= 2 classes");
    if (static_cast<int>(profiles.size()) != num_classes)
        throw std::invalid_argument("DatasetSpec: one profile per class required");
    const double fsum = train_frac + test_frac + val_frac;
    if (std::abs(fsum - 1.0) > 1e-9)
        throw std::invalid_argument("DatasetSpec: split fractions must sum to 1");
    if (min_cells < num_classes || max_cells < min_cells)
        throw std::invalid_argument("DatasetSpec: cell count range invalid");
    const int ntrain = static_cast<int>(count * train_frac);
    const int ntest = static_cast<int>(count * test_frac);
    if (ntrain < 1 || ntest < 1)
        throw std::invalid_argument("DatasetSpec: count too small for the requested split");
    for (int i = 0; i < num_classes; ++i)
        for (int j = i + 1; j < num_classes; ++j)
            if (profiles[i].band_lo == profiles[j].band_lo &&
                profiles[i].band_hi == profiles[j].band_hi)
                throw std::invalid_argument("DatasetSpec: classes " + std::to_string(i) + " and " +
                                            std::to_string(j) + " share a frequency band");
}

DatasetSpec DatasetSpec::defaults(int num_classes, int size, int count, uint64_t seed) {
    DatasetSpec s;
    s.seed = seed;
    s.count = count;
    s.size = size;
    s.num_classes = num_classes;
    if (num_classes == 2) {
        // Same base gray: the classes differ only in texture frequency.
        s.profiles = {{0.5, 0.5, 0.5, 2, 4, 0.18, 0.05}, {0.5, 0.5, 0.5, 9, 14, 0.18, 0.05}};
    } else if (num_classes == 6) {
        s.profiles = {{0.35, 0.35, 0.35, 1, 2, 0.15, 0.05}, {0.55, 0.45, 0.30, 3, 5, 0.15, 0.05},
                      {0.30, 0.55, 0.30, 6, 8, 0.15, 0.05},  {0.45, 0.55, 0.35, 9, 11, 0.15, 0.05},
                      {0.30, 0.40, 0.60, 12, 15, 0.15, 0.05}, {0.55, 0.30, 0.55, 17, 21, 0.15, 0.05}};
        s.min_cells = 6;
        s.max_cells = 9;
    } else {
        throw std::invalid_argument("DatasetSpec::defaults: num_classes must be 2 or 6");
    }
    s.validate();
    return s;
}

Matrix texture_patch(const ClassProfile& p, int h, int w, Rng& rng) {
    const int f1 = rng.uniform_int(p.band_lo, p.band_hi);
    const int f2 = rng.uniform_int(p.band_lo, p.band_hi);
    const double ph1 = rng.uniform(0.0, 2.0 * M_PI);
    const double ph2 = rng.uniform(0.0, 2.0 * M_PI);
    const double side = static_cast<double>(std::max(h, w));
    Matrix out(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            out(y, x) = p.amplitude * (std::sin(2.0 * M_PI * f1 * x / side + ph1) +
                                       std::sin(2.0 * M_PI * f2 * y / side + ph2)) +
                        p.noise_amp * rng.uniform(-1.0, 1.0);
    return out;
}

double band_energy_fraction(const Matrix& patch, const ClassProfile& p) {
    const int side = static_cast<int>(std::min(patch.rows(), patch.cols()));
    Tensor4 t(1, 1, static_cast<int>(patch.rows()), static_cast<int>(patch.cols()));
    t.plane(0, 0) = patch;
    const Matrix sq = freq::adaptive_avg_pool(t, side).plane(0, 0);
    const freq::SpectrumBlock spec = freq::dct2d(sq);
    const int lo = std::max(1, 2 * p.band_lo - 2), hi = 2 * p.band_hi + 2;
    double in_band = 0.0, total = 0.0;
    for (int u = 0; u < side; ++u)
        for (int v = 0; v < side; ++v) {
            if (u == 0 && v == 0) continue;  // DC carries the base color
            const double e = spec.coeffs(u, v) * spec.coeffs(u, v);
            total += e;
            if (std::max(u, v) >= lo - 1 && std::max(u, v) <= hi) in_band += e;
        }
    return total > 0 ? in_band / total : 0.0;
}

Sample make_sample(const DatasetSpec& spec, int id) {
    Rng rng = Rng::derive(spec.seed, static_cast<uint64_t>(id));
    const int s = spec.size, k = spec.num_classes;

    const int ncells = rng.uniform_int(spec.min_cells, spec.max_cells);
    std::vector<double> cx(ncells), cy(ncells);
    std::vector<int> cell_class(ncells);
    for (int i = 0; i < ncells; ++i) {
        cx[i] = rng.uniform(0.0, s);
        cy[i] = rng.uniform(0.0, s);
        // First k cells get distinct classes so every class can appear.
        cell_class[i] = i < k ? i : rng.uniform_int(0, k - 1);
    }

    // One coherent texture field per class, composited by the region mask.
    std::vector<Matrix> fields;
    fields.reserve(k);
    for (int c = 0; c < k; ++c) fields.push_back(texture_patch(spec.profiles[c], s, s, rng));

    Sample out;
    out.id = id;
    out.image = Tensor4(1, 3, s, s);
    out.label.resize(static_cast<size_t>(s) * s);
    for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
            int best = 0;
            double bd = 1e300;
            for (int i = 0; i < ncells; ++i) {
                const double d =
                    (x - cx[i]) * (x - cx[i]) + (y - cy[i]) * (y - cy[i]);
                if (d < bd) {
                    bd = d;
                    best = i;
                }
            }
            const int cls = cell_class[best];
            out.label[static_cast<size_t>(y) * s + x] = cls;
            const ClassProfile& p = spec.profiles[cls];
            const double tex = fields[cls](y, x);
            const double bases[3] = {p.base_r, p.base_g, p.base_b};
            for (int c = 0; c < 3; ++c)
                out.image.at(0, c, y, x) = std::clamp(bases[c] + tex, 0.0, 1.0);
        }
    return out;
}

Dataset generate(const DatasetSpec& spec) {
    spec.validate();
    const int ntrain = static_cast<int>(spec.count * spec.train_frac);
    const int ntest = static_cast<int>(spec.count * spec.test_frac);
    Dataset ds;
    for (int id = 0; id < spec.count; ++id) {
        Sample s = make_sample(spec, id);
        if (id < ntrain)
            ds.train.push_back(std::move(s));
        else if (id < ntrain + ntest)
            ds.test.push_back(std::move(s));
        else
            ds.val.push_back(std::move(s));
    }
    return ds;
}

// ---- serialization -----------------------------------------------------------

std::string spec_to_json(const DatasetSpec& s) {
    json j;
    j["seed"] = s.seed;
    j["count"] = s.count;
    j["size"] = s.size;
    j["num_classes"] = s.num_classes;
    j["train_frac"] = s.train_frac;
    j["test_frac"] = s.test_frac;
    j["val_frac"] = s.val_frac;
    j["min_cells"] = s.min_cells;
    j["max_cells"] = s.max_cells;
    j["profiles"] = json::array();
    for (const ClassProfile& p : s.profiles)
        j["profiles"].push_back({{"base_r", p.base_r},
                                 {"base_g", p.base_g},
                                 {"base_b", p.base_b},
                                 {"band_lo", p.band_lo},
                                 {"band_hi", p.band_hi},
                                 {"amplitude", p.amplitude},
                                 {"noise_amp", p.noise_amp}});
    return j.dump(2);
}

DatasetSpec spec_from_json(const std::string& text) {
    const json j = json::parse(text);
    DatasetSpec s;
    s.seed = j.at("seed").get<uint64_t>();
    s.count = j.at("count").get<int>();
    s.size = j.at("size").get<int>();
    s.num_classes = j.at("num_classes").get<int>();
    s.train_frac = j.at("train_frac").get<double>();
    s.test_frac = j.at("test_frac").get<double>();
    s.val_frac = j.at("val_frac").get<double>();
    s.min_cells = j.at("min_cells").get<int>();
    s.max_cells = j.at("max_cells").get<int>();
    for (const json& pj : j.at("profiles")) {
        ClassProfile p;
        p.base_r = pj.at("base_r").get<double>();
        p.base_g = pj.at("base_g").get<double>();
        p.base_b = pj.at("base_b").get<double>();
        p.band_lo = pj.at("band_lo").get<int>();
        p.band_hi = pj.at("band_hi").get<int>();
        p.amplitude = pj.at("amplitude").get<double>();
        p.noise_amp = pj.at("noise_amp").get<double>();
        s.profiles.push_back(p);
    }
    s.validate();
    return s;
}

static std::string id_name(int id) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", id);
    return buf;
}

void save_dataset(const std::string& dir, const DatasetSpec& spec, const Dataset& ds) {
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "labels");
    std::ofstream spec_out(fs::path(dir) / "spec.json");
    spec_out << spec_to_json(spec) << "\n";
    std::ofstream manifest(fs::path(dir) / "manifest.csv");
    manifest << "id,split";
    for (int c = 0; c < spec.num_classes; ++c) manifest << ",class" << c << "_pixels";
    manifest << "\n";

    auto dump = [&](const std::vector<Sample>& split, const char* name) {
        for (const Sample& s : split) {
            pnm::write_ppm((fs::path(dir) / "images" / (id_name(s.id) + ".ppm")).string(),
                           s.image);
            Matrix lab(s.image.height(), s.image.width());
            for (int y = 0; y < s.image.height(); ++y)
                for (int x = 0; x < s.image.width(); ++x)
                    lab(y, x) = s.label[static_cast<size_t>(y) * s.image.width() + x];
            pnm::write_pgm((fs::path(dir) / "labels" / (id_name(s.id) + ".pgm")).string(), lab);
            std::vector<long> hist(spec.num_classes, 0);
            for (int v : s.label) ++hist[v];
            manifest << s.id << "," << name;
            for (long h : hist) manifest << "," << h;
            manifest << "\n";
        }
    };
    dump(ds.train, "train");
    dump(ds.test, "test");
    dump(ds.val, "val");
}

DatasetSpec load_spec(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "spec.json");
    if (!in) throw std::runtime_error("load_dataset: missing spec.json in " + dir);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return spec_from_json(text);
}

Dataset load_dataset(const std::string& dir) {
    const DatasetSpec spec = load_spec(dir);
    std::ifstream manifest(fs::path(dir) / "manifest.csv");
    if (!manifest) throw std::runtime_error("load_dataset: missing manifest.csv in " + dir);
    std::string line;
    std::getline(manifest, line);  // header
    Dataset ds;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        const size_t c1 = line.find(',');
        const size_t c2 = line.find(',', c1 + 1);
        const int id = std::stoi(line.substr(0, c1));
        const std::string split = line.substr(c1 + 1, c2 - c1 - 1);
        Sample s;
        s.id = id;
        s.image = pnm::read_ppm((fs::path(dir) / "images" / (id_name(id) + ".ppm")).string());
        const Matrix lab =
            pnm::read_pgm((fs::path(dir) / "labels" / (id_name(id) + ".pgm")).string());
        s.label.resize(static_cast<size_t>(lab.size()));
        for (long y = 0; y < lab.rows(); ++y)
            for (long x = 0; x < lab.cols(); ++x) {
                const int v = static_cast<int>(lab(y, x));
                if (v >= spec.num_classes)
                    throw std::runtime_error("load_dataset: label value out of range in sample " +
                                             std::to_string(id));
                s.label[static_cast<size_t>(y) * lab.cols() + x] = v;
            }
        if (split == "train")
            ds.train.push_back(std::move(s));
        else if (split == "test")
            ds.test.push_back(std::move(s));
        else
            ds.val.push_back(std::move(s));
    }
    return ds;
}

}  // namespace fadconv::data
