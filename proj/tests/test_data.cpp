#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "fadconv/data.hpp"
#include "fadconv/freq.hpp"
#include "fadconv/pnm.hpp"

using namespace fadconv;
using namespace fadconv::data;

TEST_CASE("generation is deterministic under the seed") {
    const DatasetSpec spec = DatasetSpec::defaults(2, 32, 10, 77);
    const Sample a = make_sample(spec, 3);
    const Sample b = make_sample(spec, 3);
    CHECK((a.image.data() - b.image.data()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.label == b.label);

    const Sample c = make_sample(spec, 4);
    CHECK((a.image.data() - c.image.data()).cwiseAbs().maxCoeff() > 0.0);

    const Dataset d1 = generate(spec), d2 = generate(spec);
    REQUIRE(d1.train.size() == d2.train.size());
    for (size_t i = 0; i < d1.train.size(); ++i)
        CHECK(d1.train[i].label == d2.train[i].label);
}

TEST_CASE("two-class dataset has valid labels and both classes nearly everywhere") {
    const DatasetSpec spec = DatasetSpec::defaults(2, 32, 100, 5);
    const Dataset ds = generate(spec);
    int with_both = 0, total = 0;
    auto scan = [&](const std::vector<Sample>& split) {
        for (const Sample& s : split) {
            bool c0 = false, c1 = false;
            for (int l : s.label) {
                REQUIRE(l >= 0);
                REQUIRE(l <= 1);
                c0 = c0 || l == 0;
                c1 = c1 || l == 1;
            }
            with_both += c0 && c1;
            ++total;
        }
    };
    scan(ds.train);
    scan(ds.test);
    scan(ds.val);
    CHECK(total == 100);
    CHECK(with_both >= 95);
}

TEST_CASE("pure class textures keep at least 80% of AC energy in their band") {
    const DatasetSpec spec = DatasetSpec::defaults(2, 64, 10, 9);
    for (int c = 0; c < 2; ++c) {
        for (uint64_t rep = 0; rep < 5; ++rep) {
            Rng rng = Rng::derive(1234, rep * 2 + c);
            const Matrix patch = texture_patch(spec.profiles[c], 64, 64, rng);
            CHECK(band_energy_fraction(patch, spec.profiles[c]) >= 0.8);
        }
    }
}

TEST_CASE("classes are separable by low-frequency energy fraction") {
    const DatasetSpec spec = DatasetSpec::defaults(2, 64, 10, 13);
    auto lowfreq_fraction = [](const Matrix& patch) {
        const freq::SpectrumBlock s = freq::dct2d(patch);
        double low = 0.0, ac = 0.0;
        for (int u = 0; u < 64; ++u)
            for (int v = 0; v < 64; ++v) {
                if (u == 0 && v == 0) continue;
                const double e = s.coeffs(u, v) * s.coeffs(u, v);
                ac += e;
                if (u < 12 && v < 12) low += e;
            }
        return low / ac;
    };
    double mean0 = 0.0, mean1 = 0.0;
    for (uint64_t rep = 0; rep < 8; ++rep) {
        Rng r0 = Rng::derive(55, rep), r1 = Rng::derive(56, rep);
        mean0 += lowfreq_fraction(texture_patch(spec.profiles[0], 64, 64, r0)) / 8.0;
        mean1 += lowfreq_fraction(texture_patch(spec.profiles[1], 64, 64, r1)) / 8.0;
    }
    CHECK(mean0 - mean1 > 0.3);  // class 0 is the low-band class
}

TEST_CASE("spec JSON round trips and validation catches bad specs") {
    DatasetSpec spec = DatasetSpec::defaults(2, 48, 20, 42);
    const DatasetSpec back = spec_from_json(spec_to_json(spec));
    CHECK(back.seed == spec.seed);
    CHECK(back.count == spec.count);
    CHECK(back.size == spec.size);
    CHECK(back.num_classes == spec.num_classes);
    REQUIRE(back.profiles.size() == spec.profiles.size());
    for (size_t i = 0; i < spec.profiles.size(); ++i) {
        CHECK(back.profiles[i].band_lo == spec.profiles[i].band_lo);
        CHECK(back.profiles[i].base_r == spec.profiles[i].base_r);
    }

    DatasetSpec bad = spec;
    bad.profiles[1].band_lo = bad.profiles[0].band_lo;
    bad.profiles[1].band_hi = bad.profiles[0].band_hi;
    CHECK_THROWS(bad.validate());

    DatasetSpec tiny = spec;
    tiny.count = 1;
    CHECK_THROWS(tiny.validate());
}

TEST_CASE("dataset save and load round trip") {
    namespace fs = std::filesystem;
    const std::string dir = "/tmp/fadconv_test_ds";
    fs::remove_all(dir);
    const DatasetSpec spec = DatasetSpec::defaults(2, 16, 10, 21);
    const Dataset ds = generate(spec);
    save_dataset(dir, spec, ds);

    CHECK(fs::exists(dir + "/spec.json"));
    CHECK(fs::exists(dir + "/manifest.csv"));
    const Dataset back = load_dataset(dir);
    REQUIRE(back.train.size() == ds.train.size());
    REQUIRE(back.test.size() == ds.test.size());
    for (size_t i = 0; i < ds.train.size(); ++i) {
        CHECK(back.train[i].label == ds.train[i].label);
        // images pass through 8-bit quantization once
        CHECK((back.train[i].image.data() - ds.train[i].image.data()).cwiseAbs().maxCoeff() <=
              0.5 / 255.0 + 1e-12);
    }
    const DatasetSpec loaded = load_spec(dir);
    CHECK(loaded.seed == spec.seed);
    fs::remove_all(dir);
}

TEST_CASE("train, test, and val splits are disjoint by id") {
    DatasetSpec spec = DatasetSpec::defaults(2, 16, 20, 31);
    spec.train_frac = 0.5;
    spec.test_frac = 0.25;
    spec.val_frac = 0.25;
    const Dataset ds = generate(spec);
    std::set<int> ids;
    size_t n = 0;
    for (const auto* split : {&ds.train, &ds.test, &ds.val})
        for (const Sample& s : *split) {
            ids.insert(s.id);
            ++n;
        }
    CHECK(ids.size() == n);
    CHECK(n == 20);
}

TEST_CASE("one-pixel white PGM has the exact canonical bytes") {
    const std::string path = "/tmp/fadconv_test_white.pgm";
    pnm::write_pgm(path, Matrix::Constant(1, 1, 255.0));
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(bytes == std::string("P5\n1 1\n255\n") + '\xFF');
    std::remove(path.c_str());
}
