#include <doctest.h>

#include "fadconv/freq.hpp"
#include "fadconv/rng.hpp"

using namespace fadconv;
using namespace fadconv::freq;

static Matrix random_block(int n, Rng& rng) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = rng.uniform(-2.0, 2.0);
    return m;
}

TEST_CASE("dct basis is orthonormal") {
    for (int n : {1, 2, 4, 8, 16, 32}) {
        const Matrix& d = dct_basis(n);
        const Matrix gram = d * d.transpose();
        CHECK((gram - Matrix::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("constant 4x4 block of value 2 transforms to DC-only spectrum") {
    const Matrix block = Matrix::Constant(4, 4, 2.0);
    const SpectrumBlock s = dct2d(block);
    CHECK(s.coeffs(0, 0) == doctest::Approx(8.0).epsilon(1e-12));
    double ac = 0.0;
    for (int u = 0; u < 4; ++u)
        for (int v = 0; v < 4; ++v)
            if (u != 0 || v != 0) ac = std::max(ac, std::abs(s.coeffs(u, v)));
    CHECK(ac < 1e-12);
}

TEST_CASE("round trip, Parseval, and DC identities on random blocks") {
    Rng rng(17);
    for (int n : {1, 2, 4, 8, 16, 32}) {
        for (int rep = 0; rep < 50; ++rep) {
            const Matrix x = random_block(n, rng);
            const SpectrumBlock s = dct2d(x);
            CHECK((idct2d(s) - x).cwiseAbs().maxCoeff() <= 1e-12);

            const double spatial = x.array().square().sum();
            const double spectral = s.coeffs.array().square().sum();
            CHECK(std::abs(spectral - spatial) <= 1e-9 * std::max(1.0, spatial));

            const double mu = x.mean();
            CHECK(std::abs(s.coeffs(0, 0) - n * mu) <= 1e-12 * std::max(1.0, std::abs(n * mu)));
            CHECK(dc_energy_identity(x));
        }
    }
}

TEST_CASE("energy stats on the constant block hand case") {
    const Matrix block = Matrix::Constant(4, 4, 2.0);
    const EnergyStats e = energy_stats(block);
    CHECK(e.mean == doctest::Approx(2.0));
    CHECK(e.total_energy == doctest::Approx(64.0));
    CHECK(e.avg_energy == doctest::Approx(4.0));
    const Matrix zero = Matrix::Zero(3, 3);
    const EnergyStats z = energy_stats(zero);
    CHECK(z.mean == 0.0);
    CHECK(z.total_energy == 0.0);
    CHECK(z.avg_energy == 0.0);
    CHECK(dc_energy_identity(zero));
}

TEST_CASE("avg energy is total over N^2, not mu^2 N^2, for non-constant blocks") {
    Matrix x(2, 2);
    x << 1, 0, 0, 1;
    const EnergyStats e = energy_stats(x);
    CHECK(e.avg_energy == doctest::Approx(0.5));
    CHECK(e.avg_energy != doctest::Approx(e.mean * e.mean * 4.0));
}

TEST_CASE("GAP equals the DC coefficient over N") {
    Rng rng(23);
    for (int n : {2, 5, 16}) {
        const Matrix x = random_block(n, rng);
        const Vector dc = extract_freq_block(dct2d(x), 1);
        REQUIRE(dc.size() == 1);
        CHECK(std::abs(x.mean() - dc[0] / n) <= 1e-12);
    }
}

TEST_CASE("extract_freq_block is row-major with DC first") {
    Rng rng(29);
    const Matrix x = random_block(4, rng);
    const SpectrumBlock s = dct2d(x);
    const Vector v2 = extract_freq_block(s, 2);
    REQUIRE(v2.size() == 4);
    CHECK(v2[0] == s.coeffs(0, 0));
    CHECK(v2[1] == s.coeffs(0, 1));
    CHECK(v2[2] == s.coeffs(1, 0));
    CHECK(v2[3] == s.coeffs(1, 1));
    const Vector v4 = extract_freq_block(s, 4);
    for (int u = 0; u < 4; ++u)
        for (int v = 0; v < 4; ++v) CHECK(v4[u * 4 + v] == s.coeffs(u, v));
    CHECK_THROWS(extract_freq_block(s, 5));
}

TEST_CASE("truncation error is non-increasing in n") {
    Rng rng(31);
    const int N = 16;
    const Matrix x = random_block(N, rng);
    const SpectrumBlock s = dct2d(x);
    double prev = std::numeric_limits<double>::infinity();
    for (int n = 1; n <= N; ++n) {
        SpectrumBlock trunc = s;
        for (int u = 0; u < N; ++u)
            for (int v = 0; v < N; ++v)
                if (u >= n || v >= n) trunc.coeffs(u, v) = 0.0;
        const double err = (idct2d(trunc) - x).norm();
        CHECK(err <= prev + 1e-12);
        prev = err;
    }
    CHECK(prev <= 1e-12);  // full retention reconstructs exactly
}

TEST_CASE("adaptive pooling identity, constant, and 4x4 hand cases") {
    Tensor4 x(1, 1, 4, 4);
    for (int i = 0; i < 16; ++i) x.data()[i] = i + 1;
    SUBCASE("identity when already p x p") {
        const Tensor4 y = adaptive_avg_pool(x, 4);
        CHECK((y.data() - x.data()).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("p = 2 averages each 2x2 block") {
        const Tensor4 y = adaptive_avg_pool(x, 2);
        CHECK(y.at(0, 0, 0, 0) == doctest::Approx(3.5));
        CHECK(y.at(0, 0, 0, 1) == doctest::Approx(5.5));
        CHECK(y.at(0, 0, 1, 0) == doctest::Approx(11.5));
        CHECK(y.at(0, 0, 1, 1) == doctest::Approx(13.5));
    }
    SUBCASE("constant input stays constant") {
        Tensor4 c(2, 3, 5, 7);
        c.data().setConstant(1.25);
        const Tensor4 y = adaptive_avg_pool(c, 3);
        CHECK(y.height() == 3);
        CHECK(y.width() == 3);
        CHECK((y.data().array() - 1.25).abs().maxCoeff() < 1e-15);
    }
    SUBCASE("p larger than input clamps to input side") {
        const Tensor4 y = adaptive_avg_pool(x, 9);
        CHECK(y.height() == 4);
        CHECK((y.data() - x.data()).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("nonpositive p rejected") { CHECK_THROWS(adaptive_avg_pool(x, 0)); }
}

TEST_CASE("adaptive pooling preserves the global mean and routes gradients correctly") {
    Rng rng(37);
    Tensor4 x(2, 2, 7, 5);
    for (long i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1.0, 1.0);
    const Tensor4 y = adaptive_avg_pool(x, 3);

    // finite-difference check of the backward routing
    Tensor4 g(2, 2, 3, 3);
    for (long i = 0; i < g.size(); ++i) g.data()[i] = rng.uniform(-1.0, 1.0);
    const Tensor4 gx = adaptive_avg_pool_backward(g, 7, 5);
    const double eps = 1e-6;
    for (long i = 0; i < x.size(); i += 13) {
        Tensor4 xp = x, xm = x;
        xp.data()[i] += eps;
        xm.data()[i] -= eps;
        const double num = (adaptive_avg_pool(xp, 3).data().dot(g.data()) -
                            adaptive_avg_pool(xm, 3).data().dot(g.data())) /
                           (2 * eps);
        CHECK(gx.data()[i] == doctest::Approx(num).epsilon(1e-6));
    }
}

TEST_CASE("attention heatmaps: GAP flat, frequency map informative") {
    Rng rng(41);
    Matrix channel = Matrix::Zero(12, 12);
    channel.block(0, 0, 6, 6).setConstant(1.0);  // bright quadrant
    const HeatmapPair maps = attention_heatmap(channel, 4, false);

    auto variance = [](const Matrix& m) {
        const double mu = m.mean();
        return (m.array() - mu).square().mean();
    };
    CHECK(variance(maps.gap_map) == 0.0);
    CHECK(variance(maps.freq_map) > 0.0);
    CHECK(maps.gap_map(0, 0) == doctest::Approx(channel.mean()));

    SUBCASE("full-side retention reproduces the channel before normalization") {
        Matrix x = random_block(8, rng);
        const HeatmapPair full = attention_heatmap(x, 8, false);
        CHECK((full.freq_map - x).cwiseAbs().maxCoeff() <= 1e-9);
    }
    SUBCASE("normalized maps live in [0, 1]") {
        const HeatmapPair norm = attention_heatmap(channel, 4, true);
        CHECK(norm.freq_map.minCoeff() >= 0.0);
        CHECK(norm.freq_map.maxCoeff() <= 1.0);
        CHECK(norm.gap_map.minCoeff() >= 0.0);
        CHECK(norm.gap_map.maxCoeff() <= 1.0);
    }
    SUBCASE("constant channel gives equal constant maps") {
        const Matrix c = Matrix::Constant(6, 6, 0.3);
        const HeatmapPair flat = attention_heatmap(c, 2, false);
        CHECK((flat.freq_map.array() - 0.3).abs().maxCoeff() < 1e-12);
        CHECK((flat.gap_map.array() - 0.3).abs().maxCoeff() < 1e-12);
    }
}
