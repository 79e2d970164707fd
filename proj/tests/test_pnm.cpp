#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "fadconv/pnm.hpp"
#include "fadconv/rng.hpp"

using namespace fadconv;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("/tmp/fadconv_test_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), bytes.size());
}

}  // namespace

TEST_CASE("minimal one-pixel PGM parses") {
    TempFile f("min.pgm");
    write_bytes(f.path, std::string("P5\n1 1\n255\n") + '\xFF');
    const Matrix m = pnm::read_pgm(f.path);
    REQUIRE(m.rows() == 1);
    REQUIRE(m.cols() == 1);
    CHECK(m(0, 0) == 255.0);
}

TEST_CASE("PGM round trip preserves every byte") {
    Rng rng(91);
    Matrix gray(13, 7);
    for (int i = 0; i < gray.size(); ++i)
        gray.data()[i] = static_cast<double>(rng.uniform_int(0, 255));
    TempFile f("rt.pgm");
    pnm::write_pgm(f.path, gray);
    const Matrix back = pnm::read_pgm(f.path);
    REQUIRE(back.rows() == 13);
    REQUIRE(back.cols() == 7);
    CHECK((back - gray).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("PPM round trip quantizes to 8 bits") {
    Rng rng(93);
    Tensor4 img(1, 3, 9, 11);
    for (long i = 0; i < img.size(); ++i) img.data()[i] = rng.uniform();
    TempFile f("rt.ppm");
    pnm::write_ppm(f.path, img);
    const Tensor4 back = pnm::read_ppm(f.path);
    REQUIRE(back.same_shape(img));
    CHECK((back.data() - img.data()).cwiseAbs().maxCoeff() <= 0.5 / 255.0 + 1e-12);

    // a second trip through disk is lossless
    TempFile f2("rt2.ppm");
    pnm::write_ppm(f2.path, back);
    const Tensor4 again = pnm::read_ppm(f2.path);
    CHECK((again.data() - back.data()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("comments and odd whitespace in the header are accepted") {
    TempFile f("comment.pgm");
    write_bytes(f.path, std::string("P5 # magic\n# a comment line\n 2\t1 #cols rows\n255\n") +
                            '\x01' + '\x02');
    const Matrix m = pnm::read_pgm(f.path);
    REQUIRE(m.rows() == 1);
    REQUIRE(m.cols() == 2);
    CHECK(m(0, 0) == 1.0);
    CHECK(m(0, 1) == 2.0);
}

TEST_CASE("malformed files are rejected with descriptive errors") {
    TempFile f("bad.pgm");
    SUBCASE("wrong magic") {
        write_bytes(f.path, "P2\n1 1\n255\n9");
        CHECK_THROWS(pnm::read_pgm(f.path));
    }
    SUBCASE("unsupported maxval") {
        write_bytes(f.path, std::string("P5\n1 1\n65535\n") + '\x00' + '\x00');
        CHECK_THROWS(pnm::read_pgm(f.path));
    }
    SUBCASE("truncated pixel data") {
        write_bytes(f.path, "P5\n2 2\n255\n\x01\x02");
        CHECK_THROWS(pnm::read_pgm(f.path));
    }
    SUBCASE("missing file") { CHECK_THROWS(pnm::read_pgm("/tmp/fadconv_no_such_file.pgm")); }
    SUBCASE("ppm reader rejects pgm magic") {
        write_bytes(f.path, std::string("P5\n1 1\n255\n") + '\x01');
        CHECK_THROWS(pnm::read_ppm(f.path));
    }
}

TEST_CASE("normalized writer maps the value range onto [0, 255]") {
    Matrix v(1, 3);
    v << -1.0, 0.0, 1.0;
    TempFile f("norm.pgm");
    pnm::write_pgm_normalized(f.path, v);
    const Matrix m = pnm::read_pgm(f.path);
    CHECK(m(0, 0) == 0.0);
    CHECK(m(0, 2) == 255.0);
    CHECK(m(0, 1) == doctest::Approx(127.5).epsilon(0.01));

    // constant input must not divide by zero
    TempFile f2("flat.pgm");
    pnm::write_pgm_normalized(f2.path, Matrix::Constant(2, 2, 3.0));
    const Matrix flat = pnm::read_pgm(f2.path);
    CHECK(flat.maxCoeff() == flat.minCoeff());
}
