#include "fadconv/pnm.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace fadconv::pnm {

static void parse_error(const std::string& path, std::streampos at, const std::string& msg) {
    throw std::runtime_error("pnm: " + path + ": " + msg + " (byte offset " +
                             std::to_string(static_cast<long>(at)) + ")");
}

// Reads the next header token, skipping whitespace and '#' comments.
static std::string next_token(std::istream& in, const std::string& path) {
    int c = in.get();
    while (c != EOF && (std::isspace(c) || c == '#')) {
        if (c == '#')
            while (c != EOF && c != '\n') c = in.get();
        c = in.get();
    }
    if (c == EOF) parse_error(path, in.tellg(), "truncated header");
    std::string tok;
    while (c != EOF && !std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    return tok;
}

static uint8_t clamp255(double v) {
    const double r = std::round(v);
    return static_cast<uint8_t>(r < 0 ? 0 : (r > 255 ? 255 : r));
}

void write_pgm(const std::string& path, const Matrix& gray255) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("pnm: cannot open " + path + " for writing");
    out << "P5\n" << gray255.cols() << " " << gray255.rows() << "\n255\n";
    std::vector<uint8_t> row(gray255.cols());
    for (long i = 0; i < gray255.rows(); ++i) {
        for (long j = 0; j < gray255.cols(); ++j) row[j] = clamp255(gray255(i, j));
        out.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
}

void write_pgm_normalized(const std::string& path, const Matrix& values) {
    const double lo = values.minCoeff(), hi = values.maxCoeff();
    Matrix g;
    if (hi > lo)
        g = ((values.array() - lo) / (hi - lo) * 255.0).matrix();
    else
        g = Matrix::Zero(values.rows(), values.cols());
    write_pgm(path, g);
}

Matrix read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("pnm: cannot open " + path);
    const std::string magic = next_token(in, path);
    if (magic != "P5") parse_error(path, in.tellg(), "expected P5, got '" + magic + "'");
    const int w = std::stoi(next_token(in, path));
    const int h = std::stoi(next_token(in, path));
    const int maxval = std::stoi(next_token(in, path));
    if (maxval != 255) parse_error(path, in.tellg(), "unsupported maxval");
    Matrix out(h, w);
    std::vector<uint8_t> row(w);
    for (int i = 0; i < h; ++i) {
        in.read(reinterpret_cast<char*>(row.data()), w);
        if (in.gcount() != w) parse_error(path, in.tellg(), "truncated pixel payload");
        for (int j = 0; j < w; ++j) out(i, j) = row[j];
    }
    return out;
}

void write_ppm(const std::string& path, const Tensor4& image) {
    if (image.batch() != 1 || image.channels() != 3)
        throw std::invalid_argument("write_ppm: expected a (1,3,H,W) tensor, got " +
                                    image.shape_str());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("pnm: cannot open " + path + " for writing");
    out << "P6\n" << image.width() << " " << image.height() << "\n255\n";
    std::vector<uint8_t> row(static_cast<size_t>(image.width()) * 3);
    for (int i = 0; i < image.height(); ++i) {
        for (int j = 0; j < image.width(); ++j)
            for (int c = 0; c < 3; ++c) row[j * 3 + c] = clamp255(image.at(0, c, i, j) * 255.0);
        out.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
}

Tensor4 read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("pnm: cannot open " + path);
    const std::string magic = next_token(in, path);
    if (magic != "P6") parse_error(path, in.tellg(), "expected P6, got '" + magic + "'");
    const int w = std::stoi(next_token(in, path));
    const int h = std::stoi(next_token(in, path));
    const int maxval = std::stoi(next_token(in, path));
    if (maxval != 255) parse_error(path, in.tellg(), "unsupported maxval");
    Tensor4 out(1, 3, h, w);
    std::vector<uint8_t> row(static_cast<size_t>(w) * 3);
    for (int i = 0; i < h; ++i) {
        in.read(reinterpret_cast<char*>(row.data()), row.size());
        if (in.gcount() != static_cast<std::streamsize>(row.size()))
            parse_error(path, in.tellg(), "truncated pixel payload");
        for (int j = 0; j < w; ++j)
            for (int c = 0; c < 3; ++c) out.at(0, c, i, j) = row[j * 3 + c] / 255.0;
    }
    return out;
}

}  // namespace fadconv::pnm
