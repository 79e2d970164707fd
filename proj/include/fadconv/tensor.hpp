#ifndef FADCONV_TENSOR_HPP
#define FADCONV_TENSOR_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace fadconv {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Dense rank-4 array (batch, channel, height, width), row-major with the
// batch dimension outermost. Double precision throughout.
class Tensor4 {
public:
    Tensor4() : b_(0), c_(0), h_(0), w_(0) {}
    Tensor4(int b, int c, int h, int w) : b_(b), c_(c), h_(h), w_(w) {
        if (b < 0 || c < 0 || h < 0 || w < 0)
            throw std::invalid_argument("Tensor4: negative dimension");
        data_ = Vector::Zero(static_cast<long>(b) * c * h * w);
    }

    int batch() const { return b_; }
    int channels() const { return c_; }
    int height() const { return h_; }
    int width() const { return w_; }
    long size() const { return data_.size(); }

    double& at(int b, int c, int h, int w) {
        return data_[((static_cast<long>(b) * c_ + c) * h_ + h) * w_ + w];
    }
    double at(int b, int c, int h, int w) const {
        return data_[((static_cast<long>(b) * c_ + c) * h_ + h) * w_ + w];
    }

    Vector& data() { return data_; }
    const Vector& data() const { return data_; }

    // View of one channel plane as a height x width matrix.
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
    plane(int b, int c) {
        return {data_.data() + (static_cast<long>(b) * c_ + c) * h_ * w_, h_, w_};
    }
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
    plane(int b, int c) const {
        return {data_.data() + (static_cast<long>(b) * c_ + c) * h_ * w_, h_, w_};
    }

    Tensor4 slice_batch(int b) const {
        Tensor4 out(1, c_, h_, w_);
        out.data_ = data_.segment(static_cast<long>(b) * c_ * h_ * w_,
                                  static_cast<long>(c_) * h_ * w_);
        return out;
    }

    bool same_shape(const Tensor4& o) const {
        return b_ == o.b_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
    }

    std::string shape_str() const {
        return "(" + std::to_string(b_) + "," + std::to_string(c_) + "," +
               std::to_string(h_) + "," + std::to_string(w_) + ")";
    }

    bool all_finite() const { return data_.allFinite(); }

private:
    int b_, c_, h_, w_;
    Vector data_;
};

inline void require_shape(const Tensor4& t, int b, int c, int h, int w, const char* what) {
    if (t.batch() != b || t.channels() != c || t.height() != h || t.width() != w)
        throw std::invalid_argument(std::string(what) + ": expected (" + std::to_string(b) +
                                    "," + std::to_string(c) + "," + std::to_string(h) + "," +
                                    std::to_string(w) + "), got " + t.shape_str());
}

}  // namespace fadconv

#endif
