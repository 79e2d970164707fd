#ifndef FADCONV_NN_HPP
#define FADCONV_NN_HPP

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fadconv/rng.hpp"
#include "fadconv/tensor.hpp"

namespace fadconv::nn {

struct ConvGeometry {
    int in_channels = 1;
    int out_channels = 1;
    int kernel = 1;
    int stride = 1;
    int padding = 0;
    int dilation = 1;
    int groups = 1;

    void validate() const;
    int out_dim(int in) const {
        return (in + 2 * padding - dilation * (kernel - 1) - 1) / stride + 1;
    }
    long weight_count() const {
        return static_cast<long>(out_channels) * (in_channels / groups) * kernel * kernel;
    }
};

// Parameter tensor plus its gradient accumulator.
struct GradPair {
    std::string name;
    std::vector<long> dims;
    Vector value;
    Vector grad;

    GradPair() = default;
    GradPair(std::string n, std::vector<long> d) { init(std::move(n), std::move(d)); }
    void init(std::string n, std::vector<long> d) {
        name = std::move(n);
        dims = std::move(d);
        long total = 1;
        for (long x : dims) total *= x;
        value = Vector::Zero(total);
        grad = Vector::Zero(total);
    }
    void zero_grad() { grad.setZero(); }
};

// Kernel layout: (Cout, Cin/groups, k, k) row-major, flattened.
Tensor4 conv2d(const Tensor4& x, const Vector& w, const Vector* bias, const ConvGeometry& g);

// Accumulates into the provided gradient buffers (any may be null).
void conv2d_backward(const Tensor4& x, const Vector& w, const Tensor4& grad_out,
                     const ConvGeometry& g, Tensor4* grad_x, Vector* grad_w, Vector* grad_bias);

// ---- layer primitives ----------------------------------------------------

class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor4 forward(const Tensor4& x, bool train) = 0;
    virtual Tensor4 backward(const Tensor4& grad_out) = 0;
    virtual void collect_params(std::vector<GradPair*>& out) { (void)out; }
    // Non-learnable state that belongs in a checkpoint (BN running stats).
    virtual void collect_buffers(std::vector<std::pair<std::string, Vector*>>& out) { (void)out; }
};

class Conv2dLayer : public Layer {
public:
    Conv2dLayer(std::string name, ConvGeometry geom, bool bias, Rng& rng);
    Tensor4 forward(const Tensor4& x, bool train) override;
    Tensor4 backward(const Tensor4& grad_out) override;
    void collect_params(std::vector<GradPair*>& out) override;

    ConvGeometry geom;
    GradPair weight;
    GradPair bias;
    bool has_bias;

private:
    Tensor4 cached_x_;
};

class BatchNorm2d : public Layer {
public:
    BatchNorm2d(std::string name, int channels, double eps = 1e-5, double momentum = 0.1);
    Tensor4 forward(const Tensor4& x, bool train) override;
    Tensor4 backward(const Tensor4& grad_out) override;
    void collect_params(std::vector<GradPair*>& out) override;
    void collect_buffers(std::vector<std::pair<std::string, Vector*>>& out) override;

    int channels;
    double eps, momentum;
    GradPair gamma, beta;
    Vector running_mean, running_var;

private:
    std::string name_;
    Tensor4 cached_xhat_;
    Vector cached_invstd_;
    long cached_count_ = 0;
};

class ReluLayer : public Layer {
public:
    Tensor4 forward(const Tensor4& x, bool train) override;
    Tensor4 backward(const Tensor4& grad_out) override;

private:
    Tensor4 cached_x_;
};

// Affine map on row vectors: y = x * W^T + b, x is (rows, in), W is (out, in).
class Dense {
public:
    Dense() = default;
    Dense(std::string name, int in, int out, Rng* rng);  // rng == nullptr -> zero init
    Matrix forward(const Matrix& x);
    Matrix backward(const Matrix& grad_out);
    void collect_params(std::vector<GradPair*>& out);

    int in_dim = 0, out_dim = 0;
    GradPair weight;  // (out, in) row-major
    GradPair bias;    // (out)

private:
    Matrix cached_x_;
};

// Row-wise softmax with exact unit row sums.
Matrix softmax_rows(const Matrix& logits);
// grad_logits given grad of softmax output, with cached softmax values.
Matrix softmax_rows_backward(const Matrix& softmax_out, const Matrix& grad_out);

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
inline double relu(double z) { return z > 0.0 ? z : 0.0; }

// ---- losses ---------------------------------------------------------------

// Per-pixel class logits (B, k, H, W) vs labels of length B*H*W (row-major
// over (b, h, w)). Mean reduction. Returns loss, writes grad w.r.t. logits.
double cross_entropy_loss(const Tensor4& logits, const std::vector<int>& labels, Tensor4* grad);

// Single-channel logits vs binary targets in {0,1}, mean reduction.
double bce_loss(const Tensor4& logits, const std::vector<int>& targets, Tensor4* grad);

// ---- optimizer -------------------------------------------------------------

// Adam with decoupled weight decay, constant learning rate.
class Adam {
public:
    Adam(double lr, double weight_decay = 0.0, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8)
        : lr(lr), weight_decay(weight_decay), beta1(beta1), beta2(beta2), eps(eps) {}

    void step(const std::vector<GradPair*>& params);

    double lr, weight_decay, beta1, beta2, eps;
    long t = 0;
    std::vector<Vector> m, v;  // parallel to params, lazily sized
};

// ---- gradient checking ------------------------------------------------------

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst_path;
    bool ok(double tol) const { return max_rel_err <= tol && std::isfinite(max_rel_err); }
};

// `loss_and_grad` zeroes all grads, runs forward+backward, returns the loss.
// `loss_only` runs forward at the current parameter values. Compares every
// analytic gradient entry (params and, if given, the input) with central
// differences. Relative error uses max(|analytic|, |numeric|, 1e-8).
GradCheckResult grad_check(const std::function<double()>& loss_and_grad,
                           const std::function<double()>& loss_only,
                           const std::vector<GradPair*>& params, double eps = 1e-5,
                           Tensor4* input = nullptr, const Tensor4* input_grad = nullptr);

// Kaiming fan-in normal init.
void kaiming_init(Vector& w, long fan_in, Rng& rng);

}  // namespace fadconv::nn

#endif
