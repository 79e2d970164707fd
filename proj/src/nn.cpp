#include "fadconv/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace fadconv::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void ConvGeometry::validate() const {
    if (in_channels <= 0 || out_channels <= 0 || kernel <= 0 || stride <= 0 || dilation <= 0 ||
        groups <= 0 || padding < 0)
        throw std::invalid_argument("ConvGeometry: nonpositive field");
    if (in_channels % groups != 0 || out_channels % groups != 0)
        throw std::invalid_argument("ConvGeometry: channels not divisible by groups");
}

// col is (Cin*k*k, Ho*Wo); row index (c*k + ki)*k + kj, column index oh*Wo + ow.
static void im2col(const Tensor4& x, int b, const ConvGeometry& g, int ho, int wo, Matrix& col) {
    const int k = g.kernel, cin = g.in_channels, hin = x.height(), win = x.width();
    col.setZero();
    for (int c = 0; c < cin; ++c) {
        auto px = x.plane(b, c);
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const int row = (c * k + ki) * k + kj;
                for (int oh = 0; oh < ho; ++oh) {
                    const int ih = oh * g.stride - g.padding + ki * g.dilation;
                    if (ih < 0 || ih >= hin) continue;
                    for (int ow = 0; ow < wo; ++ow) {
                        const int iw = ow * g.stride - g.padding + kj * g.dilation;
                        if (iw < 0 || iw >= win) continue;
                        col(row, oh * wo + ow) = px(ih, iw);
                    }
                }
            }
        }
    }
}

static void col2im_accum(const Matrix& col, int b, const ConvGeometry& g, int ho, int wo,
                         Tensor4& gx) {
    const int k = g.kernel, cin = g.in_channels, hin = gx.height(), win = gx.width();
    for (int c = 0; c < cin; ++c) {
        auto px = gx.plane(b, c);
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const int row = (c * k + ki) * k + kj;
                for (int oh = 0; oh < ho; ++oh) {
                    const int ih = oh * g.stride - g.padding + ki * g.dilation;
                    if (ih < 0 || ih >= hin) continue;
                    for (int ow = 0; ow < wo; ++ow) {
                        const int iw = ow * g.stride - g.padding + kj * g.dilation;
                        if (iw < 0 || iw >= win) continue;
                        px(ih, iw) += col(row, oh * wo + ow);
                    }
                }
            }
        }
    }
}

Tensor4 conv2d(const Tensor4& x, const Vector& w, const Vector* bias, const ConvGeometry& g) {
    g.validate();
    if (x.channels() != g.in_channels)
        throw std::invalid_argument("conv2d: input has " + std::to_string(x.channels()) +
                                    " channels, geometry expects " +
                                    std::to_string(g.in_channels));
    if (w.size() != g.weight_count())
        throw std::invalid_argument("conv2d: weight size " + std::to_string(w.size()) +
                                    " != " + std::to_string(g.weight_count()));
    if (bias && bias->size() != g.out_channels)
        throw std::invalid_argument("conv2d: bias size mismatch");
    const int ho = g.out_dim(x.height()), wo = g.out_dim(x.width());
    if (ho <= 0 || wo <= 0)
        throw std::invalid_argument("conv2d: nonpositive output size for input " + x.shape_str());

    const int k = g.kernel;
    const int cg = g.in_channels / g.groups;   // input channels per group
    const int cog = g.out_channels / g.groups; // output channels per group
    const int kk = cg * k * k;

    Tensor4 out(x.batch(), g.out_channels, ho, wo);
    Matrix col(static_cast<long>(g.in_channels) * k * k, static_cast<long>(ho) * wo);
    for (int b = 0; b < x.batch(); ++b) {
        im2col(x, b, g, ho, wo, col);
        for (int grp = 0; grp < g.groups; ++grp) {
            Eigen::Map<const RowMat> wmat(w.data() + static_cast<long>(grp) * cog * kk, cog, kk);
            Eigen::Map<RowMat> omat(out.data().data() +
                                        (static_cast<long>(b) * g.out_channels + grp * cog) * ho * wo,
                                    cog, static_cast<long>(ho) * wo);
            omat.noalias() = wmat * col.middleRows(static_cast<long>(grp) * kk, kk);
            if (bias)
                for (int oc = 0; oc < cog; ++oc) omat.row(oc).array() += (*bias)[grp * cog + oc];
        }
    }
    return out;
}

void conv2d_backward(const Tensor4& x, const Vector& w, const Tensor4& grad_out,
                     const ConvGeometry& g, Tensor4* grad_x, Vector* grad_w, Vector* grad_bias) {
    g.validate();
    const int ho = g.out_dim(x.height()), wo = g.out_dim(x.width());
    if (grad_out.batch() != x.batch() || grad_out.channels() != g.out_channels ||
        grad_out.height() != ho || grad_out.width() != wo)
        throw std::invalid_argument("conv2d_backward: grad_out shape " + grad_out.shape_str() +
                                    " does not match forward output");
    if (grad_x && !grad_x->same_shape(x))
        throw std::invalid_argument("conv2d_backward: grad_x shape mismatch");

    const int k = g.kernel;
    const int cg = g.in_channels / g.groups;
    const int cog = g.out_channels / g.groups;
    const int kk = cg * k * k;

    Matrix col(static_cast<long>(g.in_channels) * k * k, static_cast<long>(ho) * wo);
    Matrix gcol(col.rows(), col.cols());
    for (int b = 0; b < x.batch(); ++b) {
        if (grad_w || grad_x) im2col(x, b, g, ho, wo, col);
        if (grad_x) gcol.setZero();
        for (int grp = 0; grp < g.groups; ++grp) {
            Eigen::Map<const RowMat> gmat(
                grad_out.data().data() +
                    (static_cast<long>(b) * g.out_channels + grp * cog) * ho * wo,
                cog, static_cast<long>(ho) * wo);
            if (grad_w) {
                Eigen::Map<RowMat> gw(grad_w->data() + static_cast<long>(grp) * cog * kk, cog, kk);
                gw.noalias() += gmat * col.middleRows(static_cast<long>(grp) * kk, kk).transpose();
            }
            if (grad_x) {
                Eigen::Map<const RowMat> wmat(w.data() + static_cast<long>(grp) * cog * kk, cog, kk);
                gcol.middleRows(static_cast<long>(grp) * kk, kk).noalias() =
                    wmat.transpose() * gmat;
            }
            if (grad_bias)
                for (int oc = 0; oc < cog; ++oc) (*grad_bias)[grp * cog + oc] += gmat.row(oc).sum();
        }
        if (grad_x) col2im_accum(gcol, b, g, ho, wo, *grad_x);
    }
}

// ---- layers ----------------------------------------------------------------

void kaiming_init(Vector& w, long fan_in, Rng& rng) {
    const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (long i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, std);
}

Conv2dLayer::Conv2dLayer(std::string name, ConvGeometry geometry, bool with_bias, Rng& rng)
    : geom(geometry), has_bias(with_bias) {
    geom.validate();
    weight.init(name + ".weight",
                {geom.out_channels, geom.in_channels / geom.groups, geom.kernel, geom.kernel});
    kaiming_init(weight.value, static_cast<long>(geom.in_channels / geom.groups) * geom.kernel *
                                   geom.kernel,
                 rng);
    if (has_bias) bias.init(name + ".bias", {geom.out_channels});
}

Tensor4 Conv2dLayer::forward(const Tensor4& x, bool) {
    cached_x_ = x;
    return conv2d(x, weight.value, has_bias ? &bias.value : nullptr, geom);
}

Tensor4 Conv2dLayer::backward(const Tensor4& grad_out) {
    Tensor4 gx(cached_x_.batch(), cached_x_.channels(), cached_x_.height(), cached_x_.width());
    conv2d_backward(cached_x_, weight.value, grad_out, geom, &gx, &weight.grad,
                    has_bias ? &bias.grad : nullptr);
    return gx;
}

void Conv2dLayer::collect_params(std::vector<GradPair*>& out) {
    out.push_back(&weight);
    if (has_bias) out.push_back(&bias);
}

BatchNorm2d::BatchNorm2d(std::string name, int ch, double e, double m)
    : channels(ch), eps(e), momentum(m), name_(name) {
    gamma.init(name + ".gamma", {ch});
    gamma.value.setOnes();
    beta.init(name + ".beta", {ch});
    running_mean = Vector::Zero(ch);
    running_var = Vector::Ones(ch);
}

Tensor4 BatchNorm2d::forward(const Tensor4& x, bool train) {
    if (x.channels() != channels)
        throw std::invalid_argument("BatchNorm2d: channel mismatch " + x.shape_str());
    const long n = static_cast<long>(x.batch()) * x.height() * x.width();
    Tensor4 out(x.batch(), x.channels(), x.height(), x.width());
    cached_xhat_ = Tensor4(x.batch(), x.channels(), x.height(), x.width());
    cached_invstd_ = Vector::Zero(channels);
    cached_count_ = n;
    for (int c = 0; c < channels; ++c) {
        double mean, var;
        if (train) {
            double s = 0.0, s2 = 0.0;
            for (int b = 0; b < x.batch(); ++b) {
                auto p = x.plane(b, c);
                s += p.sum();
                s2 += p.squaredNorm();
            }
            mean = s / n;
            var = s2 / n - mean * mean;
            if (var < 0) var = 0;
            running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mean;
            running_var[c] = (1.0 - momentum) * running_var[c] + momentum * var;
        } else {
            mean = running_mean[c];
            var = running_var[c];
        }
        const double invstd = 1.0 / std::sqrt(var + eps);
        cached_invstd_[c] = invstd;
        for (int b = 0; b < x.batch(); ++b) {
            auto xh = cached_xhat_.plane(b, c);
            xh = (x.plane(b, c).array() - mean).matrix() * invstd;
            out.plane(b, c) = (xh.array() * gamma.value[c] + beta.value[c]).matrix();
        }
    }
    return out;
}

Tensor4 BatchNorm2d::backward(const Tensor4& grad_out) {
    // Train-mode backward through batch statistics.
    const Tensor4& xh = cached_xhat_;
    const long n = cached_count_;
    Tensor4 gx(grad_out.batch(), grad_out.channels(), grad_out.height(), grad_out.width());
    for (int c = 0; c < channels; ++c) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (int b = 0; b < grad_out.batch(); ++b) {
            auto g = grad_out.plane(b, c);
            auto h = xh.plane(b, c);
            sum_g += g.sum();
            sum_gx += (g.array() * h.array()).sum();
        }
        gamma.grad[c] += sum_gx;
        beta.grad[c] += sum_g;
        const double ginv = gamma.value[c] * cached_invstd_[c];
        for (int b = 0; b < grad_out.batch(); ++b) {
            auto g = grad_out.plane(b, c);
            auto h = xh.plane(b, c);
            gx.plane(b, c) =
                (ginv * (g.array() - sum_g / n - h.array() * (sum_gx / n))).matrix();
        }
    }
    return gx;
}

void BatchNorm2d::collect_params(std::vector<GradPair*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
}

void BatchNorm2d::collect_buffers(std::vector<std::pair<std::string, Vector*>>& out) {
    out.emplace_back(name_ + ".running_mean", &running_mean);
    out.emplace_back(name_ + ".running_var", &running_var);
}

Tensor4 ReluLayer::forward(const Tensor4& x, bool) {
    cached_x_ = x;
    Tensor4 out = x;
    out.data() = out.data().cwiseMax(0.0);
    return out;
}

Tensor4 ReluLayer::backward(const Tensor4& grad_out) {
    Tensor4 gx = grad_out;
    for (long i = 0; i < gx.size(); ++i)
        if (cached_x_.data()[i] <= 0.0) gx.data()[i] = 0.0;
    return gx;
}

Dense::Dense(std::string name, int in, int out, Rng* rng) : in_dim(in), out_dim(out) {
    if (in <= 0 || out <= 0) throw std::invalid_argument("Dense: nonpositive dimension");
    weight.init(name + ".weight", {out, in});
    bias.init(name + ".bias", {out});
    if (rng) kaiming_init(weight.value, in, *rng);
}

Matrix Dense::forward(const Matrix& x) {
    if (x.cols() != in_dim) throw std::invalid_argument("Dense: input dim mismatch");
    cached_x_ = x;
    Eigen::Map<const RowMat> w(weight.value.data(), out_dim, in_dim);
    Matrix y = x * w.transpose();
    y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.value.data(), out_dim);
    return y;
}

Matrix Dense::backward(const Matrix& grad_out) {
    Eigen::Map<const RowMat> w(weight.value.data(), out_dim, in_dim);
    Eigen::Map<RowMat> gw(weight.grad.data(), out_dim, in_dim);
    gw.noalias() += grad_out.transpose() * cached_x_;
    Eigen::Map<Eigen::RowVectorXd>(bias.grad.data(), out_dim) += grad_out.colwise().sum();
    return grad_out * w;
}

void Dense::collect_params(std::vector<GradPair*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
}

Matrix softmax_rows(const Matrix& logits) {
    if (logits.cols() == 0) throw std::invalid_argument("softmax: empty axis");
    Matrix out(logits.rows(), logits.cols());
    for (long r = 0; r < logits.rows(); ++r) {
        const double mx = logits.row(r).maxCoeff();
        Eigen::RowVectorXd e = (logits.row(r).array() - mx).exp();
        out.row(r) = e / e.sum();
    }
    return out;
}

Matrix softmax_rows_backward(const Matrix& softmax_out, const Matrix& grad_out) {
    Matrix gl(grad_out.rows(), grad_out.cols());
    for (long r = 0; r < grad_out.rows(); ++r) {
        const double dot = softmax_out.row(r).dot(grad_out.row(r));
        gl.row(r) = softmax_out.row(r).array() * (grad_out.row(r).array() - dot);
    }
    return gl;
}

// ---- losses ----------------------------------------------------------------

double cross_entropy_loss(const Tensor4& logits, const std::vector<int>& labels, Tensor4* grad) {
    const int b = logits.batch(), k = logits.channels(), h = logits.height(), w = logits.width();
    const long npix = static_cast<long>(b) * h * w;
    if (static_cast<long>(labels.size()) != npix)
        throw std::invalid_argument("cross_entropy: label count mismatch");
    if (grad) *grad = Tensor4(b, k, h, w);
    double loss = 0.0;
    std::vector<double> p(k);
    long idx = 0;
    for (int bi = 0; bi < b; ++bi)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x, ++idx) {
                const int t = labels[idx];
                if (t < 0 || t >= k)
                    throw std::invalid_argument("cross_entropy: label " + std::to_string(t) +
                                                " out of range [0," + std::to_string(k) + ")");
                double mx = -1e300;
                for (int c = 0; c < k; ++c) mx = std::max(mx, logits.at(bi, c, y, x));
                double z = 0.0;
                for (int c = 0; c < k; ++c) {
                    p[c] = std::exp(logits.at(bi, c, y, x) - mx);
                    z += p[c];
                }
                loss += -(std::log(p[t] / z));
                if (grad)
                    for (int c = 0; c < k; ++c)
                        grad->at(bi, c, y, x) = (p[c] / z - (c == t ? 1.0 : 0.0)) / npix;
            }
    return loss / npix;
}

double bce_loss(const Tensor4& logits, const std::vector<int>& targets, Tensor4* grad) {
    if (logits.channels() != 1) throw std::invalid_argument("bce: expects single-channel logits");
    const long n = logits.size();
    if (static_cast<long>(targets.size()) != n)
        throw std::invalid_argument("bce: target count mismatch");
    if (grad) *grad = Tensor4(logits.batch(), 1, logits.height(), logits.width());
    double loss = 0.0;
    for (long i = 0; i < n; ++i) {
        const double z = logits.data()[i];
        const double t = targets[i];
        if (targets[i] != 0 && targets[i] != 1)
            throw std::invalid_argument("bce: target must be 0 or 1");
        // log(1+e^z) computed stably
        const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
        loss += softplus - t * z;
        if (grad) grad->data()[i] = (sigmoid(z) - t) / n;
    }
    return loss / n;
}

// ---- optimizer ---------------------------------------------------------------

void Adam::step(const std::vector<GradPair*>& params) {
    if (m.size() != params.size()) {
        m.assign(params.size(), Vector());
        v.assign(params.size(), Vector());
        for (size_t i = 0; i < params.size(); ++i) {
            m[i] = Vector::Zero(params[i]->value.size());
            v[i] = Vector::Zero(params[i]->value.size());
        }
    }
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    for (size_t i = 0; i < params.size(); ++i) {
        Vector& p = params[i]->value;
        const Vector& g = params[i]->grad;
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g.cwiseProduct(g);
        const Vector mhat = m[i] / bc1;
        const Vector vhat = v[i] / bc2;
        p -= lr * (mhat.array() / (vhat.array().sqrt() + eps)).matrix();
        if (weight_decay > 0.0) p -= lr * weight_decay * p;
    }
}

// ---- gradient checking --------------------------------------------------------

GradCheckResult grad_check(const std::function<double()>& loss_and_grad,
                           const std::function<double()>& loss_only,
                           const std::vector<GradPair*>& params, double eps, Tensor4* input,
                           const Tensor4* input_grad) {
    GradCheckResult res;
    const double base = loss_and_grad();
    if (!std::isfinite(base)) {
        res.max_rel_err = std::numeric_limits<double>::infinity();
        res.worst_path = "<loss>";
        return res;
    }
    auto check_entry = [&](double analytic, double* slot, const std::string& path) {
        const double orig = *slot;
        *slot = orig + eps;
        const double lp = loss_only();
        *slot = orig - eps;
        const double lm = loss_only();
        *slot = orig;
        const double numeric = (lp - lm) / (2.0 * eps);
        double err;
        if (!std::isfinite(numeric) || !std::isfinite(analytic))
            err = std::numeric_limits<double>::infinity();
        else
            err = std::abs(analytic - numeric) /
                  std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        if (err > res.max_rel_err) {
            res.max_rel_err = err;
            res.worst_path = path;
        }
    };
    for (GradPair* p : params) {
        const Vector analytic = p->grad;
        for (long i = 0; i < p->value.size(); ++i)
            check_entry(analytic[i], &p->value[i], p->name + "[" + std::to_string(i) + "]");
    }
    if (input && input_grad) {
        const Vector analytic = input_grad->data();
        for (long i = 0; i < input->size(); ++i)
            check_entry(analytic[i], &input->data()[i], "input[" + std::to_string(i) + "]");
    }
    return res;
}

}  // namespace fadconv::nn
