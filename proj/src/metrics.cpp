#include "fadconv/metrics.hpp"

#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace fadconv::metrics {

ConfusionMatrix::ConfusionMatrix(int num_classes) : k_(num_classes) {
    if (num_classes <= 0) throw std::invalid_argument("ConfusionMatrix: need >= 1 class");
    counts_.assign(static_cast<size_t>(k_) * k_, 0);
}

void ConfusionMatrix::update(const std::vector<int>& truth, const std::vector<int>& pred) {
    if (truth.size() != pred.size())
        throw std::invalid_argument("ConfusionMatrix::update: size mismatch");
    // validate first so a bad batch leaves the counts untouched
    for (size_t i = 0; i < truth.size(); ++i) {
        const int t = truth[i], p = pred[i];
        if (t < 0 || t >= k_ || p < 0 || p >= k_)
            throw std::invalid_argument("ConfusionMatrix::update: class out of range at pixel " +
                                        std::to_string(i) + " (true=" + std::to_string(t) +
                                        ", pred=" + std::to_string(p) + ")");
    }
    for (size_t i = 0; i < truth.size(); ++i)
        ++counts_[static_cast<size_t>(truth[i]) * k_ + pred[i]];
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.k_ != k_) throw std::invalid_argument("ConfusionMatrix::merge: class mismatch");
    for (size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

uint64_t ConfusionMatrix::total() const {
    return std::accumulate(counts_.begin(), counts_.end(), uint64_t{0});
}

MetricsReport compute(const ConfusionMatrix& cm) {
    const uint64_t total = cm.total();
    if (total == 0) throw std::invalid_argument("compute: empty confusion matrix");
    const int k = cm.num_classes();
    MetricsReport rep;
    rep.per_class.resize(k);

    uint64_t trace = 0;
    for (int c = 0; c < k; ++c) trace += cm.at(c, c);
    rep.oa = static_cast<double>(trace) / static_cast<double>(total);

    double iou_sum = 0.0;
    int iou_count = 0;
    for (int c = 0; c < k; ++c) {
        uint64_t tp = cm.at(c, c), fp = 0, fn = 0;
        for (int o = 0; o < k; ++o) {
            if (o == c) continue;
            fp += cm.at(o, c);
            fn += cm.at(c, o);
        }
        const uint64_t tn = total - tp - fp - fn;
        ClassMetrics& m = rep.per_class[c];
        m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(total);
        if (tp + fp > 0) m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        if (tp + fn > 0) m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
        if (m.precision && m.recall && *m.precision + *m.recall > 0)
            m.f1 = 2.0 / (1.0 / *m.precision + 1.0 / *m.recall);
        if (tp + fp + fn > 0) {
            m.iou = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
            iou_sum += *m.iou;
            ++iou_count;
        }
    }
    rep.miou = iou_count > 0 ? iou_sum / iou_count : 0.0;
    return rep;
}

static std::string opt_str(const std::optional<double>& v) {
    if (!v) return "";
    std::ostringstream os;
    os << std::setprecision(10) << *v;
    return os.str();
}

std::string MetricsReport::csv_header() const {
    std::ostringstream os;
    os << "oa,miou";
    for (size_t c = 0; c < per_class.size(); ++c)
        os << ",class" << c << "_acc,class" << c << "_precision,class" << c << "_recall,class"
           << c << "_f1,class" << c << "_iou";
    return os.str();
}

std::string MetricsReport::csv_row() const {
    std::ostringstream os;
    os << std::setprecision(10) << oa << "," << miou;
    for (const ClassMetrics& m : per_class)
        os << "," << opt_str(m.accuracy) << "," << opt_str(m.precision) << ","
           << opt_str(m.recall) << "," << opt_str(m.f1) << "," << opt_str(m.iou);
    return os.str();
}

std::string MetricsReport::pretty() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << "OA: " << oa << "  mIoU: " << miou << "\n";
    os << "class     acc   precision  recall     f1        iou\n";
    auto cell = [](const std::optional<double>& v) {
        std::ostringstream c;
        if (v)
            c << std::fixed << std::setprecision(4) << *v;
        else
            c << "   -  ";
        return c.str();
    };
    for (size_t c = 0; c < per_class.size(); ++c) {
        const ClassMetrics& m = per_class[c];
        os << c << "      " << cell(m.accuracy) << "   " << cell(m.precision) << "     "
           << cell(m.recall) << "     " << cell(m.f1) << "    " << cell(m.iou) << "\n";
    }
    return os.str();
}

}  // namespace fadconv::metrics
