#ifndef FADCONV_METRICS_HPP
#define FADCONV_METRICS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fadconv::metrics {

// counts[t][p] = pixels with true class t predicted as p.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int num_classes);

    void update(const std::vector<int>& truth, const std::vector<int>& pred);
    void merge(const ConfusionMatrix& other);

    int num_classes() const { return k_; }
    uint64_t at(int t, int p) const { return counts_[static_cast<size_t>(t) * k_ + p]; }
    uint64_t& at(int t, int p) { return counts_[static_cast<size_t>(t) * k_ + p]; }
    uint64_t total() const;

private:
    int k_;
    std::vector<uint64_t> counts_;
};

struct ClassMetrics {
    std::optional<double> accuracy;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
    std::optional<double> iou;
};

struct MetricsReport {
    double oa = 0.0;            // trace / total
    double miou = 0.0;          // mean over defined per-class IoUs
    std::vector<ClassMetrics> per_class;

    std::string csv_header() const;
    std::string csv_row() const;
    std::string pretty() const;
};

// One-vs-rest TP/FP/FN/TN per class; zero-denominator metrics are absent and
// excluded from miou.
MetricsReport compute(const ConfusionMatrix& cm);

}  // namespace fadconv::metrics

#endif
