#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "pmaa/data.hpp"
#include "pmaa/model.hpp"
#include "pmaa/tensor.hpp"

namespace pmaa {

inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

/// 10 log10(range^2 / MSE); identical inputs give +infinity.
double psnr(const Tensor& a, const Tensor& b, double data_range = 1.0);

/// Mean SSIM over an 11x11 Gaussian window (sigma 1.5), valid positions
/// only, averaged over channels and batch.
double ssim(const Tensor& a, const Tensor& b, double data_range = 1.0);

/// Model range [-1, 1] to [0, 1].
Tensor to_unit_range(const Tensor& x);

/// "inf" for the infinite sentinel, fixed notation otherwise.
std::string format_metric(double v);

struct SampleMetrics {
    std::string id;
    double psnr = 0.0;
    double ssim = 0.0;
};

struct MetricsReport {
    std::vector<SampleMetrics> samples;
    /// Mean over finite PSNR values; +infinity if every sample is infinite.
    double mean_psnr = 0.0;
    std::size_t infinite_psnr = 0;
    double mean_ssim = 0.0;

    static MetricsReport summarize(std::vector<SampleMetrics> samples);
    /// Per-sample "sample<TAB>id<TAB>psnr<TAB>ssim" lines followed by means.
    std::string to_tsv() const;
};

/// Runs the network on every sample in order and scores the final output
/// against the target, both mapped to [0, 1].
MetricsReport evaluate_dataset(const Model& model, std::span<const Sample> samples);

}  // namespace pmaa
