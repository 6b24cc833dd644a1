#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "pmaa/tensor.hpp"

namespace pmaa {

/// One scalar entry of a leaf tensor.
struct Coordinate {
    Tensor tensor;
    std::size_t index = 0;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst = 0;  // position in the coordinate list
    std::vector<double> analytic;
    std::vector<double> numeric;
};

/// Compares the analytic gradient of a scalar loss against central differences
/// at the given coordinates. Relative error is |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult check_coordinates(const std::function<Tensor()>& loss,
                                  std::span<const Coordinate> coords, double eps = 1e-5);

struct FiniteDiffOptions {
    double eps = 1e-5;
    /// Tensors larger than this are checked on a random subset of this many
    /// coordinates.
    std::size_t max_coords = 64;
    std::uint64_t seed = 0;
};

/// Max relative gradient error of f at x. A non-scalar output is reduced to
/// sum(f(x) * r) with a fixed random r so every output element matters.
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         const FiniteDiffOptions& options = {});

}  // namespace pmaa
