#include "pmaa/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "pmaa/ops.hpp"
#include "pmaa/random.hpp"

namespace pmaa {

GradCheckResult check_coordinates(const std::function<Tensor()>& loss,
                                  std::span<const Coordinate> coords, double eps) {
    GradCheckResult result;
    for (const Coordinate& c : coords) {
        Tensor t = c.tensor;
        if (!t.requires_grad()) throw std::invalid_argument("gradcheck: coordinate without requires_grad");
        if (c.index >= t.numel()) throw std::invalid_argument("gradcheck: coordinate out of range");
        t.zero_grad();
    }
    loss().backward();
    for (const Coordinate& c : coords)
        result.analytic.push_back(c.tensor.has_grad() ? c.tensor.grad()[c.index] : 0.0);

    NoGradGuard no_grad;
    for (const Coordinate& c : coords) {
        Tensor t = c.tensor;
        double& v = t.mutable_data()[c.index];
        const double saved = v;
        v = saved + eps;
        const double plus = loss().item();
        v = saved - eps;
        const double minus = loss().item();
        v = saved;
        result.numeric.push_back((plus - minus) / (2.0 * eps));
    }

    for (std::size_t i = 0; i < coords.size(); ++i) {
        const double a = result.analytic[i];
        const double n = result.numeric[i];
        const double err = std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
        if (err > result.max_rel_error || i == 0) {
            result.max_rel_error = err;
            result.worst = i;
        }
    }
    return result;
}

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         const FiniteDiffOptions& options) {
    Tensor leaf = Tensor::from_data(x.shape(), {x.data().begin(), x.data().end()}, true);

    Shape out_shape;
    {
        NoGradGuard no_grad;
        out_shape = f(leaf).shape();
    }
    Tensor weights;
    if (out_shape.numel() != 1) {
        Rng rng(options.seed, 0x5eed);
        std::vector<double> r(out_shape.numel());
        for (double& v : r) v = rng.uniform(-1.0, 1.0);
        weights = Tensor::from_data(out_shape, std::move(r));
    }
    auto loss = [&]() {
        Tensor y = f(leaf);
        return weights.defined() ? sum(mul(y, weights)) : y;
    };

    std::vector<std::size_t> idx(leaf.numel());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (idx.size() > options.max_coords) {
        Rng rng(options.seed, 0xc00d);
        for (std::size_t i = 0; i < options.max_coords; ++i)
            std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
        idx.resize(options.max_coords);
    }
    std::vector<Coordinate> coords;
    coords.reserve(idx.size());
    for (std::size_t i : idx) coords.push_back({leaf, i});
    return check_coordinates(loss, coords, options.eps).max_rel_error;
}

}  // namespace pmaa
