#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pmaa/tensor.hpp"

namespace pmaa {

struct Conv2dOptions {
    std::size_t stride_h = 1;
    std::size_t stride_w = 1;
    std::size_t pad_h = 0;
    std::size_t pad_w = 0;
    std::size_t groups = 1;

    static Conv2dOptions same(std::size_t kernel, std::size_t stride = 1, std::size_t groups = 1) {
        return {stride, stride, kernel / 2, kernel / 2, groups};
    }
};

/// Cross-correlation with zero padding. `weight` is (co, ci/groups, kh, kw);
/// `bias`, when defined, holds co values (stored as shape (co,1,1,1)).
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              const Conv2dOptions& options = {});

/// Mean over bins [floor(i*h/ho), ceil((i+1)*h/ho)) in each direction.
Tensor adaptive_avg_pool2d(const Tensor& input, std::size_t out_h, std::size_t out_w);

Tensor upsample_nearest(const Tensor& input, std::size_t factor);

/// Per-(sample, channel) normalization with biased variance. gamma and beta
/// hold c values.
Tensor instance_norm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                       double eps = 1e-5);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Hadamard product.
Tensor mul(const Tensor& a, const Tensor& b);
/// x scaled by a learnable single-element tensor.
Tensor scale(const Tensor& x, const Tensor& alpha);
Tensor scale(const Tensor& x, double alpha);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);

Tensor concat_channels(std::span<const Tensor> inputs);
Tensor concat_channels(std::initializer_list<Tensor> inputs);
/// Channels [begin, begin + count).
Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t count);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Softmax self-attention inside non-overlapping patch x patch windows.
/// q, k and v share one shape; scores are scaled by 1/sqrt(channels).
Tensor patch_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t patch);

}  // namespace pmaa
