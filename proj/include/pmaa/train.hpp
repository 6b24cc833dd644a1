#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "pmaa/data.hpp"
#include "pmaa/model.hpp"
#include "pmaa/tensor.hpp"

namespace pmaa {

/// Mean absolute difference; the gradient uses sign(0) = 0.
Tensor l1_loss(const Tensor& pred, const Tensor& target);

struct AdamWOptions {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-5;
};

/// First and second moments aligned with ParamStore entries.
struct OptimState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t step = 0;

    static OptimState zeros_like(const ParamStore& params);
};

/// One decoupled-decay Adam update. Parameters without a gradient are
/// treated as having a zero gradient; entries with decay=false skip decay.
void adamw_step(ParamStore& params, OptimState& state, const AdamWOptions& opts, double lr);

/// lr_min + (lr0 - lr_min)(1 + cos(pi step / total)) / 2.
double cosine_lr(std::uint64_t step, std::uint64_t total_steps, double lr0, double lr_min = 0.0);

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 4;
    std::uint64_t seed = 0;
    double lr_min = 0.0;
    AdamWOptions optim;
    /// Written whenever validation SSIM strictly improves; empty disables it.
    std::filesystem::path checkpoint;

    void validate() const;
    std::size_t steps_per_epoch(std::size_t train_size) const;
};

struct EpochLog {
    std::size_t epoch = 0;
    double train_l1 = 0.0;
    double val_psnr = 0.0;
    double val_ssim = 0.0;
    double lr = 0.0;
    bool improved = false;
};

/// "epoch\ttrain_l1\tval_psnr\tval_ssim\tlr"
std::string epoch_log_header();
std::string format_epoch_log(const EpochLog& e);

struct TrainResult {
    std::vector<EpochLog> epochs;
    std::vector<double> step_losses;
    double best_ssim = -1.0;
    std::size_t best_epoch = 0;
    OptimState optim;
};

/// Thrown when the loss becomes NaN or infinite.
class NonFiniteLoss : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Seeded shuffle of [0, n), a pure function of (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

/// Full training run. One format_epoch_log line per epoch goes to `log`
/// when given.
TrainResult train_loop(Model& model, std::span<const Sample> train, std::span<const Sample> val,
                       const TrainConfig& config, std::ostream* log = nullptr);

}  // namespace pmaa
