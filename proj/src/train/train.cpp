#include "pmaa/train.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "pmaa/checkpoint.hpp"
#include "pmaa/metrics.hpp"
#include "pmaa/random.hpp"

namespace pmaa {

namespace {

class L1Node final : public Node {
public:
    L1Node(const Tensor& pred, const Tensor& target) : Node({pred, target}) {}
    const char* name() const override { return "l1_loss"; }

protected:
    void apply(std::span<const double> grad_out) override {
        const auto p = inputs()[0].data();
        const auto t = inputs()[1].data();
        const double scale = grad_out[0] / double(p.size());
        auto gp = input_grad(0);
        auto gt = input_grad(1);
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double d = p[i] - t[i];
            const double s = d > 0 ? scale : (d < 0 ? -scale : 0.0);
            if (!gp.empty()) gp[i] += s;
            if (!gt.empty()) gt[i] -= s;
        }
    }
};

}  // namespace

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
    if (!pred.defined() || !target.defined()) throw std::invalid_argument("l1_loss: undefined operand");
    if (pred.shape() != target.shape())
        throw std::invalid_argument("l1_loss: shape mismatch " + pred.shape().str() + " vs " +
                                    target.shape().str());
    const auto p = pred.data();
    const auto t = target.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - t[i]);
    std::shared_ptr<Node> node;
    if (should_record({&pred, &target})) node = std::make_shared<L1Node>(pred, target);
    return make_result(Shape{1, 1, 1, 1}, {acc / double(p.size())}, std::move(node));
}

OptimState OptimState::zeros_like(const ParamStore& params) {
    OptimState s;
    for (const auto& e : params.entries()) {
        s.m.emplace_back(e.tensor.numel(), 0.0);
        s.v.emplace_back(e.tensor.numel(), 0.0);
    }
    return s;
}

void adamw_step(ParamStore& params, OptimState& state, const AdamWOptions& o, double lr) {
    auto& entries = params.entries();
    if (state.m.size() != entries.size() || state.v.size() != entries.size())
        throw std::invalid_argument("adamw_step: optimizer state does not match parameters");
    ++state.step;
    const double bc1 = 1.0 - std::pow(o.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(o.beta2, double(state.step));
    for (std::size_t k = 0; k < entries.size(); ++k) {
        Tensor& p = entries[k].tensor;
        auto x = p.mutable_data();
        auto& m = state.m[k];
        auto& v = state.v[k];
        if (m.size() != x.size()) throw std::invalid_argument("adamw_step: moment size mismatch for " + entries[k].name);
        const bool has = p.has_grad();
        const std::span<const double> g = has ? p.grad() : std::span<const double>{};
        const double decay = entries[k].decay ? lr * o.weight_decay : 0.0;
#pragma omp parallel for
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double gi = has ? g[i] : 0.0;
            m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * gi;
            v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * gi * gi;
            const double mh = m[i] / bc1;
            const double vh = v[i] / bc2;
            x[i] = x[i] - decay * x[i] - lr * mh / (std::sqrt(vh) + o.eps);
        }
    }
}

double cosine_lr(std::uint64_t step, std::uint64_t total_steps, double lr0, double lr_min) {
    if (total_steps == 0) throw std::invalid_argument("cosine_lr: total_steps must be at least 1");
    if (step > total_steps)
        throw std::invalid_argument("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                                    std::to_string(total_steps) + "]");
    const double phase = std::numbers::pi * double(step) / double(total_steps);
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(phase));
}

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
    if (!(optim.lr > 0.0)) throw std::invalid_argument("lr must be positive");
    if (!(lr_min >= 0.0 && lr_min <= optim.lr)) throw std::invalid_argument("lr_min must lie in [0, lr]");
    if (!(optim.weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be non-negative");
}

std::size_t TrainConfig::steps_per_epoch(std::size_t train_size) const {
    return (train_size + batch_size - 1) / batch_size;
}

std::string epoch_log_header() { return "epoch\ttrain_l1\tval_psnr\tval_ssim\tlr"; }

std::string format_epoch_log(const EpochLog& e) {
    char lr[32];
    std::snprintf(lr, sizeof lr, "%.6e", e.lr);
    return std::to_string(e.epoch) + "\t" + format_metric(e.train_l1) + "\t" + format_metric(e.val_psnr) + "\t" +
           format_metric(e.val_ssim) + "\t" + lr;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t(0));
    Rng rng(seed, 0x5348554646ULL ^ epoch);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    return order;
}

TrainResult train_loop(Model& model, std::span<const Sample> train, std::span<const Sample> val,
                       const TrainConfig& cfg, std::ostream* log) {
    cfg.validate();
    if (train.empty()) throw std::invalid_argument("training set is empty");
    if (val.empty()) throw std::invalid_argument("validation set is empty");

    TrainResult result;
    result.optim = OptimState::zeros_like(model.params);
    const std::size_t per_epoch = cfg.steps_per_epoch(train.size());
    const std::uint64_t total = std::uint64_t(per_epoch) * cfg.epochs;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto order = epoch_order(train.size(), cfg.seed, epoch);
        double loss_sum = 0.0;
        double lr = 0.0;
        for (std::size_t b = 0; b < per_epoch; ++b) {
            const std::size_t lo = b * cfg.batch_size;
            const std::size_t hi = std::min(lo + cfg.batch_size, train.size());
            const Batch batch = make_batch(train, std::span(order).subspan(lo, hi - lo));

            model.params.zero_grad();
            const Tensor pred = pmaa_forward(batch.cloudy, model.params, model.config).final;
            const Tensor loss = l1_loss(pred, batch.target);
            const double value = loss.item();
            if (!std::isfinite(value))
                throw NonFiniteLoss("non-finite loss " + std::to_string(value) + " at epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(b + 1));
            loss.backward();
            lr = cosine_lr(result.optim.step, total, cfg.optim.lr, cfg.lr_min);
            adamw_step(model.params, result.optim, cfg.optim, lr);
            result.step_losses.push_back(value);
            loss_sum += value;
        }

        const MetricsReport report = evaluate_dataset(model, val);
        EpochLog e;
        e.epoch = epoch;
        e.train_l1 = loss_sum / double(per_epoch);
        e.val_psnr = report.mean_psnr;
        e.val_ssim = report.mean_ssim;
        e.lr = lr;
        e.improved = result.epochs.empty() || report.mean_ssim > result.best_ssim;
        if (e.improved) {
            result.best_ssim = report.mean_ssim;
            result.best_epoch = epoch;
            if (!cfg.checkpoint.empty())
                save_checkpoint(cfg.checkpoint, model, &result.optim, std::uint32_t(epoch), result.best_ssim);
        }
        result.epochs.push_back(e);
        if (log) *log << format_epoch_log(e) << "\n" << std::flush;
    }
    return result;
}

}  // namespace pmaa
