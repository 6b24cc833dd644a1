// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset. Exit status is 0 only if every selected criterion
// passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../test_util.hpp"
#include "pmaa/checkpoint.hpp"
#include "pmaa/cli.hpp"
#include "pmaa/cost.hpp"
#include "pmaa/data.hpp"
#include "pmaa/gradcheck.hpp"
#include "pmaa/metrics.hpp"
#include "pmaa/model.hpp"
#include "pmaa/ops.hpp"
#include "pmaa/train.hpp"

using namespace pmaa;
using test::random_tensor;
namespace fs = std::filesystem;

namespace {

// Tolerances and targets.
constexpr double kPrimitiveGradTol = 1e-4;
constexpr double kModelGradTol = 1e-3;
constexpr std::size_t kModelGradCoords = 16;
constexpr std::size_t kOverfitSteps = 500;
constexpr double kOverfitL1 = 0.05;
constexpr double kOverfitPsnr = 25.0;
constexpr double kParamsLow = 1.7e6;
constexpr double kParamsHigh = 6.9e6;
constexpr double kReferenceParamsM = 3.44;
constexpr double kReferenceMacsG = 91.94;
constexpr double kSsimSelfTol = 1e-9;
constexpr double kSsimOracleTol = 1e-6;
constexpr double kPsnrTol = 1e-6;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool same_values(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

ModelConfig tiny(std::size_t C, std::size_t N, std::size_t T, std::size_t hw) {
    ModelConfig c;
    c.hidden_channels = C;
    c.downsamples = N;
    c.stages = T;
    c.attention_kernel = 5;
    c.patch_size = 2;
    c.height = c.width = hw;
    return c;
}

std::vector<Tensor> images(const ModelConfig& c, std::size_t n, std::uint64_t seed) {
    std::vector<Tensor> x;
    for (std::size_t i = 0; i < c.num_images; ++i)
        x.push_back(random_tensor({n, c.in_channels_per_image, c.height, c.width}, seed + i));
    return x;
}

// ---------------------------------------------------------------- 1

Outcome gradient_per_primitive() {
    const Shape s{2, 4, 8, 8};
    const FiniteDiffOptions opts{1e-5, 64, 7};
    Tensor x = random_tensor(s, 1), y = random_tensor(s, 2), z = random_tensor(s, 3);
    Tensor w = random_tensor({6, 2, 3, 3}, 4), b = random_tensor({6, 1, 1, 1}, 5);
    Tensor dw = random_tensor({4, 1, 11, 11}, 6);
    Tensor gamma = random_tensor({4, 1, 1, 1}, 7, 0.5, 1.5), beta = random_tensor({4, 1, 1, 1}, 8);
    Tensor alpha = Tensor::scalar(0.7);
    Tensor shifted = Tensor::from_data(s, test::values(x));
    for (double& v : shifted.mutable_data())
        if (std::abs(v) < 1e-2) v += v < 0 ? -2e-2 : 2e-2;
    const auto conv = Conv2dOptions::same(3, 1, 2);
    const auto depthwise = Conv2dOptions::same(11, 1, 4);

    using Fn = std::function<Tensor(const Tensor&)>;
    const std::vector<std::tuple<std::string, Fn, Tensor>> cases = {
        {"conv2d.input", [&](const Tensor& t) { return conv2d(t, w, b, conv); }, x},
        {"conv2d.weight", [&](const Tensor& t) { return conv2d(x, t, b, conv); }, w},
        {"conv2d.bias", [&](const Tensor& t) { return conv2d(x, w, t, conv); }, b},
        {"depthwise11.input", [&](const Tensor& t) { return conv2d(t, dw, Tensor(), depthwise); }, x},
        {"depthwise11.weight", [&](const Tensor& t) { return conv2d(x, t, Tensor(), depthwise); }, dw},
        {"instance_norm.input", [&](const Tensor& t) { return instance_norm2d(t, gamma, beta); }, x},
        {"instance_norm.gamma", [&](const Tensor& t) { return instance_norm2d(x, t, beta); }, gamma},
        {"instance_norm.beta", [&](const Tensor& t) { return instance_norm2d(x, gamma, t); }, beta},
        {"avg_pool", [](const Tensor& t) { return adaptive_avg_pool2d(t, 3, 2); }, x},
        {"upsample", [](const Tensor& t) { return upsample_nearest(t, 2); }, x},
        {"add", [&](const Tensor& t) { return add(t, y); }, x},
        {"sub", [&](const Tensor& t) { return sub(y, t); }, x},
        {"mul", [&](const Tensor& t) { return mul(t, y); }, x},
        {"scale.input", [&](const Tensor& t) { return scale(t, alpha); }, x},
        {"scale.alpha", [&](const Tensor& t) { return scale(x, t); }, alpha},
        {"relu", [](const Tensor& t) { return relu(t); }, shifted},
        {"sigmoid", [](const Tensor& t) { return sigmoid(t); }, x},
        {"tanh", [](const Tensor& t) { return tanh(t); }, x},
        {"concat", [&](const Tensor& t) { return concat_channels({y, t}); }, x},
        {"slice", [](const Tensor& t) { return slice_channels(t, 1, 2); }, x},
        {"sum", [](const Tensor& t) { return sum(t); }, x},
        {"mean", [](const Tensor& t) { return mean(t); }, x},
        {"attention.q", [&](const Tensor& t) { return patch_attention(t, y, z, 4); }, x},
        {"attention.k", [&](const Tensor& t) { return patch_attention(y, t, z, 4); }, x},
        {"attention.v", [&](const Tensor& t) { return patch_attention(y, z, t, 4); }, x},
        {"l1_loss", [&](const Tensor& t) { return l1_loss(t, y); }, x},
    };
    double worst = 0.0;
    std::string worst_name;
    for (const auto& [name, f, input] : cases) {
        const double e = finite_diff_check(f, input, opts);
        if (!(e <= worst)) {
            worst = e;
            worst_name = name;
        }
    }
    return {worst < kPrimitiveGradTol, std::to_string(cases.size()) + " primitives, max rel err " +
                                           fmt("%.2e", worst) + " (" + worst_name + ")"};
}

// ---------------------------------------------------------------- 2

Outcome gradient_end_to_end() {
    ModelConfig c = tiny(8, 2, 2, 32);
    Model m = build_model(c, 3);
    auto x = images(c, 1, 38);
    Tensor r = random_tensor({1, 4, 32, 32}, 39);
    auto loss = [&] { return mean(mul(pmaa_forward(x, m.params, c).final, r)); };
    Rng rng(40);
    std::vector<Coordinate> coords;
    const auto& entries = m.params.entries();
    while (coords.size() < kModelGradCoords) {
        const auto& e = entries[rng.below(entries.size())];
        coords.push_back({e.tensor, std::size_t(rng.below(e.tensor.numel()))});
    }
    const auto result = check_coordinates(loss, coords);
    return {result.max_rel_error < kModelGradTol,
            std::to_string(coords.size()) + " parameters, max rel err " + fmt("%.2e", result.max_rel_error)};
}

// ---------------------------------------------------------------- 3

Outcome overfit() {
    test::TempDir dir("accept3");
    SynthOptions o;
    o.root = dir.path();
    o.count = 4;
    o.size = 64;
    o.coverage = 0.3;
    o.seed = 7;
    const auto data = load_dataset(synth_generate(o), o.pixel_max);

    ModelConfig c = tiny(16, 3, 2, 64);
    c.attention_kernel = ModelConfig{}.attention_kernel;
    c.patch_size = ModelConfig{}.patch_size;
    Model m = build_model(c, 7);
    TrainConfig t;
    t.batch_size = 4;
    t.epochs = kOverfitSteps;
    t.seed = 7;
    train_loop(m, data, data, t, nullptr);

    double l1 = 0.0;
    {
        NoGradGuard no_grad;
        for (const auto& s : data) l1 += l1_loss(pmaa_forward(s.cloudy, m.params, m.config).final, s.target).item();
    }
    l1 /= double(data.size());
    const auto report = evaluate_dataset(m, data);
    return {l1 < kOverfitL1 && report.mean_psnr > kOverfitPsnr,
            std::to_string(kOverfitSteps) + " steps, train L1 " + fmt("%.4f", l1) + ", PSNR " +
                fmt("%.2f", report.mean_psnr) + " dB, SSIM " + fmt("%.4f", report.mean_ssim)};
}

// ---------------------------------------------------------------- 4

Outcome mac_oracle() {
    std::vector<ModelConfig> configs;
    configs.push_back(tiny(4, 1, 1, 16));
    ModelConfig b = tiny(6, 2, 2, 16);
    b.fusion = FusionMode::Concat;
    b.attention = AttentionMode::Patch;
    configs.push_back(b);
    ModelConfig c = tiny(5, 3, 2, 16);
    c.lim = false;
    c.selective_attention = false;
    c.ffn_expansion = 1.5;
    c.width = 32;
    configs.push_back(c);
    bool pass = true;
    std::string detail;
    for (const auto& cfg : configs) {
        const Model m = build_model(cfg, 0);
        const auto analytic = count_macs(cfg, cfg.height, cfg.width).total_macs();
        const auto counted = instrumented_macs(m, cfg.height, cfg.width);
        pass = pass && analytic == counted;
        detail += (detail.empty() ? "" : ", ") + std::to_string(analytic) + "/" + std::to_string(counted);
    }
    return {pass, "analytic/instrumented " + detail};
}

// ---------------------------------------------------------------- 5

Outcome param_consistency() {
    test::TempDir dir("accept5");
    const ModelConfig full;
    bool totals_match = true;
    auto params_of = [&](const ModelConfig& cfg) {
        const Model m = build_model(cfg, 0);
        const auto counted = count_params(m.params).total_params();
        const fs::path p = dir.path() / "m.ckpt";
        save_checkpoint(p, m, nullptr, 0, 0.0);
        totals_match = totals_match && read_checkpoint(p).parameter_scalars() == counted;
        return counted;
    };
    ModelConfig no_lim = full, no_tf = full, no_sel = full;
    no_lim.lim = false;
    no_tf.attention = AttentionMode::Off;
    no_sel.selective_attention = false;
    const auto p_full = params_of(full);
    const auto p_lim = params_of(no_lim), p_tf = params_of(no_tf), p_sel = params_of(no_sel);
    ModelConfig concat = full, patch = full, bare = full;
    concat.fusion = FusionMode::Concat;
    patch.attention = AttentionMode::Patch;
    bare.fusion = FusionMode::None;
    params_of(concat);
    params_of(patch);
    params_of(bare);
    const bool signs = p_full > p_lim && p_full > p_tf && p_full > p_sel;
    const auto d_sel = p_full - p_sel;
    const bool smallest = d_sel < p_full - p_lim && d_sel < p_full - p_tf;
    return {totals_match && signs && smallest,
            std::string("checkpoint totals ") + (totals_match ? "match" : "differ") + "; deltas lim " +
                std::to_string(p_full - p_lim) + ", transformer " + std::to_string(p_full - p_tf) +
                ", selective " + std::to_string(d_sel)};
}

// ---------------------------------------------------------------- 6

Outcome cost_calibration() {
    const ModelConfig c;
    const double params = double(count_params(build_model(c, 0).params).total_params());
    const double macs = double(count_macs(c, 256, 256).total_macs());
    return {params >= kParamsLow && params <= kParamsHigh,
            "params " + fmt("%.3f", params / 1e6) + " M (reference " + fmt("%.2f", kReferenceParamsM) +
                " M, band [1.7, 6.9]), MACs " + fmt("%.3f", macs / 1e9) + " G (reference " +
                fmt("%.2f", kReferenceMacsG) + " G)"};
}

// ---------------------------------------------------------------- 7

double brute_ssim(const Tensor& a, const Tensor& b, double range) {
    const Shape& s = a.shape();
    double w[11][11];
    double total = 0.0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) total += w[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / 4.5);
    const double c1 = std::pow(0.01 * range, 2), c2 = std::pow(0.03 * range, 2);
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < s.n * s.c; ++p)
        for (std::size_t y = 0; y + 11 <= s.h; ++y)
            for (std::size_t x = 0; x + 11 <= s.w; ++x) {
                double ma = 0, mb = 0, aa = 0, bb = 0, ab = 0;
                for (int i = 0; i < 11; ++i)
                    for (int j = 0; j < 11; ++j) {
                        const std::size_t k = p * s.plane() + (y + i) * s.w + x + j;
                        const double wt = w[i][j] / total, va = a.data()[k], vb = b.data()[k];
                        ma += wt * va;
                        mb += wt * vb;
                        aa += wt * va * va;
                        bb += wt * vb * vb;
                        ab += wt * va * vb;
                    }
                const double var_a = aa - ma * ma, var_b = bb - mb * mb, cov = ab - ma * mb;
                acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
                ++count;
            }
    return acc / double(count);
}

Outcome metric_oracles() {
    double self_err = 0.0, oracle_err = 0.0;
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        Tensor a = random_tensor({1, 4, 16, 16}, 100 + seed, 0.0, 1.0);
        Tensor b = random_tensor({1, 4, 16, 16}, 200 + seed, 0.0, 1.0);
        Tensor mixed = add(scale(a, 0.7), scale(b, 0.3));
        self_err = std::max(self_err, std::abs(ssim(a, a) - 1.0));
        oracle_err = std::max(oracle_err, std::abs(ssim(a, b) - brute_ssim(a, b, 1.0)));
        oracle_err = std::max(oracle_err, std::abs(ssim(a, mixed) - brute_ssim(a, mixed, 1.0)));
    }
    const Shape s{1, 1, 4, 4};
    const double p20 = psnr(Tensor::zeros(s), Tensor::full(s, 0.1), 1.0);
    const double p255 = psnr(Tensor::zeros(s), Tensor::full(s, 1.0), 255.0);
    const double psnr_err = std::max(std::abs(p20 - 20.0), std::abs(p255 - 10.0 * std::log10(255.0 * 255.0)));
    const bool rounded = std::abs(p255 - 48.1308) < 5e-5;
    return {self_err < kSsimSelfTol && oracle_err < kSsimOracleTol && psnr_err < kPsnrTol && rounded,
            "ssim self " + fmt("%.1e", self_err) + ", ssim vs brute force " + fmt("%.1e", oracle_err) +
                ", psnr " + fmt("%.6f", p20) + " / " + fmt("%.6f", p255) + " dB"};
}

// ---------------------------------------------------------------- 8

Outcome progressive_stages() {
    bool increasing = true;
    std::uint64_t prev = 0;
    std::string counts;
    for (std::size_t T = 1; T <= 5; ++T) {
        ModelConfig c;
        c.stages = T;
        const auto p = count_params(build_model(c, 0).params).total_params();
        increasing = increasing && p > prev;
        prev = p;
        counts += (counts.empty() ? "" : " < ") + std::to_string(p);
    }
    ModelConfig c = tiny(8, 2, 1, 32);
    Model m = build_model(c, 5);
    auto x = images(c, 2, 32);
    NoGradGuard no_grad;
    Tensor direct = autoencoder_forward(
        concat_channels({Tensor::zeros(x[0].shape()),
                         conv2d(bottleneck_concat(x, m.params), m.params.get("stage0.adapter.weight"),
                                m.params.get("stage0.adapter.bias"))}),
        m.params, 0, c);
    const bool identical = same_values(pmaa_forward(x, m.params, c).final, direct);
    return {increasing && identical,
            "params over T=1..5: " + counts + "; T=1 " + (identical ? "bit-identical" : "differs")};
}

// ---------------------------------------------------------------- 9

struct Cli {
    int code;
    std::string out;
};

Cli run_cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str() + err.str()};
}

std::string tree_bytes(const fs::path& root) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root));
    std::sort(files.begin(), files.end());
    std::string all;
    for (const auto& f : files) all += f.string() + '\n' + slurp(root / f);
    return all;
}

Outcome determinism() {
    test::TempDir dir("accept9");
    const fs::path d = dir.path();
    const auto synth = [&](const std::string& name, const std::string& split) {
        return run_cli({"synth", "--out", (d / name).string(), "--split", split, "--count", "3", "--size", "32",
                        "--seed", "11"})
            .code;
    };
    if (synth("a", "train") || synth("b", "train") || synth("a", "test"))
        return {false, "synth failed"};
    const bool synth_same = tree_bytes(d / "b" / "train") == tree_bytes(d / "a" / "train") &&
                            slurp(d / "a" / "train.manifest") == slurp(d / "b" / "train.manifest");

    std::ofstream(d / "tiny.cfg") << "hidden_channels=4\ndownsamples=2\nstages=2\nattention_kernel=3\n";
    const auto train = [&](const std::string& ckpt) {
        return run_cli({"train", "--data", (d / "a").string(), "--config", (d / "tiny.cfg").string(), "--out",
                        (d / ckpt).string(), "--epochs", "3", "--batch", "2", "--seed", "13"});
    };
    const Cli t1 = train("one.ckpt"), t2 = train("two.ckpt");
    if (t1.code || t2.code) return {false, "train failed: " + t1.out};
    const bool logs_same = slurp(d / "one.ckpt.log") == slurp(d / "two.ckpt.log") &&
                           !slurp(d / "one.ckpt.log").empty();

    const std::vector<std::string> eval = {"eval", "--ckpt", (d / "one.ckpt").string(), "--data",
                                           (d / "a").string()};
    const Cli e1 = run_cli(eval), e2 = run_cli(eval);
    const bool eval_same = e1.code == 0 && e1.out == e2.out;
    auto word = [](bool ok) { return ok ? "identical" : "differ"; };
    return {synth_same && logs_same && eval_same, std::string("synth files ") + word(synth_same) + ", epoch logs " +
                                                      word(logs_same) + ", eval reports " + word(eval_same)};
}

// ---------------------------------------------------------------- 10

Outcome inertness() {
    bool all_same = true;
    std::string detail;
    for (auto mode : {AttentionMode::NonPatch, AttentionMode::Patch}) {
        ModelConfig on = tiny(8, 2, 2, 32);
        on.attention = mode;
        on.selective_attention = false;
        ModelConfig off = on;
        off.attention = AttentionMode::Off;
        Model a = build_model(on, 11);
        const Model b = build_model(off, 11);
        for (std::size_t t = 0; t < on.stages; ++t) {
            a.params.get(stage_prefix(t) + ".transformer.alpha").mutable_data()[0] = 0.0;
            a.params.get(stage_prefix(t) + ".transformer.beta").mutable_data()[0] = 0.0;
        }
        const auto x = images(on, 2, 35);
        NoGradGuard no_grad;
        const bool same = same_values(pmaa_forward(x, a.params, on).final, pmaa_forward(x, b.params, off).final);
        all_same = all_same && same;
        detail += (detail.empty() ? "" : ", ") + to_string(mode) + (same ? " bit-identical" : " differs");
    }
    return {all_same, "alpha=beta=0 vs attention off: " + detail};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient per primitive", gradient_per_primitive},
        {"gradient end to end", gradient_end_to_end},
        {"overfit sanity", overfit},
        {"MAC counter oracle", mac_oracle},
        {"param counter consistency", param_consistency},
        {"cost calibration", cost_calibration},
        {"metric oracles", metric_oracles},
        {"progressive stages", progressive_stages},
        {"determinism", determinism},
        {"inertness", inertness},
    };
    std::set<std::size_t> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::stoul(argv[i]));

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!selected.empty() && !selected.count(i + 1)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("criterion %2zu %s  %s: %s [%.1fs]\n", i + 1, o.pass ? "PASS" : "FAIL",
                    criteria[i].first.c_str(), o.detail.c_str(), secs);
        std::fflush(stdout);
        failures += o.pass ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
