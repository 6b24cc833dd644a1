#include "pmaa/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "pmaa/checkpoint.hpp"
#include "pmaa/config.hpp"
#include "pmaa/cost.hpp"
#include "pmaa/data.hpp"
#include "pmaa/metrics.hpp"
#include "pmaa/train.hpp"

namespace pmaa::cli {

namespace fs = std::filesystem;

namespace {

/// Writes everything to two streams.
class TeeBuf : public std::streambuf {
public:
    TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

protected:
    int overflow(int c) override {
        if (c == EOF) return !EOF;
        const bool ok = a_->sputc(char(c)) != EOF && b_->sputc(char(c)) != EOF;
        return ok ? c : EOF;
    }
    int sync() override { return (a_->pubsync() == 0 && b_->pubsync() == 0) ? 0 : -1; }

private:
    std::streambuf* a_;
    std::streambuf* b_;
};

struct Settings {
    ModelConfig model;
    TrainConfig train;
    bool seed_given = false;
};

std::uint64_t env_seed() {
    const char* v = std::getenv("PMAA_SEED");
    if (!v || !*v) return 0;
    TrainConfig probe;
    try {
        set_train_option(probe, "seed", v);
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("PMAA_SEED: ") + e.what());
    }
    return probe.seed;
}

void apply(Settings& s, const std::string& key, const std::string& value, const std::string& where) {
    try {
        if (set_model_option(s.model, key, value)) return;
        if (set_train_option(s.train, key, value)) {
            if (key == "seed") s.seed_given = true;
            return;
        }
    } catch (const std::invalid_argument& e) {
        throw UsageError(where + ": " + e.what());
    }
    throw UsageError(where + ": unknown key '" + key + "'");
}

/// Defaults, then the config file, then --set overrides.
Settings resolve(const std::string& config_file, const std::vector<std::string>& sets) {
    Settings s;
    if (!config_file.empty()) {
        KeyValues kv;
        try {
            kv = read_key_values(config_file);
        } catch (const std::exception& e) {
            throw UsageError(e.what());
        }
        for (const auto& [k, v] : kv) apply(s, k, v, config_file);
    }
    for (const auto& item : sets) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + item + "'");
        apply(s, item.substr(0, eq), item.substr(eq + 1), "--set");
    }
    return s;
}

void finish_seed(Settings& s, const std::optional<std::uint64_t>& flag) {
    if (flag) s.train.seed = *flag;
    else if (!s.seed_given) s.train.seed = env_seed();
}

void validate_model(ModelConfig& m) {
    try {
        m.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("invalid model config: ") + e.what());
    }
}

void echo(std::ostream& out, const std::string& command, const std::vector<std::pair<std::string, std::string>>& extra,
          const std::string& body) {
    out << "# resolved config\n";
    out << "command=" << command << "\n";
    for (const auto& [k, v] : extra) out << k << "=" << v << "\n";
    std::istringstream lines(body);
    std::string line;
    while (std::getline(lines, line)) out << line << "\n";
    out << "# end config\n";
}

std::string num(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::vector<Sample> load_split(const fs::path& root, const std::string& split, double pixel_max, bool required) {
    const fs::path m = manifest_path(root, split);
    if (!fs::exists(m)) {
        if (required) throw UsageError("no " + split + " split: " + m.string() + " does not exist");
        return {};
    }
    auto samples = load_dataset(m, pixel_max);
    if (samples.empty() && required) throw UsageError(split + " split is empty: " + m.string());
    return samples;
}

void adopt_resolution(ModelConfig& m, const std::vector<Sample>& samples) {
    const Shape s = samples.front().target.shape();
    m.height = s.h;
    m.width = s.w;
    m.in_channels_per_image = s.c;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
    std::string out;
    std::string split = "train";
    std::size_t count = 8;
    std::size_t size = 64;
    double coverage = 0.3;
    std::optional<std::uint64_t> seed;
    double pixel_max = 10000.0;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
    SynthOptions o;
    o.root = a.out;
    o.split = a.split;
    o.count = a.count;
    o.size = a.size;
    o.coverage = a.coverage;
    o.seed = a.seed ? *a.seed : env_seed();
    o.pixel_max = a.pixel_max;
    if (o.size == 0 || o.size % 16 != 0) throw UsageError("--size must be a positive multiple of 16");
    if (o.count == 0) throw UsageError("--count must be at least 1");
    echo(out, "synth",
         {{"out", a.out}, {"split", o.split}, {"count", std::to_string(o.count)}, {"size", std::to_string(o.size)},
          {"coverage", num(o.coverage)}, {"seed", std::to_string(o.seed)}, {"pixel_max", num(o.pixel_max)}},
         "");
    const fs::path m = synth_generate(o);
    out << "manifest\t" << m.string() << "\n";
    return kSuccess;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string data;
    std::string config;
    std::string out;
    std::string log;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> batch;
    std::optional<std::uint64_t> seed;
    double pixel_max = 10000.0;
    std::vector<std::string> sets;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
    Settings s = resolve(a.config, a.sets);
    if (a.epochs) s.train.epochs = *a.epochs;
    if (a.batch) s.train.batch_size = *a.batch;
    finish_seed(s, a.seed);
    try {
        s.train.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("invalid training config: ") + e.what());
    }
    const auto train = load_split(a.data, "train", a.pixel_max, true);
    auto val = load_split(a.data, "val", a.pixel_max, false);
    const bool own_val = !val.empty();
    if (!own_val) val = train;
    adopt_resolution(s.model, train);
    validate_model(s.model);

    const fs::path log_path = a.log.empty() ? fs::path(a.out + ".log") : fs::path(a.log);
    s.train.checkpoint = a.out;
    echo(out, "train",
         {{"data", a.data}, {"out", a.out}, {"log", log_path.string()}, {"pixel_max", num(a.pixel_max)},
          {"train_samples", std::to_string(train.size())}, {"val_split", own_val ? "val" : "train"}},
         format_model_config(s.model) + format_train_config(s.train));

    if (log_path.has_parent_path()) fs::create_directories(log_path.parent_path());
    std::ofstream log_file(log_path, std::ios::trunc);
    if (!log_file) throw std::runtime_error("cannot write " + log_path.string());
    TeeBuf tee(out.rdbuf(), log_file.rdbuf());
    std::ostream both(&tee);

    Model model = build_model(s.model, s.train.seed);
    out << epoch_log_header() << "\n";
    try {
        const TrainResult r = train_loop(model, train, val, s.train, &both);
        out << "best_epoch\t" << r.best_epoch << "\n";
        out << "best_val_ssim\t" << format_metric(r.best_ssim) << "\n";
    } catch (const NonFiniteLoss& e) {
        both.flush();
        err << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    return kSuccess;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    std::string ckpt;
    std::string data;
    std::string split = "test";
    std::string config;
    double pixel_max = 10000.0;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    std::optional<ModelConfig> configured;
    if (!a.config.empty()) {
        Settings s = resolve(a.config, {});
        configured = s.model;
    }
    const auto samples = load_split(a.data, a.split, a.pixel_max, true);
    const Checkpoint ck = read_checkpoint(a.ckpt);
    ModelConfig cfg = configured ? *configured : model_config_from_text(ck.config_text);
    adopt_resolution(cfg, samples);
    validate_model(cfg);
    Model model = build_model(cfg, 0);
    restore_parameters(ck, model);
    echo(out, "eval",
         {{"ckpt", a.ckpt}, {"data", a.data}, {"split", a.split}, {"pixel_max", num(a.pixel_max)},
          {"ckpt_epoch", std::to_string(ck.epoch)}},
         format_model_config(cfg));
    out << evaluate_dataset(model, samples).to_tsv();
    return kSuccess;
}

// ---------------------------------------------------------------- count

struct CountArgs {
    std::string config;
    std::string hw = "256,256";
    std::string format = "table";
    std::vector<std::string> sets;
};

std::pair<std::size_t, std::size_t> parse_hw(const std::string& hw) {
    const auto comma = hw.find(',');
    ModelConfig probe;
    try {
        if (comma == std::string::npos) throw std::invalid_argument("missing comma");
        set_model_option(probe, "height", hw.substr(0, comma));
        set_model_option(probe, "width", hw.substr(comma + 1));
    } catch (const std::invalid_argument&) {
        throw UsageError("--hw expects H,W, got '" + hw + "'");
    }
    if (probe.height == 0 || probe.width == 0) throw UsageError("--hw dimensions must be positive");
    return {probe.height, probe.width};
}

int cmd_count(const CountArgs& a, std::ostream& out) {
    Settings s = resolve(a.config, a.sets);
    const auto [h, w] = parse_hw(a.hw);
    s.model.height = h;
    s.model.width = w;
    validate_model(s.model);
    echo(out, "count", {{"hw", std::to_string(h) + "," + std::to_string(w)}}, format_model_config(s.model));
    const Model m = build_model(s.model, 0);
    const CostReport r = cost_report(m, h, w);
    if (a.format == "tsv") {
        out << r.to_tsv();
        out << "reference.params_m\t" << kReferenceParamsM << "\n";
        out << "reference.macs_g\t" << kReferenceMacsG << "\n";
    } else {
        out << r.to_table();
        std::ostringstream ref;
        ref.setf(std::ios::fixed);
        ref.precision(2);
        ref << "reference (256x256)  params " << kReferenceParamsM << " M  macs " << kReferenceMacsG << " G\n";
        ref << "measured             params " << double(r.total_params()) / 1e6 << " M  macs "
            << double(r.total_macs()) / 1e9 << " G\n";
        out << ref.str();
    }
    return kSuccess;
}

// ---------------------------------------------------------------- ablate

struct AblateArgs {
    std::string data;
    std::string grid;
    std::string config;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> batch;
    std::optional<std::uint64_t> seed;
    double pixel_max = 10000.0;
    std::vector<std::string> sets;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out, std::ostream& err) {
    Settings base = resolve(a.config, a.sets);
    if (a.epochs) base.train.epochs = *a.epochs;
    if (a.batch) base.train.batch_size = *a.batch;
    finish_seed(base, a.seed);
    try {
        base.train.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("invalid training config: ") + e.what());
    }

    std::vector<KeyValues> grid;
    {
        std::ifstream in(a.grid);
        if (!in) throw UsageError("cannot open grid " + a.grid);
        std::ostringstream text;
        text << in.rdbuf();
        try {
            grid = parse_grid(text.str());
        } catch (const ParseError& e) {
            throw UsageError(a.grid + ": " + e.what());
        }
    }
    if (grid.empty()) throw UsageError("grid " + a.grid + " has no rows");

    const auto train = load_split(a.data, "train", a.pixel_max, true);
    auto val = load_split(a.data, "val", a.pixel_max, false);
    const bool own_val = !val.empty();
    if (!own_val) val = train;
    adopt_resolution(base.model, train);

    std::vector<ModelConfig> rows;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        ModelConfig m = base.model;
        for (const auto& [k, v] : grid[i]) {
            try {
                if (!set_model_option(m, k, v)) throw std::invalid_argument("unknown key '" + k + "'");
            } catch (const std::invalid_argument& e) {
                throw UsageError(a.grid + " row " + std::to_string(i + 1) + ": " + e.what());
            }
        }
        validate_model(m);
        rows.push_back(m);
    }

    echo(out, "ablate",
         {{"data", a.data}, {"grid", a.grid}, {"rows", std::to_string(rows.size())}, {"pixel_max", num(a.pixel_max)},
          {"val_split", own_val ? "val" : "train"}},
         format_model_config(base.model) + format_train_config(base.train));

    out << "fusion\tattention\tselective_attention\tlim\tpsnr\tssim\tparams\tmacs\n";
    for (const ModelConfig& m : rows) {
        Model model = build_model(m, base.train.seed);
        TrainResult r;
        try {
            r = train_loop(model, train, val, base.train);
        } catch (const NonFiniteLoss& e) {
            err << "error: " << e.what() << "\n";
            return kRuntimeError;
        }
        const EpochLog& best = r.epochs.at(r.best_epoch - 1);
        out << to_string(m.fusion) << "\t" << to_string(m.attention) << "\t"
            << (m.selective_attention ? "true" : "false") << "\t" << (m.lim ? "true" : "false") << "\t"
            << format_metric(best.val_psnr) << "\t" << format_metric(best.val_ssim) << "\t"
            << model.params.total_scalars() << "\t" << count_macs(m, m.height, m.width).total_macs() << "\n"
            << std::flush;
    }
    return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Cloud removal from a stack of cloudy images", "pmaa"};
    app.require_subcommand(1);

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "Generate a deterministic synthetic dataset split");
    synth->add_option("--out", sa.out, "Dataset root directory")->required();
    synth->add_option("--split", sa.split, "Split name")->capture_default_str();
    synth->add_option("--count", sa.count, "Number of samples")->capture_default_str();
    synth->add_option("--size", sa.size, "Image side length, a multiple of 16")->capture_default_str();
    synth->add_option("--coverage", sa.coverage, "Cloud coverage fraction")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    synth->add_option("--seed", sa.seed, "Generator seed (falls back to PMAA_SEED)");
    synth->add_option("--pixel-max", sa.pixel_max, "Raw pixel range")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "Train a model and keep the best-SSIM checkpoint");
    train->add_option("--data", ta.data, "Dataset root with train (and optional val) manifests")->required();
    train->add_option("--config", ta.config, "key=value config file")->check(CLI::ExistingFile);
    train->add_option("--out", ta.out, "Checkpoint path")->required();
    train->add_option("--log", ta.log, "Epoch log path (default <out>.log)");
    train->add_option("--epochs", ta.epochs, "Epoch count");
    train->add_option("--batch", ta.batch, "Batch size");
    train->add_option("--seed", ta.seed, "Seed for initialization and shuffling");
    train->add_option("--pixel-max", ta.pixel_max, "Raw pixel range")->check(CLI::PositiveNumber)->capture_default_str();
    train->add_option("--set", ta.sets, "Config override key=value (repeatable)");

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "Score a checkpoint on a dataset split");
    eval->add_option("--ckpt", ea.ckpt, "Checkpoint path")->required();
    eval->add_option("--data", ea.data, "Dataset root")->required();
    eval->add_option("--split", ea.split, "Split to evaluate")->capture_default_str();
    eval->add_option("--config", ea.config, "Model config file overriding the stored one")->check(CLI::ExistingFile);
    eval->add_option("--pixel-max", ea.pixel_max, "Raw pixel range")->check(CLI::PositiveNumber)->capture_default_str();

    CountArgs ca;
    auto* count = app.add_subcommand("count", "Report parameter and MAC counts");
    count->add_option("--config", ca.config, "key=value config file")->check(CLI::ExistingFile);
    count->add_option("--hw", ca.hw, "Input size H,W")->capture_default_str();
    count->add_option("--format", ca.format, "table or tsv")
        ->check(CLI::IsMember({"table", "tsv"}))
        ->capture_default_str();
    count->add_option("--set", ca.sets, "Config override key=value (repeatable)");

    AblateArgs aa;
    auto* ablate = app.add_subcommand("ablate", "Train and score every row of an ablation grid");
    ablate->add_option("--data", aa.data, "Dataset root")->required();
    ablate->add_option("--grid", aa.grid, "Grid file, one row of key=value toggles per line")->required();
    ablate->add_option("--config", aa.config, "Base key=value config file")->check(CLI::ExistingFile);
    ablate->add_option("--epochs", aa.epochs, "Epoch count per row");
    ablate->add_option("--batch", aa.batch, "Batch size");
    ablate->add_option("--seed", aa.seed, "Seed shared by every row");
    ablate->add_option("--pixel-max", aa.pixel_max, "Raw pixel range")->check(CLI::PositiveNumber)->capture_default_str();
    ablate->add_option("--set", aa.sets, "Base config override key=value (repeatable)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e, out, err);
        err << "error: " << e.what() << "\n";
        return kUsageError;
    }

    try {
        if (synth->parsed()) return cmd_synth(sa, out);
        if (train->parsed()) return cmd_train(ta, out, err);
        if (eval->parsed()) return cmd_eval(ea, out);
        if (count->parsed()) return cmd_count(ca, out);
        if (ablate->parsed()) return cmd_ablate(aa, out, err);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    return kUsageError;
}

}  // namespace pmaa::cli
