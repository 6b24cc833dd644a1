#include "pmaa/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pmaa/data.hpp"

namespace pmaa {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
    throw std::invalid_argument("invalid value '" + value + "' for " + key + " (expected " + expected + ")");
}

std::size_t to_size(const std::string& key, const std::string& value) {
    std::size_t out = 0;
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end || value.empty()) bad_value(key, value, "a non-negative integer");
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
    std::uint64_t out = 0;
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end || value.empty()) bad_value(key, value, "a non-negative integer");
    return out;
}

double to_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) bad_value(key, value, "a number");
        return v;
    } catch (const std::logic_error&) {
        bad_value(key, value, "a number");
    }
}

bool to_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "on" || value == "1") return true;
    if (value == "false" || value == "off" || value == "0") return false;
    bad_value(key, value, "true/false");
}

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

const char* flag(bool b) { return b ? "true" : "false"; }

}  // namespace

KeyValues parse_key_values(const std::string& text) {
    KeyValues out;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ParseError("config line " + std::to_string(line_no) + ": expected key=value", line_no);
        std::string key = trim(t.substr(0, eq));
        if (key.empty()) throw ParseError("config line " + std::to_string(line_no) + ": empty key", line_no);
        out.emplace_back(std::move(key), trim(t.substr(eq + 1)));
    }
    return out;
}

std::vector<KeyValues> parse_grid(const std::string& text) {
    std::vector<KeyValues> rows;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        KeyValues row;
        std::istringstream tokens(t);
        std::string tok;
        while (tokens >> tok) {
            const auto eq = tok.find('=');
            if (eq == std::string::npos || eq == 0 || eq + 1 == tok.size())
                throw ParseError("grid line " + std::to_string(line_no) + ": expected key=value, found '" + tok + "'",
                                 line_no);
            row.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

KeyValues read_key_values(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_key_values(ss.str());
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.position());
    }
}

bool set_model_option(ModelConfig& c, const std::string& key, const std::string& value) {
    if (key == "in_channels_per_image") c.in_channels_per_image = to_size(key, value);
    else if (key == "num_images") c.num_images = to_size(key, value);
    else if (key == "hidden_channels") c.hidden_channels = to_size(key, value);
    else if (key == "downsamples") c.downsamples = to_size(key, value);
    else if (key == "attention_kernel") c.attention_kernel = to_size(key, value);
    else if (key == "ffn_expansion") c.ffn_expansion = to_double(key, value);
    else if (key == "stages") c.stages = to_size(key, value);
    else if (key == "bottleneck_channels") c.bottleneck_channels = to_size(key, value);
    else if (key == "fusion") c.fusion = parse_fusion_mode(value);
    else if (key == "attention") c.attention = parse_attention_mode(value);
    else if (key == "selective_attention") c.selective_attention = to_bool(key, value);
    else if (key == "lim") c.lim = to_bool(key, value);
    else if (key == "patch_size") c.patch_size = to_size(key, value);
    else if (key == "height") c.height = to_size(key, value);
    else if (key == "width") c.width = to_size(key, value);
    else return false;
    return true;
}

bool set_train_option(TrainConfig& c, const std::string& key, const std::string& value) {
    if (key == "epochs") c.epochs = to_size(key, value);
    else if (key == "batch_size") c.batch_size = to_size(key, value);
    else if (key == "seed") c.seed = to_u64(key, value);
    else if (key == "lr") c.optim.lr = to_double(key, value);
    else if (key == "lr_min") c.lr_min = to_double(key, value);
    else if (key == "beta1") c.optim.beta1 = to_double(key, value);
    else if (key == "beta2") c.optim.beta2 = to_double(key, value);
    else if (key == "eps") c.optim.eps = to_double(key, value);
    else if (key == "weight_decay") c.optim.weight_decay = to_double(key, value);
    else return false;
    return true;
}

std::string format_model_config(const ModelConfig& c) {
    std::ostringstream os;
    os << "in_channels_per_image=" << c.in_channels_per_image << "\n"
       << "num_images=" << c.num_images << "\n"
       << "hidden_channels=" << c.hidden_channels << "\n"
       << "downsamples=" << c.downsamples << "\n"
       << "attention_kernel=" << c.attention_kernel << "\n"
       << "ffn_expansion=" << num(c.ffn_expansion) << "\n"
       << "stages=" << c.stages << "\n"
       << "bottleneck_channels=" << c.bottleneck_channels << "\n"
       << "fusion=" << to_string(c.fusion) << "\n"
       << "attention=" << to_string(c.attention) << "\n"
       << "selective_attention=" << flag(c.selective_attention) << "\n"
       << "lim=" << flag(c.lim) << "\n"
       << "patch_size=" << c.patch_size << "\n"
       << "height=" << c.height << "\n"
       << "width=" << c.width << "\n";
    return os.str();
}

std::string format_train_config(const TrainConfig& c) {
    std::ostringstream os;
    os << "epochs=" << c.epochs << "\n"
       << "batch_size=" << c.batch_size << "\n"
       << "seed=" << c.seed << "\n"
       << "lr=" << num(c.optim.lr) << "\n"
       << "lr_min=" << num(c.lr_min) << "\n"
       << "beta1=" << num(c.optim.beta1) << "\n"
       << "beta2=" << num(c.optim.beta2) << "\n"
       << "eps=" << num(c.optim.eps) << "\n"
       << "weight_decay=" << num(c.optim.weight_decay) << "\n";
    return os.str();
}

ModelConfig model_config_from_text(const std::string& text) {
    ModelConfig c;
    for (const auto& [k, v] : parse_key_values(text))
        if (!set_model_option(c, k, v)) throw std::invalid_argument("unknown model config key '" + k + "'");
    c.validate();
    return c;
}

}  // namespace pmaa
