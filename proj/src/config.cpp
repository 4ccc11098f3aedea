#include "prnet/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "prnet/ops.hpp"

namespace prnet::config {

namespace {

std::string trim(const std::string& s) {
    const std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
    std::int64_t out = 0;
    const char* first = value.data();
    const char* last = value.data() + value.size();
    const auto res = std::from_chars(first, last, out);
    if (res.ec != std::errc{} || res.ptr != last) {
        throw std::invalid_argument("config: key '" + key + "' needs an integer, got '" +
                                    value + "'");
    }
    return out;
}

double parse_real(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double out = std::stod(value, &used);
        if (used != value.size() || !std::isfinite(out)) throw std::invalid_argument("");
        return out;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: key '" + key + "' needs a finite real, got '" +
                                    value + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw std::invalid_argument("config: key '" + key + "' needs true|false, got '" + value +
                                "'");
}

std::string format_real(double v) {
    // Shortest representation that parses back to the same double, so echoed
    // configurations stay byte-stable across write/read cycles.
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

struct KeySpec {
    const char* name;
    const char* doc;
    std::function<void(RunConfig&, const std::string&)> apply;
    std::function<std::string(const RunConfig&)> format;
};

#define INT_KEY(key, field, doc_text)                                                        \
    KeySpec {                                                                                \
        key, doc_text,                                                                       \
            [](RunConfig& c, const std::string& v) { c.field = parse_int(key, v); },         \
            [](const RunConfig& c) { return std::to_string(c.field); }                       \
    }
#define REAL_KEY(key, field, doc_text)                                                       \
    KeySpec {                                                                                \
        key, doc_text,                                                                       \
            [](RunConfig& c, const std::string& v) { c.field = parse_real(key, v); },        \
            [](const RunConfig& c) { return format_real(c.field); }                          \
    }

const std::vector<KeySpec>& key_specs() {
    static const std::vector<KeySpec> specs = {
        INT_KEY("h", model.h, "grid height; 0 = taken from the series"),
        INT_KEY("w", model.w, "grid width; 0 = taken from the series"),
        INT_KEY("t_obs", model.t_obs, "observed steps per window"),
        INT_KEY("t_pred", model.t_pred, "predicted steps per window"),
        INT_KEY("channels", model.channels, "feature channels C"),
        INT_KEY("blocks", model.blocks, "encoder blocks M"),
        INT_KEY("periods", model.periods, "periodic segments P"),
        INT_KEY("l", model.l, "periodic interval in steps; 0 = 7*steps_per_day of the series"),
        INT_KEY("hp", model.hp, "pooled height H'"),
        INT_KEY("wp", model.wp, "pooled width W'"),
        INT_KEY("r_s", model.r_s, "spatial gate reduction ratio"),
        INT_KEY("r_c", model.r_c, "channel gate reduction ratio"),
        INT_KEY("k", model.k, "conv kernel size (odd)"),
        REAL_KEY("learning_rate", train.learning_rate, "Adam learning rate"),
        REAL_KEY("beta1", train.beta1, "Adam first-moment decay"),
        REAL_KEY("beta2", train.beta2, "Adam second-moment decay"),
        REAL_KEY("epsilon", train.epsilon, "Adam denominator offset"),
        INT_KEY("batch_size", train.batch_size, "windows per optimizer step"),
        INT_KEY("max_epochs", train.max_epochs, "epoch budget"),
        INT_KEY("patience", train.patience, "epochs without val improvement before stopping"),
        KeySpec{"loss_reduction", "sum|mean over loss elements",
                [](RunConfig& c, const std::string& v) {
                    c.train.loss_reduction = ops::reduction_from_name(v);
                },
                [](const RunConfig& c) {
                    return std::string(ops::reduction_name(c.train.loss_reduction));
                }},
        KeySpec{"seed", "RNG seed for init, shuffles, and splits",
                [](RunConfig& c, const std::string& v) {
                    c.train.seed = static_cast<std::uint64_t>(parse_int("seed", v));
                },
                [](const RunConfig& c) { return std::to_string(c.train.seed); }},
        REAL_KEY("divisor", scaling.divisor, "value scaling divisor"),
        REAL_KEY("test_frac", test_frac, "chronological tail fraction held out for testing"),
        REAL_KEY("val_frac", val_frac, "fraction of windows used for validation"),
        INT_KEY("stride", stride, "anchor stride between windows"),
        INT_KEY("threads", threads, "evaluation worker threads"),
        KeySpec{"clamp_nonneg", "clamp emitted predictions at zero (true|false)",
                [](RunConfig& c, const std::string& v) {
                    c.clamp_nonneg = parse_bool("clamp_nonneg", v);
                },
                [](const RunConfig& c) { return c.clamp_nonneg ? "true" : "false"; }},
    };
    return specs;
}

#undef INT_KEY
#undef REAL_KEY

}  // namespace

RunConfig::RunConfig() {
    model.h = 0;
    model.w = 0;
    model.l = 0;
}

void apply_kv(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const KeySpec& spec : key_specs()) {
        if (key == spec.name) {
            spec.apply(cfg, value);
            return;
        }
    }
    throw std::invalid_argument("config: unknown key '" + key + "'");
}

void apply_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::invalid_argument("config: cannot open " + path);
    }
    std::string line;
    std::int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config: " + path + " line " + std::to_string(line_no) +
                                        ": expected 'key = value'");
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty() || value.empty()) {
            throw std::invalid_argument("config: " + path + " line " + std::to_string(line_no) +
                                        ": empty key or value");
        }
        try {
            apply_kv(cfg, key, value);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(std::string(e.what()) + " (" + path + " line " +
                                        std::to_string(line_no) + ")");
        }
    }
}

std::vector<std::pair<std::string, std::string>> echo(const RunConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const KeySpec& spec : key_specs()) {
        out.emplace_back(spec.name, spec.format(cfg));
    }
    return out;
}

void write_echo(const RunConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("config: cannot write " + path);
    }
    for (const auto& [key, value] : echo(cfg)) {
        out << key << " = " << value << "\n";
    }
}

std::string describe_keys() {
    std::ostringstream out;
    const RunConfig defaults;
    for (const KeySpec& spec : key_specs()) {
        char line[160];
        std::snprintf(line, sizeof(line), "  %-15s %-10s %s\n", spec.name,
                      spec.format(defaults).c_str(), spec.doc);
        out << line;
    }
    return out.str();
}

}  // namespace prnet::config
