#pragma once

#include <string>
#include <utility>
#include <vector>

#include "prnet/data.hpp"
#include "prnet/model.hpp"
#include "prnet/train.hpp"

// Run configuration shared by the command-line tools: model, training, and
// scaling settings plus pipeline options, resolved from built-in defaults, an
// optional UTF-8 `key = value` file (lines starting with '#' are comments),
// and flag overrides — in that precedence order. Unknown keys are rejected,
// and the fully resolved configuration can be echoed back out so every run
// directory records what actually ran.

namespace prnet::config {

struct RunConfig {
    // model.h/model.w/model.l of 0 mean "derive from the series" (grid
    // extents and 7*steps_per_day respectively).
    model::ModelConfig model;
    train::TrainConfig train;
    data::ScalingSpec scaling;
    double test_frac = 0.10;
    double val_frac = 0.10;
    std::int64_t stride = 1;
    std::int64_t threads = 1;
    bool clamp_nonneg = true;

    RunConfig();  // sets model.l to the "derive from series" sentinel
};

// Applies one key; throws std::invalid_argument on unknown keys or
// malformed values.
void apply_kv(RunConfig& cfg, const std::string& key, const std::string& value);

// Parses a config file into cfg (later lines win).
void apply_file(RunConfig& cfg, const std::string& path);

// Every key with its current value, in documentation order.
std::vector<std::pair<std::string, std::string>> echo(const RunConfig& cfg);

// Writes the echo as a reusable `key = value` file.
void write_echo(const RunConfig& cfg, const std::string& path);

// One "key  default  description" line per key, for --help output.
std::string describe_keys();

}  // namespace prnet::config
