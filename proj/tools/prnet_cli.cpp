// Command-line front end: generate synthetic crowd-flow series, train the
// periodic-residual forecaster, evaluate it against the historical-average
// baseline, emit single-window forecasts, and run training-budget sweeps.
//
// Exit codes: 0 success, 1 usage or I/O error, 2 numerical failure
// (divergence or non-finite values).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "prnet/config.hpp"
#include "prnet/data.hpp"
#include "prnet/eval.hpp"
#include "prnet/kernels.hpp"
#include "prnet/model.hpp"
#include "prnet/prnf.hpp"
#include "prnet/tensor.hpp"
#include "prnet/train.hpp"

namespace fs = std::filesystem;
using std::int64_t;

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t");
    std::size_t e = s.find_last_not_of(" \t");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

int64_t parse_int(const std::string& text, const std::string& what) {
    int64_t v = 0;
    const char* first = text.data();
    const char* last = first + text.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) {
        throw std::invalid_argument(what + " expects an integer, got '" + text + "'");
    }
    return v;
}

double parse_real(const std::string& text, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used == text.size() && std::isfinite(v)) return v;
    } catch (const std::exception&) {
    }
    throw std::invalid_argument(what + " expects a finite number, got '" + text + "'");
}

// Shared --config/--set plumbing. Precedence: built-in defaults, then the
// config file, then --set overrides in order, then the PRNET_SEED
// environment variable.
struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
};

void add_config_options(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path,
                    "configuration file with 'key = value' lines");
    cmd->add_option("--set", opts.overrides,
                    "override one configuration key as key=value (repeatable)");
}

prnet::config::RunConfig resolve_config(const CommonOpts& opts) {
    prnet::config::RunConfig cfg;
    if (!opts.config_path.empty()) {
        prnet::config::apply_file(cfg, opts.config_path);
    }
    for (const std::string& kv : opts.overrides) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
        }
        prnet::config::apply_kv(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    if (const char* env = std::getenv("PRNET_SEED")) {
        try {
            prnet::config::apply_kv(cfg, "seed", env);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(std::string("PRNET_SEED: ") + e.what());
        }
    }
    if (cfg.stride < 1) throw std::invalid_argument("stride must be >= 1");
    if (cfg.threads < 1) throw std::invalid_argument("threads must be >= 1");
    return cfg;
}

// Fill the h/w/l placeholders from the series and reject a configured grid
// that disagrees with the data.
void adopt_series(prnet::config::RunConfig& cfg, const prnet::data::FlowSeries& series) {
    if (cfg.model.h == 0) cfg.model.h = series.h;
    if (cfg.model.w == 0) cfg.model.w = series.w;
    if (cfg.model.l == 0) cfg.model.l = series.period_steps();
    if (cfg.model.h != series.h || cfg.model.w != series.w) {
        throw std::invalid_argument(
            "series grid is " + std::to_string(series.h) + "x" + std::to_string(series.w) +
            " but the configuration asks for " + std::to_string(cfg.model.h) + "x" +
            std::to_string(cfg.model.w) + "; set h/w to match (or 0 to adopt the series)");
    }
    cfg.model.validate();
    cfg.train.validate();
    cfg.scaling.validate();
}

std::string model_config_line(const prnet::model::ModelConfig& c) {
    return "h=" + std::to_string(c.h) + " w=" + std::to_string(c.w) +
           " t_obs=" + std::to_string(c.t_obs) + " t_pred=" + std::to_string(c.t_pred) +
           " channels=" + std::to_string(c.channels) + " blocks=" + std::to_string(c.blocks) +
           " periods=" + std::to_string(c.periods) + " l=" + std::to_string(c.l) +
           " hp=" + std::to_string(c.hp) + " wp=" + std::to_string(c.wp) +
           " r_s=" + std::to_string(c.r_s) + " r_c=" + std::to_string(c.r_c) +
           " k=" + std::to_string(c.k);
}

void require_grid_match(const prnet::model::ModelConfig& mc,
                        const prnet::data::FlowSeries& series, const std::string& data_path) {
    if (mc.h == series.h && mc.w == series.w) return;
    throw std::invalid_argument(
        "checkpoint does not fit the series:\n  model:  " + model_config_line(mc) +
        "\n  series: " + data_path + " grid " + std::to_string(series.h) + "x" +
        std::to_string(series.w) + ", " + std::to_string(series.n_steps) + " steps, " +
        std::to_string(series.steps_per_day) + "/day");
}

prnet::data::WindowSet build_windows(const prnet::data::FlowSeries& series,
                                     const prnet::model::ModelConfig& mc, int64_t stride) {
    prnet::data::WindowSet ws = prnet::data::make_windows(series, mc.t_obs, mc.t_pred, mc.l,
                                                          mc.periods, stride);
    if (ws.series_too_short) {
        const int64_t t_min = mc.t_obs + mc.l * mc.periods;
        throw std::invalid_argument(
            "series too short for windowing: needs an anchor t with t >= " +
            std::to_string(t_min) + " (T_obs + l*P) and t + " + std::to_string(mc.t_pred) +
            " <= " + std::to_string(series.n_steps));
    }
    return ws;
}

// Same membership rule as the budget sweep: keep the floor(ratio*N)
// chronologically earliest training windows, preserving list order.
std::vector<prnet::data::SampleWindow> keep_budget(
    const std::vector<prnet::data::SampleWindow>& train_set, double ratio) {
    if (!(ratio > 0.0 && ratio <= 1.0)) {
        throw std::invalid_argument("--budget-ratio must be in (0, 1]");
    }
    if (ratio == 1.0) return train_set;
    std::vector<int64_t> anchors;
    anchors.reserve(train_set.size());
    for (const auto& w : train_set) anchors.push_back(w.anchor);
    std::sort(anchors.begin(), anchors.end());
    const auto n_keep = static_cast<std::size_t>(
        static_cast<double>(anchors.size()) * ratio);
    if (n_keep == 0) {
        throw std::invalid_argument("--budget-ratio " + std::to_string(ratio) +
                                    " keeps no training windows");
    }
    const int64_t cutoff = anchors[n_keep - 1];
    std::vector<prnet::data::SampleWindow> kept;
    kept.reserve(n_keep);
    for (const auto& w : train_set) {
        if (w.anchor <= cutoff) kept.push_back(w);
    }
    return kept;
}

void ensure_parent_dir(const std::string& path) {
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

// ---------------------------------------------------------------------------
// generate

struct GenerateOpts {
    std::string out;
    std::string grid = "16x16";
    int64_t weeks = 8;
    int64_t steps_per_day = 24;
    double noise = 0.0;
    double trend = 0.0;
    int64_t seed = 0;
    int64_t periods = 3;
};

int run_generate(const GenerateOpts& opts) {
    const std::size_t x = opts.grid.find('x');
    if (x == std::string::npos) {
        throw std::invalid_argument("--grid expects HxW, got '" + opts.grid + "'");
    }
    const int64_t h = parse_int(opts.grid.substr(0, x), "--grid height");
    const int64_t w = parse_int(opts.grid.substr(x + 1), "--grid width");
    if (opts.periods < 1) throw std::invalid_argument("--periods must be >= 1");
    if (opts.weeks < opts.periods + 2) {
        throw std::invalid_argument(
            "refusing to generate " + std::to_string(opts.weeks) +
            " week(s): windowing with P=" + std::to_string(opts.periods) +
            " periodic segments needs at least P+2 = " + std::to_string(opts.periods + 2) +
            " weeks");
    }
    int64_t seed = opts.seed;
    if (const char* env = std::getenv("PRNET_SEED")) {
        seed = parse_int(env, "PRNET_SEED");
    }
    const prnet::data::FlowSeries series = prnet::data::synth_generate(
        h, w, opts.weeks, opts.steps_per_day, opts.noise, opts.trend,
        static_cast<std::uint64_t>(seed));
    ensure_parent_dir(opts.out);
    prnet::data::save_series(series, opts.out);
    std::cout << "wrote " << opts.out << ": " << h << "x" << w << " grid, " << series.n_steps
              << " steps (" << opts.weeks << " weeks x " << opts.steps_per_day << "/day), seed "
              << seed << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainOpts {
    std::string data;
    std::string out;
    double budget_ratio = 1.0;
    CommonOpts common;
};

int run_train(const TrainOpts& opts) {
    prnet::config::RunConfig cfg = resolve_config(opts.common);
    const prnet::data::FlowSeries series = prnet::data::load_series(opts.data);
    adopt_series(cfg, series);

    prnet::data::WindowSet ws = build_windows(series, cfg.model, cfg.stride);
    prnet::data::SplitResult split = prnet::data::split_windows(
        std::move(ws.windows), cfg.test_frac, cfg.val_frac, cfg.train.seed);
    std::vector<prnet::data::SampleWindow> train_set =
        keep_budget(split.train, opts.budget_ratio);

    std::cout << "windows: " << train_set.size() << " train / " << split.val.size()
              << " val / " << split.test.size() << " test";
    if (opts.budget_ratio != 1.0) {
        std::cout << " (budget ratio " << opts.budget_ratio << " of " << split.train.size()
                  << ")";
    }
    std::cout << "\nmodel: " << model_config_line(cfg.model) << ", "
              << prnet::model::param_count(cfg.model) << " parameters\n";

    prnet::model::PRNet net(
        prnet::model::init_params(cfg.model, cfg.train.seed, prnet::DType::f32));
    const prnet::train::TrainResult result =
        prnet::train::train(net, train_set, split.val, cfg.train, cfg.scaling);

    for (const auto& e : result.history) {
        std::printf("epoch %3lld  train_loss %.6g  val_mae %.6g\n",
                    static_cast<long long>(e.epoch), e.train_loss, e.val_mae);
    }

    fs::create_directories(opts.out);
    prnet::model::PRNetParams best = result.best_params;
    prnet::train::save_checkpoint(opts.out, best);
    prnet::train::write_history_csv(opts.out + "/history.csv", result.history);
    prnet::config::write_echo(cfg, opts.out + "/config.resolved");

    if (result.diverged) {
        std::cerr << "training diverged: " << result.divergence_message << "\n"
                  << "kept the best checkpoint so far (epoch " << result.best_epoch << ") in "
                  << opts.out << "\n";
        return 2;
    }
    std::printf("best epoch %lld  val_mae %.6g\n", static_cast<long long>(result.best_epoch),
                result.best_val_mae);
    std::cout << "wrote " << opts.out << " (manifest.json, weights/, history.csv, "
              << "config.resolved)\n";
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateOpts {
    std::string model_dir;
    std::string data;
    std::string report;
    int64_t threads_flag = -1;  // -1: not given on the command line
    CommonOpts common;
};

void apply_threads_flag(prnet::config::RunConfig& cfg, int64_t flag) {
    if (flag == -1) return;
    if (flag < 1) throw std::invalid_argument("--threads must be >= 1");
    cfg.threads = flag;
}

int run_evaluate(const EvaluateOpts& opts) {
    prnet::config::RunConfig cfg = resolve_config(opts.common);
    apply_threads_flag(cfg, opts.threads_flag);
    prnet::model::PRNetParams params = prnet::train::load_checkpoint(opts.model_dir);
    const prnet::data::FlowSeries series = prnet::data::load_series(opts.data);
    require_grid_match(params.config, series, opts.data);
    cfg.model = params.config;  // the echo reflects what actually ran

    prnet::data::WindowSet ws = build_windows(series, cfg.model, cfg.stride);
    prnet::data::SplitResult split = prnet::data::split_windows(
        std::move(ws.windows), cfg.test_frac, cfg.val_frac, cfg.train.seed);

    const prnet::model::PRNet net(std::move(params));
    prnet::eval::ForecastReport report =
        prnet::eval::evaluate(net, split.test, cfg.scaling, static_cast<int>(cfg.threads));
    report.config_echo = prnet::config::echo(cfg);

    fs::create_directories(opts.report);
    prnet::eval::write_report_json(opts.report + "/report.json", report);
    prnet::eval::write_report_csv(opts.report + "/report.csv", report);
    prnet::config::write_echo(cfg, opts.report + "/config.resolved");

    std::printf("test windows: %lld\n", static_cast<long long>(report.samples));
    std::printf("model  mae %.6g  rmse %.6g  smape %.6g\n", report.model.aggregate.mae,
                report.model.aggregate.rmse, report.model.aggregate.smape);
    std::printf("ha     mae %.6g  rmse %.6g  smape %.6g\n", report.ha.aggregate.mae,
                report.ha.aggregate.rmse, report.ha.aggregate.smape);
    std::cout << "wrote " << opts.report << " (report.json, report.csv, config.resolved)\n";
    return 0;
}

// ---------------------------------------------------------------------------
// predict

struct PredictOpts {
    std::string model_dir;
    std::string data;
    std::string out;
    int64_t at = -1;
    CommonOpts common;
};

int run_predict(const PredictOpts& opts, bool clamp_set, bool clamp_value) {
    prnet::config::RunConfig cfg = resolve_config(opts.common);
    if (clamp_set) cfg.clamp_nonneg = clamp_value;
    prnet::model::PRNetParams params = prnet::train::load_checkpoint(opts.model_dir);
    const prnet::data::FlowSeries series = prnet::data::load_series(opts.data);
    require_grid_match(params.config, series, opts.data);
    const prnet::model::ModelConfig mc = params.config;

    const int64_t t_min = mc.t_obs + mc.l * mc.periods;
    const int64_t t_max = series.n_steps - mc.t_pred;
    if (opts.at < t_min || opts.at > t_max) {
        throw std::invalid_argument(
            "anchor " + std::to_string(opts.at) + " is outside the valid range [" +
            std::to_string(t_min) + ", " + std::to_string(t_max) +
            "]: each anchor needs T_obs + l*P = " + std::to_string(t_min) +
            " steps of periodic history and T_pred = " + std::to_string(mc.t_pred) +
            " observed target steps");
    }

    prnet::data::WindowSet ws = build_windows(series, mc, /*stride=*/1);
    const prnet::data::SampleWindow& win =
        ws.windows[static_cast<std::size_t>(opts.at - t_min)];

    prnet::data::SampleWindow scaled = win;
    scaled.x_c = prnet::data::scale(win.x_c, cfg.scaling);
    scaled.x_p = prnet::data::scale(win.x_p, cfg.scaling);
    scaled.y_p = prnet::data::scale(win.y_p, cfg.scaling);

    const prnet::model::PRNet net(std::move(params));
    prnet::Graph g(/*recording=*/false);
    const prnet::Tensor delta =
        prnet::data::inverse_scale(net.forward(g, scaled), cfg.scaling);
    prnet::Tensor yhat = prnet::model::reconstruct(delta, win.y_p);

    if (cfg.clamp_nonneg) {
        prnet::dispatch_dtype(yhat.dtype(), [&](auto tag) {
            using T = typename decltype(tag)::type;
            T* d = yhat.data<T>();
            for (int64_t i = 0; i < yhat.size(); ++i) {
                if (d[i] < T(0)) d[i] = T(0);
            }
        });
    }

    ensure_parent_dir(opts.out);
    prnet::prnf::write(opts.out, yhat);
    std::cout << "wrote " << opts.out << ": forecast " << prnet::shape_str(yhat.shape())
              << " for anchor " << opts.at << (cfg.clamp_nonneg ? "" : " (unclamped)") << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepOpts {
    std::string data;
    std::string out;
    std::string ratios = "0.1,0.5,1.0";
    int64_t threads_flag = -1;
    CommonOpts common;
};

std::vector<double> parse_ratio_list(const std::string& text) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t comma = text.find(',', pos);
        if (comma == std::string::npos) comma = text.size();
        const std::string item = trim(text.substr(pos, comma - pos));
        if (item.empty()) {
            throw std::invalid_argument("--ratios expects comma-separated numbers, got '" +
                                        text + "'");
        }
        out.push_back(parse_real(item, "--ratios"));
        pos = comma + 1;
    }
    return out;
}

int run_sweep(const SweepOpts& opts) {
    prnet::config::RunConfig cfg = resolve_config(opts.common);
    apply_threads_flag(cfg, opts.threads_flag);
    const std::vector<double> ratios = parse_ratio_list(opts.ratios);
    const prnet::data::FlowSeries series = prnet::data::load_series(opts.data);
    adopt_series(cfg, series);

    prnet::data::WindowSet ws = build_windows(series, cfg.model, cfg.stride);
    prnet::data::SplitResult split = prnet::data::split_windows(
        std::move(ws.windows), cfg.test_frac, cfg.val_frac, cfg.train.seed);

    const prnet::eval::TrainFn train_fn =
        [&cfg](const std::vector<prnet::data::SampleWindow>& train_subset,
               const std::vector<prnet::data::SampleWindow>& val_set) {
            prnet::model::PRNet net(
                prnet::model::init_params(cfg.model, cfg.train.seed, prnet::DType::f32));
            prnet::train::TrainResult r =
                prnet::train::train(net, train_subset, val_set, cfg.train, cfg.scaling);
            if (r.diverged) {
                throw prnet::NonFiniteError("sweep: training diverged: " +
                                            r.divergence_message);
            }
            return prnet::model::PRNet(std::move(r.best_params));
        };

    const std::vector<prnet::eval::SweepRow> rows = prnet::eval::budget_sweep(
        split, ratios, cfg.scaling, train_fn, static_cast<int>(cfg.threads));

    fs::create_directories(opts.out);
    prnet::eval::write_sweep_csv(opts.out + "/sweep.csv", rows);
    prnet::config::write_echo(cfg, opts.out + "/config.resolved");

    for (const auto& row : rows) {
        std::printf("ratio %.3g  windows %4lld  model mae %.6g  ha mae %.6g\n", row.ratio,
                    static_cast<long long>(row.train_windows), row.report.model.aggregate.mae,
                    row.report.ha.aggregate.mae);
    }
    std::cout << "wrote " << opts.out << " (sweep.csv, config.resolved)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"periodic-residual crowd-flow forecasting toolkit"};
    app.require_subcommand(1);
    app.footer("Environment: PRNET_SEED overrides the configured seed; PRNET_KERNELS\n"
               "selects the compute backend (scalar, avx2, auto).");

    int rc = 0;

    GenerateOpts gen;
    CLI::App* cmd_gen = app.add_subcommand("generate", "write a seeded synthetic flow series");
    cmd_gen->add_option("--out", gen.out, "output series path (.prnf + .json sidecar)")
        ->required();
    cmd_gen->add_option("--grid", gen.grid, "grid extents as HxW (default 16x16)");
    cmd_gen->add_option("--weeks", gen.weeks, "number of weeks to generate (default 8)");
    cmd_gen->add_option("--steps-per-day", gen.steps_per_day, "time steps per day (default 24)");
    cmd_gen->add_option("--noise", gen.noise, "additive noise standard deviation (default 0)");
    cmd_gen->add_option("--trend", gen.trend, "linear trend slope per step (default 0)");
    cmd_gen->add_option("--seed", gen.seed, "generator seed (default 0)");
    cmd_gen->add_option("--periods", gen.periods,
                        "periodic segments the series must support (default 3)");
    cmd_gen->callback([&] { rc = run_generate(gen); });

    TrainOpts tr;
    CLI::App* cmd_tr = app.add_subcommand("train", "train a forecaster on a series");
    cmd_tr->add_option("--data", tr.data, "input series path")->required();
    cmd_tr->add_option("--out", tr.out, "output checkpoint directory")->required();
    cmd_tr->add_option("--budget-ratio", tr.budget_ratio,
                       "train on the earliest fraction of the training windows (default 1.0)");
    add_config_options(cmd_tr, tr.common);
    cmd_tr->callback([&] { rc = run_train(tr); });

    EvaluateOpts ev;
    CLI::App* cmd_ev = app.add_subcommand("evaluate",
                                          "score a checkpoint and the historical average");
    cmd_ev->add_option("--model", ev.model_dir, "checkpoint directory")->required();
    cmd_ev->add_option("--data", ev.data, "input series path")->required();
    cmd_ev->add_option("--report", ev.report, "output report directory")->required();
    cmd_ev->add_option("--threads", ev.threads_flag,
                       "worker threads for evaluation (default 1)");
    add_config_options(cmd_ev, ev.common);
    cmd_ev->callback([&] { rc = run_evaluate(ev); });

    PredictOpts pr;
    bool clamp_value = true;
    CLI::App* cmd_pr = app.add_subcommand("predict", "emit one absolute forecast window");
    cmd_pr->add_option("--model", pr.model_dir, "checkpoint directory")->required();
    cmd_pr->add_option("--data", pr.data, "input series path")->required();
    cmd_pr->add_option("--at", pr.at, "anchor index t of the first predicted step")->required();
    cmd_pr->add_option("--out", pr.out, "output tensor path (.prnf)")->required();
    CLI::Option* clamp_opt = cmd_pr->add_flag(
        "--clamp-nonneg,!--no-clamp-nonneg", clamp_value,
        "clamp negative forecast values to zero at emission (default on)");
    add_config_options(cmd_pr, pr.common);
    cmd_pr->callback([&] { rc = run_predict(pr, clamp_opt->count() > 0, clamp_value); });

    SweepOpts sw;
    CLI::App* cmd_sw = app.add_subcommand("sweep",
                                          "train at several budget ratios and compare");
    cmd_sw->add_option("--data", sw.data, "input series path")->required();
    cmd_sw->add_option("--out", sw.out, "output directory")->required();
    cmd_sw->add_option("--ratios", sw.ratios,
                       "comma-separated budget ratios (default 0.1,0.5,1.0)");
    cmd_sw->add_option("--threads", sw.threads_flag,
                       "worker threads for evaluation (default 1)");
    add_config_options(cmd_sw, sw.common);
    cmd_sw->callback([&] { rc = run_sweep(sw); });

    CLI::App* cmd_keys = app.add_subcommand("config-keys",
                                            "list configuration keys with defaults");
    cmd_keys->callback([&] {
        std::cout << prnet::config::describe_keys();
        rc = 0;
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const prnet::NonFiniteError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
