#include "prnet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace prnet::eval {

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch: " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

}  // namespace

double mae(const Tensor& pred, const Tensor& truth) {
    require_same_shape("mae", pred, truth);
    double acc = 0.0;
    for (std::int64_t i = 0; i < pred.size(); ++i) {
        acc += std::abs(pred.item_at(i) - truth.item_at(i));
    }
    return acc / static_cast<double>(pred.size());
}

double rmse(const Tensor& pred, const Tensor& truth) {
    require_same_shape("rmse", pred, truth);
    double acc = 0.0;
    for (std::int64_t i = 0; i < pred.size(); ++i) {
        const double e = pred.item_at(i) - truth.item_at(i);
        acc += e * e;
    }
    return std::sqrt(acc / static_cast<double>(pred.size()));
}

double smape(const Tensor& pred, const Tensor& truth) {
    require_same_shape("smape", pred, truth);
    double acc = 0.0;
    for (std::int64_t i = 0; i < pred.size(); ++i) {
        const double p = pred.item_at(i);
        const double y = truth.item_at(i);
        const double denom = std::abs(y) + std::abs(p);
        if (denom > 0.0) acc += 2.0 * std::abs(p - y) / denom;
    }
    return acc / static_cast<double>(pred.size());
}

Tensor ha_baseline(const data::SampleWindow& window) {
    return model::reconstruct(Tensor::zeros(window.y_p.shape(), window.y_p.dtype()), window.y_p);
}

namespace {

// Per-window sums, one bucket per prediction step (the innermost axis).
struct Partial {
    std::vector<double> abs_m, sq_m, sm_m;
    std::vector<double> abs_h, sq_h, sm_h;
};

void accumulate(const Tensor& pred, const Tensor& truth, std::int64_t t_pred,
                std::vector<double>& abs_s, std::vector<double>& sq_s,
                std::vector<double>& sm_s) {
    dispatch_dtype(pred.dtype(), [&](auto tag) {
        using T = typename decltype(tag)::type;
        const T* p = pred.data<T>();
        const T* y = truth.data<T>();
        for (std::int64_t i = 0; i < pred.size(); ++i) {
            const std::size_t step = static_cast<std::size_t>(i % t_pred);
            const double pv = static_cast<double>(p[i]);
            const double yv = static_cast<double>(y[i]);
            const double e = pv - yv;
            abs_s[step] += std::abs(e);
            sq_s[step] += e * e;
            const double denom = std::abs(yv) + std::abs(pv);
            if (denom > 0.0) sm_s[step] += 2.0 * std::abs(e) / denom;
        }
    });
}

Partial eval_window(const model::PRNet& net, const data::SampleWindow& win,
                    const data::SampleWindow& win_scaled, std::int64_t t_pred,
                    const data::ScalingSpec& scaling) {
    Partial part;
    part.abs_m.assign(static_cast<std::size_t>(t_pred), 0.0);
    part.sq_m = part.sm_m = part.abs_h = part.sq_h = part.sm_h = part.abs_m;

    Graph g(false);
    Tensor delta = data::inverse_scale(net.forward(g, win_scaled), scaling);
    Tensor yhat = model::reconstruct(delta, win.y_p);
    accumulate(yhat, win.y, t_pred, part.abs_m, part.sq_m, part.sm_m);

    Tensor ha = ha_baseline(win);
    accumulate(ha, win.y, t_pred, part.abs_h, part.sq_h, part.sm_h);
    return part;
}

PredictorReport finalize(std::string name, const std::vector<double>& abs_s,
                         const std::vector<double>& sq_s, const std::vector<double>& sm_s,
                         double per_step_count) {
    PredictorReport rep;
    rep.name = std::move(name);
    double abs_all = 0.0, sq_all = 0.0, sm_all = 0.0;
    for (std::size_t t = 0; t < abs_s.size(); ++t) {
        MetricRow row;
        row.mae = abs_s[t] / per_step_count;
        row.rmse = std::sqrt(sq_s[t] / per_step_count);
        row.smape = sm_s[t] / per_step_count;
        rep.per_step.push_back(row);
        abs_all += abs_s[t];
        sq_all += sq_s[t];
        sm_all += sm_s[t];
    }
    const double n = per_step_count * static_cast<double>(abs_s.size());
    rep.aggregate.mae = abs_all / n;
    rep.aggregate.rmse = std::sqrt(sq_all / n);
    rep.aggregate.smape = sm_all / n;
    return rep;
}

}  // namespace

ForecastReport evaluate(const model::PRNet& net, const std::vector<data::SampleWindow>& windows,
                        const data::ScalingSpec& scaling, int threads) {
    if (windows.empty()) {
        throw std::invalid_argument("evaluate: no windows");
    }
    scaling.validate();
    const model::ModelConfig& cfg = net.config();
    const Shape want_y{cfg.h, cfg.w, 2, cfg.t_pred};
    if (windows.front().y.shape() != want_y) {
        throw std::invalid_argument("evaluate: windows carry " +
                                    shape_str(windows.front().y.shape()) +
                                    " targets but the model expects " + shape_str(want_y));
    }
    const std::int64_t t_pred = cfg.t_pred;
    const std::size_t n = windows.size();

    std::vector<data::SampleWindow> scaled;
    scaled.reserve(n);
    for (const auto& w : windows) {
        data::SampleWindow s;
        s.x_c = data::scale(w.x_c, scaling);
        s.x_p = data::scale(w.x_p, scaling);
        s.y_p = data::scale(w.y_p, scaling);
        s.anchor = w.anchor;
        scaled.push_back(std::move(s));
    }

    std::vector<Partial> parts(n);
    const auto run_range = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            parts[i] = eval_window(net, windows[i], scaled[i], t_pred, scaling);
        }
    };
    if (threads <= 1 || n < 2) {
        run_range(0, n);
    } else {
        const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < k; ++w) {
            pool.emplace_back(run_range, n * w / k, n * (w + 1) / k);
        }
        for (auto& th : pool) th.join();
    }

    // Window-order reduction keeps the totals independent of scheduling.
    std::vector<double> abs_m(static_cast<std::size_t>(t_pred), 0.0);
    std::vector<double> sq_m = abs_m, sm_m = abs_m, abs_h = abs_m, sq_h = abs_m, sm_h = abs_m;
    for (const Partial& p : parts) {
        for (std::size_t t = 0; t < abs_m.size(); ++t) {
            abs_m[t] += p.abs_m[t];
            sq_m[t] += p.sq_m[t];
            sm_m[t] += p.sm_m[t];
            abs_h[t] += p.abs_h[t];
            sq_h[t] += p.sq_h[t];
            sm_h[t] += p.sm_h[t];
        }
    }

    const double per_step_count =
        static_cast<double>(n) * static_cast<double>(cfg.h * cfg.w * 2);
    ForecastReport report;
    report.samples = static_cast<std::int64_t>(n);
    report.t_pred = t_pred;
    report.model = finalize("prnet", abs_m, sq_m, sm_m, per_step_count);
    report.ha = finalize("ha", abs_h, sq_h, sm_h, per_step_count);
    return report;
}

// ---------------------------------------------------------------------------
// report writers

namespace {

nlohmann::ordered_json metric_json(const MetricRow& row) {
    return {{"mae", row.mae}, {"rmse", row.rmse}, {"smape", row.smape}};
}

nlohmann::ordered_json predictor_json(const PredictorReport& rep) {
    nlohmann::ordered_json j;
    j["name"] = rep.name;
    j["aggregate"] = metric_json(rep.aggregate);
    auto& steps = j["per_step"] = nlohmann::ordered_json::array();
    for (std::size_t t = 0; t < rep.per_step.size(); ++t) {
        nlohmann::ordered_json row = metric_json(rep.per_step[t]);
        row["step"] = static_cast<std::int64_t>(t + 1);
        steps.push_back(row);
    }
    return j;
}

}  // namespace

void write_report_json(const std::string& path, const ForecastReport& report) {
    nlohmann::ordered_json j;
    j["samples"] = report.samples;
    j["t_pred"] = report.t_pred;
    auto& cfg = j["config"] = nlohmann::ordered_json::object();
    for (const auto& [key, value] : report.config_echo) cfg[key] = value;
    j["predictors"] = nlohmann::ordered_json::array();
    j["predictors"].push_back(predictor_json(report.model));
    j["predictors"].push_back(predictor_json(report.ha));

    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("report: cannot open " + path + " for writing");
    }
    out << j.dump(2) << "\n";
}

void write_report_csv(const std::string& path, const ForecastReport& report) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("report: cannot open " + path + " for writing");
    }
    out << "step,predictor,mae,rmse,smape\n";
    char buf[160];
    const auto emit = [&](const PredictorReport& rep) {
        for (std::size_t t = 0; t < rep.per_step.size(); ++t) {
            const MetricRow& r = rep.per_step[t];
            std::snprintf(buf, sizeof(buf), "%zu,%s,%.17g,%.17g,%.17g\n", t + 1,
                          rep.name.c_str(), r.mae, r.rmse, r.smape);
            out << buf;
        }
        std::snprintf(buf, sizeof(buf), "all,%s,%.17g,%.17g,%.17g\n", rep.name.c_str(),
                      rep.aggregate.mae, rep.aggregate.rmse, rep.aggregate.smape);
        out << buf;
    };
    emit(report.model);
    emit(report.ha);
}

// ---------------------------------------------------------------------------
// budget sweep

std::vector<SweepRow> budget_sweep(const data::SplitResult& split,
                                   const std::vector<double>& ratios,
                                   const data::ScalingSpec& scaling, const TrainFn& train_fn,
                                   int threads) {
    if (split.train.empty() || split.test.empty()) {
        throw std::invalid_argument("sweep: train and test sets must be non-empty");
    }
    for (double r : ratios) {
        if (!(r > 0.0 && r <= 1.0)) {
            throw std::invalid_argument("sweep: ratio " + std::to_string(r) +
                                        " outside (0,1]");
        }
    }

    std::vector<std::int64_t> anchors;
    anchors.reserve(split.train.size());
    for (const auto& w : split.train) anchors.push_back(w.anchor);
    std::sort(anchors.begin(), anchors.end());

    std::vector<SweepRow> rows;
    for (double ratio : ratios) {
        const std::size_t n_keep = static_cast<std::size_t>(
            std::floor(ratio * static_cast<double>(split.train.size())));
        if (n_keep == 0) {
            throw std::invalid_argument("sweep: ratio " + std::to_string(ratio) +
                                        " keeps zero training windows");
        }
        // Membership by anchor rank, original order preserved: at ratio 1.0
        // the subset is the identical list, so the run reproduces a plain
        // train+evaluate bit for bit.
        const std::int64_t cutoff = anchors[n_keep - 1];
        std::vector<data::SampleWindow> subset;
        subset.reserve(n_keep);
        for (const auto& w : split.train) {
            if (w.anchor <= cutoff) subset.push_back(w);
        }

        model::PRNet net = train_fn(subset, split.val);
        SweepRow row;
        row.ratio = ratio;
        row.train_windows = static_cast<std::int64_t>(subset.size());
        row.report = evaluate(net, split.test, scaling, threads);
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("sweep: cannot open " + path + " for writing");
    }
    out << "ratio,train_windows,predictor,mae,rmse,smape\n";
    char buf[200];
    for (const SweepRow& row : rows) {
        const auto emit = [&](const PredictorReport& rep) {
            std::snprintf(buf, sizeof(buf), "%.17g,%lld,%s,%.17g,%.17g,%.17g\n", row.ratio,
                          static_cast<long long>(row.train_windows), rep.name.c_str(),
                          rep.aggregate.mae, rep.aggregate.rmse, rep.aggregate.smape);
            out << buf;
        };
        emit(row.report.model);
        emit(row.report.ha);
    }
}

}  // namespace prnet::eval
