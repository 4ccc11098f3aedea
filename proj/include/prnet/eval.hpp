#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "prnet/data.hpp"
#include "prnet/model.hpp"

// Metrics, the historical-average baseline, per-horizon reports, and
// training-budget sweeps. All metrics are computed in original units; the
// model's inputs are scaled internally and its deviations inverse-scaled
// before reconstruction.

namespace prnet::eval {

// Pooled over every element; shapes must match.
double mae(const Tensor& pred, const Tensor& truth);
double rmse(const Tensor& pred, const Tensor& truth);
// 2|e| / (|y| + |yhat|) averaged over elements, 0 where both values are 0.
double smape(const Tensor& pred, const Tensor& truth);

// Mean of the periodic targets: reconstruct with zero deviations.
Tensor ha_baseline(const data::SampleWindow& window);

struct MetricRow {
    double mae = 0.0;
    double rmse = 0.0;
    double smape = 0.0;
};

struct PredictorReport {
    std::string name;
    std::vector<MetricRow> per_step;  // horizon 1..T_pred
    MetricRow aggregate;              // pooled across all steps
};

struct ForecastReport {
    std::int64_t samples = 0;
    std::int64_t t_pred = 0;
    PredictorReport model;
    PredictorReport ha;
    // Resolved-configuration echo carried into the JSON report.
    std::vector<std::pair<std::string, std::string>> config_echo;
};

// Forward + reconstruct per window for the model, plus the HA baseline on the
// same windows. Windows arrive in original units. With threads > 1 the
// windows are processed in parallel; per-window partial sums are reduced in
// window order afterwards, so the result does not depend on scheduling.
ForecastReport evaluate(const model::PRNet& net, const std::vector<data::SampleWindow>& windows,
                        const data::ScalingSpec& scaling, int threads = 1);

void write_report_json(const std::string& path, const ForecastReport& report);
// Rows "step,predictor,mae,rmse,smape"; per-step rows then an "all" row per
// predictor.
void write_report_csv(const std::string& path, const ForecastReport& report);

struct SweepRow {
    double ratio = 0.0;
    std::int64_t train_windows = 0;
    ForecastReport report;
};

// Returns a freshly trained network given the (possibly subsampled) train
// set and the fixed validation set.
using TrainFn = std::function<model::PRNet(const std::vector<data::SampleWindow>&,
                                           const std::vector<data::SampleWindow>&)>;

// For each ratio keeps the floor(ratio*N) chronologically earliest training
// windows (membership by anchor, original order preserved — ratio 1.0 feeds
// the identical list), trains via train_fn, and evaluates on the fixed test
// set.
std::vector<SweepRow> budget_sweep(const data::SplitResult& split,
                                   const std::vector<double>& ratios,
                                   const data::ScalingSpec& scaling, const TrainFn& train_fn,
                                   int threads = 1);

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);

}  // namespace prnet::eval
