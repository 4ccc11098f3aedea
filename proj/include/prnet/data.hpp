#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "prnet/tensor.hpp"

// Flow-series storage, window extraction, scaling, splits, and a synthetic
// periodic generator. A series holds per-cell inflow/outflow counts on an
// H x W grid, one pair per time step; windowing slices it into training
// samples (recent segment, per-period history, per-period targets).

namespace prnet::data {

struct SeriesError : std::runtime_error {
    enum class Kind { bad_extents, negative_value, bad_sidecar, bad_csv };
    Kind kind;
    SeriesError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

// Values are kept at f32 precision (the on-disk payload precision) inside a
// double buffer, so file round-trips are bit-exact and every cast between
// precisions is lossless.
struct FlowSeries {
    std::int64_t h = 0;
    std::int64_t w = 0;
    std::int64_t n_steps = 0;
    std::int64_t steps_per_day = 0;
    std::int64_t days_per_period = 7;
    std::int64_t start_index = 0;
    std::vector<double> values;  // [n_steps][H][W][2] row-major, >= 0

    std::int64_t period_steps() const { return days_per_period * steps_per_day; }
    std::int64_t cells() const { return h * w; }

    double at(std::int64_t t, std::int64_t hh, std::int64_t ww, std::int64_t comp) const {
        return values[static_cast<std::size_t>(((t * h + hh) * w + ww) * 2 + comp)];
    }

    // Zero-filled series with validated extents.
    static FlowSeries create(std::int64_t h, std::int64_t w, std::int64_t n_steps,
                             std::int64_t steps_per_day, std::int64_t days_per_period = 7,
                             std::int64_t start_index = 0);
    // Clamps v to f32 precision and rejects negatives/non-finite values.
    void set(std::int64_t t, std::int64_t hh, std::int64_t ww, std::int64_t comp, double v);
};

// One training/evaluation sample. Segments keep a trailing [2, T] block per
// cell (component-major, time innermost); the per-period stacks carry the
// period as the leading axis, ordered nearest period first (index 0 is one
// period back).
struct SampleWindow {
    Tensor x_c;  // [H,W,2,T_obs]   steps [t-T_obs, t)
    Tensor x_p;  // [P,H,W,2,T_obs] index p-1: steps [t-T_obs-l*p, t-l*p)
    Tensor y_p;  // [P,H,W,2,T_pred] index p-1: steps [t-l*p, t+T_pred-l*p)
    Tensor y;    // [H,W,2,T_pred]  steps [t, t+T_pred)
    Tensor dy;   // [P,H,W,2,T_pred] y - y_p per period
    std::int64_t anchor = 0;  // absolute index of the first predicted step
};

struct WindowSet {
    std::vector<SampleWindow> windows;
    bool series_too_short = false;  // set when no anchor fits the history
};

// One window per anchor t in {t_min, t_min+stride, ...} with
// t_min = T_obs + l*P and t + T_pred <= n_steps. Requires
// l >= T_obs + T_pred so the nearest periodic target ends before the
// current prediction begins.
WindowSet make_windows(const FlowSeries& series, std::int64_t t_obs, std::int64_t t_pred,
                       std::int64_t l, std::int64_t periods, std::int64_t stride = 1,
                       DType dt = DType::f32);

struct SplitResult {
    std::vector<SampleWindow> train;
    std::vector<SampleWindow> val;
    std::vector<SampleWindow> test;
};

// Test set = chronologically last max(1, floor(test_frac*n)) windows by
// anchor; the rest are shuffled by seed and max(1, floor(val_frac*n)) of
// them become validation.
SplitResult split_windows(std::vector<SampleWindow> windows, double test_frac, double val_frac,
                          std::uint64_t seed);

struct ScalingSpec {
    double divisor = 50.0;
    void validate() const;  // throws std::invalid_argument unless finite and > 0
};

FlowSeries scale(const FlowSeries& s, const ScalingSpec& spec);
FlowSeries inverse_scale(const FlowSeries& s, const ScalingSpec& spec);
// Data-level tensor variants (no autodiff involvement).
Tensor scale(const Tensor& t, const ScalingSpec& spec);
Tensor inverse_scale(const Tensor& t, const ScalingSpec& spec);

// Seeded synthetic crowd flows: per cell and component,
//   value(t) = max(0, base * daily(t mod steps_per_day) * weekly(day_of_week)
//                     + trend_slope * t + Normal(0, noise_sd))
// with a fixed two-peak daily profile, per-cell base levels and per-day
// weekly factors drawn from seeded uniform ranges. Results are quantized to
// multiples of 1/1024, so differences between steps are exactly representable
// at f32 and period differences cancel without rounding; with zero noise and
// a slope that is itself a multiple of 1/1024, value(t) - value(t-l) is
// exactly trend_slope*l wherever the clamp is inactive.
FlowSeries synth_generate(std::int64_t h, std::int64_t w, std::int64_t weeks,
                          std::int64_t steps_per_day, double noise_sd, double trend_slope,
                          std::uint64_t seed);

// PRNF file [n_steps,H,W,2] plus a "<path>.json" sidecar
// {steps_per_day, start_index}.
void save_series(const FlowSeries& s, const std::string& path);
FlowSeries load_series(const std::string& path);

// CSV with columns t,h,w,inflow,outflow (header optional); unlisted cells
// stay zero.
FlowSeries import_series_csv(const std::string& path, std::int64_t steps_per_day,
                             std::int64_t start_index = 0);

}  // namespace prnet::data
