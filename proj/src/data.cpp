#include "prnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "prnet/prnf.hpp"
#include "prnet/rng.hpp"

namespace prnet::data {

namespace {

double quantize_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

// Fixed two-peak daily shape (morning and evening rush) over day fraction
// x in [0,1); floor keeps off-peak hours busy enough that the noise clamp
// rarely bites.
double daily_profile(double x) {
    const double morning = std::exp(-std::pow((x - 0.34) / 0.06, 2.0));
    const double evening = std::exp(-std::pow((x - 0.76) / 0.08, 2.0));
    return 0.25 + 1.1 * morning + 0.9 * evening;
}

}  // namespace

FlowSeries FlowSeries::create(std::int64_t h, std::int64_t w, std::int64_t n_steps,
                              std::int64_t steps_per_day, std::int64_t days_per_period,
                              std::int64_t start_index) {
    if (h < 1 || w < 1) {
        throw std::invalid_argument("series: grid extents must be >= 1, got " +
                                    std::to_string(h) + "x" + std::to_string(w));
    }
    if (n_steps < 1) {
        throw std::invalid_argument("series: n_steps must be >= 1, got " +
                                    std::to_string(n_steps));
    }
    if (steps_per_day < 1 || days_per_period < 1) {
        throw std::invalid_argument("series: calendar parameters must be >= 1");
    }
    if (start_index < 0) {
        throw std::invalid_argument("series: start_index must be >= 0");
    }
    FlowSeries s;
    s.h = h;
    s.w = w;
    s.n_steps = n_steps;
    s.steps_per_day = steps_per_day;
    s.days_per_period = days_per_period;
    s.start_index = start_index;
    s.values.assign(static_cast<std::size_t>(n_steps * h * w * 2), 0.0);
    return s;
}

void FlowSeries::set(std::int64_t t, std::int64_t hh, std::int64_t ww, std::int64_t comp,
                     double v) {
    if (!std::isfinite(v) || v < 0.0) {
        throw SeriesError(SeriesError::Kind::negative_value,
                          "series: value at (t=" + std::to_string(t) + ",h=" +
                              std::to_string(hh) + ",w=" + std::to_string(ww) + ",c=" +
                              std::to_string(comp) + ") must be finite and >= 0, got " +
                              std::to_string(v));
    }
    values[static_cast<std::size_t>(((t * h + hh) * w + ww) * 2 + comp)] = quantize_f32(v);
}

// ---------------------------------------------------------------------------
// windowing

namespace {

// Copies steps [t0, t0+len) into dst laid out [H,W,2,len].
template <typename T>
void fill_segment(const FlowSeries& s, std::int64_t t0, std::int64_t len, T* dst) {
    for (std::int64_t hh = 0; hh < s.h; ++hh) {
        for (std::int64_t ww = 0; ww < s.w; ++ww) {
            for (std::int64_t comp = 0; comp < 2; ++comp) {
                T* row = dst + ((hh * s.w + ww) * 2 + comp) * len;
                for (std::int64_t i = 0; i < len; ++i) {
                    row[i] = static_cast<T>(s.at(t0 + i, hh, ww, comp));
                }
            }
        }
    }
}

}  // namespace

WindowSet make_windows(const FlowSeries& series, std::int64_t t_obs, std::int64_t t_pred,
                       std::int64_t l, std::int64_t periods, std::int64_t stride, DType dt) {
    if (t_obs < 1 || t_pred < 1) {
        throw std::invalid_argument("make_windows: segment lengths must be >= 1");
    }
    if (periods < 1) {
        throw std::invalid_argument("make_windows: periods must be >= 1, got " +
                                    std::to_string(periods));
    }
    if (stride < 1) {
        throw std::invalid_argument("make_windows: stride must be >= 1, got " +
                                    std::to_string(stride));
    }
    if (l < t_obs + t_pred) {
        throw std::invalid_argument(
            "make_windows: interval l=" + std::to_string(l) + " must be >= T_obs+T_pred=" +
            std::to_string(t_obs + t_pred) + " so periodic targets precede the prediction");
    }

    WindowSet out;
    const std::int64_t t_min = t_obs + l * periods;
    const std::int64_t t_max = series.n_steps - t_pred;
    if (t_min > t_max) {
        out.series_too_short = true;
        return out;
    }

    const std::int64_t seg_obs = series.h * series.w * 2 * t_obs;
    const std::int64_t seg_pred = series.h * series.w * 2 * t_pred;
    for (std::int64_t t = t_min; t <= t_max; t += stride) {
        SampleWindow win;
        win.anchor = t;
        win.x_c = Tensor::zeros({series.h, series.w, 2, t_obs}, dt);
        win.x_p = Tensor::zeros({periods, series.h, series.w, 2, t_obs}, dt);
        win.y_p = Tensor::zeros({periods, series.h, series.w, 2, t_pred}, dt);
        win.y = Tensor::zeros({series.h, series.w, 2, t_pred}, dt);
        win.dy = Tensor::zeros({periods, series.h, series.w, 2, t_pred}, dt);
        dispatch_dtype(dt, [&](auto tag) {
            using T = typename decltype(tag)::type;
            fill_segment<T>(series, t - t_obs, t_obs, win.x_c.data<T>());
            fill_segment<T>(series, t, t_pred, win.y.data<T>());
            for (std::int64_t pi = 0; pi < periods; ++pi) {
                const std::int64_t p = pi + 1;
                fill_segment<T>(series, t - t_obs - l * p, t_obs,
                                win.x_p.data<T>() + pi * seg_obs);
                fill_segment<T>(series, t - l * p, t_pred, win.y_p.data<T>() + pi * seg_pred);
            }
            const T* y = win.y.data<T>();
            const T* yp = win.y_p.data<T>();
            T* dy = win.dy.data<T>();
            for (std::int64_t pi = 0; pi < periods; ++pi) {
                for (std::int64_t i = 0; i < seg_pred; ++i) {
                    dy[pi * seg_pred + i] = y[i] - yp[pi * seg_pred + i];
                }
            }
        });
        out.windows.push_back(std::move(win));
    }
    return out;
}

SplitResult split_windows(std::vector<SampleWindow> windows, double test_frac, double val_frac,
                          std::uint64_t seed) {
    const std::int64_t n = static_cast<std::int64_t>(windows.size());
    if (n < 3) {
        throw std::invalid_argument("split: need at least 3 windows, got " + std::to_string(n));
    }
    if (!(test_frac > 0.0 && test_frac < 1.0) || !(val_frac > 0.0 && val_frac < 1.0) ||
        test_frac + val_frac >= 1.0) {
        throw std::invalid_argument("split: fractions must lie in (0,1) and sum below 1");
    }

    std::stable_sort(windows.begin(), windows.end(),
                     [](const SampleWindow& a, const SampleWindow& b) {
                         return a.anchor < b.anchor;
                     });

    const std::int64_t n_test =
        std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(test_frac * n)));
    const std::int64_t n_rest = n - n_test;
    const std::int64_t n_val =
        std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(val_frac * n)));
    if (n_val >= n_rest) {
        throw std::invalid_argument("split: not enough windows for a non-empty train set");
    }

    SplitResult out;
    out.test.assign(windows.begin() + n_rest, windows.end());

    std::vector<std::int64_t> order(static_cast<std::size_t>(n_rest));
    std::iota(order.begin(), order.end(), 0);
    rng::Engine eng(seed);
    rng::shuffle(order, eng);
    for (std::int64_t i = 0; i < n_rest; ++i) {
        auto& dst = i < n_val ? out.val : out.train;
        dst.push_back(windows[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// scaling

void ScalingSpec::validate() const {
    if (!std::isfinite(divisor) || divisor <= 0.0) {
        throw std::invalid_argument("scaling: divisor must be finite and > 0, got " +
                                    std::to_string(divisor));
    }
}

FlowSeries scale(const FlowSeries& s, const ScalingSpec& spec) {
    spec.validate();
    FlowSeries out = s;
    for (double& v : out.values) v /= spec.divisor;
    return out;
}

FlowSeries inverse_scale(const FlowSeries& s, const ScalingSpec& spec) {
    spec.validate();
    FlowSeries out = s;
    for (double& v : out.values) v *= spec.divisor;
    return out;
}

Tensor scale(const Tensor& t, const ScalingSpec& spec) {
    spec.validate();
    Tensor out = t.clone();
    dispatch_dtype(out.dtype(), [&](auto tag) {
        using T = typename decltype(tag)::type;
        T* p = out.data<T>();
        const T d = static_cast<T>(spec.divisor);
        for (std::int64_t i = 0; i < out.size(); ++i) p[i] /= d;
    });
    return out;
}

Tensor inverse_scale(const Tensor& t, const ScalingSpec& spec) {
    spec.validate();
    Tensor out = t.clone();
    dispatch_dtype(out.dtype(), [&](auto tag) {
        using T = typename decltype(tag)::type;
        T* p = out.data<T>();
        const T d = static_cast<T>(spec.divisor);
        for (std::int64_t i = 0; i < out.size(); ++i) p[i] *= d;
    });
    return out;
}

// ---------------------------------------------------------------------------
// synthetic generator

FlowSeries synth_generate(std::int64_t h, std::int64_t w, std::int64_t weeks,
                          std::int64_t steps_per_day, double noise_sd, double trend_slope,
                          std::uint64_t seed) {
    if (weeks < 1) {
        throw std::invalid_argument("synth: weeks must be >= 1, got " + std::to_string(weeks));
    }
    if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) {
        throw std::invalid_argument("synth: noise_sd must be finite and >= 0");
    }
    if (!std::isfinite(trend_slope)) {
        throw std::invalid_argument("synth: trend_slope must be finite");
    }
    const std::int64_t n_steps = weeks * 7 * steps_per_day;
    FlowSeries s = FlowSeries::create(h, w, n_steps, steps_per_day, 7, 0);

    rng::Engine eng(seed);
    std::vector<double> base(static_cast<std::size_t>(h * w * 2));
    for (double& b : base) b = rng::uniform(eng, 20.0, 80.0);
    double weekly[7];
    for (double& f : weekly) f = rng::uniform(eng, 0.7, 1.3);

    std::size_t idx = 0;
    for (std::int64_t t = 0; t < n_steps; ++t) {
        const std::int64_t dow = (t / steps_per_day) % 7;
        const double frac = (static_cast<double>(t % steps_per_day) + 0.5) /
                            static_cast<double>(steps_per_day);
        const double d = daily_profile(frac) * weekly[dow];
        for (std::int64_t cell = 0; cell < h * w * 2; ++cell, ++idx) {
            double v = base[static_cast<std::size_t>(cell)] * d +
                       trend_slope * static_cast<double>(t);
            if (noise_sd > 0.0) v += rng::normal(eng, 0.0, noise_sd);
            v = std::max(0.0, v);
            // Snap to the 1/1024 grid; see the header for why.
            s.values[idx] = std::round(v * 1024.0) / 1024.0;
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// persistence

void save_series(const FlowSeries& s, const std::string& path) {
    Tensor t = Tensor::zeros({s.n_steps, s.h, s.w, 2}, DType::f64);
    double* p = t.data<double>();
    std::copy(s.values.begin(), s.values.end(), p);
    prnf::write(path, t);

    nlohmann::ordered_json meta;
    meta["steps_per_day"] = s.steps_per_day;
    meta["start_index"] = s.start_index;
    std::ofstream out(path + ".json", std::ios::trunc);
    if (!out) {
        throw SeriesError(SeriesError::Kind::bad_sidecar,
                          "series: cannot write sidecar " + path + ".json");
    }
    out << meta.dump(2) << "\n";
}

FlowSeries load_series(const std::string& path) {
    Tensor t = prnf::read(path, DType::f64);
    if (t.ndim() != 4 || t.shape()[3] != 2) {
        throw SeriesError(SeriesError::Kind::bad_extents,
                          "series: " + path + " must have extents [n_steps,H,W,2], got " +
                              shape_str(t.shape()));
    }

    std::ifstream in(path + ".json");
    if (!in) {
        throw SeriesError(SeriesError::Kind::bad_sidecar,
                          "series: missing sidecar " + path + ".json");
    }
    nlohmann::json meta;
    try {
        in >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw SeriesError(SeriesError::Kind::bad_sidecar,
                          "series: unreadable sidecar " + path + ".json: " + e.what());
    }
    if (!meta.contains("steps_per_day") || !meta["steps_per_day"].is_number_integer()) {
        throw SeriesError(SeriesError::Kind::bad_sidecar,
                          "series: sidecar " + path + ".json lacks integer steps_per_day");
    }

    FlowSeries s = FlowSeries::create(t.shape()[1], t.shape()[2], t.shape()[0],
                                      meta["steps_per_day"].get<std::int64_t>(), 7,
                                      meta.value("start_index", std::int64_t{0}));
    const double* p = t.data<double>();
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        if (p[i] < 0.0) {
            throw SeriesError(SeriesError::Kind::negative_value,
                              "series: " + path + " holds negative value " +
                                  std::to_string(p[i]) + " at flat index " + std::to_string(i));
        }
        s.values[i] = p[i];
    }
    return s;
}

FlowSeries import_series_csv(const std::string& path, std::int64_t steps_per_day,
                             std::int64_t start_index) {
    std::ifstream in(path);
    if (!in) {
        throw SeriesError(SeriesError::Kind::bad_csv, "series: cannot open " + path);
    }

    struct Row {
        std::int64_t t, h, w;
        double inflow, outflow;
    };
    std::vector<Row> rows;
    std::string line;
    std::int64_t line_no = 0;
    std::int64_t max_t = -1, max_h = -1, max_w = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (line_no == 1 && !fields.empty() &&
            fields[0].find_first_not_of(" \t") != std::string::npos &&
            !std::isdigit(static_cast<unsigned char>(
                fields[0][fields[0].find_first_not_of(" \t")]))) {
            continue;  // header row
        }
        if (fields.size() != 5) {
            throw SeriesError(SeriesError::Kind::bad_csv,
                              "series: " + path + " line " + std::to_string(line_no) +
                                  ": expected 5 columns t,h,w,inflow,outflow, got " +
                                  std::to_string(fields.size()));
        }
        Row r;
        try {
            r.t = std::stoll(fields[0]);
            r.h = std::stoll(fields[1]);
            r.w = std::stoll(fields[2]);
            r.inflow = std::stod(fields[3]);
            r.outflow = std::stod(fields[4]);
        } catch (const std::exception&) {
            throw SeriesError(SeriesError::Kind::bad_csv,
                              "series: " + path + " line " + std::to_string(line_no) +
                                  ": unparsable field");
        }
        if (r.t < 0 || r.h < 0 || r.w < 0) {
            throw SeriesError(SeriesError::Kind::bad_csv,
                              "series: " + path + " line " + std::to_string(line_no) +
                                  ": negative index");
        }
        max_t = std::max(max_t, r.t);
        max_h = std::max(max_h, r.h);
        max_w = std::max(max_w, r.w);
        rows.push_back(r);
    }
    if (rows.empty()) {
        throw SeriesError(SeriesError::Kind::bad_csv, "series: " + path + " holds no data rows");
    }

    FlowSeries s =
        FlowSeries::create(max_h + 1, max_w + 1, max_t + 1, steps_per_day, 7, start_index);
    for (const Row& r : rows) {
        s.set(r.t, r.h, r.w, 0, r.inflow);    // throws on negatives
        s.set(r.t, r.h, r.w, 1, r.outflow);
    }
    return s;
}

}  // namespace prnet::data
