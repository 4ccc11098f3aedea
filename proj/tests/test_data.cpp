// Series handling: window slicing against brute-force index arithmetic,
// split bookkeeping, scaling round trips, the synthetic generator's
// periodicity/trend guarantees, tensor-file round trips with their error
// taxonomy, and CSV import.

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "oracles.h"
#include "prnet/data.hpp"
#include "prnet/prnf.hpp"
#include "prnet/rng.hpp"
#include "prnet/tensor.hpp"
#include "test_util.h"

using prnet::DType;
using prnet::Shape;
using prnet::Tensor;
using prnet::data::FlowSeries;
using prnet::data::SampleWindow;
using prnet::data::SeriesError;
using prnet::data::WindowSet;
using testutil::rand_extent;

namespace data = prnet::data;

TEST_SUITE("data") {

TEST_CASE("window anchors and contents match the index arithmetic") {
    prnet::rng::Engine g(80);
    for (int tuple = 0; tuple < 20; ++tuple) {
        const auto h = rand_extent(g, 1, 4);
        const auto w = rand_extent(g, 1, 4);
        const auto spd = rand_extent(g, 2, 5);
        const auto periods = rand_extent(g, 1, 3);
        const auto weeks = rand_extent(g, periods + 2, periods + 3);
        const auto t_obs = rand_extent(g, 1, 6);
        const auto t_pred = rand_extent(g, 1, 6);
        const auto stride = rand_extent(g, 1, 3);

        const FlowSeries s = data::synth_generate(h, w, weeks, spd, 0.1, 0.0,
                                                  static_cast<std::uint64_t>(tuple));
        const std::int64_t l = s.period_steps();
        const WindowSet ws = data::make_windows(s, t_obs, t_pred, l, periods, stride);

        const std::vector<std::int64_t> want_anchors =
            oracle::window_anchors(s.n_steps, t_obs, t_pred, l, periods, stride);
        REQUIRE(ws.windows.size() == want_anchors.size());
        CHECK_FALSE(ws.series_too_short);

        for (std::size_t wi = 0; wi < ws.windows.size(); ++wi) {
            const SampleWindow& win = ws.windows[wi];
            const std::int64_t t = want_anchors[wi];
            CHECK(win.anchor == t);
            CHECK(win.x_c.shape() == Shape{h, w, 2, t_obs});
            CHECK(win.x_p.shape() == Shape{periods, h, w, 2, t_obs});
            CHECK(win.y_p.shape() == Shape{periods, h, w, 2, t_pred});
            CHECK(win.y.shape() == Shape{h, w, 2, t_pred});
            CHECK(win.dy.shape() == Shape{periods, h, w, 2, t_pred});

            // Sample a handful of positions per window rather than every
            // element of every window.
            for (int probe = 0; probe < 12; ++probe) {
                const auto hh = rand_extent(g, 0, h - 1);
                const auto ww = rand_extent(g, 0, w - 1);
                const auto comp = rand_extent(g, 0, 1);
                const auto io = rand_extent(g, 0, t_obs - 1);
                const auto ip = rand_extent(g, 0, t_pred - 1);
                const auto p = rand_extent(g, 1, periods);

                const auto cell_obs = ((hh * w + ww) * 2 + comp) * t_obs;
                const auto cell_pred = ((hh * w + ww) * 2 + comp) * t_pred;
                const auto per_obs = (p - 1) * h * w * 2 * t_obs;
                const auto per_pred = (p - 1) * h * w * 2 * t_pred;

                CHECK(win.x_c.item_at(cell_obs + io) == s.at(t - t_obs + io, hh, ww, comp));
                CHECK(win.x_p.item_at(per_obs + cell_obs + io) ==
                      s.at(t - t_obs - l * p + io, hh, ww, comp));
                CHECK(win.y_p.item_at(per_pred + cell_pred + ip) ==
                      s.at(t - l * p + ip, hh, ww, comp));
                CHECK(win.y.item_at(cell_pred + ip) == s.at(t + ip, hh, ww, comp));
                // Grid-quantized values subtract exactly at f32.
                CHECK(win.dy.item_at(per_pred + cell_pred + ip) ==
                      s.at(t + ip, hh, ww, comp) - s.at(t - l * p + ip, hh, ww, comp));
            }
        }
    }
}

TEST_CASE("windowing rejects an interval shorter than the window pair") {
    const FlowSeries s = data::synth_generate(2, 2, 5, 4, 0.0, 0.0, 1);
    CHECK_THROWS_AS(data::make_windows(s, 20, 20, s.period_steps(), 1, 1),
                    std::invalid_argument);
}

TEST_CASE("too-short series is flagged, not fatal") {
    const FlowSeries s = data::synth_generate(2, 2, 5, 4, 0.0, 0.0, 1);
    // periods * l already exceeds the series length.
    const WindowSet ws = data::make_windows(s, 4, 4, s.period_steps(), 9, 1);
    CHECK(ws.series_too_short);
    CHECK(ws.windows.empty());
}

TEST_CASE("split separates chronological test windows and seeds the rest") {
    const FlowSeries s = data::synth_generate(3, 3, 6, 4, 0.2, 0.0, 7);
    WindowSet ws = data::make_windows(s, 4, 4, s.period_steps(), 3, 1);
    const std::size_t n = ws.windows.size();
    REQUIRE(n >= 10);

    std::vector<std::int64_t> all_anchors;
    for (const auto& win : ws.windows) all_anchors.push_back(win.anchor);
    std::sort(all_anchors.begin(), all_anchors.end());

    const auto split = data::split_windows(ws.windows, 0.10, 0.10, 42);
    const std::size_t n_test = std::max<std::size_t>(1, n / 10);
    const std::size_t n_val = std::max<std::size_t>(1, n / 10);
    CHECK(split.test.size() == n_test);
    CHECK(split.val.size() == n_val);
    CHECK(split.train.size() == n - n_test - n_val);

    // Test set is exactly the chronologically last block.
    std::vector<std::int64_t> test_anchors;
    for (const auto& win : split.test) test_anchors.push_back(win.anchor);
    std::sort(test_anchors.begin(), test_anchors.end());
    for (std::size_t i = 0; i < n_test; ++i) {
        CHECK(test_anchors[i] == all_anchors[n - n_test + i]);
    }

    // No anchor appears twice across the three sets.
    std::set<std::int64_t> seen;
    for (const auto* part : {&split.train, &split.val, &split.test}) {
        for (const auto& win : *part) {
            CHECK(seen.insert(win.anchor).second);
        }
    }
    CHECK(seen.size() == n);

    // Same seed, same membership; a different seed shuffles differently.
    const auto again = data::split_windows(ws.windows, 0.10, 0.10, 42);
    for (std::size_t i = 0; i < split.val.size(); ++i) {
        CHECK(split.val[i].anchor == again.val[i].anchor);
    }
    const auto other = data::split_windows(ws.windows, 0.10, 0.10, 43);
    bool any_difference = false;
    for (std::size_t i = 0; i < split.val.size(); ++i) {
        any_difference = any_difference || split.val[i].anchor != other.val[i].anchor;
    }
    for (std::size_t i = 0; i < split.train.size(); ++i) {
        any_difference = any_difference || split.train[i].anchor != other.train[i].anchor;
    }
    CHECK(any_difference);

    CHECK_THROWS_AS(data::split_windows(ws.windows, 0.6, 0.5, 1), std::invalid_argument);
    std::vector<SampleWindow> two(ws.windows.begin(), ws.windows.begin() + 2);
    CHECK_THROWS_AS(data::split_windows(two, 0.10, 0.10, 1), std::invalid_argument);
}

TEST_CASE("scaling divides, inverts and round-trips to 1e-12") {
    prnet::rng::Engine g(81);
    data::ScalingSpec spec;
    CHECK(spec.divisor == 50.0);

    FlowSeries s = data::synth_generate(3, 2, 5, 4, 0.3, 0.001, 9);
    const FlowSeries scaled = data::scale(s, spec);
    for (std::int64_t i = 0; i < 20; ++i) {
        const auto idx = static_cast<std::size_t>(
            rand_extent(g, 0, static_cast<std::int64_t>(s.values.size()) - 1));
        CHECK(std::fabs(scaled.values[idx] - s.values[idx] / 50.0) < 1e-12);
    }
    const FlowSeries back = data::inverse_scale(scaled, spec);
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        CHECK(std::fabs(back.values[i] - s.values[i]) < 1e-12);
    }

    const Tensor t = testutil::rand_tensor({4, 5}, g, 0.0, 120.0);
    const Tensor t_back = data::inverse_scale(data::scale(t, spec), spec);
    CHECK(testutil::max_abs_diff(t_back, t.to_vector()) < 1e-12);

    data::ScalingSpec bad;
    bad.divisor = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("synthetic series: seeded, strictly periodic without noise") {
    const FlowSeries a = data::synth_generate(3, 3, 5, 6, 0.4, 0.0, 123);
    const FlowSeries b = data::synth_generate(3, 3, 5, 6, 0.4, 0.0, 123);
    CHECK(a.values == b.values);  // bitwise reproducible

    const FlowSeries c = data::synth_generate(3, 3, 5, 6, 0.4, 0.0, 124);
    CHECK(a.values != c.values);

    // No noise, no trend: every step equals the step one period earlier.
    const FlowSeries clean = data::synth_generate(3, 3, 5, 6, 0.0, 0.0, 123);
    const std::int64_t l = clean.period_steps();
    for (std::int64_t t = l; t < clean.n_steps; ++t) {
        for (std::int64_t hh = 0; hh < clean.h; ++hh) {
            for (std::int64_t ww = 0; ww < clean.w; ++ww) {
                CHECK(clean.at(t, hh, ww, 0) == clean.at(t - l, hh, ww, 0));
                CHECK(clean.at(t, hh, ww, 1) == clean.at(t - l, hh, ww, 1));
            }
        }
    }
    for (const double v : clean.values) CHECK(v >= 0.0);
}

TEST_CASE("synthetic series: grid-aligned trend accumulates exactly") {
    // A slope that is a multiple of the quantization step survives the
    // rounding: value(t) - value(t - l) == slope * l wherever no clamping
    // occurred (values here stay strictly positive).
    const double slope = 1.0 / 1024.0;
    const FlowSeries s = data::synth_generate(2, 2, 5, 6, 0.0, slope, 55);
    const std::int64_t l = s.period_steps();
    for (std::int64_t t = l; t < s.n_steps; ++t) {
        for (std::int64_t comp = 0; comp < 2; ++comp) {
            CHECK(s.at(t, 1, 1, comp) - s.at(t - l, 1, 1, comp) ==
                  slope * static_cast<double>(l));
        }
    }
}

TEST_CASE("tensor files round-trip bit-exactly at f32") {
    prnet::rng::Engine g(82);
    const std::string dir = testutil::temp_dir("prnf");
    const Tensor t = testutil::rand_tensor({3, 4, 2}, g, -5.0, 5.0, DType::f32);
    const std::string path = dir + "/t.prnf";
    prnet::prnf::write(path, t);
    const Tensor back = prnet::prnf::read(path);
    CHECK(back.shape() == t.shape());
    CHECK(prnet::bit_equal(back, t));

    // Rewriting the same tensor produces an identical file.
    const std::string path2 = dir + "/t2.prnf";
    prnet::prnf::write(path2, t);
    std::ifstream f1(path, std::ios::binary);
    std::ifstream f2(path2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);

    // f64 narrows on write, widens on request.
    const Tensor d = testutil::rand_tensor({5}, g, -2.0, 2.0, DType::f64);
    const std::string path3 = dir + "/d.prnf";
    prnet::prnf::write(path3, d);
    const Tensor rd = prnet::prnf::read(path3, DType::f64);
    CHECK(rd.dtype() == DType::f64);
    for (std::int64_t i = 0; i < d.size(); ++i) {
        CHECK(rd.item_at(i) == static_cast<double>(static_cast<float>(d.item_at(i))));
    }
}

TEST_CASE("tensor file errors carry their kind") {
    using prnet::prnf::Error;
    const std::string dir = testutil::temp_dir("prnf-err");
    const std::string good = dir + "/good.prnf";
    prnet::prnf::write(good, Tensor::full({2, 3}, 1.5, DType::f32));

    std::ifstream in(good, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    REQUIRE(bytes.size() == 4 + 4 + 4 + 2 * 4 + 6 * 4);

    const auto write_bytes = [&](const std::string& path, const std::string& b) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(b.data(), static_cast<std::streamsize>(b.size()));
    };
    const auto kind_of = [&](const std::string& path) {
        try {
            (void)prnet::prnf::read(path);
        } catch (const Error& e) {
            return e.kind;
        }
        return Error::Kind::io;  // "no error" placeholder that fails the checks below
    };

    CHECK(kind_of(dir + "/missing.prnf") == Error::Kind::io);

    std::string bad = bytes;
    bad[0] = 'X';
    write_bytes(dir + "/magic.prnf", bad);
    CHECK(kind_of(dir + "/magic.prnf") == Error::Kind::bad_magic);

    bad = bytes;
    bad[4] = 9;
    write_bytes(dir + "/version.prnf", bad);
    CHECK(kind_of(dir + "/version.prnf") == Error::Kind::bad_version);

    write_bytes(dir + "/hdr.prnf", bytes.substr(0, 6));
    CHECK(kind_of(dir + "/hdr.prnf") == Error::Kind::corrupt_payload);

    write_bytes(dir + "/extent.prnf", bytes.substr(0, 14));
    CHECK(kind_of(dir + "/extent.prnf") == Error::Kind::corrupt_payload);

    write_bytes(dir + "/payload.prnf", bytes.substr(0, bytes.size() - 5));
    CHECK(kind_of(dir + "/payload.prnf") == Error::Kind::corrupt_payload);

    write_bytes(dir + "/trailing.prnf", bytes + "zz");
    CHECK(kind_of(dir + "/trailing.prnf") == Error::Kind::corrupt_payload);

    // ndim beyond the format cap.
    bad = bytes;
    bad[8] = 99;
    write_bytes(dir + "/rank.prnf", bad);
    CHECK(kind_of(dir + "/rank.prnf") == Error::Kind::bad_extents);
}

TEST_CASE("series files round-trip with their sidecar") {
    const std::string dir = testutil::temp_dir("series");
    const FlowSeries s = data::synth_generate(3, 2, 5, 4, 0.2, 0.0, 31);
    const std::string path = dir + "/flows.prnf";
    data::save_series(s, path);

    const FlowSeries back = data::load_series(path);
    CHECK(back.h == s.h);
    CHECK(back.w == s.w);
    CHECK(back.n_steps == s.n_steps);
    CHECK(back.steps_per_day == s.steps_per_day);
    CHECK(back.start_index == s.start_index);
    CHECK(back.values == s.values);

    std::filesystem::remove(path + ".json");
    CHECK_THROWS_AS(data::load_series(path), SeriesError);
}

TEST_CASE("series loading rejects malformed payloads") {
    const std::string dir = testutil::temp_dir("series-bad");

    // Wrong rank: a flat tensor is not a [n,h,w,2] series.
    const std::string flat = dir + "/flat.prnf";
    prnet::prnf::write(flat, Tensor::full({6}, 1.0, DType::f32));
    std::ofstream(flat + ".json") << "{\"steps_per_day\": 4, \"start_index\": 0}\n";
    CHECK_THROWS_AS(data::load_series(flat), SeriesError);

    // Negative flow values are invalid.
    const std::string neg = dir + "/neg.prnf";
    prnet::prnf::write(neg, Tensor::full({2, 1, 1, 2}, -1.0, DType::f32));
    std::ofstream(neg + ".json") << "{\"steps_per_day\": 1, \"start_index\": 0}\n";
    CHECK_THROWS_AS(data::load_series(neg), SeriesError);

    // Sidecar that is not JSON.
    const std::string garbled = dir + "/garbled.prnf";
    prnet::prnf::write(garbled, Tensor::full({2, 1, 1, 2}, 1.0, DType::f32));
    std::ofstream(garbled + ".json") << "not json";
    CHECK_THROWS_AS(data::load_series(garbled), SeriesError);
}

TEST_CASE("csv import fills listed cells and zeroes the rest") {
    const std::string dir = testutil::temp_dir("csv");
    const std::string path = dir + "/flows.csv";
    std::ofstream(path) << "t,h,w,inflow,outflow\n"
                        << "0,0,0,1.5,2.5\n"
                        << "1,0,1,3,4\n"
                        << "2,1,0,5,6\n";

    const FlowSeries s = data::import_series_csv(path, 2);
    CHECK(s.n_steps == 3);
    CHECK(s.h == 2);
    CHECK(s.w == 2);
    CHECK(s.steps_per_day == 2);
    CHECK(s.at(0, 0, 0, 0) == 1.5);
    CHECK(s.at(0, 0, 0, 1) == 2.5);
    CHECK(s.at(1, 0, 1, 0) == 3.0);
    CHECK(s.at(2, 1, 0, 1) == 6.0);
    CHECK(s.at(1, 1, 1, 0) == 0.0);  // unlisted stays zero

    // Headerless files parse identically.
    const std::string path2 = dir + "/flows2.csv";
    std::ofstream(path2) << "0,0,0,1.5,2.5\n"
                         << "1,0,1,3,4\n"
                         << "2,1,0,5,6\n";
    const FlowSeries s2 = data::import_series_csv(path2, 2);
    CHECK(s2.values == s.values);

    const std::string bad_fields = dir + "/bad1.csv";
    std::ofstream(bad_fields) << "0,0,0,1.5\n";
    CHECK_THROWS_AS(data::import_series_csv(bad_fields, 2), SeriesError);

    const std::string bad_number = dir + "/bad2.csv";
    std::ofstream(bad_number) << "0,0,zz,1.5,2.5\n";
    CHECK_THROWS_AS(data::import_series_csv(bad_number, 2), SeriesError);

    CHECK_THROWS_AS(data::import_series_csv(dir + "/absent.csv", 2), SeriesError);
}

TEST_CASE("series construction validates extents and values") {
    CHECK_THROWS_AS(data::FlowSeries::create(0, 2, 4, 2), std::invalid_argument);
    FlowSeries s = data::FlowSeries::create(2, 2, 4, 2);
    CHECK_THROWS_AS(s.set(0, 0, 0, 0, -3.0), SeriesError);
    CHECK_THROWS_AS(s.set(0, 0, 0, 0, std::nan("")), SeriesError);
    s.set(0, 0, 0, 0, 1.25);
    CHECK(s.at(0, 0, 0, 0) == 1.25);
}

}  // TEST_SUITE
