// Metric definitions against hand computations and naive loops, the
// historical-average baseline, report generation, evaluation threading
// determinism, and the budget-sweep bookkeeping.

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "oracles.h"
#include "prnet/data.hpp"
#include "prnet/eval.hpp"
#include "prnet/model.hpp"
#include "prnet/train.hpp"
#include "test_util.h"

using prnet::DType;
using prnet::Tensor;
using prnet::data::FlowSeries;
using prnet::data::SampleWindow;
using prnet::model::ModelConfig;
using prnet::model::PRNet;
using prnet::model::PRNetParams;

namespace data = prnet::data;
namespace eval = prnet::eval;

namespace {

ModelConfig small_config() {
    ModelConfig c;
    c.h = 4;
    c.w = 4;
    c.t_obs = 2;
    c.t_pred = 2;
    c.channels = 8;
    c.blocks = 1;
    c.periods = 2;
    c.l = 14;
    c.hp = 2;
    c.wp = 2;
    c.r_s = 2;
    c.r_c = 2;
    c.k = 3;
    return c;
}

std::vector<SampleWindow> small_windows(std::uint64_t seed, std::size_t count) {
    const FlowSeries s = data::synth_generate(4, 4, 5, 2, 0.3, 0.0, seed);
    data::WindowSet ws = data::make_windows(s, 2, 2, 14, 2, 1);
    REQUIRE(ws.windows.size() >= count);
    ws.windows.resize(count);
    return ws.windows;
}

// All-zero parameters make the forward pass emit exactly zero deviations,
// so the model's forecast collapses to the historical average.
PRNet zero_net(const ModelConfig& c) {
    PRNetParams p = prnet::model::init_params(c, 0, DType::f32);
    p.for_each([](const std::string&, Tensor& t) {
        float* d = t.data<float>();
        for (std::int64_t i = 0; i < t.size(); ++i) d[i] = 0.0f;
    });
    return PRNet(p);
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("metric values on a worked example") {
    const Tensor pred = Tensor::from_vector({2}, {0.0, 2.0});
    const Tensor truth = Tensor::from_vector({2}, {2.0, 2.0});
    CHECK(eval::mae(pred, truth) == 1.0);
    CHECK(std::fabs(eval::rmse(pred, truth) - std::sqrt(2.0)) < 1e-15);
    // First element: 2*|0-2|/(0+2) = 2; second: 0. Mean = 1.
    CHECK(eval::smape(pred, truth) == 1.0);

    // Both zero: the 0/0 convention makes the term 0, not NaN.
    const Tensor z = Tensor::zeros({3});
    CHECK(eval::smape(z, z) == 0.0);
    CHECK(eval::mae(z, z) == 0.0);

    CHECK_THROWS_AS(eval::mae(pred, Tensor::zeros({3})), std::invalid_argument);
}

TEST_CASE("metrics match the naive loops on 60 random cases") {
    prnet::rng::Engine g(100);
    for (int it = 0; it < 60; ++it) {
        const auto n = testutil::rand_extent(g, 1, 40);
        const Tensor a = testutil::rand_tensor({n}, g, -4.0, 4.0);
        const Tensor b = testutil::rand_tensor({n}, g, -4.0, 4.0);
        CHECK(std::fabs(eval::mae(a, b) - oracle::mae(a.to_vector(), b.to_vector())) < 1e-12);
        CHECK(std::fabs(eval::rmse(a, b) - oracle::rmse(a.to_vector(), b.to_vector())) < 1e-12);
        CHECK(std::fabs(eval::smape(a, b) - oracle::smape(a.to_vector(), b.to_vector())) <
              1e-12);
    }
}

TEST_CASE("smape stays within its [0, 2] range") {
    prnet::rng::Engine g(101);
    for (int it = 0; it < 20; ++it) {
        const Tensor a = testutil::rand_tensor({30}, g, -10.0, 10.0);
        const Tensor b = testutil::rand_tensor({30}, g, -10.0, 10.0);
        const double v = eval::smape(a, b);
        CHECK(v >= 0.0);
        CHECK(v <= 2.0);
    }
}

TEST_CASE("the historical average is the periodic-target mean") {
    const auto windows = small_windows(42, 4);
    for (const auto& win : windows) {
        const Tensor ha = eval::ha_baseline(win);
        CHECK(ha.shape() == win.y.shape());
        const oracle::Vec want = oracle::reconstruct(
            oracle::Vec(static_cast<std::size_t>(win.y_p.size()), 0.0), win.y_p.to_vector(),
            win.y_p.shape()[0]);
        CHECK(testutil::max_abs_diff(ha, want) < 1e-12);
        // Bit-exact alias of reconstruct with a zero deviation stack.
        CHECK(prnet::bit_equal(
            ha, prnet::model::reconstruct(Tensor::zeros(win.y_p.shape(), win.y_p.dtype()),
                                          win.y_p)));
    }
}

TEST_CASE("a zero-deviation model scores exactly like the baseline") {
    const ModelConfig c = small_config();
    const auto windows = small_windows(7, 8);
    const PRNet net = zero_net(c);
    const eval::ForecastReport r = eval::evaluate(net, windows, data::ScalingSpec{}, 1);

    CHECK(r.samples == 8);
    CHECK(r.t_pred == c.t_pred);
    CHECK(r.model.aggregate.mae == r.ha.aggregate.mae);
    CHECK(r.model.aggregate.rmse == r.ha.aggregate.rmse);
    CHECK(r.model.aggregate.smape == r.ha.aggregate.smape);
    REQUIRE(r.model.per_step.size() == static_cast<std::size_t>(c.t_pred));
    for (std::size_t i = 0; i < r.model.per_step.size(); ++i) {
        CHECK(r.model.per_step[i].mae == r.ha.per_step[i].mae);
    }
    // The baseline is off the truth by a nonzero margin on noisy data.
    CHECK(r.ha.aggregate.mae > 0.0);
}

TEST_CASE("evaluation is invariant to the thread count") {
    const ModelConfig c = small_config();
    const auto windows = small_windows(13, 10);
    const PRNet net(prnet::model::init_params(c, 3, DType::f32));

    const eval::ForecastReport r1 = eval::evaluate(net, windows, data::ScalingSpec{}, 1);
    const eval::ForecastReport r3 = eval::evaluate(net, windows, data::ScalingSpec{}, 3);
    const eval::ForecastReport r8 = eval::evaluate(net, windows, data::ScalingSpec{}, 8);

    CHECK(r1.model.aggregate.mae == r3.model.aggregate.mae);
    CHECK(r1.model.aggregate.rmse == r8.model.aggregate.rmse);
    CHECK(r1.model.aggregate.smape == r3.model.aggregate.smape);
    for (std::size_t i = 0; i < r1.model.per_step.size(); ++i) {
        CHECK(r1.model.per_step[i].mae == r3.model.per_step[i].mae);
        CHECK(r1.model.per_step[i].mae == r8.model.per_step[i].mae);
    }
}

TEST_CASE("reports serialize with stable layout") {
    const ModelConfig c = small_config();
    const auto windows = small_windows(19, 5);
    const PRNet net(prnet::model::init_params(c, 4, DType::f32));
    eval::ForecastReport r = eval::evaluate(net, windows, data::ScalingSpec{}, 1);
    r.config_echo = {{"alpha", "1"}, {"beta", "two"}};

    const std::string dir = testutil::temp_dir("report");
    eval::write_report_json(dir + "/report.json", r);
    eval::write_report_csv(dir + "/report.csv", r);

    std::ifstream jf(dir + "/report.json");
    const nlohmann::json j = nlohmann::json::parse(jf);
    CHECK(j["samples"] == 5);
    CHECK(j["t_pred"] == c.t_pred);
    CHECK(j["config"]["alpha"] == "1");
    CHECK(j["config"]["beta"] == "two");
    REQUIRE(j["predictors"].size() == 2);
    CHECK(j["predictors"][0]["name"] == "prnet");
    CHECK(j["predictors"][1]["name"] == "ha");
    CHECK(j["predictors"][0]["per_step"].size() == static_cast<std::size_t>(c.t_pred));
    CHECK(j["predictors"][0]["per_step"][0]["step"] == 1);
    CHECK(std::fabs(j["predictors"][0]["aggregate"]["mae"].get<double>() -
                    r.model.aggregate.mae) == 0.0);

    // Rewriting produces identical bytes.
    eval::write_report_json(dir + "/report2.json", r);
    std::ifstream a(dir + "/report.json", std::ios::binary);
    std::ifstream b(dir + "/report2.json", std::ios::binary);
    const std::string ba((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    const std::string bb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(ba == bb);

    // CSV: header, per-step rows for both predictors, then the "all" rows.
    std::ifstream cf(dir + "/report.csv");
    std::string line;
    std::getline(cf, line);
    CHECK(line == "step,predictor,mae,rmse,smape");
    int rows = 0;
    while (std::getline(cf, line)) {
        if (!line.empty()) ++rows;
    }
    CHECK(rows == 2 * (c.t_pred + 1));
}

TEST_CASE("budget sweep keeps the earliest windows and reuses the test set") {
    const FlowSeries s = data::synth_generate(4, 4, 6, 2, 0.3, 0.0, 77);
    data::WindowSet ws = data::make_windows(s, 2, 2, 14, 2, 1);
    data::SplitResult split = data::split_windows(std::move(ws.windows), 0.10, 0.10, 5);

    const ModelConfig c = small_config();
    std::vector<std::size_t> sizes_seen;
    const eval::TrainFn fn = [&](const std::vector<SampleWindow>& train_subset,
                                 const std::vector<SampleWindow>& val) {
        CHECK(val.size() == split.val.size());
        sizes_seen.push_back(train_subset.size());
        // Subset anchors must be the chronologically smallest of the split,
        // in the split's own order.
        std::vector<std::int64_t> split_sorted;
        for (const auto& w : split.train) split_sorted.push_back(w.anchor);
        std::sort(split_sorted.begin(), split_sorted.end());
        std::int64_t cutoff = split_sorted[train_subset.size() - 1];
        std::size_t cursor = 0;
        for (const auto& w : split.train) {
            if (w.anchor <= cutoff) {
                REQUIRE(cursor < train_subset.size());
                CHECK(train_subset[cursor].anchor == w.anchor);
                ++cursor;
            }
        }
        CHECK(cursor == train_subset.size());
        return zero_net(c);
    };

    const std::vector<double> ratios = {0.25, 1.0};
    const auto rows = eval::budget_sweep(split, ratios, data::ScalingSpec{}, fn, 1);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].ratio == 0.25);
    CHECK(rows[1].ratio == 1.0);
    CHECK(rows[0].train_windows ==
          static_cast<std::int64_t>(static_cast<double>(split.train.size()) * 0.25));
    CHECK(rows[1].train_windows == static_cast<std::int64_t>(split.train.size()));
    REQUIRE(sizes_seen.size() == 2);
    CHECK(sizes_seen[0] == static_cast<std::size_t>(rows[0].train_windows));
    CHECK(sizes_seen[1] == static_cast<std::size_t>(rows[1].train_windows));

    // The zero net scores exactly like the baseline, and the baseline sees
    // the same test windows at every ratio.
    CHECK(rows[0].report.ha.aggregate.mae == rows[1].report.ha.aggregate.mae);
    CHECK(rows[0].report.model.aggregate.mae == rows[1].report.model.aggregate.mae);
    CHECK(rows[0].report.samples == static_cast<std::int64_t>(split.test.size()));

    CHECK_THROWS_AS(eval::budget_sweep(split, {0.0}, data::ScalingSpec{}, fn, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(eval::budget_sweep(split, {1.5}, data::ScalingSpec{}, fn, 1),
                    std::invalid_argument);

    const std::string dir = testutil::temp_dir("sweep");
    eval::write_sweep_csv(dir + "/sweep.csv", rows);
    std::ifstream cf(dir + "/sweep.csv");
    std::string line;
    std::getline(cf, line);
    CHECK(line == "ratio,train_windows,predictor,mae,rmse,smape");
    int data_rows = 0;
    while (std::getline(cf, line)) {
        if (!line.empty()) ++data_rows;
    }
    CHECK(data_rows == 4);  // two predictors per ratio
}

}  // TEST_SUITE
