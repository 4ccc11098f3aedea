#include "prnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "prnet/prnf.hpp"
#include "prnet/rng.hpp"

namespace prnet::train {

void TrainConfig::validate() const {
    const auto fail = [](const std::string& msg) { throw std::invalid_argument("train: " + msg); };
    if (!std::isfinite(learning_rate) || learning_rate < 0.0) {
        fail("learning_rate must be finite and >= 0");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        fail("betas must lie in [0,1)");
    }
    if (!(epsilon > 0.0)) fail("epsilon must be > 0");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (max_epochs < 1) fail("max_epochs must be >= 1");
    if (patience < 1) fail("patience must be >= 1");
}

AdamState AdamState::init(model::PRNetParams& params) {
    AdamState s;
    params.for_each([&](const std::string& name, Tensor& t) {
        s.slots.push_back({name, Tensor::zeros(t.shape(), t.dtype()),
                           Tensor::zeros(t.shape(), t.dtype())});
    });
    return s;
}

Tensor compute_loss(Graph& g, const Tensor& delta_hat, const Tensor& dy,
                    ops::Reduction reduction) {
    if (delta_hat.ndim() != 5) {
        throw std::invalid_argument("loss: expected [P,H,W,2,T_pred] stacks, got " +
                                    shape_str(delta_hat.shape()));
    }
    return ops::l1_loss(g, delta_hat, dy, reduction);
}

void adam_step(model::PRNetParams& params, AdamState& state, const TrainConfig& cfg) {
    cfg.validate();
    const std::int64_t t = state.step + 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));

    std::size_t slot_i = 0;
    params.for_each([&](const std::string& name, Tensor& p) {
        if (slot_i >= state.slots.size() || state.slots[slot_i].name != name) {
            throw std::invalid_argument("adam: state does not match parameter order at '" +
                                        name + "'");
        }
        AdamState::Slot& slot = state.slots[slot_i++];
        dispatch_dtype(p.dtype(), [&](auto tag) {
            using T = typename decltype(tag)::type;
            const std::int64_t n = p.size();
            const bool has = p.has_grad();
            const T* grad = has ? p.node()->grad_as<T>() : nullptr;
            T* pv = p.data<T>();
            T* m = slot.m.data<T>();
            T* v = slot.v.data<T>();
            const T b1 = static_cast<T>(cfg.beta1);
            const T b2 = static_cast<T>(cfg.beta2);
            const T lr = static_cast<T>(cfg.learning_rate);
            const T eps = static_cast<T>(cfg.epsilon);
            const T c1 = static_cast<T>(1.0 / bc1);
            const T c2 = static_cast<T>(1.0 / bc2);
            for (std::int64_t i = 0; i < n; ++i) {
                const T gv = has ? grad[i] : T(0);
                if (!std::isfinite(static_cast<double>(gv))) {
                    throw NonFiniteError("adam: non-finite gradient in parameter '" + name +
                                         "' at flat index " + std::to_string(i));
                }
                m[i] = b1 * m[i] + (T(1) - b1) * gv;
                v[i] = b2 * v[i] + (T(1) - b2) * gv * gv;
                const T mhat = m[i] * c1;
                const T vhat = v[i] * c2;
                pv[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        });
    });
    state.step = t;
}

namespace {

data::SampleWindow scale_window(const data::SampleWindow& w, const data::ScalingSpec& spec) {
    data::SampleWindow out;
    out.x_c = data::scale(w.x_c, spec);
    out.x_p = data::scale(w.x_p, spec);
    out.y_p = data::scale(w.y_p, spec);
    out.y = data::scale(w.y, spec);
    out.dy = data::scale(w.dy, spec);
    out.anchor = w.anchor;
    return out;
}

// Mean absolute error of the reconstructed forecast against the original-unit
// target, summed over the given windows.
double validation_mae(const model::PRNet& net,
                      const std::vector<data::SampleWindow>& val_scaled,
                      const std::vector<data::SampleWindow>& val_original,
                      const data::ScalingSpec& spec) {
    double total = 0.0;
    std::int64_t count = 0;
    for (std::size_t i = 0; i < val_scaled.size(); ++i) {
        Graph g(false);
        Tensor delta = data::inverse_scale(net.forward(g, val_scaled[i]), spec);
        Tensor yhat = model::reconstruct(delta, val_original[i].y_p);
        const Tensor& y = val_original[i].y;
        dispatch_dtype(y.dtype(), [&](auto tag) {
            using T = typename decltype(tag)::type;
            const T* a = yhat.data<T>();
            const T* b = y.data<T>();
            for (std::int64_t j = 0; j < y.size(); ++j) {
                total += std::abs(static_cast<double>(a[j]) - static_cast<double>(b[j]));
            }
        });
        count += y.size();
    }
    return total / static_cast<double>(count);
}

}  // namespace

TrainResult train(model::PRNet& net, const std::vector<data::SampleWindow>& train_set,
                  const std::vector<data::SampleWindow>& val_set, const TrainConfig& cfg,
                  const data::ScalingSpec& scaling) {
    cfg.validate();
    scaling.validate();
    if (train_set.empty() || val_set.empty()) {
        throw std::invalid_argument("train: train and validation sets must be non-empty");
    }

    std::vector<data::SampleWindow> train_scaled;
    train_scaled.reserve(train_set.size());
    for (const auto& w : train_set) train_scaled.push_back(scale_window(w, scaling));
    std::vector<data::SampleWindow> val_scaled;
    val_scaled.reserve(val_set.size());
    for (const auto& w : val_set) val_scaled.push_back(scale_window(w, scaling));

    model::PRNetParams& params = net.params();
    AdamState adam = AdamState::init(params);

    TrainResult result;
    result.best_params = params.clone();  // last-good snapshot from the start
    result.best_val_mae = std::numeric_limits<double>::infinity();

    rng::Engine shuffle_eng(cfg.seed);
    std::vector<std::size_t> order(train_scaled.size());
    std::iota(order.begin(), order.end(), 0);

    std::int64_t epochs_since_best = 0;
    for (std::int64_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        try {
            rng::shuffle(order, shuffle_eng);
            double epoch_loss_sum = 0.0;
            for (std::size_t start = 0; start < order.size();
                 start += static_cast<std::size_t>(cfg.batch_size)) {
                const std::size_t stop =
                    std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
                const double inv_b = 1.0 / static_cast<double>(stop - start);
                params.zero_grads();
                double batch_loss_sum = 0.0;
                for (std::size_t i = start; i < stop; ++i) {
                    const data::SampleWindow& sample = train_scaled[order[i]];
                    Graph g;
                    Tensor delta = net.forward(g, sample);
                    Tensor loss = compute_loss(g, delta, sample.dy, cfg.loss_reduction);
                    batch_loss_sum += loss.item();
                    Tensor scaled =
                        ops::mul(g, loss, Tensor::scalar(inv_b, loss.dtype()));
                    g.backward(scaled);
                }
                adam_step(params, adam, cfg);
                epoch_loss_sum += batch_loss_sum;
                result.step_losses.push_back(batch_loss_sum * inv_b);
            }

            EpochStats stats;
            stats.epoch = epoch;
            stats.train_loss = epoch_loss_sum / static_cast<double>(train_scaled.size());
            stats.val_mae = validation_mae(net, val_scaled, val_set, scaling);
            result.history.push_back(stats);
            result.epochs_run = epoch;

            if (stats.val_mae < result.best_val_mae) {
                result.best_val_mae = stats.val_mae;
                result.best_epoch = epoch;
                result.best_params = params.clone();
                epochs_since_best = 0;
            } else {
                ++epochs_since_best;
            }
            if (epochs_since_best >= cfg.patience) break;
        } catch (const NonFiniteError& e) {
            result.diverged = true;
            result.divergence_message = e.what();
            break;
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// checkpoints

void save_checkpoint(const std::string& dir, model::PRNetParams& params) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(fs::path(dir) / "weights", ec);
    if (ec) {
        throw CheckpointError("checkpoint: cannot create " + dir + ": " + ec.message());
    }

    const model::ModelConfig& c = params.config;
    nlohmann::ordered_json manifest;
    manifest["format"] = "prnet-checkpoint";
    manifest["version"] = 1;
    manifest["dtype"] = dtype_name(params.dtype());
    manifest["config"] = {{"h", c.h},       {"w", c.w},           {"t_obs", c.t_obs},
                          {"t_pred", c.t_pred}, {"channels", c.channels}, {"blocks", c.blocks},
                          {"periods", c.periods}, {"l", c.l},     {"hp", c.hp},
                          {"wp", c.wp},     {"r_s", c.r_s},       {"r_c", c.r_c},
                          {"k", c.k}};
    auto& list = manifest["params"] = nlohmann::ordered_json::array();
    params.for_each([&](const std::string& name, Tensor& t) {
        nlohmann::ordered_json entry;
        entry["name"] = name;
        entry["shape"] = t.shape();
        list.push_back(entry);
        prnf::write((fs::path(dir) / "weights" / (name + ".prnf")).string(), t);
    });

    std::ofstream out(fs::path(dir) / "manifest.json", std::ios::trunc);
    if (!out) {
        throw CheckpointError("checkpoint: cannot write manifest in " + dir);
    }
    out << manifest.dump(2) << "\n";
}

model::PRNetParams load_checkpoint(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) {
        throw CheckpointError("checkpoint: missing manifest.json in " + dir);
    }
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("checkpoint: unreadable manifest in " + dir + ": " + e.what());
    }

    model::ModelConfig c;
    DType dt;
    try {
        if (manifest.at("format").get<std::string>() != "prnet-checkpoint") {
            throw CheckpointError("checkpoint: " + dir + " is not a model checkpoint");
        }
        dt = dtype_from_name(manifest.at("dtype").get<std::string>());
        const auto& jc = manifest.at("config");
        c.h = jc.at("h").get<std::int64_t>();
        c.w = jc.at("w").get<std::int64_t>();
        c.t_obs = jc.at("t_obs").get<std::int64_t>();
        c.t_pred = jc.at("t_pred").get<std::int64_t>();
        c.channels = jc.at("channels").get<std::int64_t>();
        c.blocks = jc.at("blocks").get<std::int64_t>();
        c.periods = jc.at("periods").get<std::int64_t>();
        c.l = jc.at("l").get<std::int64_t>();
        c.hp = jc.at("hp").get<std::int64_t>();
        c.wp = jc.at("wp").get<std::int64_t>();
        c.r_s = jc.at("r_s").get<std::int64_t>();
        c.r_c = jc.at("r_c").get<std::int64_t>();
        c.k = jc.at("k").get<std::int64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("checkpoint: malformed manifest in " + dir + ": " + e.what());
    }
    c.validate();

    model::PRNetParams params = model::init_params(c, 0, dt);
    std::size_t listed = 0;
    try {
        listed = manifest.at("params").size();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("checkpoint: malformed manifest in " + dir + ": " + e.what());
    }
    std::size_t expected = 0;
    params.for_each([&](const std::string&, Tensor&) { ++expected; });
    if (listed != expected) {
        throw CheckpointError("checkpoint: " + dir + " lists " + std::to_string(listed) +
                              " buffers, model needs " + std::to_string(expected));
    }

    params.for_each([&](const std::string& name, Tensor& t) {
        const std::string path = (fs::path(dir) / "weights" / (name + ".prnf")).string();
        Tensor loaded;
        try {
            loaded = prnf::read(path, dt);
        } catch (const prnf::Error& e) {
            throw CheckpointError("checkpoint: cannot read buffer '" + name + "': " + e.what());
        }
        if (loaded.shape() != t.shape()) {
            throw CheckpointError("checkpoint: buffer '" + name + "' has extents " +
                                  shape_str(loaded.shape()) + ", expected " +
                                  shape_str(t.shape()));
        }
        loaded.set_requires_grad(true);
        t = loaded;
    });
    return params;
}

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("history: cannot open " + path + " for writing");
    }
    out << "epoch,train_loss,val_mae\n";
    char buf[96];
    for (const EpochStats& row : history) {
        std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g\n",
                      static_cast<long long>(row.epoch), row.train_loss, row.val_mae);
        out << buf;
    }
}

}  // namespace prnet::train
