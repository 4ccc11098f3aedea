#include "prnet/model.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "prnet/ops.hpp"
#include "prnet/rng.hpp"

namespace prnet::model {

void ModelConfig::validate() const {
    const auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
    if (h < 1 || w < 1) fail("grid extents must be >= 1");
    if (t_obs < 1 || t_pred < 1) fail("segment lengths must be >= 1");
    if (channels < 1) fail("channels must be >= 1");
    if (blocks < 1) fail("blocks must be >= 1");
    if (periods < 1) fail("periods must be >= 1");
    if (l < t_obs + t_pred) {
        fail("interval l=" + std::to_string(l) + " must be >= T_obs+T_pred=" +
             std::to_string(t_obs + t_pred));
    }
    if (hp < 1 || hp > h || wp < 1 || wp > w) {
        fail("pooled extents " + std::to_string(hp) + "x" + std::to_string(wp) +
             " must fit within the grid " + std::to_string(h) + "x" + std::to_string(w));
    }
    if (r_s < 1 || (hp * wp) % r_s != 0) {
        fail("Hp*Wp=" + std::to_string(hp * wp) + " must be divisible by r_s=" +
             std::to_string(r_s));
    }
    if (r_c < 1 || channels % r_c != 0) {
        fail("C=" + std::to_string(channels) + " must be divisible by r_c=" +
             std::to_string(r_c));
    }
    if (k < 1 || k % 2 == 0) fail("conv kernel size must be odd, got " + std::to_string(k));
}

std::string PRNetParams::block_prefix(std::size_t m) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "block%02zu", m);
    return buf;
}

std::int64_t PRNetParams::count() {
    std::int64_t total = 0;
    for_each([&](const std::string&, Tensor& t) { total += t.size(); });
    return total;
}

void PRNetParams::set_requires_grad(bool v) {
    for_each([v](const std::string&, Tensor& t) { t.set_requires_grad(v); });
}

void PRNetParams::zero_grads() {
    for_each([](const std::string&, Tensor& t) { t.zero_grad(); });
}

PRNetParams PRNetParams::clone() {
    PRNetParams out;
    out.config = config;
    out.block.resize(block.size());
    out.embed_w = embed_w.clone();
    out.embed_b = embed_b.clone();
    if (embed_pred_w.defined()) {
        out.embed_pred_w = embed_pred_w.clone();
        out.embed_pred_b = embed_pred_b.clone();
    }
    for (std::size_t m = 0; m < block.size(); ++m) {
        out.block[m].w_f1 = block[m].w_f1.clone();
        out.block[m].b_f1 = block[m].b_f1.clone();
        out.block[m].w_f2 = block[m].w_f2.clone();
        out.block[m].b_f2 = block[m].b_f2.clone();
        out.block[m].w_s1 = block[m].w_s1.clone();
        out.block[m].w_s2 = block[m].w_s2.clone();
        out.block[m].w_c1 = block[m].w_c1.clone();
        out.block[m].w_c2 = block[m].w_c2.clone();
    }
    out.fuse_w = fuse_w.clone();
    out.dec_w = dec_w.clone();
    out.dec_b = dec_b.clone();
    bool grad = embed_w.requires_grad();
    out.set_requires_grad(grad);
    return out;
}

PRNetParams init_params(const ModelConfig& cfg, std::uint64_t seed, DType dt) {
    cfg.validate();
    rng::Engine eng(seed);
    const auto weight = [&](Shape shape, std::int64_t fan_in) {
        const double a = std::sqrt(1.0 / static_cast<double>(fan_in));
        return Tensor::uniform(std::move(shape), -a, a, eng, dt, true);
    };
    const auto bias = [&](std::int64_t n) { return Tensor::zeros({n}, dt, true); };

    const std::int64_t c = cfg.channels;
    const std::int64_t pooled = cfg.pooled();
    const std::int64_t pooled_red = pooled / cfg.r_s;
    const std::int64_t c_red = c / cfg.r_c;

    PRNetParams p;
    p.config = cfg;
    p.embed_w = weight({1, 1, 2 * cfg.t_obs, c}, 2 * cfg.t_obs);
    p.embed_b = bias(c);
    if (cfg.t_pred != cfg.t_obs) {
        p.embed_pred_w = weight({1, 1, 2 * cfg.t_pred, c}, 2 * cfg.t_pred);
        p.embed_pred_b = bias(c);
    }
    p.block.resize(static_cast<std::size_t>(cfg.blocks));
    for (auto& bp : p.block) {
        bp.w_f1 = weight({cfg.k, cfg.k, c, c}, cfg.k * cfg.k * c);
        bp.b_f1 = bias(c);
        bp.w_f2 = weight({cfg.k, cfg.k, c, c}, cfg.k * cfg.k * c);
        bp.b_f2 = bias(c);
        bp.w_s1 = weight({pooled, pooled_red}, pooled);
        bp.w_s2 = weight({pooled_red, pooled}, pooled_red);
        // Stored transposed relative to w_s1/w_s2: the channel-excitation
        // stage right-multiplies by the transpose, so fan-in is the column
        // count here.
        bp.w_c1 = weight({c_red, c}, c);
        bp.w_c2 = weight({c, c_red}, c_red);
    }
    p.fuse_w = weight({2 * c, c}, 2 * c);
    p.dec_w = weight({c, 2 * cfg.t_pred}, c);
    p.dec_b = bias(2 * cfg.t_pred);
    return p;
}

std::int64_t param_count(const ModelConfig& cfg) {
    cfg.validate();
    const std::int64_t c = cfg.channels;
    const std::int64_t pooled = cfg.pooled();
    std::int64_t embed = 2 * cfg.t_obs * c + c;
    if (cfg.t_pred != cfg.t_obs) embed += 2 * cfg.t_pred * c + c;
    const std::int64_t per_block = 2 * (cfg.k * cfg.k * c * c + c)       // convs + biases
                                   + 2 * (pooled * (pooled / cfg.r_s))   // spatial gate pair
                                   + 2 * (c * (c / cfg.r_c));            // channel gate pair
    const std::int64_t fuse = 2 * c * c;
    const std::int64_t dec = c * 2 * cfg.t_pred + 2 * cfg.t_pred;
    return embed + cfg.blocks * per_block + fuse + dec;
}

// ---------------------------------------------------------------------------

PRNet::PRNet(PRNetParams params) : params_(std::move(params)) {
    params_.config.validate();
    params_.set_requires_grad(true);
}

Tensor PRNet::embed_segment(Graph& g, const Tensor& seg) const {
    const ModelConfig& cfg = params_.config;
    if (seg.ndim() != 4 || seg.shape()[0] != cfg.h || seg.shape()[1] != cfg.w ||
        seg.shape()[2] != 2) {
        throw std::invalid_argument("embed: segment must be [H,W,2,T], got " +
                                    shape_str(seg.shape()));
    }
    const std::int64_t t_len = seg.shape()[3];
    const Tensor* wp = nullptr;
    const Tensor* bp = nullptr;
    if (t_len == cfg.t_obs) {
        wp = &params_.embed_w;
        bp = &params_.embed_b;
    } else if (t_len == cfg.t_pred) {
        wp = params_.embed_pred_w.defined() ? &params_.embed_pred_w : &params_.embed_w;
        bp = params_.embed_pred_w.defined() ? &params_.embed_pred_b : &params_.embed_b;
    } else {
        throw std::invalid_argument("embed: segment length " + std::to_string(t_len) +
                                    " matches neither T_obs=" + std::to_string(cfg.t_obs) +
                                    " nor T_pred=" + std::to_string(cfg.t_pred));
    }
    Tensor flat = ops::reshape(g, seg, {cfg.h, cfg.w, 2 * t_len});
    return ops::conv2d(g, flat, *wp, *bp, 0);
}

Tensor PRNet::sce_cnn(Graph& g, const Tensor& h, const BlockParams& bp) const {
    const std::int64_t pad = (params_.config.k - 1) / 2;
    Tensor z = ops::relu(g, ops::conv2d(g, h, bp.w_f1, pad));
    z = ops::add(g, z, bp.b_f1);  // bias joins after the activation
    return ops::conv2d(g, z, bp.w_f2, bp.b_f2, pad);
}

Tensor PRNet::sem(Graph& g, const Tensor& h_vec, const BlockParams& bp) const {
    const ModelConfig& cfg = params_.config;
    Tensor pooled = ops::adaptive_max_pool2d(g, h_vec, cfg.hp, cfg.wp);
    Tensor s = ops::reshape(g, ops::permute(g, pooled, {2, 0, 1}), {cfg.channels, cfg.pooled()});
    Tensor z = ops::relu(g, ops::linear(g, s, bp.w_s1));
    Tensor gate = ops::sigmoid(g, ops::linear(g, z, bp.w_s2));
    return ops::permute(g, ops::reshape(g, gate, {cfg.channels, cfg.hp, cfg.wp}), {1, 2, 0});
}

Tensor PRNet::cem(Graph& g, const Tensor& h_tilde_s, const Tensor& h_vec,
                  const BlockParams& bp) const {
    Tensor c = ops::global_avg_pool(g, h_tilde_s);
    // The stored matrices left-multiply column vectors; transposing them
    // turns each product into a row-vector linear.
    Tensor u = ops::relu(g, ops::linear(g, c, ops::permute(g, bp.w_c1, {1, 0})));
    Tensor gate = ops::sigmoid(g, ops::linear(g, u, ops::permute(g, bp.w_c2, {1, 0})));
    return ops::mul(g, h_vec, gate);  // gate broadcasts over the grid
}

Tensor PRNet::encode(Graph& g, const Tensor& embedding) const {
    Tensor h = embedding;
    for (const BlockParams& bp : params_.block) {
        Tensor h_vec = sce_cnn(g, h, bp);
        h = cem(g, sem(g, h_vec, bp), h_vec, bp);
    }
    return h;
}

Tensor PRNet::diff(Graph& g, const Tensor& h_x, const Tensor& h_px) const {
    if (h_px.ndim() != 4 || h_x.ndim() != 3 ||
        Shape(h_px.shape().begin() + 1, h_px.shape().end()) != h_x.shape()) {
        throw std::invalid_argument("diff: need [H,W,C] against [P,H,W,C], got " +
                                    shape_str(h_x.shape()) + " and " + shape_str(h_px.shape()));
    }
    return ops::sub(g, h_x, h_px);
}

Tensor PRNet::fuse(Graph& g, const Tensor& diff_h, const Tensor& h_py) const {
    if (diff_h.shape() != h_py.shape()) {
        throw std::invalid_argument("fuse: shape mismatch: " + shape_str(diff_h.shape()) +
                                    " vs " + shape_str(h_py.shape()));
    }
    Tensor cat = ops::concat(g, diff_h, h_py, 3);
    return ops::linear(g, cat, params_.fuse_w);
}

Tensor PRNet::decode(Graph& g, const Tensor& fused) const {
    const ModelConfig& cfg = params_.config;
    Tensor flat = ops::linear(g, fused, params_.dec_w, params_.dec_b);
    return ops::reshape(g, flat, {cfg.periods, cfg.h, cfg.w, 2, cfg.t_pred});
}

Tensor PRNet::encode_stack(Graph& g, const Tensor& stack) const {
    const ModelConfig& cfg = params_.config;
    Tensor out;
    for (std::int64_t p = 0; p < cfg.periods; ++p) {
        Tensor seg = stack.slice_leading(p);  // data slice; inputs carry no grad
        Tensor enc = encode(g, embed_segment(g, seg));
        Tensor row = ops::reshape(g, enc, {1, cfg.h, cfg.w, cfg.channels});
        out = p == 0 ? row : ops::concat(g, out, row, 0);
    }
    return out;
}

Tensor PRNet::forward(Graph& g, const data::SampleWindow& sample) const {
    const ModelConfig& cfg = params_.config;
    const Shape want_xc{cfg.h, cfg.w, 2, cfg.t_obs};
    const Shape want_xp{cfg.periods, cfg.h, cfg.w, 2, cfg.t_obs};
    const Shape want_yp{cfg.periods, cfg.h, cfg.w, 2, cfg.t_pred};
    if (sample.x_c.shape() != want_xc || sample.x_p.shape() != want_xp ||
        sample.y_p.shape() != want_yp) {
        throw std::invalid_argument(
            "forward: sample shapes " + shape_str(sample.x_c.shape()) + ", " +
            shape_str(sample.x_p.shape()) + ", " + shape_str(sample.y_p.shape()) +
            " do not match the configured " + shape_str(want_xc) + ", " + shape_str(want_xp) +
            ", " + shape_str(want_yp));
    }
    Tensor h_x = encode(g, embed_segment(g, sample.x_c));
    Tensor h_px = encode_stack(g, sample.x_p);
    Tensor h_py = encode_stack(g, sample.y_p);
    return decode(g, fuse(g, diff(g, h_x, h_px), h_py));
}

Tensor reconstruct(const Tensor& delta_hat, const Tensor& y_p) {
    if (delta_hat.shape() != y_p.shape() || delta_hat.ndim() != 5) {
        throw std::invalid_argument("reconstruct: need matching [P,H,W,2,T] stacks, got " +
                                    shape_str(delta_hat.shape()) + " and " +
                                    shape_str(y_p.shape()));
    }
    if (delta_hat.dtype() != y_p.dtype()) {
        throw std::invalid_argument("reconstruct: dtype mismatch");
    }
    const std::int64_t p_axis = delta_hat.shape()[0];
    const std::int64_t block = delta_hat.size() / p_axis;
    Shape out_shape(delta_hat.shape().begin() + 1, delta_hat.shape().end());
    Tensor out = Tensor::zeros(out_shape, delta_hat.dtype());
    dispatch_dtype(delta_hat.dtype(), [&](auto tag) {
        using T = typename decltype(tag)::type;
        const T* d = delta_hat.data<T>();
        const T* yp = y_p.data<T>();
        T* o = out.data<T>();
        for (std::int64_t i = 0; i < block; ++i) {
            double acc = 0.0;
            for (std::int64_t p = 0; p < p_axis; ++p) {
                const std::int64_t at = p * block + i;
                acc += static_cast<double>(d[at]) + static_cast<double>(yp[at]);
            }
            o[i] = static_cast<T>(acc / static_cast<double>(p_axis));
        }
    });
    return out;
}

}  // namespace prnet::model
