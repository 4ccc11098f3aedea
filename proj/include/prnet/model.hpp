#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prnet/autograd.hpp"
#include "prnet/data.hpp"
#include "prnet/tensor.hpp"

// The periodic-residual forecasting network. A shared embedding lifts each
// flow segment to C channels, a stack of M SCE blocks (local CNN + spatial
// and channel gating) encodes every segment with one set of weights, the
// closeness state is differenced against each periodic state, fused with the
// encoded periodic targets, and decoded into per-period deviations. Adding
// the deviations back onto the periodic targets and averaging yields the
// absolute forecast.

namespace prnet::model {

struct ModelConfig {
    std::int64_t h = 32;
    std::int64_t w = 32;
    std::int64_t t_obs = 12;
    std::int64_t t_pred = 12;
    std::int64_t channels = 64;   // C
    std::int64_t blocks = 9;      // M
    std::int64_t periods = 3;     // P
    std::int64_t l = 168;         // periodic interval in steps
    std::int64_t hp = 8;          // pooled height H'
    std::int64_t wp = 8;          // pooled width W'
    std::int64_t r_s = 8;         // spatial reduction ratio
    std::int64_t r_c = 4;         // channel reduction ratio
    std::int64_t k = 3;           // conv kernel size (odd)

    void validate() const;  // throws std::invalid_argument
    std::int64_t pooled() const { return hp * wp; }
};

// Per-block weights. The first conv pair follows
//   h_vec = W_f2 * (relu(W_f1 * h) + b_f1) + b_f2
// (b_f1 lands after the activation); the gating maps carry no biases.
struct BlockParams {
    Tensor w_f1;  // [k,k,C,C]
    Tensor b_f1;  // [C]
    Tensor w_f2;  // [k,k,C,C]
    Tensor b_f2;  // [C]
    Tensor w_s1;  // [Hp*Wp, Hp*Wp/r_s]
    Tensor w_s2;  // [Hp*Wp/r_s, Hp*Wp]
    Tensor w_c1;  // [C/r_c, C]   (left-multiplies the pooled channel vector)
    Tensor w_c2;  // [C, C/r_c]
};

struct PRNetParams {
    ModelConfig config;
    Tensor embed_w;  // [1,1,2*T_obs,C]
    Tensor embed_b;  // [C]
    // Only present when T_pred != T_obs; otherwise the embedding is shared.
    Tensor embed_pred_w;
    Tensor embed_pred_b;
    std::vector<BlockParams> block;
    Tensor fuse_w;  // [2C,C]
    Tensor dec_w;   // [C,2*T_pred]
    Tensor dec_b;   // [2*T_pred]

    // Visits every buffer as (stable name, tensor), in a fixed order.
    template <typename F>
    void for_each(F&& f) {
        f("embed.w", embed_w);
        f("embed.b", embed_b);
        if (embed_pred_w.defined()) {
            f("embed_pred.w", embed_pred_w);
            f("embed_pred.b", embed_pred_b);
        }
        for (std::size_t m = 0; m < block.size(); ++m) {
            const std::string p = block_prefix(m);
            f(p + ".w_f1", block[m].w_f1);
            f(p + ".b_f1", block[m].b_f1);
            f(p + ".w_f2", block[m].w_f2);
            f(p + ".b_f2", block[m].b_f2);
            f(p + ".w_s1", block[m].w_s1);
            f(p + ".w_s2", block[m].w_s2);
            f(p + ".w_c1", block[m].w_c1);
            f(p + ".w_c2", block[m].w_c2);
        }
        f("fuse.w_d", fuse_w);
        f("decoder.w", dec_w);
        f("decoder.b", dec_b);
    }

    static std::string block_prefix(std::size_t m);

    std::int64_t count();             // sums allocated buffer sizes
    void set_requires_grad(bool v);
    void zero_grads();
    PRNetParams clone();              // deep value copy, keeps requires_grad flags
    DType dtype() const { return embed_w.dtype(); }
};

// Seeded uniform(-a, a) with a = sqrt(1/fan_in) per weight buffer, zero
// biases; the draw order is fixed, so a seed pins every value.
PRNetParams init_params(const ModelConfig& cfg, std::uint64_t seed, DType dt);

// Closed-form learnable-scalar count; independent of P.
std::int64_t param_count(const ModelConfig& cfg);

class PRNet {
public:
    explicit PRNet(PRNetParams params);

    const ModelConfig& config() const { return params_.config; }
    PRNetParams& params() { return params_; }
    const PRNetParams& params() const { return params_; }

    // seg [H,W,2,T] with T in {T_obs, T_pred} -> [H,W,C] via 1x1 conv over
    // the flattened 2T channels.
    Tensor embed_segment(Graph& g, const Tensor& seg) const;
    // Eq-by-eq block pieces; encode() composes them M times.
    Tensor sce_cnn(Graph& g, const Tensor& h, const BlockParams& bp) const;
    Tensor sem(Graph& g, const Tensor& h_vec, const BlockParams& bp) const;     // -> [Hp,Wp,C]
    Tensor cem(Graph& g, const Tensor& h_tilde_s, const Tensor& h_vec,
               const BlockParams& bp) const;                                    // -> [H,W,C]
    Tensor encode(Graph& g, const Tensor& embedding) const;

    // h_x [H,W,C] broadcast against h_px [P,H,W,C]: out[p] = h_x - h_px[p].
    Tensor diff(Graph& g, const Tensor& h_x, const Tensor& h_px) const;
    // Channel concat to 2C then the shared linear map back to C.
    Tensor fuse(Graph& g, const Tensor& diff_h, const Tensor& h_py) const;
    // Per-cell linear C -> 2*T_pred, reshaped to [P,H,W,2,T_pred].
    Tensor decode(Graph& g, const Tensor& fused) const;

    // Full pipeline on one sample; returns the predicted deviations
    // [P,H,W,2,T_pred].
    Tensor forward(Graph& g, const data::SampleWindow& sample) const;

private:
    Tensor encode_stack(Graph& g, const Tensor& stack) const;

    PRNetParams params_;
};

// Absolute forecast from deviations: (1/P) * sum_p (delta_hat[p] + y_p[p]).
// Pure data transform, no gradients.
Tensor reconstruct(const Tensor& delta_hat, const Tensor& y_p);

}  // namespace prnet::model
