#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lws/budget.hpp"
#include "lws/errors.hpp"
#include "lws/tensor.hpp"

namespace lws {

// One decoder block. Projections are row-major [in, out] with no biases;
// norms are gain vectors. q_norm/k_norm hold per-head gains back to back.
template <typename T>
struct layer_weights {
    tensor<T> attn_norm; // [d_model]
    tensor<T> wq;        // [d_model, n_heads*head_dim]
    tensor<T> wk;        // [d_model, n_kv_heads*head_dim]
    tensor<T> wv;        // [d_model, n_kv_heads*head_dim]
    tensor<T> q_norm;    // [n_heads*head_dim]
    tensor<T> k_norm;    // [n_kv_heads*head_dim]
    tensor<T> wo;        // [n_heads*head_dim, d_model]
    tensor<T> ffn_norm;  // [d_model]
    tensor<T> w_gate;    // [d_model, ffn_dim]
    tensor<T> w_up;      // [d_model, ffn_dim]
    tensor<T> w_down;    // [ffn_dim, d_model]
};

template <typename T>
struct weights {
    tensor<T> embedding; // [vocab, d_model]
    std::vector<layer_weights<T>> layers;
    tensor<T> final_norm; // [d_model]
    tensor<T> lm_head;    // [d_model, vocab]; empty when the embedding is tied
};

// Visits every tensor in a fixed order as fn(name, tensor, decays). The decay
// flag marks tensors subject to weight decay: all linear maps, but not norm
// gains or the embedding.
template <typename W, typename F>
void for_each_tensor(W& w, F&& fn) {
    fn("embedding", w.embedding, false);
    for (size_t i = 0; i < w.layers.size(); ++i) {
        auto& l = w.layers[i];
        const std::string p = "layers." + std::to_string(i) + ".";
        fn(p + "attn_norm", l.attn_norm, false);
        fn(p + "wq", l.wq, true);
        fn(p + "wk", l.wk, true);
        fn(p + "wv", l.wv, true);
        fn(p + "q_norm", l.q_norm, false);
        fn(p + "k_norm", l.k_norm, false);
        fn(p + "wo", l.wo, true);
        fn(p + "ffn_norm", l.ffn_norm, false);
        fn(p + "w_gate", l.w_gate, true);
        fn(p + "w_up", l.w_up, true);
        fn(p + "w_down", l.w_down, true);
    }
    fn("final_norm", w.final_norm, false);
    if (w.lm_head.numel() > 0) fn("lm_head", w.lm_head, true);
}

template <typename T>
long long param_count(const weights<T>& w) {
    long long n = 0;
    for_each_tensor(w, [&](const std::string&, const tensor<T>& t, bool) { n += t.numel(); });
    return n;
}

template <typename T>
weights<T> zeros_like(const weights<T>& w);

template <typename U, typename T>
weights<U> weights_cast(const weights<T>& w) {
    weights<U> out;
    out.layers.resize(w.layers.size());
    auto copy = [](const tensor<T>& src, tensor<U>& dst) {
        dst.shape = src.shape;
        dst.data.assign(src.data.begin(), src.data.end());
    };
    copy(w.embedding, out.embedding);
    for (size_t i = 0; i < w.layers.size(); ++i) {
        copy(w.layers[i].attn_norm, out.layers[i].attn_norm);
        copy(w.layers[i].wq, out.layers[i].wq);
        copy(w.layers[i].wk, out.layers[i].wk);
        copy(w.layers[i].wv, out.layers[i].wv);
        copy(w.layers[i].q_norm, out.layers[i].q_norm);
        copy(w.layers[i].k_norm, out.layers[i].k_norm);
        copy(w.layers[i].wo, out.layers[i].wo);
        copy(w.layers[i].ffn_norm, out.layers[i].ffn_norm);
        copy(w.layers[i].w_gate, out.layers[i].w_gate);
        copy(w.layers[i].w_up, out.layers[i].w_up);
        copy(w.layers[i].w_down, out.layers[i].w_down);
    }
    copy(w.final_norm, out.final_norm);
    copy(w.lm_head, out.lm_head);
    return out;
}

// Row-major token windows; targets are the inputs shifted left by one.
struct token_batch {
    int batch_size = 0;
    int seq_len = 0;
    std::vector<int32_t> inputs;  // [batch, seq]
    std::vector<int32_t> targets; // [batch, seq]
};

// All tensors for the config, zero-filled.
template <typename T>
weights<T> allocate_weights(const model_config& cfg);

// Projections and the embedding are truncated normal (std 0.02, cut at 3
// sigma); norm gains start at 1. Deterministic for a given (config, seed).
template <typename T>
weights<T> init_model(const model_config& cfg, uint64_t seed);

// Full forward pass; returns logits [batch*seq, vocab] row-major.
template <typename T>
std::vector<T> forward(const weights<T>& w, const model_config& cfg, const token_batch& batch);

// Mean cross-entropy over every position, accumulated in double.
template <typename T>
double loss_only(const weights<T>& w, const model_config& cfg, const token_batch& batch);

// Loss plus exact gradients for every weight tensor, from a single hand-rolled
// reverse pass. Throws training_divergence_error on a non-finite loss.
template <typename T>
std::pair<double, weights<T>> loss_and_grads(const weights<T>& w, const model_config& cfg,
                                             const token_batch& batch);

struct adamw_config {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.0; // decoupled; applied only to decay-flagged tensors
};

template <typename T>
struct opt_state {
    weights<T> m; // first-moment EMA
    weights<T> v; // second-moment EMA
    long long step = 0;
};

template <typename T>
opt_state<T> init_opt_state(const weights<T>& w) {
    return opt_state<T>{zeros_like(w), zeros_like(w), 0};
}

// One AdamW update in place, with bias correction. Norm gains and the
// embedding are excluded from decay. Throws training_divergence_error when
// grads contain a non-finite value.
template <typename T>
void adamw_step(weights<T>& w, const weights<T>& grads, opt_state<T>& opt,
                const adamw_config& hp);

// Euclidean norm over all gradient elements, accumulated in double in a fixed
// order.
template <typename T>
double grad_global_norm(const weights<T>& g);

// Scales grads down so their global norm is at most max_norm; returns the
// pre-clip norm.
template <typename T>
double clip_gradients(weights<T>& g, double max_norm);

struct grad_check_report {
    double max_rel_err = 0.0;
    double mean_rel_err = 0.0;
    long long checked = 0;
};

// Central-difference probe of loss_and_grads at the given flat parameter
// indices (order defined by for_each_tensor). Relative error uses
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
template <typename T>
grad_check_report finite_diff_check(const weights<T>& w, const model_config& cfg,
                                    const token_batch& batch,
                                    const std::vector<long long>& param_indices, double eps);

} // namespace lws
