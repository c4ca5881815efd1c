#pragma once

#include <vector>

namespace lws::kern {

// RMS norm over `segs` independent segments of `width` per row:
// y = x / rms(x) * w with rms = sqrt(mean(x^2) + 1e-6). Saves rms per
// segment for the backward pass.
template <typename T>
void segnorm_fwd(const T* x, const T* w, T* y, T* rms_out, long long rows, long long segs,
                 long long width);

// dx = (dy*w - xhat * <dy*w, xhat> / width) / rms, dw += dy * x / rms.
template <typename T>
void segnorm_bwd(const T* x, const T* w, const T* rms, const T* dy, T* dx, T* dw, long long rows,
                 long long segs, long long width);

// Rotary tables for positions [0, S): cos/sin of pos * 10000^(-2m/dh).
template <typename T>
void rope_tables(long long S, long long dh, std::vector<T>& cs, std::vector<T>& sn);

// Rotates pairs (d, d + dh/2) of every head in place. Rows map to positions
// as r % S. Sign -1 applies the inverse rotation (used by the backward pass).
template <typename T>
void rope_apply(T* x, long long rows, long long S, long long n_heads, long long dh, const T* cs,
                const T* sn, T sign);

// Causal grouped-query attention, softmax(q k^T / sqrt(dh)) v per head.
// q is [B*S, H*dh], k and v are [B*S, G*dh], out matches q, probs is
// [B*H*S, S] and must be zero-initialized; entries above the diagonal are
// left untouched so they stay exactly zero.
template <typename T>
void attention_fwd(const T* q, const T* k, const T* v, T* probs, T* out, long long B, long long S,
                   long long H, long long G, long long dh);

// Backward of attention_fwd. dq/dk/dv must be zero-initialized.
template <typename T>
void attention_bwd(const T* q, const T* k, const T* v, const T* probs, const T* dout, T* dq,
                   T* dk, T* dv, long long B, long long S, long long H, long long G, long long dh);

} // namespace lws::kern
