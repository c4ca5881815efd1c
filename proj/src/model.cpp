#include "lws/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "lws/kernels.hpp"
#include "lws/threading.hpp"

namespace lws {

namespace {

constexpr double k_norm_eps = 1e-6;
constexpr double k_rope_base = 10000.0;

// Dot product with a bank of accumulators so the loop vectorizes without
// reassociation flags (we must keep strict FP to let NaNs surface).
template <typename T>
inline T dot_lanes(const T* __restrict a, const T* __restrict b, long long n) {
    T lanes[16] = {};
    long long i = 0;
    for (; i + 16 <= n; i += 16)
        for (int u = 0; u < 16; ++u) lanes[u] += a[i + u] * b[i + u];
    T s = 0;
    for (int u = 0; u < 16; ++u) s += lanes[u];
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

// c[M,N] (+)= a[M,K] * b[K,N], all row-major. Broadcast-axpy form; each
// worker owns a contiguous block of output rows.
template <bool Acc, typename T>
void mm_nn(const T* __restrict a, const T* __restrict b, T* __restrict c, long long M,
           long long K, long long N) {
    parallel_for(M, [&](long long r0, long long r1) {
        for (long long i = r0; i < r1; ++i) {
            T* cr = c + i * N;
            if (!Acc) std::fill(cr, cr + N, T(0));
            const T* ar = a + i * K;
            for (long long k = 0; k < K; ++k) {
                const T av = ar[k];
                const T* br = b + k * N;
                for (long long j = 0; j < N; ++j) cr[j] += av * br[j];
            }
        }
    });
}

// c[M,N] (+)= a[M,K] * b[N,K]^T; both operands row-contiguous along K.
template <bool Acc, typename T>
void mm_nt(const T* __restrict a, const T* __restrict b, T* __restrict c, long long M,
           long long K, long long N) {
    parallel_for(M, [&](long long r0, long long r1) {
        for (long long i = r0; i < r1; ++i) {
            const T* ar = a + i * K;
            T* cr = c + i * N;
            for (long long j = 0; j < N; ++j) {
                const T s = dot_lanes(ar, b + j * K, K);
                if (Acc)
                    cr[j] += s;
                else
                    cr[j] = s;
            }
        }
    });
}

// c[K,N] += a[M,K]^T * b[M,N]; the weight-gradient shape.
template <typename T>
void mm_tn_acc(const T* __restrict a, const T* __restrict b, T* __restrict c, long long M,
               long long K, long long N) {
    parallel_for(K, [&](long long k0, long long k1) {
        for (long long k = k0; k < k1; ++k) {
            T* cr = c + k * N;
            for (long long m = 0; m < M; ++m) {
                const T av = a[m * K + k];
                const T* br = b + m * N;
                for (long long j = 0; j < N; ++j) cr[j] += av * br[j];
            }
        }
    });
}

} // namespace

namespace kern {

// y = x / rms(x) * w per segment, rms = sqrt(mean(x^2) + eps).
template <typename T>
void segnorm_fwd(const T* x, const T* w, T* y, T* rms_out, long long rows, long long segs,
                 long long width) {
    for (long long r = 0; r < rows; ++r) {
        for (long long s = 0; s < segs; ++s) {
            const T* xs = x + (r * segs + s) * width;
            T* ys = y + (r * segs + s) * width;
            const T* ws = w + s * width;
            double ss = 0;
            for (long long d = 0; d < width; ++d) ss += (double)xs[d] * xs[d];
            const double rms = std::sqrt(ss / (double)width + k_norm_eps);
            rms_out[r * segs + s] = (T)rms;
            const T inv = (T)(1.0 / rms);
            for (long long d = 0; d < width; ++d) ys[d] = xs[d] * inv * ws[d];
        }
    }
}

// dx = (dy*w - xhat * <dy*w, xhat> / width) / rms, dw += dy * xhat.
template <typename T>
void segnorm_bwd(const T* x, const T* w, const T* rms, const T* dy, T* dx, T* dw,
                 long long rows, long long segs, long long width) {
    for (long long r = 0; r < rows; ++r) {
        for (long long s = 0; s < segs; ++s) {
            const long long off = (r * segs + s) * width;
            const T* xs = x + off;
            const T* dys = dy + off;
            T* dxs = dx + off;
            const T* ws = w + s * width;
            T* dws = dw + s * width;
            const double rv = (double)rms[r * segs + s];
            double dot = 0;
            for (long long d = 0; d < width; ++d) dot += (double)dys[d] * ws[d] * xs[d];
            const double coef = dot / ((double)width * rv * rv);
            const double inv = 1.0 / rv;
            for (long long d = 0; d < width; ++d) {
                dxs[d] = (T)(((double)dys[d] * ws[d] - (double)xs[d] * coef) * inv);
                dws[d] += (T)((double)dys[d] * xs[d] * inv);
            }
        }
    }
}

// Rotary tables for positions [0, S): cos/sin of pos * base^(-2m/dh).
template <typename T>
void rope_tables(long long S, long long dh, std::vector<T>& cs, std::vector<T>& sn) {
    const long long half = dh / 2;
    cs.resize((size_t)(S * half));
    sn.resize((size_t)(S * half));
    for (long long m = 0; m < half; ++m) {
        const double freq = std::pow(k_rope_base, -2.0 * (double)m / (double)dh);
        for (long long p = 0; p < S; ++p) {
            cs[(size_t)(p * half + m)] = (T)std::cos((double)p * freq);
            sn[(size_t)(p * half + m)] = (T)std::sin((double)p * freq);
        }
    }
}

// Rotates pairs (d, d + dh/2) of every head in place. Rows map to positions
// as r % S. Sign -1 applies the inverse rotation (used by the backward pass).
template <typename T>
void rope_apply(T* x, long long rows, long long S, long long n_heads, long long dh, const T* cs,
                const T* sn, T sign) {
    const long long half = dh / 2;
    for (long long r = 0; r < rows; ++r) {
        const T* c = cs + (r % S) * half;
        const T* s = sn + (r % S) * half;
        for (long long h = 0; h < n_heads; ++h) {
            T* seg = x + (r * n_heads + h) * dh;
            for (long long m = 0; m < half; ++m) {
                const T a = seg[m];
                const T b = seg[m + half];
                seg[m] = a * c[m] - sign * b * s[m];
                seg[m + half] = sign * a * s[m] + b * c[m];
            }
        }
    }
}

// Causal grouped-query attention. probs must be zero-initialized; rows above
// the diagonal are left untouched so they stay exactly zero. Work units are
// (batch, head) pairs, each owning disjoint rows of probs and out.
template <typename T>
void attention_fwd(const T* q, const T* k, const T* v, T* probs, T* out, long long B,
                   long long S, long long H, long long G, long long dh) {
    const long long q_dim = H * dh, kv_dim = G * dh, hpg = H / G;
    const T scale = (T)(1.0 / std::sqrt((double)dh));
    parallel_for(B * H, [&](long long u0, long long u1) {
        for (long long u = u0; u < u1; ++u) {
            const long long b = u / H, h = u % H, g = h / hpg;
            for (long long i = 0; i < S; ++i) {
                const T* qi = q + (b * S + i) * q_dim + h * dh;
                T* prow = probs + (u * S + i) * S;
                T mx = -std::numeric_limits<T>::infinity();
                for (long long j = 0; j <= i; ++j) {
                    const T s = dot_lanes(qi, k + (b * S + j) * kv_dim + g * dh, dh) * scale;
                    prow[j] = s;
                    if (s > mx) mx = s;
                }
                double denom = 0;
                for (long long j = 0; j <= i; ++j) {
                    const T e = std::exp(prow[j] - mx);
                    prow[j] = e;
                    denom += (double)e;
                }
                const T inv = (T)(1.0 / denom);
                T* orow = out + (b * S + i) * q_dim + h * dh;
                std::fill(orow, orow + dh, T(0));
                for (long long j = 0; j <= i; ++j) {
                    prow[j] *= inv;
                    const T p = prow[j];
                    const T* vj = v + (b * S + j) * kv_dim + g * dh;
                    for (long long d = 0; d < dh; ++d) orow[d] += p * vj[d];
                }
            }
        }
    });
}

// Backward of attention_fwd. dq/dk/dv must be zero-initialized. Work units
// are (batch, kv-group) pairs: every dk/dv row belongs to exactly one group,
// and each query head belongs to exactly one group, so writes never race.
template <typename T>
void attention_bwd(const T* q, const T* k, const T* v, const T* probs, const T* dout, T* dq,
                   T* dk, T* dv, long long B, long long S, long long H, long long G,
                   long long dh) {
    const long long q_dim = H * dh, kv_dim = G * dh, hpg = H / G;
    const T scale = (T)(1.0 / std::sqrt((double)dh));
    parallel_for(B * G, [&](long long u0, long long u1) {
        std::vector<T> dp((size_t)S);
        for (long long u = u0; u < u1; ++u) {
            const long long b = u / G, g = u % G;
            for (long long hh = 0; hh < hpg; ++hh) {
                const long long h = g * hpg + hh;
                for (long long i = 0; i < S; ++i) {
                    const T* prow = probs + (((b * H + h) * S) + i) * S;
                    const T* doi = dout + (b * S + i) * q_dim + h * dh;
                    double rowsum = 0;
                    for (long long j = 0; j <= i; ++j) {
                        const T s = dot_lanes(doi, v + (b * S + j) * kv_dim + g * dh, dh);
                        dp[(size_t)j] = s;
                        rowsum += (double)s * prow[j];
                    }
                    const T* qi = q + (b * S + i) * q_dim + h * dh;
                    T* dqi = dq + (b * S + i) * q_dim + h * dh;
                    for (long long j = 0; j <= i; ++j) {
                        const T p = prow[j];
                        const T ds = p * (T)((double)dp[(size_t)j] - rowsum) * scale;
                        const T* kj = k + (b * S + j) * kv_dim + g * dh;
                        T* dkj = dk + (b * S + j) * kv_dim + g * dh;
                        T* dvj = dv + (b * S + j) * kv_dim + g * dh;
                        for (long long d = 0; d < dh; ++d) {
                            dqi[d] += ds * kj[d];
                            dkj[d] += ds * qi[d];
                            dvj[d] += p * doi[d];
                        }
                    }
                }
            }
        }
    });
}

} // namespace kern

using namespace kern;

namespace {

template <typename T>
T silu(T u) {
    return u / (T(1) + std::exp(-u));
}

void validate_batch(const model_config& cfg, const token_batch& batch) {
    if (batch.batch_size < 1 || batch.seq_len < 1)
        throw std::invalid_argument("token_batch: batch_size and seq_len must be >= 1");
    if (batch.seq_len > cfg.max_seq_len)
        throw std::invalid_argument("token_batch: seq_len exceeds max_seq_len");
    const size_t want = (size_t)batch.batch_size * batch.seq_len;
    if (batch.inputs.size() != want || batch.targets.size() != want)
        throw std::invalid_argument("token_batch: buffer sizes disagree with batch_size*seq_len");
    for (int32_t t : batch.inputs)
        if (t < 0 || t >= cfg.vocab_size) throw std::invalid_argument("token_batch: input id out of range");
    for (int32_t t : batch.targets)
        if (t < 0 || t >= cfg.vocab_size) throw std::invalid_argument("token_batch: target id out of range");
}

// Everything the backward pass needs from the forward pass.
template <typename T>
struct layer_acts {
    std::vector<T> x_in;              // [T_, D] block input
    std::vector<T> r_attn;            // [T_] rms of attn norm
    std::vector<T> a_normed;          // [T_, D]
    std::vector<T> q_lin, k_lin, v_lin;
    std::vector<T> r_q, r_k;          // per-head rms, [T_*H] / [T_*G]
    std::vector<T> q_rot, k_rot;      // after qk-norm and rotation
    std::vector<T> probs;             // [B*H*S*S] causal softmax rows
    std::vector<T> att_out;           // [T_, q_dim]
    std::vector<T> h_mid;             // [T_, D] residual after attention
    std::vector<T> r_ffn;             // [T_]
    std::vector<T> f_normed;          // [T_, D]
    std::vector<T> u, t, z;           // [T_, F] gate pre-act, up, gated
};

template <typename T>
struct fwd_acts {
    std::vector<layer_acts<T>> layers;
    std::vector<T> rope_cos, rope_sin; // [S, dh/2]
    std::vector<T> h_final;            // [T_, D]
    std::vector<T> r_final;            // [T_]
    std::vector<T> y_normed;           // [T_, D]
    std::vector<T> logits;             // [T_, V]
};

template <typename T>
void run_forward(const weights<T>& w, const model_config& cfg, const token_batch& batch,
                 fwd_acts<T>& A) {
    validate(cfg);
    validate_batch(cfg, batch);

    const long long B = batch.batch_size, S = batch.seq_len, T_ = B * S;
    const long long D = cfg.d_model, V = cfg.vocab_size, dh = cfg.head_dim, G = cfg.n_kv_heads;
    const long long L = cfg.n_layers();

    rope_tables<T>(S, dh, A.rope_cos, A.rope_sin);
    A.layers.resize((size_t)L);

    // token embedding
    std::vector<T> x((size_t)(T_ * D));
    for (long long r = 0; r < T_; ++r)
        std::memcpy(x.data() + r * D, w.embedding.ptr() + (long long)batch.inputs[(size_t)r] * D,
                    (size_t)D * sizeof(T));

    for (long long l = 0; l < L; ++l) {
        layer_acts<T>& la = A.layers[(size_t)l];
        const layer_weights<T>& lw = w.layers[(size_t)l];
        const long long H = cfg.layers[(size_t)l].n_heads;
        const long long F = cfg.layers[(size_t)l].ffn_dim;
        const long long q_dim = H * dh, kv_dim = G * dh;

        la.x_in = std::move(x);

        la.a_normed.resize((size_t)(T_ * D));
        la.r_attn.resize((size_t)T_);
        segnorm_fwd(la.x_in.data(), lw.attn_norm.ptr(), la.a_normed.data(), la.r_attn.data(), T_,
                    1, D);

        la.q_lin.resize((size_t)(T_ * q_dim));
        la.k_lin.resize((size_t)(T_ * kv_dim));
        la.v_lin.resize((size_t)(T_ * kv_dim));
        mm_nn<false>(la.a_normed.data(), lw.wq.ptr(), la.q_lin.data(), T_, D, q_dim);
        mm_nn<false>(la.a_normed.data(), lw.wk.ptr(), la.k_lin.data(), T_, D, kv_dim);
        mm_nn<false>(la.a_normed.data(), lw.wv.ptr(), la.v_lin.data(), T_, D, kv_dim);

        // per-head rms norm, then rotary
        la.q_rot.resize((size_t)(T_ * q_dim));
        la.k_rot.resize((size_t)(T_ * kv_dim));
        la.r_q.resize((size_t)(T_ * H));
        la.r_k.resize((size_t)(T_ * G));
        segnorm_fwd(la.q_lin.data(), lw.q_norm.ptr(), la.q_rot.data(), la.r_q.data(), T_, H, dh);
        segnorm_fwd(la.k_lin.data(), lw.k_norm.ptr(), la.k_rot.data(), la.r_k.data(), T_, G, dh);
        rope_apply(la.q_rot.data(), T_, S, H, dh, A.rope_cos.data(), A.rope_sin.data(), T(1));
        rope_apply(la.k_rot.data(), T_, S, G, dh, A.rope_cos.data(), A.rope_sin.data(), T(1));

        la.probs.assign((size_t)(B * H * S * S), T(0));
        la.att_out.resize((size_t)(T_ * q_dim));
        attention_fwd(la.q_rot.data(), la.k_rot.data(), la.v_lin.data(), la.probs.data(),
                      la.att_out.data(), B, S, H, G, dh);

        la.h_mid = la.x_in;
        mm_nn<true>(la.att_out.data(), lw.wo.ptr(), la.h_mid.data(), T_, q_dim, D);

        la.f_normed.resize((size_t)(T_ * D));
        la.r_ffn.resize((size_t)T_);
        segnorm_fwd(la.h_mid.data(), lw.ffn_norm.ptr(), la.f_normed.data(), la.r_ffn.data(), T_,
                    1, D);

        la.u.resize((size_t)(T_ * F));
        la.t.resize((size_t)(T_ * F));
        la.z.resize((size_t)(T_ * F));
        mm_nn<false>(la.f_normed.data(), lw.w_gate.ptr(), la.u.data(), T_, D, F);
        mm_nn<false>(la.f_normed.data(), lw.w_up.ptr(), la.t.data(), T_, D, F);
        for (long long e = 0; e < T_ * F; ++e) la.z[(size_t)e] = silu(la.u[(size_t)e]) * la.t[(size_t)e];

        x = la.h_mid;
        mm_nn<true>(la.z.data(), lw.w_down.ptr(), x.data(), T_, F, D);
    }

    A.h_final = std::move(x);
    A.y_normed.resize((size_t)(T_ * D));
    A.r_final.resize((size_t)T_);
    segnorm_fwd(A.h_final.data(), w.final_norm.ptr(), A.y_normed.data(), A.r_final.data(), T_, 1,
                D);

    A.logits.resize((size_t)(T_ * V));
    if (cfg.tie_embeddings)
        mm_nt<false>(A.y_normed.data(), w.embedding.ptr(), A.logits.data(), T_, D, V);
    else
        mm_nn<false>(A.y_normed.data(), w.lm_head.ptr(), A.logits.data(), T_, D, V);
}

// Mean cross-entropy; optionally fills dlogits = (softmax - onehot) / count.
// Per-row sums run in parallel; the final reduction is serial in row order so
// the result does not depend on the worker count.
template <typename T>
double ce_loss(const T* logits, const int32_t* targets, long long T_, long long V, T* dlogits) {
    std::vector<double> row_loss((size_t)T_);
    parallel_for(T_, [&](long long r0, long long r1) {
        for (long long r = r0; r < r1; ++r) {
            const T* lr = logits + r * V;
            double mx = -std::numeric_limits<double>::infinity();
            for (long long j = 0; j < V; ++j) mx = std::max(mx, (double)lr[j]);
            double sum = 0;
            for (long long j = 0; j < V; ++j) sum += std::exp((double)lr[j] - mx);
            const double lse = mx + std::log(sum);
            row_loss[(size_t)r] = lse - (double)lr[targets[r]];
            if (dlogits) {
                T* dr = dlogits + r * V;
                const double invn = 1.0 / (double)T_;
                for (long long j = 0; j < V; ++j) dr[j] = (T)(std::exp((double)lr[j] - lse) * invn);
                dr[targets[r]] -= (T)invn;
            }
        }
    });
    double total = 0;
    for (double l : row_loss) total += l;
    return total / (double)T_;
}

template <typename T>
std::vector<std::pair<tensor<T>*, bool>> tensor_list(weights<T>& w) {
    std::vector<std::pair<tensor<T>*, bool>> out;
    for_each_tensor(w, [&](const std::string&, tensor<T>& t, bool decay) { out.push_back({&t, decay}); });
    return out;
}

template <typename T>
std::vector<const tensor<T>*> tensor_list(const weights<T>& w) {
    std::vector<const tensor<T>*> out;
    for_each_tensor(w, [&](const std::string&, const tensor<T>& t, bool) { out.push_back(&t); });
    return out;
}

} // namespace

template <typename T>
weights<T> zeros_like(const weights<T>& w) {
    weights<T> out;
    out.embedding = tensor<T>::zeros(w.embedding.shape);
    out.layers.resize(w.layers.size());
    for (size_t i = 0; i < w.layers.size(); ++i) {
        const layer_weights<T>& l = w.layers[i];
        layer_weights<T>& o = out.layers[i];
        o.attn_norm = tensor<T>::zeros(l.attn_norm.shape);
        o.wq = tensor<T>::zeros(l.wq.shape);
        o.wk = tensor<T>::zeros(l.wk.shape);
        o.wv = tensor<T>::zeros(l.wv.shape);
        o.q_norm = tensor<T>::zeros(l.q_norm.shape);
        o.k_norm = tensor<T>::zeros(l.k_norm.shape);
        o.wo = tensor<T>::zeros(l.wo.shape);
        o.ffn_norm = tensor<T>::zeros(l.ffn_norm.shape);
        o.w_gate = tensor<T>::zeros(l.w_gate.shape);
        o.w_up = tensor<T>::zeros(l.w_up.shape);
        o.w_down = tensor<T>::zeros(l.w_down.shape);
    }
    out.final_norm = tensor<T>::zeros(w.final_norm.shape);
    if (w.lm_head.numel() > 0) out.lm_head = tensor<T>::zeros(w.lm_head.shape);
    return out;
}

namespace {

// Box-Muller over explicit 53-bit uniforms so init is identical across
// standard libraries.
struct gauss_sampler {
    std::mt19937_64 rng;
    double spare = 0;
    bool have_spare = false;

    explicit gauss_sampler(uint64_t seed) : rng(seed) {}

    double uniform() { return ((double)(rng() >> 11) + 0.5) * (1.0 / 9007199254740992.0); }

    double normal() {
        if (have_spare) {
            have_spare = false;
            return spare;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform()));
        const double a = 2.0 * 3.14159265358979323846 * uniform();
        spare = r * std::sin(a);
        have_spare = true;
        return r * std::cos(a);
    }

    double truncated(double std_dev, double cut_sigma) {
        for (;;) {
            const double z = normal();
            if (std::fabs(z) <= cut_sigma) return z * std_dev;
        }
    }
};

} // namespace

template <typename T>
weights<T> allocate_weights(const model_config& cfg) {
    weights<T> w;
    w.embedding = tensor<T>::zeros({cfg.vocab_size, cfg.d_model});
    w.layers.resize(cfg.layers.size());
    for (size_t i = 0; i < cfg.layers.size(); ++i) {
        const layer_profile& p = cfg.layers[i];
        layer_weights<T>& l = w.layers[i];
        const int q_dim = p.n_heads * p.head_dim;
        const int kv_dim = p.n_kv_heads * p.head_dim;
        l.attn_norm = tensor<T>::zeros({cfg.d_model});
        l.wq = tensor<T>::zeros({cfg.d_model, q_dim});
        l.wk = tensor<T>::zeros({cfg.d_model, kv_dim});
        l.wv = tensor<T>::zeros({cfg.d_model, kv_dim});
        l.q_norm = tensor<T>::zeros({q_dim});
        l.k_norm = tensor<T>::zeros({kv_dim});
        l.wo = tensor<T>::zeros({q_dim, cfg.d_model});
        l.ffn_norm = tensor<T>::zeros({cfg.d_model});
        l.w_gate = tensor<T>::zeros({cfg.d_model, p.ffn_dim});
        l.w_up = tensor<T>::zeros({cfg.d_model, p.ffn_dim});
        l.w_down = tensor<T>::zeros({p.ffn_dim, cfg.d_model});
    }
    w.final_norm = tensor<T>::zeros({cfg.d_model});
    if (!cfg.tie_embeddings) w.lm_head = tensor<T>::zeros({cfg.d_model, cfg.vocab_size});
    return w;
}

template <typename T>
weights<T> init_model(const model_config& cfg, uint64_t seed) {
    validate(cfg);
    weights<T> w = allocate_weights<T>(cfg);
    gauss_sampler gauss(seed);
    for_each_tensor(w, [&](const std::string& name, tensor<T>& t, bool decay) {
        if (decay || name == "embedding") {
            for (T& x : t.data) x = (T)gauss.truncated(0.02, 3.0);
        } else {
            std::fill(t.data.begin(), t.data.end(), T(1));
        }
    });
    return w;
}

template <typename T>
std::vector<T> forward(const weights<T>& w, const model_config& cfg, const token_batch& batch) {
    fwd_acts<T> acts;
    run_forward(w, cfg, batch, acts);
    return std::move(acts.logits);
}

template <typename T>
double loss_only(const weights<T>& w, const model_config& cfg, const token_batch& batch) {
    fwd_acts<T> acts;
    run_forward(w, cfg, batch, acts);
    const long long T_ = (long long)batch.batch_size * batch.seq_len;
    return ce_loss<T>(acts.logits.data(), batch.targets.data(), T_, cfg.vocab_size, nullptr);
}

template <typename T>
std::pair<double, weights<T>> loss_and_grads(const weights<T>& w, const model_config& cfg,
                                             const token_batch& batch) {
    fwd_acts<T> A;
    run_forward(w, cfg, batch, A);

    const long long B = batch.batch_size, S = batch.seq_len, T_ = B * S;
    const long long D = cfg.d_model, V = cfg.vocab_size, dh = cfg.head_dim, G = cfg.n_kv_heads;
    const long long kv_dim = G * dh;

    std::vector<T> dlogits((size_t)(T_ * V));
    const double loss = ce_loss<T>(A.logits.data(), batch.targets.data(), T_, V, dlogits.data());
    if (!std::isfinite(loss)) throw training_divergence_error("loss_and_grads: non-finite loss");

    weights<T> g = zeros_like(w);

    // head and final norm
    std::vector<T> dy((size_t)(T_ * D));
    if (cfg.tie_embeddings) {
        mm_nn<false>(dlogits.data(), w.embedding.ptr(), dy.data(), T_, V, D);
        mm_tn_acc(dlogits.data(), A.y_normed.data(), g.embedding.ptr(), T_, V, D);
    } else {
        mm_nt<false>(dlogits.data(), w.lm_head.ptr(), dy.data(), T_, V, D);
        mm_tn_acc(A.y_normed.data(), dlogits.data(), g.lm_head.ptr(), T_, D, V);
    }

    std::vector<T> dh_buf((size_t)(T_ * D));
    segnorm_bwd(A.h_final.data(), w.final_norm.ptr(), A.r_final.data(), dy.data(), dh_buf.data(),
                g.final_norm.ptr(), T_, 1, D);

    std::vector<T> scratch_d((size_t)(T_ * D));
    for (long long l = cfg.n_layers() - 1; l >= 0; --l) {
        const layer_acts<T>& la = A.layers[(size_t)l];
        const layer_weights<T>& lw = w.layers[(size_t)l];
        layer_weights<T>& lg = g.layers[(size_t)l];
        const long long H = cfg.layers[(size_t)l].n_heads;
        const long long F = cfg.layers[(size_t)l].ffn_dim;
        const long long q_dim = H * dh;

        // ffn: dh_buf holds d(block output); w_down path first
        std::vector<T> dz((size_t)(T_ * F));
        mm_nt<false>(dh_buf.data(), lw.w_down.ptr(), dz.data(), T_, D, F);
        mm_tn_acc(la.z.data(), dh_buf.data(), lg.w_down.ptr(), T_, F, D);

        std::vector<T> du((size_t)(T_ * F)), dt((size_t)(T_ * F));
        for (long long e = 0; e < T_ * F; ++e) {
            const T u = la.u[(size_t)e];
            const T sig = T(1) / (T(1) + std::exp(-u));
            const T s = u * sig;
            du[(size_t)e] = dz[(size_t)e] * la.t[(size_t)e] * sig * (T(1) + u * (T(1) - sig));
            dt[(size_t)e] = dz[(size_t)e] * s;
        }
        std::vector<T>().swap(dz);

        std::vector<T> df((size_t)(T_ * D));
        mm_nt<false>(du.data(), lw.w_gate.ptr(), df.data(), T_, F, D);
        mm_nt<true>(dt.data(), lw.w_up.ptr(), df.data(), T_, F, D);
        mm_tn_acc(la.f_normed.data(), du.data(), lg.w_gate.ptr(), T_, D, F);
        mm_tn_acc(la.f_normed.data(), dt.data(), lg.w_up.ptr(), T_, D, F);

        segnorm_bwd(la.h_mid.data(), lw.ffn_norm.ptr(), la.r_ffn.data(), df.data(),
                    scratch_d.data(), lg.ffn_norm.ptr(), T_, 1, D);
        for (long long e = 0; e < T_ * D; ++e) dh_buf[(size_t)e] += scratch_d[(size_t)e];

        // attention: dh_buf now holds d(h_mid)
        std::vector<T> datt((size_t)(T_ * q_dim));
        mm_nt<false>(dh_buf.data(), lw.wo.ptr(), datt.data(), T_, D, q_dim);
        mm_tn_acc(la.att_out.data(), dh_buf.data(), lg.wo.ptr(), T_, q_dim, D);

        std::vector<T> dq((size_t)(T_ * q_dim), T(0));
        std::vector<T> dk((size_t)(T_ * kv_dim), T(0));
        std::vector<T> dv((size_t)(T_ * kv_dim), T(0));
        attention_bwd(la.q_rot.data(), la.k_rot.data(), la.v_lin.data(), la.probs.data(),
                      datt.data(), dq.data(), dk.data(), dv.data(), B, S, H, G, dh);
        std::vector<T>().swap(datt);

        // undo the rotation, then the per-head norm
        rope_apply(dq.data(), T_, S, H, dh, A.rope_cos.data(), A.rope_sin.data(), T(-1));
        rope_apply(dk.data(), T_, S, G, dh, A.rope_cos.data(), A.rope_sin.data(), T(-1));

        std::vector<T> dq_lin((size_t)(T_ * q_dim)), dk_lin((size_t)(T_ * kv_dim));
        segnorm_bwd(la.q_lin.data(), lw.q_norm.ptr(), la.r_q.data(), dq.data(), dq_lin.data(),
                    lg.q_norm.ptr(), T_, H, dh);
        segnorm_bwd(la.k_lin.data(), lw.k_norm.ptr(), la.r_k.data(), dk.data(), dk_lin.data(),
                    lg.k_norm.ptr(), T_, G, dh);

        std::vector<T> da((size_t)(T_ * D));
        mm_nt<false>(dq_lin.data(), lw.wq.ptr(), da.data(), T_, q_dim, D);
        mm_nt<true>(dk_lin.data(), lw.wk.ptr(), da.data(), T_, kv_dim, D);
        mm_nt<true>(dv.data(), lw.wv.ptr(), da.data(), T_, kv_dim, D);
        mm_tn_acc(la.a_normed.data(), dq_lin.data(), lg.wq.ptr(), T_, D, q_dim);
        mm_tn_acc(la.a_normed.data(), dk_lin.data(), lg.wk.ptr(), T_, D, kv_dim);
        mm_tn_acc(la.a_normed.data(), dv.data(), lg.wv.ptr(), T_, D, kv_dim);

        segnorm_bwd(la.x_in.data(), lw.attn_norm.ptr(), la.r_attn.data(), da.data(),
                    scratch_d.data(), lg.attn_norm.ptr(), T_, 1, D);
        for (long long e = 0; e < T_ * D; ++e) dh_buf[(size_t)e] += scratch_d[(size_t)e];
    }

    // scatter into embedding rows
    for (long long r = 0; r < T_; ++r) {
        T* er = g.embedding.ptr() + (long long)batch.inputs[(size_t)r] * D;
        const T* dr = dh_buf.data() + r * D;
        for (long long d = 0; d < D; ++d) er[d] += dr[d];
    }

    return {loss, std::move(g)};
}

template <typename T>
double grad_global_norm(const weights<T>& g) {
    double ss = 0;
    for_each_tensor(g, [&](const std::string&, const tensor<T>& t, bool) {
        for (const T& x : t.data) ss += (double)x * (double)x;
    });
    return std::sqrt(ss);
}

template <typename T>
double clip_gradients(weights<T>& g, double max_norm) {
    if (!(max_norm > 0)) throw std::invalid_argument("clip_gradients: max_norm must be positive");
    const double norm = grad_global_norm(g);
    if (norm > max_norm) {
        const T scale = (T)(max_norm / norm);
        for_each_tensor(g, [&](const std::string&, tensor<T>& t, bool) {
            for (T& x : t.data) x *= scale;
        });
    }
    return norm;
}

template <typename T>
void adamw_step(weights<T>& w, const weights<T>& grads, opt_state<T>& opt,
                const adamw_config& hp) {
    if (!(hp.lr > 0) || !(hp.eps > 0) || hp.beta1 < 0 || hp.beta1 >= 1 || hp.beta2 < 0 ||
        hp.beta2 >= 1 || hp.weight_decay < 0)
        throw std::invalid_argument("adamw_config: hyperparameters out of range");

    for_each_tensor(grads, [](const std::string& name, const tensor<T>& t, bool) {
        for (const T& x : t.data)
            if (!std::isfinite((double)x))
                throw training_divergence_error("adamw_step: non-finite gradient in " + name);
    });

    auto wl = tensor_list(w);
    auto gl = tensor_list(grads);
    auto ml = tensor_list(opt.m);
    auto vl = tensor_list(opt.v);
    if (wl.size() != gl.size() || wl.size() != ml.size() || wl.size() != vl.size())
        throw std::invalid_argument("adamw_step: weights, grads and state disagree");

    opt.step += 1;
    const double bc1 = 1.0 - std::pow(hp.beta1, (double)opt.step);
    const double bc2 = 1.0 - std::pow(hp.beta2, (double)opt.step);

    for (size_t ti = 0; ti < wl.size(); ++ti) {
        tensor<T>& wt = *wl[ti].first;
        const tensor<T>& gt = *gl[ti];
        tensor<T>& mt = *ml[ti].first;
        tensor<T>& vt = *vl[ti].first;
        if (gt.numel() != wt.numel() || mt.numel() != wt.numel() || vt.numel() != wt.numel())
            throw std::invalid_argument("adamw_step: tensor shape mismatch");
        const bool decay = wl[ti].second;
        for (size_t e = 0; e < wt.data.size(); ++e) {
            const double gv = (double)gt.data[e];
            const double m = hp.beta1 * (double)mt.data[e] + (1.0 - hp.beta1) * gv;
            const double v = hp.beta2 * (double)vt.data[e] + (1.0 - hp.beta2) * gv * gv;
            mt.data[e] = (T)m;
            vt.data[e] = (T)v;
            double update = (m / bc1) / (std::sqrt(v / bc2) + hp.eps);
            if (decay) update += hp.weight_decay * (double)wt.data[e];
            wt.data[e] = (T)((double)wt.data[e] - hp.lr * update);
        }
    }
}

template <typename T>
grad_check_report finite_diff_check(const weights<T>& w0, const model_config& cfg,
                                    const token_batch& batch,
                                    const std::vector<long long>& param_indices, double eps) {
    if (!(eps >= 1e-6) || !(eps <= 1e-3))
        throw std::invalid_argument("finite_diff_check: eps must be in [1e-6, 1e-3]");
    weights<T> w = w0;
    auto [loss, grads] = loss_and_grads(w, cfg, batch);
    (void)loss;

    auto wl = tensor_list(w);
    auto gl = tensor_list(grads);
    const long long n_params = param_count(w);

    grad_check_report report;
    double err_sum = 0;
    for (long long idx : param_indices) {
        if (idx < 0 || idx >= n_params)
            throw std::invalid_argument("finite_diff_check: parameter index out of range");
        long long off = idx;
        size_t ti = 0;
        while (off >= wl[ti].first->numel()) {
            off -= wl[ti].first->numel();
            ++ti;
        }
        T& slot = wl[ti].first->data[(size_t)off];
        const T orig = slot;
        slot = (T)((double)orig + eps);
        const double lp = loss_only(w, cfg, batch);
        slot = (T)((double)orig - eps);
        const double lm = loss_only(w, cfg, batch);
        slot = orig;

        const double numeric = (lp - lm) / (2.0 * eps);
        const double analytic = (double)gl[ti].first->data[(size_t)off];
        const double rel = std::fabs(analytic - numeric) /
                           std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
        report.max_rel_err = std::max(report.max_rel_err, rel);
        err_sum += rel;
        report.checked += 1;
    }
    if (report.checked > 0) report.mean_rel_err = err_sum / (double)report.checked;
    return report;
}

template weights<float> zeros_like(const weights<float>&);
template weights<double> zeros_like(const weights<double>&);
template weights<float> allocate_weights(const model_config&);
template weights<double> allocate_weights(const model_config&);
template weights<float> init_model(const model_config&, uint64_t);
template weights<double> init_model(const model_config&, uint64_t);
template std::vector<float> forward(const weights<float>&, const model_config&, const token_batch&);
template std::vector<double> forward(const weights<double>&, const model_config&, const token_batch&);
template double loss_only(const weights<float>&, const model_config&, const token_batch&);
template double loss_only(const weights<double>&, const model_config&, const token_batch&);
template std::pair<double, weights<float>> loss_and_grads(const weights<float>&, const model_config&, const token_batch&);
template std::pair<double, weights<double>> loss_and_grads(const weights<double>&, const model_config&, const token_batch&);
template double grad_global_norm(const weights<float>&);
template double grad_global_norm(const weights<double>&);
template double clip_gradients(weights<float>&, double);
template double clip_gradients(weights<double>&, double);
template void adamw_step(weights<float>&, const weights<float>&, opt_state<float>&, const adamw_config&);
template void adamw_step(weights<double>&, const weights<double>&, opt_state<double>&, const adamw_config&);
template grad_check_report finite_diff_check(const weights<float>&, const model_config&, const token_batch&, const std::vector<long long>&, double);
template grad_check_report finite_diff_check(const weights<double>&, const model_config&, const token_batch&, const std::vector<long long>&, double);

namespace kern {
template void segnorm_fwd(const float*, const float*, float*, float*, long long, long long, long long);
template void segnorm_fwd(const double*, const double*, double*, double*, long long, long long, long long);
template void segnorm_bwd(const float*, const float*, const float*, const float*, float*, float*, long long, long long, long long);
template void segnorm_bwd(const double*, const double*, const double*, const double*, double*, double*, long long, long long, long long);
template void rope_tables(long long, long long, std::vector<float>&, std::vector<float>&);
template void rope_tables(long long, long long, std::vector<double>&, std::vector<double>&);
template void rope_apply(float*, long long, long long, long long, long long, const float*, const float*, float);
template void rope_apply(double*, long long, long long, long long, long long, const double*, const double*, double);
template void attention_fwd(const float*, const float*, const float*, float*, float*, long long, long long, long long, long long, long long);
template void attention_fwd(const double*, const double*, const double*, double*, double*, long long, long long, long long, long long, long long);
template void attention_bwd(const float*, const float*, const float*, const float*, const float*, float*, float*, float*, long long, long long, long long, long long, long long);
template void attention_bwd(const double*, const double*, const double*, const double*, const double*, double*, double*, double*, long long, long long, long long, long long, long long);
} // namespace kern

} // namespace lws
