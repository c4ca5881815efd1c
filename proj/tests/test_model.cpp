#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "lws/budget.hpp"
#include "lws/kernels.hpp"
#include "lws/model.hpp"
#include "reference_forward.hpp"

using namespace lws;

namespace {

model_config tiny_config(int d_model, int layers, int vocab, int dh, int g, double beta,
                         double alpha, bool tied = false) {
    scaling_spec s;
    s.kind = scaling_kind::uniform;
    s.ffn_scalars = {beta, beta};
    s.qkv_scalars = {alpha, alpha};
    s.n_layers = layers;
    s.framing = false;
    model_skeleton k{d_model, vocab, 64, dh, g, 1, tied};
    return resolve_config(s, k);
}

token_batch random_batch(int b, int s, int vocab, uint64_t seed) {
    std::mt19937_64 rng(seed);
    token_batch out;
    out.batch_size = b;
    out.seq_len = s;
    out.inputs.resize((size_t)(b * s));
    out.targets.resize((size_t)(b * s));
    for (int32_t& t : out.inputs) t = (int32_t)(rng() % (uint64_t)vocab);
    for (int32_t& t : out.targets) t = (int32_t)(rng() % (uint64_t)vocab);
    return out;
}

double rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0, den = 1e-12;
    for (size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::fabs(a[i] - b[i]));
        den = std::max(den, std::fabs(a[i]));
    }
    return num / den;
}

} // namespace

TEST_CASE("init is deterministic and norm gains start at one") {
    const model_config cfg = tiny_config(32, 2, 64, 8, 2, 4.0, 1.0);
    const weights<float> a = init_model<float>(cfg, 7);
    const weights<float> b = init_model<float>(cfg, 7);
    const weights<float> c = init_model<float>(cfg, 8);

    bool identical = a.embedding.data == b.embedding.data;
    bool differs = a.embedding.data != c.embedding.data;
    for (size_t l = 0; l < a.layers.size(); ++l) {
        identical = identical && a.layers[l].wq.data == b.layers[l].wq.data;
        for (float v : a.layers[l].attn_norm.data) CHECK(v == 1.0f);
        for (float v : a.layers[l].q_norm.data) CHECK(v == 1.0f);
    }
    for (float v : a.final_norm.data) CHECK(v == 1.0f);
    CHECK(identical);
    CHECK(differs);
}

TEST_CASE("init statistics of a wide matrix") {
    // reference width: each w_gate is 768 x 3072
    const model_config cfg = tiny_config(768, 2, 256, 64, 4, 4.0, 1.0);
    const weights<double> w = init_model<double>(cfg, 3);
    const tensor<double>& gate = w.layers[0].w_gate;
    REQUIRE(gate.numel() == 768LL * 3072);

    double mean = 0, biggest = 0;
    for (double v : gate.data) {
        mean += v;
        biggest = std::max(biggest, std::fabs(v));
    }
    mean /= (double)gate.numel();
    CHECK(std::fabs(mean) < 3.0 * 0.02 / std::sqrt(768.0 * 3072.0) * 5.0);
    CHECK(biggest <= 0.06 + 1e-12); // truncated at three sigma
}

TEST_CASE("logit shape contract") {
    const model_config cfg = tiny_config(32, 2, 50, 8, 2, 2.0, 1.0);
    const weights<float> w = init_model<float>(cfg, 1);
    const std::vector<float> logits = forward(w, cfg, random_batch(2, 8, 50, 2));
    CHECK(logits.size() == (size_t)(2 * 8 * 50));
    for (float v : logits) CHECK(std::isfinite(v));
}

TEST_CASE("untrained loss sits near log vocab") {
    const model_config cfg = tiny_config(64, 2, 256, 16, 2, 4.0, 1.0);
    const weights<float> w = init_model<float>(cfg, 5);
    const double loss = loss_only(w, cfg, random_batch(4, 32, 256, 3));
    CHECK(loss == doctest::Approx(std::log(256.0)).epsilon(0.05));
}

TEST_CASE("zeroed head gives exactly uniform loss") {
    const model_config cfg = tiny_config(32, 2, 64, 8, 2, 2.0, 1.0);
    weights<double> w = init_model<double>(cfg, 5);
    std::fill(w.lm_head.data.begin(), w.lm_head.data.end(), 0.0);
    const double loss = loss_only(w, cfg, random_batch(2, 16, 64, 4));
    CHECK(loss == doctest::Approx(std::log(64.0)).epsilon(1e-12));
}

TEST_CASE("perturbing a token leaves earlier positions untouched") {
    const model_config cfg = tiny_config(32, 3, 64, 8, 2, 2.0, 1.0);
    const weights<double> w = init_model<double>(cfg, 9);
    token_batch base = random_batch(1, 12, 64, 6);
    token_batch poked = base;
    poked.inputs[5] = (poked.inputs[5] + 1) % 64;

    const std::vector<double> la = forward(w, cfg, base);
    const std::vector<double> lb = forward(w, cfg, poked);
    bool prefix_equal = true, suffix_changed = false;
    for (int s = 0; s < 12; ++s)
        for (int t = 0; t < 64; ++t) {
            const double a = la[(size_t)(s * 64 + t)], b = lb[(size_t)(s * 64 + t)];
            if (s < 5) prefix_equal = prefix_equal && a == b;
            if (s >= 5) suffix_changed = suffix_changed || a != b;
        }
    CHECK(prefix_equal);
    CHECK(suffix_changed);
}

TEST_CASE("rms norm output has unit root mean square") {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> dist(0.0, 2.0);
    const long long rows = 10, segs = 3, width = 16;
    std::vector<double> x((size_t)(rows * segs * width)), y(x.size()), r((size_t)(rows * segs));
    std::vector<double> gains((size_t)(segs * width), 1.0);
    for (double& v : x) v = dist(rng);

    kern::segnorm_fwd(x.data(), gains.data(), y.data(), r.data(), rows, segs, width);
    for (long long seg = 0; seg < rows * segs; ++seg) {
        double ms = 0;
        for (long long d = 0; d < width; ++d) {
            const double v = y[(size_t)(seg * width + d)];
            ms += v * v;
        }
        CHECK(std::sqrt(ms / (double)width) == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("rotation preserves head norms and inverts cleanly") {
    std::mt19937_64 rng(32);
    std::normal_distribution<double> dist(0.0, 1.0);
    const long long S = 12, H = 3, dh = 16;
    std::vector<double> cs, sn;
    kern::rope_tables(S, dh, cs, sn);

    std::vector<double> x((size_t)(S * H * dh));
    for (double& v : x) v = dist(rng);
    const std::vector<double> orig = x;

    kern::rope_apply(x.data(), S, S, H, dh, cs.data(), sn.data(), 1.0);
    for (long long r = 0; r < S; ++r)
        for (long long h = 0; h < H; ++h) {
            double before = 0, after = 0;
            for (long long d = 0; d < dh; ++d) {
                const size_t i = (size_t)((r * H + h) * dh + d);
                before += orig[i] * orig[i];
                after += x[i] * x[i];
            }
            CHECK(std::sqrt(after) == doctest::Approx(std::sqrt(before)).epsilon(1e-6));
        }

    // position zero rotates by identity
    for (long long e = 0; e < H * dh; ++e) CHECK(x[(size_t)e] == orig[(size_t)e]);

    kern::rope_apply(x.data(), S, S, H, dh, cs.data(), sn.data(), -1.0);
    for (size_t i = 0; i < x.size(); ++i) CHECK(x[i] == doctest::Approx(orig[i]).epsilon(1e-12));
}

TEST_CASE("attention rows are proper causal distributions") {
    std::mt19937_64 rng(33);
    std::normal_distribution<double> dist(0.0, 1.0);
    const long long B = 2, S = 7, H = 4, G = 2, dh = 8;
    std::vector<double> q((size_t)(B * S * H * dh)), k((size_t)(B * S * G * dh)), v(k.size());
    for (double& e : q) e = dist(rng);
    for (double& e : k) e = dist(rng);
    for (double& e : v) e = dist(rng);
    std::vector<double> probs((size_t)(B * H * S * S), 0.0), out(q.size());

    kern::attention_fwd(q.data(), k.data(), v.data(), probs.data(), out.data(), B, S, H, G, dh);
    for (long long u = 0; u < B * H; ++u)
        for (long long i = 0; i < S; ++i) {
            double sum = 0;
            for (long long j = 0; j <= i; ++j) sum += probs[(size_t)((u * S + i) * S + j)];
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
            for (long long j = i + 1; j < S; ++j)
                CHECK(probs[(size_t)((u * S + i) * S + j)] == 0.0);
        }
}

TEST_CASE("one query per kv head matches the plain multi-head reference") {
    const model_config cfg = tiny_config(32, 2, 64, 8, 4, 2.0, 1.0); // H = G = 4
    REQUIRE(cfg.layers[0].n_heads == 4);
    const weights<double> w = init_model<double>(cfg, 11);
    const token_batch batch = random_batch(2, 10, 64, 7);

    const std::vector<double> got = forward(w, cfg, batch);
    const std::vector<double> want = ref::reference_logits(w, cfg, batch, ref::attn_flavour::mha);
    CHECK(rel_diff(got, want) < 1e-6);
}

TEST_CASE("single kv head matches the multi-query reference") {
    const model_config cfg = tiny_config(32, 2, 64, 8, 1, 2.0, 1.0); // G = 1, H = 4
    REQUIRE(cfg.layers[0].n_heads == 4);
    const weights<double> w = init_model<double>(cfg, 12);
    const token_batch batch = random_batch(2, 10, 64, 8);

    const std::vector<double> got = forward(w, cfg, batch);
    const std::vector<double> want = ref::reference_logits(w, cfg, batch, ref::attn_flavour::mqa);
    CHECK(rel_diff(got, want) < 1e-6);
}

TEST_CASE("tied output head reuses the embedding") {
    const model_config cfg = tiny_config(32, 2, 64, 8, 4, 2.0, 1.0, true);
    const weights<double> w = init_model<double>(cfg, 13);
    CHECK(w.lm_head.numel() == 0);
    const token_batch batch = random_batch(1, 6, 64, 9);
    const std::vector<double> got = forward(w, cfg, batch);
    const std::vector<double> want = ref::reference_logits(w, cfg, batch, ref::attn_flavour::mha);
    CHECK(got.size() == want.size());
    CHECK(rel_diff(got, want) < 1e-6);
}

TEST_CASE("grouped kv replication equivalence") {
    // a G=2 model must behave exactly like a G=4 model whose kv blocks are
    // copies of the group the query head would have used
    const model_config cfg_a = tiny_config(32, 2, 64, 8, 2, 2.0, 1.0);
    const model_config cfg_b = tiny_config(32, 2, 64, 8, 4, 2.0, 1.0);
    const weights<double> wa = init_model<double>(cfg_a, 14);
    weights<double> wb = init_model<double>(cfg_b, 14);

    const int D = 32, dh = 8, H = 4, Ga = 2;
    const int per_group = H / Ga;
    wb.embedding = wa.embedding;
    wb.final_norm = wa.final_norm;
    wb.lm_head = wa.lm_head;
    for (size_t l = 0; l < wa.layers.size(); ++l) {
        const layer_weights<double>& src = wa.layers[l];
        layer_weights<double>& dst = wb.layers[l];
        dst.attn_norm = src.attn_norm;
        dst.wq = src.wq;
        dst.q_norm = src.q_norm;
        dst.wo = src.wo;
        dst.ffn_norm = src.ffn_norm;
        dst.w_gate = src.w_gate;
        dst.w_up = src.w_up;
        dst.w_down = src.w_down;
        for (int h = 0; h < H; ++h) {
            const int g = h / per_group;
            for (int r = 0; r < D; ++r)
                for (int d = 0; d < dh; ++d) {
                    dst.wk.data[(size_t)(r * H * dh + h * dh + d)] =
                        src.wk.data[(size_t)(r * Ga * dh + g * dh + d)];
                    dst.wv.data[(size_t)(r * H * dh + h * dh + d)] =
                        src.wv.data[(size_t)(r * Ga * dh + g * dh + d)];
                }
            for (int d = 0; d < dh; ++d)
                dst.k_norm.data[(size_t)(h * dh + d)] = src.k_norm.data[(size_t)(g * dh + d)];
        }
    }

    const token_batch batch = random_batch(2, 9, 64, 10);
    const std::vector<double> la = forward(wa, cfg_a, batch);
    const std::vector<double> lb = forward(wb, cfg_b, batch);
    REQUIRE(la.size() == lb.size());
    for (size_t i = 0; i < la.size(); ++i) CHECK(la[i] == lb[i]);
}

TEST_CASE("out of range token ids are rejected") {
    const model_config cfg = tiny_config(32, 2, 64, 8, 2, 2.0, 1.0);
    const weights<float> w = init_model<float>(cfg, 15);
    token_batch bad = random_batch(1, 8, 64, 11);
    bad.inputs[3] = 64;
    CHECK_THROWS_AS(forward(w, cfg, bad), std::invalid_argument);
    bad.inputs[3] = -1;
    CHECK_THROWS_AS(forward(w, cfg, bad), std::invalid_argument);
}

TEST_CASE("adamw single step matches the hand-computed update") {
    const model_config cfg = tiny_config(32, 2, 64, 8, 2, 1.0, 0.5);
    weights<double> w = init_model<double>(cfg, 16);
    weights<double> g = zeros_like(w);
    w.layers[0].wq.data[0] = 1.0;
    g.layers[0].wq.data[0] = 1.0;
    const double untouched = w.layers[0].wo.data[5];

    adamw_config hp;
    hp.lr = 0.1;
    hp.beta1 = 0.9;
    hp.beta2 = 0.999;
    hp.eps = 1e-8;
    hp.weight_decay = 0.0;
    opt_state<double> st = init_opt_state(w);

    adamw_step(w, g, st, hp);
    CHECK(w.layers[0].wq.data[0] == doctest::Approx(0.9).epsilon(1e-7));
    CHECK(w.layers[0].wo.data[5] == untouched); // zero grad, zero decay
    CHECK(st.step == 1);

    // moments follow the closed-form EMA of a constant gradient
    adamw_step(w, g, st, hp);
    CHECK(st.m.layers[0].wq.data[0] == doctest::Approx(1.0 - 0.9 * 0.9).epsilon(1e-12));
    CHECK(st.v.layers[0].wq.data[0] == doctest::Approx(1.0 - 0.999 * 0.999).epsilon(1e-12));
}

TEST_CASE("decay applies to linear maps only") {
    const model_config cfg = tiny_config(32, 2, 64, 8, 2, 1.0, 0.5);
    weights<double> w = init_model<double>(cfg, 17);
    const weights<double> g = zeros_like(w);
    const weights<double> before = w;

    adamw_config hp;
    hp.lr = 0.1;
    hp.weight_decay = 0.5;
    opt_state<double> st = init_opt_state(w);
    adamw_step(w, g, st, hp);

    for (size_t i = 0; i < w.layers[0].wq.data.size(); ++i)
        CHECK(w.layers[0].wq.data[i] ==
              doctest::Approx(before.layers[0].wq.data[i] * (1.0 - 0.05)).epsilon(1e-12));
    CHECK(w.embedding.data == before.embedding.data);
    CHECK(w.layers[0].attn_norm.data == before.layers[0].attn_norm.data);
    CHECK(w.final_norm.data == before.final_norm.data);
}

TEST_CASE("non-finite gradients abort the step") {
    const model_config cfg = tiny_config(32, 2, 64, 8, 2, 1.0, 0.5);
    weights<float> w = init_model<float>(cfg, 18);
    weights<float> g = zeros_like(w);
    g.layers[0].w_up.data[7] = std::numeric_limits<float>::quiet_NaN();
    opt_state<float> st = init_opt_state(w);
    adamw_config hp;
    CHECK_THROWS_AS(adamw_step(w, g, st, hp), training_divergence_error);
}

TEST_CASE("gradient clipping caps the global norm") {
    const model_config cfg = tiny_config(32, 2, 64, 8, 2, 2.0, 1.0);
    const weights<float> w = init_model<float>(cfg, 19);
    auto [loss, grads] = loss_and_grads(w, cfg, random_batch(2, 16, 64, 12));
    CHECK(std::isfinite(loss));

    const double raw = grad_global_norm(grads);
    CHECK(raw > 0.01);
    const double reported = clip_gradients(grads, 0.01);
    CHECK(reported == doctest::Approx(raw).epsilon(1e-9));
    CHECK(grad_global_norm(grads) <= 0.01 + 1e-6);

    // a generous threshold leaves gradients alone
    auto [loss2, grads2] = loss_and_grads(w, cfg, random_batch(2, 16, 64, 12));
    const weights<float> copy = grads2;
    clip_gradients(grads2, raw * 10);
    CHECK(grads2.layers[0].wq.data == copy.layers[0].wq.data);
    (void)loss2;
}
