#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "lws/model.hpp"
#include "lws/profiles.hpp"

using namespace lws;

namespace {

model_config probe_config() {
    scaling_spec s;
    s.kind = scaling_kind::uniform;
    s.ffn_scalars = {2.0, 2.0};
    s.qkv_scalars = {1.0, 1.0};
    s.n_layers = 2;
    s.framing = false;
    model_skeleton k{32, 64, 64, 8, 2, 1, false};
    return resolve_config(s, k);
}

token_batch probe_batch(int vocab_cap) {
    std::mt19937_64 rng(77);
    token_batch b;
    b.batch_size = 2;
    b.seq_len = 16;
    b.inputs.resize(32);
    b.targets.resize(32);
    for (int32_t& t : b.inputs) t = (int32_t)(rng() % (uint64_t)vocab_cap);
    for (size_t i = 0; i < b.inputs.size(); ++i) {
        const bool row_end = (i + 1) % 16 == 0;
        b.targets[i] = row_end ? b.inputs[i - 15] : b.inputs[i + 1];
    }
    return b;
}

std::vector<long long> sample_indices(long long total, int n, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<long long> idx;
    idx.reserve((size_t)n);
    for (int i = 0; i < n; ++i) idx.push_back((long long)(rng() % (uint64_t)total));
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    return idx;
}

} // namespace

TEST_CASE("analytic gradients agree with central differences") {
    const model_config cfg = probe_config();
    const weights<double> w = init_model<double>(cfg, 101);
    const token_batch batch = probe_batch(64);

    const std::vector<long long> idx = sample_indices(param_count(w), 240, 5);
    REQUIRE(idx.size() >= 200);
    const grad_check_report rep = finite_diff_check(w, cfg, batch, idx, 1e-4);
    CHECK(rep.checked == (long long)idx.size());
    CHECK(rep.max_rel_err < 1e-4);
    CHECK(rep.mean_rel_err <= rep.max_rel_err);
}

TEST_CASE("shrinking the step does not worsen the probe") {
    const model_config cfg = probe_config();
    const weights<double> w = init_model<double>(cfg, 102);
    const token_batch batch = probe_batch(64);
    const std::vector<long long> idx = sample_indices(param_count(w), 64, 6);

    const grad_check_report full = finite_diff_check(w, cfg, batch, idx, 1e-4);
    const grad_check_report half = finite_diff_check(w, cfg, batch, idx, 5e-5);
    // either the truncation error shrinks or both sit at the rounding floor
    CHECK((half.max_rel_err <= full.max_rel_err || half.max_rel_err < 1e-6));
}

TEST_CASE("unused token rows carry no gradient") {
    const model_config cfg = probe_config();
    const weights<double> w = init_model<double>(cfg, 103);
    const token_batch batch = probe_batch(32); // ids stay below 32, rows 32..63 unused

    auto [loss, grads] = loss_and_grads(w, cfg, batch);
    CHECK(std::isfinite(loss));
    const int d = cfg.d_model;
    for (int j = 0; j < d; ++j) CHECK(grads.embedding.data[(size_t)(50 * d + j)] == 0.0);

    std::vector<long long> row;
    for (int j = 0; j < d; ++j) row.push_back(50LL * d + j);
    const grad_check_report rep = finite_diff_check(w, cfg, batch, row, 1e-4);
    CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("probe rejects a bad step size") {
    const model_config cfg = probe_config();
    const weights<double> w = init_model<double>(cfg, 104);
    const token_batch batch = probe_batch(64);
    const std::vector<long long> idx = {0, 1, 2};
    CHECK_THROWS_AS(finite_diff_check(w, cfg, batch, idx, 1e-7), std::invalid_argument);
    CHECK_THROWS_AS(finite_diff_check(w, cfg, batch, idx, 1e-2), std::invalid_argument);
}
