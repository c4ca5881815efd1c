#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lws/budget.hpp"
#include "lws/data.hpp"
#include "lws/model.hpp"

namespace lws {

struct train_config {
    long long steps = 0;
    int batch_size = 0;
    int seq_len = 0;
    double lr = 1e-3;
    long long warmup_steps = 0; // linear ramp to lr, constant after
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.1;
    double grad_clip_norm = 1.0;
    long long eval_interval = 100;
    long long eval_tokens = 16384;
    uint64_t seed = 0;
    bool record_timing = true; // false zeroes the timing columns so reruns are byte-identical
};

void validate(const train_config& tc);

// Learning rate at a 1-based step: lr * step / warmup during warmup, lr after.
double lr_at_step(const train_config& tc, long long step);

struct metrics_row {
    long long step = 0;
    long long tokens_seen = 0;
    double train_loss = 0;
    double val_loss = 0;
    double val_ppl = 0;
    double tokens_per_sec = 0;
    double wall_clock_s = 0;
};

struct metrics_log {
    std::vector<metrics_row> rows;
};

// Steps strictly increasing, tokens_seen non-decreasing, val_ppl consistent
// with exp(val_loss). Throws std::invalid_argument otherwise.
void validate(const metrics_log& log);

std::string to_csv(const metrics_log& log);
void write_metrics_csv(const std::string& path, const metrics_log& log);

// Perplexity is defined as exp of the mean cross-entropy.
inline double perplexity_from_loss(double loss) { return std::exp(loss); }

// Mean next-byte cross-entropy over non-overlapping windows from the start of
// the region, using as many full windows as eval_tokens allows (at least
// one). Returns (loss, perplexity).
std::pair<double, double> evaluate_perplexity(const weights<float>& w, const model_config& cfg,
                                              const uint8_t* region, long long region_size,
                                              int seq_len, long long eval_tokens);

struct train_result {
    weights<float> model;
    metrics_log metrics;
    long long tokens_seen = 0;
};

// Full loop: init, sample batches, clip, AdamW with warmup, periodic
// evaluation on the held-out tail. A metrics row is written at every
// eval_interval step and at the final step. Deterministic for a fixed
// (config, corpus, seed). When checkpoint_dir is non-empty the final weights
// are saved there on completion.
train_result train(const model_config& cfg, const train_config& tc, const corpus& data,
                   const std::string& checkpoint_dir = "");

struct variant_result {
    std::string name;
    scaling_spec spec;
    model_config config;
    long long total_params = 0;
    double final_val_loss = 0;
    double final_val_ppl = 0;
    metrics_log metrics;
};

struct comparison_result {
    std::vector<variant_result> variants;
    std::string curves_csv;  // step,tokens_seen,<variant> val_ppl columns, one row per eval
    std::string summary_csv; // name,params_m,final_val_loss,final_val_ppl,beats_baseline
    std::string note;        // informational: how the variants placed against the baseline
};

// Trains every variant under identical settings. Budgets must already agree:
// a total-parameter spread above budget_tolerance (relative to the smallest)
// aborts with invalid_experiment_error before any training starts.
comparison_result compare_variants(const std::vector<std::pair<std::string, scaling_spec>>& variants,
                                   const model_skeleton& skel, const train_config& tc,
                                   const corpus& data, double budget_tolerance = 0.01);

} // namespace lws
