#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lws/errors.hpp"
#include "lws/profiles.hpp"

namespace lws {

// Everything about the model that a depth schedule does not decide.
struct model_skeleton {
    int d_model = 0;
    int vocab_size = 0;
    int max_seq_len = 0;
    int head_dim = 0;
    int n_kv_heads = 0;
    int ffn_alignment = 1;
    bool tie_embeddings = false;
};

// Fully resolved model: skeleton plus concrete per-layer widths.
struct model_config {
    int d_model = 0;
    int vocab_size = 0;
    int max_seq_len = 0;
    int head_dim = 0;
    int n_kv_heads = 0;
    bool tie_embeddings = false;
    std::vector<layer_profile> layers;

    int n_layers() const { return (int)layers.size(); }
};

model_config resolve_config(const scaling_spec& spec, const model_skeleton& skel);
void validate(const model_config& cfg);

// Exact parameter counts by component. Linear maps carry no biases; norms are
// single gain vectors; the attention count includes the per-head q/k norm
// gains. non_embedding = total - embedding - lm_head.
struct param_breakdown {
    long long embedding = 0;
    long long lm_head = 0;
    long long norms = 0;
    std::vector<long long> per_layer_attention;
    std::vector<long long> per_layer_ffn;
    long long total = 0;
    long long non_embedding = 0;

    double total_m() const { return (double)total / 1e6; }
    double non_embedding_m() const { return (double)non_embedding / 1e6; }
};

param_breakdown count_params(const model_config& cfg);

// Rescales the ffn scalars by a common factor (alpha untouched) until the
// total count lands within tolerance of target_params. Returns the input
// unchanged when it is already within tolerance. Bisection over the factor
// range [0.05, 20]; throws infeasible_budget_error when the target cannot be
// bracketed or hit, carrying the closest achieved count.
scaling_spec equalize_budget(const scaling_spec& spec, const model_skeleton& skel,
                             long long target_params, double tolerance);

// CSV table of named schedules: one row per spec with its scalars, framing
// flag and parameter counts in millions.
std::string emit_spec_table(const std::vector<std::pair<std::string, scaling_spec>>& specs,
                            const model_skeleton& skel);

void to_json(nlohmann::json& j, const model_skeleton& s);
void from_json(const nlohmann::json& j, model_skeleton& s);
void to_json(nlohmann::json& j, const model_config& c);
void from_json(const nlohmann::json& j, model_config& c);

} // namespace lws
