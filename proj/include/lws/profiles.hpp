#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace lws {

// How the per-layer width scalars are laid out across depth.
//   uniform: every layer gets the same scalars
//   vanilla: linear ramp from the first scalar to the last
//   framed:  linear ramp with both end layers pinned to max(start, end)
//   reverse: linear ramp that must run downhill (start >= end)
//   crown:   two ramps meeting at a middle scalar (start -> mid -> end)
enum class scaling_kind { uniform, vanilla, framed, reverse, crown };

const char* to_string(scaling_kind k);
scaling_kind kind_from_string(std::string_view s);

// Declarative description of one depth schedule. ffn_scalars are the beta
// multipliers on d_model for the feed-forward width; qkv_scalars are the
// alpha multipliers that set the query-head count. Both lists hold 2 entries
// (start, end), or 3 for crown (start, middle, end).
struct scaling_spec {
    scaling_kind kind = scaling_kind::uniform;
    std::vector<double> ffn_scalars;
    std::vector<double> qkv_scalars;
    bool framing = false;
    int n_layers = 0;
};

// Throws std::invalid_argument on malformed specs: wrong scalar counts,
// non-positive scalars, too few layers, a framing flag that contradicts the
// kind, unequal uniform scalars, or an ascending reverse schedule.
void validate(const scaling_spec& spec);

// Concrete widths for one transformer block after quantization.
struct layer_profile {
    int layer_index = 0;
    int n_heads = 0;    // query heads
    int n_kv_heads = 0; // shared key/value heads (constant across layers)
    int head_dim = 0;
    int ffn_dim = 0;
    double beta_effective = 0.0;  // scalars the widths were built from, after
    double alpha_effective = 0.0; // framing but before quantization
};

// Evenly spaced values from start to end inclusive. count >= 2. Endpoints are
// exact, and the sequence for (b, a) is the exact mirror of the one for
// (a, b).
std::vector<double> interpolate(double start, double end, int count);

// Two joined ramps: start -> middle over layers [0, m] and middle -> end over
// [m, count-1], with m = (count - 1) / 2. count >= 3.
std::vector<double> interpolate_three_point(double start, double middle, double end, int count);

// Pins the first and last entries to max(start, end); interior untouched.
std::vector<double> apply_framing(std::vector<double> values, double start, double end);

// Query-head count for one layer: alpha * d_model / head_dim rounded to the
// nearest multiple of n_kv_heads (ties round up), never below n_kv_heads.
int quantize_heads(double alpha, int d_model, int head_dim, int n_kv_heads);

// Feed-forward width for one layer: beta * d_model rounded to the nearest
// integer, then to the nearest multiple of alignment (ties up), never below
// alignment.
int ffn_width(double beta, int d_model, int alignment);

// Expands a spec into per-layer widths. Validates the spec and the geometry
// arguments; every returned profile satisfies n_heads % n_kv_heads == 0 and
// ffn_dim % ffn_alignment == 0.
std::vector<layer_profile> build_layer_profiles(const scaling_spec& spec, int d_model,
                                                int head_dim, int n_kv_heads,
                                                int ffn_alignment);

void to_json(nlohmann::json& j, const scaling_spec& s);
void from_json(const nlohmann::json& j, scaling_spec& s);
void to_json(nlohmann::json& j, const layer_profile& p);
void from_json(const nlohmann::json& j, layer_profile& p);

} // namespace lws
