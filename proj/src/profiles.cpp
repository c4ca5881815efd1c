#include "lws/profiles.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lws {

const char* to_string(scaling_kind k) {
    switch (k) {
        case scaling_kind::uniform: return "uniform";
        case scaling_kind::vanilla: return "vanilla";
        case scaling_kind::framed: return "framed";
        case scaling_kind::reverse: return "reverse";
        case scaling_kind::crown: return "crown";
    }
    throw std::invalid_argument("to_string: unknown scaling_kind");
}

scaling_kind kind_from_string(std::string_view s) {
    if (s == "uniform") return scaling_kind::uniform;
    if (s == "vanilla") return scaling_kind::vanilla;
    if (s == "framed") return scaling_kind::framed;
    if (s == "reverse") return scaling_kind::reverse;
    if (s == "crown") return scaling_kind::crown;
    throw std::invalid_argument("unknown scaling kind: " + std::string(s));
}

static void check_scalars(const std::vector<double>& v, size_t want, const char* label) {
    if (v.size() != want)
        throw std::invalid_argument(std::string(label) + ": expected " + std::to_string(want) +
                                    " scalars, got " + std::to_string(v.size()));
    for (double x : v)
        if (!(x > 0.0) || !std::isfinite(x))
            throw std::invalid_argument(std::string(label) + ": scalars must be finite and positive");
}

void validate(const scaling_spec& spec) {
    const size_t want = spec.kind == scaling_kind::crown ? 3 : 2;
    check_scalars(spec.ffn_scalars, want, "scaling_spec.ffn_scalars");
    check_scalars(spec.qkv_scalars, want, "scaling_spec.qkv_scalars");

    const int min_layers = spec.kind == scaling_kind::crown ? 3 : 2;
    if (spec.n_layers < min_layers)
        throw std::invalid_argument("scaling_spec: n_layers must be >= " + std::to_string(min_layers) +
                                    " for kind " + to_string(spec.kind));

    switch (spec.kind) {
        case scaling_kind::uniform:
            if (spec.ffn_scalars[0] != spec.ffn_scalars[1] || spec.qkv_scalars[0] != spec.qkv_scalars[1])
                throw std::invalid_argument("scaling_spec: uniform requires equal start and end scalars");
            if (spec.framing)
                throw std::invalid_argument("scaling_spec: framing is meaningless for uniform");
            break;
        case scaling_kind::vanilla:
            if (spec.framing)
                throw std::invalid_argument("scaling_spec: vanilla must not set framing; use kind framed");
            break;
        case scaling_kind::framed:
            if (!spec.framing)
                throw std::invalid_argument("scaling_spec: framed requires the framing flag");
            break;
        case scaling_kind::reverse:
            if (spec.ffn_scalars[0] < spec.ffn_scalars[1] || spec.qkv_scalars[0] < spec.qkv_scalars[1])
                throw std::invalid_argument("scaling_spec: reverse requires start >= end");
            break;
        case scaling_kind::crown:
            break;
    }
}

std::vector<double> interpolate(double start, double end, int count) {
    if (count < 2) throw std::invalid_argument("interpolate: count must be >= 2");
    std::vector<double> out((size_t)count);
    if (start == end) {
        std::fill(out.begin(), out.end(), start);
        return out;
    }
    out.front() = start;
    out.back() = end;
    const double denom = count - 1;
    // symmetric weighted form so that interpolate(b, a, n) is the exact
    // reverse of interpolate(a, b, n), bit for bit
    for (int i = 1; i < count - 1; ++i)
        out[(size_t)i] = (start * (denom - i) + end * i) / denom;
    return out;
}

std::vector<double> interpolate_three_point(double start, double middle, double end, int count) {
    if (count < 3) throw std::invalid_argument("interpolate_three_point: count must be >= 3");
    const int m = (count - 1) / 2; // peak layer; lower middle when count is even
    std::vector<double> out = interpolate(start, middle, m + 1);
    std::vector<double> tail = interpolate(middle, end, count - m);
    out.insert(out.end(), tail.begin() + 1, tail.end());
    return out;
}

std::vector<double> apply_framing(std::vector<double> values, double start, double end) {
    if (values.empty()) throw std::invalid_argument("apply_framing: empty schedule");
    const double frame = std::max(start, end);
    values.front() = frame;
    values.back() = frame;
    return values;
}

int quantize_heads(double alpha, int d_model, int head_dim, int n_kv_heads) {
    if (!(alpha > 0.0) || !std::isfinite(alpha))
        throw std::invalid_argument("quantize_heads: alpha must be finite and positive");
    if (head_dim < 1 || d_model < 1 || d_model % head_dim != 0)
        throw std::invalid_argument("quantize_heads: d_model must be a positive multiple of head_dim");
    if (n_kv_heads < 1) throw std::invalid_argument("quantize_heads: n_kv_heads must be >= 1");

    const double raw = alpha * (double)d_model / (double)head_dim;
    const long long g = n_kv_heads;
    const long long lo = (long long)std::floor(raw / (double)g) * g;
    const long long hi = lo + g;
    const long long nearest = (raw - (double)lo < (double)hi - raw) ? lo : hi; // ties go up
    return (int)std::max(g, nearest);
}

int ffn_width(double beta, int d_model, int alignment) {
    if (!(beta > 0.0) || !std::isfinite(beta))
        throw std::invalid_argument("ffn_width: beta must be finite and positive");
    if (d_model < 1) throw std::invalid_argument("ffn_width: d_model must be >= 1");
    if (alignment < 1) throw std::invalid_argument("ffn_width: alignment must be >= 1");

    const long long w = std::llround(beta * (double)d_model);
    const long long base = (w / alignment) * alignment;
    const long long rem = w - base;
    const long long aligned = (2 * rem >= alignment) ? base + alignment : base; // ties go up
    return (int)std::max((long long)alignment, aligned);
}

// Schedule of one scalar family (ffn or qkv) across depth for a validated spec.
static std::vector<double> schedule(const scaling_spec& spec, const std::vector<double>& s) {
    std::vector<double> values;
    switch (spec.kind) {
        case scaling_kind::uniform:
            values.assign((size_t)spec.n_layers, s[0]);
            break;
        case scaling_kind::vanilla:
        case scaling_kind::framed:
        case scaling_kind::reverse:
            values = interpolate(s[0], s[1], spec.n_layers);
            break;
        case scaling_kind::crown:
            values = interpolate_three_point(s[0], s[1], s[2], spec.n_layers);
            break;
    }
    if (spec.framing) values = apply_framing(std::move(values), s.front(), s.back());
    return values;
}

std::vector<layer_profile> build_layer_profiles(const scaling_spec& spec, int d_model,
                                                int head_dim, int n_kv_heads,
                                                int ffn_alignment) {
    validate(spec);
    if (head_dim < 1 || d_model < 1 || d_model % head_dim != 0)
        throw std::invalid_argument("build_layer_profiles: d_model must be a positive multiple of head_dim");
    if (n_kv_heads < 1) throw std::invalid_argument("build_layer_profiles: n_kv_heads must be >= 1");
    if (ffn_alignment < 1) throw std::invalid_argument("build_layer_profiles: ffn_alignment must be >= 1");

    const std::vector<double> betas = schedule(spec, spec.ffn_scalars);
    const std::vector<double> alphas = schedule(spec, spec.qkv_scalars);

    std::vector<layer_profile> profiles((size_t)spec.n_layers);
    for (int i = 0; i < spec.n_layers; ++i) {
        layer_profile& p = profiles[(size_t)i];
        p.layer_index = i;
        p.head_dim = head_dim;
        p.n_kv_heads = n_kv_heads;
        p.n_heads = quantize_heads(alphas[(size_t)i], d_model, head_dim, n_kv_heads);
        p.ffn_dim = ffn_width(betas[(size_t)i], d_model, ffn_alignment);
        p.beta_effective = betas[(size_t)i];
        p.alpha_effective = alphas[(size_t)i];
    }
    return profiles;
}

void to_json(nlohmann::json& j, const scaling_spec& s) {
    j = nlohmann::json{{"kind", to_string(s.kind)},
                       {"ffn_scalars", s.ffn_scalars},
                       {"qkv_scalars", s.qkv_scalars},
                       {"framing", s.framing},
                       {"n_layers", s.n_layers}};
}

void from_json(const nlohmann::json& j, scaling_spec& s) {
    s.kind = kind_from_string(j.at("kind").get<std::string>());
    j.at("ffn_scalars").get_to(s.ffn_scalars);
    j.at("qkv_scalars").get_to(s.qkv_scalars);
    s.framing = j.value("framing", s.kind == scaling_kind::framed);
    j.at("n_layers").get_to(s.n_layers);
}

void to_json(nlohmann::json& j, const layer_profile& p) {
    j = nlohmann::json{{"layer_index", p.layer_index},
                       {"n_heads", p.n_heads},
                       {"n_kv_heads", p.n_kv_heads},
                       {"head_dim", p.head_dim},
                       {"ffn_dim", p.ffn_dim},
                       {"beta_effective", p.beta_effective},
                       {"alpha_effective", p.alpha_effective}};
}

void from_json(const nlohmann::json& j, layer_profile& p) {
    j.at("layer_index").get_to(p.layer_index);
    j.at("n_heads").get_to(p.n_heads);
    j.at("n_kv_heads").get_to(p.n_kv_heads);
    j.at("head_dim").get_to(p.head_dim);
    j.at("ffn_dim").get_to(p.ffn_dim);
    p.beta_effective = j.value("beta_effective", 0.0);
    p.alpha_effective = j.value("alpha_effective", 0.0);
}

} // namespace lws
