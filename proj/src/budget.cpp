#include "lws/budget.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace lws {

model_config resolve_config(const scaling_spec& spec, const model_skeleton& skel) {
    if (skel.vocab_size < 2) throw std::invalid_argument("model_skeleton: vocab_size must be >= 2");
    if (skel.max_seq_len < 1) throw std::invalid_argument("model_skeleton: max_seq_len must be >= 1");
    model_config cfg;
    cfg.d_model = skel.d_model;
    cfg.vocab_size = skel.vocab_size;
    cfg.max_seq_len = skel.max_seq_len;
    cfg.head_dim = skel.head_dim;
    cfg.n_kv_heads = skel.n_kv_heads;
    cfg.tie_embeddings = skel.tie_embeddings;
    cfg.layers = build_layer_profiles(spec, skel.d_model, skel.head_dim, skel.n_kv_heads,
                                      skel.ffn_alignment);
    return cfg;
}

void validate(const model_config& cfg) {
    if (cfg.d_model < 1 || cfg.head_dim < 1 || cfg.d_model % cfg.head_dim != 0)
        throw std::invalid_argument("model_config: d_model must be a positive multiple of head_dim");
    if (cfg.vocab_size < 2) throw std::invalid_argument("model_config: vocab_size must be >= 2");
    if (cfg.max_seq_len < 1) throw std::invalid_argument("model_config: max_seq_len must be >= 1");
    if (cfg.layers.empty()) throw std::invalid_argument("model_config: no layers");
    for (const layer_profile& p : cfg.layers) {
        if (p.head_dim != cfg.head_dim || p.n_kv_heads != cfg.n_kv_heads)
            throw std::invalid_argument("model_config: layer geometry disagrees with skeleton");
        if (p.n_heads < 1 || p.n_heads % p.n_kv_heads != 0)
            throw std::invalid_argument("model_config: n_heads must be a positive multiple of n_kv_heads");
        if (p.ffn_dim < 1) throw std::invalid_argument("model_config: ffn_dim must be >= 1");
    }
}

param_breakdown count_params(const model_config& cfg) {
    validate(cfg);
    const long long d = cfg.d_model;
    const long long v = cfg.vocab_size;

    param_breakdown b;
    b.embedding = v * d;
    b.lm_head = cfg.tie_embeddings ? 0 : v * d;
    b.norms = d; // final norm
    for (const layer_profile& p : cfg.layers) {
        const long long q_dim = (long long)p.n_heads * p.head_dim;
        const long long kv_dim = (long long)p.n_kv_heads * p.head_dim;
        // q, k, v, o projections plus the per-head q/k norm gains
        b.per_layer_attention.push_back(d * q_dim + 2 * d * kv_dim + q_dim * d + q_dim + kv_dim);
        // gate, up, down
        b.per_layer_ffn.push_back(3 * d * (long long)p.ffn_dim);
        b.norms += 2 * d; // attention norm + ffn norm
    }

    // the output head counts as non-embedding; only the input table is
    // excluded from the non-embedding number
    b.non_embedding = b.lm_head + b.norms;
    for (long long x : b.per_layer_attention) b.non_embedding += x;
    for (long long x : b.per_layer_ffn) b.non_embedding += x;
    b.total = b.embedding + b.non_embedding;
    return b;
}

static scaling_spec scale_ffn(const scaling_spec& spec, double factor) {
    scaling_spec out = spec;
    for (double& s : out.ffn_scalars) s *= factor;
    return out;
}

static long long count_with_factor(const scaling_spec& spec, const model_skeleton& skel,
                                   double factor) {
    return count_params(resolve_config(scale_ffn(spec, factor), skel)).total;
}

scaling_spec equalize_budget(const scaling_spec& spec, const model_skeleton& skel,
                             long long target_params, double tolerance) {
    if (target_params < 1) throw std::invalid_argument("equalize_budget: target must be >= 1");
    if (!(tolerance > 0.0) || tolerance > 0.1)
        throw std::invalid_argument("equalize_budget: tolerance must be in (0, 0.1]");

    const auto within = [&](long long count) {
        return std::llabs(count - target_params) <= (long long)(tolerance * (double)target_params);
    };

    const long long base = count_params(resolve_config(spec, skel)).total;
    if (within(base)) return spec;

    double lo = 0.05, hi = 20.0;
    const long long at_lo = count_with_factor(spec, skel, lo);
    const long long at_hi = count_with_factor(spec, skel, hi);
    if (target_params < at_lo && !within(at_lo))
        throw infeasible_budget_error("equalize_budget: target below reachable range", at_lo);
    if (target_params > at_hi && !within(at_hi))
        throw infeasible_budget_error("equalize_budget: target above reachable range", at_hi);

    long long best = base;
    double best_factor = 1.0;
    for (int iter = 0; iter < 64; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const long long count = count_with_factor(spec, skel, mid);
        if (std::llabs(count - target_params) < std::llabs(best - target_params)) {
            best = count;
            best_factor = mid;
        }
        if (within(count)) return scale_ffn(spec, mid);
        (count < target_params ? lo : hi) = mid;
    }
    if (within(best)) return scale_ffn(spec, best_factor);
    throw infeasible_budget_error("equalize_budget: no factor reached the target within tolerance",
                                  best);
}

// Shortest clean decimal for a scalar, keeping one decimal on whole numbers
// so ramps read as floats (4 -> "4.0").
static std::string format_scalar(double x) {
    char buf[40];
    if (x == std::floor(x) && std::fabs(x) < 1e15) {
        std::snprintf(buf, sizeof buf, "%.1f", x);
    } else {
        std::snprintf(buf, sizeof buf, "%.10g", x);
    }
    return buf;
}

static std::string format_scalar_list(const std::vector<double>& v) {
    std::string s = "\"[";
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) s += ", ";
        s += format_scalar(v[i]);
    }
    s += "]\"";
    return s;
}

std::string emit_spec_table(const std::vector<std::pair<std::string, scaling_spec>>& specs,
                            const model_skeleton& skel) {
    std::ostringstream out;
    out << "name,n_layers,fnn_scalars,qkv_scalars,framing,params_m,non_embed_m\n";
    char num[40];
    for (const auto& [name, spec] : specs) {
        const param_breakdown b = count_params(resolve_config(spec, skel));
        out << name << ',' << spec.n_layers << ',' << format_scalar_list(spec.ffn_scalars) << ','
            << format_scalar_list(spec.qkv_scalars) << ',' << (spec.framing ? "true" : "false");
        std::snprintf(num, sizeof num, ",%.2f,%.2f", b.total_m(), b.non_embedding_m());
        out << num << '\n';
    }
    return out.str();
}

void to_json(nlohmann::json& j, const model_skeleton& s) {
    j = nlohmann::json{{"d_model", s.d_model},           {"vocab_size", s.vocab_size},
                       {"max_seq_len", s.max_seq_len},   {"head_dim", s.head_dim},
                       {"n_kv_heads", s.n_kv_heads},     {"ffn_alignment", s.ffn_alignment},
                       {"tie_embeddings", s.tie_embeddings}};
}

void from_json(const nlohmann::json& j, model_skeleton& s) {
    j.at("d_model").get_to(s.d_model);
    j.at("vocab_size").get_to(s.vocab_size);
    j.at("max_seq_len").get_to(s.max_seq_len);
    j.at("head_dim").get_to(s.head_dim);
    j.at("n_kv_heads").get_to(s.n_kv_heads);
    s.ffn_alignment = j.value("ffn_alignment", 1);
    s.tie_embeddings = j.value("tie_embeddings", false);
}

void to_json(nlohmann::json& j, const model_config& c) {
    j = nlohmann::json{{"d_model", c.d_model},         {"vocab_size", c.vocab_size},
                       {"max_seq_len", c.max_seq_len}, {"head_dim", c.head_dim},
                       {"n_kv_heads", c.n_kv_heads},   {"tie_embeddings", c.tie_embeddings},
                       {"layers", c.layers}};
}

void from_json(const nlohmann::json& j, model_config& c) {
    j.at("d_model").get_to(c.d_model);
    j.at("vocab_size").get_to(c.vocab_size);
    j.at("max_seq_len").get_to(c.max_seq_len);
    j.at("head_dim").get_to(c.head_dim);
    j.at("n_kv_heads").get_to(c.n_kv_heads);
    c.tie_embeddings = j.value("tie_embeddings", false);
    j.at("layers").get_to(c.layers);
}

} // namespace lws
