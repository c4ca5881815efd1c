#include "lws/presets.hpp"

#include <stdexcept>

namespace lws {

static scaling_spec make_spec(scaling_kind kind, std::vector<double> ffn,
                              std::vector<double> qkv, bool framing, int n_layers) {
    scaling_spec s;
    s.kind = kind;
    s.ffn_scalars = std::move(ffn);
    s.qkv_scalars = std::move(qkv);
    s.framing = framing;
    s.n_layers = n_layers;
    return s;
}

const model_skeleton& table_skeleton() {
    static const model_skeleton skel{/*d_model*/ 768, /*vocab*/ 50279, /*max_seq*/ 1024,
                                     /*head_dim*/ 64, /*kv_heads*/ 4, /*ffn_align*/ 256,
                                     /*tied*/ false};
    return skel;
}

const std::vector<table_preset>& table_presets() {
    static const std::vector<table_preset> presets = {
        {"baseline-12l", make_spec(scaling_kind::uniform, {4.0, 4.0}, {1.0, 1.0}, false, 12)},
        {"vanilla-12l", make_spec(scaling_kind::vanilla, {2.0, 5.3}, {0.5, 2.0}, false, 12)},
        {"baseline-18l", make_spec(scaling_kind::uniform, {2.5, 2.5}, {0.75, 0.75}, false, 18)},
        {"vanilla-18l", make_spec(scaling_kind::vanilla, {1.0, 4.0}, {0.5, 1.0}, false, 18)},
        {"framed-18l", make_spec(scaling_kind::framed, {0.5, 4.0}, {0.5, 1.0}, true, 18)},
        {"reverse-18l", make_spec(scaling_kind::reverse, {4.0, 0.5}, {1.0, 0.5}, true, 18)},
        {"crown-18l", make_spec(scaling_kind::crown, {0.5, 3.8, 0.5}, {0.5, 1.0, 0.5}, true, 18)},
    };
    return presets;
}

const std::vector<published_counts>& table_published_counts() {
    static const std::vector<published_counts> counts = {
        {"baseline-12l", 181.1, 142.5}, {"vanilla-12l", 178.8, 140.1},
        {"baseline-18l", 183.5, 144.8}, {"vanilla-18l", 179.7, 141.1},
        {"framed-18l", 179.4, 140.7},   {"reverse-18l", 179.4, 140.7},
        {"crown-18l", 181.9, 143.3},
    };
    return counts;
}

const table_preset& find_table_preset(const std::string& name) {
    for (const table_preset& p : table_presets())
        if (p.name == name) return p;
    throw std::invalid_argument("unknown preset: " + name);
}

const std::vector<compare_preset>& compare_presets() {
    static const std::vector<compare_preset> presets = [] {
        compare_preset desk;
        desk.name = "desk";
        desk.variants = {
            {"baseline", make_spec(scaling_kind::uniform, {4.0, 4.0}, {1.0, 1.0}, false, 8)},
            {"vanilla", make_spec(scaling_kind::vanilla, {1.0, 4.0}, {0.5, 1.0}, false, 8)},
            {"reverse", make_spec(scaling_kind::reverse, {4.0, 1.0}, {1.0, 0.5}, true, 8)},
            {"crown", make_spec(scaling_kind::crown, {1.0, 4.0, 1.0}, {0.5, 1.0, 0.5}, true, 8)},
        };
        desk.skeleton = model_skeleton{/*d_model*/ 64, /*vocab*/ 256, /*max_seq*/ 256,
                                       /*head_dim*/ 16, /*kv_heads*/ 2, /*ffn_align*/ 8,
                                       /*tied*/ false};
        desk.train.steps = 2000;
        desk.train.batch_size = 2;
        desk.train.seq_len = 256;
        // lr low enough that the loss is still descending at the last step;
        // at 1e-3 every variant plateaus early and then wobbles around the
        // floor, which defeats smoothed-curve monotonicity checks
        desk.train.lr = 3e-4;
        desk.train.beta2 = 0.99;
        desk.train.warmup_steps = 40;
        desk.train.weight_decay = 0.1;
        desk.train.grad_clip_norm = 1.0;
        desk.train.eval_interval = 40;
        desk.train.eval_tokens = 8192;
        desk.train.seed = 42;
        desk.corpus_bytes = 2 * 1024 * 1024;
        return std::vector<compare_preset>{desk};
    }();
    return presets;
}

const compare_preset& find_compare_preset(const std::string& name) {
    for (const compare_preset& p : compare_presets())
        if (p.name == name) return p;
    throw std::invalid_argument("unknown compare preset: " + name);
}

} // namespace lws
