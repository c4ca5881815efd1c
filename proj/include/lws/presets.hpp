#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lws/budget.hpp"
#include "lws/profiles.hpp"
#include "lws/trainer.hpp"

namespace lws {

// One bundled schedule at reference scale (d_model 768, vocab 50279,
// 64-dim heads, 4 kv heads, feed-forward widths aligned to 256).
struct table_preset {
    std::string name;
    scaling_spec spec;
};

const std::vector<table_preset>& table_presets();
const model_skeleton& table_skeleton();

// Published parameter counts in millions for the bundled schedules, in the
// same order as table_presets(): {total, non-embedding}.
struct published_counts {
    std::string name;
    double total_m;
    double non_embed_m;
};
const std::vector<published_counts>& table_published_counts();

// A named end-to-end comparison recipe: variants, skeleton, training knobs.
struct compare_preset {
    std::string name;
    std::vector<std::pair<std::string, scaling_spec>> variants;
    model_skeleton skeleton;
    train_config train;
    long long corpus_bytes = 0; // synthetic corpus size when none is supplied
};

const std::vector<compare_preset>& compare_presets();
const compare_preset& find_compare_preset(const std::string& name);
const table_preset& find_table_preset(const std::string& name);

} // namespace lws
