// lws-forge: plan width schedules, count parameter budgets, train and compare
// desk-scale variants.

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lws/budget.hpp"
#include "lws/checkpoint.hpp"
#include "lws/data.hpp"
#include "lws/manifest.hpp"
#include "lws/presets.hpp"
#include "lws/profiles.hpp"
#include "lws/svg_plot.hpp"
#include "lws/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* k_tool = "lws-forge 0.1.0";

std::vector<double> parse_scalars(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        size_t pos = 0;
        double v;
        try {
            v = std::stod(item, &pos);
        } catch (...) {
            throw std::invalid_argument("malformed scalar list: '" + csv + "'");
        }
        while (pos < item.size() && std::isspace((unsigned char)item[pos])) ++pos;
        if (pos != item.size())
            throw std::invalid_argument("malformed scalar list: '" + csv + "'");
        out.push_back(v);
    }
    if (out.empty()) throw std::invalid_argument("malformed scalar list: '" + csv + "'");
    return out;
}

// Flags shared by the subcommands that accept an inline spec.
struct spec_flags {
    std::string kind = "uniform";
    std::string ffn = "4.0,4.0";
    std::string qkv = "1.0,1.0";
    int layers = 8;
    bool framing = false;
    bool no_framing = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--variant", kind, "schedule kind: uniform|vanilla|framed|reverse|crown");
        cmd->add_option("--ffn", ffn, "ffn scalars, comma separated (2, or 3 for crown)");
        cmd->add_option("--qkv", qkv, "query-head scalars, comma separated");
        cmd->add_option("--layers", layers, "number of layers");
        cmd->add_flag("--framing", framing, "pin first/last layers to the max scalar");
        cmd->add_flag("--no-framing", no_framing, "force framing off");
    }

    lws::scaling_spec build() const {
        lws::scaling_spec s;
        s.kind = lws::kind_from_string(kind);
        s.ffn_scalars = parse_scalars(ffn);
        // a single value means a flat schedule
        if (s.ffn_scalars.size() == 1) s.ffn_scalars.push_back(s.ffn_scalars[0]);
        s.qkv_scalars = parse_scalars(qkv);
        if (s.qkv_scalars.size() == 1) s.qkv_scalars.push_back(s.qkv_scalars[0]);
        s.n_layers = layers;
        // default framing follows the kind; explicit flags win
        s.framing = s.kind == lws::scaling_kind::framed || s.kind == lws::scaling_kind::reverse ||
                    s.kind == lws::scaling_kind::crown;
        if (framing) s.framing = true;
        if (no_framing) s.framing = false;
        lws::validate(s);
        return s;
    }
};

struct skeleton_flags {
    lws::model_skeleton skel{64, 256, 256, 16, 2, 8, false};

    void attach(CLI::App* cmd) {
        cmd->add_option("--d-model", skel.d_model, "model width");
        cmd->add_option("--vocab", skel.vocab_size, "vocabulary size");
        cmd->add_option("--seq-len", skel.max_seq_len, "context length");
        cmd->add_option("--head-dim", skel.head_dim, "attention head width");
        cmd->add_option("--kv-heads", skel.n_kv_heads, "shared key/value heads");
        cmd->add_option("--ffn-align", skel.ffn_alignment, "round ffn widths to this multiple");
        cmd->add_flag("--tied", skel.tie_embeddings, "tie the output head to the embedding");
    }
};

// Optional JSON config file: {"spec": {...}, "skeleton": {...}, "train": {...}}.
struct config_file {
    json root;
    bool loaded = false;

    void load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::invalid_argument("cannot open config file: " + path);
        in >> root;
        loaded = true;
    }

    bool has_spec() const { return loaded && root.contains("spec"); }
    bool has_skeleton() const { return loaded && root.contains("skeleton"); }
    lws::scaling_spec spec_section() const { return root.at("spec").get<lws::scaling_spec>(); }
    lws::model_skeleton skeleton_section() const {
        return root.at("skeleton").get<lws::model_skeleton>();
    }
    void apply_train(lws::train_config& t) const {
        if (!loaded || !root.contains("train")) return;
        const json& j = root.at("train");
        t.steps = j.value("steps", t.steps);
        t.batch_size = j.value("batch_size", t.batch_size);
        t.seq_len = j.value("seq_len", t.seq_len);
        t.lr = j.value("lr", t.lr);
        t.warmup_steps = j.value("warmup_steps", t.warmup_steps);
        t.beta1 = j.value("beta1", t.beta1);
        t.beta2 = j.value("beta2", t.beta2);
        t.eps = j.value("eps", t.eps);
        t.weight_decay = j.value("weight_decay", t.weight_decay);
        t.grad_clip_norm = j.value("grad_clip_norm", t.grad_clip_norm);
        t.eval_interval = j.value("eval_interval", t.eval_interval);
        t.eval_tokens = j.value("eval_tokens", t.eval_tokens);
        t.seed = j.value("seed", t.seed);
    }
};

// precedence: built-in defaults, then the config file, then explicit flags
lws::scaling_spec merge_spec(const CLI::App* cmd, const spec_flags& sf, const config_file& cf) {
    if (!cf.has_spec()) return sf.build();
    lws::scaling_spec s = cf.spec_section();
    if (cmd->count("--variant")) s.kind = lws::kind_from_string(sf.kind);
    if (cmd->count("--ffn")) {
        s.ffn_scalars = parse_scalars(sf.ffn);
        if (s.ffn_scalars.size() == 1) s.ffn_scalars.push_back(s.ffn_scalars[0]);
    }
    if (cmd->count("--qkv")) {
        s.qkv_scalars = parse_scalars(sf.qkv);
        if (s.qkv_scalars.size() == 1) s.qkv_scalars.push_back(s.qkv_scalars[0]);
    }
    if (cmd->count("--layers")) s.n_layers = sf.layers;
    if (sf.framing) s.framing = true;
    if (sf.no_framing) s.framing = false;
    lws::validate(s);
    return s;
}

lws::model_skeleton merge_skeleton(const CLI::App* cmd, const skeleton_flags& kf,
                                   const config_file& cf) {
    if (!cf.has_skeleton()) return kf.skel;
    lws::model_skeleton k = cf.skeleton_section();
    if (cmd->count("--d-model")) k.d_model = kf.skel.d_model;
    if (cmd->count("--vocab")) k.vocab_size = kf.skel.vocab_size;
    if (cmd->count("--seq-len")) k.max_seq_len = kf.skel.max_seq_len;
    if (cmd->count("--head-dim")) k.head_dim = kf.skel.head_dim;
    if (cmd->count("--kv-heads")) k.n_kv_heads = kf.skel.n_kv_heads;
    if (cmd->count("--ffn-align")) k.ffn_alignment = kf.skel.ffn_alignment;
    if (kf.skel.tie_embeddings) k.tie_embeddings = true;
    return k;
}

std::string profile_table(const std::vector<lws::layer_profile>& profiles) {
    std::ostringstream out;
    out << "layer  heads  kv_heads  head_dim  ffn_dim      beta     alpha\n";
    char line[128];
    for (const lws::layer_profile& p : profiles) {
        std::snprintf(line, sizeof line, "%5d  %5d  %8d  %8d  %7d  %8.4f  %8.4f\n", p.layer_index,
                      p.n_heads, p.n_kv_heads, p.head_dim, p.ffn_dim, p.beta_effective,
                      p.alpha_effective);
        out << line;
    }
    return out.str();
}

lws::corpus load_or_synthesize(const std::vector<std::string>& paths, long long synth_bytes,
                               double val_fraction, uint64_t seed, std::string* sha_out) {
    lws::corpus c;
    if (!paths.empty()) {
        c = lws::load_corpus_files(paths, val_fraction, seed);
    } else {
        c = lws::build_corpus(lws::synthetic_text(synth_bytes, seed), val_fraction, seed,
                              "synthetic:" + std::to_string(synth_bytes) + ":" +
                                  std::to_string(seed));
    }
    if (sha_out) *sha_out = lws::sha256_hex(c.tokens.data(), c.tokens.size());
    return c;
}

void emit_manifest(const std::string& out_dir, lws::run_manifest m) {
    m.created_utc = lws::utc_timestamp();
    m.tool = k_tool;
    lws::write_run_manifest((fs::path(out_dir) / "manifest.json").string(), m);
}

std::vector<std::pair<double, double>> ppl_curve(const lws::metrics_log& log) {
    std::vector<std::pair<double, double>> pts;
    for (const lws::metrics_row& r : log.rows)
        pts.push_back({(double)r.tokens_seen, r.val_ppl});
    return pts;
}

int cmd_plan(const lws::scaling_spec& spec, const lws::model_skeleton& skel,
             const std::string& out_dir) {
    const auto profiles = lws::build_layer_profiles(spec, skel.d_model, skel.head_dim,
                                                    skel.n_kv_heads, skel.ffn_alignment);
    std::cout << lws::to_string(spec.kind) << " schedule over " << spec.n_layers << " layers\n"
              << profile_table(profiles);

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        const json j{{"spec", spec}, {"skeleton", skel}, {"profiles", profiles}};
        const std::string plan_path = (fs::path(out_dir) / "plan.json").string();
        std::ofstream out(plan_path);
        if (!out) throw std::runtime_error("cannot write " + plan_path);
        out << j.dump(2) << "\n";

        lws::run_manifest m;
        m.command = "plan";
        m.resolved = j;
        m.outputs = {plan_path};
        emit_manifest(out_dir, std::move(m));
    }
    return 0;
}

int cmd_count(const std::string& preset, const lws::scaling_spec& inline_spec,
              const lws::model_skeleton& inline_skel, const std::string& out_dir) {
    const bool tied = inline_skel.tie_embeddings;
    std::vector<std::pair<std::string, lws::scaling_spec>> specs;
    lws::model_skeleton skel;

    if (!preset.empty()) {
        skel = lws::table_skeleton();
        if (preset == "all") {
            for (const lws::table_preset& p : lws::table_presets()) specs.push_back({p.name, p.spec});
        } else {
            try {
                specs.push_back({preset, lws::find_table_preset(preset).spec});
            } catch (const std::invalid_argument&) {
                std::ostringstream msg;
                msg << "unknown preset '" << preset << "'; available:";
                for (const lws::table_preset& p : lws::table_presets()) msg << " " << p.name;
                msg << " all";
                throw std::invalid_argument(msg.str());
            }
        }
    } else {
        skel = inline_skel;
        specs.push_back({lws::to_string(inline_spec.kind), inline_spec});
    }
    if (tied) skel.tie_embeddings = true;

    const std::string table = lws::emit_spec_table(specs, skel);
    std::cout << table;
    for (const auto& [name, spec] : specs) {
        const lws::param_breakdown b = lws::count_params(lws::resolve_config(spec, skel));
        std::printf("%s: embedding=%lld lm_head=%lld norms=%lld attention=%lld ffn=%lld "
                    "total=%lld non_embedding=%lld\n",
                    name.c_str(), b.embedding, b.lm_head, b.norms,
                    std::accumulate(b.per_layer_attention.begin(), b.per_layer_attention.end(), 0LL),
                    std::accumulate(b.per_layer_ffn.begin(), b.per_layer_ffn.end(), 0LL), b.total,
                    b.non_embedding);
    }

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        const std::string csv_path = (fs::path(out_dir) / "params.csv").string();
        std::ofstream out(csv_path);
        if (!out) throw std::runtime_error("cannot write " + csv_path);
        out << table;

        lws::run_manifest m;
        m.command = "count";
        m.resolved = json{{"specs", json::object()}, {"skeleton", skel}};
        for (const auto& [name, spec] : specs) m.resolved["specs"][name] = spec;
        m.outputs = {csv_path};
        emit_manifest(out_dir, std::move(m));
    }
    return 0;
}

struct train_flags {
    lws::train_config tc;
    std::vector<std::string> corpus_paths;
    long long synth_bytes = 2 * 1024 * 1024;
    double val_fraction = 0.05;
    bool no_svg = false;
    bool no_timing = false;
    int repeat = 1;

    train_flags() {
        tc.steps = 500;
        tc.batch_size = 2;
        tc.seq_len = 256;
        tc.lr = 1e-3;
        tc.warmup_steps = 10;
        tc.eval_interval = 50;
        tc.eval_tokens = 16384;
        tc.seed = 42;
    }

    void attach(CLI::App* cmd) {
        cmd->add_option("--corpus", corpus_paths, "corpus file(s), concatenated in order")
            ->take_all();
        cmd->add_option("--synthetic-bytes", synth_bytes,
                        "size of the generated corpus when no --corpus is given");
        cmd->add_option("--val-fraction", val_fraction, "held-out tail fraction");
        cmd->add_option("--steps", tc.steps, "training steps");
        cmd->add_option("--batch", tc.batch_size, "sequences per step");
        cmd->add_option("--train-seq-len", tc.seq_len, "training window length");
        cmd->add_option("--lr", tc.lr, "peak learning rate");
        cmd->add_option("--warmup", tc.warmup_steps, "linear warmup steps");
        cmd->add_option("--weight-decay", tc.weight_decay, "decoupled weight decay");
        cmd->add_option("--clip", tc.grad_clip_norm, "global gradient-norm clip");
        cmd->add_option("--eval-interval", tc.eval_interval, "steps between evaluations");
        cmd->add_option("--eval-tokens", tc.eval_tokens, "validation tokens per evaluation");
        cmd->add_option("--seed", tc.seed, "seed for init and batch order");
        cmd->add_flag("--no-svg", no_svg, "skip the chart file");
        cmd->add_flag("--no-timing", no_timing,
                      "zero the timing columns so reruns are byte-identical");
        cmd->add_option("--repeat", repeat, "run N times with seeds seed..seed+N-1")
            ->check(CLI::PositiveNumber);
    }
};

// copy back every train knob the user typed, so flags beat the config file
void overlay_train_flags(const CLI::App* cmd, const lws::train_config& flags,
                         lws::train_config& t) {
    if (cmd->count("--steps")) t.steps = flags.steps;
    if (cmd->count("--batch")) t.batch_size = flags.batch_size;
    if (cmd->count("--train-seq-len")) t.seq_len = flags.seq_len;
    if (cmd->count("--lr")) t.lr = flags.lr;
    if (cmd->count("--warmup")) t.warmup_steps = flags.warmup_steps;
    if (cmd->count("--weight-decay")) t.weight_decay = flags.weight_decay;
    if (cmd->count("--clip")) t.grad_clip_norm = flags.grad_clip_norm;
    if (cmd->count("--eval-interval")) t.eval_interval = flags.eval_interval;
    if (cmd->count("--eval-tokens")) t.eval_tokens = flags.eval_tokens;
    if (cmd->count("--seed")) t.seed = flags.seed;
}

int cmd_train(const lws::scaling_spec& spec, const lws::model_skeleton& skel, train_flags& tf,
              const std::string& out_dir) {
    tf.tc.record_timing = !tf.no_timing;
    if (tf.tc.warmup_steps > tf.tc.steps) tf.tc.warmup_steps = tf.tc.steps / 10;
    if (tf.tc.eval_interval > tf.tc.steps) tf.tc.eval_interval = tf.tc.steps;
    if (tf.tc.seq_len > skel.max_seq_len) tf.tc.seq_len = skel.max_seq_len;

    const lws::model_config cfg = lws::resolve_config(spec, skel);
    std::string corpus_sha;
    const lws::corpus data = load_or_synthesize(tf.corpus_paths, tf.synth_bytes, tf.val_fraction,
                                                tf.tc.seed, &corpus_sha);

    fs::create_directories(out_dir);
    lws::run_manifest m;
    m.command = "train";
    m.resolved = json{{"spec", spec}, {"skeleton", skel}, {"config", cfg}};
    m.seed = tf.tc.seed;
    m.corpus_sha256 = corpus_sha;

    for (int rep = 0; rep < tf.repeat; ++rep) {
        lws::train_config tc = tf.tc;
        tc.seed = tf.tc.seed + (uint64_t)rep;
        const fs::path run_dir =
            tf.repeat == 1 ? fs::path(out_dir) : fs::path(out_dir) / ("repeat-" + std::to_string(rep));
        fs::create_directories(run_dir);

        const lws::train_result r = lws::train(cfg, tc, data, (run_dir / "checkpoint").string());

        const std::string csv_path = (run_dir / "metrics.csv").string();
        lws::write_metrics_csv(csv_path, r.metrics);
        m.outputs.push_back(csv_path);
        m.outputs.push_back((run_dir / "checkpoint").string());

        if (!tf.no_svg) {
            const std::string svg_path = (run_dir / "train.svg").string();
            lws::write_svg_chart(svg_path, "validation perplexity", "tokens seen", "val ppl",
                                 {{"val_ppl", ppl_curve(r.metrics)}});
            m.outputs.push_back(svg_path);
        }

        const lws::metrics_row& last = r.metrics.rows.back();
        std::printf("seed %llu: final step %lld, train_loss %.4f, val_loss %.4f, val_ppl %.4f\n",
                    (unsigned long long)tc.seed, last.step, last.train_loss, last.val_loss,
                    last.val_ppl);
    }

    emit_manifest(out_dir, std::move(m));
    return 0;
}

int cmd_eval(const std::string& checkpoint_dir, train_flags& tf, const std::string& out_dir) {
    const lws::checkpoint_data ckpt = lws::load_checkpoint(checkpoint_dir);
    std::string corpus_sha;
    const lws::corpus data = load_or_synthesize(tf.corpus_paths, tf.synth_bytes, tf.val_fraction,
                                                tf.tc.seed, &corpus_sha);

    const auto [loss, ppl] =
        lws::evaluate_perplexity(ckpt.model, ckpt.config, data.val_data(), data.val_size(),
                                 tf.tc.seq_len, tf.tc.eval_tokens);
    std::printf("val_loss %.6f, val_ppl %.6f (checkpoint step %lld)\n", loss, ppl, ckpt.step);

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        const std::string csv_path = (fs::path(out_dir) / "eval.csv").string();
        std::ofstream out(csv_path);
        if (!out) throw std::runtime_error("cannot write " + csv_path);
        char line[128];
        std::snprintf(line, sizeof line, "val_loss,val_ppl,step\n%.10g,%.10g,%lld\n", loss, ppl,
                      ckpt.step);
        out << line;

        lws::run_manifest m;
        m.command = "eval";
        m.resolved = json{{"checkpoint", checkpoint_dir}, {"config", ckpt.config}};
        m.seed = tf.tc.seed;
        m.corpus_sha256 = corpus_sha;
        m.outputs = {csv_path};
        emit_manifest(out_dir, std::move(m));
    }
    return 0;
}

int cmd_compare(const std::string& preset, train_flags& tf, const std::string& out_dir) {
    const lws::compare_preset recipe = lws::find_compare_preset(preset.empty() ? "desk" : preset);
    tf.tc.record_timing = !tf.no_timing;
    if (tf.tc.eval_interval > tf.tc.steps) tf.tc.eval_interval = tf.tc.steps;
    if (tf.synth_bytes < recipe.corpus_bytes && tf.corpus_paths.empty())
        tf.synth_bytes = recipe.corpus_bytes;

    std::string corpus_sha;
    const lws::corpus data = load_or_synthesize(tf.corpus_paths, tf.synth_bytes, tf.val_fraction,
                                                tf.tc.seed, &corpus_sha);

    // equalize every schedule to the first variant's budget before training
    const long long target =
        lws::count_params(lws::resolve_config(recipe.variants[0].second, recipe.skeleton)).total;
    std::vector<std::pair<std::string, lws::scaling_spec>> equalized;
    for (const auto& [name, spec] : recipe.variants)
        equalized.push_back({name, lws::equalize_budget(spec, recipe.skeleton, target, 0.004)});

    const lws::comparison_result result =
        lws::compare_variants(equalized, recipe.skeleton, tf.tc, data, 0.01);

    fs::create_directories(out_dir);
    lws::run_manifest m;
    m.command = "compare";
    m.resolved = json{{"preset", recipe.name},
                      {"skeleton", recipe.skeleton},
                      {"variants", json::object()},
                      {"target_params", target}};
    m.seed = tf.tc.seed;
    m.corpus_sha256 = corpus_sha;

    std::vector<lws::plot_series> series;
    for (const lws::variant_result& v : result.variants) {
        m.resolved["variants"][v.name] = v.spec;
        const std::string csv_path = (fs::path(out_dir) / ("metrics_" + v.name + ".csv")).string();
        lws::write_metrics_csv(csv_path, v.metrics);
        m.outputs.push_back(csv_path);
        series.push_back({v.name, ppl_curve(v.metrics)});
    }

    const std::string curves_path = (fs::path(out_dir) / "compare.csv").string();
    {
        std::ofstream out(curves_path);
        if (!out) throw std::runtime_error("cannot write " + curves_path);
        out << result.curves_csv;
    }
    m.outputs.push_back(curves_path);

    const std::string summary_path = (fs::path(out_dir) / "summary.csv").string();
    {
        std::ofstream out(summary_path);
        if (!out) throw std::runtime_error("cannot write " + summary_path);
        out << result.summary_csv;
    }
    m.outputs.push_back(summary_path);

    if (!tf.no_svg) {
        const std::string svg_path = (fs::path(out_dir) / "compare.svg").string();
        lws::write_svg_chart(svg_path, "validation perplexity by variant", "tokens seen",
                             "val ppl", series);
        m.outputs.push_back(svg_path);
    }

    std::cout << result.summary_csv << result.note << "\n";
    emit_manifest(out_dir, std::move(m));
    return 0;
}

int cmd_gen_corpus(long long bytes, uint64_t seed, const std::string& out_path) {
    const std::vector<uint8_t> text = lws::synthetic_text(bytes, seed);
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    out.write((const char*)text.data(), (std::streamsize)text.size());
    std::printf("wrote %lld bytes to %s (sha256 %s)\n", (long long)text.size(), out_path.c_str(),
                lws::sha256_hex(text.data(), text.size()).c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"layer-wise width scheduling, budget accounting and desk-scale training"};
    app.require_subcommand(1);

    std::string config_path, out_dir, preset, checkpoint_dir;
    long long gen_bytes = 2 * 1024 * 1024;
    uint64_t gen_seed = 1;
    std::string gen_out = "corpus.txt";

    spec_flags sf;
    skeleton_flags kf;
    train_flags tf;

    CLI::App* plan = app.add_subcommand("plan", "resolve a schedule into per-layer widths");
    sf.attach(plan);
    kf.attach(plan);
    plan->add_option("--config", config_path, "JSON config with spec/skeleton sections");
    plan->add_option("--out", out_dir, "directory for plan.json and the run manifest");

    CLI::App* count = app.add_subcommand("count", "parameter budget for one spec or the presets");
    sf.attach(count);
    kf.attach(count);
    count->add_option("--config", config_path, "JSON config with spec/skeleton sections");
    count->add_option("--preset", preset, "bundled preset name, or 'all'");
    count->add_option("--out", out_dir, "directory for params.csv and the run manifest");

    CLI::App* train = app.add_subcommand("train", "train one model and log metrics");
    sf.attach(train);
    kf.attach(train);
    tf.attach(train);
    train->add_option("--config", config_path, "JSON config with spec/skeleton/train sections");
    train->add_option("--out", out_dir, "output directory")->required();

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on held-out data");
    tf.attach(eval);
    eval->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
    eval->add_option("--out", out_dir, "directory for eval.csv and the run manifest");

    CLI::App* compare = app.add_subcommand("compare", "budget-equalized multi-variant run");
    tf.attach(compare);
    compare->add_option("--config", config_path, "JSON config overriding train settings");
    compare->add_option("--preset", preset, "comparison recipe name (default 'desk')");
    compare->add_option("--out", out_dir, "output directory")->required();

    CLI::App* gen = app.add_subcommand("gen-corpus", "write a synthetic byte corpus");
    gen->add_option("--bytes", gen_bytes, "corpus size in bytes");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--out", gen_out, "output file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help and friends
        app.exit(e);
        return 2;
    }

    try {
        config_file cf;
        if (!config_path.empty()) cf.load(config_path);

        if (plan->parsed())
            return cmd_plan(merge_spec(plan, sf, cf), merge_skeleton(plan, kf, cf), out_dir);
        if (count->parsed()) {
            // a preset supplies the spec, so only merge one when none was named
            const lws::scaling_spec spec =
                preset.empty() ? merge_spec(count, sf, cf) : lws::scaling_spec{};
            return cmd_count(preset, spec, merge_skeleton(count, kf, cf), out_dir);
        }
        if (train->parsed()) {
            const lws::train_config from_flags = tf.tc;
            cf.apply_train(tf.tc);
            overlay_train_flags(train, from_flags, tf.tc);
            return cmd_train(merge_spec(train, sf, cf), merge_skeleton(train, kf, cf), tf,
                             out_dir);
        }
        if (eval->parsed()) return cmd_eval(checkpoint_dir, tf, out_dir);
        if (compare->parsed()) {
            // preset knobs first, then the config file, then explicit flags
            const lws::train_config from_flags = tf.tc;
            tf.tc = lws::find_compare_preset(preset.empty() ? "desk" : preset).train;
            cf.apply_train(tf.tc);
            overlay_train_flags(compare, from_flags, tf.tc);
            return cmd_compare(preset, tf, out_dir);
        }
        if (gen->parsed()) return cmd_gen_corpus(gen_bytes, gen_seed, gen_out);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
