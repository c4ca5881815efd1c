#include "lws/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lws/checkpoint.hpp"

namespace lws {

void validate(const train_config& tc) {
    if (tc.steps < 1) throw std::invalid_argument("train_config: steps must be >= 1");
    if (tc.batch_size < 1 || tc.seq_len < 1)
        throw std::invalid_argument("train_config: batch_size and seq_len must be >= 1");
    if (!(tc.lr > 0)) throw std::invalid_argument("train_config: lr must be positive");
    if (tc.warmup_steps < 0) throw std::invalid_argument("train_config: warmup_steps must be >= 0");
    if (tc.beta1 < 0 || tc.beta1 >= 1 || tc.beta2 < 0 || tc.beta2 >= 1)
        throw std::invalid_argument("train_config: betas must be in [0, 1)");
    if (!(tc.eps > 0)) throw std::invalid_argument("train_config: eps must be positive");
    if (tc.weight_decay < 0) throw std::invalid_argument("train_config: weight_decay must be >= 0");
    if (!(tc.grad_clip_norm > 0))
        throw std::invalid_argument("train_config: grad_clip_norm must be positive");
    if (tc.eval_interval < 1 || tc.eval_interval > tc.steps)
        throw std::invalid_argument("train_config: eval_interval must be in [1, steps]");
    if (tc.eval_tokens < 1) throw std::invalid_argument("train_config: eval_tokens must be >= 1");
}

double lr_at_step(const train_config& tc, long long step) {
    if (tc.warmup_steps > 0 && step < tc.warmup_steps)
        return tc.lr * (double)step / (double)tc.warmup_steps;
    return tc.lr;
}

void validate(const metrics_log& log) {
    for (size_t i = 0; i < log.rows.size(); ++i) {
        const metrics_row& r = log.rows[i];
        if (i > 0) {
            if (r.step <= log.rows[i - 1].step)
                throw std::invalid_argument("metrics_log: steps must be strictly increasing");
            if (r.tokens_seen < log.rows[i - 1].tokens_seen)
                throw std::invalid_argument("metrics_log: tokens_seen must be non-decreasing");
        }
        const double want = perplexity_from_loss(r.val_loss);
        if (std::fabs(r.val_ppl - want) > 1e-9 * std::max(1.0, want))
            throw std::invalid_argument("metrics_log: val_ppl is not exp(val_loss)");
    }
}

std::string to_csv(const metrics_log& log) {
    std::ostringstream out;
    out << "step,tokens_seen,train_loss,val_loss,val_ppl,tokens_per_sec,wall_clock_s\n";
    char line[256];
    for (const metrics_row& r : log.rows) {
        std::snprintf(line, sizeof line, "%lld,%lld,%.10g,%.10g,%.10g,%.3f,%.3f\n", r.step,
                      r.tokens_seen, r.train_loss, r.val_loss, r.val_ppl, r.tokens_per_sec,
                      r.wall_clock_s);
        out << line;
    }
    return out.str();
}

void write_metrics_csv(const std::string& path, const metrics_log& log) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << to_csv(log);
}

std::pair<double, double> evaluate_perplexity(const weights<float>& w, const model_config& cfg,
                                              const uint8_t* region, long long region_size,
                                              int seq_len, long long eval_tokens) {
    if (seq_len < 1) throw std::invalid_argument("evaluate_perplexity: seq_len must be >= 1");
    if (eval_tokens < 1)
        throw std::invalid_argument("evaluate_perplexity: eval_tokens must be >= 1");

    const long long available = (region_size - 1) / seq_len;
    if (available < 1)
        throw insufficient_data_error("evaluate_perplexity: region of " +
                                      std::to_string(region_size) +
                                      " tokens cannot fit one window of " +
                                      std::to_string(seq_len));
    const long long want = std::max<long long>(1, eval_tokens / seq_len);
    const long long n_windows = std::min(want, available);

    constexpr int chunk = 8;
    double total = 0;
    for (long long first = 0; first < n_windows; first += chunk) {
        const int n = (int)std::min<long long>(chunk, n_windows - first);
        const token_batch b = window_batch(region, region_size, first, n, seq_len);
        total += loss_only(w, cfg, b) * (double)n;
    }
    const double loss = total / (double)n_windows;
    return {loss, perplexity_from_loss(loss)};
}

train_result train(const model_config& cfg, const train_config& tc, const corpus& data,
                   const std::string& checkpoint_dir) {
    validate(cfg);
    validate(tc);

    weights<float> w = init_model<float>(cfg, tc.seed);
    opt_state<float> opt = init_opt_state(w);
    // distinct stream from init so reordering one never shifts the other
    std::mt19937_64 batch_rng(tc.seed ^ 0x9e3779b97f4a7c15ull);

    adamw_config hp;
    hp.beta1 = tc.beta1;
    hp.beta2 = tc.beta2;
    hp.eps = tc.eps;
    hp.weight_decay = tc.weight_decay;

    train_result result;
    const auto t0 = std::chrono::steady_clock::now();
    long long tokens_seen = 0;

    for (long long step = 1; step <= tc.steps; ++step) {
        const token_batch batch = next_batch(data, tc.batch_size, tc.seq_len, batch_rng);

        double loss;
        weights<float> grads;
        try {
            std::tie(loss, grads) = loss_and_grads(w, cfg, batch);
            clip_gradients(grads, tc.grad_clip_norm);
            hp.lr = lr_at_step(tc, step);
            adamw_step(w, grads, opt, hp);
        } catch (const training_divergence_error& e) {
            throw training_divergence_error(std::string(e.what()) + " at step " +
                                            std::to_string(step));
        }
        tokens_seen += (long long)tc.batch_size * tc.seq_len;

        if (step % tc.eval_interval == 0 || step == tc.steps) {
            const auto [val_loss, val_ppl] =
                evaluate_perplexity(w, cfg, data.val_data(), data.val_size(), tc.seq_len,
                                    tc.eval_tokens);
            metrics_row row;
            row.step = step;
            row.tokens_seen = tokens_seen;
            row.train_loss = loss;
            row.val_loss = val_loss;
            row.val_ppl = val_ppl;
            if (tc.record_timing) {
                const double elapsed =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                row.wall_clock_s = elapsed;
                row.tokens_per_sec = elapsed > 0 ? (double)tokens_seen / elapsed : 0.0;
            }
            result.metrics.rows.push_back(row);
        }
    }

    result.model = std::move(w);
    result.tokens_seen = tokens_seen;
    if (!checkpoint_dir.empty()) save_checkpoint(checkpoint_dir, result.model, cfg, tc.steps);
    return result;
}

comparison_result compare_variants(const std::vector<std::pair<std::string, scaling_spec>>& variants,
                                   const model_skeleton& skel, const train_config& tc,
                                   const corpus& data, double budget_tolerance) {
    if (variants.size() < 2)
        throw std::invalid_argument("compare_variants: need at least two variants");

    // resolve everything and check budgets before spending any compute
    std::vector<model_config> configs;
    std::vector<long long> params;
    for (const auto& [name, spec] : variants) {
        configs.push_back(resolve_config(spec, skel));
        params.push_back(count_params(configs.back()).total);
    }
    const long long lo = *std::min_element(params.begin(), params.end());
    const long long hi = *std::max_element(params.begin(), params.end());
    if ((double)(hi - lo) / (double)lo > budget_tolerance) {
        std::ostringstream msg;
        msg << "compare_variants: budgets differ by "
            << 100.0 * (double)(hi - lo) / (double)lo << "% (>" << 100.0 * budget_tolerance
            << "%):";
        for (size_t i = 0; i < variants.size(); ++i)
            msg << " " << variants[i].first << "=" << params[(size_t)i];
        throw invalid_experiment_error(msg.str());
    }

    comparison_result out;
    for (size_t i = 0; i < variants.size(); ++i) {
        train_result r = train(configs[i], tc, data);
        variant_result v;
        v.name = variants[i].first;
        v.spec = variants[i].second;
        v.config = std::move(configs[i]);
        v.total_params = params[i];
        v.final_val_loss = r.metrics.rows.back().val_loss;
        v.final_val_ppl = r.metrics.rows.back().val_ppl;
        v.metrics = std::move(r.metrics);
        out.variants.push_back(std::move(v));
    }

    // per-eval-step perplexity curves; all variants share the eval cadence
    {
        std::ostringstream csv;
        csv << "step,tokens_seen";
        for (const variant_result& v : out.variants) csv << ',' << v.name << "_val_ppl";
        csv << '\n';
        char cell[64];
        const size_t n_rows = out.variants.front().metrics.rows.size();
        for (size_t r = 0; r < n_rows; ++r) {
            const metrics_row& first = out.variants.front().metrics.rows[r];
            csv << first.step << ',' << first.tokens_seen;
            for (const variant_result& v : out.variants) {
                std::snprintf(cell, sizeof cell, ",%.10g", v.metrics.rows[r].val_ppl);
                csv << cell;
            }
            csv << '\n';
        }
        out.curves_csv = csv.str();
    }

    // baseline = the uniform variant when present, else the first
    size_t base = 0;
    for (size_t i = 0; i < out.variants.size(); ++i)
        if (out.variants[i].spec.kind == scaling_kind::uniform) {
            base = i;
            break;
        }

    std::ostringstream csv;
    csv << "name,params_m,final_val_loss,final_val_ppl,beats_baseline\n";
    char line[256];
    int beat = 0;
    for (size_t i = 0; i < out.variants.size(); ++i) {
        const variant_result& v = out.variants[i];
        const bool beats = i != base && v.final_val_ppl <= out.variants[base].final_val_ppl;
        if (beats) ++beat;
        std::snprintf(line, sizeof line, "%s,%.2f,%.10g,%.10g,%s\n", v.name.c_str(),
                      (double)v.total_params / 1e6, v.final_val_loss, v.final_val_ppl,
                      i == base ? "baseline" : (beats ? "yes" : "no"));
        csv << line;
    }
    out.summary_csv = csv.str();

    std::ostringstream note;
    note << beat << " of " << out.variants.size() - 1 << " scheduled variants matched or beat "
         << out.variants[base].name << " on final validation perplexity";
    out.note = note.str();
    return out;
}

} // namespace lws
