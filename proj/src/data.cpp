#include "lws/data.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace lws {

corpus build_corpus(std::vector<uint8_t> raw, double val_fraction, uint64_t seed,
                    std::string source) {
    if (!(val_fraction > 0.0) || !(val_fraction < 0.5))
        throw std::invalid_argument("build_corpus: val_fraction must be in (0, 0.5)");
    if (raw.size() < 1024)
        throw insufficient_data_error("build_corpus: stream of " + std::to_string(raw.size()) +
                                      " bytes is too small");

    const long long total = (long long)raw.size();
    const long long val = std::llround((double)total * val_fraction);

    corpus c;
    c.tokens = std::move(raw);
    c.train_size = total - val;
    c.meta.source = std::move(source);
    c.meta.val_fraction = val_fraction;
    c.meta.split_seed = seed;
    c.meta.train_tokens = c.train_size;
    c.meta.val_tokens = val;
    return c;
}

static std::vector<uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open corpus file: " + path);
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(in),
                                std::istreambuf_iterator<char>());
}

corpus load_corpus_files(const std::vector<std::string>& paths, double val_fraction,
                         uint64_t seed) {
    if (paths.empty()) throw std::invalid_argument("load_corpus_files: no paths given");
    std::vector<uint8_t> raw;
    std::string source;
    for (const std::string& p : paths) {
        const std::vector<uint8_t> part = read_file_bytes(p);
        raw.insert(raw.end(), part.begin(), part.end());
        if (!source.empty()) source += ";";
        source += p;
    }
    return build_corpus(std::move(raw), val_fraction, seed, std::move(source));
}

token_batch next_batch(const corpus& c, int batch_size, int seq_len, std::mt19937_64& rng) {
    if (batch_size < 1 || seq_len < 1)
        throw std::invalid_argument("next_batch: batch_size and seq_len must be >= 1");
    // a window needs seq_len inputs plus one lookahead byte for the last target
    const long long max_start = c.train_size - (long long)seq_len - 1;
    if (max_start < 0)
        throw insufficient_data_error("next_batch: train split of " +
                                      std::to_string(c.train_size) +
                                      " tokens cannot fit seq_len " + std::to_string(seq_len));

    token_batch b;
    b.batch_size = batch_size;
    b.seq_len = seq_len;
    b.inputs.resize((size_t)batch_size * seq_len);
    b.targets.resize((size_t)batch_size * seq_len);
    for (int s = 0; s < batch_size; ++s) {
        const long long start = (long long)(rng() % (uint64_t)(max_start + 1));
        for (int i = 0; i < seq_len; ++i) {
            b.inputs[(size_t)s * seq_len + i] = c.tokens[(size_t)(start + i)];
            b.targets[(size_t)s * seq_len + i] = c.tokens[(size_t)(start + i + 1)];
        }
    }
    return b;
}

token_batch window_batch(const uint8_t* region, long long region_size, long long first_window,
                         int n_windows, int seq_len) {
    if (n_windows < 1 || seq_len < 1)
        throw std::invalid_argument("window_batch: n_windows and seq_len must be >= 1");
    const long long need = (first_window + n_windows) * (long long)seq_len + 1;
    if (first_window < 0 || need > region_size)
        throw insufficient_data_error("window_batch: region of " + std::to_string(region_size) +
                                      " tokens cannot fit the requested windows");

    token_batch b;
    b.batch_size = n_windows;
    b.seq_len = seq_len;
    b.inputs.resize((size_t)n_windows * seq_len);
    b.targets.resize((size_t)n_windows * seq_len);
    for (int w = 0; w < n_windows; ++w) {
        const long long start = (first_window + w) * (long long)seq_len;
        for (int i = 0; i < seq_len; ++i) {
            b.inputs[(size_t)w * seq_len + i] = region[start + i];
            b.targets[(size_t)w * seq_len + i] = region[start + i + 1];
        }
    }
    return b;
}

void save_corpus_cache(const corpus& c, const std::string& base_path) {
    std::ofstream tokens(base_path + ".tokens", std::ios::binary);
    if (!tokens) throw std::runtime_error("cannot write " + base_path + ".tokens");
    tokens.write((const char*)c.tokens.data(), (std::streamsize)c.tokens.size());

    nlohmann::json j{{"source", c.meta.source},
                     {"val_fraction", c.meta.val_fraction},
                     {"split_seed", c.meta.split_seed},
                     {"train_tokens", c.meta.train_tokens},
                     {"val_tokens", c.meta.val_tokens}};
    std::ofstream meta(base_path + ".json");
    if (!meta) throw std::runtime_error("cannot write " + base_path + ".json");
    meta << j.dump(2) << "\n";
}

corpus load_corpus_cache(const std::string& base_path) {
    std::vector<uint8_t> raw = read_file_bytes(base_path + ".tokens");

    std::ifstream meta(base_path + ".json");
    if (!meta) throw std::runtime_error("cannot open " + base_path + ".json");
    nlohmann::json j;
    meta >> j;

    corpus c;
    c.tokens = std::move(raw);
    c.meta.source = j.at("source").get<std::string>();
    c.meta.val_fraction = j.at("val_fraction").get<double>();
    c.meta.split_seed = j.at("split_seed").get<uint64_t>();
    c.meta.train_tokens = j.at("train_tokens").get<long long>();
    c.meta.val_tokens = j.at("val_tokens").get<long long>();
    c.train_size = c.meta.train_tokens;
    if (c.meta.train_tokens + c.meta.val_tokens != (long long)c.tokens.size())
        throw std::runtime_error("corpus cache is corrupt: split does not cover the token file");
    return c;
}

// Fixed letter pool, roughly English-like frequencies, used to build the
// lexicon below.
static char pick_letter(std::mt19937_64& rng) {
    static const char pool[] = "eeeeeeeeeeeettttttttaaaaaaaooooooiiiiiinnnnnnsssssshhhhhrrrrr"
                               "ddddllllcccuuummmwwwfffggyyppbbvkjxqz";
    return pool[rng() % (sizeof(pool) - 1)];
}

std::vector<uint8_t> synthetic_text(long long n_bytes, uint64_t seed) {
    if (n_bytes < 1) throw std::invalid_argument("synthetic_text: n_bytes must be >= 1");

    // lexicon is built from a fixed seed so the language itself is stable;
    // the caller's seed only drives the word sequence
    constexpr int lexicon_size = 420;
    static const std::vector<std::string> lexicon = [] {
        std::mt19937_64 rng(0x1e71c01);
        std::vector<std::string> words;
        words.reserve(lexicon_size);
        while ((int)words.size() < lexicon_size) {
            const int len = 2 + (int)(rng() % 8);
            std::string w;
            for (int i = 0; i < len; ++i) w += pick_letter(rng);
            words.push_back(std::move(w));
        }
        return words;
    }();

    // Zipf-like rank weights; cumulative table for inverse-cdf sampling
    static const std::vector<double> cumulative = [] {
        std::vector<double> cum(lexicon_size);
        double total = 0;
        for (int r = 0; r < lexicon_size; ++r) {
            total += 1.0 / std::pow((double)r + 2.7, 1.05);
            cum[(size_t)r] = total;
        }
        for (double& c : cum) c /= total;
        return cum;
    }();

    std::mt19937_64 rng(seed);
    auto next_word = [&]() -> const std::string& {
        const double u = (double)(rng() >> 11) * (1.0 / 9007199254740992.0);
        const size_t r = (size_t)(std::lower_bound(cumulative.begin(), cumulative.end(), u) -
                                  cumulative.begin());
        return lexicon[std::min(r, (size_t)(lexicon_size - 1))];
    };

    std::vector<uint8_t> out;
    out.reserve((size_t)n_bytes + 64);
    int sentences_in_paragraph = 0;
    while ((long long)out.size() < n_bytes) {
        const int n_words = 4 + (int)(rng() % 8);
        for (int i = 0; i < n_words; ++i) {
            const std::string& w = next_word();
            if (i == 0) {
                out.push_back((uint8_t)(w[0] - 'a' + 'A'));
                out.insert(out.end(), w.begin() + 1, w.end());
            } else {
                out.push_back(' ');
                out.insert(out.end(), w.begin(), w.end());
            }
        }
        out.push_back('.');
        if (++sentences_in_paragraph >= 2 + (int)(rng() % 12)) {
            out.push_back('\n');
            sentences_in_paragraph = 0;
        } else {
            out.push_back(' ');
        }
    }
    out.resize((size_t)n_bytes);
    return out;
}

} // namespace lws
