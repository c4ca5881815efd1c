#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "lws/errors.hpp"
#include "lws/model.hpp"

namespace lws {

struct corpus_metadata {
    std::string source;       // where the bytes came from, informational
    double val_fraction = 0;  // requested split
    uint64_t split_seed = 0;  // recorded for provenance; the split itself is positional
    long long train_tokens = 0;
    long long val_tokens = 0;
};

// Byte-level token stream (vocab 256). Validation is the contiguous tail so
// the split is stable across runs regardless of seed.
struct corpus {
    std::vector<uint8_t> tokens;
    long long train_size = 0;
    corpus_metadata meta;

    const uint8_t* train_data() const { return tokens.data(); }
    long long val_size() const { return (long long)tokens.size() - train_size; }
    const uint8_t* val_data() const { return tokens.data() + train_size; }
};

// Splits a raw byte stream into train and held-out tail. val_fraction must be
// in (0, 0.5); streams under 1024 bytes are rejected as insufficient data.
corpus build_corpus(std::vector<uint8_t> raw, double val_fraction, uint64_t seed,
                    std::string source = "memory");

// Reads and concatenates the files in argument order, then splits.
corpus load_corpus_files(const std::vector<std::string>& paths, double val_fraction,
                         uint64_t seed);

// Uniformly random training windows. Targets are the window shifted by one.
// Throws insufficient_data_error when the train split cannot fit a window.
token_batch next_batch(const corpus& c, int batch_size, int seq_len, std::mt19937_64& rng);

// Deterministic non-overlapping windows from an arbitrary region (used for
// evaluation). Window w covers tokens [w*seq_len, w*seq_len + seq_len].
token_batch window_batch(const uint8_t* region, long long region_size, long long first_window,
                         int n_windows, int seq_len);

// Cache on disk: <base>.tokens (raw bytes) plus <base>.json (metadata).
void save_corpus_cache(const corpus& c, const std::string& base_path);
corpus load_corpus_cache(const std::string& base_path);

// Deterministic synthetic text: Zipf-distributed words from a fixed lexicon,
// arranged into sentences. Gives a byte stream with learnable structure for
// desk-scale experiments.
std::vector<uint8_t> synthetic_text(long long n_bytes, uint64_t seed);

} // namespace lws
