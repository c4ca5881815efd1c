#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace lws {

// SHA-256 of a byte buffer as lowercase hex.
std::string sha256_hex(const uint8_t* data, size_t len);

// Written next to every command's outputs so a run can be reproduced:
// the subcommand, the fully resolved configuration, the seed, a digest of the
// corpus that was consumed, and the files produced.
struct run_manifest {
    std::string command;
    nlohmann::json resolved;   // whatever the command resolved to (configs, presets)
    uint64_t seed = 0;
    std::string corpus_sha256; // empty when the command reads no corpus
    std::vector<std::string> outputs;
    std::string created_utc;   // ISO 8601
    std::string tool;
};

void write_run_manifest(const std::string& path, const run_manifest& m);
run_manifest read_run_manifest(const std::string& path);

std::string utc_timestamp();

} // namespace lws
