#include "lws/manifest.hpp"

#include <cstring>
#include <ctime>
#include <fstream>

namespace lws {

// Straight FIPS 180-4 SHA-256; only needed for fingerprinting corpora, so a
// compact scalar implementation is plenty.
namespace {

constexpr uint32_t k_sha[64] = {
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4,
    0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe,
    0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f,
    0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7,
    0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc,
    0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
    0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116,
    0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7,
    0xc67178f2};

inline uint32_t rotr(uint32_t x, int n) { return (x >> n) | (x << (32 - n)); }

struct sha256_state {
    uint32_t h[8] = {0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a,
                     0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19};

    void block(const uint8_t* p) {
        uint32_t w[64];
        for (int i = 0; i < 16; ++i)
            w[i] = (uint32_t)p[4 * i] << 24 | (uint32_t)p[4 * i + 1] << 16 |
                   (uint32_t)p[4 * i + 2] << 8 | p[4 * i + 3];
        for (int i = 16; i < 64; ++i) {
            const uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
            const uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
            w[i] = w[i - 16] + s0 + w[i - 7] + s1;
        }
        uint32_t a = h[0], b = h[1], c = h[2], d = h[3], e = h[4], f = h[5], g = h[6], hh = h[7];
        for (int i = 0; i < 64; ++i) {
            const uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
            const uint32_t ch = (e & f) ^ (~e & g);
            const uint32_t t1 = hh + s1 + ch + k_sha[i] + w[i];
            const uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
            const uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
            const uint32_t t2 = s0 + maj;
            hh = g; g = f; f = e; e = d + t1;
            d = c; c = b; b = a; a = t1 + t2;
        }
        h[0] += a; h[1] += b; h[2] += c; h[3] += d;
        h[4] += e; h[5] += f; h[6] += g; h[7] += hh;
    }
};

} // namespace

std::string sha256_hex(const uint8_t* data, size_t len) {
    sha256_state st;
    size_t i = 0;
    for (; i + 64 <= len; i += 64) st.block(data + i);

    uint8_t tail[128] = {};
    const size_t rem = len - i;
    std::memcpy(tail, data + i, rem);
    tail[rem] = 0x80;
    const size_t pad = rem < 56 ? 64 : 128;
    const uint64_t bits = (uint64_t)len * 8;
    for (int b = 0; b < 8; ++b) tail[pad - 1 - b] = (uint8_t)(bits >> (8 * b));
    st.block(tail);
    if (pad == 128) st.block(tail + 64);

    static const char hex[] = "0123456789abcdef";
    std::string out(64, '0');
    for (int word = 0; word < 8; ++word)
        for (int b = 0; b < 4; ++b) {
            const uint8_t byte = (uint8_t)(st.h[word] >> (24 - 8 * b));
            out[(size_t)(8 * word + 2 * b)] = hex[byte >> 4];
            out[(size_t)(8 * word + 2 * b + 1)] = hex[byte & 0xf];
        }
    return out;
}

std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_run_manifest(const std::string& path, const run_manifest& m) {
    nlohmann::json j{{"command", m.command},   {"resolved", m.resolved},
                     {"seed", m.seed},         {"corpus_sha256", m.corpus_sha256},
                     {"outputs", m.outputs},   {"created_utc", m.created_utc},
                     {"tool", m.tool}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

run_manifest read_run_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    nlohmann::json j;
    in >> j;
    run_manifest m;
    m.command = j.at("command").get<std::string>();
    m.resolved = j.at("resolved");
    m.seed = j.at("seed").get<uint64_t>();
    m.corpus_sha256 = j.value("corpus_sha256", "");
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
    m.created_utc = j.value("created_utc", "");
    m.tool = j.value("tool", "");
    return m;
}

} // namespace lws
