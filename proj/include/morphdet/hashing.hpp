#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace morphdet {

// Incremental SHA-256. Used for weight fingerprints, filter-bank pinning,
// artifact indexing and stage cache keys.
class Sha256 {
public:
    Sha256();

    void update(const void* data, size_t len);
    void update(const std::string& s) { update(s.data(), s.size()); }

    // Finalizes and returns the lowercase hex digest. The object must not
    // be updated afterwards.
    std::string hex_digest();

private:
    void process_block(const uint8_t* block);

    uint32_t state_[8];
    uint64_t bit_count_ = 0;
    uint8_t buffer_[64];
    size_t buffer_len_ = 0;
    bool finalized_ = false;
};

std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::string& s);
std::string sha256_file_hex(const std::string& path);

// Derives a 64-bit seed for a named substream from a root seed. Every
// stochastic component draws its seed through this so that one root seed
// pins the whole run.
uint64_t derive_seed(uint64_t root_seed, const std::string& stream_name);

}  // namespace morphdet
