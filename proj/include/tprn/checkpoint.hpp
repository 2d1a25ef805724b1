#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tprn/model.hpp"
#include "tprn/train.hpp"

namespace tprn {

struct CheckpointMeta {
    std::uint64_t seed = 0;
    int epoch = 0;
    std::string createdAt;  // the only volatile field; excluded from golden comparisons
};

// Versioned container for everything a run needs to continue or replay:
// hyperparameters, both cells, the task head and (optionally) optimizer
// accumulators. Real arrays are stored as base64 little-endian IEEE-754
// doubles, so load(save(x)) is bit-exact.
struct Checkpoint {
    static constexpr int kFormatVersion = 1;
    int formatVersion = kFormatVersion;
    ModelParams params;
    std::optional<AdaDeltaState> optimizer;
    CheckpointMeta meta;
};

void saveCheckpoint(const std::string& path, const Checkpoint& ckpt);

// Throws IoError on version mismatch, truncation or checksum failure.
Checkpoint loadCheckpoint(const std::string& path);

std::string base64Encode(const unsigned char* data, std::size_t len);
std::vector<unsigned char> base64Decode(const std::string& s);

}  // namespace tprn
