#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "hbsynth/denoiser.hpp"
#include "hbsynth/schedule.hpp"

namespace hbsynth {

/// Everything needed to resume sampling exactly as trained.
struct Checkpoint {
    DenoiserConfig config;
    SpectralConfig spectral;
    NoiseSchedule schedule;
    std::uint64_t seed = 0;
    DenoiserParams params;
    std::map<std::string, std::string> extra;  // free-form provenance
};

/// Single-file format (documented in docs/checkpoint_format.md):
/// 8-byte magic, little-endian u64 manifest length, JSON manifest
/// (configs, schedule, vocabularies, tensor names/shapes), then the raw
/// little-endian float64 tensor data in manifest order.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

/// Throws "cannot open ...", "bad checkpoint", or
/// "unsupported checkpoint version".
Checkpoint load_checkpoint(const std::string& path);

}  // namespace hbsynth
