#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "diffnet/baselines.hpp"
#include "diffnet/diffnet_model.hpp"
#include "diffnet/model.hpp"

namespace diffnet {

// On-disk training state. Binary little-endian layout:
//   8-byte magic "DIFNETCK", u32 format version, u32 model-kind tag,
//   u32 config text length + bytes, u64 epoch cursor, u64 rng state,
//   u32 tensor count, then per tensor: u32 name length + bytes, u32 rank,
//   u64 dims[rank], f64 values row-major.
// Tensors hold the parameters, model extra state (batch-norm statistics) and
// the optimizer moments under "adam.m.<name>" / "adam.v.<name>" / "adam.step".
struct Checkpoint {
    std::uint32_t version = 1;
    std::string model_kind;
    std::string config_text;     // canonical run configuration
    std::uint64_t epoch_cursor = 0;
    std::uint64_t rng_state = 0;  // sampling-stream seed for the next epoch
    ParamSet tensors;
};

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::unique_ptr<RankingModel> make_model(const std::string& kind, Dataset train,
                                         const DiffNetConfig& net, std::uint64_t init_seed);

// capture params + extra state (+ optimizer moments when adam is given)
Checkpoint snapshot_model(const RankingModel& model, const std::string& config_text,
                          std::uint64_t epoch_cursor, std::uint64_t rng_state,
                          const AdamState* adam = nullptr);

// copy checkpoint tensors onto a freshly built model of the same kind;
// missing tensors or shape disagreements throw DimError
void restore_model(RankingModel& model, const Checkpoint& ck);

// rebuild optimizer state when the checkpoint carries moments
std::optional<AdamState> restore_adam(const Checkpoint& ck, const ParamSet& shapes,
                                      AdamConfig cfg);

// human-readable header and tensor table; with_values appends every entry
std::string describe_checkpoint(const Checkpoint& ck, bool with_values = false);

}  // namespace diffnet
