#pragma once
#include <Eigen/Core>
#include <cstdint>
#include <string>

#include "scorl/mlp.hpp"

namespace scorl {

// On-disk network checkpoint. Layout (little endian):
//   magic "SCORLCK1" | u32 version | u32 role | spec fields | u64 denoiser_checksum
//   | u64 n_params | f32 params[n] | u64 fnv1a of all preceding bytes
// Parameters are stored as 32-bit floats; in-memory training state stays
// double, so save/load round-trips through float precision by design.
// Residual value checkpoints record the checksum of the denoiser parameters
// they were fitted against, so evaluation can refuse a mismatched pairing.
enum class CkptRole : uint32_t { Score = 0, PolicyMean = 1, ValueResidual = 2 };

struct Checkpoint {
  CkptRole role = CkptRole::Score;
  MLPSpec spec;
  uint64_t denoiser_checksum = 0;
  Eigen::VectorXd params;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// checksum of the serialized payload (what the trailing u64 holds)
uint64_t checkpoint_checksum(const Checkpoint& ckpt);

// checksum of a parameter vector alone, through the same f32 serialization;
// this is the id stored in a value checkpoint's denoiser_checksum field
uint64_t params_checksum(const Eigen::VectorXd& params);

uint64_t fnv1a64(const void* data, size_t n, uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace scorl
