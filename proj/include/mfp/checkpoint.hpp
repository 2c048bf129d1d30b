// SPDX-License-Identifier: Apache-2.0
//
// File layout: "MFPC", u32 version, u64 manifest length, JSON manifest, then
// little-endian float32 tensor blobs in manifest order.
#pragma once

#include <cstdint>
#include <string>

#include "mfp/training.hpp"

namespace mfp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public Error {
 public:
  using Error::Error;
};
class NotACheckpointError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class UnsupportedVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class TruncatedCheckpointError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

struct Checkpoint {
  TrainConfig train_config;
  TrainState state;  // model (with its config and mean future), optimizer, update counter
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mfp
