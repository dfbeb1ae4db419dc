// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint archive layout (little-endian):
//
//   8 bytes   magic "DRNCKPT1"
//   8 bytes   header length L (uint64)
//   L bytes   JSON header: resolved config text, step, rng state, tensor index
//   ...       float32 blobs in index order
//
// Tensor keys are "param/<name>", "adam_m/<name>" and "adam_v/<name>".

#pragma once

#include "derain/config.hpp"
#include "derain/netgraph.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

namespace derain {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Checkpoint {
    RunConfig config;
    std::uint64_t step = 0;  // completed optimizer steps
    std::uint64_t adam_t = 0;
    std::string rng_state;
    std::map<std::string, nn::Tensor> tensors;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// FNV-1a 64 of the file bytes, as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

/// Copies every parameter of `bundle` into "param/<name>" entries.
void store_parameters(Checkpoint& ckpt, const nn::ModelBundle& bundle);
/// Builds the bundle described by the checkpoint config and loads its
/// parameters. Throws nn::ConfigMismatch on missing names or shape disagreement.
nn::ModelBundle restore_bundle(const Checkpoint& ckpt);

}  // namespace derain
