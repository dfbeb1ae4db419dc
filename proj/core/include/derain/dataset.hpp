// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0
//
// On-disk paired dataset:
//   <root>/rainy/<id>.png   <root>/clear/<id>.png   <root>/depth/<id>.png16
//   <root>/manifest.csv     id,height,width,beta,f0,density,length,angle,jitter,intensity,seed

#pragma once

#include "derain/image.hpp"
#include "derain/rainsynth.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace derain {

enum class SampleKind { rainy, clear, depth };

std::string format_sample_id(int index);
std::filesystem::path sample_path(const std::filesystem::path& root, SampleKind kind, const std::string& id);

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void write_manifest(const synth::DatasetManifest& manifest);
/// Throws DatasetError when the manifest is missing or malformed, or when any
/// listed rainy/clear/depth file is absent.
synth::DatasetManifest read_manifest(const std::filesystem::path& root);

struct Sample {
    std::string id;
    Image rainy;
    Image clear;
    DepthMap depth;
};

/// Loads every sample listed in the manifest, in manifest order.
std::vector<Sample> load_samples(const synth::DatasetManifest& manifest);

}  // namespace derain
