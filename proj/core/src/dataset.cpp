// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0

#include "derain/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace derain {

namespace {

constexpr const char* kManifestHeader = "id,height,width,beta,f0,density,length,angle,jitter,intensity,seed";

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, sep)) out.push_back(cell);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

}  // namespace

std::string format_sample_id(int index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d", index);
    return buf;
}

std::filesystem::path sample_path(const std::filesystem::path& root, SampleKind kind, const std::string& id) {
    switch (kind) {
        case SampleKind::rainy: return root / "rainy" / (id + ".png");
        case SampleKind::clear: return root / "clear" / (id + ".png");
        case SampleKind::depth: return root / "depth" / (id + ".png16");
    }
    return {};
}

void write_manifest(const synth::DatasetManifest& manifest) {
    const auto path = manifest.root / "manifest.csv";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(IoErrorKind::write_failed, "cannot write " + path.string());
    out << kManifestHeader << '\n';
    for (const auto& e : manifest.entries) {
        out << e.id << ',' << e.height << ',' << e.width << ',' << fmt(e.fog.beta) << ','
            << fmt(e.fog.atmospheric_light) << ',' << fmt(e.streak.density) << ',' << fmt(e.streak.length) << ','
            << fmt(e.streak.angle_deg) << ',' << fmt(e.streak.angle_jitter_deg) << ',' << fmt(e.streak.intensity)
            << ',' << e.streak.seed << '\n';
    }
    if (!out) throw IoError(IoErrorKind::write_failed, "write failed: " + path.string());
}

synth::DatasetManifest read_manifest(const std::filesystem::path& root) {
    const auto path = root / "manifest.csv";
    std::ifstream in(path);
    if (!in) throw DatasetError("missing dataset manifest: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kManifestHeader)
        throw DatasetError("unexpected manifest header in " + path.string());

    synth::DatasetManifest manifest{root, {}};
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != 11)
            throw DatasetError(path.string() + ":" + std::to_string(lineno) + ": expected 11 columns");
        synth::ManifestEntry e;
        try {
            e.id = cells[0];
            e.height = std::stoi(cells[1]);
            e.width = std::stoi(cells[2]);
            e.fog.beta = std::stod(cells[3]);
            e.fog.atmospheric_light = std::stod(cells[4]);
            e.streak.density = std::stod(cells[5]);
            e.streak.length = std::stod(cells[6]);
            e.streak.angle_deg = std::stod(cells[7]);
            e.streak.angle_jitter_deg = std::stod(cells[8]);
            e.streak.intensity = std::stod(cells[9]);
            e.streak.seed = std::stoull(cells[10]);
        } catch (const std::exception&) {
            throw DatasetError(path.string() + ":" + std::to_string(lineno) + ": malformed value");
        }
        if (e.id.empty()) throw DatasetError(path.string() + ":" + std::to_string(lineno) + ": empty id");
        for (auto kind : {SampleKind::rainy, SampleKind::clear, SampleKind::depth}) {
            const auto p = sample_path(root, kind, e.id);
            if (!std::filesystem::is_regular_file(p)) throw DatasetError("missing dataset file: " + p.string());
        }
        manifest.entries.push_back(std::move(e));
    }
    if (manifest.entries.empty()) throw DatasetError("dataset manifest lists no samples: " + path.string());
    return manifest;
}

std::vector<Sample> load_samples(const synth::DatasetManifest& manifest) {
    std::vector<Sample> samples;
    samples.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) {
        Sample s;
        s.id = e.id;
        s.rainy = load_image(sample_path(manifest.root, SampleKind::rainy, e.id));
        s.clear = load_image(sample_path(manifest.root, SampleKind::clear, e.id));
        s.depth = load_depth(sample_path(manifest.root, SampleKind::depth, e.id));
        if (!s.rainy.same_shape(s.clear) || !s.depth.same_shape(s.rainy))
            throw DatasetError("sample " + e.id + ": rainy/clear/depth resolutions differ");
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace derain
