// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0

#include "derain/checkpoint.hpp"

#include <json.hpp>

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <system_error>

namespace derain {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'D', 'R', 'N', 'C', 'K', 'P', 'T', '1'};
constexpr int kFormatVersion = 1;

using nlohmann::json;

json shape_json(const nn::Shape& s) { return json::array({s.n, s.c, s.h, s.w}); }

nn::Shape shape_of(const json& j) {
    if (!j.is_array() || j.size() != 4) throw CheckpointError("checkpoint: malformed tensor shape");
    return nn::Shape{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    json header;
    header["format"] = kFormatVersion;
    header["config"] = to_text(ckpt.config);
    header["step"] = ckpt.step;
    header["adam_t"] = ckpt.adam_t;
    header["rng_state"] = ckpt.rng_state;
    json index = json::array();
    for (const auto& [name, t] : ckpt.tensors) index.push_back({{"name", name}, {"shape", shape_json(t.shape())}});
    header["tensors"] = std::move(index);
    const std::string text = header.dump();

    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("cannot write checkpoint " + tmp.string());
        const std::uint64_t len = text.size();
        out.write(kMagic, sizeof kMagic);
        out.write(reinterpret_cast<const char*>(&len), sizeof len);
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& [name, t] : ckpt.tensors)
            out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
        out.flush();
        if (!out) throw CheckpointError("failed writing checkpoint " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw CheckpointError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    char magic[8];
    std::uint64_t len = 0;
    in.read(magic, sizeof magic);
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw CheckpointError(path.string() + " is not a checkpoint");
    if (len > (1u << 28)) throw CheckpointError("checkpoint header too large");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw CheckpointError("truncated checkpoint header");

    Checkpoint c;
    try {
        const json header = json::parse(text);
        if (header.at("format").get<int>() != kFormatVersion)
            throw CheckpointError("unsupported checkpoint format version");
        c.config = parse_config(header.at("config").get<std::string>());
        c.step = header.at("step").get<std::uint64_t>();
        c.adam_t = header.at("adam_t").get<std::uint64_t>();
        c.rng_state = header.at("rng_state").get<std::string>();
        for (const auto& entry : header.at("tensors")) {
            nn::Tensor t(shape_of(entry.at("shape")));
            in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
            if (!in) throw CheckpointError("truncated checkpoint tensor data");
            c.tensors.emplace(entry.at("name").get<std::string>(), std::move(t));
        }
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("checkpoint config: ") + e.what());
    }
    in.peek();
    if (!in.eof()) throw CheckpointError("trailing bytes after checkpoint tensors");
    return c;
}

std::string file_hash(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    char out[17];
    std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
    return out;
}

void store_parameters(Checkpoint& ckpt, const nn::ModelBundle& bundle) {
    for (const auto& p : bundle.params) ckpt.tensors["param/" + p->name] = p->value;
}

nn::ModelBundle restore_bundle(const Checkpoint& ckpt) {
    nn::ModelBundle b = nn::build_models(ckpt.config.model, ckpt.config.train.seed);
    std::size_t found = 0;
    for (auto& p : b.params) {
        const auto it = ckpt.tensors.find("param/" + p->name);
        if (it == ckpt.tensors.end()) throw nn::ConfigMismatch("checkpoint lacks parameter " + p->name);
        if (!(it->second.shape() == p->value.shape()))
            throw nn::ConfigMismatch("parameter " + p->name + " has shape " + it->second.shape().str() +
                                     " in the checkpoint but " + p->value.shape().str() + " in the model");
        p->value = it->second;
        ++found;
    }
    std::size_t stored = 0;
    for (const auto& [name, t] : ckpt.tensors)
        if (name.starts_with("param/")) ++stored;
    if (stored != found) throw nn::ConfigMismatch("checkpoint holds parameters the model does not define");
    return b;
}

}  // namespace derain
