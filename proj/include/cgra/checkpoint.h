#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "cgra/model.h"
#include "cgra/tokenizer.h"

namespace cgra {

// Binary layout, all integers little-endian:
//   8 bytes   magic "CGRACKPT"
//   u32       format version (1)
//   u64       header length H
//   H bytes   UTF-8 JSON header: {config, seed, dictionary_version, vocab,
//             tensors: [{name, group, rows, cols, offset}], extra}
//   payload   float32 little-endian, row-major, tensors in header order;
//             offset is in floats from the start of the payload
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    Model model;
    Vocab vocab;
    std::string dictionary_version;
    std::uint64_t seed = 0;
    nlohmann::json extra = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& path, const Model& model, const Vocab& vocab,
                     const std::string& dictionary_version, std::uint64_t seed,
                     const nlohmann::json& extra = nlohmann::json::object());
std::string serialize_checkpoint(const Model& model, const Vocab& vocab,
                                 const std::string& dictionary_version, std::uint64_t seed,
                                 const nlohmann::json& extra = nlohmann::json::object());

Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint deserialize_checkpoint(std::string_view bytes);

}  // namespace cgra
