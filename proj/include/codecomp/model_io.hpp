#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "codecomp/ranker.hpp"

CODECOMP_NN_BEGIN

/// Layout: magic "CCMODEL1", u32 format version, u64 length + UTF-8 JSON
/// (config and tokenizer artifacts), u32 tensor count, then per tensor
/// u32 name length, name, u32 rank, u64 dims, little-endian float32 data.
inline constexpr std::string_view kModelMagic = "CCMODEL1";
inline constexpr std::uint32_t kModelFormatVersion = 1;

class ModelFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string serialize_model(const CompletionModel& model);
CompletionModel deserialize_model(std::string_view bytes);

/// Writes to a temporary file and renames it into place.
void save_model(const CompletionModel& model, const std::filesystem::path& path);

struct LoadedModel {
    CompletionModel model;
    std::string id;             // content digest prefix
    std::size_t file_bytes = 0;
};

LoadedModel load_model(const std::filesystem::path& path);

/// Short identifier derived from the serialized bytes.
std::string model_id(std::string_view bytes);

CODECOMP_NN_END
