#pragma once

// Binary checkpoint: "CATS", u32 version, u32-length-prefixed UTF-8 block
// of key=value lines (config, vocabularies, metadata), u32 tensor count,
// then per tensor a u32-length-prefixed name, u32 rank, u32 extents and
// little-endian float32 payload.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cats/embeddings.hpp"
#include "cats/model.hpp"

namespace cats {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Metadata = std::vector<std::pair<std::string, std::string>>;

struct Checkpoint {
  CatsModel<float> model;
  ContextProvider<float> provider;
  Metadata metadata;
};

std::string serialize_checkpoint(const CatsModel<float>& model, const ContextProvider<float>& provider,
                                 const Metadata& metadata = {});
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const CatsModel<float>& model, const ContextProvider<float>& provider,
                     const Metadata& metadata = {});
Checkpoint load_checkpoint(const std::string& path);

// Hex FNV-1a 64 of a file's bytes; used to compare run artifacts.
std::string file_digest(const std::string& path);

}  // namespace cats
