#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "forge/dke/vocab.hpp"
#include "forge/mlm/model.hpp"

namespace forge::mlm {

struct Checkpoint {
  dke::Vocab vocab;
  TrainableMlm model;
  nlohmann::json meta = nlohmann::json::object();
};

/// Binary layout: magic, length-prefixed JSON header, length-prefixed vocab,
/// then E, W, b, S as little-endian float64. Written atomically.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws MissingInputError if absent, std::runtime_error if malformed or
/// the stored vocab digest does not match the stored vocab.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// SHA-256 hex of the serialized checkpoint.
std::string checkpoint_digest(const Checkpoint& ckpt);

}  // namespace forge::mlm
