#pragma once

#include "bosa/nn/mlp.hpp"

#include <json.hpp>

#include <filesystem>

namespace bosa::nn {

nlohmann::json to_json(const MlpSpec &spec);
MlpSpec mlp_spec_from_json(const nlohmann::json &j);

struct Checkpoint
{
  MlpSpec spec;
  Vector params;
  std::int64_t step = 0;
  std::uint64_t seed = 0;
  nlohmann::json extra; // caller-defined metadata carried in the header
};

/// One JSON header line followed by the parameters as little-endian float64.
std::string encode_checkpoint(const Checkpoint &ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path &path, const Checkpoint &ckpt);
Checkpoint load_checkpoint(const std::filesystem::path &path);

Checkpoint make_checkpoint(const Mlp<double> &net, std::uint64_t seed, nlohmann::json extra = nlohmann::json::object());
Mlp<double> restore_mlp(const Checkpoint &ckpt);

std::string read_file(const std::filesystem::path &path);
void write_file(const std::filesystem::path &path, std::string_view bytes);

} // namespace bosa::nn
