#include "bosa/nn/checkpoint.hpp"

#include <fstream>
#include <sstream>

namespace bosa::nn {

nlohmann::json to_json(const MlpSpec &spec)
{
  return {{"input_dim", spec.input_dim},   {"hidden_dim", spec.hidden_dim},
          {"depth", spec.depth},           {"output_dim", spec.output_dim},
          {"activation", to_string(spec.activation)}, {"dropout", spec.dropout}};
}

MlpSpec mlp_spec_from_json(const nlohmann::json &j)
{
  MlpSpec spec;
  spec.input_dim = j.at("input_dim").get<Index>();
  spec.hidden_dim = j.at("hidden_dim").get<Index>();
  spec.depth = j.at("depth").get<Index>();
  spec.output_dim = j.at("output_dim").get<Index>();
  spec.activation = parse_activation(j.at("activation").get<std::string>());
  spec.dropout = j.at("dropout").get<double>();
  spec.validate();
  return spec;
}

std::string encode_checkpoint(const Checkpoint &ckpt)
{
  require_dim("checkpoint parameters", ckpt.spec.param_count(), ckpt.params.size());
  nlohmann::json header = {{"format", "bosa-params"},
                           {"version", 1},
                           {"spec", to_json(ckpt.spec)},
                           {"step", ckpt.step},
                           {"seed", ckpt.seed},
                           {"count", ckpt.params.size()},
                           {"extra", ckpt.extra.is_null() ? nlohmann::json::object() : ckpt.extra}};
  std::string out = header.dump();
  out.push_back('\n');
  out.reserve(out.size() + static_cast<std::size_t>(ckpt.params.size()) * 8);
  for (Index i = 0; i < ckpt.params.size(); ++i) { append_f64(out, ckpt.params[i]); }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes)
{
  const auto newline = bytes.find('\n');
  if (newline == std::string_view::npos) { throw std::runtime_error("checkpoint: missing header line"); }
  const auto header = nlohmann::json::parse(bytes.substr(0, newline));
  if (header.value("format", "") != "bosa-params") { throw std::runtime_error("checkpoint: unexpected format tag"); }

  Checkpoint ckpt;
  ckpt.spec = mlp_spec_from_json(header.at("spec"));
  ckpt.step = header.at("step").get<std::int64_t>();
  ckpt.seed = header.at("seed").get<std::uint64_t>();
  ckpt.extra = header.value("extra", nlohmann::json::object());
  const auto count = header.at("count").get<Index>();
  require_dim("checkpoint parameter count", ckpt.spec.param_count(), count);

  const std::string_view payload = bytes.substr(newline + 1);
  if (payload.size() != static_cast<std::size_t>(count) * 8) {
    throw std::runtime_error("checkpoint: payload size does not match header count");
  }
  ckpt.params.resize(count);
  for (Index i = 0; i < count; ++i) { ckpt.params[i] = read_f64(payload, static_cast<std::size_t>(i) * 8); }
  return ckpt;
}

std::string read_file(const std::filesystem::path &path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) { throw std::runtime_error("cannot open " + path.string()); }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path &path, std::string_view bytes)
{
  if (path.has_parent_path()) { std::filesystem::create_directories(path.parent_path()); }
  // Write-then-rename so an interrupted run never leaves a truncated artifact behind.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) { throw std::runtime_error("cannot write " + tmp.string()); }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) { throw std::runtime_error("write failed for " + tmp.string()); }
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::filesystem::path &path, const Checkpoint &ckpt)
{
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path &path) { return decode_checkpoint(read_file(path)); }

Checkpoint make_checkpoint(const Mlp<double> &net, std::uint64_t seed, nlohmann::json extra)
{
  return Checkpoint{net.spec, net.store.params, net.store.step, seed, std::move(extra)};
}

Mlp<double> restore_mlp(const Checkpoint &ckpt)
{
  Mlp<double> net{ckpt.spec, ParamStore<double>(ckpt.spec.param_count())};
  net.store.params = ckpt.params;
  net.store.step = ckpt.step;
  return net;
}

} // namespace bosa::nn
