#include "bosa/data/dataset.hpp"
#include "bosa/nn/checkpoint.hpp"

#include <algorithm>

namespace bosa::data {

namespace {

Index record_width(Index state_dim, Index action_dim) { return 2 * state_dim + action_dim + 4; }

} // namespace

std::string serialize(const OfflineDataset &data)
{
  data.validate();
  if (!data.empty() && std::any_of(data.tags.begin(), data.tags.end(), [&](DomainTag t) { return t != data.tags.front(); })) {
    throw std::invalid_argument("serialize: a dataset file must carry a single domain tag");
  }
  const DomainTag tag = data.empty() ? DomainTag::target : data.tags.front();
  const nlohmann::json header = {{"format", "bosa-dataset"},
                                 {"version", 1},
                                 {"state_dim", data.state_dim},
                                 {"action_dim", data.action_dim},
                                 {"count", data.size()},
                                 {"tag", to_string(tag)},
                                 {"env", envs::to_json(data.env)},
                                 {"behavior", envs::to_json(data.behavior)},
                                 {"seed", data.seed},
                                 {"stats", data.state_stats.to_json()},
                                 {"provenance", data.provenance}};
  std::string out = header.dump();
  out.push_back('\n');
  out.reserve(out.size() + static_cast<std::size_t>(data.size() * record_width(data.state_dim, data.action_dim) * 8));
  for (Index i = 0; i < data.size(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    for (Index d = 0; d < data.state_dim; ++d) { append_f64(out, data.states(d, i)); }
    for (Index d = 0; d < data.action_dim; ++d) { append_f64(out, data.actions(d, i)); }
    append_f64(out, data.rewards[i]);
    for (Index d = 0; d < data.state_dim; ++d) { append_f64(out, data.next_states(d, i)); }
    append_f64(out, data.done[k]);
    append_f64(out, data.timeout[k]);
    append_f64(out, static_cast<double>(static_cast<std::uint8_t>(data.tags[k])));
  }
  return out;
}

OfflineDataset deserialize(std::string_view bytes)
{
  const auto newline = bytes.find('\n');
  if (newline == std::string_view::npos) { throw std::runtime_error("dataset: missing header line"); }
  const auto header = nlohmann::json::parse(bytes.substr(0, newline));
  if (header.value("format", "") != "bosa-dataset") { throw std::runtime_error("dataset: unexpected format tag"); }

  const auto sd = header.at("state_dim").get<Index>();
  const auto ad = header.at("action_dim").get<Index>();
  const auto n = header.at("count").get<Index>();
  const Index width = record_width(sd, ad);
  const std::string_view payload = bytes.substr(newline + 1);
  if (payload.size() != static_cast<std::size_t>(n * width * 8)) {
    throw std::runtime_error("dataset: payload size does not match header count");
  }

  OfflineDataset data = make_dataset(sd, ad, n);
  data.env = envs::env_from_json(header.at("env"));
  data.behavior = envs::behavior_from_json(header.at("behavior"));
  data.seed = header.at("seed").get<std::uint64_t>();
  data.state_stats = Normalizer::from_json(header.at("stats"));
  data.provenance = header.at("provenance");

  std::size_t offset = 0;
  auto next = [&] {
    const double v = read_f64(payload, offset);
    offset += 8;
    return v;
  };
  for (Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    for (Index d = 0; d < sd; ++d) { data.states(d, i) = next(); }
    for (Index d = 0; d < ad; ++d) { data.actions(d, i) = next(); }
    data.rewards[i] = next();
    for (Index d = 0; d < sd; ++d) { data.next_states(d, i) = next(); }
    data.done[k] = next() != 0.0 ? 1 : 0;
    data.timeout[k] = next() != 0.0 ? 1 : 0;
    const double tag = next();
    if (tag != 0.0 && tag != 1.0 && tag != 2.0) { throw std::runtime_error("dataset: invalid domain tag code"); }
    data.tags[k] = static_cast<DomainTag>(static_cast<std::uint8_t>(tag));
  }
  data.validate();
  return data;
}

void write_dataset(const std::filesystem::path &path, const OfflineDataset &data) { nn::write_file(path, serialize(data)); }

OfflineDataset read_dataset(const std::filesystem::path &path) { return deserialize(nn::read_file(path)); }

std::string content_hash(const OfflineDataset &data)
{
  // Hash the canonical encoding; mixed-tag stores are hashed record by record.
  Fnv1a h;
  h.update(std::to_string(data.state_dim) + "/" + std::to_string(data.action_dim) + "/" + std::to_string(data.size()));
  std::string buf;
  buf.reserve(static_cast<std::size_t>(record_width(data.state_dim, data.action_dim) * 8));
  for (Index i = 0; i < data.size(); ++i) {
    buf.clear();
    const auto k = static_cast<std::size_t>(i);
    for (Index d = 0; d < data.state_dim; ++d) { append_f64(buf, data.states(d, i)); }
    for (Index d = 0; d < data.action_dim; ++d) { append_f64(buf, data.actions(d, i)); }
    append_f64(buf, data.rewards[i]);
    for (Index d = 0; d < data.state_dim; ++d) { append_f64(buf, data.next_states(d, i)); }
    append_f64(buf, data.done[k]);
    append_f64(buf, data.timeout[k]);
    append_f64(buf, static_cast<double>(static_cast<std::uint8_t>(data.tags[k])));
    h.update(buf);
  }
  h.update(envs::to_json(data.env).dump());
  return h.hex();
}

} // namespace bosa::data
