#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "mimo/data/vseq.hpp"
#include "mimo/model/config.hpp"
#include "mimo/training/trainer.hpp"

namespace mimo {

// MVPC: "MVPC", version byte 1, u32 LE header length, JSON header, then
// float32 LE payloads in manifest order (parameters, then Adam moments).

inline constexpr std::uint8_t kCheckpointVersion = 1;

struct Checkpoint {
  Json run_config = Json::object();
  std::string config_hash;
  ModelConfig model;
  TrainState state;
};

namespace detail {

inline Json shape_json(const Shape& s) {
  Json j = Json::array();
  for (auto d : s) j.push_back(d);
  return j;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ck, std::ostream& os) {
  const TrainState& s = ck.state;
  Json manifest = Json::array();
  std::vector<std::span<const double>> blobs;
  std::size_t offset = 0;
  auto entry = [&](const std::string& section, const std::string& name, const Shape& shape,
                   std::span<const double> values) {
    manifest.push_back({{"section", section}, {"name", name}, {"shape", detail::shape_json(shape)},
                        {"offset", offset}, {"count", values.size()}});
    offset += values.size() * 4;
    blobs.push_back(values);
  };
  for (const auto& [name, t] : s.params) entry("param", name, t.shape(), t.data());
  for (const auto& [name, t] : s.params) {
    auto m = s.optim.m.find(name);
    auto v = s.optim.v.find(name);
    if (m == s.optim.m.end() || v == s.optim.v.end()) continue;
    entry("adam_m", name, t.shape(), m->second);
    entry("adam_v", name, t.shape(), v->second);
  }
  Json history = Json::array();
  for (const auto& r : s.history) history.push_back(Json::array({r.step, r.loss, r.lr}));
  Json header{{"format", "MVPC"},
              {"version", kCheckpointVersion},
              {"config_hash", ck.config_hash},
              {"run_config", ck.run_config},
              {"model", to_json(ck.model)},
              {"manifest", std::move(manifest)},
              {"payload_bytes", offset},
              {"optimizer",
               {{"lr", s.optim.lr}, {"beta1", s.optim.beta1}, {"beta2", s.optim.beta2}, {"eps", s.optim.eps},
                {"step", s.optim.step}}},
              {"scheduler", to_json(s.scheduler)},
              {"step", s.step},
              {"rng_state", s.epoch_rng_state.empty() ? s.shuffle_rng.state() : s.epoch_rng_state},
              {"loss_history", std::move(history)}};
  const std::string text = header.dump();
  os.write("MVPC", 4);
  os.put(static_cast<char>(kCheckpointVersion));
  detail::put_le32(os, detail::checked_u32(text.size(), "checkpoint header"));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (auto b : blobs) detail::put_f32s(os, b);
  if (!os) throw FormatError("checkpoint: write failed");
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  // Write-then-rename so an interrupted save never leaves a torn file.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("checkpoint: cannot open '" + tmp + "' for writing");
    save_checkpoint(ck, os);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw FormatError("checkpoint: cannot move into '" + path + "'");
}

inline Checkpoint load_checkpoint(std::istream& in, const std::string& name = "checkpoint") {
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 9 || bytes.compare(0, 4, "MVPC") != 0) throw FormatError(name + ": not an MVPC checkpoint");
  const auto* b = reinterpret_cast<const unsigned char*>(bytes.data());
  if (b[4] != kCheckpointVersion) throw FormatError(name + ": unsupported checkpoint version " + std::to_string(b[4]));
  const std::size_t hlen = detail::get_le32(b + 5);
  if (9 + hlen > bytes.size()) throw FormatError(name + ": header length exceeds file size");
  Json h;
  try {
    h = Json::parse(bytes.substr(9, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(name + ": corrupt header: " + e.what());
  }
  const std::size_t payload = bytes.size() - 9 - hlen;
  const unsigned char* data = b + 9 + hlen;

  Checkpoint ck;
  try {
    if (h.at("payload_bytes").get<std::size_t>() != payload)
      throw FormatError(name + ": payload is " + std::to_string(payload) + " bytes, manifest expects " +
                        std::to_string(h.at("payload_bytes").get<std::size_t>()));
    ck.config_hash = h.at("config_hash").get<std::string>();
    ck.run_config = h.at("run_config");
    ck.model = model_config_from_json(h.at("model"));
    TrainState& s = ck.state;
    for (const auto& e : h.at("manifest")) {
      const auto section = e.at("section").get<std::string>();
      const auto pname = e.at("name").get<std::string>();
      const Shape shape = e.at("shape").get<Shape>();
      const auto off = e.at("offset").get<std::size_t>(), count = e.at("count").get<std::size_t>();
      if (count != shape_numel(shape) || off + count * 4 > payload)
        throw FormatError(name + ": manifest entry " + pname + " is inconsistent with the payload");
      std::vector<double> values(count);
      detail::get_f32s(data + off, values);
      if (section == "param") {
        s.params.add(pname, Tensor(shape, std::move(values), true));
      } else if (section == "adam_m") {
        s.optim.m[pname] = std::move(values);
      } else if (section == "adam_v") {
        s.optim.v[pname] = std::move(values);
      } else {
        throw FormatError(name + ": unknown manifest section '" + section + "'");
      }
    }
    const Json& o = h.at("optimizer");
    s.optim.lr = o.at("lr").get<double>();
    s.optim.beta1 = o.at("beta1").get<double>();
    s.optim.beta2 = o.at("beta2").get<double>();
    s.optim.eps = o.at("eps").get<double>();
    s.optim.step = o.at("step").get<std::size_t>();
    s.scheduler = scheduler_from_json(h.at("scheduler"));
    s.step = h.at("step").get<std::size_t>();
    s.epoch_rng_state = h.at("rng_state").get<std::string>();
    s.shuffle_rng.set_state(s.epoch_rng_state);
    for (const auto& r : h.at("loss_history"))
      s.history.push_back({r.at(0).get<std::size_t>(), r.at(1).get<double>(), r.at(2).get<double>()});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(name + ": malformed header: " + e.what());
  } catch (const UsageError& e) {
    throw FormatError(name + ": " + e.what());
  }
  try {
    check_parameters(ck.state.params, ck.model);
  } catch (const ShapeError& e) {
    throw FormatError(name + ": parameters do not match the stored model config: " + e.what());
  }
  return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("checkpoint: cannot open '" + path + "'");
  return load_checkpoint(in, path);
}

}  // namespace mimo
