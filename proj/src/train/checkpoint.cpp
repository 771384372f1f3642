// SPDX-License-Identifier: Apache-2.0
#include "padmae/train/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "padmae/core/hash.hpp"
#include "padmae/train/config_json.hpp"
#include "padmae/train/policy.hpp"

namespace padmae::train {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "payload layout assumes little-endian");

namespace {

constexpr const char* kFormat = "padmae-checkpoint";
constexpr int kVersion = 1;

void append_f32(std::string& out, const ad::Tensor& t) {
  const std::size_t start = out.size();
  out.resize(start + t.numel() * 4);
  for (std::size_t i = 0; i < t.numel(); ++i) {
    const float f = static_cast<float>(t[i]);
    std::memcpy(out.data() + start + i * 4, &f, 4);
  }
}

ad::Tensor read_f32(const std::string& payload, std::size_t offset, const ad::Shape& shape) {
  ad::Tensor t(shape);
  for (std::size_t i = 0; i < t.numel(); ++i) {
    float f;
    std::memcpy(&f, payload.data() + offset + i * 4, 4);
    t[i] = static_cast<double>(f);
  }
  return t;
}

json shape_json(const ad::Shape& s) { return json::array({s[0], s[1]}); }

}  // namespace

const ad::Tensor* Checkpoint::find(std::string_view name) const {
  for (const auto& [n, t] : params)
    if (n == name) return &t;
  return nullptr;
}

Checkpoint capture_checkpoint(const ad::ParamStore& store, const vit::ViTConfig& model,
                              const Optimizer* optimizer) {
  Checkpoint c;
  c.model = model;
  for (const ad::Param* p : store.all()) c.params.emplace_back(p->name, p->value);
  if (optimizer) c.moments = optimizer->moments();
  return c;
}

std::string save_checkpoint(const fs::path& dir, const Checkpoint& c) {
  fs::create_directories(dir);
  std::string payload;
  json tensors = json::array();
  auto add = [&](const std::string& name, const std::string& kind, const ad::Tensor& t) {
    const std::size_t offset = payload.size();
    append_f32(payload, t);
    tensors.push_back({{"name", name},
                       {"kind", kind},
                       {"shape", shape_json(t.shape())},
                       {"offset", offset},
                       {"sha256", sha256_hex(std::string_view(payload).substr(offset))}});
  };
  for (const auto& [name, t] : c.params) add(name, "param", t);
  json moments = json::object();
  for (const auto& [name, m] : c.moments) {
    add(name, "moment_m", m.m);
    add(name, "moment_v", m.v);
    moments[name] = m.step;
  }
  const std::string digest = sha256_hex(payload);
  json manifest = {{"format", kFormat},
                   {"version", kVersion},
                   {"model", to_json(c.model)},
                   {"config_echo", c.config_echo},
                   {"epoch", c.epoch},
                   {"step", c.step},
                   {"tensors", tensors},
                   {"moment_steps", moments},
                   {"rng_states", c.rng_states},
                   {"meta", c.meta},
                   {"payload_bytes", payload.size()},
                   {"payload_sha256", digest}};
  {
    std::ofstream out(dir / "payload.bin", std::ios::binary);
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw CheckpointError("cannot write " + (dir / "payload.bin").string());
  }
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(1) << "\n";
  if (!out) throw CheckpointError("cannot write " + (dir / "manifest.json").string());
  return digest;
}

namespace {

json read_manifest_json(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw CheckpointError("checkpoint not found: " + dir.string());
  try {
    json m = json::parse(in);
    if (m.at("format") != kFormat || m.at("version") != kVersion) {
      throw CheckpointError("unsupported checkpoint format in " + dir.string());
    }
    return m;
  } catch (const json::exception& e) {
    throw CheckpointError("malformed checkpoint manifest " + dir.string() + ": " + e.what());
  }
}

}  // namespace

std::string checkpoint_digest(const fs::path& dir) {
  return read_manifest_json(dir).at("payload_sha256").get<std::string>();
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const json m = read_manifest_json(dir);
  std::ifstream in(dir / "payload.bin", std::ios::binary);
  if (!in) throw CheckpointError("missing payload in " + dir.string());
  const std::string payload(std::istreambuf_iterator<char>(in), {});
  Checkpoint c;
  try {
    if (payload.size() != m.at("payload_bytes").get<std::size_t>()) {
      throw CheckpointError("payload size mismatch in " + dir.string());
    }
    c.model = vit_config_from_json(m.at("model"));
    c.config_echo = m.at("config_echo").get<std::string>();
    c.epoch = m.at("epoch").get<std::size_t>();
    c.step = m.at("step").get<std::uint64_t>();
    c.rng_states = m.at("rng_states").get<std::map<std::string, std::string>>();
    c.meta = m.at("meta").get<std::map<std::string, std::string>>();
    for (const json& t : m.at("tensors")) {
      const std::string name = t.at("name").get<std::string>();
      const std::string kind = t.at("kind").get<std::string>();
      const ad::Shape shape{t.at("shape").at(0).get<std::size_t>(), t.at("shape").at(1).get<std::size_t>()};
      const std::size_t offset = t.at("offset").get<std::size_t>();
      const std::size_t bytes = shape[0] * shape[1] * 4;
      if (offset + bytes > payload.size()) throw CheckpointError("tensor " + name + " out of payload range");
      if (sha256_hex(std::string_view(payload).substr(offset, bytes)) != t.at("sha256")) {
        throw CheckpointError("hash mismatch for tensor " + name + " (" + kind + ")");
      }
      ad::Tensor value = read_f32(payload, offset, shape);
      if (kind == "param") {
        c.params.emplace_back(name, std::move(value));
      } else if (kind == "moment_m") {
        c.moments[name].m = std::move(value);
      } else if (kind == "moment_v") {
        c.moments[name].v = std::move(value);
      } else {
        throw CheckpointError("unknown tensor kind " + kind);
      }
    }
    for (auto& [name, st] : c.moments) st.step = m.at("moment_steps").at(name).get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw CheckpointError("malformed checkpoint manifest " + dir.string() + ": " + e.what());
  }
  if (sha256_hex(payload) != m.at("payload_sha256")) {
    throw CheckpointError("payload hash mismatch in " + dir.string());
  }
  return c;
}

bool is_backbone_param(std::string_view name) {
  return name.starts_with("encoder.") && !is_adapter_param(name);
}

void restore_params(ad::ParamStore& store, const Checkpoint& ckpt, LoadScope scope) {
  const bool has_decoder = std::any_of(ckpt.params.begin(), ckpt.params.end(),
                                       [](const auto& p) { return p.first.starts_with("decoder."); });
  for (ad::Param* p : store.all()) {
    bool required = true;
    if (scope != LoadScope::all) {
      const bool decoder = p->name.starts_with("decoder.");
      required = is_backbone_param(p->name) ||
                 (scope == LoadScope::backbone_and_decoder && decoder && has_decoder);
    }
    if (!required) continue;
    const ad::Tensor* t = ckpt.find(p->name);
    if (!t) throw CheckpointError("checkpoint lacks tensor " + p->name);
    if (t->shape() != p->value.shape()) {
      throw CheckpointError("shape mismatch for tensor " + p->name + ": checkpoint [" +
                            std::to_string(t->rows()) + "x" + std::to_string(t->cols()) +
                            "] vs model [" + std::to_string(p->value.rows()) + "x" +
                            std::to_string(p->value.cols()) + "]");
    }
    p->value = *t;
  }
}

void restore_moments(Optimizer& optimizer, const Checkpoint& ckpt) {
  optimizer.moments() = ckpt.moments;
}

std::string params_digest(const ad::ParamStore& store,
                          const std::function<bool(const ad::Param&)>& select) {
  std::string bytes;
  for (const ad::Param* p : store.all()) {
    if (!select(*p)) continue;
    bytes += p->name;
    bytes.push_back('\0');
    const auto* raw = reinterpret_cast<const char*>(&p->value[0]);
    bytes.append(raw, p->value.numel() * sizeof(double));
  }
  return sha256_hex(bytes);
}

std::string backbone_digest(const ad::ParamStore& store) {
  return params_digest(store, [](const ad::Param& p) { return is_backbone_param(p.name); });
}

}  // namespace padmae::train
