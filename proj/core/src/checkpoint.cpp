#include "itogen/checkpoint.hpp"

#include "itogen/dataset_io.hpp"
#include "itogen/errors.hpp"

#include <json.hpp>

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace itogen::io {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kFormat = "itogen-checkpoint/1";

void append_le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>(bits & 0xffu));
    bits >>= 8;
  }
}

double read_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
  return std::bit_cast<double>(bits);
}

std::string serialize_weights(const njode::ModelBundle& bundle) {
  std::string out;
  for (const auto& model : bundle.models) {
    for (const nn::Parameter* p : model.parameters()) {
      for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
        for (Eigen::Index c = 0; c < p->value.cols(); ++c) append_le(out, p->value(r, c));
      }
    }
  }
  return out;
}

json arch_json(const njode::Architecture& a) {
  return {{"latent_dim", a.latent_dim},
          {"hidden", a.hidden},
          {"recurrent_encoder", a.recurrent_encoder},
          {"residual_encoder", a.residual_encoder},
          {"residual_decoder", a.residual_decoder},
          {"substeps", a.substeps},
          {"dropout", a.dropout},
          {"field_bound", a.field_bound}};
}

njode::Architecture arch_from_json(const json& j) {
  njode::Architecture a;
  a.latent_dim = j.at("latent_dim").get<int>();
  a.hidden = j.at("hidden").get<int>();
  a.recurrent_encoder = j.at("recurrent_encoder").get<bool>();
  a.residual_encoder = j.at("residual_encoder").get<bool>();
  a.residual_decoder = j.at("residual_decoder").get<bool>();
  a.substeps = j.at("substeps").get<int>();
  a.dropout = j.at("dropout").get<double>();
  a.field_bound = j.at("field_bound").get<double>();
  return a;
}

}  // namespace

std::uint64_t checksum(const njode::ModelBundle& bundle) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : serialize_weights(bundle)) {
    h = (h ^ c) * 1099511628211ull;
  }
  return h;
}

std::string checksum_hex(std::uint64_t value) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

void save_checkpoint(const fs::path& dir, const njode::ModelBundle& bundle,
                     const CheckpointMeta& meta) {
  if (bundle.models.empty()) throw DataError("cannot save an empty model bundle");
  fs::create_directories(dir);
  json models = json::array();
  for (const auto& m : bundle.models) {
    json params = json::array();
    for (const nn::Parameter* p : m.parameters()) {
      params.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
    }
    const auto& c = m.config();
    models.push_back({{"name", m.name()},
                      {"dim", c.dim},
                      {"drift_head", c.drift_head},
                      {"diffusion_head", c.diffusion_head},
                      {"z_input", c.z_input},
                      {"architecture", arch_json(c.arch)},
                      {"parameters", params}});
  }
  const std::string weights = serialize_weights(bundle);
  json manifest = {{"format", kFormat},
                   {"scheme", to_string(bundle.scheme)},
                   {"models", models},
                   {"seed", meta.seed},
                   {"epochs_trained", meta.epochs_trained},
                   {"best_epoch", meta.best_epoch},
                   {"optimizer_steps", meta.optimizer_steps},
                   {"truncation_level", meta.truncation_level},
                   {"dt", meta.dt},
                   {"horizon", meta.horizon},
                   {"weights_bytes", weights.size()},
                   {"checksum", checksum_hex(checksum(bundle))}};
  write_text_file(dir / "model.json", manifest.dump(2) + "\n");
  write_text_file(dir / "weights.bin", weights);
}

LoadedCheckpoint load_checkpoint(const fs::path& dir) {
  if (!fs::exists(dir / "model.json")) {
    throw DataError("no checkpoint at " + dir.string() + " (model.json missing)");
  }
  json manifest;
  try {
    manifest = json::parse(read_text_file(dir / "model.json"));
  } catch (const json::exception& e) {
    throw DataError("malformed model.json: " + std::string(e.what()));
  }
  LoadedCheckpoint out;
  try {
    if (manifest.at("format").get<std::string>() != kFormat) {
      throw DataError("unsupported checkpoint format");
    }
    out.bundle.scheme = scheme_from_string(manifest.at("scheme").get<std::string>());
    for (const auto& jm : manifest.at("models")) {
      njode::NjodeConfig c;
      c.dim = jm.at("dim").get<int>();
      c.drift_head = jm.at("drift_head").get<bool>();
      c.diffusion_head = jm.at("diffusion_head").get<bool>();
      c.z_input = jm.at("z_input").get<bool>();
      c.arch = arch_from_json(jm.at("architecture"));
      out.bundle.models.emplace_back(c, jm.at("name").get<std::string>());
      const auto params = out.bundle.models.back().parameters();
      const auto& jp = jm.at("parameters");
      if (jp.size() != params.size()) throw DataError("parameter table mismatch");
      for (std::size_t i = 0; i < params.size(); ++i) {
        if (jp[i].at("rows").get<Eigen::Index>() != params[i]->value.rows() ||
            jp[i].at("cols").get<Eigen::Index>() != params[i]->value.cols() ||
            jp[i].at("name").get<std::string>() != params[i]->name) {
          throw DataError("parameter " + params[i]->name + " does not match the manifest");
        }
      }
    }
    out.meta.seed = manifest.at("seed").get<std::uint64_t>();
    out.meta.epochs_trained = manifest.at("epochs_trained").get<int>();
    out.meta.best_epoch = manifest.at("best_epoch").get<int>();
    out.meta.optimizer_steps = manifest.at("optimizer_steps").get<std::uint64_t>();
    out.meta.truncation_level = manifest.at("truncation_level").get<double>();
    out.meta.dt = manifest.at("dt").get<double>();
    out.meta.horizon = manifest.at("horizon").get<double>();
  } catch (const json::exception& e) {
    throw DataError("malformed model.json: " + std::string(e.what()));
  }
  if (out.bundle.models.empty()) throw DataError("checkpoint holds no models");

  const std::string bytes = read_text_file(dir / "weights.bin");
  std::size_t needed = 0;
  for (const auto& m : out.bundle.models) {
    for (const nn::Parameter* p : m.parameters()) needed += 8 * static_cast<std::size_t>(p->value.size());
  }
  if (bytes.size() != needed) {
    throw DataError("weights.bin holds " + std::to_string(bytes.size()) + " bytes, expected " +
                    std::to_string(needed));
  }
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  std::size_t pos = 0;
  for (auto& m : out.bundle.models) {
    for (nn::Parameter* p : m.parameters()) {
      for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
        for (Eigen::Index c = 0; c < p->value.cols(); ++c) {
          p->value(r, c) = read_le(data + pos);
          pos += 8;
        }
      }
    }
  }
  return out;
}

}  // namespace itogen::io
