#include "del/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

#include "del/common.hpp"

namespace del {
namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'D', 'E', 'L', 'C', 'K', 'P', 'T', '1'};
constexpr int kVersion = 1;

std::uint64_t byteswap64(std::uint64_t v) {
  v = ((v & 0x00ff00ff00ff00ffULL) << 8) | ((v >> 8) & 0x00ff00ff00ff00ffULL);
  v = ((v & 0x0000ffff0000ffffULL) << 16) | ((v >> 16) & 0x0000ffff0000ffffULL);
  return (v << 32) | (v >> 32);
}

std::uint32_t byteswap32(std::uint32_t v) {
  v = ((v & 0x00ff00ffu) << 8) | ((v >> 8) & 0x00ff00ffu);
  return (v << 16) | (v >> 16);
}

std::uint32_t to_le32(std::uint32_t v) {
  return std::endian::native == std::endian::little ? v : byteswap32(v);
}

void write_doubles_le(std::ostream& out, const double* data, std::int64_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data),
              count * static_cast<std::int64_t>(sizeof(double)));
  } else {
    for (std::int64_t i = 0; i < count; ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, data + i, sizeof bits);
      bits = byteswap64(bits);
      out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
  }
}

void read_doubles_le(std::istream& in, double* data, std::int64_t count) {
  in.read(reinterpret_cast<char*>(data), count * static_cast<std::int64_t>(sizeof(double)));
  if constexpr (std::endian::native != std::endian::little) {
    for (std::int64_t i = 0; i < count; ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, data + i, sizeof bits);
      bits = byteswap64(bits);
      std::memcpy(data + i, &bits, sizeof bits);
    }
  }
}

json squash_spec_json(const SquashSpec& spec) {
  return json{{"p", spec.p}, {"q", spec.q}, {"n", spec.n}};
}

}  // namespace

std::string squash_form_name(SquashForm form) {
  switch (form) {
    case SquashForm::kAppendix: return "appendix";
    case SquashForm::kMainText: return "main-text";
  }
  throw ParamError("unhandled squash form");
}

SquashForm squash_form_from_name(const std::string& name) {
  if (name == "appendix") return SquashForm::kAppendix;
  if (name == "main-text") return SquashForm::kMainText;
  throw ParamError("unknown squash form '" + name + "'");
}

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     std::uint64_t seed) {
  const ModelConfig& cfg = model.config();
  json header;
  header["version"] = kVersion;
  header["model"] = model_kind_name(cfg.kind);
  header["n"] = cfg.n;
  header["channels"] = cfg.channels;
  header["b"] = cfg.b;
  header["b0"] = cfg.b0;
  header["rf_channels"] = cfg.rf_channels;
  header["classes"] = cfg.classes;
  header["hidden"] = cfg.hidden;
  header["squash_form"] = squash_form_name(cfg.squash);
  header["squash_mu"] = squash_spec_json(mu_squash(cfg));
  header["squash_s"] = squash_spec_json(s_squash(cfg));
  header["seed"] = seed;
  json plist = json::array();
  for (const auto& p : model.params()) {
    plist.push_back(json{{"name", p.name}, {"shape", p.value.shape()}});
  }
  header["params"] = plist;

  const std::string text = header.dump();
  if (text.size() > 0xffffffffu) throw IoError("checkpoint header too large");

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(kMagic, sizeof kMagic);
  const std::uint32_t len = to_le32(static_cast<std::uint32_t>(text.size()));
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : model.params()) {
    write_doubles_le(out, p.value.data(), p.value.size());
  }
  out.flush();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");

  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw IoError("'" + path.string() + "' is not a DELCKPT1 checkpoint");

  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in) throw IoError("truncated checkpoint header in '" + path.string() + "'");
  len = to_le32(len);

  std::string text(len, '\0');
  in.read(text.data(), len);
  if (!in) throw IoError("truncated checkpoint header in '" + path.string() + "'");

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError("bad checkpoint header in '" + path.string() + "': " + e.what());
  }

  Checkpoint ck;
  try {
    const int version = header.at("version").get<int>();
    if (version != kVersion)
      throw IoError("unsupported checkpoint version " + std::to_string(version));
    ck.config.kind = model_kind_from_name(header.at("model").get<std::string>());
    ck.config.n = header.at("n").get<std::int64_t>();
    ck.config.channels = header.at("channels").get<std::int64_t>();
    ck.config.b = header.at("b").get<std::int64_t>();
    ck.config.b0 = header.at("b0").get<std::int64_t>();
    ck.config.rf_channels = header.at("rf_channels").get<std::int64_t>();
    ck.config.classes = header.at("classes").get<std::int64_t>();
    ck.config.hidden = header.at("hidden").get<std::int64_t>();
    ck.config.squash = squash_form_from_name(header.at("squash_form").get<std::string>());
    ck.seed = header.at("seed").get<std::uint64_t>();
    for (const auto& entry : header.at("params")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
      Tensor value(shape);
      read_doubles_le(in, value.data(), value.size());
      if (!in) throw IoError("truncated parameter '" + name + "' in '" + path.string() + "'");
      ck.params.emplace_back(name, std::move(value));
    }
  } catch (const json::exception& e) {
    throw IoError("bad checkpoint header in '" + path.string() + "': " + e.what());
  }

  char extra;
  if (in.read(&extra, 1))
    throw IoError("trailing bytes after parameters in '" + path.string() + "'");
  return ck;
}

Model restore_model(const Checkpoint& ck) {
  Model model(ck.config);
  if (model.params().size() != ck.params.size())
    throw IoError("checkpoint lists " + std::to_string(ck.params.size()) +
                  " parameters, model has " + std::to_string(model.params().size()));
  for (const auto& [name, value] : ck.params) {
    Tensor* slot = model.find(name);
    if (!slot) throw IoError("checkpoint parameter '" + name + "' not in model");
    if (slot->shape() != value.shape())
      throw IoError("checkpoint parameter '" + name + "' has shape " + value.shape_str() +
                    ", model expects " + slot->shape_str());
    std::copy(value.data(), value.data() + value.size(), slot->data());
  }
  return model;
}

}  // namespace del
