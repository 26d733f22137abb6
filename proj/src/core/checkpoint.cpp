#include "eit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "eit/errors.hpp"

namespace eit {

using ordered_json = nlohmann::ordered_json;

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::size_t element_size(DType dtype) { return dtype == DType::kF32 ? 4 : 8; }

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ModelParams& params, DType dtype) {
  check_params(config, params);
  ordered_json header;
  header["config"] = ordered_json::parse(config_to_json(config));
  header["config_hash"] = hex64(config_hash(config));
  auto& tensors = header["tensors"] = ordered_json::object();

  std::string payload;
  for (const NamedTensor& t : params.tensors()) {
    tensors[t.name] = {{"shape", t.value.shape()},
                       {"dtype", dtype_name(dtype)},
                       {"offset", payload.size()}};
    for (double v : t.value.data()) {
      if (dtype == DType::kF64) {
        put_u64(payload, std::bit_cast<std::uint64_t>(v));
      } else {
        put_u32(payload, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      }
    }
  }

  const std::string header_text = header.dump();
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  put_u64(out, header_text.size());
  out += header_text;
  out += payload;

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot write checkpoint " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("short write to checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::string where = "checkpoint " + path.string();

  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw IoError(where + ": missing EITCKPT1 magic");
  }
  const std::uint64_t header_len = get_u64(raw + 8);
  if (header_len > bytes.size() - 16) throw IoError(where + ": truncated header");

  ordered_json header;
  try {
    header = ordered_json::parse(bytes.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(where + ": bad header JSON: " + e.what());
  }
  const std::size_t payload_start = 16 + header_len;
  const std::size_t payload_size = bytes.size() - payload_start;

  Checkpoint ck;
  try {
    ck.config = config_from_json(header.at("config").dump());
    if (header.at("config_hash").get<std::string>() != hex64(config_hash(ck.config))) {
      throw ConfigError(where + ": config hash does not match its stored config");
    }
    for (const auto& [name, meta] : header.at("tensors").items()) {
      const Shape shape = meta.at("shape").get<Shape>();
      const DType dtype = dtype_from_name(meta.at("dtype").get<std::string>());
      const std::size_t offset = meta.at("offset").get<std::size_t>();
      const std::size_t count = shape_numel(shape);
      const std::size_t width = element_size(dtype);
      if (offset > payload_size || count * width > payload_size - offset) {
        throw IoError(where + ": tensor '" + name + "' runs past end of file");
      }
      std::vector<double> data(count);
      const unsigned char* p = raw + payload_start + offset;
      for (std::size_t i = 0; i < count; ++i) {
        data[i] = dtype == DType::kF64
                      ? std::bit_cast<double>(get_u64(p + 8 * i))
                      : static_cast<double>(std::bit_cast<float>(get_u32(p + 4 * i)));
      }
      ck.params.add(name, Tensor(shape, std::move(data), dtype));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(where + ": malformed header: " + e.what());
  } catch (const ContractViolation& e) {
    throw IoError(where + ": " + e.what());
  }
  check_params(ck.config, ck.params);
  return ck;
}

}  // namespace eit
