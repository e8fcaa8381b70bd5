#include "chronovec/checkpoint.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "chronovec/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

namespace chronovec {

namespace {

constexpr std::string_view kMetadataKey = "__metadata__";

std::string malformed(const std::string& why) { return "malformed header: " + why; }

}  // namespace

void validate_tensor_name(std::string_view name) {
  if (name.empty()) throw Error("tensor name must be non-empty");
  for (unsigned char c : name) {
    if (c < 0x20 || c == 0x7F) {
      throw Error("tensor name contains a control character: \"" + std::string(name) + "\"");
    }
  }
}

const Tensor& Checkpoint::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw Error("no tensor named \"" + name + "\"");
  return it->second;
}

void Checkpoint::insert(std::string name, Tensor tensor) {
  validate_tensor_name(name);
  if (name == kMetadataKey) throw Error("tensor name \"__metadata__\" is reserved");
  if (!tensors.emplace(std::move(name), std::move(tensor)).second) {
    throw Error("duplicate tensor name");
  }
}

std::vector<std::string> Checkpoint::names() const {
  std::vector<std::string> out;
  out.reserve(tensors.size());
  for (const auto& [name, _] : tensors) out.push_back(name);
  return out;
}

std::size_t Checkpoint::total_elements() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors) n += t.numel();
  return n;
}

Fingerprint fingerprint(const Checkpoint& ckpt) {
  nlohmann::ordered_json inventory = nlohmann::ordered_json::array();
  for (const auto& [name, t] : ckpt.tensors) {
    inventory.push_back({name, dtype_name(t.dtype()), t.shape()});
  }
  const std::string canonical = inventory.dump();

  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(canonical.data(), canonical.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  Fingerprint fp;
  fp.hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    fp.hex.push_back(kHex[digest[i] >> 4]);
    fp.hex.push_back(kHex[digest[i] & 0xF]);
  }
  return fp;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 8) throw Error(malformed("file shorter than the 8-byte length prefix"));
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, bytes.data(), 8);
  if (header_len > bytes.size() - 8) {
    throw Error(malformed("header length " + std::to_string(header_len) + " exceeds file size " +
                          std::to_string(bytes.size())));
  }
  const std::string_view header = bytes.substr(8, header_len);
  const std::string_view data = bytes.substr(8 + header_len);

  std::set<std::string> seen;
  std::string duplicate;
  auto on_event = [&](int depth, nlohmann::json::parse_event_t event, nlohmann::json& parsed) {
    if (event == nlohmann::json::parse_event_t::key && depth == 1) {
      auto key = parsed.get<std::string>();
      if (!seen.insert(key).second && duplicate.empty()) duplicate = key;
    }
    return true;
  };
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(header.begin(), header.end(), on_event);
  } catch (const nlohmann::json::exception& e) {
    throw Error(malformed(e.what()));
  }
  if (!duplicate.empty()) throw Error("duplicate tensor name \"" + duplicate + "\"");
  if (!root.is_object()) throw Error(malformed("header is not a JSON object"));

  struct Span {
    std::uint64_t begin, end;
    std::string name;
  };
  std::vector<Span> spans;
  Checkpoint ckpt;

  for (auto& [key, value] : root.items()) {
    if (key == kMetadataKey) {
      if (!value.is_object()) throw Error(malformed("__metadata__ must be an object"));
      for (auto& [mk, mv] : value.items()) {
        if (!mv.is_string()) throw Error(malformed("metadata value for \"" + mk + "\" is not a string"));
        ckpt.metadata.emplace(mk, mv.get<std::string>());
      }
      continue;
    }
    validate_tensor_name(key);
    if (!value.is_object() || !value.contains("dtype") || !value.contains("shape") ||
        !value.contains("data_offsets")) {
      throw Error(malformed("entry \"" + key + "\" needs dtype, shape and data_offsets"));
    }
    const auto& jdtype = value["dtype"];
    const auto& jshape = value["shape"];
    const auto& joffsets = value["data_offsets"];
    if (!jdtype.is_string()) throw Error(malformed("dtype of \"" + key + "\" is not a string"));
    const DType dtype = parse_dtype(jdtype.get<std::string>());
    if (!jshape.is_array()) throw Error(malformed("shape of \"" + key + "\" is not an array"));
    Shape shape;
    for (const auto& d : jshape) {
      if (!d.is_number_unsigned()) throw Error(malformed("shape of \"" + key + "\" has a non-integer entry"));
      shape.push_back(d.get<std::int64_t>());
    }
    if (!joffsets.is_array() || joffsets.size() != 2 || !joffsets[0].is_number_unsigned() ||
        !joffsets[1].is_number_unsigned()) {
      throw Error(malformed("data_offsets of \"" + key + "\" must be two non-negative integers"));
    }
    const auto begin = joffsets[0].get<std::uint64_t>();
    const auto end = joffsets[1].get<std::uint64_t>();
    if (begin > end || end > data.size()) {
      throw Error("data offsets of \"" + key + "\" out of bounds: [" + std::to_string(begin) + ", " +
                  std::to_string(end) + ") with " + std::to_string(data.size()) + " data bytes");
    }
    const std::size_t expected = element_count(shape) * dtype_width(dtype);
    if (end - begin != expected) {
      throw Error("data offsets of \"" + key + "\" span " + std::to_string(end - begin) +
                  " bytes but shape " + shape_string(shape) + " needs " + std::to_string(expected));
    }
    const auto* p = reinterpret_cast<const std::byte*>(data.data()) + begin;
    ckpt.tensors.emplace(key, Tensor(dtype, std::move(shape), std::vector<std::byte>(p, p + (end - begin))));
    spans.push_back({begin, end, key});
  }

  std::sort(spans.begin(), spans.end(),
            [](const Span& a, const Span& b) { return std::tie(a.begin, a.end) < std::tie(b.begin, b.end); });
  for (std::size_t i = 1; i < spans.size(); ++i) {
    if (spans[i].begin < spans[i - 1].end) {
      throw Error("overlapping data offsets: \"" + spans[i - 1].name + "\" and \"" + spans[i].name + "\"");
    }
  }
  return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

std::string encode_checkpoint(const Checkpoint& ckpt, std::optional<DType> dtype_override,
                              WriteReport* report) {
  std::vector<Tensor> stored;
  stored.reserve(ckpt.tensors.size());
  std::size_t saturated = 0;
  for (const auto& [_, t] : ckpt.tensors) {
    stored.push_back(dtype_override ? t.cast(*dtype_override, &saturated) : t);
  }

  nlohmann::ordered_json header = nlohmann::ordered_json::object();
  if (!ckpt.metadata.empty()) header[std::string(kMetadataKey)] = ckpt.metadata;
  std::uint64_t offset = 0;
  std::size_t i = 0;
  for (const auto& [name, _] : ckpt.tensors) {
    const auto& t = stored[i++];
    const std::uint64_t size = t.bytes().size();
    header[name] = {{"dtype", dtype_name(t.dtype())},
                    {"shape", t.shape()},
                    {"data_offsets", {offset, offset + size}}};
    offset += size;
  }
  std::string text = header.dump();
  text.append((8 - text.size() % 8) % 8, ' ');

  std::string out;
  out.reserve(8 + text.size() + offset);
  const std::uint64_t len = text.size();
  out.append(reinterpret_cast<const char*>(&len), 8);
  out += text;
  for (const auto& t : stored) {
    out.append(reinterpret_cast<const char*>(t.bytes().data()), t.bytes().size());
  }
  if (report) report->saturated = saturated;
  return out;
}

WriteReport write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path,
                             std::optional<DType> dtype_override) {
  WriteReport report;
  const std::string bytes = encode_checkpoint(ckpt, dtype_override, &report);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) throw Error("I/O failure writing " + path.string());
  return report;
}

}  // namespace chronovec
