#pragma once

// Feature matrices on disk: NPY v1.0 tensors (little-endian float32, C order,
// rank 2) plus a JSON manifest listing {path, extractor_name, split, n, d,
// sha256} per file.

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <regex>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "irs/errors.hpp"

namespace irs {

enum class Split { kTrain, kReference, kTest, kSynthetic };

inline std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kReference: return "reference";
    case Split::kTest: return "test";
    case Split::kSynthetic: return "synthetic";
  }
  return "unknown";
}

inline Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "reference") return Split::kReference;
  if (name == "test") return Split::kTest;
  if (name == "synthetic") return Split::kSynthetic;
  throw InputError("unknown split '" + name + "' (expected train, reference, test or synthetic)");
}

/// Row-major n x d float32 matrix with provenance.
struct FeatureSet {
  std::string id;
  std::string extractor_name;
  Split split = Split::kTrain;
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<float> data;

  std::span<const float> row(std::size_t i) const { return {data.data() + i * d, d}; }
  std::span<float> row(std::size_t i) { return {data.data() + i * d, d}; }

  void validate() const {
    detail::require(n >= 1 && d >= 1, "feature set '" + id + "' must have n >= 1 and d >= 1");
    detail::require(data.size() == n * d, "feature set '" + id + "' has " + std::to_string(data.size()) +
                                              " values, expected n*d=" + std::to_string(n * d));
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = row(i);
      detail::require(!std::all_of(r.begin(), r.end(), [](float x) { return std::isnan(x); }),
                      "feature set '" + id + "' row " + std::to_string(i) + " is all NaN");
    }
  }

  /// Copy of the given rows, in order.
  FeatureSet subset(std::span<const std::size_t> rows) const {
    FeatureSet out{id, extractor_name, split, rows.size(), d, {}};
    out.data.reserve(rows.size() * d);
    for (const auto r : rows) {
      const auto src = row(r);
      out.data.insert(out.data.end(), src.begin(), src.end());
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// SHA-256

inline std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1) {
    throw NumericalError("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * length);
  for (unsigned i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

inline std::string sha256_hex(std::string_view text) {
  return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  detail::require(static_cast<bool>(in), "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string sha256_file(const std::filesystem::path& path) {
  return sha256_hex(std::span<const std::uint8_t>(read_file_bytes(path)));
}

// ---------------------------------------------------------------------------
// NPY v1.0

namespace detail {

inline constexpr char kNpyMagic[] = "\x93NUMPY";

struct NpyHeader {
  std::string descr;
  bool fortran_order = false;
  std::vector<std::size_t> shape;
};

inline NpyHeader parse_npy_header(const std::string& text, const std::string& origin) {
  NpyHeader h;
  std::smatch m;
  if (!std::regex_search(text, m, std::regex(R"('descr'\s*:\s*'([^']*)')"))) {
    throw InputError(origin + ": malformed NPY header (no descr)");
  }
  h.descr = m[1];
  if (!std::regex_search(text, m, std::regex(R"('fortran_order'\s*:\s*(True|False))"))) {
    throw InputError(origin + ": malformed NPY header (no fortran_order)");
  }
  h.fortran_order = m[1] == "True";
  if (!std::regex_search(text, m, std::regex(R"('shape'\s*:\s*\(([^)]*)\))"))) {
    throw InputError(origin + ": malformed NPY header (no shape)");
  }
  const std::string dims = m[1];
  const std::regex number(R"(\d+)");
  for (auto it = std::sregex_iterator(dims.begin(), dims.end(), number); it != std::sregex_iterator(); ++it) {
    h.shape.push_back(static_cast<std::size_t>(std::stoull(it->str())));
  }
  return h;
}

inline std::string npy_header(const std::string& descr, std::span<const std::size_t> shape) {
  std::string dict = "{'descr': '" + descr + "', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    dict += std::to_string(shape[i]);
    if (shape.size() == 1 || i + 1 < shape.size()) dict += ",";
    if (i + 1 < shape.size()) dict += " ";
  }
  dict += "), }";
  // magic(6) + version(2) + length(2) + dict + padding + '\n' is a multiple of 64.
  const std::size_t unpadded = 10 + dict.size() + 1;
  dict.append((64 - unpadded % 64) % 64, ' ');
  dict.push_back('\n');
  std::string out(kNpyMagic, 6);
  out.push_back('\x01');
  out.push_back('\x00');
  out.push_back(static_cast<char>(dict.size() & 0xFF));
  out.push_back(static_cast<char>((dict.size() >> 8) & 0xFF));
  return out + dict;
}

// Splits a raw NPY byte buffer into header and payload offset.
inline std::pair<NpyHeader, std::size_t> decode_npy(std::span<const std::uint8_t> bytes, const std::string& origin) {
  require(bytes.size() >= 10 && std::memcmp(bytes.data(), kNpyMagic, 6) == 0,
          origin + ": not an NPY file (bad magic)");
  const int major = bytes[6];
  std::size_t header_len = 0, offset = 0;
  if (major == 1) {
    header_len = bytes[8] | (static_cast<std::size_t>(bytes[9]) << 8);
    offset = 10;
  } else if (major == 2 || major == 3) {
    require(bytes.size() >= 12, origin + ": truncated NPY header");
    header_len = bytes[8] | (static_cast<std::size_t>(bytes[9]) << 8) |
                 (static_cast<std::size_t>(bytes[10]) << 16) | (static_cast<std::size_t>(bytes[11]) << 24);
    offset = 12;
  } else {
    throw InputError(origin + ": unsupported NPY version " + std::to_string(major));
  }
  require(bytes.size() >= offset + header_len, origin + ": truncated NPY header");
  const std::string text(reinterpret_cast<const char*>(bytes.data() + offset), header_len);
  return {parse_npy_header(text, origin), offset + header_len};
}

}  // namespace detail

/// Serializes a feature set as an NPY v1.0 float32 matrix.
inline std::string encode_npy(const FeatureSet& features) {
  const std::array<std::size_t, 2> shape{features.n, features.d};
  std::string out = detail::npy_header("<f4", shape);
  const auto* raw = reinterpret_cast<const char*>(features.data.data());
  static_assert(std::endian::native == std::endian::little, "NPY writer assumes a little-endian host");
  out.append(raw, features.data.size() * sizeof(float));
  return out;
}

inline void write_npy(const std::filesystem::path& path, const FeatureSet& features) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  detail::require(static_cast<bool>(out), "cannot write " + path.string());
  const auto bytes = encode_npy(features);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

/// Writes a 1-D little-endian int64 NPY array (used for index streams).
inline void write_index_npy(const std::filesystem::path& path, std::span<const std::int64_t> values) {
  const std::array<std::size_t, 1> shape{values.size()};
  std::string bytes = detail::npy_header("<i8", shape);
  bytes.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(std::int64_t));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  detail::require(static_cast<bool>(out), "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

/// Optional checks applied while loading.
struct FeatureConstraints {
  std::optional<std::size_t> d;
  std::optional<std::size_t> n;
  std::optional<std::string> extractor_name;
  std::optional<std::string> sha256;
};

inline FeatureSet decode_npy_features(std::span<const std::uint8_t> bytes, const std::string& origin) {
  const auto [header, offset] = detail::decode_npy(bytes, origin);
  detail::require(header.descr == "<f4" || header.descr == "=f4",
                  origin + ": dtype '" + header.descr + "' is not little-endian float32");
  detail::require(!header.fortran_order, origin + ": Fortran-ordered arrays are not supported");
  detail::require(header.shape.size() == 2,
                  origin + ": expected a rank-2 array, got rank " + std::to_string(header.shape.size()));
  FeatureSet fs;
  fs.id = origin;
  fs.n = header.shape[0];
  fs.d = header.shape[1];
  const std::size_t count = fs.n * fs.d;
  detail::require(bytes.size() - offset == count * sizeof(float),
                  origin + ": payload holds " + std::to_string(bytes.size() - offset) + " bytes, expected " +
                      std::to_string(count * sizeof(float)));
  fs.data.resize(count);
  std::memcpy(fs.data.data(), bytes.data() + offset, count * sizeof(float));
  return fs;
}

/// Loads and validates a feature file.
inline FeatureSet load_features(const std::filesystem::path& path, const FeatureConstraints& expected = {}) {
  const auto bytes = read_file_bytes(path);
  const std::string origin = path.string();
  if (expected.sha256 && !expected.sha256->empty()) {
    const auto actual = sha256_hex(std::span<const std::uint8_t>(bytes));
    if (actual != *expected.sha256) {
      throw IntegrityError(origin + ": sha256 mismatch (manifest " + *expected.sha256 + ", file " + actual + ")");
    }
  }
  FeatureSet fs = decode_npy_features(bytes, origin);
  fs.id = path.stem().string();
  if (expected.extractor_name) fs.extractor_name = *expected.extractor_name;
  detail::require(!expected.d || *expected.d == fs.d,
                  origin + ": dimension " + std::to_string(fs.d) + " does not match expected " +
                      std::to_string(expected.d.value_or(0)));
  detail::require(!expected.n || *expected.n == fs.n,
                  origin + ": row count " + std::to_string(fs.n) + " does not match expected " +
                      std::to_string(expected.n.value_or(0)));
  fs.validate();
  return fs;
}

/// Reads a 1-D integer NPY array, or a text file with one integer per line.
inline std::vector<std::int64_t> load_indices(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  std::vector<std::int64_t> out;
  if (bytes.size() >= 6 && std::memcmp(bytes.data(), detail::kNpyMagic, 6) == 0) {
    const auto [header, offset] = detail::decode_npy(std::span<const std::uint8_t>(bytes), path.string());
    detail::require(header.shape.size() == 1, path.string() + ": index arrays must be rank 1");
    const std::size_t n = header.shape[0];
    if (header.descr == "<i8") {
      detail::require(bytes.size() - offset == n * 8, path.string() + ": truncated index payload");
      out.resize(n);
      std::memcpy(out.data(), bytes.data() + offset, n * 8);
    } else if (header.descr == "<i4") {
      detail::require(bytes.size() - offset == n * 4, path.string() + ": truncated index payload");
      std::vector<std::int32_t> tmp(n);
      std::memcpy(tmp.data(), bytes.data() + offset, n * 4);
      out.assign(tmp.begin(), tmp.end());
    } else {
      throw InputError(path.string() + ": index dtype '" + header.descr + "' must be <i8 or <i4");
    }
    return out;
  }
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r,");
    if (first == std::string::npos || line[first] == '#') continue;
    try {
      out.push_back(std::stoll(line.substr(first)));
    } catch (const std::exception&) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": not an integer");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

struct ManifestEntry {
  std::string path;
  std::string extractor_name;
  Split split = Split::kTrain;
  std::size_t n = 0;
  std::size_t d = 0;
  std::string sha256;
};

inline void to_json(nlohmann::json& j, const ManifestEntry& e) {
  j = {{"path", e.path}, {"extractor_name", e.extractor_name}, {"split", to_string(e.split)},
       {"n", e.n},       {"d", e.d},                           {"sha256", e.sha256}};
}

struct Manifest {
  std::filesystem::path directory;  // relative entry paths resolve against this
  std::vector<ManifestEntry> entries;

  std::vector<std::string> extractors() const {
    std::vector<std::string> names;
    for (const auto& e : entries) {
      if (std::find(names.begin(), names.end(), e.extractor_name) == names.end()) names.push_back(e.extractor_name);
    }
    return names;
  }

  /// Entry for (split, extractor); the extractor may be omitted when unique.
  const ManifestEntry* find(Split split, const std::string& extractor = {}) const {
    const ManifestEntry* found = nullptr;
    for (const auto& e : entries) {
      if (e.split != split || (!extractor.empty() && e.extractor_name != extractor)) continue;
      detail::require(found == nullptr, "manifest has several '" + to_string(split) +
                                            "' entries; select an extractor");
      found = &e;
    }
    return found;
  }

  const ManifestEntry& require(Split split, const std::string& extractor = {}) const {
    const auto* e = find(split, extractor);
    detail::require(e != nullptr, "missing split: " + to_string(split));
    return *e;
  }

  std::filesystem::path resolve(const ManifestEntry& e) const {
    const std::filesystem::path p(e.path);
    return p.is_absolute() ? p : directory / p;
  }

  FeatureSet load(const ManifestEntry& e) const {
    FeatureConstraints c;
    c.d = e.d;
    c.n = e.n;
    c.extractor_name = e.extractor_name;
    if (!e.sha256.empty()) c.sha256 = e.sha256;
    FeatureSet fs = load_features(resolve(e), c);
    fs.split = e.split;
    return fs;
  }

  nlohmann::json to_json() const { return {{"entries", entries}}; }
};

inline Manifest parse_manifest(const nlohmann::json& doc, std::filesystem::path directory) {
  Manifest m;
  m.directory = std::move(directory);
  const auto& list = doc.is_array() ? doc : doc.at("entries");
  detail::require(list.is_array(), "manifest 'entries' must be an array");
  for (const auto& item : list) {
    try {
      ManifestEntry e;
      e.path = item.at("path").get<std::string>();
      e.extractor_name = item.at("extractor_name").get<std::string>();
      e.split = parse_split(item.at("split").get<std::string>());
      e.n = item.at("n").get<std::size_t>();
      e.d = item.at("d").get<std::size_t>();
      e.sha256 = item.value("sha256", std::string{});
      m.entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw InputError(std::string("malformed manifest entry: ") + ex.what());
    }
  }
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  detail::require(static_cast<bool>(in), "cannot open manifest " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& ex) {
    throw InputError("manifest " + path.string() + " is not valid JSON: " + ex.what());
  }
  return parse_manifest(doc, path.parent_path());
}

/// Writes `features` next to the manifest and returns its entry (with sha256).
inline ManifestEntry write_manifest_entry(const std::filesystem::path& directory, const std::string& file_name,
                                          const FeatureSet& features) {
  const auto path = directory / file_name;
  write_npy(path, features);
  return {file_name, features.extractor_name, features.split, features.n, features.d, sha256_file(path)};
}

inline void save_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  detail::require(static_cast<bool>(out), "cannot write " + path.string());
  out << manifest.to_json().dump(2) << '\n';
}

}  // namespace irs
