#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>

#include "vseg/error.hpp"
#include "vseg/volume.hpp"

namespace vseg {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& token) {
  T value{};
  const char* begin = token.data();
  const char* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw ParseError("header key " + key + ": cannot parse '" + token + "'");
  }
  return value;
}

template <typename T>
std::array<T, 3> parse_triple(const std::string& key, const std::string& text) {
  const auto tokens = split_ws(text);
  if (tokens.size() != 3) {
    throw ParseError("header key " + key + ": expected 3 values, got '" +
                     text + "'");
  }
  return {parse_number<T>(key, tokens[0]), parse_number<T>(key, tokens[1]),
          parse_number<T>(key, tokens[2])};
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "True" || text == "true" || text == "1") return true;
  if (text == "False" || text == "false" || text == "0") return false;
  throw ParseError("header key " + key + ": expected True or False, got '" +
                   text + "'");
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

template <typename T>
T byteswap_value(T v) {
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &v, sizeof(T));
  std::reverse(bytes.begin(), bytes.end());
  std::memcpy(&v, bytes.data(), sizeof(T));
  return v;
}

template <typename T>
std::vector<T> decode(const std::string& payload, std::size_t count, bool msb) {
  std::vector<T> out(count);
  std::memcpy(out.data(), payload.data(), count * sizeof(T));
  const bool swap = msb != (std::endian::native == std::endian::big);
  if (swap) {
    for (auto& v : out) v = byteswap_value(v);
  }
  return out;
}

template <typename T>
void encode_le(std::ostream& out, std::span<const T> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(T)));
  } else {
    for (T v : values) {
      T le = byteswap_value(v);
      out.write(reinterpret_cast<const char*>(&le), sizeof(T));
    }
  }
}

}  // namespace

Volume read_metaimage(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());

  std::map<std::string, std::string> header;
  std::string line;
  bool saw_data_file = false;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    const std::string key = trim(std::string_view(line).substr(0, eq));
    if (key.empty() && eq == std::string::npos) continue;
    if (eq == std::string::npos) {
      throw ParseError("header key " + key + ": missing '='");
    }
    header[key] = trim(std::string_view(line).substr(eq + 1));
    if (key == "ElementDataFile") {
      saw_data_file = true;
      break;
    }
  }
  if (!saw_data_file) {
    throw ParseError("header key ElementDataFile: missing");
  }

  auto require = [&](const std::string& key) -> const std::string& {
    auto it = header.find(key);
    if (it == header.end()) throw ParseError("header key " + key + ": missing");
    return it->second;
  };

  if (auto it = header.find("ObjectType");
      it != header.end() && it->second != "Image") {
    throw ParseError("header key ObjectType: expected Image, got '" +
                     it->second + "'");
  }
  if (parse_number<int>("NDims", require("NDims")) != 3) {
    throw ParseError("header key NDims: only 3D volumes are supported, got '" +
                     header["NDims"] + "'");
  }
  if (auto it = header.find("CompressedData");
      it != header.end() && parse_bool("CompressedData", it->second)) {
    throw ParseError("header key CompressedData: compressed payloads are not supported");
  }
  if (auto it = header.find("ElementNumberOfChannels");
      it != header.end() && it->second != "1") {
    throw ParseError("header key ElementNumberOfChannels: only scalar volumes are supported");
  }

  const auto dim = parse_triple<int>("DimSize", require("DimSize"));
  if (dim[0] < 1 || dim[1] < 1 || dim[2] < 1) {
    throw ParseError("header key DimSize: sizes must be positive, got '" +
                     header["DimSize"] + "'");
  }
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  if (auto it = header.find("ElementSpacing"); it != header.end()) {
    spacing = parse_triple<double>("ElementSpacing", it->second);
    if (!(spacing[0] > 0 && spacing[1] > 0 && spacing[2] > 0)) {
      throw ParseError("header key ElementSpacing: spacing must be positive, got '" +
                       it->second + "'");
    }
  }
  std::array<double, 3> offset{0.0, 0.0, 0.0};
  if (auto it = header.find("Offset"); it != header.end()) {
    offset = parse_triple<double>("Offset", it->second);
  }

  bool msb = false;
  if (auto it = header.find("BinaryDataByteOrderMSB"); it != header.end()) {
    msb = parse_bool("BinaryDataByteOrderMSB", it->second);
  } else if (auto it2 = header.find("ElementByteOrderMSB"); it2 != header.end()) {
    msb = parse_bool("ElementByteOrderMSB", it2->second);
  }

  const std::string& type = require("ElementType");
  std::size_t element_size = 0;
  if (type == "MET_SHORT") {
    element_size = 2;
  } else if (type == "MET_FLOAT") {
    element_size = 4;
  } else {
    throw ParseError("header key ElementType: unsupported '" + type +
                     "' (expected MET_SHORT or MET_FLOAT)");
  }

  VolumeKind kind = element_size == 2 ? VolumeKind::hu : VolumeKind::probability;
  if (auto it = header.find("VesselKind"); it != header.end()) {
    try {
      kind = parse_volume_kind(it->second);
    } catch (const ParseError&) {
      throw ParseError("header key VesselKind: unknown kind '" + it->second + "'");
    }
  }

  const Dims dims{dim[0], dim[1], dim[2]};
  const std::size_t expected = dims.voxels() * element_size;

  std::string payload;
  const std::string& data_file = header["ElementDataFile"];
  if (data_file == "LOCAL") {
    std::ostringstream rest;
    rest << in.rdbuf();
    payload = rest.str();
  } else {
    const auto raw_path = path.parent_path() / data_file;
    std::ifstream raw(raw_path, std::ios::binary);
    if (!raw) throw IoError("cannot open payload " + raw_path.string());
    std::ostringstream rest;
    rest << raw.rdbuf();
    payload = rest.str();
  }
  if (payload.size() != expected) {
    throw SizeError("payload of " + path.string() + ": expected " +
                    std::to_string(expected) + " bytes, got " +
                    std::to_string(payload.size()));
  }

  std::vector<float> data;
  if (element_size == 2) {
    const auto raw = decode<std::int16_t>(payload, dims.voxels(), msb);
    data.assign(raw.begin(), raw.end());
  } else {
    data = decode<float>(payload, dims.voxels(), msb);
  }
  return Volume(dims, {spacing[0], spacing[1], spacing[2]},
                {offset[0], offset[1], offset[2]}, kind, std::move(data));
}

void write_metaimage(const Volume& volume, const std::filesystem::path& path) {
  auto raw_path = path;
  raw_path.replace_extension(".raw");
  const bool as_short = volume.kind() == VolumeKind::hu;

  std::ofstream header(path, std::ios::binary | std::ios::trunc);
  if (!header) throw IoError("cannot write " + path.string());
  const auto& d = volume.dims();
  const auto& s = volume.spacing();
  const auto& o = volume.origin();
  header << "ObjectType = Image\n"
         << "NDims = 3\n"
         << "DimSize = " << d.nx << ' ' << d.ny << ' ' << d.nz << '\n'
         << "ElementSpacing = " << format_double(s.x) << ' ' << format_double(s.y)
         << ' ' << format_double(s.z) << '\n'
         << "Offset = " << format_double(o.x) << ' ' << format_double(o.y) << ' '
         << format_double(o.z) << '\n'
         << "ElementType = " << (as_short ? "MET_SHORT" : "MET_FLOAT") << '\n'
         << "BinaryDataByteOrderMSB = False\n"
         << "VesselKind = " << to_string(volume.kind()) << '\n'
         << "ElementDataFile = " << raw_path.filename().string() << '\n';
  if (!header) throw IoError("write failed for " + path.string());

  std::ofstream raw(raw_path, std::ios::binary | std::ios::trunc);
  if (!raw) throw IoError("cannot write " + raw_path.string());
  if (as_short) {
    std::vector<std::int16_t> values(volume.size());
    const auto src = volume.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      // std::round rounds half away from zero.
      const double r = std::round(static_cast<double>(src[i]));
      values[i] = static_cast<std::int16_t>(std::clamp(
          r, static_cast<double>(std::numeric_limits<std::int16_t>::min()),
          static_cast<double>(std::numeric_limits<std::int16_t>::max())));
    }
    encode_le<std::int16_t>(raw, values);
  } else {
    encode_le<float>(raw, volume.data());
  }
  if (!raw) throw IoError("write failed for " + raw_path.string());
}

}  // namespace vseg
