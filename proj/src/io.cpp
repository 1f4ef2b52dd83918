#include "mvreg/io.hpp"

#include <Eigen/Geometry>

#include <bit>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mvreg/detail/format.hpp"
#include "mvreg/errors.hpp"

namespace mvreg {

namespace {

enum class PlyType { I8, U8, I16, U16, I32, U32, F32, F64 };

std::size_t type_size(PlyType t) {
  switch (t) {
    case PlyType::I8:
    case PlyType::U8:
      return 1;
    case PlyType::I16:
    case PlyType::U16:
      return 2;
    case PlyType::I32:
    case PlyType::U32:
    case PlyType::F32:
      return 4;
    case PlyType::F64:
      return 8;
  }
  return 0;
}

PlyType parse_type(const std::string& token) {
  if (token == "char" || token == "int8") return PlyType::I8;
  if (token == "uchar" || token == "uint8") return PlyType::U8;
  if (token == "short" || token == "int16") return PlyType::I16;
  if (token == "ushort" || token == "uint16") return PlyType::U16;
  if (token == "int" || token == "int32") return PlyType::I32;
  if (token == "uint" || token == "uint32") return PlyType::U32;
  if (token == "float" || token == "float32") return PlyType::F32;
  if (token == "double" || token == "float64") return PlyType::F64;
  throw ParseError("ply: unknown property type '" + token + "'");
}

struct PlyProperty {
  bool is_list = false;
  PlyType count_type = PlyType::U8;
  PlyType value_type = PlyType::F32;
  std::string name;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

struct PlyHeader {
  bool binary = false;
  std::vector<PlyElement> elements;
};

std::string next_header_line(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) {
    throw ParseError("ply: header ended before end_header");
  }
  if (!line.empty() && line.back() == '\r') {
    line.pop_back();
  }
  return line;
}

PlyHeader parse_header(std::istream& in) {
  if (next_header_line(in) != "ply") {
    throw ParseError("ply: missing magic line");
  }
  PlyHeader header;
  bool format_seen = false;
  for (;;) {
    const std::string line = next_header_line(in);
    std::istringstream tokens(line);
    std::string keyword;
    tokens >> keyword;
    if (keyword.empty() || keyword == "comment" || keyword == "obj_info") {
      continue;
    }
    if (keyword == "format") {
      std::string kind, version;
      tokens >> kind >> version;
      if (kind == "ascii") {
        header.binary = false;
      } else if (kind == "binary_little_endian") {
        header.binary = true;
      } else if (kind == "binary_big_endian") {
        throw UnsupportedFormat("ply: big-endian files are not supported");
      } else {
        throw ParseError("ply: unknown format '" + kind + "'");
      }
      format_seen = true;
    } else if (keyword == "element") {
      std::string name;
      std::uint64_t count = 0;
      if (!(tokens >> name >> count)) {
        throw ParseError("ply: malformed element line");
      }
      header.elements.push_back(PlyElement{name, static_cast<std::size_t>(count), {}});
    } else if (keyword == "property") {
      if (header.elements.empty()) {
        throw ParseError("ply: property before any element");
      }
      std::string first;
      if (!(tokens >> first)) {
        throw ParseError("ply: malformed property line");
      }
      PlyProperty prop;
      if (first == "list") {
        std::string count_type, value_type;
        if (!(tokens >> count_type >> value_type >> prop.name)) {
          throw ParseError("ply: malformed list property line");
        }
        prop.is_list = true;
        prop.count_type = parse_type(count_type);
        prop.value_type = parse_type(value_type);
      } else {
        prop.value_type = parse_type(first);
        if (!(tokens >> prop.name)) {
          throw ParseError("ply: property without a name");
        }
      }
      header.elements.back().properties.push_back(prop);
    } else if (keyword == "end_header") {
      break;
    } else {
      throw ParseError("ply: unexpected header keyword '" + keyword + "'");
    }
  }
  if (!format_seen) {
    throw ParseError("ply: header has no format line");
  }
  return header;
}

double decode_scalar(const unsigned char* bytes, PlyType type) {
  const auto load = [bytes](auto value) {
    std::memcpy(&value, bytes, sizeof(value));
    return value;
  };
  switch (type) {
    case PlyType::I8:
      return static_cast<double>(static_cast<std::int8_t>(bytes[0]));
    case PlyType::U8:
      return static_cast<double>(bytes[0]);
    case PlyType::I16:
      return static_cast<double>(load(std::int16_t{}));
    case PlyType::U16:
      return static_cast<double>(load(std::uint16_t{}));
    case PlyType::I32:
      return static_cast<double>(load(std::int32_t{}));
    case PlyType::U32:
      return static_cast<double>(load(std::uint32_t{}));
    case PlyType::F32:
      return static_cast<double>(load(float{}));
    case PlyType::F64:
      return load(double{});
  }
  return 0.0;
}

static_assert(std::endian::native == std::endian::little,
              "binary PLY decoding assumes a little-endian host");

double read_binary_scalar(std::istream& in, PlyType type) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), static_cast<std::streamsize>(type_size(type)));
  if (!in) {
    throw ParseError("ply: truncated binary body");
  }
  return decode_scalar(bytes, type);
}

double parse_double_token(std::istream& in, const char* what) {
  std::string token;
  if (!(in >> token)) {
    throw ParseError(std::string("ply: truncated body, expected ") + what);
  }
  double value = 0.0;
  const auto result = std::from_chars(token.data(), token.data() + token.size(), value);
  if (result.ec != std::errc{} || result.ptr != token.data() + token.size()) {
    throw ParseError("ply: bad numeric token '" + token + "'");
  }
  return value;
}

struct VertexLayout {
  int x = -1;
  int y = -1;
  int z = -1;
};

VertexLayout vertex_layout(const PlyElement& element) {
  VertexLayout layout;
  for (std::size_t i = 0; i < element.properties.size(); ++i) {
    const PlyProperty& prop = element.properties[i];
    if (prop.is_list) continue;
    if (prop.value_type != PlyType::F32 && prop.value_type != PlyType::F64) continue;
    if (prop.name == "x") layout.x = static_cast<int>(i);
    if (prop.name == "y") layout.y = static_cast<int>(i);
    if (prop.name == "z") layout.z = static_cast<int>(i);
  }
  if (layout.x < 0 || layout.y < 0 || layout.z < 0) {
    throw UnsupportedFormat("ply: vertex element lacks float/double x, y, z");
  }
  return layout;
}

PointCloud read_vertices_ascii(std::istream& in, const PlyElement& element) {
  const VertexLayout layout = vertex_layout(element);
  PointCloud points;
  points.reserve(std::min<std::size_t>(element.count, 1 << 20));
  for (std::size_t row = 0; row < element.count; ++row) {
    Vector3<double> p = Vector3<double>::Zero();
    for (std::size_t i = 0; i < element.properties.size(); ++i) {
      const PlyProperty& prop = element.properties[i];
      if (prop.is_list) {
        const double count = parse_double_token(in, "list count");
        if (count < 0 || count > 1e9) {
          throw ParseError("ply: implausible list count");
        }
        for (std::size_t j = 0; j < static_cast<std::size_t>(count); ++j) {
          parse_double_token(in, "list item");
        }
        continue;
      }
      const double value = parse_double_token(in, "vertex property");
      if (static_cast<int>(i) == layout.x) p.x() = value;
      if (static_cast<int>(i) == layout.y) p.y() = value;
      if (static_cast<int>(i) == layout.z) p.z() = value;
    }
    points.push_back(p);
  }
  return points;
}

PointCloud read_vertices_binary(std::istream& in, const PlyElement& element) {
  const VertexLayout layout = vertex_layout(element);
  PointCloud points;
  points.reserve(std::min<std::size_t>(element.count, 1 << 20));
  for (std::size_t row = 0; row < element.count; ++row) {
    Vector3<double> p = Vector3<double>::Zero();
    for (std::size_t i = 0; i < element.properties.size(); ++i) {
      const PlyProperty& prop = element.properties[i];
      if (prop.is_list) {
        const double count = read_binary_scalar(in, prop.count_type);
        if (count < 0 || count > 1e9) {
          throw ParseError("ply: implausible list count");
        }
        const auto skip = static_cast<std::streamsize>(count) *
                          static_cast<std::streamsize>(type_size(prop.value_type));
        in.ignore(skip);
        if (in.gcount() != skip) {
          throw ParseError("ply: truncated binary list");
        }
        continue;
      }
      const double value = read_binary_scalar(in, prop.value_type);
      if (static_cast<int>(i) == layout.x) p.x() = value;
      if (static_cast<int>(i) == layout.y) p.y() = value;
      if (static_cast<int>(i) == layout.z) p.z() = value;
    }
    points.push_back(p);
  }
  return points;
}

void skip_element_ascii(std::istream& in, const PlyElement& element) {
  for (std::size_t row = 0; row < element.count; ++row) {
    for (const PlyProperty& prop : element.properties) {
      if (prop.is_list) {
        const double count = parse_double_token(in, "list count");
        if (count < 0 || count > 1e9) {
          throw ParseError("ply: implausible list count");
        }
        for (std::size_t j = 0; j < static_cast<std::size_t>(count); ++j) {
          parse_double_token(in, "list item");
        }
      } else {
        parse_double_token(in, "skipped property");
      }
    }
  }
}

void skip_element_binary(std::istream& in, const PlyElement& element) {
  bool fixed = true;
  std::size_t row_size = 0;
  for (const PlyProperty& prop : element.properties) {
    if (prop.is_list) {
      fixed = false;
      break;
    }
    row_size += type_size(prop.value_type);
  }
  if (fixed) {
    const auto skip = static_cast<std::streamsize>(element.count) *
                      static_cast<std::streamsize>(row_size);
    in.ignore(skip);
    if (in.gcount() != skip) {
      throw ParseError("ply: truncated binary element");
    }
    return;
  }
  for (std::size_t row = 0; row < element.count; ++row) {
    for (const PlyProperty& prop : element.properties) {
      if (prop.is_list) {
        const double count = read_binary_scalar(in, prop.count_type);
        if (count < 0 || count > 1e9) {
          throw ParseError("ply: implausible list count");
        }
        const auto skip = static_cast<std::streamsize>(count) *
                          static_cast<std::streamsize>(type_size(prop.value_type));
        in.ignore(skip);
        if (in.gcount() != skip) {
          throw ParseError("ply: truncated binary list");
        }
      } else {
        read_binary_scalar(in, prop.value_type);
      }
    }
  }
}

}  // namespace

PointCloud read_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open '" + path.string() + "' for reading");
  }
  const PlyHeader header = parse_header(in);
  for (const PlyElement& element : header.elements) {
    if (element.name == "vertex") {
      return header.binary ? read_vertices_binary(in, element)
                           : read_vertices_ascii(in, element);
    }
    if (header.binary) {
      skip_element_binary(in, element);
    } else {
      skip_element_ascii(in, element);
    }
  }
  throw ParseError("ply: no vertex element");
}

void write_ply(const std::filesystem::path& path, const PointCloud& points) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open '" + path.string() + "' for writing");
  }
  out << "ply\nformat ascii 1.0\nelement vertex " << points.size()
      << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
  for (const auto& p : points) {
    out << detail::format_double(p.x()) << ' ' << detail::format_double(p.y()) << ' '
        << detail::format_double(p.z()) << '\n';
  }
  if (!out) {
    throw IoError("failed writing '" + path.string() + "'");
  }
}

std::vector<Posed> read_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open '" + path.string() + "' for reading");
  }
  std::vector<Posed> poses;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    std::istringstream tokens(line);
    std::string first;
    if (!(tokens >> first) || first[0] == '#') {
      continue;
    }
    long index = 0;
    auto idx = std::from_chars(first.data(), first.data() + first.size(), index);
    if (idx.ec != std::errc{} || idx.ptr != first.data() + first.size()) {
      throw ParseError("trajectory line " + std::to_string(line_no) + ": bad index '" + first +
                       "'");
    }
    double v[7];
    for (double& value : v) {
      std::string token;
      if (!(tokens >> token)) {
        throw ParseError("trajectory line " + std::to_string(line_no) + ": expected 8 fields");
      }
      const auto res = std::from_chars(token.data(), token.data() + token.size(), value);
      if (res.ec != std::errc{} || res.ptr != token.data() + token.size()) {
        throw ParseError("trajectory line " + std::to_string(line_no) + ": bad number '" + token +
                         "'");
      }
    }
    std::string extra;
    if (tokens >> extra) {
      throw ParseError("trajectory line " + std::to_string(line_no) + ": trailing data");
    }
    Eigen::Quaterniond q(v[6], v[3], v[4], v[5]);  // file order x y z w
    const double norm = q.norm();
    if (std::abs(norm - 1.0) > 1e-3) {
      throw NonUnitQuaternion("trajectory line " + std::to_string(line_no) +
                              ": quaternion norm " + detail::format_double(norm));
    }
    q.normalize();
    Posed pose;
    pose.rotation = q.toRotationMatrix();
    pose.translation = Vector3<double>(v[0], v[1], v[2]);
    poses.push_back(pose);
  }
  return poses;
}

void write_trajectory(const std::filesystem::path& path, const std::vector<Posed>& poses) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot open '" + path.string() + "' for writing");
  }
  out << "# index tx ty tz qx qy qz qw\n";
  for (std::size_t k = 0; k < poses.size(); ++k) {
    Eigen::Quaterniond q(poses[k].rotation);
    if (q.w() < 0.0) {
      q.coeffs() = -q.coeffs();
    }
    out << k << ' ' << detail::format_double(poses[k].translation.x()) << ' '
        << detail::format_double(poses[k].translation.y()) << ' '
        << detail::format_double(poses[k].translation.z()) << ' '
        << detail::format_double(q.x()) << ' ' << detail::format_double(q.y()) << ' '
        << detail::format_double(q.z()) << ' ' << detail::format_double(q.w()) << '\n';
  }
  if (!out) {
    throw IoError("failed writing '" + path.string() + "'");
  }
}

}  // namespace mvreg
