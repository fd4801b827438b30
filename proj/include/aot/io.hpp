#pragma once

// File formats: point clouds as PLY (written binary little-endian float64,
// read binary little-endian or ascii with any scalar vertex properties),
// meshes as Wavefront OBJ.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "aot/cloud.hpp"
#include "aot/errors.hpp"

namespace aot {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& data) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

namespace detail {

template <class T>
void put_le(std::string& out, T v) {
  static_assert(std::endian::native == std::endian::little, "PLY writer assumes a little-endian host");
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

struct PlyProperty {
  std::string name;
  std::string type;
  std::size_t size = 0;
};

inline std::size_t ply_type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" || t == "float32") return 4;
  if (t == "double" || t == "float64") return 8;
  return 0;
}

inline double ply_decode(const char* p, const std::string& t) {
  auto get = [p]<class T>(T) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return static_cast<double>(v);
  };
  if (t == "char" || t == "int8") return get(std::int8_t{});
  if (t == "uchar" || t == "uint8") return get(std::uint8_t{});
  if (t == "short" || t == "int16") return get(std::int16_t{});
  if (t == "ushort" || t == "uint16") return get(std::uint16_t{});
  if (t == "int" || t == "int32") return get(std::int32_t{});
  if (t == "uint" || t == "uint32") return get(std::uint32_t{});
  if (t == "float" || t == "float32") return get(float{});
  return get(double{});
}

}  // namespace detail

// Binary little-endian PLY with float64 x, y, z and, for labelled clouds,
// an int label property whose names are listed in "comment label" lines.
// `comments` become extra single-line header comments.
inline std::string encode_ply(const PointCloud& cloud, const std::vector<std::string>& comments = {}) {
  std::string out = "ply\nformat binary_little_endian 1.0\n";
  for (const auto& c : comments) {
    if (c.find('\n') != std::string::npos) throw DomainError("PLY comments must be single lines");
    out += "comment " + c + "\n";
  }
  for (std::size_t i = 0; i < cloud.label_names.size() && cloud.has_labels(); ++i)
    out += "comment label " + std::to_string(i) + " " + cloud.label_names[i] + "\n";
  out += "element vertex " + std::to_string(cloud.size()) + "\n";
  out += "property double x\nproperty double y\nproperty double z\n";
  if (cloud.has_labels()) out += "property int label\n";
  out += "end_header\n";
  out.reserve(out.size() + cloud.size() * 28);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (std::size_t k = 0; k < 3; ++k) detail::put_le(out, cloud.points[i][k]);
    if (cloud.has_labels()) detail::put_le(out, static_cast<std::int32_t>(cloud.labels[i]));
  }
  return out;
}

inline PointCloud decode_ply(const std::string& data, const std::string& source = "ply") {
  auto fail = [&](const std::string& msg) { return ParseError(source + ": " + msg); };
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&]() -> std::string {
    const std::size_t nl = data.find('\n', pos);
    if (nl == std::string::npos) throw fail("header ends before end_header");
    std::string line = data.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = nl + 1;
    ++line_no;
    return line;
  };
  if (next_line() != "ply") throw fail("line 1: missing 'ply' magic");
  bool binary = false, have_format = false, in_vertex = false;
  std::size_t count = 0;
  std::vector<detail::PlyProperty> props;
  std::vector<std::string> label_names;
  for (;;) {
    const std::string line = next_line();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (word == "end_header") break;
    if (word == "comment") {
      std::string tag, name;
      std::size_t idx = 0;
      if (ls >> tag >> idx >> name && tag == "label") {
        if (label_names.size() <= idx) label_names.resize(idx + 1);
        label_names[idx] = name;
      }
      continue;
    }
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "binary_little_endian") binary = true;
      else if (fmt != "ascii") throw fail(where + "unsupported format '" + fmt + "'");
      have_format = true;
    } else if (word == "element") {
      std::string name;
      long long n = -1;
      ls >> name >> n;
      if (name == "vertex") {
        if (n < 0) throw fail(where + "bad vertex count");
        count = static_cast<std::size_t>(n);
        in_vertex = true;
      } else {
        in_vertex = false;
      }
    } else if (word == "property") {
      if (!in_vertex) continue;
      std::string type, name;
      ls >> type >> name;
      if (type == "list") throw fail(where + "list properties on vertices are not supported");
      const std::size_t sz = detail::ply_type_size(type);
      if (sz == 0) throw fail(where + "unknown property type '" + type + "'");
      props.push_back({name, type, sz});
    } else if (!word.empty() && word != "obj_info") {
      throw fail(where + "unexpected header keyword '" + word + "'");
    }
  }
  if (!have_format) throw fail("missing format line");
  int ix = -1, iy = -1, iz = -1, il = -1;
  std::size_t stride = 0;
  std::vector<std::size_t> offset;
  for (std::size_t i = 0; i < props.size(); ++i) {
    offset.push_back(stride);
    stride += props[i].size;
    if (props[i].name == "x") ix = static_cast<int>(i);
    if (props[i].name == "y") iy = static_cast<int>(i);
    if (props[i].name == "z") iz = static_cast<int>(i);
    if (props[i].name == "label") il = static_cast<int>(i);
  }
  if (ix < 0 || iy < 0 || iz < 0) throw fail("vertex element lacks x/y/z");
  PointCloud cloud;
  cloud.points.resize(count);
  if (il >= 0) {
    cloud.labels.resize(count);
    cloud.label_names = label_names;
  }
  if (binary) {
    if (data.size() - pos < count * stride)
      throw fail("truncated: expected " + std::to_string(count) + " vertices, file holds " +
                 std::to_string((data.size() - pos) / std::max<std::size_t>(stride, 1)));
    const char* base = data.data() + pos;
    for (std::size_t i = 0; i < count; ++i) {
      const char* row = base + i * stride;
      cloud.points[i] = {detail::ply_decode(row + offset[ix], props[ix].type),
                         detail::ply_decode(row + offset[iy], props[iy].type),
                         detail::ply_decode(row + offset[iz], props[iz].type)};
      if (il >= 0) cloud.labels[i] = static_cast<int>(detail::ply_decode(row + offset[il], props[il].type));
    }
  } else {
    std::istringstream body(data.substr(pos));
    std::vector<double> row(props.size());
    for (std::size_t i = 0; i < count; ++i) {
      for (auto& v : row)
        if (!(body >> v)) throw fail("truncated: vertex " + std::to_string(i) + " incomplete");
      cloud.points[i] = {row[ix], row[iy], row[iz]};
      if (il >= 0) cloud.labels[i] = static_cast<int>(row[il]);
    }
  }
  for (std::size_t i = 0; i < count; ++i) {
    const Vec3d& p = cloud.points[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
      throw fail("vertex " + std::to_string(i) + " is not finite");
    if (il >= 0 && (cloud.labels[i] < -1 || cloud.labels[i] >= static_cast<int>(cloud.label_names.size())))
      throw fail("vertex " + std::to_string(i) + " has an undeclared label");
  }
  return cloud;
}

inline void write_ply(const std::filesystem::path& path, const PointCloud& cloud,
                      const std::vector<std::string>& comments = {}) {
  write_file(path, encode_ply(cloud, comments));
}

inline PointCloud read_ply(const std::filesystem::path& path) { return decode_ply(read_file(path), path.string()); }

inline std::string encode_obj(const TriMesh& mesh, const std::vector<std::string>& comments = {}) {
  std::string out;
  for (const auto& c : comments) {
    if (c.find('\n') != std::string::npos) throw DomainError("OBJ comments must be single lines");
    out += "# " + c + "\n";
  }
  char buf[96];
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", v.x, v.y, v.z);
    out += buf;
  }
  for (const auto& t : mesh.triangles) {
    std::snprintf(buf, sizeof buf, "f %u %u %u\n", t[0] + 1, t[1] + 1, t[2] + 1);
    out += buf;
  }
  return out;
}

inline void write_obj(const std::filesystem::path& path, const TriMesh& mesh,
                      const std::vector<std::string>& comments = {}) {
  write_file(path, encode_obj(mesh, comments));
}

}  // namespace aot
