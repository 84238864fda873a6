#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "evk/error.hpp"
#include "evk/mesh.hpp"

namespace evk {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

double parse_double(std::string_view s, std::size_t line) {
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    throw Error(ErrorKind::ParseError, "bad number '" + std::string(s) + "' on line " + std::to_string(line));
  return v;
}

long parse_long(std::string_view s, std::size_t line) {
  long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw Error(ErrorKind::ParseError, "bad index '" + std::string(s) + "' on line " + std::to_string(line));
  return v;
}

// Drops faces with repeated indices or zero area relative to the mesh extent.
LoadedMesh finish(std::vector<Vec3> vertices, const std::vector<Triangle>& faces,
                  std::optional<std::vector<Vec3>> normals) {
  LoadedMesh out;
  Vec3 lo{INFINITY, INFINITY, INFINITY}, hi{-INFINITY, -INFINITY, -INFINITY};
  for (const auto& v : vertices)
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], v[a]);
      hi[a] = std::max(hi[a], v[a]);
    }
  double extent = 0;
  if (!vertices.empty())
    for (int a = 0; a < 3; ++a) extent = std::max(extent, hi[a] - lo[a]);
  const double min_area = 1e-12 * extent * extent;

  out.mesh.vertices = std::move(vertices);
  for (const auto& t : faces) {
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) {
      ++out.dropped_faces;
      continue;
    }
    const auto& v = out.mesh.vertices;
    const double area = 0.5 * norm(cross(v[t[1]] - v[t[0]], v[t[2]] - v[t[0]]));
    if (!(area > min_area)) {
      ++out.dropped_faces;
      continue;
    }
    out.mesh.triangles.push_back(t);
  }
  if (out.mesh.triangles.empty()) throw Error(ErrorKind::EmptyMesh, "mesh has no valid triangles");

  if (normals) {
    bool usable = normals->size() == out.mesh.vertices.size();
    for (auto& n : *normals) {
      const double len = norm(n);
      if (!(len > 0)) {
        usable = false;
        break;
      }
      n *= 1.0 / len;
    }
    if (usable) out.mesh.normals = std::move(normals);
  }
  return out;
}

enum class PlyType { I8, U8, I16, U16, I32, U32, F32, F64 };

std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::I8:
    case PlyType::U8: return 1;
    case PlyType::I16:
    case PlyType::U16: return 2;
    case PlyType::I32:
    case PlyType::U32:
    case PlyType::F32: return 4;
    case PlyType::F64: return 8;
  }
  return 0;
}

PlyType ply_type(std::string_view name) {
  if (name == "char" || name == "int8") return PlyType::I8;
  if (name == "uchar" || name == "uint8") return PlyType::U8;
  if (name == "short" || name == "int16") return PlyType::I16;
  if (name == "ushort" || name == "uint16") return PlyType::U16;
  if (name == "int" || name == "int32") return PlyType::I32;
  if (name == "uint" || name == "uint32") return PlyType::U32;
  if (name == "float" || name == "float32") return PlyType::F32;
  if (name == "double" || name == "float64") return PlyType::F64;
  throw Error(ErrorKind::ParseError, "unknown PLY type '" + std::string(name) + "'");
}

struct PlyProperty {
  std::string name;
  bool is_list = false;
  PlyType count_type = PlyType::U8;
  PlyType type = PlyType::F32;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes, std::size_t pos) : bytes_(bytes), pos_(pos) {}

  double read(PlyType t) {
    const auto n = ply_size(t);
    if (bytes_.size() - pos_ < n) throw Error(ErrorKind::ParseError, "PLY body is truncated");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    switch (t) {
      case PlyType::I8: return static_cast<double>(static_cast<std::int8_t>(*p));
      case PlyType::U8: return static_cast<double>(static_cast<std::uint8_t>(*p));
      case PlyType::I16: return load<std::int16_t>(p);
      case PlyType::U16: return load<std::uint16_t>(p);
      case PlyType::I32: return load<std::int32_t>(p);
      case PlyType::U32: return load<std::uint32_t>(p);
      case PlyType::F32: return load<float>(p);
      case PlyType::F64: return load<double>(p);
    }
    return 0;
  }

 private:
  template <class T>
  static double load(const char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return static_cast<double>(v);
  }

  std::string_view bytes_;
  std::size_t pos_;
};

}  // namespace

LoadedMesh parse_obj(std::string_view text) {
  std::vector<Vec3> vertices;
  std::vector<Triangle> faces;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = trim(line.substr(0, hash));
    if (line.empty()) continue;

    const auto tok = split_ws(line);
    if (tok[0] == "v") {
      if (tok.size() < 4) throw Error(ErrorKind::ParseError, "vertex needs 3 coordinates on line " + std::to_string(line_no));
      vertices.push_back({parse_double(tok[1], line_no), parse_double(tok[2], line_no), parse_double(tok[3], line_no)});
    } else if (tok[0] == "f") {
      if (tok.size() < 4) throw Error(ErrorKind::ParseError, "face needs >= 3 vertices on line " + std::to_string(line_no));
      std::vector<std::uint32_t> idx;
      for (std::size_t k = 1; k < tok.size(); ++k) {
        auto ref = tok[k].substr(0, tok[k].find('/'));
        long i = parse_long(ref, line_no);
        const long n = static_cast<long>(vertices.size());
        if (i < 0) i = n + i + 1;
        if (i < 1 || i > n)
          throw Error(ErrorKind::ParseError, "face index out of range on line " + std::to_string(line_no));
        idx.push_back(static_cast<std::uint32_t>(i - 1));
      }
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) faces.push_back({idx[0], idx[k], idx[k + 1]});
    }
    // vt, vn, o, g, s, usemtl, mtllib: ignored
  }
  return finish(std::move(vertices), faces, std::nullopt);
}

LoadedMesh parse_ply(std::string_view bytes) {
  const auto header_end = bytes.find("end_header");
  if (bytes.substr(0, 3) != "ply" || header_end == std::string_view::npos)
    throw Error(ErrorKind::ParseError, "missing PLY header");
  auto body = bytes.find('\n', header_end);
  if (body == std::string_view::npos) throw Error(ErrorKind::ParseError, "PLY header is truncated");
  ++body;

  std::vector<PlyElement> elements;
  bool binary_le = false;
  std::istringstream header{std::string(bytes.substr(0, header_end))};
  std::string raw;
  while (std::getline(header, raw)) {
    const auto tok = split_ws(trim(raw));
    if (tok.empty()) continue;
    if (tok[0] == "format") {
      if (tok.size() < 2 || tok[1] != "binary_little_endian")
        throw Error(ErrorKind::ParseError, "only binary_little_endian PLY is supported");
      binary_le = true;
    } else if (tok[0] == "element") {
      if (tok.size() < 3) throw Error(ErrorKind::ParseError, "bad PLY element line");
      elements.push_back({std::string(tok[1]), static_cast<std::size_t>(parse_long(tok[2], 0)), {}});
    } else if (tok[0] == "property") {
      if (elements.empty()) throw Error(ErrorKind::ParseError, "PLY property outside element");
      PlyProperty prop;
      if (tok.size() >= 5 && tok[1] == "list") {
        prop.is_list = true;
        prop.count_type = ply_type(tok[2]);
        prop.type = ply_type(tok[3]);
        prop.name = tok[4];
      } else if (tok.size() >= 3) {
        prop.type = ply_type(tok[1]);
        prop.name = tok[2];
      } else {
        throw Error(ErrorKind::ParseError, "bad PLY property line");
      }
      elements.back().properties.push_back(prop);
    }
  }
  if (!binary_le) throw Error(ErrorKind::ParseError, "PLY format line missing");

  std::vector<Vec3> vertices;
  std::vector<Vec3> normals;
  bool has_normals = false;
  std::vector<Triangle> faces;
  ByteReader reader(bytes, body);
  for (const auto& el : elements) {
    const bool is_vertex = el.name == "vertex";
    const bool is_face = el.name == "face";
    if (is_vertex) {
      has_normals = std::count_if(el.properties.begin(), el.properties.end(), [](const PlyProperty& p) {
                      return p.name == "nx" || p.name == "ny" || p.name == "nz";
                    }) == 3;
    }
    for (std::size_t i = 0; i < el.count; ++i) {
      Vec3 p, n;
      for (const auto& prop : el.properties) {
        if (prop.is_list) {
          const auto count = static_cast<long>(reader.read(prop.count_type));
          std::vector<std::uint32_t> idx;
          for (long k = 0; k < count; ++k) {
            const double v = reader.read(prop.type);
            if (is_face && (v < 0 || v >= static_cast<double>(vertices.size())))
              throw Error(ErrorKind::ParseError, "PLY face index out of range");
            idx.push_back(static_cast<std::uint32_t>(v));
          }
          if (is_face && (prop.name == "vertex_indices" || prop.name == "vertex_index")) {
            if (idx.size() < 3) throw Error(ErrorKind::ParseError, "PLY face with fewer than 3 vertices");
            for (std::size_t k = 1; k + 1 < idx.size(); ++k) faces.push_back({idx[0], idx[k], idx[k + 1]});
          }
          continue;
        }
        const double v = reader.read(prop.type);
        if (!is_vertex) continue;
        if (prop.name == "x") p.x = v;
        else if (prop.name == "y") p.y = v;
        else if (prop.name == "z") p.z = v;
        else if (prop.name == "nx") n.x = v;
        else if (prop.name == "ny") n.y = v;
        else if (prop.name == "nz") n.z = v;
      }
      if (is_vertex) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
          throw Error(ErrorKind::ParseError, "non-finite PLY vertex");
        vertices.push_back(p);
        normals.push_back(n);
      }
    }
  }
  std::optional<std::vector<Vec3>> maybe_normals;
  if (has_normals) maybe_normals = std::move(normals);
  return finish(std::move(vertices), faces, std::move(maybe_normals));
}

LoadedMesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".ply" || (ext != ".obj" && bytes.rfind("ply", 0) == 0)) return parse_ply(bytes);
  return parse_obj(bytes);
}

void save_obj(const std::filesystem::path& path, const TriMesh& mesh) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  out << std::setprecision(17);
  for (const auto& v : mesh.vertices) out << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  if (!out) throw Error(ErrorKind::IoError, "write failed: " + path.string());
}

}  // namespace evk
