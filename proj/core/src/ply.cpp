#include "travmap/ply.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "travmap/errors.hpp"

namespace travmap {

namespace {

enum class PType { I8, U8, I16, U16, I32, U32, F32, F64 };

std::size_t scalar_size(PType t) {
  switch (t) {
    case PType::I8:
    case PType::U8:
      return 1;
    case PType::I16:
    case PType::U16:
      return 2;
    case PType::I32:
    case PType::U32:
    case PType::F32:
      return 4;
    case PType::F64:
      return 8;
  }
  return 0;
}

bool parse_type(const std::string& word, PType& out) {
  if (word == "char" || word == "int8") out = PType::I8;
  else if (word == "uchar" || word == "uint8") out = PType::U8;
  else if (word == "short" || word == "int16") out = PType::I16;
  else if (word == "ushort" || word == "uint16") out = PType::U16;
  else if (word == "int" || word == "int32") out = PType::I32;
  else if (word == "uint" || word == "uint32") out = PType::U32;
  else if (word == "float" || word == "float32") out = PType::F32;
  else if (word == "double" || word == "float64") out = PType::F64;
  else return false;
  return true;
}

struct Prop {
  std::string name;
  bool is_list = false;
  PType count_type = PType::U8;
  PType type = PType::F64;
};

struct Elem {
  std::string name;
  std::size_t count = 0;
  std::vector<Prop> props;
};

template <typename T>
double decode(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return static_cast<double>(v);
}

// Pulls scalars out of either representation of the body. Ascii consumes
// whitespace-separated tokens; binary advances a little-endian cursor.
class ValueReader {
 public:
  ValueReader(const std::string& path, const std::string& buffer,
              std::size_t body_offset, bool binary)
      : path_(path), buf_(buffer), cur_(body_offset), binary_(binary) {}

  double next(PType t) {
    if (binary_) return next_binary(t);
    return next_ascii();
  }

 private:
  double next_binary(PType t) {
    const std::size_t n = scalar_size(t);
    if (cur_ + n > buf_.size()) {
      throw MalformedFile(path_, 0, "truncated binary body");
    }
    const char* p = buf_.data() + cur_;
    cur_ += n;
    switch (t) {
      case PType::I8: return decode<std::int8_t>(p);
      case PType::U8: return decode<std::uint8_t>(p);
      case PType::I16: return decode<std::int16_t>(p);
      case PType::U16: return decode<std::uint16_t>(p);
      case PType::I32: return decode<std::int32_t>(p);
      case PType::U32: return decode<std::uint32_t>(p);
      case PType::F32: return decode<float>(p);
      case PType::F64: return decode<double>(p);
    }
    return 0.0;
  }

  double next_ascii() {
    while (cur_ < buf_.size() && std::isspace(static_cast<unsigned char>(buf_[cur_]))) ++cur_;
    if (cur_ >= buf_.size()) throw MalformedFile(path_, 0, "truncated ascii body");
    std::size_t start = cur_;
    while (cur_ < buf_.size() && !std::isspace(static_cast<unsigned char>(buf_[cur_]))) ++cur_;
    const std::string tok = buf_.substr(start, cur_ - start);
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0') {
      throw MalformedFile(path_, 0, "non-numeric token '" + tok + "' in body");
    }
    return v;
  }

  const std::string& path_;
  const std::string& buf_;
  std::size_t cur_;
  bool binary_;
};

std::vector<std::string> split_words(const std::string& line) {
  std::vector<std::string> words;
  std::istringstream ss(line);
  std::string w;
  while (ss >> w) words.push_back(w);
  return words;
}

}  // namespace

PlyData read_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInput(path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  // --- header ---
  std::size_t pos = 0;
  int line_no = 0;
  auto next_line = [&]() -> std::string {
    if (pos >= buf.size()) throw MalformedFile(path, line_no, "unexpected end of header");
    std::size_t nl = buf.find('\n', pos);
    if (nl == std::string::npos) nl = buf.size();
    std::string line = buf.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };

  if (next_line() != "ply") throw MalformedFile(path, 1, "missing 'ply' magic");
  bool binary = false;
  bool saw_format = false;
  std::vector<Elem> elems;
  for (;;) {
    const std::string line = next_line();
    if (line == "end_header") break;
    const auto words = split_words(line);
    if (words.empty()) continue;
    if (words[0] == "comment" || words[0] == "obj_info") continue;
    if (words[0] == "format") {
      if (words.size() < 2) throw MalformedFile(path, line_no, "malformed format line");
      if (words[1] == "ascii") binary = false;
      else if (words[1] == "binary_little_endian") binary = true;
      else throw MalformedFile(path, line_no, "unsupported format '" + words[1] + "'");
      saw_format = true;
    } else if (words[0] == "element") {
      if (words.size() != 3) throw MalformedFile(path, line_no, "malformed element line");
      Elem e;
      e.name = words[1];
      try {
        e.count = std::stoull(words[2]);
      } catch (const std::exception&) {
        throw MalformedFile(path, line_no, "bad element count '" + words[2] + "'");
      }
      elems.push_back(std::move(e));
    } else if (words[0] == "property") {
      if (elems.empty()) throw MalformedFile(path, line_no, "property before any element");
      Prop p;
      if (words.size() >= 2 && words[1] == "list") {
        if (words.size() != 5) throw MalformedFile(path, line_no, "malformed list property");
        p.is_list = true;
        if (!parse_type(words[2], p.count_type) || !parse_type(words[3], p.type)) {
          throw MalformedFile(path, line_no, "unknown property type in '" + line + "'");
        }
        p.name = words[4];
      } else {
        if (words.size() != 3) throw MalformedFile(path, line_no, "malformed property line");
        if (!parse_type(words[1], p.type)) {
          throw MalformedFile(path, line_no, "unknown property type '" + words[1] + "'");
        }
        p.name = words[2];
      }
      elems.back().props.push_back(std::move(p));
    } else {
      throw MalformedFile(path, line_no, "unrecognized header line '" + line + "'");
    }
  }
  if (!saw_format) throw MalformedFile(path, line_no, "missing format line");

  // --- body ---
  PlyData out;
  ValueReader reader(path, buf, pos, binary);
  for (const Elem& e : elems) {
    if (e.name == "vertex") {
      int ix = -1, iy = -1, iz = -1, inx = -1, iny = -1, inz = -1;
      int ii = -1, ir = -1, ig = -1, ib = -1;
      for (std::size_t p = 0; p < e.props.size(); ++p) {
        const std::string& n = e.props[p].name;
        if (e.props[p].is_list) continue;
        if (n == "x") ix = int(p);
        else if (n == "y") iy = int(p);
        else if (n == "z") iz = int(p);
        else if (n == "nx") inx = int(p);
        else if (n == "ny") iny = int(p);
        else if (n == "nz") inz = int(p);
        else if (n == "intensity") ii = int(p);
        else if (n == "red") ir = int(p);
        else if (n == "green") ig = int(p);
        else if (n == "blue") ib = int(p);
      }
      if (ix < 0 || iy < 0 || iz < 0) {
        throw MalformedFile(path, 0, "vertex element lacks x/y/z properties");
      }
      const bool with_normals = inx >= 0 && iny >= 0 && inz >= 0;
      const bool with_colors = ir >= 0 && ig >= 0 && ib >= 0;
      out.points.reserve(e.count);
      std::vector<double> row(e.props.size());
      for (std::size_t v = 0; v < e.count; ++v) {
        for (std::size_t p = 0; p < e.props.size(); ++p) {
          if (e.props[p].is_list) {
            const auto n = static_cast<std::size_t>(reader.next(e.props[p].count_type));
            for (std::size_t j = 0; j < n; ++j) reader.next(e.props[p].type);
            row[p] = 0.0;
          } else {
            row[p] = reader.next(e.props[p].type);
          }
        }
        out.points.emplace_back(row[ix], row[iy], row[iz]);
        if (with_normals) out.normals.emplace_back(row[inx], row[iny], row[inz]);
        if (ii >= 0) out.intensities.push_back(row[ii]);
        if (with_colors) {
          out.colors.push_back({static_cast<std::uint8_t>(row[ir]),
                                static_cast<std::uint8_t>(row[ig]),
                                static_cast<std::uint8_t>(row[ib])});
        }
      }
    } else if (e.name == "face") {
      out.faces.reserve(e.count);
      for (std::size_t f = 0; f < e.count; ++f) {
        for (const Prop& p : e.props) {
          if (p.is_list) {
            const auto n = static_cast<std::size_t>(reader.next(p.count_type));
            if (p.name == "vertex_indices" || p.name == "vertex_index") {
              if (n != 3) throw MalformedFile(path, 0, "only triangular faces are supported");
              std::array<std::uint32_t, 3> tri{};
              for (int j = 0; j < 3; ++j) {
                const double v = reader.next(p.type);
                if (v < 0 || v >= double(out.points.size())) {
                  throw MalformedFile(path, 0, "face index out of range");
                }
                tri[std::size_t(j)] = static_cast<std::uint32_t>(v);
              }
              out.faces.push_back(tri);
            } else {
              for (std::size_t j = 0; j < n; ++j) reader.next(p.type);
            }
          } else {
            reader.next(p.type);
          }
        }
      }
    } else {
      // unknown element: consume and discard its data
      for (std::size_t r = 0; r < e.count; ++r) {
        for (const Prop& p : e.props) {
          if (p.is_list) {
            const auto n = static_cast<std::size_t>(reader.next(p.count_type));
            for (std::size_t j = 0; j < n; ++j) reader.next(p.type);
          } else {
            reader.next(p.type);
          }
        }
      }
    }
  }
  return out;
}

void write_ply(const std::string& path, const PlyData& data, bool binary) {
  if (data.has_normals() && data.normals.size() != data.points.size()) {
    throw Error("normal count does not match point count");
  }
  if (data.has_intensity() && data.intensities.size() != data.points.size()) {
    throw Error("intensity count does not match point count");
  }
  if (data.has_colors() && data.colors.size() != data.points.size()) {
    throw Error("color count does not match point count");
  }
  std::ofstream outf(path, std::ios::binary);
  if (!outf) throw Error("failed to open '" + path + "' for writing");

  std::ostringstream head;
  head << "ply\n"
       << "format " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n"
       << "element vertex " << data.points.size() << "\n"
       << "property double x\nproperty double y\nproperty double z\n";
  if (data.has_normals()) {
    head << "property double nx\nproperty double ny\nproperty double nz\n";
  }
  if (data.has_intensity()) head << "property double intensity\n";
  if (data.has_colors()) {
    head << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  }
  if (!data.faces.empty()) {
    head << "element face " << data.faces.size() << "\n"
         << "property list uchar int vertex_indices\n";
  }
  head << "end_header\n";
  outf << head.str();

  if (binary) {
    std::string body;
    body.reserve(data.points.size() * 3 * sizeof(double));
    auto put = [&body](const void* p, std::size_t n) {
      body.append(static_cast<const char*>(p), n);
    };
    for (std::size_t i = 0; i < data.points.size(); ++i) {
      double v[3] = {data.points[i].x(), data.points[i].y(), data.points[i].z()};
      put(v, sizeof(v));
      if (data.has_normals()) {
        double n[3] = {data.normals[i].x(), data.normals[i].y(), data.normals[i].z()};
        put(n, sizeof(n));
      }
      if (data.has_intensity()) put(&data.intensities[i], sizeof(double));
      if (data.has_colors()) put(data.colors[i].data(), 3);
    }
    for (const auto& f : data.faces) {
      const std::uint8_t n = 3;
      put(&n, 1);
      std::int32_t idx[3] = {std::int32_t(f[0]), std::int32_t(f[1]), std::int32_t(f[2])};
      put(idx, sizeof(idx));
    }
    outf.write(body.data(), std::streamsize(body.size()));
  } else {
    char num[32];
    std::string line;
    auto put_num = [&line, &num](double v) {
      std::snprintf(num, sizeof(num), "%.17g", v);
      if (!line.empty()) line += ' ';
      line += num;
    };
    for (std::size_t i = 0; i < data.points.size(); ++i) {
      line.clear();
      put_num(data.points[i].x());
      put_num(data.points[i].y());
      put_num(data.points[i].z());
      if (data.has_normals()) {
        put_num(data.normals[i].x());
        put_num(data.normals[i].y());
        put_num(data.normals[i].z());
      }
      if (data.has_intensity()) put_num(data.intensities[i]);
      if (data.has_colors()) {
        for (int c = 0; c < 3; ++c) {
          if (!line.empty()) line += ' ';
          line += std::to_string(int(data.colors[i][std::size_t(c)]));
        }
      }
      line += '\n';
      outf << line;
    }
    for (const auto& f : data.faces) {
      outf << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
    }
  }
  if (!outf) throw Error("failed while writing '" + path + "'");
}

}  // namespace travmap
