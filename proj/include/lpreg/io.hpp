#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lpreg/reference_fit.hpp"
#include "lpreg/types.hpp"

namespace lpreg {

namespace detail {

inline std::uint32_t bswap32(std::uint32_t u) {
  return (u >> 24) | ((u >> 8) & 0xff00u) | ((u << 8) & 0xff0000u) | (u << 24);
}

inline std::uint32_t f32_bits_le(float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  if constexpr (std::endian::native == std::endian::big) u = bswap32(u);
  return u;
}

inline float f32_from_bits_le(std::uint32_t u) {
  if constexpr (std::endian::native == std::endian::big) u = bswap32(u);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

[[noreturn]] inline void io_fail(const std::string& path, const std::string& what,
                                 std::streamoff offset = -1) {
  std::string msg = path + ": " + what;
  if (offset >= 0) msg += " (byte offset " + std::to_string(offset) + ")";
  throw std::runtime_error(msg);
}

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

}  // namespace detail

/// Writes through a temporary file and renames into place, so readers never see
/// a partial file.
inline void atomic_write(const std::string& path,
                         const std::function<void(std::ostream&)>& writer) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error(tmp + ": cannot open for writing");
    writer(os);
    os.flush();
    if (!os) throw std::runtime_error(tmp + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// .lpm — label probability map.
// ASCII header "LPM1\n<W> <H> <K>\n<label names space-separated>\n" followed by
// K row-major planes of little-endian float32.
// ---------------------------------------------------------------------------

inline void write_lpm(const std::string& path, const LabelProbMap& map) {
  map.validate();
  atomic_write(path, [&map](std::ostream& os) {
    os << "LPM1\n" << map.width << " " << map.height << " " << map.labels.size() << "\n";
    for (std::size_t j = 0; j < map.labels.size(); ++j)
      os << (j ? " " : "") << map.labels.names[j];
    os << "\n";
    std::vector<std::uint32_t> buf(map.planes.size());
    for (std::size_t i = 0; i < map.planes.size(); ++i)
      buf[i] = detail::f32_bits_le(map.planes[i]);
    os.write(reinterpret_cast<const char*>(buf.data()),
             std::streamsize(buf.size() * 4));
  });
}

inline LabelProbMap read_lpm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) detail::io_fail(path, "cannot open");
  std::string magic;
  if (!std::getline(is, magic) || magic != "LPM1") detail::io_fail(path, "bad magic", 0);
  std::string dims_line;
  if (!std::getline(is, dims_line)) detail::io_fail(path, "truncated header", is.tellg());
  LabelProbMap map;
  long k = 0;
  {
    std::istringstream ds(dims_line);
    if (!(ds >> map.width >> map.height >> k) || map.width <= 0 || map.height <= 0 ||
        k <= 0)
      detail::io_fail(path, "bad dimensions line '" + dims_line + "'", 5);
  }
  std::string labels_line;
  if (!std::getline(is, labels_line)) detail::io_fail(path, "truncated header", is.tellg());
  map.labels.names = detail::split_ws(labels_line);
  if (long(map.labels.names.size()) != k)
    detail::io_fail(path, "header declares " + std::to_string(k) + " labels but " +
                              std::to_string(map.labels.names.size()) + " names given");
  const std::size_t count = map.plane_size() * std::size_t(k);
  std::vector<std::uint32_t> buf(count);
  const std::streamoff payload_start = is.tellg();
  is.read(reinterpret_cast<char*>(buf.data()), std::streamsize(count * 4));
  if (std::size_t(is.gcount()) != count * 4)
    detail::io_fail(path, "truncated payload", payload_start + is.gcount());
  is.peek();
  if (!is.eof()) detail::io_fail(path, "trailing bytes after payload", is.tellg());
  map.planes.resize(count);
  for (std::size_t i = 0; i < count; ++i) map.planes[i] = detail::f32_from_bits_le(buf[i]);
  map.validate();
  return map;
}

// ---------------------------------------------------------------------------
// .lpmix — mixture model, plain text.
// "LPMIX1 p w h K" / label names / per component
// "j mu_x mu_y sigma_xx sigma_yy pi alpha_dir" with 17 significant digits.
// ---------------------------------------------------------------------------

inline void write_lpmix(const std::string& path, const LpMixtureModel& model) {
  model.validate();
  atomic_write(path, [&model](std::ostream& os) {
    os << "LPMIX1 " << model.p << " " << model.ref_width << " " << model.ref_height << " "
       << model.labels.size() << "\n";
    for (std::size_t j = 0; j < model.labels.size(); ++j)
      os << (j ? " " : "") << model.labels.names[j];
    os << "\n";
    char line[512];
    for (std::size_t c = 0; c < model.size(); ++c) {
      const auto& k = model.components[c];
      std::snprintf(line, sizeof line, "%d %.17g %.17g %.17g %.17g %.17g %.17g\n", k.label,
                    k.mu.x, k.mu.y, k.sxx, k.syy, k.weight, model.dirichlet[c]);
      os << line;
    }
  });
}

inline LpMixtureModel read_lpmix(const std::string& path) {
  std::ifstream is(path);
  if (!is) detail::io_fail(path, "cannot open");
  LpMixtureModel model;
  std::string header;
  if (!std::getline(is, header)) detail::io_fail(path, "empty file", 0);
  {
    std::istringstream hs(header);
    std::string magic;
    long k = 0;
    if (!(hs >> magic >> model.p >> model.ref_width >> model.ref_height >> k) ||
        magic != "LPMIX1")
      detail::io_fail(path, "bad magic/header '" + header + "'", 0);
    if (model.p < 2 || model.p % 2 != 0)
      detail::io_fail(path, "exponent p must be even >= 2, got " + std::to_string(model.p));
    if (k <= 0) detail::io_fail(path, "bad label count");
    model.labels.names.reserve(std::size_t(k));
  }
  std::string labels_line;
  if (!std::getline(is, labels_line)) detail::io_fail(path, "missing label names");
  model.labels.names = detail::split_ws(labels_line);
  model.labels.validate();
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    LpComponent c;
    double dir = 0.0;
    std::istringstream ls(line);
    if (!(ls >> c.label >> c.mu.x >> c.mu.y >> c.sxx >> c.syy >> c.weight >> dir))
      detail::io_fail(path, "bad component line '" + line + "'");
    if (c.label < 0 || std::size_t(c.label) >= model.labels.size())
      detail::io_fail(path, "component label out of range in '" + line + "'");
    if (!(c.sxx > 0.0) || !(c.syy > 0.0))
      detail::io_fail(path, "non-positive sigma in '" + line + "'");
    model.components.push_back(c);
    model.dirichlet.push_back(dir);
  }
  if (model.components.empty()) detail::io_fail(path, "no components");
  double wsum = 0.0;
  for (const auto& c : model.components) wsum += c.weight;
  if (std::abs(wsum - 1.0) > 1e-6)
    detail::io_fail(path, "weights sum to " + std::to_string(wsum) + ", expected 1");
  model.validate();
  return model;
}

// ---------------------------------------------------------------------------
// PGM (P5, maxval <= 255) — reference masks and argmax label visualizations.
// ---------------------------------------------------------------------------

inline void write_pgm(const std::string& path, int width, int height,
                      const std::vector<std::uint8_t>& pixels, int maxval = 255) {
  if (pixels.size() != std::size_t(width) * height)
    throw std::invalid_argument(path + ": pixel buffer size mismatch");
  atomic_write(path, [&](std::ostream& os) {
    os << "P5\n" << width << " " << height << "\n" << maxval << "\n";
    os.write(reinterpret_cast<const char*>(pixels.data()), std::streamsize(pixels.size()));
  });
}

struct PgmImage {
  int width = 0;
  int height = 0;
  int maxval = 255;
  std::vector<std::uint8_t> pixels;
};

inline PgmImage read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) detail::io_fail(path, "cannot open");
  const auto next_token = [&is, &path]() {
    std::string tok;
    while (true) {
      int ch = is.get();
      if (ch == EOF) detail::io_fail(path, "truncated header", is.tellg());
      if (ch == '#') {
        while (ch != '\n' && ch != EOF) ch = is.get();
        continue;
      }
      if (std::isspace(ch)) {
        if (tok.empty()) continue;
        return tok;
      }
      tok.push_back(char(ch));
    }
  };
  if (next_token() != "P5") detail::io_fail(path, "bad magic (want P5)", 0);
  PgmImage img;
  try {
    img.width = std::stoi(next_token());
    img.height = std::stoi(next_token());
    img.maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    detail::io_fail(path, "bad header field", is.tellg());
  }
  if (img.width <= 0 || img.height <= 0 || img.maxval <= 0 || img.maxval > 255)
    detail::io_fail(path, "unsupported dimensions/maxval");
  img.pixels.resize(std::size_t(img.width) * img.height);
  const std::streamoff payload_start = is.tellg();
  is.read(reinterpret_cast<char*>(img.pixels.data()), std::streamsize(img.pixels.size()));
  if (std::size_t(is.gcount()) != img.pixels.size())
    detail::io_fail(path, "truncated payload", payload_start + is.gcount());
  return img;
}

/// Indexed reference mask from PGM: 0 = background, v in 1..K = label v-1.
inline ReferenceSegmentation read_reference_pgm(const std::string& path,
                                                const LabelSet& labels) {
  labels.validate();
  const PgmImage img = read_pgm(path);
  ReferenceSegmentation seg;
  seg.width = img.width;
  seg.height = img.height;
  seg.labels = labels;
  seg.mask = img.pixels;
  for (std::size_t i = 0; i < seg.mask.size(); ++i)
    if (seg.mask[i] > labels.size())
      detail::io_fail(path, "mask value " + std::to_string(seg.mask[i]) +
                                " exceeds label count " + std::to_string(labels.size()));
  return seg;
}

// ---------------------------------------------------------------------------
// key = value configuration files ('#' comments, repeated keys allowed).
// ---------------------------------------------------------------------------

inline std::vector<std::pair<std::string, std::string>> read_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) detail::io_fail(path, "cannot open");
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int lineno = 0;
  const auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      detail::io_fail(path, "line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) detail::io_fail(path, "line " + std::to_string(lineno) + ": empty key");
    out.emplace_back(key, value);
  }
  return out;
}

}  // namespace lpreg
