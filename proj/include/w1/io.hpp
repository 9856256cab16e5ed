#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "w1/error.hpp"
#include "w1/ground.hpp"

namespace w1 {

enum class GroundFormat { embedding_text, binary };

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size() && std::isfinite(out);
}

inline bool parse_uint(std::string_view s, std::uint64_t& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

template <typename T>
void put_le(std::ostream& os, T value) {
  using U = std::make_unsigned_t<T>;
  auto bits = static_cast<U>(value);
  char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  os.write(buf, sizeof(T));
}

inline void put_f32(std::ostream& os, float v) { put_le(os, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& os, double v) { put_le(os, std::bit_cast<std::uint64_t>(v)); }

template <typename T>
T get_le(std::istream& is, const char* what) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) {
    throw ParseError(std::string("truncated binary input while reading ") + what);
  }
  std::make_unsigned_t<T> bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bits |= static_cast<std::make_unsigned_t<T>>(buf[i]) << (8 * i);
  }
  return static_cast<T>(bits);
}

inline float get_f32(std::istream& is, const char* what) {
  return std::bit_cast<float>(get_le<std::uint32_t>(is, what));
}
inline double get_f64(std::istream& is, const char* what) {
  return std::bit_cast<double>(get_le<std::uint64_t>(is, what));
}

inline void expect_magic(std::istream& is, std::string_view magic) {
  char buf[4] = {};
  if (!is.read(buf, 4) || std::string_view(buf, 4) != magic) {
    throw ParseError("bad magic: expected \"" + std::string(magic) + "\"");
  }
}

inline std::ifstream open_in(const std::filesystem::path& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& path, bool binary) {
  std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) throw ParseError("cannot write '" + path.string() + "'");
  return out;
}

}  // namespace detail

// Rows of `token c_1 ... c_d`. Blank lines are skipped.
inline GroundSet read_ground_text(std::istream& in) {
  std::vector<double> coords;
  std::vector<std::string> tokens;
  std::size_t dim = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto fields = detail::split_ws(line);
    if (fields.empty()) continue;
    const std::size_t arity = fields.size() - 1;
    if (arity == 0) throw ParseError("line " + std::to_string(lineno) + ": row has no coordinates");
    if (dim == 0) dim = arity;
    if (arity != dim) {
      throw ParseError("line " + std::to_string(lineno) + ": expected " + std::to_string(dim) +
                       " coordinates, found " + std::to_string(arity));
    }
    tokens.emplace_back(fields[0]);
    for (std::size_t a = 1; a < fields.size(); ++a) {
      double v = 0.0;
      if (!detail::parse_double(fields[a], v)) {
        throw ParseError("line " + std::to_string(lineno) + ": bad coordinate '" +
                         std::string(fields[a]) + "'");
      }
      coords.push_back(v);
    }
  }
  if (coords.empty()) throw ParseError("ground set file is empty");
  return GroundSet::from_points(std::move(coords), dim, std::move(tokens));
}

inline GroundSet read_ground_binary(std::istream& in) {
  detail::expect_magic(in, "W1GS");
  const auto count = detail::get_le<std::uint32_t>(in, "point count");
  const auto dim = detail::get_le<std::uint32_t>(in, "dimension");
  if (count == 0) throw ParseError("ground set file is empty");
  if (dim == 0) throw ParseError("ground set dimension is zero");
  std::vector<double> coords(static_cast<std::size_t>(count) * dim);
  for (auto& c : coords) c = detail::get_f32(in, "coordinates");
  return GroundSet::from_points(std::move(coords), dim);
}

inline GroundSet load_ground_set(const std::filesystem::path& path, GroundFormat format) {
  auto in = detail::open_in(path, format == GroundFormat::binary);
  try {
    return format == GroundFormat::binary ? read_ground_binary(in) : read_ground_text(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// Picks binary when the file starts with the binary magic.
inline GroundSet load_ground_set(const std::filesystem::path& path) {
  char magic[4] = {};
  {
    auto in = detail::open_in(path, true);
    in.read(magic, 4);
  }
  const bool binary = std::string_view(magic, 4) == "W1GS";
  return load_ground_set(path, binary ? GroundFormat::binary : GroundFormat::embedding_text);
}

inline void write_ground_binary(std::ostream& out, const GroundSet& g) {
  out.write("W1GS", 4);
  detail::put_le(out, static_cast<std::uint32_t>(g.size()));
  detail::put_le(out, static_cast<std::uint32_t>(g.dim()));
  for (double c : g.coordinates()) detail::put_f32(out, static_cast<float>(c));
}

inline void write_ground_text(std::ostream& out, const GroundSet& g) {
  std::ostringstream row;
  for (std::size_t p = 0; p < g.size(); ++p) {
    row.str({});
    row << (g.has_tokens() ? g.tokens()[p] : std::to_string(p));
    for (double c : g.point(static_cast<PointId>(p))) row << ' ' << c;
    out << row.str() << '\n';
  }
}

inline void save_ground_set(const std::filesystem::path& path, const GroundSet& g, GroundFormat format) {
  auto out = detail::open_out(path, format == GroundFormat::binary);
  if (format == GroundFormat::binary) {
    write_ground_binary(out, g);
  } else {
    write_ground_text(out, g);
  }
  if (!out) throw ParseError("write failed for '" + path.string() + "'");
}

// A reference is a token first; failing that, a decimal point id.
inline std::optional<PointId> resolve_point(const GroundSet& ground, std::string_view ref) {
  if (auto id = ground.find(ref)) return id;
  std::uint64_t v = 0;
  if (detail::parse_uint(ref, v) && v < ground.size()) return static_cast<PointId>(v);
  return std::nullopt;
}

/// One record per line: `id: ref mass ref mass ...` or the uniform shorthand
/// `id: ref ref ...`. A record is weighted when it has an even number of items
/// and every second item is a number that does not itself name a point.
/// Blank lines and lines starting with '#' are skipped.
inline Dataset read_distributions(std::istream& in, const GroundSet& ground) {
  Dataset ds;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto fields = detail::split_ws(line);
    if (fields.empty() || fields[0].front() == '#') continue;
    std::string_view head = fields[0];
    std::string record;
    std::size_t first = 1;
    if (head.size() > 1 && head.back() == ':') {
      record = std::string(head.substr(0, head.size() - 1));
    } else if (fields.size() > 1 && fields[1] == ":") {
      record = std::string(head);
      first = 2;
    } else {
      throw ParseError("line " + std::to_string(lineno) + ": expected 'id:' at start of record");
    }
    const std::span<const std::string_view> items(fields.data() + first, fields.size() - first);
    if (items.empty()) throw ParseError("record '" + record + "': no entries");

    bool weighted = items.size() % 2 == 0;
    for (std::size_t i = 1; weighted && i < items.size(); i += 2) {
      double m = 0.0;
      weighted = detail::parse_double(items[i], m) && !resolve_point(ground, items[i]);
    }

    std::vector<MassEntry> entries;
    const std::size_t step = weighted ? 2 : 1;
    for (std::size_t i = 0; i < items.size(); i += step) {
      auto id = resolve_point(ground, items[i]);
      if (!id) {
        throw ParseError("record '" + record + "': unknown point '" + std::string(items[i]) + "'");
      }
      double mass = 1.0;
      if (weighted) {
        detail::parse_double(items[i + 1], mass);
        if (mass < 0.0) throw ParseError("record '" + record + "': negative mass");
      }
      entries.push_back({*id, mass});
    }
    Distribution dist;
    try {
      dist = Distribution::normalized(std::move(entries));
    } catch (const InvalidArgument& e) {
      throw ParseError("record '" + record + "': " + e.what());
    }
    ds.push_back(std::move(record), std::move(dist));
  }
  if (ds.size() == 0) throw ParseError("distribution file has no records");
  return ds;
}

inline Dataset load_distributions(const std::filesystem::path& path, const GroundSet& ground) {
  auto in = detail::open_in(path, false);
  try {
    return read_distributions(in, ground);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// Always writes the weighted form with point ids (or tokens when present).
inline void write_distributions(std::ostream& out, const Dataset& ds, const GroundSet& ground) {
  std::ostringstream row;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    row.str({});
    row << ds.ids[i] << ':';
    for (const auto& e : ds.items[i].entries()) {
      const bool by_token = ground.has_tokens() && ground.find(ground.tokens()[e.point]) == e.point;
      row << ' ' << (by_token ? ground.tokens()[e.point] : std::to_string(e.point));
      // A mass such as "1" could be read back as a point id.
      char buf[32];
      const auto end = std::to_chars(buf, buf + sizeof buf, e.mass).ptr;
      const std::string_view mass(buf, static_cast<std::size_t>(end - buf));
      row << ' ' << mass << (mass.find_first_of(".e") == std::string_view::npos ? ".0" : "");
    }
    out << row.str() << '\n';
  }
}

inline void save_distributions(const std::filesystem::path& path, const Dataset& ds,
                               const GroundSet& ground) {
  auto out = detail::open_out(path, false);
  write_distributions(out, ds, ground);
  if (!out) throw ParseError("write failed for '" + path.string() + "'");
}

}  // namespace w1
