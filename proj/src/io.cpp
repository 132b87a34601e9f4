#include "heatlab/io.hpp"

#include "heatlab/trajectory.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace heatlab {

std::string FileHeader::get(const std::string& key) const {
  const auto it = entries.find(key);
  return it == entries.end() ? std::string() : it->second;
}

std::string FileHeader::format() const {
  std::string out = "#";
  bool first = true;
  for (const auto& [k, v] : entries) {
    out += first ? " " : "; ";
    out += k + "=" + v;
    first = false;
  }
  return out;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

FileHeader FileHeader::parse(std::string_view line) {
  FileHeader h;
  if (line.empty() || line.front() != '#') return h;
  line.remove_prefix(1);
  while (!line.empty()) {
    const auto semi = line.find(';');
    const std::string_view item = trim(line.substr(0, semi));
    const auto eq = item.find('=');
    if (eq != std::string_view::npos) h.entries[std::string(trim(item.substr(0, eq)))] = std::string(trim(item.substr(eq + 1)));
    if (semi == std::string_view::npos) break;
    line.remove_prefix(semi + 1);
  }
  return h;
}

std::string config_digest(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void require_matching_model(const FileHeader& header, const std::string& expected, const std::string& path) {
  const std::string model = header.get("model");
  if (!model.empty() && model != expected)
    throw ValidationError(path + " was produced by model " + model + ", not " + expected);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path);
  return out;
}

void write_header(std::ostream& out, const FileHeader& header) {
  if (!header.entries.empty()) out << header.format() << '\n';
}

// Minimal CSV table: optional "#" header line, a column row, numeric rows.
struct Table {
  FileHeader header;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  for (;;) {
    const auto comma = line.find(',');
    out.push_back(trim(line.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    line.remove_prefix(comma + 1);
  }
  return out;
}

double parse_cell(std::string_view cell, const std::string& path, std::size_t line_no) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size())
    throw ValidationError(path + ":" + std::to_string(line_no) + ": not a number '" + std::string(cell) + "'");
  return v;
}

Table read_table(const std::string& path, const std::vector<std::string>& expected_prefix) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path);
  Table t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    if (view.front() == '#') {
      if (t.columns.empty() && t.header.entries.empty()) t.header = FileHeader::parse(view);
      continue;
    }
    if (t.columns.empty()) {
      for (auto c : split(view)) t.columns.emplace_back(c);
      if (t.columns.size() < expected_prefix.size())
        throw ValidationError(path + ": expected columns starting with " + expected_prefix.front());
      for (std::size_t k = 0; k < expected_prefix.size(); ++k) {
        if (!expected_prefix[k].empty() && t.columns[k] != expected_prefix[k])
          throw ValidationError(path + ": column " + std::to_string(k + 1) + " should be '" + expected_prefix[k] + "'");
      }
      continue;
    }
    const auto cells = split(view);
    if (cells.size() != t.columns.size()) throw ValidationError(path + ":" + std::to_string(line_no) + ": wrong number of columns");
    std::vector<double> row;
    row.reserve(cells.size());
    for (auto c : cells) row.push_back(parse_cell(c, path, line_no));
    t.rows.push_back(std::move(row));
  }
  if (t.columns.empty()) throw ValidationError(path + ": missing column header");
  return t;
}

Vector read_sites(const std::vector<std::vector<double>>& rows, std::size_t idx_col, std::size_t z_col,
                  std::size_t begin, std::size_t end, const std::string& path) {
  const std::size_t n = end - begin;
  Vector z(static_cast<Eigen::Index>(n));
  for (std::size_t r = begin; r < end; ++r) {
    const double i = rows[r][idx_col];
    if (i != static_cast<double>(r - begin + 1)) throw ValidationError(path + ": site indices must run 1..N in order");
    z[static_cast<Eigen::Index>(r - begin)] = rows[r][z_col];
  }
  return z;
}

}  // namespace

void write_state_csv(const std::string& path, const EnergyState& state, const FileHeader& header) {
  auto out = open_out(path);
  write_header(out, header);
  out << "i,z\n";
  for (std::size_t j = 0; j < state.n_sites(); ++j) out << j + 1 << ',' << format_double(state[j]) << '\n';
}

EnergyState read_state_csv(const std::string& path, FileHeader* header) {
  Table t = read_table(path, {"i", "z"});
  if (t.columns.size() != 2) throw ValidationError(path + ": state files have columns i,z");
  if (header) *header = t.header;
  return EnergyState(read_sites(t.rows, 0, 1, 0, t.rows.size(), path), 0.0);
}

void write_trajectory_csv(const std::string& path, const TrajectoryRecord& record, const FileHeader& header) {
  auto out = open_out(path);
  write_header(out, header);
  out << "snapshot,t,i,z\n";
  for (std::size_t k = 0; k < record.snapshots.size(); ++k) {
    const auto& s = record.snapshots[k];
    const std::string t = format_double(record.times[k]);
    for (std::size_t j = 0; j < s.n_sites(); ++j) out << k << ',' << t << ',' << j + 1 << ',' << format_double(s[j]) << '\n';
  }
}

TrajectoryRecord read_trajectory_csv(const std::string& path, FileHeader* header) {
  Table t = read_table(path, {"snapshot", "t", "i", "z"});
  if (t.columns.size() != 4) throw ValidationError(path + ": trajectory files have columns snapshot,t,i,z");
  if (header) *header = t.header;
  TrajectoryRecord rec;
  rec.process = t.header.get("model");
  std::size_t begin = 0;
  while (begin < t.rows.size()) {
    const double snap = t.rows[begin][0];
    if (snap != static_cast<double>(rec.snapshots.size())) throw ValidationError(path + ": snapshots must be numbered 0,1,...");
    std::size_t end = begin;
    while (end < t.rows.size() && t.rows[end][0] == snap) {
      if (t.rows[end][1] != t.rows[begin][1]) throw ValidationError(path + ": one time per snapshot");
      ++end;
    }
    const double time = t.rows[begin][1];
    if (!rec.times.empty() && !(time > rec.times.back())) throw ValidationError(path + ": sample times must increase");
    rec.times.push_back(time);
    rec.snapshots.emplace_back(read_sites(t.rows, 2, 3, begin, end, path), time);
    if (rec.snapshots.back().n_sites() != rec.snapshots.front().n_sites())
      throw ValidationError(path + ": all snapshots need the same N");
    begin = end;
  }
  if (rec.snapshots.empty()) throw ValidationError(path + ": no snapshots");
  rec.n_sites = rec.snapshots.front().n_sites();
  return rec;
}

void write_field_csv(const std::string& path, const SpaceTimeField& field, const std::string& column,
                     const FileHeader& header) {
  auto out = open_out(path);
  write_header(out, header);
  out << "t,x," << column << '\n';
  const auto& g = field.grid();
  for (std::size_t k = 0; k < g.nt; ++k) {
    const std::string t = format_double(g.time(k));
    for (std::size_t j = 0; j < g.nx; ++j)
      out << t << ',' << format_double(g.x(j)) << ',' << format_double(field.values()(k, j)) << '\n';
  }
}

FieldData read_field_csv(const std::string& path) {
  Table t = read_table(path, {"t", "x", ""});
  if (t.columns.size() != 3) throw ValidationError(path + ": field files have columns t,x,<value>");
  FieldData d;
  d.column = t.columns[2];
  d.header = t.header;
  std::size_t nx = 0;
  while (nx < t.rows.size() && t.rows[nx][0] == t.rows[0][0]) ++nx;
  if (nx == 0 || t.rows.size() % nx != 0) throw ValidationError(path + ": ragged field grid");
  const std::size_t nt = t.rows.size() / nx;
  d.values.resize(static_cast<Eigen::Index>(nt), static_cast<Eigen::Index>(nx));
  for (std::size_t k = 0; k < nt; ++k) {
    for (std::size_t j = 0; j < nx; ++j) {
      const auto& row = t.rows[k * nx + j];
      if (row[0] != t.rows[k * nx][0]) throw ValidationError(path + ": ragged field grid");
      if (std::abs(row[1] - static_cast<double>(j) / static_cast<double>(nx)) > 1e-12)
        throw ValidationError(path + ": x must run over j/nx");
      d.values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = row[2];
    }
  }
  d.grid.nx = nx;
  d.grid.nt = nt;
  d.grid.t0 = t.rows.front()[0];
  d.grid.duration = t.rows.back()[0] - d.grid.t0;
  for (std::size_t k = 0; k < nt; ++k) {
    const double tk = t.rows[k * nx][0];
    if (std::abs(tk - d.grid.time(k)) > 1e-9 * std::max(1.0, d.grid.duration))
      throw ValidationError(path + ": time levels must be uniform");
  }
  return d;
}

namespace {

static_assert(std::endian::native == std::endian::little, "noise log I/O assumes a little-endian host");

constexpr char kMagic[8] = {'H', 'L', 'N', 'O', 'I', 'S', 'E', '1'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw ValidationError("noise log is truncated");
  return v;
}

}  // namespace

void write_noise_log(const std::string& path, const BondNoiseLog& log) {
  auto out = open_out(path);
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, log.kind == BondNoiseLog::Kind::Diffusion ? 0u : 1u);
  put<std::uint32_t>(out, 0u);
  put<std::uint64_t>(out, log.n_sites);
  put<std::uint64_t>(out, log.records.size());
  for (const auto& r : log.records) {
    put(out, r.bond);
    put(out, r.t);
    put(out, r.value);
  }
}

BondNoiseLog read_noise_log(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw ValidationError(path + " is not a noise log");
  BondNoiseLog log;
  const auto kind = get<std::uint32_t>(in);
  if (kind > 1) throw ValidationError(path + ": unknown noise log kind");
  log.kind = kind == 0 ? BondNoiseLog::Kind::Diffusion : BondNoiseLog::Kind::KmpEvents;
  get<std::uint32_t>(in);
  log.n_sites = get<std::uint64_t>(in);
  const auto count = get<std::uint64_t>(in);
  log.records.reserve(count);
  for (std::uint64_t k = 0; k < count; ++k) {
    NoiseRecord r;
    r.bond = get<std::uint32_t>(in);
    r.t = get<double>(in);
    r.value = get<double>(in);
    log.records.push_back(r);
  }
  return log;
}

void write_text(const std::string& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
}

}  // namespace heatlab
