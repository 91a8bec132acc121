#include "scorl/run_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "scorl/checkpoint.hpp"
#include "scorl/errors.hpp"

namespace scorl {

namespace fs = std::filesystem;

void ensure_dir(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) throw ConfigError("cannot create directory " + path + ": " + ec.message());
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  out << content;
  if (!out) throw ConfigError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

bool file_exists(const std::string& path) { return fs::exists(path); }

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    if (row.size() != header.size()) throw ConfigError("write_csv: ragged row in " + path);
    for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
  write_text_file(path, out.str());
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open: " + path);
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("read_csv: empty file " + path);
  std::stringstream hs(line);
  std::string cell;
  while (std::getline(hs, cell, ',')) table.header.push_back(cell);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ls(line);
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != table.header.size()) throw ConfigError("read_csv: ragged row in " + path);
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::vector<double> CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ConfigError("csv column not found: " + name);
  const size_t idx = static_cast<size_t>(it - header.begin());
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& row : rows) out.push_back(row[idx]);
  return out;
}

namespace {
constexpr char kSampleMagic[8] = {'S', 'C', 'O', 'R', 'L', 'S', 'M', 'P'};
}

void save_samples(const std::string& path, const Eigen::MatrixXd& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  out.write(kSampleMagic, sizeof(kSampleMagic));
  const uint64_t n = static_cast<uint64_t>(samples.rows());
  const uint64_t d = static_cast<uint64_t>(samples.cols());
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(reinterpret_cast<const char*>(&d), sizeof(d));
  // column-major: all of coordinate 0, then coordinate 1, ...
  for (int j = 0; j < samples.cols(); ++j)
    out.write(reinterpret_cast<const char*>(samples.col(j).data()),
              static_cast<std::streamsize>(sizeof(double) * n));
  if (!out) throw ConfigError("write failed: " + path);
}

Eigen::MatrixXd load_samples(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kSampleMagic, sizeof(magic)) != 0)
    throw ConfigError("not a sample file: " + path);
  uint64_t n = 0, d = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  in.read(reinterpret_cast<char*>(&d), sizeof(d));
  if (!in || n == 0 || d == 0 || d > 1u << 20)
    throw ConfigError("corrupt sample header: " + path);
  Eigen::MatrixXd samples(static_cast<int>(n), static_cast<int>(d));
  for (uint64_t j = 0; j < d; ++j) {
    in.read(reinterpret_cast<char*>(samples.col(static_cast<int>(j)).data()),
            static_cast<std::streamsize>(sizeof(double) * n));
  }
  if (!in) throw ConfigError("truncated sample file: " + path);
  return samples;
}

namespace {

struct PlotRange {
  double lo = 0.0, hi = 1.0;
  void widen(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
};

std::string fmt_tick(double v) {
  std::ostringstream s;
  s << std::setprecision(4) << v;
  return s.str();
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void write_svg_lines(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<SvgSeries>& series) {
  const int W = 760, H = 460;
  const int ml = 70, mr = 20, mt = 40, mb = 50;
  const double pw = W - ml - mr, ph = H - mt - mb;

  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo;
  double ylo = xlo, yhi = -xlo;
  for (const auto& s : series) {
    for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xlo = std::min(xlo, s.x[i]);
      xhi = std::max(xhi, s.x[i]);
      ylo = std::min(ylo, s.y[i]);
      yhi = std::max(yhi, s.y[i]);
    }
  }
  if (!std::isfinite(xlo)) { xlo = 0; xhi = 1; ylo = 0; yhi = 1; }
  if (xhi <= xlo) xhi = xlo + 1;
  if (yhi <= ylo) { yhi = ylo + 1; ylo -= 1; }
  const double ypad = 0.05 * (yhi - ylo);
  ylo -= ypad;
  yhi += ypad;

  auto px = [&](double x) { return ml + pw * (x - xlo) / (xhi - xlo); };
  auto py = [&](double y) { return mt + ph * (1.0 - (y - ylo) / (yhi - ylo)); };

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf"};
  const int n_colors = 7;

  std::ostringstream svg;
  svg << std::setprecision(8);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  svg << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  svg << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\""
      << " font-size=\"15\">" << xml_escape(title) << "</text>\n";

  for (int k = 0; k <= 4; ++k) {
    const double fx = xlo + (xhi - xlo) * k / 4.0;
    const double fy = ylo + (yhi - ylo) * k / 4.0;
    svg << "<line x1=\"" << px(fx) << "\" y1=\"" << mt << "\" x2=\"" << px(fx) << "\" y2=\""
        << mt + ph << "\" stroke=\"#dddddd\"/>\n";
    svg << "<line x1=\"" << ml << "\" y1=\"" << py(fy) << "\" x2=\"" << ml + pw << "\" y2=\""
        << py(fy) << "\" stroke=\"#dddddd\"/>\n";
    svg << "<text x=\"" << px(fx) << "\" y=\"" << H - mb + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << fmt_tick(fx) << "</text>\n";
    svg << "<text x=\"" << ml - 6 << "\" y=\"" << py(fy) + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt_tick(fy)
        << "</text>\n";
  }
  svg << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << ml + pw / 2 << "\" y=\"" << H - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
      << xml_escape(x_label) << "</text>\n";
  svg << "<text x=\"16\" y=\"" << mt + ph / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\""
      << " transform=\"rotate(-90 16 " << mt + ph / 2 << ")\">" << xml_escape(y_label)
      << "</text>\n";

  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    std::ostringstream pts;
    for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      pts << px(s.x[i]) << "," << py(s.y[i]) << " ";
    }
    svg << "<polyline fill=\"none\" stroke=\"" << palette[si % n_colors]
        << "\" stroke-width=\"1.8\" points=\"" << pts.str() << "\"/>\n";
    const double ly = mt + 16.0 + 16.0 * static_cast<double>(si);
    svg << "<line x1=\"" << ml + pw - 120 << "\" y1=\"" << ly << "\" x2=\"" << ml + pw - 100
        << "\" y2=\"" << ly << "\" stroke=\"" << palette[si % n_colors]
        << "\" stroke-width=\"1.8\"/>\n";
    svg << "<text x=\"" << ml + pw - 94 << "\" y=\"" << ly + 4
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << xml_escape(s.label)
        << "</text>\n";
  }
  svg << "</svg>\n";
  write_text_file(path, svg.str());
}

namespace {

constexpr char kStateMagic[8] = {'S', 'C', 'O', 'R', 'L', 'R', 'U', 'N'};

void put_u32(std::string& buf, uint32_t v) { buf.append(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::string& buf, uint64_t v) { buf.append(reinterpret_cast<const char*>(&v), 8); }

struct Reader {
  const std::string& buf;
  size_t pos = 0;
  void raw(void* out, size_t n) {
    if (pos + n > buf.size()) throw ConfigError("state blob: truncated file");
    std::memcpy(out, buf.data() + pos, n);
    pos += n;
  }
  uint32_t u32() { uint32_t v; raw(&v, 4); return v; }
  uint64_t u64() { uint64_t v; raw(&v, 8); return v; }
};

}  // namespace

void save_state_blob(const std::string& path, int round,
                     const std::vector<Eigen::VectorXd>& vecs) {
  std::string buf;
  buf.append(kStateMagic, 8);
  put_u32(buf, 2u);  // layout version
  put_u32(buf, static_cast<uint32_t>(round));
  put_u32(buf, static_cast<uint32_t>(vecs.size()));
  for (const auto& v : vecs) {
    put_u64(buf, static_cast<uint64_t>(v.size()));
    buf.append(reinterpret_cast<const char*>(v.data()), sizeof(double) * v.size());
  }
  put_u64(buf, fnv1a64(buf.data(), buf.size()));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("state blob: cannot open " + path + " for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw ConfigError("state blob: short write to " + path);
}

StateBlob load_state_blob(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("state blob: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string buf = ss.str();
  if (buf.size() < 8 + 4 + 4 + 4 + 8 || std::memcmp(buf.data(), kStateMagic, 8) != 0)
    throw ConfigError("state blob: bad magic in " + path);
  Reader r{buf};
  r.pos = 8;
  if (r.u32() != 2u) throw ConfigError("state blob: unsupported version in " + path);
  StateBlob blob;
  blob.round = static_cast<int>(r.u32());
  const uint32_t n_vecs = r.u32();
  if (n_vecs > 64) throw ConfigError("state blob: implausible vector count in " + path);
  for (uint32_t i = 0; i < n_vecs; ++i) {
    const uint64_t n = r.u64();
    if (r.pos + sizeof(double) * n > buf.size())
      throw ConfigError("state blob: truncated file " + path);
    Eigen::VectorXd v(static_cast<int>(n));
    r.raw(v.data(), sizeof(double) * n);
    blob.vecs.push_back(std::move(v));
  }
  const uint64_t stored = r.u64();
  if (stored != fnv1a64(buf.data(), r.pos - 8))
    throw ConfigError("state blob: checksum mismatch in " + path);
  return blob;
}

void append_manifest(const std::string& run_dir, const std::string& command,
                     const std::string& status, double wallclock_s, uint64_t config_checksum,
                     const std::vector<std::pair<std::string, uint64_t>>& artifacts) {
  nlohmann::json j;
  j["command"] = command;
  j["status"] = status;
  j["wallclock_s"] = wallclock_s;
  j["config_checksum"] = config_checksum;
  nlohmann::json arts = nlohmann::json::object();
  for (const auto& [name, sum] : artifacts) arts[name] = sum;
  j["artifacts"] = arts;
  std::ofstream out(run_dir + "/manifest.jsonl", std::ios::app | std::ios::binary);
  if (!out) throw ConfigError("cannot append manifest in " + run_dir);
  out << j.dump() << "\n";
}

uint64_t file_checksum(const std::string& path) {
  const std::string bytes = read_text_file(path);
  return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace scorl
