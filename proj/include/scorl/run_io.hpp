#pragma once
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace scorl {

// Artifact I/O for run directories: CSV metric tables, columnar sample
// binaries, self-contained SVG line plots, and an append-only run manifest.

void ensure_dir(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);
bool file_exists(const std::string& path);

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  // column lookup by header name; throws if absent
  std::vector<double> column(const std::string& name) const;
};
CsvTable read_csv(const std::string& path);

// Samples are stored column-major with a small self-describing header so eval
// outputs can be reloaded without the config that produced them.
void save_samples(const std::string& path, const Eigen::MatrixXd& rows_are_samples);
Eigen::MatrixXd load_samples(const std::string& path);

struct SvgSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Minimal line plot writer; axes are linear, non-finite points are skipped.
void write_svg_lines(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<SvgSeries>& series);

// Exact float64 snapshots for trainer resume: a round counter plus a list of
// parameter vectors, checksummed. Loading a truncated or foreign file throws.
struct StateBlob {
  int round = 0;
  std::vector<Eigen::VectorXd> vecs;
};
void save_state_blob(const std::string& path, int round,
                     const std::vector<Eigen::VectorXd>& vecs);
StateBlob load_state_blob(const std::string& path);

// One JSON line per completed command: {command, status, wallclock_s,
// config_checksum, artifacts: {path: checksum}}. Lines are only appended.
void append_manifest(const std::string& run_dir, const std::string& command,
                     const std::string& status, double wallclock_s, uint64_t config_checksum,
                     const std::vector<std::pair<std::string, uint64_t>>& artifacts);

uint64_t file_checksum(const std::string& path);

}  // namespace scorl
