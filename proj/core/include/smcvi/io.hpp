#pragma once

// CSV data files, ELBO traces, density grids and JSON checkpoints.

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "smcvi/diagnostics.hpp"
#include "smcvi/hawkes.hpp"
#include "smcvi/optim.hpp"
#include "smcvi/trainer.hpp"
#include "smcvi/variational.hpp"

namespace smcvi::io {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numeric matrix, one row per line. A first line that does not parse as
/// numbers is treated as a header.
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path);
void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& header = {});

/// Columns timestamp_seconds, mark (1-based).
hawkes::EventStream read_events_csv(const std::filesystem::path& path);
void write_events_csv(const std::filesystem::path& path, const hawkes::EventStream& events);

void write_trace_csv(const std::filesystem::path& path, const std::vector<TracePoint>& trace);

/// (x, y, value) rows plus a JSON sidecar with the axes and fixed coordinates.
void write_density_grid(const std::filesystem::path& csv_path, const std::filesystem::path& json_path,
                        const diag::DensityGrid& grid);

struct Checkpoint {
  std::string model;
  FitMode mode = FitMode::Vb;
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;
  MeanFieldFamily family;
  std::vector<double> phi;
  std::vector<std::string> phi_names;
  AdamState adam;
  std::vector<double> recipe_state;
};

std::string checkpoint_to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace smcvi::io
