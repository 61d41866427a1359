#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dsse/grid_model.hpp"

namespace dsse {

inline constexpr int kRowsPerStep = 5;

/// Row semantics inside one time block of the measurement matrix.
enum class RowKind : int { re_v = 0, im_v = 1, mag_v = 2, re_s = 3, im_s = 4 };

const char* row_kind_name(RowKind k);
RowKind parse_row_kind(const std::string& name);

/// Order of the temporally penalized series inside each column: Re s, Im s, Re v.
inline constexpr RowKind kSparsitySeries[3] = {RowKind::re_s, RowKind::im_s, RowKind::re_v};

struct MeasurementMatrix {
  Eigen::MatrixXd data;  // 5 x |P|
  int t = 0;
};

struct BlockMatrix {
  Eigen::MatrixXd data;  // 5T x |P|
  int steps = 0;

  Eigen::Index rows() const { return data.rows(); }
  Eigen::Index cols() const { return data.cols(); }
  /// Time block t (0-based).
  MeasurementMatrix slice(int t) const;
};

struct Cell {
  int row;
  int col;
  friend bool operator==(const Cell&, const Cell&) = default;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

/// Observed index set over a rows x cols grid. Cells are kept sorted (row, col).
class ObservationMask {
 public:
  ObservationMask() = default;
  ObservationMask(int rows, int cols, std::vector<Cell> cells);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return cells_.size(); }
  bool empty() const { return cells_.empty(); }
  double fad() const;
  const std::vector<Cell>& cells() const { return cells_; }
  bool contains(int row, int col) const { return observed_(row, col); }

  /// Rows [5t, 5t+5) re-indexed as a 5 x cols mask.
  ObservationMask slice(int t) const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<Cell> cells_;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> observed_;
};

/// P_Omega(M): values outside the mask are zero and must never be read.
struct MaskedMatrix {
  Eigen::MatrixXd values;
  ObservationMask mask;
  int steps = 1;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  MaskedMatrix slice(int t) const;
};

MeasurementMatrix build_measurement_matrix(const StateSnapshot& snapshot);
BlockMatrix build_block_matrix(std::span<const MeasurementMatrix> steps);

/// Uniform sample without replacement of round(fad * rows * cols) cells.
ObservationMask sample_mask(int rows, int cols, double fad, std::uint64_t seed);

/// Series-level sampling for sensor streams: picks round(fad * 5 * cols) of the
/// (row kind, column) series and marks every time step of each.
ObservationMask sample_series_mask(int steps, int cols, double fad, std::uint64_t seed);

MaskedMatrix apply_mask(const BlockMatrix& m, const ObservationMask& mask);

/// Additive Gaussian noise on observed cells only.
void add_measurement_noise(MaskedMatrix& m, double sigma, std::uint64_t seed);

/// Positions (row, col) in X of the entries of y = [Re v^1; Im v^1; |v^1|; ...],
/// each row-kind segment running over all columns.
std::vector<Cell> y_cells(int steps, int cols);
/// Positions of p = [Re s^1; Im s^1; ...].
std::vector<Cell> p_cells(int steps, int cols);

Eigen::VectorXd extract_y(const Eigen::MatrixXd& x);
Eigen::VectorXd extract_p(const Eigen::MatrixXd& x);
Eigen::VectorXd extract_temporal_series(const Eigen::MatrixXd& x, int col, RowKind kind);

/// Pre-transform stack of the (Re s, Im s, Re v) series of every column, length 3T|P|.
Eigen::VectorXd stack_sparsity_series(const Eigen::MatrixXd& x);
/// The same stack with each series multiplied by `d2` ((T-j) x T).
Eigen::VectorXd transformed_sparsity_series(const Eigen::MatrixXd& x, const Eigen::MatrixXd& d2);

// Text interchange. Measurement dumps are CSV "t,row_kind,bus,phase,value"; masks
// are CSV "row,col".
void write_measurements_csv(std::ostream& out, const BlockMatrix& m, std::span<const PhaseNode> nodes);
void write_masked_csv(std::ostream& out, const MaskedMatrix& m, std::span<const PhaseNode> nodes);
/// Reads a dump back. Cells absent from the file are unobserved.
MaskedMatrix read_measurements_csv(std::istream& in, std::span<const PhaseNode> nodes, int steps);
void write_mask_csv(std::ostream& out, const ObservationMask& mask);
ObservationMask read_mask_csv(std::istream& in, int rows, int cols);

}  // namespace dsse
