#include "dsse/measurements.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "dsse/errors.hpp"

namespace dsse {

namespace {

constexpr const char* kKindNames[kRowsPerStep] = {"re_v", "im_v", "mag_v", "re_s", "im_s"};

int check_steps(const Eigen::MatrixXd& x) {
  if (x.rows() == 0 || x.rows() % kRowsPerStep != 0)
    throw DimensionError("candidate has " + std::to_string(x.rows()) +
                         " rows, expected a positive multiple of 5");
  return static_cast<int>(x.rows() / kRowsPerStep);
}

}  // namespace

const char* row_kind_name(RowKind k) { return kKindNames[static_cast<int>(k)]; }

RowKind parse_row_kind(const std::string& name) {
  for (int k = 0; k < kRowsPerStep; ++k)
    if (name == kKindNames[k]) return static_cast<RowKind>(k);
  throw ConfigError("unknown row kind '" + name + "'");
}

MeasurementMatrix BlockMatrix::slice(int t) const {
  if (t < 0 || t >= steps) throw std::out_of_range("BlockMatrix::slice: time index out of range");
  return {data.middleRows(kRowsPerStep * t, kRowsPerStep), t};
}

ObservationMask::ObservationMask(int rows, int cols, std::vector<Cell> cells)
    : rows_(rows), cols_(cols), cells_(std::move(cells)) {
  observed_.setConstant(rows, cols, false);
  std::sort(cells_.begin(), cells_.end());
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    const auto& c = cells_[i];
    if (c.row < 0 || c.row >= rows || c.col < 0 || c.col >= cols)
      throw DimensionError("mask cell (" + std::to_string(c.row) + ", " + std::to_string(c.col) +
                           ") out of range");
    if (i > 0 && cells_[i - 1] == c)
      throw DimensionError("mask cell (" + std::to_string(c.row) + ", " + std::to_string(c.col) +
                           ") listed twice");
    observed_(c.row, c.col) = true;
  }
}

double ObservationMask::fad() const {
  const double total = static_cast<double>(rows_) * cols_;
  return total > 0 ? static_cast<double>(cells_.size()) / total : 0.0;
}

ObservationMask ObservationMask::slice(int t) const {
  const int lo = kRowsPerStep * t;
  if (t < 0 || lo + kRowsPerStep > rows_) throw std::out_of_range("ObservationMask::slice: bad time index");
  std::vector<Cell> out;
  for (const auto& c : cells_)
    if (c.row >= lo && c.row < lo + kRowsPerStep) out.push_back({c.row - lo, c.col});
  return ObservationMask(kRowsPerStep, cols_, std::move(out));
}

MaskedMatrix MaskedMatrix::slice(int t) const {
  return {values.middleRows(kRowsPerStep * t, kRowsPerStep), mask.slice(t), 1};
}

MeasurementMatrix build_measurement_matrix(const StateSnapshot& snapshot) {
  const auto n = snapshot.v.size();
  if (snapshot.s.size() != n) throw DimensionError("snapshot voltage and injection lengths differ");
  MeasurementMatrix m;
  m.t = snapshot.t;
  m.data.resize(kRowsPerStep, n);
  m.data.row(0) = snapshot.v.real().transpose();
  m.data.row(1) = snapshot.v.imag().transpose();
  m.data.row(2) = snapshot.v.cwiseAbs().transpose();
  m.data.row(3) = snapshot.s.real().transpose();
  m.data.row(4) = snapshot.s.imag().transpose();
  return m;
}

BlockMatrix build_block_matrix(std::span<const MeasurementMatrix> steps) {
  if (steps.empty()) throw DimensionError("build_block_matrix: no time steps");
  const auto n = steps.front().data.cols();
  BlockMatrix out;
  out.steps = static_cast<int>(steps.size());
  out.data.resize(kRowsPerStep * out.steps, n);
  for (int t = 0; t < out.steps; ++t) {
    const auto& m = steps[static_cast<std::size_t>(t)];
    if (m.data.rows() != kRowsPerStep || m.data.cols() != n)
      throw DimensionError("build_block_matrix: step " + std::to_string(t) + " has shape " +
                           std::to_string(m.data.rows()) + "x" + std::to_string(m.data.cols()) +
                           ", expected 5x" + std::to_string(n));
    if (m.t != t) throw DimensionError("build_block_matrix: time indices must run 0..T-1 in order");
    out.data.middleRows(kRowsPerStep * t, kRowsPerStep) = m.data;
  }
  return out;
}

ObservationMask sample_mask(int rows, int cols, double fad, std::uint64_t seed) {
  if (!(fad > 0.0 && fad <= 1.0)) throw ConfigError("fad must lie in (0, 1]");
  const int total = rows * cols;
  const auto count = static_cast<int>(std::lround(fad * total));
  if (count == 0) throw EmptyMaskError("empty mask: fad " + std::to_string(fad) + " selects no cells");

  std::vector<int> idx(static_cast<std::size_t>(total));
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<int> pick(i, total - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  std::vector<Cell> cells;
  cells.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int k = idx[static_cast<std::size_t>(i)];
    cells.push_back({k % rows, k / rows});
  }
  return ObservationMask(rows, cols, std::move(cells));
}

ObservationMask sample_series_mask(int steps, int cols, double fad, std::uint64_t seed) {
  const auto series = sample_mask(kRowsPerStep, cols, fad, seed);
  std::vector<Cell> cells;
  for (const auto& s : series.cells())
    for (int t = 0; t < steps; ++t) cells.push_back({kRowsPerStep * t + s.row, s.col});
  return ObservationMask(kRowsPerStep * steps, cols, std::move(cells));
}

MaskedMatrix apply_mask(const BlockMatrix& m, const ObservationMask& mask) {
  if (mask.rows() != m.rows() || mask.cols() != m.cols())
    throw DimensionError("apply_mask: mask shape does not match matrix");
  MaskedMatrix out;
  out.values = Eigen::MatrixXd::Zero(m.rows(), m.cols());
  for (const auto& c : mask.cells()) out.values(c.row, c.col) = m.data(c.row, c.col);
  out.mask = mask;
  out.steps = m.steps;
  return out;
}

void add_measurement_noise(MaskedMatrix& m, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw ConfigError("noise sigma must be nonnegative");
  if (sigma == 0.0) return;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  for (const auto& c : m.mask.cells()) m.values(c.row, c.col) += noise(rng);
}

std::vector<Cell> y_cells(int steps, int cols) {
  std::vector<Cell> out;
  out.reserve(static_cast<std::size_t>(3 * steps * cols));
  for (int t = 0; t < steps; ++t)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < cols; ++j) out.push_back({kRowsPerStep * t + i, j});
  return out;
}

std::vector<Cell> p_cells(int steps, int cols) {
  std::vector<Cell> out;
  out.reserve(static_cast<std::size_t>(2 * steps * cols));
  for (int t = 0; t < steps; ++t)
    for (int i = 3; i < 5; ++i)
      for (int j = 0; j < cols; ++j) out.push_back({kRowsPerStep * t + i, j});
  return out;
}

namespace {

Eigen::VectorXd gather(const Eigen::MatrixXd& x, const std::vector<Cell>& cells) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(cells.size()));
  for (std::size_t k = 0; k < cells.size(); ++k) out(static_cast<Eigen::Index>(k)) = x(cells[k].row, cells[k].col);
  return out;
}

}  // namespace

Eigen::VectorXd extract_y(const Eigen::MatrixXd& x) {
  return gather(x, y_cells(check_steps(x), static_cast<int>(x.cols())));
}

Eigen::VectorXd extract_p(const Eigen::MatrixXd& x) {
  return gather(x, p_cells(check_steps(x), static_cast<int>(x.cols())));
}

Eigen::VectorXd extract_temporal_series(const Eigen::MatrixXd& x, int col, RowKind kind) {
  const int steps = check_steps(x);
  const int k = static_cast<int>(kind);
  if (col < 0 || col >= x.cols()) throw std::out_of_range("extract_temporal_series: column out of range");
  if (k < 0 || k >= kRowsPerStep) throw std::out_of_range("extract_temporal_series: row kind out of range");
  Eigen::VectorXd out(steps);
  for (int t = 0; t < steps; ++t) out(t) = x(kRowsPerStep * t + k, col);
  return out;
}

Eigen::VectorXd stack_sparsity_series(const Eigen::MatrixXd& x) {
  const int steps = check_steps(x);
  Eigen::VectorXd out(3 * steps * x.cols());
  Eigen::Index pos = 0;
  for (int j = 0; j < x.cols(); ++j)
    for (RowKind kind : kSparsitySeries) {
      out.segment(pos, steps) = extract_temporal_series(x, j, kind);
      pos += steps;
    }
  return out;
}

Eigen::VectorXd transformed_sparsity_series(const Eigen::MatrixXd& x, const Eigen::MatrixXd& d2) {
  const int steps = check_steps(x);
  if (d2.cols() != steps) throw DimensionError("transform width does not match the number of time steps");
  const auto len = d2.rows();
  Eigen::VectorXd out(3 * len * x.cols());
  Eigen::Index pos = 0;
  for (int j = 0; j < x.cols(); ++j)
    for (RowKind kind : kSparsitySeries) {
      out.segment(pos, len) = d2 * extract_temporal_series(x, j, kind);
      pos += len;
    }
  return out;
}

namespace {

void write_rows(std::ostream& out, const Eigen::MatrixXd& data, int steps,
                std::span<const PhaseNode> nodes, const ObservationMask* mask) {
  if (static_cast<std::size_t>(data.cols()) != nodes.size())
    throw DimensionError("node list does not match matrix columns");
  const auto old_precision = out.precision(17);
  out << "t,row_kind,bus,phase,value\n";
  for (int t = 0; t < steps; ++t)
    for (int k = 0; k < kRowsPerStep; ++k)
      for (Eigen::Index j = 0; j < data.cols(); ++j) {
        const int r = kRowsPerStep * t + k;
        if (mask && !mask->contains(r, static_cast<int>(j))) continue;
        const auto& node = nodes[static_cast<std::size_t>(j)];
        out << t << ',' << kKindNames[k] << ',' << node.bus << ',' << phase_label(node.phase) << ','
            << data(r, j) << '\n';
      }
  out.precision(old_precision);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

}  // namespace

void write_measurements_csv(std::ostream& out, const BlockMatrix& m, std::span<const PhaseNode> nodes) {
  write_rows(out, m.data, m.steps, nodes, nullptr);
}

void write_masked_csv(std::ostream& out, const MaskedMatrix& m, std::span<const PhaseNode> nodes) {
  write_rows(out, m.values, m.steps, nodes, &m.mask);
}

MaskedMatrix read_measurements_csv(std::istream& in, std::span<const PhaseNode> nodes, int steps) {
  std::map<std::pair<std::string, char>, int> column;
  for (std::size_t j = 0; j < nodes.size(); ++j)
    column[{nodes[j].bus, phase_label(nodes[j].phase)}] = static_cast<int>(j);

  std::string line;
  if (!std::getline(in, line) || line != "t,row_kind,bus,phase,value")
    throw ConfigError("measurement file: expected header 't,row_kind,bus,phase,value'");

  const int rows = kRowsPerStep * steps;
  const int cols = static_cast<int>(nodes.size());
  MaskedMatrix out;
  out.values = Eigen::MatrixXd::Zero(rows, cols);
  out.steps = steps;
  std::vector<Cell> cells;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    const std::string where = "measurement file line " + std::to_string(lineno);
    if (f.size() != 5 || f[3].size() != 1) throw ConfigError(where + ": malformed record");
    int t = 0;
    double value = 0.0;
    try {
      t = std::stoi(f[0]);
      value = std::stod(f[4]);
    } catch (const std::exception&) {
      throw ConfigError(where + ": non-numeric field");
    }
    if (t < 0 || t >= steps) throw ConfigError(where + ": time index out of range");
    const auto it = column.find({f[2], f[3][0]});
    if (it == column.end()) throw ConfigError(where + ": unknown node " + f[2] + "." + f[3]);
    const int r = kRowsPerStep * t + static_cast<int>(parse_row_kind(f[1]));
    out.values(r, it->second) = value;
    cells.push_back({r, it->second});
  }
  out.mask = ObservationMask(rows, cols, std::move(cells));
  return out;
}

void write_mask_csv(std::ostream& out, const ObservationMask& mask) {
  out << "row,col\n";
  for (const auto& c : mask.cells()) out << c.row << ',' << c.col << '\n';
}

ObservationMask read_mask_csv(std::istream& in, int rows, int cols) {
  std::string line;
  if (!std::getline(in, line) || line != "row,col") throw ConfigError("mask file: expected header 'row,col'");
  std::vector<Cell> cells;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 2) throw ConfigError("mask file: malformed record '" + line + "'");
    try {
      cells.push_back({std::stoi(f[0]), std::stoi(f[1])});
    } catch (const std::exception&) {
      throw ConfigError("mask file: non-numeric record '" + line + "'");
    }
  }
  return ObservationMask(rows, cols, std::move(cells));
}

}  // namespace dsse
