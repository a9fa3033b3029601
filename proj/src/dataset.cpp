#include "sacloc/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_map>

#include "sacloc/csv.hpp"
#include "sacloc/error.hpp"
#include "sacloc/log.hpp"
#include "sacloc/rng.hpp"

namespace sacloc {

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  return out;
}

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

std::unordered_map<std::string, std::size_t> index_header(const std::vector<std::string_view>& header) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < header.size(); ++i) index.emplace(std::string(header[i]), i);
  return index;
}

std::size_t require_column(const std::unordered_map<std::string, std::size_t>& index,
                           const std::string& name, const std::filesystem::path& path) {
  auto it = index.find(name);
  if (it == index.end()) {
    throw Error(ErrorCode::kMissingColumn, "no column '" + name + "' in " + path.string());
  }
  return it->second;
}

double parse_cell(std::string_view cell, std::size_t row, std::string_view column) {
  double value = 0.0;
  if (!csv::parse_double(cell, value) || !std::isfinite(value)) {
    throw Error(ErrorCode::kMalformedRow, "row " + std::to_string(row) + ", column '" +
                                              std::string(column) + "': not a number: '" +
                                              std::string(cell) + "'");
  }
  return value;
}

}  // namespace

Point2 ApInventory::centroid() const {
  Point2 c;
  if (positions.empty()) return c;
  for (const auto& p : positions) {
    c.x += p.x;
    c.y += p.y;
  }
  c.x /= static_cast<double>(positions.size());
  c.y /= static_cast<double>(positions.size());
  return c;
}

void ApInventory::validate() const {
  if (positions.empty()) throw Error(ErrorCode::kInvalidArgument, "AP inventory is empty");
  if (ap_ids.size() != positions.size()) {
    throw Error(ErrorCode::kInvalidArgument, "AP inventory has " + std::to_string(ap_ids.size()) +
                                                 " ids but " + std::to_string(positions.size()) +
                                                 " positions");
  }
  std::set<std::string> seen;
  for (const auto& id : ap_ids) {
    if (!seen.insert(id).second) throw Error(ErrorCode::kInvalidArgument, "duplicate AP id '" + id + "'");
  }
  for (const auto& p : positions) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw Error(ErrorCode::kInvalidArgument, "non-finite AP coordinate");
    }
  }
}

CoordinateFrame CoordinateFrame::from_inventory(const ApInventory& inventory) {
  CoordinateFrame frame;
  if (inventory.positions.empty()) return frame;
  auto [min_x, max_x] = std::minmax_element(inventory.positions.begin(), inventory.positions.end(),
                                            [](const Point2& a, const Point2& b) { return a.x < b.x; });
  auto [min_y, max_y] = std::minmax_element(inventory.positions.begin(), inventory.positions.end(),
                                            [](const Point2& a, const Point2& b) { return a.y < b.y; });
  frame.origin = {min_x->x, min_y->y};
  const double sx = max_x->x - min_x->x;
  const double sy = max_y->y - min_y->y;
  frame.span = {sx > 1e-12 ? sx : 1.0, sy > 1e-12 ? sy : 1.0};
  return frame;
}

Point2 CoordinateFrame::normalize(Point2 p) const {
  return {(p.x - origin.x) / span.x, (p.y - origin.y) / span.y};
}

Point2 CoordinateFrame::denormalize(Point2 p) const {
  return {origin.x + p.x * span.x, origin.y + p.y * span.y};
}

void SyntheticConfig::validate() const {
  if (ap_count < 3) throw Error(ErrorCode::kInvalidArgument, "synthetic config needs at least 3 APs");
  if (!(noise_sigma >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "noise sigma must be >= 0");
  if (!(width > 0.0) || !(height > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "synthetic area dimensions must be positive");
  }
}

ApInventory load_inventory(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::string line;
  if (!std::getline(in, line) || blank(line)) throw Error(ErrorCode::kEmptyFile, path.string());
  const auto header = csv::split_line(line);
  const auto index = index_header(header);
  const std::size_t id_col = require_column(index, "ap_id", path);
  const std::size_t x_col = require_column(index, "x", path);
  const std::size_t y_col = require_column(index, "y", path);

  ApInventory inventory;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (blank(line)) continue;
    ++row;
    const auto cells = csv::split_line(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::kMalformedRow, "row " + std::to_string(row) + ": expected " +
                                                std::to_string(header.size()) + " cells, got " +
                                                std::to_string(cells.size()));
    }
    inventory.ap_ids.emplace_back(cells[id_col]);
    inventory.positions.push_back({parse_cell(cells[x_col], row, "x"), parse_cell(cells[y_col], row, "y")});
  }
  if (inventory.positions.empty()) throw Error(ErrorCode::kEmptyFile, path.string() + " has no rows");
  inventory.validate();
  return inventory;
}

void write_inventory(const std::filesystem::path& path, const ApInventory& inventory) {
  auto out = open_output(path);
  out << "ap_id,x,y\n";
  for (std::size_t i = 0; i < inventory.size(); ++i) {
    out << inventory.ap_ids[i] << ',' << csv::format_double(inventory.positions[i].x) << ','
        << csv::format_double(inventory.positions[i].y) << '\n';
  }
  if (!out) throw Error(ErrorCode::kIoError, "write failed: " + path.string());
}

std::vector<FingerprintSample> load_fingerprints(const std::filesystem::path& path,
                                                 const ApInventory& inventory) {
  auto in = open_input(path);
  std::string line;
  if (!std::getline(in, line) || blank(line)) throw Error(ErrorCode::kEmptyFile, path.string());
  const auto header = csv::split_line(line);
  const auto index = index_header(header);

  std::vector<std::size_t> rssi_cols;
  rssi_cols.reserve(inventory.size());
  for (const auto& id : inventory.ap_ids) rssi_cols.push_back(require_column(index, id, path));
  const std::size_t x_col = require_column(index, "x", path);
  const std::size_t y_col = require_column(index, "y", path);
  const auto ref_it = index.find("ref_point_id");
  const bool has_ref = ref_it != index.end();

  std::vector<bool> used(header.size(), false);
  for (auto c : rssi_cols) used[c] = true;
  used[x_col] = used[y_col] = true;
  if (has_ref) used[ref_it->second] = true;
  std::vector<std::string> ignored;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (!used[c]) ignored.emplace_back(header[c]);
  }
  if (!ignored.empty()) {
    log().warn("{}: ignoring {} extra column(s), first '{}'", path.string(), ignored.size(), ignored.front());
  }

  std::vector<FingerprintSample> samples;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (blank(line)) continue;
    ++row;
    const auto cells = csv::split_line(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::kMalformedRow, "row " + std::to_string(row) + ": expected " +
                                                std::to_string(header.size()) + " cells, got " +
                                                std::to_string(cells.size()));
    }
    FingerprintSample sample;
    sample.rssi.reserve(rssi_cols.size());
    for (std::size_t j = 0; j < rssi_cols.size(); ++j) {
      const double v = parse_cell(cells[rssi_cols[j]], row, inventory.ap_ids[j]);
      if (is_detected(v) && v > 0.0) {
        throw Error(ErrorCode::kMalformedRow, "row " + std::to_string(row) + ", column '" +
                                                  inventory.ap_ids[j] + "': RSSI " + std::string(cells[rssi_cols[j]]) +
                                                  " is positive and not the sentinel 100");
      }
      sample.rssi.push_back(v);
    }
    sample.truth = {parse_cell(cells[x_col], row, "x"), parse_cell(cells[y_col], row, "y")};
    if (has_ref) sample.ref_point_id = static_cast<std::int64_t>(parse_cell(cells[ref_it->second], row, "ref_point_id"));
    samples.push_back(std::move(sample));
  }
  if (samples.empty()) throw Error(ErrorCode::kEmptyFile, path.string() + " has no data rows");
  return samples;
}

void write_fingerprints(const std::filesystem::path& path, const ApInventory& inventory,
                        std::span<const FingerprintSample> samples) {
  const bool with_ref = std::any_of(samples.begin(), samples.end(),
                                    [](const FingerprintSample& s) { return s.ref_point_id >= 0; });
  auto out = open_output(path);
  for (const auto& id : inventory.ap_ids) out << id << ',';
  out << "x,y" << (with_ref ? ",ref_point_id" : "") << '\n';
  for (const auto& s : samples) {
    if (s.rssi.size() != inventory.size()) {
      throw Error(ErrorCode::kDimensionMismatch, "sample has " + std::to_string(s.rssi.size()) +
                                                     " RSSI values, inventory has " +
                                                     std::to_string(inventory.size()));
    }
    for (double v : s.rssi) out << csv::format_double(v) << ',';
    out << csv::format_double(s.truth.x) << ',' << csv::format_double(s.truth.y);
    if (with_ref) out << ',' << s.ref_point_id;
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::kIoError, "write failed: " + path.string());
}

std::pair<std::vector<FingerprintSample>, std::vector<FingerprintSample>> split_train_calibration(
    std::span<const FingerprintSample> samples, double fraction, std::uint64_t seed) {
  if (samples.empty()) throw Error(ErrorCode::kEmptyInput, "cannot split an empty sample list");
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "split fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed, "split");
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
  const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(samples.size())));
  std::pair<std::vector<FingerprintSample>, std::vector<FingerprintSample>> out;
  out.first.reserve(n_train);
  out.second.reserve(samples.size() - n_train);
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? out.first : out.second).push_back(samples[order[i]]);
  }
  return out;
}

double normalize_rssi(double rssi, const RssiScale& scale) {
  if (!is_detected(rssi)) return 0.0;
  return std::clamp((rssi - scale.floor) / (scale.ceiling - scale.floor), 0.0, 1.0);
}

std::vector<double> normalize_rssi(std::span<const double> rssi, const RssiScale& scale) {
  if (!(scale.floor < scale.ceiling)) {
    throw Error(ErrorCode::kInvalidArgument, "RSSI floor must be below the ceiling");
  }
  std::vector<double> out(rssi.size());
  std::transform(rssi.begin(), rssi.end(), out.begin(), [&](double v) { return normalize_rssi(v, scale); });
  return out;
}

double path_loss_rssi(double distance, double reference_power, double exponent) {
  return reference_power - 10.0 * exponent * std::log10(std::max(distance, 1e-9));
}

std::vector<FingerprintSample> generate_samples(const ApInventory& inventory,
                                                const SyntheticConfig& cfg,
                                                std::uint64_t stream) {
  cfg.validate();
  Rng rng = Rng(cfg.seed, "samples").fork(stream);
  std::vector<FingerprintSample> samples;
  samples.reserve(cfg.sample_count);
  for (std::size_t s = 0; s < cfg.sample_count; ++s) {
    FingerprintSample sample;
    sample.truth = {rng.uniform(0.0, cfg.width), rng.uniform(0.0, cfg.height)};
    sample.rssi.reserve(inventory.size());
    for (const auto& ap : inventory.positions) {
      const double d = std::hypot(sample.truth.x - ap.x, sample.truth.y - ap.y);
      double v = path_loss_rssi(d, cfg.reference_power, cfg.path_loss_exponent);
      if (cfg.noise_sigma > 0.0) v += cfg.noise_sigma * rng.normal();
      v = std::min(v, 0.0);
      sample.rssi.push_back(v < cfg.detection_floor ? kRssiSentinel : v);
    }
    samples.push_back(std::move(sample));
  }
  return samples;
}

std::pair<ApInventory, std::vector<FingerprintSample>> generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed, "aps");
  ApInventory inventory;
  for (std::size_t i = 0; i < cfg.ap_count; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "AP%03zu", i + 1);
    inventory.ap_ids.emplace_back(id);
    inventory.positions.push_back({rng.uniform(0.0, cfg.width), rng.uniform(0.0, cfg.height)});
  }
  auto samples = generate_samples(inventory, cfg, 0);
  return {std::move(inventory), std::move(samples)};
}

}  // namespace sacloc
