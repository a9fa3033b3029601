#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace sacloc {

// Dataset code for "AP not detected in this scan". Never a power value.
inline constexpr double kRssiSentinel = 100.0;

inline bool is_detected(double rssi) { return rssi != kRssiSentinel; }

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

struct ApInventory {
  std::vector<std::string> ap_ids;
  std::vector<Point2> positions;  // meters

  std::size_t size() const { return positions.size(); }
  Point2 centroid() const;
  // Throws InvalidArgument on duplicate ids, count mismatch or non-finite coordinates.
  void validate() const;
};

struct FingerprintSample {
  std::vector<double> rssi;  // dBm, or kRssiSentinel
  Point2 truth;              // meters
  std::int64_t ref_point_id = -1;
};

struct DatasetSplit {
  std::vector<FingerprintSample> train;
  std::vector<FingerprintSample> calibration;
  std::vector<FingerprintSample> test;
  std::uint64_t seed = 0;
};

// Maps meter coordinates onto [0,1] per axis over the AP bounding box.
// Degenerate axes (all APs share a coordinate) use a unit span.
struct CoordinateFrame {
  Point2 origin{0.0, 0.0};
  Point2 span{1.0, 1.0};

  static CoordinateFrame from_inventory(const ApInventory& inventory);
  Point2 normalize(Point2 p) const;
  Point2 denormalize(Point2 p) const;
};

struct SyntheticConfig {
  std::size_t ap_count = 20;
  double width = 100.0;   // meters
  double height = 40.0;   // meters
  double path_loss_exponent = 3.0;
  double reference_power = -40.0;  // dBm at 1 m
  double noise_sigma = 4.0;        // dB
  double detection_floor = -95.0;  // dBm
  std::size_t sample_count = 1000;
  std::uint64_t seed = 1;

  void validate() const;
};

struct RssiScale {
  double floor = -100.0;
  double ceiling = -30.0;
};

ApInventory load_inventory(const std::filesystem::path& path);
void write_inventory(const std::filesystem::path& path, const ApInventory& inventory);

// Reads the fingerprint CSV: one column per inventory AP id plus `x` and `y`.
// Columns are matched by header name; unknown columns are ignored with a warning.
std::vector<FingerprintSample> load_fingerprints(const std::filesystem::path& path,
                                                 const ApInventory& inventory);
void write_fingerprints(const std::filesystem::path& path, const ApInventory& inventory,
                        std::span<const FingerprintSample> samples);

// Deterministic Fisher-Yates shuffle under `seed`, then the first
// round(fraction * N) samples become the training set.
std::pair<std::vector<FingerprintSample>, std::vector<FingerprintSample>> split_train_calibration(
    std::span<const FingerprintSample> samples, double fraction, std::uint64_t seed);

double normalize_rssi(double rssi, const RssiScale& scale = {});
std::vector<double> normalize_rssi(std::span<const double> rssi, const RssiScale& scale = {});

// Log-distance path loss: RSSI = P0 - 10 n log10(d) + N(0, sigma), capped at
// 0 dBm; readings below the detection floor are stored as the sentinel.
double path_loss_rssi(double distance, double reference_power, double exponent);
std::pair<ApInventory, std::vector<FingerprintSample>> generate_synthetic(const SyntheticConfig& cfg);
// Draws samples for an existing inventory (e.g. a separate test file).
std::vector<FingerprintSample> generate_samples(const ApInventory& inventory,
                                                const SyntheticConfig& cfg,
                                                std::uint64_t stream);

}  // namespace sacloc
