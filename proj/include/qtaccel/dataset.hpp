#pragma once

#include "qtaccel/codec.hpp"
#include "qtaccel/features.hpp"
#include "qtaccel/frame.hpp"
#include "qtaccel/search.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace qtaccel {

inline const std::vector<int> kDefaultQps{22, 27, 32, 37};

/// One CU with its features and the per-pixel NS / QT costs found by exhaustive search.
struct CuRecord {
  FeatureVector features{};
  int cu_size = 0;
  int qp = 0;
  double ns_j_pp = 0.0;
  double qt_j_pp = 0.0;
  SplitMode optimal = SplitMode::NS;
};

struct TrajectoryChild {
  FeatureVector features{};
  double ns_j_pp = 0.0;
  double qt_j_pp = 0.0;

  double min_j_pp() const { return std::min(ns_j_pp, qt_j_pp); }
};

/// A 32x32 CU and its four 16x16 sub-CUs (raster order): one two-depth episode.
struct Trajectory {
  int qp = 0;
  FeatureVector state{};
  double ns_j_pp = 0.0;
  double qt_j_pp = 0.0;
  double delta_qt_pp = 0.0; // Delta_QT / (32*32)
  std::array<TrajectoryChild, 4> children{};

  SplitMode optimal() const { return qt_j_pp < ns_j_pp ? SplitMode::QT : SplitMode::NS; }
  /// Relative deviation of the stored QT cost from its Eq. 6 reconstruction.
  double eq6_residual() const;
};

enum class NormalizationMode : std::uint8_t { Ratio, Median };

struct NormalizationSpec {
  NormalizationMode mode = NormalizationMode::Median;
  double c_median = 0.0; // Median mode only
};

/// Normalised regression pairs; y has 1 column (ratio) or 2 (ns, qt).
struct TrainingSet {
  std::vector<FeatureVector> x;
  std::vector<std::array<float, 2>> y;
  int out = 1;
  NormalizationSpec spec;

  std::size_t size() const { return x.size(); }
};

struct CollectOptions {
  std::vector<int> qps = kDefaultQps;
  std::vector<int> sizes{32};
  int jobs = 1;
};

/// Runs exhaustive search over every (frame, QP) and emits one record per CU of a requested size.
/// Records are ordered by frame, QP, CTU raster order, then depth-first within the CTU.
std::vector<CuRecord> collect_records(const std::vector<LumaFrame>& frames, const CodecConfig& cfg,
                                      const CollectOptions& opts);

/// Per cu_size, downsamples the majority split class to the minority count; the result is shuffled.
std::vector<CuRecord> balance(const std::vector<CuRecord>& records, std::uint64_t seed);

std::vector<Trajectory> collect_trajectories(const std::vector<LumaFrame>& frames, const CodecConfig& cfg,
                                             const std::vector<int>& qps = kDefaultQps, int jobs = 1);
std::vector<Trajectory> balance(const std::vector<Trajectory>& trajectories, std::uint64_t seed);

double median(std::vector<double> values);
/// Median of every NS and QT per-pixel cost in the set.
double cost_median(const std::vector<CuRecord>& records);
double cost_median(const std::vector<Trajectory>& trajectories);

/// Ratio mode: y = qt/ns (single CU size only). Median mode: y = (ns, qt) / c_median,
/// c_median computed from the records when spec.c_median is 0.
TrainingSet normalize_targets(const std::vector<CuRecord>& records, NormalizationSpec spec);

void save_records(const std::filesystem::path& path, const std::vector<CuRecord>& records);
std::vector<CuRecord> load_records(const std::filesystem::path& path);
void save_trajectories(const std::filesystem::path& path, const std::vector<Trajectory>& trajectories);
std::vector<Trajectory> load_trajectories(const std::filesystem::path& path);

inline constexpr std::uint16_t kDatasetVersion = 1;

} // namespace qtaccel
