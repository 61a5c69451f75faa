#pragma once

#include "qtaccel/codec.hpp"
#include "qtaccel/frame.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace qtaccel {

inline constexpr int kMaxQtDepth = 4;
inline constexpr double kMaxCtuSize = 128.0;
inline constexpr double kQpNorm = 64.0;

/// Leaf CU covering the pixel directly above / left of the current CU.
struct NeighborInfo {
  double j_pp = 0.0; // per-pixel RD cost
  int qt_depth = 0;
};

struct ParentInfo {
  double j_pp = 0.0;
  double rate_pp = 0.0;
  double dist_pp = 0.0;
};

/// Everything the feature extractor may see about a CU at the moment its NS cost is known.
/// Per-pixel quantities are raw values divided by the source block's w*h.
struct CuContext {
  Rect rect;
  int depth = 0;
  int qp = 22;
  RdCost ns_cost;
  std::optional<NeighborInfo> top;
  std::optional<NeighborInfo> left;
  std::optional<ParentInfo> parent;
  CausalPatch patch;
};

inline constexpr std::size_t kNiCount = 4;
inline constexpr std::size_t kPiCount = 3;
inline constexpr std::size_t kBiCount = 4;
inline constexpr std::size_t kHogBins = 8;
inline constexpr std::size_t kGlcmCount = 5;
inline constexpr std::size_t kRegionCount = 8;
inline constexpr std::size_t kRegionStride = kHogBins + kGlcmCount;
inline constexpr std::size_t kNiOffset = 0;
inline constexpr std::size_t kPiOffset = kNiOffset + kNiCount;
inline constexpr std::size_t kBiOffset = kPiOffset + kPiCount;
inline constexpr std::size_t kSiOffset = kBiOffset + kBiCount;
inline constexpr std::size_t kFeatureCount = kSiOffset + kRegionCount * kRegionStride;
static_assert(kFeatureCount == 115);

using FeatureVector = std::array<float, kFeatureCount>;

enum class FeatureGroup : std::uint8_t { NI = 1, PI = 2, BI = 4, HOG = 8, GLCM = 16 };

/// Set of feature groups forced to zero.
class FeatureMask {
public:
  FeatureMask() = default;
  FeatureMask(std::initializer_list<FeatureGroup> groups) {
    for (auto g : groups)
      bits_ |= static_cast<std::uint8_t>(g);
  }
  bool masks(FeatureGroup g) const { return (bits_ & static_cast<std::uint8_t>(g)) != 0; }
  bool none() const { return bits_ == 0; }
  std::uint8_t bits() const { return bits_; }
  /// Parses a comma list such as "NI,PI,BI" or "none".
  static FeatureMask parse(const std::string& text);
  std::string to_string() const;
  bool operator==(const FeatureMask&) const = default;

private:
  std::uint8_t bits_ = 0;
};

/// Pixel region with an optional validity mask (used for the L-shaped causal area).
struct Region {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> px;
  std::vector<std::uint8_t> valid; // empty == all valid

  static Region from(const LumaFrame& block);
  bool is_valid(int x, int y) const {
    return x >= 0 && y >= 0 && x < width && y < height && (valid.empty() || valid[y * width + x]);
  }
  std::uint8_t at(int x, int y) const { return px[y * width + x]; }
};

/// Magnitude-weighted unsigned orientation histogram (8 bins over [0,180)), L1-normalised.
std::array<double, kHogBins> hog8(const Region& region);
std::array<double, kHogBins> hog8(const LumaFrame& block);

struct GlcmStats {
  double entropy = 0.0; // bits / 6, in [0,1]
  double energy = 0.0;
  double homogeneity = 0.0;
  double correlation = 0.0; // raw, in [-1,1]
  double dissimilarity = 0.0;
};

/// Co-occurrence statistics on 8 grey levels, symmetric horizontal offset (1,0).
GlcmStats glcm5(const Region& region);
GlcmStats glcm5(const LumaFrame& block);

/// The eight SI regions of a patch, in layout order: CU, 4 quadrants, top strip, left strip, L-shape.
std::array<Region, kRegionCount> si_regions(const CausalPatch& patch);

FeatureVector build_vector(const CuContext& ctx, const FeatureMask& mask = {});

/// Index -> name table of the feature layout.
const std::vector<std::string>& feature_names();
/// FNV-1a hash of the layout table; stamped into datasets and models.
std::uint64_t feature_layout_hash();

/// Indices belonging to a feature group.
std::vector<std::size_t> group_indices(FeatureGroup g);

/// Zeroes every slot of the groups in `mask`.
void apply_mask(FeatureVector& v, const FeatureMask& mask);

} // namespace qtaccel
