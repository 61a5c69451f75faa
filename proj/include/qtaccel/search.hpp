#pragma once

#include "qtaccel/codec.hpp"
#include "qtaccel/features.hpp"
#include "qtaccel/frame.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qtaccel {

enum class SplitMode : std::uint8_t { NS, QT };

struct PartitionNode {
  Rect rect;
  int depth = 0;
  RdCost ns;
  std::optional<double> qt_j; // Eq. 6 aggregate; absent when the node was not recursed
  SplitMode chosen = SplitMode::NS;
  bool pruned = false; // QT skipped by a pruning policy
  std::array<std::int32_t, 4> children{-1, -1, -1, -1};

  bool has_children() const { return children[0] >= 0; }
  double best_j() const { return chosen == SplitMode::QT ? *qt_j : ns.j; }
};

/// Nodes in depth-first evaluation order; nodes[0] is the CTU root.
struct PartitionTree {
  std::vector<PartitionNode> nodes;
  std::uint64_t processed_pixels = 0; // sum of w*h over every NS encode performed
  double split_cost = 0.0;            // Delta_QT used for this tree

  const PartitionNode& root() const { return nodes.front(); }
  double total_j() const { return root().best_j(); }
  /// Rate / distortion of the chosen partition (split flags included in the rate).
  double total_rate(double split_bits) const;
  double total_distortion() const;
  /// Sum of node areas; equals processed_pixels by construction.
  std::uint64_t recount_pixels() const;
  std::string to_json() const;
};

/// Frame-wide mutable state shared by the CTU searches of one run.
class SearchState {
public:
  explicit SearchState(const LumaFrame& original);

  const LumaFrame& original() const { return *original_; }
  const LumaFrame& recon() const { return recon_; }
  const EncodedMask& mask() const { return mask_; }

  std::optional<NeighborInfo> neighbor_at(int x, int y) const;
  void commit(const Rect& rect, const LumaFrame& block, double j_pp, int depth);

private:
  struct Cell {
    double j_pp = 0.0;
    int depth = 0;
    bool valid = false;
  };
  const LumaFrame* original_;
  LumaFrame recon_;
  EncodedMask mask_;
  int grid_w_;
  std::vector<Cell> grid_; // 4x4 granularity
};

/// Hook invoked after every NS encode. Returning true skips the QT recursion of that node.
class SearchObserver {
public:
  virtual ~SearchObserver() = default;
  virtual bool visit(const CuContext& ctx, bool can_split, const PartitionTree& tree, std::int32_t node) = 0;
};

/// Depth-first RDO quadtree search of one CTU. Reconstructions are committed in causal order.
PartitionTree quadtree_search(const Rect& rect, const CodecConfig& cfg, SearchState& state,
                              SearchObserver* observer = nullptr);

PartitionTree exhaustive_search(const Rect& rect, const CodecConfig& cfg, SearchState& state);

/// QT cost of a node: sum of the children's minimum costs plus the split signalling cost.
double aggregate_qt_cost(std::span<const double> child_min_costs, double split_cost);

/// Minimum root cost of a full quadtree whose NS costs are listed in depth-first preorder
/// (1 + 4 + 16 + ... entries for `max_depth` levels below the root), recursing top-down.
double quadtree_min_cost(std::span<const double> ns_preorder, int max_depth, double split_cost);

/// Result of coding every full CTU of a frame.
struct FrameResult {
  std::vector<PartitionTree> ctus;
  LumaFrame coded;   // original restricted to the full-CTU area
  LumaFrame recon;   // reconstruction of the same area
  std::uint64_t processed_pixels = 0;
  double rate_bits = 0.0;
  double distortion = 0.0;
  double total_j = 0.0;
  double psnr_db = 0.0;
};

/// Area covered by full CTUs (partial border CTUs are not coded).
Rect coded_area(const LumaFrame& frame, int ctu);

FrameResult encode_frame(const LumaFrame& frame, const CodecConfig& cfg, SearchObserver* observer = nullptr);

/// Re-encodes a CTU following a fixed partition (QT where `split` says so).
/// Used to check that a searched tree is realisable and to enumerate alternatives.
struct ForcedResult {
  double total_j = 0.0;
  std::uint64_t processed_pixels = 0;
};
using SplitPredicate = std::function<bool(const Rect&, int depth)>;
ForcedResult encode_forced(const Rect& rect, const CodecConfig& cfg, SearchState& state, const SplitPredicate& split);

} // namespace qtaccel
