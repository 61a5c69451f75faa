#pragma once

#include "qtaccel/mlp.hpp"
#include "qtaccel/search.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace qtaccel {

enum class Decision : std::uint8_t { Explore, PruneQT };

/// Ratio: the model predicts C'_{QT/NS} directly. Pair: it predicts (C'_NS, C'_QT), as do DQN models.
enum class PolicyKind : std::uint8_t { Ratio, Pair };

/// Prunes the QT recursion of a CU when the predicted QT/NS cost ratio reaches the threshold (inclusive).
Decision decide(std::span<const float> prediction, PolicyKind kind, double threshold);

struct ThresholdPolicy {
  std::shared_ptr<const MlpModel> model;
  double threshold = 1.0;
  std::vector<int> active_sizes{32};
  std::map<int, double> size_thresholds; // optional per-size override of `threshold`

  PolicyKind kind() const { return model->out() == 1 ? PolicyKind::Ratio : PolicyKind::Pair; }
  bool active(int size) const;
  double threshold_for(int size) const;
  void validate() const;
};

/// Processed pixels per QP.
class ComplexityCounter {
public:
  void add(int qp, std::uint64_t pixels) { pixels_[qp] += pixels; }
  std::uint64_t at(int qp) const;
  const std::map<int, std::uint64_t>& per_qp() const { return pixels_; }
  void merge(const ComplexityCounter& other);

private:
  std::map<int, std::uint64_t> pixels_;
};

/// Search observer that runs the policy at every splittable CU of an active size.
class PolicyObserver final : public SearchObserver {
public:
  explicit PolicyObserver(const ThresholdPolicy& policy);
  bool visit(const CuContext& ctx, bool can_split, const PartitionTree& tree, std::int32_t node) override;

  std::uint64_t evaluations() const { return evaluations_; }
  std::uint64_t prunes() const { return prunes_; }

private:
  const ThresholdPolicy& policy_;
  std::uint64_t evaluations_ = 0;
  std::uint64_t prunes_ = 0;
};

PartitionTree pruned_search(const Rect& rect, const CodecConfig& cfg, SearchState& state,
                            const ThresholdPolicy& policy, ComplexityCounter* counter = nullptr);

struct PrunedFrameResult {
  FrameResult frame;
  std::uint64_t evaluations = 0;
  std::uint64_t prunes = 0;
};

PrunedFrameResult encode_frame_pruned(const LumaFrame& frame, const CodecConfig& cfg, const ThresholdPolicy& policy);

/// Per-run report: {qp, threshold, processed_pixels, total_rate_bits, psnr_db}.
std::string run_report_json(int qp, double threshold, std::uint64_t processed_pixels, double rate_bits,
                            double psnr_db);

} // namespace qtaccel
