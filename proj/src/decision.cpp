#include "qtaccel/decision.hpp"

#include "qtaccel/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>

namespace qtaccel {

Decision decide(std::span<const float> prediction, PolicyKind kind, double threshold) {
  if (kind == PolicyKind::Ratio) {
    if (prediction.size() != 1)
      throw ModelError("ratio policy expects 1 prediction, got " + std::to_string(prediction.size()));
    return prediction[0] >= threshold ? Decision::PruneQT : Decision::Explore;
  }
  if (prediction.size() != 2)
    throw ModelError("pair policy expects 2 predictions, got " + std::to_string(prediction.size()));
  if (!(prediction[0] > 0.0f))
    throw ModelError("nonpositive predicted NS cost " + std::to_string(prediction[0]));
  return static_cast<double>(prediction[1]) / static_cast<double>(prediction[0]) >= threshold ? Decision::PruneQT
                                                                                              : Decision::Explore;
}

bool ThresholdPolicy::active(int size) const {
  return std::find(active_sizes.begin(), active_sizes.end(), size) != active_sizes.end();
}

double ThresholdPolicy::threshold_for(int size) const {
  const auto it = size_thresholds.find(size);
  return it == size_thresholds.end() ? threshold : it->second;
}

void ThresholdPolicy::validate() const {
  if (!model)
    throw UsageError("threshold policy has no model");
  if (model->out() != 1 && model->out() != 2)
    throw ModelError("policy model must have 1 or 2 outputs");
  check_layout(*model);
  if (!(threshold > 0.0))
    throw UsageError("threshold must be positive");
  for (const auto& [size, t] : size_thresholds)
    if (!(t > 0.0))
      throw UsageError("threshold for size " + std::to_string(size) + " must be positive");
  for (int s : active_sizes)
    if (s != 8 && s != 16 && s != 32)
      throw UsageError("active sizes must be 8, 16 or 32, got " + std::to_string(s));
}

std::uint64_t ComplexityCounter::at(int qp) const {
  const auto it = pixels_.find(qp);
  return it == pixels_.end() ? 0 : it->second;
}

void ComplexityCounter::merge(const ComplexityCounter& other) {
  for (const auto& [qp, n] : other.pixels_)
    pixels_[qp] += n;
}

PolicyObserver::PolicyObserver(const ThresholdPolicy& policy) : policy_(policy) { policy_.validate(); }

bool PolicyObserver::visit(const CuContext& ctx, bool can_split, const PartitionTree&, std::int32_t) {
  if (!can_split || ctx.rect.w != ctx.rect.h || !policy_.active(ctx.rect.w))
    return false;
  const auto v = build_vector(ctx);
  const auto pred = predict(*policy_.model, std::span(&v, 1));
  ++evaluations_;
  const bool prune = decide(pred, policy_.kind(), policy_.threshold_for(ctx.rect.w)) == Decision::PruneQT;
  prunes_ += prune;
  return prune;
}

PartitionTree pruned_search(const Rect& rect, const CodecConfig& cfg, SearchState& state,
                            const ThresholdPolicy& policy, ComplexityCounter* counter) {
  PolicyObserver observer(policy);
  auto tree = quadtree_search(rect, cfg, state, &observer);
  if (counter)
    counter->add(cfg.qp, tree.processed_pixels);
  return tree;
}

PrunedFrameResult encode_frame_pruned(const LumaFrame& frame, const CodecConfig& cfg, const ThresholdPolicy& policy) {
  PolicyObserver observer(policy);
  PrunedFrameResult r;
  r.frame = encode_frame(frame, cfg, &observer);
  r.evaluations = observer.evaluations();
  r.prunes = observer.prunes();
  return r;
}

std::string run_report_json(int qp, double threshold, std::uint64_t processed_pixels, double rate_bits,
                            double psnr_db) {
  nlohmann::json j;
  j["qp"] = qp;
  j["threshold"] = std::isfinite(threshold) ? nlohmann::json(threshold) : nlohmann::json(nullptr);
  j["processed_pixels"] = processed_pixels;
  j["total_rate_bits"] = rate_bits;
  j["psnr_db"] = std::isfinite(psnr_db) ? nlohmann::json(psnr_db) : nlohmann::json(nullptr);
  return j.dump(2);
}

} // namespace qtaccel
