#pragma once

#include "qtaccel/decision.hpp"
#include "qtaccel/mlp.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qtaccel {

/// Totals of one frame set at one QP.
struct QpStats {
  int qp = 0;
  std::uint64_t pixels = 0;
  double rate_bits = 0.0;
  double sse = 0.0;
  double coded_pixels = 0.0;
  std::uint64_t prunes = 0;

  double psnr_db() const { return psnr_from_sse(sse, coded_pixels); }
};

struct SetResult {
  std::map<int, QpStats> per_qp;

  std::map<int, std::uint64_t> pixels() const;
};

/// Codes every frame at every QP (exhaustively when `policy` is null), in parallel over (frame, QP).
SetResult run_set(const std::vector<LumaFrame>& frames, const CodecConfig& cfg, const std::vector<int>& qps,
                  const ThresholdPolicy* policy = nullptr, int jobs = 1);

/// Mean relative saving of processed pixels over the QPs, in percent.
double delta_c(const std::map<int, std::uint64_t>& anchor, const std::map<int, std::uint64_t>& test);

struct RdPoint {
  double rate = 0.0; // total bits
  double psnr = 0.0; // dB
};

struct RdCurve {
  std::vector<RdPoint> points; // sorted by rate

  static RdCurve from(const SetResult& r);
  static RdCurve from(std::vector<RdPoint> points);
};

/// Bjontegaard delta rate in percent (cubic fit of log10 rate over PSNR, integrated over the overlap).
double bd_rate(const RdCurve& anchor, const RdCurve& test);

struct TradeoffPoint {
  double threshold = 0.0;
  double delta_c = 0.0;
  double bd_rate = 0.0;
  SetResult stats;
};

struct SweepResult {
  SetResult anchor;
  std::vector<TradeoffPoint> points; // ascending threshold
};

/// Runs `policy` at each threshold (ascending) against the exhaustive anchor, computed unless given.
SweepResult sweep(const std::vector<LumaFrame>& frames, const CodecConfig& cfg, const ThresholdPolicy& policy,
                  std::vector<double> thresholds, const std::vector<int>& qps, int jobs = 1,
                  const SetResult* anchor = nullptr);

/// threshold, delta_c_pct, bd_rate_pct, then rate_bits / psnr_db / pixels per QP.
std::string sweep_csv(const SweepResult& s);
/// Anchor metadata and the trade-off points as JSON.
std::string sweep_summary_json(const SweepResult& s, const CodecConfig& cfg, const std::string& model_variant);

/// BD-rate at a target delta_c by linear interpolation between adjacent points; (0, 0) stands for the anchor.
std::optional<double> bd_rate_at(const std::vector<TradeoffPoint>& points, double target_delta_c);

/// Spearman rank correlation (ties get their average rank).
double spearman(std::span<const double> a, std::span<const double> b);

struct AblationConfig {
  std::string name;
  FeatureMask mask;
  std::vector<int> hidden = kDefaultHidden;
};

struct AblationRow {
  std::string name;
  std::string mask;
  std::vector<int> hidden;
  std::optional<double> bd_at_10;
  std::optional<double> bd_at_20;
  SweepResult sweep;
};

struct AblationSetup {
  std::vector<double> thresholds;
  std::vector<int> qps = kDefaultQps;
  std::vector<int> active_sizes{32};
  RegressionHyper hyper;
  std::uint64_t seed = 1;
  int jobs = 1;
};

/// Retrains an N32 model per configuration on `records` and sweeps it on `frames`.
std::vector<AblationRow> run_ablation(const std::vector<AblationConfig>& configs, const std::vector<CuRecord>& records,
                                      const std::vector<LumaFrame>& frames, const CodecConfig& cfg,
                                      const AblationSetup& setup);

std::string ablation_csv(const std::vector<AblationRow>& rows);

} // namespace qtaccel
