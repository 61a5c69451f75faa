#pragma once

#include "qtaccel/frame.hpp"

#include <limits>
#include <span>
#include <vector>

namespace qtaccel {

/// Rate-distortion cost of one CU encode. j = distortion + lambda * rate.
struct RdCost {
  double rate = 0.0;       // bits
  double distortion = 0.0; // SSE
  double lambda = 1.0;
  double j = 0.0;

  static RdCost make(double rate, double distortion, double lambda) {
    return {rate, distortion, lambda, distortion + lambda * rate};
  }
  bool operator==(const RdCost&) const = default;
};

struct CodecConfig {
  int ctu = 64;
  int max_depth = 3;
  int qp = 22;
  double split_bits = 2.0;

  /// Throws DataError when the configuration cannot be searched.
  void validate() const;
  int min_cu() const { return ctu >> max_depth; }
};

inline constexpr int kMinQp = 0;
inline constexpr int kMaxQp = 51;
inline constexpr double kModeOverheadBits = 4.0;

double lambda_of_qp(int qp);
double qstep_of_qp(int qp);

/// Lagrangian cost of signalling one QT split: lambda(qp) * split_bits.
double split_signal_cost(const CodecConfig& cfg);

/// Orthonormal 2-D DCT-II (forward) or DCT-III (inverse) of a row-major n x n block.
/// n must be one of 4, 8, 16, 32, 64.
std::vector<double> dct2d(std::span<const double> block, int n, bool inverse);

/// DC value predicted from the adjacent causal row/column (128 when neither is available).
int dc_prediction(const CausalPatch& patch);

struct NsEncodeResult {
  RdCost cost;
  LumaFrame recon;
};

/// No-split encode of the patch CU: DC prediction, DCT, uniform quantisation, rate proxy,
/// reconstruction and SSE. Bit-exact deterministic.
NsEncodeResult encode_ns(const CausalPatch& patch, const CodecConfig& cfg);

/// Proxy bit count of a quantised coefficient block.
double level_bits(std::span<const int> levels);

inline constexpr double kLosslessPsnr = std::numeric_limits<double>::infinity();

/// 10 log10(255^2 / MSE); kLosslessPsnr when the frames are identical.
double psnr(const LumaFrame& orig, const LumaFrame& recon);
double psnr_from_sse(double sse, double pixels);

} // namespace qtaccel
