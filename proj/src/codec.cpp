#include "qtaccel/codec.hpp"

#include "qtaccel/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <numbers>
#include <string>

namespace qtaccel {

void CodecConfig::validate() const {
  if (ctu != 16 && ctu != 32 && ctu != 64)
    throw DataError("codec ctu must be 16, 32 or 64, got " + std::to_string(ctu));
  if (max_depth < 1 || max_depth > 4)
    throw DataError("max_depth must be in [1,4], got " + std::to_string(max_depth));
  if (min_cu() < 4)
    throw DataError("ctu/2^max_depth must be at least 4");
  if (qp < kMinQp || qp > kMaxQp)
    throw DataError("qp out of range: " + std::to_string(qp));
  if (!(split_bits >= 0.0) || !std::isfinite(split_bits))
    throw DataError("split_bits must be a finite non-negative number");
}

double lambda_of_qp(int qp) {
  if (qp < kMinQp || qp > kMaxQp)
    throw DataError("qp out of range: " + std::to_string(qp));
  return 0.57 * std::exp2((qp - 12) / 3.0);
}

double qstep_of_qp(int qp) {
  if (qp < kMinQp || qp > kMaxQp)
    throw DataError("qp out of range: " + std::to_string(qp));
  return std::exp2((qp - 4) / 6.0);
}

double split_signal_cost(const CodecConfig& cfg) { return lambda_of_qp(cfg.qp) * cfg.split_bits; }

namespace {

// basis[k * n + i] = a_k cos(pi (2i + 1) k / 2n)
struct DctBasis {
  int n = 0;
  std::vector<double> m;
};

const DctBasis& basis_for(int n) {
  static const std::array<DctBasis, 5> tables = [] {
    std::array<DctBasis, 5> t;
    for (int s = 0; s < 5; ++s) {
      const int size = 4 << s;
      t[s].n = size;
      t[s].m.resize(static_cast<std::size_t>(size) * size);
      for (int k = 0; k < size; ++k) {
        const double a = k == 0 ? std::sqrt(1.0 / size) : std::sqrt(2.0 / size);
        for (int i = 0; i < size; ++i)
          t[s].m[k * size + i] = a * std::cos(std::numbers::pi * (2 * i + 1) * k / (2.0 * size));
      }
    }
    return t;
  }();
  if (n < 4 || n > 64 || !std::has_single_bit(static_cast<unsigned>(n)))
    throw DataError("unsupported transform size " + std::to_string(n));
  return tables[std::countr_zero(static_cast<unsigned>(n)) - 2];
}

} // namespace

std::vector<double> dct2d(std::span<const double> block, int n, bool inverse) {
  const auto& b = basis_for(n).m;
  if (block.size() != static_cast<std::size_t>(n) * n)
    throw DataError("dct2d expects a square " + std::to_string(n) + "x" + std::to_string(n) + " block");
  std::vector<double> tmp(block.size(), 0.0);
  std::vector<double> out(block.size(), 0.0);
  // forward: out = B X B^T, inverse: out = B^T X B
  if (!inverse) {
    for (int k = 0; k < n; ++k)
      for (int i = 0; i < n; ++i) {
        const double c = b[k * n + i];
        for (int j = 0; j < n; ++j)
          tmp[k * n + j] += c * block[i * n + j];
      }
    for (int r = 0; r < n; ++r)
      for (int k = 0; k < n; ++k) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j)
          acc += tmp[r * n + j] * b[k * n + j];
        out[r * n + k] = acc;
      }
  } else {
    for (int k = 0; k < n; ++k)
      for (int i = 0; i < n; ++i) {
        const double c = b[k * n + i];
        for (int j = 0; j < n; ++j)
          tmp[i * n + j] += c * block[k * n + j];
      }
    for (int r = 0; r < n; ++r)
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int k = 0; k < n; ++k)
          acc += tmp[r * n + k] * b[k * n + j];
        out[r * n + j] = acc;
      }
  }
  return out;
}

int dc_prediction(const CausalPatch& patch) {
  long sum = 0;
  long count = 0;
  if (patch.top_available) {
    const int row = patch.top.height() - 1;
    for (int x = 0; x < patch.top.width(); ++x)
      sum += patch.top.at(x, row);
    count += patch.top.width();
  }
  if (patch.left_available) {
    const int col = patch.left.width() - 1;
    for (int y = 0; y < patch.left.height(); ++y)
      sum += patch.left.at(col, y);
    count += patch.left.height();
  }
  if (count == 0)
    return kBorderSubstitute;
  return static_cast<int>((sum + count / 2) / count);
}

double level_bits(std::span<const int> levels) {
  double bits = static_cast<double>(levels.size()) + kModeOverheadBits; // one significance bit per coefficient
  for (int level : levels) {
    if (level == 0)
      continue;
    const auto mag = static_cast<unsigned>(std::abs(level));
    bits += 2.0 * (std::bit_width(mag) - 1) + 3.0;
  }
  return bits;
}

NsEncodeResult encode_ns(const CausalPatch& patch, const CodecConfig& cfg) {
  const int n = patch.cu.width();
  if (n != patch.cu.height())
    throw DataError("encode_ns requires a square CU");
  const double lambda = lambda_of_qp(cfg.qp);
  const double step = qstep_of_qp(cfg.qp);
  const int pred = dc_prediction(patch);

  const auto pixels = patch.cu.samples();
  std::vector<double> residual(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i)
    residual[i] = static_cast<double>(pixels[i]) - pred;

  const auto coef = dct2d(residual, n, false);
  std::vector<int> levels(coef.size());
  std::vector<double> dequant(coef.size());
  for (std::size_t i = 0; i < coef.size(); ++i) {
    levels[i] = static_cast<int>(std::round(coef[i] / step));
    dequant[i] = levels[i] * step;
  }
  const double rate = level_bits(levels);

  const auto rec_res = dct2d(dequant, n, true);
  NsEncodeResult out{{}, LumaFrame(n, n)};
  auto rec = out.recon.samples();
  double sse = 0.0;
  for (std::size_t i = 0; i < rec.size(); ++i) {
    const long v = std::lround(pred + rec_res[i]);
    rec[i] = static_cast<std::uint8_t>(std::clamp<long>(v, 0, 255));
    const double d = static_cast<double>(pixels[i]) - rec[i];
    sse += d * d;
  }
  out.cost = RdCost::make(rate, sse, lambda);
  return out;
}

double psnr_from_sse(double sse, double pixels) {
  if (sse <= 0.0)
    return kLosslessPsnr;
  return 10.0 * std::log10(255.0 * 255.0 / (sse / pixels));
}

double psnr(const LumaFrame& orig, const LumaFrame& recon) {
  if (orig.width() != recon.width() || orig.height() != recon.height())
    throw DataError("psnr: dimension mismatch");
  double sse = 0.0;
  const auto a = orig.samples();
  const auto b = recon.samples();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    sse += d * d;
  }
  return psnr_from_sse(sse, static_cast<double>(a.size()));
}

} // namespace qtaccel
