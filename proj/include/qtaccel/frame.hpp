#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace qtaccel {

/// Row-major 8-bit luma plane.
class LumaFrame {
public:
  LumaFrame() = default;
  LumaFrame(int width, int height, std::uint8_t fill = 0);
  LumaFrame(int width, int height, std::vector<std::uint8_t> samples);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return samples_.empty(); }

  std::uint8_t at(int x, int y) const { return samples_[static_cast<std::size_t>(y) * width_ + x]; }
  std::uint8_t& at(int x, int y) { return samples_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<const std::uint8_t> samples() const { return samples_; }
  std::span<std::uint8_t> samples() { return samples_; }

  /// Copy of the sub-rectangle [x, x+w) x [y, y+h).
  LumaFrame crop(int x, int y, int w, int h) const;

  bool operator==(const LumaFrame&) const = default;

private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> samples_;
};

struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  /// Set on border CTUs that were cut short by the frame edge.
  bool cropped = false;

  int area() const { return w * h; }
  bool operator==(const Rect&) const = default;
};

enum class FrameFormat { Pgm8, RawY };

/// Loads a P5 PGM (maxval 255) or a headerless 8-bit luma file.
/// `width`/`height` are required for RawY and ignored for Pgm8.
LumaFrame load_frame(const std::filesystem::path& path, FrameFormat format, int width = 0, int height = 0);
LumaFrame decode_pgm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pgm(const LumaFrame& frame);
void save_pgm(const std::filesystem::path& path, const LumaFrame& frame);

/// One of the 8 flip/transpose symmetries: out(x, y) = in(sx, sy) where (sx, sy) is (y, x) when bit 2 is set,
/// else (x, y); bit 0 then mirrors sx and bit 1 mirrors sy within the source frame.
LumaFrame dihedral(const LumaFrame& frame, int transform);
/// Every frame followed by its 7 other symmetries.
std::vector<LumaFrame> dihedral_augment(const std::vector<LumaFrame>& frames);

/// Raster-scan CTU grid. Partial CTUs on the right/bottom edge are cropped and flagged.
std::vector<Rect> tile_ctus(const LumaFrame& frame, int ctu);

/// Per-pixel "already reconstructed" flags for a frame.
class EncodedMask {
public:
  EncodedMask() = default;
  EncodedMask(int width, int height) : width_(width), height_(height), flags_(static_cast<std::size_t>(width) * height, 0) {}

  int width() const { return width_; }
  int height() const { return height_; }
  bool encoded(int x, int y) const;
  void mark(const Rect& rect, bool value = true);
  /// True when every pixel of `rect` lies in the frame and is encoded.
  bool all_encoded(const Rect& rect) const;

private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> flags_;
};

inline constexpr int kCausalBorder = 4;
inline constexpr std::uint8_t kBorderSubstitute = 128;

/// A CU plus its four-pixel causal frame on the top and left.
struct CausalPatch {
  Rect rect;
  LumaFrame cu;     // w x h, original samples
  LumaFrame top;    // w x 4
  LumaFrame left;   // 4 x h
  LumaFrame corner; // 4 x 4
  bool top_available = false;
  bool left_available = false;
  bool corner_available = false;
};

/// CU samples come from `original`; borders from `recon` where `mask` marks them encoded,
/// otherwise the whole border strip is substituted with 128.
CausalPatch causal_patch(const LumaFrame& original, const LumaFrame& recon, const Rect& rect, const EncodedMask& mask);
CausalPatch causal_patch(const LumaFrame& frame, const Rect& rect, const EncodedMask& mask);

} // namespace qtaccel
