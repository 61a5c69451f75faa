#include "qtaccel/frame.hpp"

#include "qtaccel/error.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <sstream>

namespace qtaccel {

LumaFrame::LumaFrame(int width, int height, std::uint8_t fill)
    : width_(width), height_(height) {
  if (width <= 0 || height <= 0)
    throw DataError("frame dimensions must be positive");
  samples_.assign(static_cast<std::size_t>(width) * height, fill);
}

LumaFrame::LumaFrame(int width, int height, std::vector<std::uint8_t> samples)
    : width_(width), height_(height), samples_(std::move(samples)) {
  if (width <= 0 || height <= 0)
    throw DataError("frame dimensions must be positive");
  if (samples_.size() != static_cast<std::size_t>(width) * height)
    throw DataError("size mismatch: expected " + std::to_string(width * height) + " samples, got " +
                    std::to_string(samples_.size()));
}

LumaFrame LumaFrame::crop(int x, int y, int w, int h) const {
  if (x < 0 || y < 0 || w <= 0 || h <= 0 || x + w > width_ || y + h > height_)
    throw DataError("crop rectangle outside frame");
  LumaFrame out(w, h);
  for (int r = 0; r < h; ++r)
    std::copy_n(&samples_[static_cast<std::size_t>(y + r) * width_ + x], w, &out.at(0, r));
  return out;
}

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Reads one ASCII header token, skipping whitespace and '#' comments.
std::string next_token(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  for (;;) {
    while (pos < bytes.size() && std::isspace(bytes[pos]))
      ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n')
        ++pos;
      continue;
    }
    break;
  }
  std::string token;
  while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#')
    token.push_back(static_cast<char>(bytes[pos++]));
  return token;
}

int parse_header_int(const std::string& token, const char* what) {
  if (token.empty() || !std::all_of(token.begin(), token.end(), [](char c) { return std::isdigit(c); }))
    throw DataError(std::string("malformed PGM header: bad ") + what);
  try {
    return std::stoi(token);
  } catch (const std::exception&) {
    throw DataError(std::string("malformed PGM header: bad ") + what);
  }
}

} // namespace

LumaFrame decode_pgm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  if (next_token(bytes, pos) != "P5")
    throw DataError("malformed PGM header: expected P5");
  const int width = parse_header_int(next_token(bytes, pos), "width");
  const int height = parse_header_int(next_token(bytes, pos), "height");
  const int maxval = parse_header_int(next_token(bytes, pos), "maxval");
  if (width <= 0 || height <= 0)
    throw DataError("malformed PGM header: zero dimension");
  if (maxval != 255)
    throw DataError("unsupported PGM maxval " + std::to_string(maxval) + " (must be 255)");
  if (pos >= bytes.size() || !std::isspace(bytes[pos]))
    throw DataError("malformed PGM header: missing separator");
  ++pos;
  const std::size_t expected = static_cast<std::size_t>(width) * height;
  if (bytes.size() - pos != expected)
    throw DataError("size mismatch: PGM declares " + std::to_string(expected) + " samples, file holds " +
                    std::to_string(bytes.size() - pos));
  return LumaFrame(width, height, std::vector<std::uint8_t>(bytes.begin() + pos, bytes.end()));
}

std::vector<std::uint8_t> encode_pgm(const LumaFrame& frame) {
  std::ostringstream header;
  header << "P5\n" << frame.width() << ' ' << frame.height() << "\n255\n";
  const std::string h = header.str();
  std::vector<std::uint8_t> out(h.begin(), h.end());
  out.insert(out.end(), frame.samples().begin(), frame.samples().end());
  return out;
}

void save_pgm(const std::filesystem::path& path, const LumaFrame& frame) {
  const auto bytes = encode_pgm(frame);
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

LumaFrame load_frame(const std::filesystem::path& path, FrameFormat format, int width, int height) {
  auto bytes = read_bytes(path);
  if (format == FrameFormat::Pgm8)
    return decode_pgm(bytes);
  if (width <= 0 || height <= 0)
    throw DataError("raw-y input requires explicit positive width and height");
  const std::size_t expected = static_cast<std::size_t>(width) * height;
  if (bytes.size() != expected)
    throw DataError("size mismatch: raw-y " + std::to_string(width) + "x" + std::to_string(height) + " needs " +
                    std::to_string(expected) + " bytes, file holds " + std::to_string(bytes.size()));
  return LumaFrame(width, height, std::move(bytes));
}

std::vector<Rect> tile_ctus(const LumaFrame& frame, int ctu) {
  if (ctu != 32 && ctu != 64 && ctu != 128)
    throw DataError("ctu size must be 32, 64 or 128");
  if (frame.width() < 8 || frame.height() < 8)
    throw DataError("frame smaller than 8x8");
  std::vector<Rect> out;
  for (int y = 0; y < frame.height(); y += ctu) {
    for (int x = 0; x < frame.width(); x += ctu) {
      Rect r{x, y, std::min(ctu, frame.width() - x), std::min(ctu, frame.height() - y)};
      r.cropped = r.w != ctu || r.h != ctu;
      out.push_back(r);
    }
  }
  return out;
}

bool EncodedMask::encoded(int x, int y) const {
  if (x < 0 || y < 0 || x >= width_ || y >= height_)
    return false;
  return flags_[static_cast<std::size_t>(y) * width_ + x] != 0;
}

void EncodedMask::mark(const Rect& rect, bool value) {
  const int x1 = std::min(rect.x + rect.w, width_);
  const int y1 = std::min(rect.y + rect.h, height_);
  for (int y = std::max(rect.y, 0); y < y1; ++y)
    for (int x = std::max(rect.x, 0); x < x1; ++x)
      flags_[static_cast<std::size_t>(y) * width_ + x] = value ? 1 : 0;
}

bool EncodedMask::all_encoded(const Rect& rect) const {
  if (rect.x < 0 || rect.y < 0 || rect.x + rect.w > width_ || rect.y + rect.h > height_)
    return false;
  for (int y = rect.y; y < rect.y + rect.h; ++y)
    for (int x = rect.x; x < rect.x + rect.w; ++x)
      if (!flags_[static_cast<std::size_t>(y) * width_ + x])
        return false;
  return true;
}

namespace {

// Copies `area` out of `recon` when fully available, else a 128-filled block.
LumaFrame border_block(const LumaFrame& recon, const EncodedMask& mask, const Rect& area, bool& available) {
  available = mask.all_encoded(area);
  if (!available)
    return LumaFrame(area.w, area.h, kBorderSubstitute);
  return recon.crop(area.x, area.y, area.w, area.h);
}

} // namespace

CausalPatch causal_patch(const LumaFrame& original, const LumaFrame& recon, const Rect& rect, const EncodedMask& mask) {
  if (rect.x < 0 || rect.y < 0 || rect.w <= 0 || rect.h <= 0 || rect.x + rect.w > original.width() ||
      rect.y + rect.h > original.height())
    throw DataError("CU rectangle outside frame");
  CausalPatch p;
  p.rect = rect;
  p.cu = original.crop(rect.x, rect.y, rect.w, rect.h);
  p.top = border_block(recon, mask, {rect.x, rect.y - kCausalBorder, rect.w, kCausalBorder}, p.top_available);
  p.left = border_block(recon, mask, {rect.x - kCausalBorder, rect.y, kCausalBorder, rect.h}, p.left_available);
  p.corner = border_block(recon, mask, {rect.x - kCausalBorder, rect.y - kCausalBorder, kCausalBorder, kCausalBorder},
                          p.corner_available);
  return p;
}

CausalPatch causal_patch(const LumaFrame& frame, const Rect& rect, const EncodedMask& mask) {
  return causal_patch(frame, frame, rect, mask);
}

LumaFrame dihedral(const LumaFrame& frame, int transform) {
  if (transform < 0 || transform > 7)
    throw UsageError("dihedral transform must be in [0, 7], got " + std::to_string(transform));
  const bool transpose = (transform & 4) != 0;
  const int w = transpose ? frame.height() : frame.width();
  const int h = transpose ? frame.width() : frame.height();
  LumaFrame out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int sx = transpose ? y : x;
      int sy = transpose ? x : y;
      if (transform & 1)
        sx = frame.width() - 1 - sx;
      if (transform & 2)
        sy = frame.height() - 1 - sy;
      out.at(x, y) = frame.at(sx, sy);
    }
  return out;
}

std::vector<LumaFrame> dihedral_augment(const std::vector<LumaFrame>& frames) {
  std::vector<LumaFrame> out;
  out.reserve(frames.size() * 8);
  for (const auto& f : frames)
    for (int t = 0; t < 8; ++t)
      out.push_back(t == 0 ? f : dihedral(f, t));
  return out;
}

} // namespace qtaccel
