#include "qtaccel/features.hpp"

#include "qtaccel/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace qtaccel {

FeatureMask FeatureMask::parse(const std::string& text) {
  FeatureMask m;
  if (text.empty() || text == "none")
    return m;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "NI")
      m.bits_ |= static_cast<std::uint8_t>(FeatureGroup::NI);
    else if (item == "PI")
      m.bits_ |= static_cast<std::uint8_t>(FeatureGroup::PI);
    else if (item == "BI")
      m.bits_ |= static_cast<std::uint8_t>(FeatureGroup::BI);
    else if (item == "HOG")
      m.bits_ |= static_cast<std::uint8_t>(FeatureGroup::HOG);
    else if (item == "GLCM")
      m.bits_ |= static_cast<std::uint8_t>(FeatureGroup::GLCM);
    else
      throw UsageError("unknown feature group '" + item + "' (expected NI, PI, BI, HOG, GLCM)");
  }
  return m;
}

std::string FeatureMask::to_string() const {
  static const std::pair<FeatureGroup, const char*> names[] = {
      {FeatureGroup::NI, "NI"}, {FeatureGroup::PI, "PI"}, {FeatureGroup::BI, "BI"},
      {FeatureGroup::HOG, "HOG"}, {FeatureGroup::GLCM, "GLCM"}};
  std::string out;
  for (const auto& [g, n] : names) {
    if (!masks(g))
      continue;
    if (!out.empty())
      out += ',';
    out += n;
  }
  return out.empty() ? "none" : out;
}

Region Region::from(const LumaFrame& block) {
  Region r;
  r.width = block.width();
  r.height = block.height();
  r.px.assign(block.samples().begin(), block.samples().end());
  return r;
}

namespace {

void require_region(const Region& region) {
  if (region.width < 2 || region.height < 2)
    throw DataError("texture region must be at least 2x2");
}

} // namespace

std::array<double, kHogBins> hog8(const Region& region) {
  require_region(region);
  std::array<double, kHogBins> hist{};
  const double bin_width = std::numbers::pi / kHogBins;
  // Out-of-region neighbours replicate the centre sample.
  auto sample = [&](int x, int y, int cx, int cy) {
    return region.is_valid(x, y) ? static_cast<double>(region.at(x, y)) : static_cast<double>(region.at(cx, cy));
  };
  for (int y = 0; y < region.height; ++y) {
    for (int x = 0; x < region.width; ++x) {
      if (!region.is_valid(x, y))
        continue;
      const double gx = sample(x + 1, y, x, y) - sample(x - 1, y, x, y);
      const double gy = sample(x, y + 1, x, y) - sample(x, y - 1, x, y);
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0)
        continue;
      double angle = std::atan2(gy, gx);
      if (angle < 0.0)
        angle += std::numbers::pi;
      if (angle >= std::numbers::pi)
        angle -= std::numbers::pi;
      const auto bin = std::min<std::size_t>(static_cast<std::size_t>(angle / bin_width), kHogBins - 1);
      hist[bin] += mag;
    }
  }
  double total = 0.0;
  for (double v : hist)
    total += v;
  if (total < 1e-9)
    return {};
  for (double& v : hist)
    v /= total;
  return hist;
}

std::array<double, kHogBins> hog8(const LumaFrame& block) { return hog8(Region::from(block)); }

GlcmStats glcm5(const Region& region) {
  require_region(region);
  constexpr int levels = 8;
  std::array<double, levels * levels> p{};
  double count = 0.0;
  for (int y = 0; y < region.height; ++y) {
    for (int x = 0; x + 1 < region.width; ++x) {
      if (!region.is_valid(x, y) || !region.is_valid(x + 1, y))
        continue;
      const int a = region.at(x, y) * levels / 256;
      const int b = region.at(x + 1, y) * levels / 256;
      p[a * levels + b] += 1.0;
      p[b * levels + a] += 1.0;
      count += 2.0;
    }
  }
  GlcmStats s;
  if (count == 0.0)
    throw DataError("texture region has no horizontal pixel pairs");
  for (double& v : p)
    v /= count;

  double mu = 0.0;
  for (int i = 0; i < levels; ++i)
    for (int j = 0; j < levels; ++j)
      mu += i * p[i * levels + j];
  double var = 0.0;
  for (int i = 0; i < levels; ++i)
    for (int j = 0; j < levels; ++j)
      var += (i - mu) * (i - mu) * p[i * levels + j];

  double cov = 0.0;
  for (int i = 0; i < levels; ++i) {
    for (int j = 0; j < levels; ++j) {
      const double v = p[i * levels + j];
      if (v == 0.0)
        continue;
      const int diff = std::abs(i - j);
      s.entropy -= v * std::log2(v);
      s.energy += v * v;
      s.homogeneity += v / (1.0 + diff);
      s.dissimilarity += v * diff;
      cov += v * (i - mu) * (j - mu);
    }
  }
  // Symmetric matrix: row and column marginals coincide, so sigma_i * sigma_j = var.
  s.correlation = var > 1e-12 ? std::clamp(cov / var, -1.0, 1.0) : 0.0;
  s.entropy /= 6.0;
  return s;
}

GlcmStats glcm5(const LumaFrame& block) { return glcm5(Region::from(block)); }

std::array<Region, kRegionCount> si_regions(const CausalPatch& patch) {
  const int w = patch.cu.width();
  const int h = patch.cu.height();
  const int hw = w / 2;
  const int hh = h / 2;
  std::array<Region, kRegionCount> r;
  r[0] = Region::from(patch.cu);
  r[1] = Region::from(patch.cu.crop(0, 0, hw, hh));
  r[2] = Region::from(patch.cu.crop(hw, 0, w - hw, hh));
  r[3] = Region::from(patch.cu.crop(0, hh, hw, h - hh));
  r[4] = Region::from(patch.cu.crop(hw, hh, w - hw, h - hh));
  r[5] = Region::from(patch.top);
  r[6] = Region::from(patch.left);

  // L-shape: (4+h) x (4+w) window, valid only in the top four rows and left four columns.
  Region& l = r[7];
  l.width = kCausalBorder + w;
  l.height = kCausalBorder + h;
  l.px.assign(static_cast<std::size_t>(l.width) * l.height, 0);
  l.valid.assign(l.px.size(), 0);
  for (int y = 0; y < l.height; ++y) {
    for (int x = 0; x < l.width; ++x) {
      std::uint8_t v = 0;
      bool in = true;
      if (y < kCausalBorder && x < kCausalBorder)
        v = patch.corner.at(x, y);
      else if (y < kCausalBorder)
        v = patch.top.at(x - kCausalBorder, y);
      else if (x < kCausalBorder)
        v = patch.left.at(x, y - kCausalBorder);
      else
        in = false;
      l.px[y * l.width + x] = v;
      l.valid[y * l.width + x] = in ? 1 : 0;
    }
  }
  return r;
}

FeatureVector build_vector(const CuContext& ctx, const FeatureMask& mask) {
  FeatureVector v{};
  // Cost features are per-pixel costs expressed in bit-equivalents (divided by lambda).
  const double lambda = ctx.ns_cost.lambda;
  const double area = static_cast<double>(ctx.rect.area());

  if (!mask.masks(FeatureGroup::NI)) {
    if (ctx.top) {
      v[kNiOffset + 0] = static_cast<float>(ctx.top->j_pp / lambda);
      v[kNiOffset + 2] = static_cast<float>(static_cast<double>(ctx.top->qt_depth) / kMaxQtDepth);
    }
    if (ctx.left) {
      v[kNiOffset + 1] = static_cast<float>(ctx.left->j_pp / lambda);
      v[kNiOffset + 3] = static_cast<float>(static_cast<double>(ctx.left->qt_depth) / kMaxQtDepth);
    }
  }
  if (!mask.masks(FeatureGroup::PI) && ctx.parent) {
    v[kPiOffset + 0] = static_cast<float>(ctx.parent->j_pp / lambda);
    v[kPiOffset + 1] = static_cast<float>(ctx.parent->rate_pp);
    v[kPiOffset + 2] = static_cast<float>(ctx.parent->dist_pp / lambda);
  }
  if (!mask.masks(FeatureGroup::BI)) {
    v[kBiOffset + 0] = static_cast<float>(ctx.rect.h / kMaxCtuSize);
    v[kBiOffset + 1] = static_cast<float>(ctx.rect.w / kMaxCtuSize);
    v[kBiOffset + 2] = static_cast<float>(ctx.qp / kQpNorm);
    v[kBiOffset + 3] = static_cast<float>(ctx.ns_cost.j / area / lambda);
  }
  const bool want_hog = !mask.masks(FeatureGroup::HOG);
  const bool want_glcm = !mask.masks(FeatureGroup::GLCM);
  if (!want_hog && !want_glcm)
    return v;

  const auto regions = si_regions(ctx.patch);
  for (std::size_t r = 0; r < kRegionCount; ++r) {
    const std::size_t base = kSiOffset + r * kRegionStride;
    if (want_hog) {
      const auto h = hog8(regions[r]);
      for (std::size_t b = 0; b < kHogBins; ++b)
        v[base + b] = static_cast<float>(h[b]);
    }
    if (want_glcm) {
      const auto g = glcm5(regions[r]);
      v[base + kHogBins + 0] = static_cast<float>(g.entropy);
      v[base + kHogBins + 1] = static_cast<float>(g.energy);
      v[base + kHogBins + 2] = static_cast<float>(g.homogeneity);
      v[base + kHogBins + 3] = static_cast<float>((g.correlation + 1.0) / 2.0);
      v[base + kHogBins + 4] = static_cast<float>(g.dissimilarity / 7.0);
    }
  }
  return v;
}

const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n = {"ni.top_j_pp",   "ni.left_j_pp",    "ni.top_qtdepth",  "ni.left_qtdepth",
                                  "pi.parent_j_pp", "pi.parent_rate_pp", "pi.parent_dist_pp", "bi.height",
                                  "bi.width",       "bi.qp",           "bi.ns_j_pp"};
    const char* regions[] = {"cu", "q0", "q1", "q2", "q3", "top", "left", "lshape"};
    const char* glcm[] = {"entropy", "energy", "homogeneity", "correlation", "dissimilarity"};
    for (const char* r : regions) {
      for (std::size_t b = 0; b < kHogBins; ++b)
        n.push_back(std::string("si.") + r + ".hog" + std::to_string(b));
      for (const char* g : glcm)
        n.push_back(std::string("si.") + r + ".glcm_" + g);
    }
    return n;
  }();
  return names;
}

std::uint64_t feature_layout_hash() {
  static const std::uint64_t hash = [] {
    std::uint64_t h = 14695981039346656037ull;
    auto mix = [&h](const std::string& s) {
      for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
      }
      h ^= '\n';
      h *= 1099511628211ull;
    };
    mix("qtaccel-features/1;cost=pp_over_lambda;hog=8u;glcm=8l,(1,0),sym");
    for (const auto& n : feature_names())
      mix(n);
    return h;
  }();
  return hash;
}

std::vector<std::size_t> group_indices(FeatureGroup g) {
  std::vector<std::size_t> out;
  switch (g) {
  case FeatureGroup::NI:
    for (std::size_t i = 0; i < kNiCount; ++i)
      out.push_back(kNiOffset + i);
    break;
  case FeatureGroup::PI:
    for (std::size_t i = 0; i < kPiCount; ++i)
      out.push_back(kPiOffset + i);
    break;
  case FeatureGroup::BI:
    for (std::size_t i = 0; i < kBiCount; ++i)
      out.push_back(kBiOffset + i);
    break;
  case FeatureGroup::HOG:
    for (std::size_t r = 0; r < kRegionCount; ++r)
      for (std::size_t b = 0; b < kHogBins; ++b)
        out.push_back(kSiOffset + r * kRegionStride + b);
    break;
  case FeatureGroup::GLCM:
    for (std::size_t r = 0; r < kRegionCount; ++r)
      for (std::size_t k = 0; k < kGlcmCount; ++k)
        out.push_back(kSiOffset + r * kRegionStride + kHogBins + k);
    break;
  }
  return out;
}

void apply_mask(FeatureVector& v, const FeatureMask& mask) {
  for (auto g : {FeatureGroup::NI, FeatureGroup::PI, FeatureGroup::BI, FeatureGroup::HOG, FeatureGroup::GLCM})
    if (mask.masks(g))
      for (auto i : group_indices(g))
        v[i] = 0.0f;
}

} // namespace qtaccel
