#include "doctest.h"
#include "qtaccel/error.hpp"
#include "qtaccel/features.hpp"
#include "test_util.hpp"

#include <cmath>
#include <cstring>
#include <map>
#include <random>
#include <set>

using namespace qtaccel;

namespace {

// Pair enumeration oracle for GLCM statistics (no matrix, just a multiset of pairs).
GlcmStats glcm_by_pairs(const LumaFrame& f) {
  std::map<std::pair<int, int>, double> counts;
  double total = 0;
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x + 1 < f.width(); ++x) {
      const int a = f.at(x, y) / 32;
      const int b = f.at(x + 1, y) / 32;
      counts[{a, b}] += 1;
      counts[{b, a}] += 1;
      total += 2;
    }
  GlcmStats s;
  for (auto& [k, c] : counts) {
    const double p = c / total;
    s.entropy -= p * std::log2(p);
    s.energy += p * p;
    s.homogeneity += p / (1 + std::abs(k.first - k.second));
    s.dissimilarity += p * std::abs(k.first - k.second);
  }
  s.entropy /= 6.0;
  return s;
}

CuContext context_for(const LumaFrame& cu, int qp) {
  CuContext ctx;
  ctx.rect = {0, 0, cu.width(), cu.height()};
  ctx.qp = qp;
  ctx.ns_cost = RdCost::make(100.0, 2000.0, lambda_of_qp(qp));
  ctx.patch.rect = ctx.rect;
  ctx.patch.cu = cu;
  ctx.patch.top = LumaFrame(cu.width(), 4, 128);
  ctx.patch.left = LumaFrame(4, cu.height(), 128);
  ctx.patch.corner = LumaFrame(4, 4, 128);
  return ctx;
}

} // namespace

TEST_CASE("layout") {
  CHECK(feature_names().size() == kFeatureCount);
  CHECK(std::set<std::string>(feature_names().begin(), feature_names().end()).size() == kFeatureCount);
  CHECK(feature_names()[kBiOffset + 3] == "bi.ns_j_pp");
  CHECK(feature_names()[kFeatureCount - 1] == "si.lshape.glcm_dissimilarity");
  std::size_t total = 0;
  for (auto g : {FeatureGroup::NI, FeatureGroup::PI, FeatureGroup::BI, FeatureGroup::HOG, FeatureGroup::GLCM})
    total += group_indices(g).size();
  CHECK(total == kFeatureCount);
  CHECK(feature_layout_hash() == feature_layout_hash());
}

TEST_CASE("feature mask parsing") {
  CHECK(FeatureMask::parse("none").none());
  const auto m = FeatureMask::parse("NI,PI,BI");
  CHECK(m.masks(FeatureGroup::NI));
  CHECK(m.masks(FeatureGroup::BI));
  CHECK_FALSE(m.masks(FeatureGroup::HOG));
  CHECK(m.to_string() == "NI,PI,BI");
  CHECK(FeatureMask::parse(m.to_string()) == m);
  CHECK_THROWS_AS(FeatureMask::parse("SI"), UsageError);
}

TEST_CASE("hog8") {
  SUBCASE("constant region") {
    const auto h = hog8(LumaFrame(8, 8, 77));
    for (double v : h)
      CHECK(v == 0.0);
  }
  SUBCASE("vertical step edge puts all mass in bin 0") {
    LumaFrame f(8, 8, 0);
    for (int y = 0; y < 8; ++y)
      for (int x = 4; x < 8; ++x)
        f.at(x, y) = 255;
    // Brute force: only pixels at x=3,4 see a gradient, and it is purely horizontal.
    double mass = 0;
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        const int gx = f.at(std::min(x + 1, 7), y) - f.at(std::max(x - 1, 0), y);
        const int gy = f.at(x, std::min(y + 1, 7)) - f.at(x, std::max(y - 1, 0));
        CHECK(gy == 0);
        mass += std::abs(gx);
      }
    CHECK(mass == 2 * 8 * 255);
    const auto h = hog8(f);
    CHECK(h[0] == doctest::Approx(1.0));
    for (std::size_t b = 1; b < kHogBins; ++b)
      CHECK(h[b] == 0.0);
  }
  SUBCASE("horizontal edge lands in the 90 degree bin") {
    LumaFrame f(8, 8, 10);
    for (int y = 4; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        f.at(x, y) = 200;
    const auto h = hog8(f);
    CHECK(h[4] == doctest::Approx(1.0));
  }
  CHECK_THROWS_AS(hog8(LumaFrame(1, 8)), DataError);
}

TEST_CASE("glcm5") {
  SUBCASE("constant region") {
    const auto g = glcm5(LumaFrame(8, 8, 200));
    CHECK(g.entropy == 0.0);
    CHECK(g.energy == 1.0);
    CHECK(g.homogeneity == 1.0);
    CHECK(g.dissimilarity == 0.0);
    CHECK(g.correlation == 0.0);
  }
  SUBCASE("row stripes of levels 0 and 7") {
    LumaFrame f(4, 4, 0);
    for (int y = 1; y < 4; y += 2)
      for (int x = 0; x < 4; ++x)
        f.at(x, y) = 255;
    const auto oracle = glcm_by_pairs(f);
    const auto g = glcm5(f);
    CHECK(oracle.entropy == doctest::Approx(1.0 / 6.0));
    CHECK(g.entropy == doctest::Approx(oracle.entropy));
    CHECK(g.energy == doctest::Approx(0.5));
    CHECK(g.dissimilarity == 0.0);
    CHECK(g.homogeneity == doctest::Approx(1.0));
    CHECK(g.correlation == doctest::Approx(1.0));
  }
  SUBCASE("column stripes: every pair crosses levels") {
    LumaFrame f(4, 4, 0);
    for (int y = 0; y < 4; ++y)
      for (int x = 1; x < 4; x += 2)
        f.at(x, y) = 255;
    const auto g = glcm5(f);
    CHECK(g.dissimilarity == doctest::Approx(7.0));
    CHECK(g.correlation == doctest::Approx(-1.0));
  }
  SUBCASE("matches pair enumeration on random blocks") {
    for (std::uint64_t s = 0; s < 50; ++s) {
      const auto f = testing::random_frame(8, 6, s);
      const auto a = glcm5(f);
      const auto b = glcm_by_pairs(f);
      CHECK(a.entropy == doctest::Approx(b.entropy));
      CHECK(a.energy == doctest::Approx(b.energy));
      CHECK(a.homogeneity == doctest::Approx(b.homogeneity));
      CHECK(a.dissimilarity == doctest::Approx(b.dissimilarity));
    }
  }
  CHECK_THROWS_AS(glcm5(LumaFrame(8, 1)), DataError);
}

TEST_CASE("texture properties over random blocks") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> size(2, 20);
  std::uniform_int_distribution<int> shift(-40, 40);
  for (int trial = 0; trial < 2000; ++trial) {
    const int w = size(rng), h = size(rng);
    const auto f = testing::random_frame(w, h, rng(), 50, 200);
    const auto hist = hog8(f);
    double sum = 0;
    for (double v : hist) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK((sum == 0.0 || std::abs(sum - 1.0) < 1e-6));
    auto shifted = f;
    const int c = shift(rng);
    for (auto& v : shifted.samples())
      v = static_cast<std::uint8_t>(v + c);
    CHECK(hog8(shifted) == hist);
    const auto g = glcm5(f);
    CHECK(g.energy > 0.0);
    CHECK(g.energy <= 1.0);
    CHECK(g.homogeneity > 0.0);
    CHECK(g.homogeneity <= 1.0);
    CHECK(g.correlation >= -1.0);
    CHECK(g.correlation <= 1.0);
    CHECK(g.entropy >= 0.0);
    CHECK(g.entropy <= 1.0);
  }
}

TEST_CASE("build_vector") {
  SUBCASE("block information of a 32x32 CU at qp 22") {
    const auto ctx = context_for(testing::random_frame(32, 32, 1), 22);
    const auto v = build_vector(ctx);
    CHECK(v[kBiOffset + 0] == 0.25f);
    CHECK(v[kBiOffset + 1] == 0.25f);
    CHECK(v[kBiOffset + 2] == 0.34375f);
    CHECK(v[kBiOffset + 3] == doctest::Approx(ctx.ns_cost.j / 1024.0 / lambda_of_qp(22)));
  }
  SUBCASE("root CU at frame origin has no neighbour or parent information") {
    const auto v = build_vector(context_for(testing::random_frame(64, 64, 2), 27));
    for (std::size_t i = 0; i < kNiCount + kPiCount; ++i)
      CHECK(v[i] == 0.0f);
  }
  SUBCASE("neighbour and parent normalisation") {
    auto ctx = context_for(testing::random_frame(16, 16, 2), 22);
    const double lambda = lambda_of_qp(22);
    ctx.top = NeighborInfo{3.0 * lambda, 2};
    ctx.left = NeighborInfo{1.5 * lambda, 4};
    ctx.parent = ParentInfo{2.0 * lambda, 1.25, 0.5 * lambda};
    const auto v = build_vector(ctx);
    CHECK(v[0] == doctest::Approx(3.0));
    CHECK(v[1] == doctest::Approx(1.5));
    CHECK(v[2] == 0.5f);
    CHECK(v[3] == 1.0f);
    CHECK(v[4] == doctest::Approx(2.0));
    CHECK(v[5] == 1.25f);
    CHECK(v[6] == doctest::Approx(0.5));
  }
  SUBCASE("masking zeroes exactly the masked slots") {
    auto ctx = context_for(testing::random_frame(16, 16, 3), 32);
    ctx.top = NeighborInfo{10.0, 1};
    ctx.parent = ParentInfo{10.0, 2.0, 5.0};
    const auto full = build_vector(ctx);
    for (auto g : {FeatureGroup::NI, FeatureGroup::PI, FeatureGroup::BI, FeatureGroup::HOG, FeatureGroup::GLCM}) {
      const auto masked = build_vector(ctx, FeatureMask{g});
      const auto idx = group_indices(g);
      const std::set<std::size_t> in(idx.begin(), idx.end());
      for (std::size_t i = 0; i < kFeatureCount; ++i) {
        if (in.count(i))
          CHECK(masked[i] == 0.0f);
        else
          CHECK(masked[i] == full[i]);
      }
    }
  }
  SUBCASE("size independence, purity and SI range") {
    for (int n : {4, 8, 16, 32, 64}) {
      auto ctx = context_for(testing::random_frame(n, n, n), 37);
      ctx.patch.top = testing::random_frame(n, 4, 7);
      ctx.patch.top_available = true;
      const auto a = build_vector(ctx);
      const auto b = build_vector(ctx);
      CHECK(a.size() == 115);
      CHECK(std::memcmp(a.data(), b.data(), sizeof(float) * a.size()) == 0);
      for (std::size_t i = 0; i < kFeatureCount; ++i) {
        CHECK(std::isfinite(a[i]));
        if (i >= kSiOffset) {
          CHECK(a[i] >= 0.0f);
          CHECK(a[i] <= 1.0f);
        }
      }
    }
  }
}

TEST_CASE("si regions") {
  auto ctx = context_for(testing::random_frame(8, 8, 4), 22);
  ctx.patch.corner = LumaFrame(4, 4, 9);
  const auto r = si_regions(ctx.patch);
  CHECK(r[1].width == 4);
  CHECK(r[5].width == 8);
  CHECK(r[5].height == 4);
  CHECK(r[6].width == 4);
  CHECK(r[6].height == 8);
  CHECK(r[7].width == 12);
  CHECK(r[7].height == 12);
  CHECK(r[7].is_valid(0, 0));
  CHECK(r[7].at(0, 0) == 9);
  CHECK(r[7].is_valid(11, 3));
  CHECK(r[7].is_valid(3, 11));
  CHECK_FALSE(r[7].is_valid(4, 4));
}
