#include "doctest.h"
#include "qtaccel/error.hpp"
#include "qtaccel/frame.hpp"
#include "test_util.hpp"

#include <fstream>

using namespace qtaccel;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("qtaccel_test_frame_" + name);
}

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

} // namespace

TEST_CASE("2x2 PGM decodes to its samples") {
  const std::string header = "P5\n2 2\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), {0, 255, 128, 64});
  const auto f = decode_pgm(bytes);
  CHECK(f.width() == 2);
  CHECK(f.height() == 2);
  CHECK(std::vector<std::uint8_t>(f.samples().begin(), f.samples().end()) == std::vector<std::uint8_t>{0, 255, 128, 64});
}

TEST_CASE("PGM header comments are skipped") {
  const std::string header = "P5\n# made by hand\n2 1\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), {7, 9});
  CHECK(decode_pgm(bytes).at(1, 0) == 9);
}

TEST_CASE("PGM errors") {
  auto with_header = [](const std::string& h, std::size_t payload) {
    std::vector<std::uint8_t> b(h.begin(), h.end());
    b.resize(b.size() + payload, 1);
    return b;
  };
  CHECK_THROWS_WITH_AS(decode_pgm(with_header("P2\n2 2\n255\n", 4)), doctest::Contains("P5"), DataError);
  CHECK_THROWS_WITH_AS(decode_pgm(with_header("P5\n2 2\n65535\n", 4)), doctest::Contains("maxval"), DataError);
  CHECK_THROWS_WITH_AS(decode_pgm(with_header("P5\n2 2\n255\n", 3)), doctest::Contains("size mismatch"), DataError);
  CHECK_THROWS_AS(decode_pgm(with_header("P5\nx 2\n255\n", 4)), DataError);
}

TEST_CASE("raw-y load") {
  const auto good = temp_file("good.y");
  write_bytes(good, std::vector<std::uint8_t>(4096, 128));
  const auto f = load_frame(good, FrameFormat::RawY, 64, 64);
  CHECK(f == LumaFrame(64, 64, 128));

  const auto bad = temp_file("bad.y");
  write_bytes(bad, std::vector<std::uint8_t>(4000, 128));
  CHECK_THROWS_WITH_AS(load_frame(bad, FrameFormat::RawY, 64, 64), doctest::Contains("size mismatch"), DataError);
  CHECK_THROWS_AS(load_frame(good, FrameFormat::RawY), DataError);
  std::filesystem::remove(good);
  std::filesystem::remove(bad);
}

TEST_CASE("PGM load/save roundtrip is byte-identical") {
  for (const auto& p : testing::natural_frame_paths()) {
    std::ifstream in(p, std::ios::binary);
    std::vector<std::uint8_t> original((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto out = temp_file("rt.pgm");
    save_pgm(out, load_frame(p, FrameFormat::Pgm8));
    std::ifstream back(out, std::ios::binary);
    std::vector<std::uint8_t> saved((std::istreambuf_iterator<char>(back)), std::istreambuf_iterator<char>());
    CHECK(saved == original);
    std::filesystem::remove(out);
  }
}

TEST_CASE("tile_ctus counts and order") {
  auto rects = tile_ctus(LumaFrame(128, 128), 64);
  REQUIRE(rects.size() == 4);
  CHECK(rects[0] == Rect{0, 0, 64, 64});
  CHECK(rects[1] == Rect{64, 0, 64, 64});
  CHECK(rects[2] == Rect{0, 64, 64, 64});
  CHECK(rects[3] == Rect{64, 64, 64, 64});

  CHECK(tile_ctus(LumaFrame(64, 64), 64).size() == 1);

  rects = tile_ctus(LumaFrame(100, 64), 64);
  REQUIRE(rects.size() == 2);
  CHECK_FALSE(rects[0].cropped);
  CHECK(rects[1].cropped);
  CHECK(rects[1].w == 36);
  CHECK(rects[1].h == 64);

  CHECK_THROWS_AS(tile_ctus(LumaFrame(4, 16), 64), DataError);
  CHECK_THROWS_AS(tile_ctus(LumaFrame(64, 64), 48), DataError);
}

TEST_CASE("tile_ctus covers the frame exactly once") {
  for (auto [w, h] : {std::pair{100, 64}, {8, 8}, {200, 130}, {129, 257}}) {
    for (int ctu : {32, 64, 128}) {
      std::vector<int> hits(static_cast<std::size_t>(w) * h, 0);
      for (const auto& r : tile_ctus(LumaFrame(w, h), ctu))
        for (int y = r.y; y < r.y + r.h; ++y)
          for (int x = r.x; x < r.x + r.w; ++x)
            ++hits[y * w + x];
      CHECK(std::all_of(hits.begin(), hits.end(), [](int v) { return v == 1; }));
      const std::size_t expect = static_cast<std::size_t>((w + ctu - 1) / ctu) * ((h + ctu - 1) / ctu);
      CHECK(tile_ctus(LumaFrame(w, h), ctu).size() == expect);
    }
  }
}

TEST_CASE("causal_patch availability") {
  const auto frame = testing::random_frame(64, 64, 3);
  EncodedMask none(64, 64);

  SUBCASE("origin has nothing causal") {
    EncodedMask all(64, 64);
    all.mark({0, 0, 64, 64});
    const auto p = causal_patch(frame, {0, 0, 16, 16}, all);
    CHECK_FALSE(p.top_available);
    CHECK_FALSE(p.left_available);
    CHECK_FALSE(p.corner_available);
    CHECK(p.top == LumaFrame(16, 4, 128));
    CHECK(p.left == LumaFrame(4, 16, 128));
    CHECK(p.corner == LumaFrame(4, 4, 128));
  }
  SUBCASE("interior with encoded neighbours") {
    EncodedMask m(64, 64);
    m.mark({0, 0, 64, 16});
    m.mark({0, 16, 16, 16});
    const auto p = causal_patch(frame, {16, 16, 16, 16}, m);
    CHECK(p.top_available);
    CHECK(p.left_available);
    CHECK(p.corner_available);
    CHECK(p.top == frame.crop(16, 12, 16, 4));
    CHECK(p.left == frame.crop(12, 16, 4, 16));
    CHECK(p.corner == frame.crop(12, 12, 4, 4));
    CHECK(p.cu == frame.crop(16, 16, 16, 16));
  }
  SUBCASE("top edge, x > 0") {
    EncodedMask m(64, 64);
    m.mark({0, 0, 16, 16});
    const auto p = causal_patch(frame, {16, 0, 16, 16}, m);
    CHECK(p.left_available);
    CHECK_FALSE(p.top_available);
    CHECK(p.top == LumaFrame(16, 4, 128));
  }
  SUBCASE("unencoded pixels are never read") {
    // Causality: changing pixels right of / below the CU origin block cannot alter the borders.
    EncodedMask m(64, 64);
    m.mark({0, 0, 64, 16});
    m.mark({0, 16, 16, 16});
    auto other = frame;
    for (int y = 16; y < 64; ++y)
      for (int x = 16; x < 64; ++x)
        other.at(x, y) ^= 0x5a;
    for (int y = 32; y < 64; ++y)
      for (int x = 0; x < 16; ++x)
        other.at(x, y) ^= 0x33;
    const auto a = causal_patch(frame, {16, 16, 16, 16}, m);
    const auto b = causal_patch(frame, other, {16, 16, 16, 16}, m);
    CHECK(a.top == b.top);
    CHECK(a.left == b.left);
    CHECK(a.corner == b.corner);
  }
  CHECK_THROWS_AS(causal_patch(frame, {60, 60, 8, 8}, none), DataError);
}

TEST_CASE("dihedral symmetries") {
  LumaFrame f(3, 2);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 3; ++x)
      f.at(x, y) = static_cast<std::uint8_t>(10 * y + x);
  CHECK(dihedral(f, 0) == f);

  const auto mx = dihedral(f, 1);
  CHECK(mx.at(0, 0) == 2);
  CHECK(mx.at(2, 1) == 10);
  const auto my = dihedral(f, 2);
  CHECK(my.at(0, 0) == 10);
  CHECK(my.at(1, 1) == 1);
  const auto t = dihedral(f, 4);
  REQUIRE(t.width() == 2);
  REQUIRE(t.height() == 3);
  CHECK(t.at(1, 2) == 12);
  CHECK(t.at(0, 2) == 2);
  const auto r = dihedral(f, 7);
  REQUIRE(r.width() == 2);
  CHECK(r.at(0, 0) == 12);

  for (int k : {1, 2, 3, 4})
    CHECK(dihedral(dihedral(f, k), k) == f);

  const auto all = dihedral_augment({f, LumaFrame(2, 2, 7)});
  REQUIRE(all.size() == 16);
  for (int i = 0; i < 8; ++i)
    for (int j = i + 1; j < 8; ++j)
      CHECK_FALSE(all[i] == all[j]);
  for (const auto& g : all) {
    auto a = std::vector<std::uint8_t>(g.samples().begin(), g.samples().end());
    std::sort(a.begin(), a.end());
    if (g.width() * g.height() == 6)
      CHECK(a == std::vector<std::uint8_t>{0, 1, 2, 10, 11, 12});
  }
  CHECK_THROWS_AS(dihedral(f, 8), UsageError);
}
