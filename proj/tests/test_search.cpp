#include "doctest.h"
#include "qtaccel/error.hpp"
#include "qtaccel/search.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include <random>

using namespace qtaccel;
using qtaccel::testing::bottom_up_min;

namespace {

void check_eq6(const PartitionTree& tree) {
  for (const auto& n : tree.nodes) {
    if (!n.has_children()) {
      CHECK_FALSE(n.qt_j.has_value());
      CHECK(n.chosen == SplitMode::NS);
      continue;
    }
    std::array<double, 4> mins{};
    for (int c = 0; c < 4; ++c)
      mins[c] = tree.nodes[n.children[c]].best_j();
    REQUIRE(n.qt_j.has_value());
    CHECK(*n.qt_j == aggregate_qt_cost(mins, tree.split_cost));
    CHECK(n.best_j() == std::min(n.ns.j, *n.qt_j));
  }
}

} // namespace

TEST_CASE("Eq. 6 arithmetic") {
  const std::array<double, 4> mins{10, 12, 8, 9};
  CHECK(aggregate_qt_cost(mins, 2.0) == 41.0);
}

TEST_CASE("top-down recursion equals bottom-up aggregation") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int depth = 1 + trial % 4;
    const auto t = testing::random_cost_table(depth, rng);
    const double split = std::uniform_real_distribution<double>(0.0, 20.0)(rng);
    CHECK(quadtree_min_cost(t, depth, split) == bottom_up_min(t, depth, split));
  }
  CHECK_THROWS_AS(quadtree_min_cost(std::vector<double>(4, 1.0), 1, 0.0), DataError);
}

TEST_CASE("exhaustive search counts") {
  const auto frame = testing::textured_frame(64, 64, 1);
  for (int d = 1; d <= 4; ++d) {
    SearchState state(frame);
    const auto tree = exhaustive_search({0, 0, 64, 64}, {64, d, 27, 2.0}, state);
    std::size_t nodes = 0;
    for (int l = 0, c = 1; l <= d; ++l, c *= 4)
      nodes += c;
    CHECK(tree.nodes.size() == nodes);
    CHECK(tree.processed_pixels == static_cast<std::uint64_t>(d + 1) * 64 * 64);
    CHECK(tree.recount_pixels() == tree.processed_pixels);
    check_eq6(tree);
  }
}

TEST_CASE("flat frame never splits") {
  for (int qp : {22, 27, 32, 37}) {
    const LumaFrame flat(64, 64, 93);
    SearchState state(flat);
    const auto tree = exhaustive_search({0, 0, 64, 64}, {64, 3, qp, 2.0}, state);
    CHECK(tree.root().chosen == SplitMode::NS);
    CHECK(tree.root().ns.j < tree.root().qt_j.value());
  }
  // Oracle on mid-grey: prediction is exact everywhere, so every CU costs lambda * (area + overhead)
  // and each split adds overhead plus the split flag.
  const LumaFrame grey(64, 64, 128);
  SearchState state(grey);
  const auto tree = exhaustive_search({0, 0, 64, 64}, {64, 3, 22, 2.0}, state);
  const double lambda = lambda_of_qp(22);
  CHECK(tree.total_j() == lambda * (4096 + kModeOverheadBits));
  CHECK(tree.root().qt_j.value() > tree.total_j());
}

TEST_CASE("searched tree is realisable and optimal over its evaluated costs") {
  // 16x16 root with max_depth 2: 1 + 16 candidate partitions.
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto frame = testing::textured_frame(32, 32, seed);
    const CodecConfig cfg{16, 2, 22 + static_cast<int>(seed % 4) * 5, 2.0};
    const Rect root{16, 16, 16, 16};

    // Context: the three causal CTUs coded first.
    SearchState state(frame);
    for (Rect r : {Rect{0, 0, 16, 16}, Rect{16, 0, 16, 16}, Rect{0, 16, 16, 16}})
      exhaustive_search(r, cfg, state);
    SearchState replay = state;
    const auto tree = exhaustive_search(root, cfg, state);
    check_eq6(tree);

    // Enumerate all 17 partitions against the node costs the search evaluated.
    const double split = tree.split_cost;
    const auto& rootn = tree.root();
    std::vector<double> totals{rootn.ns.j};
    for (int mask = 0; mask < 16; ++mask) {
      double sum = 0.0;
      for (int c = 0; c < 4; ++c) {
        const auto& child = tree.nodes[rootn.children[c]];
        if (mask & (1 << c)) {
          double g = 0.0;
          for (auto gc : child.children)
            g += tree.nodes[gc].ns.j;
          sum += g + split;
        } else {
          sum += child.ns.j;
        }
      }
      totals.push_back(sum + split);
    }
    REQUIRE(totals.size() == 17);
    for (double t : totals)
      CHECK(tree.total_j() <= t * (1 + 1e-12));

    // Re-encoding the chosen partition from the same state reproduces the searched cost.
    auto chosen_split = [&](const Rect& r, int) {
      for (const auto& n : tree.nodes)
        if (n.rect == r)
          return n.chosen == SplitMode::QT;
      return false;
    };
    const auto forced = encode_forced(root, cfg, replay, chosen_split);
    CHECK(forced.total_j == doctest::Approx(tree.total_j()).epsilon(1e-12));
    CHECK(replay.recon() == state.recon());
  }
}

TEST_CASE("search is deterministic") {
  const auto frame = testing::natural_frames(1, 64).front();
  SearchState a(frame), b(frame);
  const CodecConfig cfg{64, 3, 32, 2.0};
  CHECK(exhaustive_search({0, 0, 64, 64}, cfg, a).to_json() == exhaustive_search({0, 0, 64, 64}, cfg, b).to_json());
}

TEST_CASE("search preconditions") {
  const LumaFrame frame(64, 64, 0);
  SearchState state(frame);
  CHECK_THROWS_AS(exhaustive_search({0, 0, 32, 32}, {64, 3, 22, 2.0}, state), DataError);
  CHECK_THROWS_AS(exhaustive_search({32, 32, 64, 64}, {64, 3, 22, 2.0}, state), DataError);
}

TEST_CASE("encode_frame") {
  SUBCASE("64x64 frame at max_depth 3 processes four levels") {
    const auto frame = testing::natural_frames(1, 64).front();
    const auto r = encode_frame(frame, {64, 3, 22, 2.0});
    CHECK(r.processed_pixels == 4u * 4096u);
    CHECK(r.total_j == doctest::Approx(r.distortion + lambda_of_qp(22) * r.rate_bits).epsilon(1e-12));
    CHECK(r.psnr_db == doctest::Approx(psnr(r.coded, r.recon)));
  }
  SUBCASE("partial CTUs are not coded") {
    const auto frame = testing::textured_frame(100, 70, 2);
    const auto r = encode_frame(frame, {64, 2, 22, 2.0});
    CHECK(r.coded.width() == 64);
    CHECK(r.coded.height() == 64);
    CHECK(r.ctus.size() == 1);
  }
  SUBCASE("deeper search does not lose on natural content") {
    for (const auto& frame : testing::natural_frames(4, 128)) {
      double prev = std::numeric_limits<double>::infinity();
      for (int d = 1; d <= 4; ++d) {
        const auto r = encode_frame(frame, {64, d, 27, 2.0});
        CHECK(r.total_j <= prev * (1 + 1e-3));
        prev = std::min(prev, r.total_j);
      }
    }
  }
  CHECK_THROWS_AS(encode_frame(LumaFrame(40, 40), {64, 3, 22, 2.0}), DataError);
}
