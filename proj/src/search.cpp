#include "qtaccel/search.hpp"

#include "qtaccel/error.hpp"

#include <bit>
#include <nlohmann/json.hpp>

namespace qtaccel {

namespace {
constexpr int kGrid = 4;
}

SearchState::SearchState(const LumaFrame& original)
    : original_(&original), recon_(original.width(), original.height(), kBorderSubstitute),
      mask_(original.width(), original.height()), grid_w_((original.width() + kGrid - 1) / kGrid),
      grid_(static_cast<std::size_t>(grid_w_) * ((original.height() + kGrid - 1) / kGrid)) {}

std::optional<NeighborInfo> SearchState::neighbor_at(int x, int y) const {
  if (!mask_.encoded(x, y))
    return std::nullopt;
  const Cell& c = grid_[static_cast<std::size_t>(y / kGrid) * grid_w_ + x / kGrid];
  if (!c.valid)
    return std::nullopt;
  return NeighborInfo{c.j_pp, c.depth};
}

void SearchState::commit(const Rect& rect, const LumaFrame& block, double j_pp, int depth) {
  for (int y = 0; y < rect.h; ++y)
    for (int x = 0; x < rect.w; ++x)
      recon_.at(rect.x + x, rect.y + y) = block.at(x, y);
  mask_.mark(rect);
  for (int gy = rect.y / kGrid; gy < (rect.y + rect.h) / kGrid; ++gy)
    for (int gx = rect.x / kGrid; gx < (rect.x + rect.w) / kGrid; ++gx)
      grid_[static_cast<std::size_t>(gy) * grid_w_ + gx] = {j_pp, depth, true};
}

double PartitionTree::total_rate(double split_bits) const {
  double rate = 0.0;
  auto walk = [&](auto&& self, std::int32_t idx) -> void {
    const auto& n = nodes[idx];
    if (n.chosen == SplitMode::QT) {
      rate += split_bits;
      for (auto c : n.children)
        self(self, c);
    } else {
      rate += n.ns.rate;
    }
  };
  walk(walk, 0);
  return rate;
}

double PartitionTree::total_distortion() const {
  double dist = 0.0;
  auto walk = [&](auto&& self, std::int32_t idx) -> void {
    const auto& n = nodes[idx];
    if (n.chosen == SplitMode::QT) {
      for (auto c : n.children)
        self(self, c);
    } else {
      dist += n.ns.distortion;
    }
  };
  walk(walk, 0);
  return dist;
}

std::uint64_t PartitionTree::recount_pixels() const {
  std::uint64_t total = 0;
  for (const auto& n : nodes)
    total += static_cast<std::uint64_t>(n.rect.area());
  return total;
}

std::string PartitionTree::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& n : nodes) {
    nlohmann::json j = {{"x", n.rect.x},
                        {"y", n.rect.y},
                        {"size", n.rect.w},
                        {"depth", n.depth},
                        {"ns", {{"rate", n.ns.rate}, {"dist", n.ns.distortion}, {"j", n.ns.j}}},
                        {"qt_j", n.qt_j ? nlohmann::json(*n.qt_j) : nlohmann::json(nullptr)},
                        {"chosen", n.chosen == SplitMode::QT ? "QT" : "NS"}};
    if (n.pruned)
      j["pruned"] = true;
    arr.push_back(std::move(j));
  }
  nlohmann::json doc = {{"processed_pixels", processed_pixels}, {"split_cost", split_cost}, {"nodes", arr}};
  return doc.dump();
}

double aggregate_qt_cost(std::span<const double> child_min_costs, double split_cost) {
  double sum = 0.0;
  for (double c : child_min_costs)
    sum += c;
  return sum + split_cost;
}

double quadtree_min_cost(std::span<const double> ns_preorder, int max_depth, double split_cost) {
  std::size_t expected = 0;
  for (int d = 0, level = 1; d <= max_depth; ++d, level *= 4)
    expected += static_cast<std::size_t>(level);
  if (max_depth < 0 || ns_preorder.size() != expected)
    throw DataError("cost table size does not match a full quadtree of depth " + std::to_string(max_depth));
  std::size_t next = 0;
  auto visit = [&](auto&& self, int depth) -> double {
    const double ns = ns_preorder[next++];
    if (depth == max_depth)
      return ns;
    std::array<double, 4> child_min{};
    for (auto& c : child_min)
      c = self(self, depth + 1);
    const double qt = aggregate_qt_cost(child_min, split_cost);
    return qt < ns ? qt : ns;
  };
  return visit(visit, 0);
}

namespace {

struct Searcher {
  const CodecConfig& cfg;
  SearchState& state;
  SearchObserver* observer;
  PartitionTree tree;
  double split_cost;

  std::int32_t run(const Rect& rect, int depth, std::int32_t parent) {
    const auto idx = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes[idx].rect = rect;
    tree.nodes[idx].depth = depth;

    CausalPatch patch = causal_patch(state.original(), state.recon(), rect, state.mask());
    NsEncodeResult ns = encode_ns(patch, cfg);
    tree.processed_pixels += static_cast<std::uint64_t>(rect.area());
    tree.nodes[idx].ns = ns.cost;

    const bool can_split = depth < cfg.max_depth && rect.w / 2 >= 4;
    bool prune = false;
    if (observer) {
      CuContext ctx;
      ctx.rect = rect;
      ctx.depth = depth;
      ctx.qp = cfg.qp;
      ctx.ns_cost = ns.cost;
      ctx.top = state.neighbor_at(rect.x, rect.y - 1);
      ctx.left = state.neighbor_at(rect.x - 1, rect.y);
      if (parent >= 0) {
        const auto& p = tree.nodes[parent];
        const double area = p.rect.area();
        ctx.parent = ParentInfo{p.ns.j / area, p.ns.rate / area, p.ns.distortion / area};
      }
      ctx.patch = std::move(patch);
      prune = observer->visit(ctx, can_split, tree, idx) && can_split;
    }

    if (can_split && !prune) {
      const int hw = rect.w / 2;
      const int hh = rect.h / 2;
      const Rect subs[4] = {{rect.x, rect.y, hw, hh},
                            {rect.x + hw, rect.y, hw, hh},
                            {rect.x, rect.y + hh, hw, hh},
                            {rect.x + hw, rect.y + hh, hw, hh}};
      std::array<double, 4> child_min{};
      for (int c = 0; c < 4; ++c) {
        const auto child = run(subs[c], depth + 1, idx);
        tree.nodes[idx].children[c] = child;
        child_min[c] = tree.nodes[child].best_j();
      }
      tree.nodes[idx].qt_j = aggregate_qt_cost(child_min, split_cost);
    }
    auto& node = tree.nodes[idx];
    node.pruned = prune;
    node.chosen = node.qt_j && *node.qt_j < node.ns.j ? SplitMode::QT : SplitMode::NS;
    // QT leaves the children's reconstructions in place; NS overwrites them.
    if (node.chosen == SplitMode::NS)
      state.commit(rect, ns.recon, node.ns.j / rect.area(), depth);
    return idx;
  }
};

void check_root(const Rect& rect, const CodecConfig& cfg, const SearchState& state) {
  cfg.validate();
  if (rect.w != cfg.ctu || rect.h != cfg.ctu || rect.cropped)
    throw DataError("search root must be a full " + std::to_string(cfg.ctu) + "x" + std::to_string(cfg.ctu) + " CTU");
  if (rect.x < 0 || rect.y < 0 || rect.x + rect.w > state.original().width() ||
      rect.y + rect.h > state.original().height())
    throw DataError("search root outside frame");
}

} // namespace

PartitionTree quadtree_search(const Rect& rect, const CodecConfig& cfg, SearchState& state, SearchObserver* observer) {
  check_root(rect, cfg, state);
  Searcher s{cfg, state, observer, {}, split_signal_cost(cfg)};
  s.tree.split_cost = s.split_cost;
  s.tree.nodes.reserve(1 + 4 + 16 + 64 + 256);
  s.run(rect, 0, -1);
  return std::move(s.tree);
}

PartitionTree exhaustive_search(const Rect& rect, const CodecConfig& cfg, SearchState& state) {
  return quadtree_search(rect, cfg, state, nullptr);
}

Rect coded_area(const LumaFrame& frame, int ctu) {
  return {0, 0, frame.width() / ctu * ctu, frame.height() / ctu * ctu};
}

FrameResult encode_frame(const LumaFrame& frame, const CodecConfig& cfg, SearchObserver* observer) {
  cfg.validate();
  const Rect area = coded_area(frame, cfg.ctu);
  if (area.w == 0 || area.h == 0)
    throw DataError("frame has no full " + std::to_string(cfg.ctu) + "x" + std::to_string(cfg.ctu) + " CTU");
  FrameResult out;
  out.coded = area.w == frame.width() && area.h == frame.height() ? frame : frame.crop(0, 0, area.w, area.h);
  SearchState state(out.coded);
  for (const Rect& ctu : tile_ctus(out.coded, cfg.ctu)) {
    auto tree = quadtree_search(ctu, cfg, state, observer);
    out.processed_pixels += tree.processed_pixels;
    out.rate_bits += tree.total_rate(cfg.split_bits);
    out.distortion += tree.total_distortion();
    out.total_j += tree.total_j();
    out.ctus.push_back(std::move(tree));
  }
  out.recon = state.recon();
  out.psnr_db = psnr_from_sse(out.distortion, static_cast<double>(area.area()));
  return out;
}

ForcedResult encode_forced(const Rect& rect, const CodecConfig& cfg, SearchState& state, const SplitPredicate& split) {
  check_root(rect, cfg, state);
  const double split_cost = split_signal_cost(cfg);
  ForcedResult out;
  auto walk = [&](auto&& self, const Rect& r, int depth) -> void {
    if (depth < cfg.max_depth && r.w / 2 >= 4 && split(r, depth)) {
      out.total_j += split_cost;
      const int hw = r.w / 2;
      const int hh = r.h / 2;
      self(self, Rect{r.x, r.y, hw, hh}, depth + 1);
      self(self, Rect{r.x + hw, r.y, hw, hh}, depth + 1);
      self(self, Rect{r.x, r.y + hh, hw, hh}, depth + 1);
      self(self, Rect{r.x + hw, r.y + hh, hw, hh}, depth + 1);
      return;
    }
    const auto patch = causal_patch(state.original(), state.recon(), r, state.mask());
    const auto ns = encode_ns(patch, cfg);
    out.processed_pixels += static_cast<std::uint64_t>(r.area());
    out.total_j += ns.cost.j;
    state.commit(r, ns.recon, ns.cost.j / r.area(), depth);
  };
  walk(walk, rect, 0);
  return out;
}

} // namespace qtaccel
