#include "qtaccel/dataset.hpp"

#include "binio.hpp"
#include "qtaccel/error.hpp"
#include "qtaccel/parallel.hpp"
#include "qtaccel/random.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

namespace qtaccel {

double Trajectory::eq6_residual() const {
  double sum = 0.0;
  for (const auto& c : children)
    sum += c.min_j_pp() * 256.0;
  const double rebuilt = sum + delta_qt_pp * 1024.0;
  const double stored = qt_j_pp * 1024.0;
  return std::abs(stored - rebuilt) / std::max(std::abs(stored), 1e-300);
}

namespace {

// Captures feature vectors for CUs of selected sizes, keyed by (ctu index, node index).
class FeatureCollector final : public SearchObserver {
public:
  explicit FeatureCollector(std::vector<int> sizes) : sizes_(std::move(sizes)) {}

  bool visit(const CuContext& ctx, bool can_split, const PartitionTree&, std::int32_t node) override {
    if (node == 0)
      per_ctu_.emplace_back();
    if (can_split && std::find(sizes_.begin(), sizes_.end(), ctx.rect.w) != sizes_.end())
      per_ctu_.back().emplace(node, build_vector(ctx));
    return false;
  }

  const std::unordered_map<std::int32_t, FeatureVector>& ctu(std::size_t i) const { return per_ctu_.at(i); }

private:
  std::vector<int> sizes_;
  std::vector<std::unordered_map<std::int32_t, FeatureVector>> per_ctu_;
};

void check_inputs(const std::vector<LumaFrame>& frames, const CodecConfig& cfg, const std::vector<int>& qps) {
  if (frames.empty())
    throw DataError("empty frame list");
  if (qps.empty())
    throw DataError("empty QP list");
  cfg.validate();
}

void check_sizes(const CodecConfig& cfg, const std::vector<int>& sizes) {
  if (sizes.empty())
    throw DataError("no CU sizes requested");
  for (int s : sizes) {
    if (s != 8 && s != 16 && s != 32)
      throw DataError("record CU sizes must be 8, 16 or 32, got " + std::to_string(s));
    if (s >= cfg.ctu + 1 || s / 2 < cfg.min_cu())
      throw DataError("max_depth " + std::to_string(cfg.max_depth) + " gives " + std::to_string(s) + "x" +
                      std::to_string(s) + " CUs no QT cost");
  }
}

template <class Record>
std::vector<Record> concat(std::vector<std::vector<Record>>& parts) {
  std::vector<Record> out;
  for (auto& p : parts)
    out.insert(out.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
  return out;
}

} // namespace

std::vector<CuRecord> collect_records(const std::vector<LumaFrame>& frames, const CodecConfig& cfg,
                                      const CollectOptions& opts) {
  check_inputs(frames, cfg, opts.qps);
  check_sizes(cfg, opts.sizes);
  const std::size_t runs = frames.size() * opts.qps.size();
  std::vector<std::vector<CuRecord>> parts(runs);
  parallel_for(runs, opts.jobs, [&](std::size_t run) {
    CodecConfig c = cfg;
    c.qp = opts.qps[run % opts.qps.size()];
    FeatureCollector collector(opts.sizes);
    const auto result = encode_frame(frames[run / opts.qps.size()], c, &collector);
    for (std::size_t t = 0; t < result.ctus.size(); ++t) {
      const auto& tree = result.ctus[t];
      const auto& feats = collector.ctu(t);
      for (std::int32_t i = 0; i < static_cast<std::int32_t>(tree.nodes.size()); ++i) {
        const auto it = feats.find(i);
        if (it == feats.end())
          continue;
        const auto& n = tree.nodes[i];
        const double area = n.rect.area();
        parts[run].push_back({it->second, n.rect.w, c.qp, n.ns.j / area, *n.qt_j / area, n.chosen});
      }
    }
  });
  return concat(parts);
}

std::vector<Trajectory> collect_trajectories(const std::vector<LumaFrame>& frames, const CodecConfig& cfg,
                                             const std::vector<int>& qps, int jobs) {
  check_inputs(frames, cfg, qps);
  if (cfg.max_depth < 2)
    throw DataError("trajectories need max_depth >= 2");
  check_sizes(cfg, {32, 16});
  const std::size_t runs = frames.size() * qps.size();
  std::vector<std::vector<Trajectory>> parts(runs);
  parallel_for(runs, jobs, [&](std::size_t run) {
    CodecConfig c = cfg;
    c.qp = qps[run % qps.size()];
    FeatureCollector collector({32, 16});
    const auto result = encode_frame(frames[run / qps.size()], c, &collector);
    for (std::size_t t = 0; t < result.ctus.size(); ++t) {
      const auto& tree = result.ctus[t];
      const auto& feats = collector.ctu(t);
      for (std::int32_t i = 0; i < static_cast<std::int32_t>(tree.nodes.size()); ++i) {
        const auto& n = tree.nodes[i];
        if (n.rect.w != 32 || !n.has_children())
          continue;
        Trajectory tr;
        tr.qp = c.qp;
        tr.state = feats.at(i);
        tr.ns_j_pp = n.ns.j / 1024.0;
        tr.qt_j_pp = *n.qt_j / 1024.0;
        tr.delta_qt_pp = tree.split_cost / 1024.0;
        for (int k = 0; k < 4; ++k) {
          const auto ci = n.children[k];
          const auto& child = tree.nodes[ci];
          tr.children[k] = {feats.at(ci), child.ns.j / 256.0, *child.qt_j / 256.0};
        }
        if (tr.eq6_residual() > 1e-9)
          throw DataError("trajectory violates the QT cost aggregation invariant");
        parts[run].push_back(tr);
      }
    }
  });
  return concat(parts);
}

namespace {

const char* class_name(SplitMode m) { return m == SplitMode::QT ? "QT" : "NS"; }

// Indices kept after per-stratum downsampling; strata = key(record).
template <class Item, class KeyFn, class ClassFn>
std::vector<Item> balance_impl(const std::vector<Item>& items, std::uint64_t seed, KeyFn key, ClassFn cls) {
  std::map<int, std::array<std::vector<std::size_t>, 2>> strata;
  for (std::size_t i = 0; i < items.size(); ++i)
    strata[key(items[i])][cls(items[i]) == SplitMode::QT ? 1 : 0].push_back(i);
  if (strata.empty())
    throw DataError("class NS empty");
  Rng rng(seed);
  std::vector<std::size_t> keep;
  for (auto& [k, classes] : strata) {
    for (int c = 0; c < 2; ++c)
      if (classes[c].empty())
        throw DataError(std::string("class ") + class_name(c ? SplitMode::QT : SplitMode::NS) + " empty (cu_size " +
                        std::to_string(k) + ")");
    const std::size_t n = std::min(classes[0].size(), classes[1].size());
    for (auto& members : classes) {
      shuffle(std::span(members), rng);
      keep.insert(keep.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n));
    }
  }
  shuffle(std::span(keep), rng);
  std::vector<Item> out;
  out.reserve(keep.size());
  for (auto i : keep)
    out.push_back(items[i]);
  return out;
}

} // namespace

std::vector<CuRecord> balance(const std::vector<CuRecord>& records, std::uint64_t seed) {
  return balance_impl(records, seed, [](const CuRecord& r) { return r.cu_size; },
                      [](const CuRecord& r) { return r.optimal; });
}

std::vector<Trajectory> balance(const std::vector<Trajectory>& trajectories, std::uint64_t seed) {
  return balance_impl(trajectories, seed, [](const Trajectory&) { return 32; },
                      [](const Trajectory& t) { return t.optimal(); });
}

double median(std::vector<double> values) {
  if (values.empty())
    throw DataError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

double cost_median(const std::vector<CuRecord>& records) {
  std::vector<double> v;
  v.reserve(records.size() * 2);
  for (const auto& r : records) {
    v.push_back(r.ns_j_pp);
    v.push_back(r.qt_j_pp);
  }
  return median(std::move(v));
}

double cost_median(const std::vector<Trajectory>& trajectories) {
  std::vector<double> v;
  v.reserve(trajectories.size() * 10);
  for (const auto& t : trajectories) {
    v.push_back(t.ns_j_pp);
    v.push_back(t.qt_j_pp);
    for (const auto& c : t.children) {
      v.push_back(c.ns_j_pp);
      v.push_back(c.qt_j_pp);
    }
  }
  return median(std::move(v));
}

TrainingSet normalize_targets(const std::vector<CuRecord>& records, NormalizationSpec spec) {
  if (records.empty())
    throw DataError("no records to normalise");
  TrainingSet out;
  out.x.reserve(records.size());
  out.y.reserve(records.size());
  if (spec.mode == NormalizationMode::Ratio) {
    const int size = records.front().cu_size;
    for (const auto& r : records)
      if (r.cu_size != size)
        throw DataError("ratio normalisation needs a single CU size");
    for (const auto& r : records) {
      if (r.ns_j_pp == 0.0)
        throw DataError("zero NS cost in ratio normalisation");
      out.x.push_back(r.features);
      out.y.push_back({static_cast<float>(r.qt_j_pp / r.ns_j_pp), 0.0f});
    }
    out.out = 1;
    spec.c_median = 0.0;
  } else {
    if (spec.c_median == 0.0)
      spec.c_median = cost_median(records);
    if (!(spec.c_median > 0.0))
      throw DataError("c_median must be positive");
    for (const auto& r : records) {
      out.x.push_back(r.features);
      out.y.push_back({static_cast<float>(r.ns_j_pp / spec.c_median), static_cast<float>(r.qt_j_pp / spec.c_median)});
    }
    out.out = 2;
  }
  out.spec = spec;
  return out;
}

namespace {

constexpr std::uint8_t kKindRecords = 1;
constexpr std::uint8_t kKindTrajectories = 2;

void write_header(binio::Writer& w, std::uint8_t kind, std::uint64_t count) {
  w.text("QTDS");
  w.u16(kDatasetVersion);
  w.u8(kind);
  w.u8(0);
  w.u64(feature_layout_hash());
  w.u32(static_cast<std::uint32_t>(kFeatureCount));
  w.u64(count);
}

std::uint64_t read_header(binio::Reader& r, std::uint8_t kind) {
  const auto magic = r.raw(4);
  if (std::string(magic.begin(), magic.end()) != "QTDS")
    throw DataError("bad magic");
  const auto version = r.u16();
  if (version != kDatasetVersion)
    throw DataError("unsupported dataset version " + std::to_string(version));
  const auto k = r.u8();
  r.u8();
  if (k != kind)
    throw DataError(kind == kKindRecords ? "file holds trajectories, not records" : "file holds records, not trajectories");
  if (r.u64() != feature_layout_hash() || r.u32() != kFeatureCount)
    throw DataError("feature layout mismatch");
  return r.u64();
}

void write_features(binio::Writer& w, const FeatureVector& f) {
  for (float v : f)
    w.f32(v);
}

FeatureVector read_features(binio::Reader& r) {
  FeatureVector f{};
  for (auto& v : f)
    v = r.f32();
  return f;
}

} // namespace

void save_records(const std::filesystem::path& path, const std::vector<CuRecord>& records) {
  binio::Writer w;
  write_header(w, kKindRecords, records.size());
  for (const auto& r : records) {
    w.u32(static_cast<std::uint32_t>(r.cu_size));
    w.u32(static_cast<std::uint32_t>(r.qp));
    w.f64(r.ns_j_pp);
    w.f64(r.qt_j_pp);
    w.u8(r.optimal == SplitMode::QT ? 1 : 0);
    write_features(w, r.features);
  }
  binio::write_file(path.string(), w.bytes());
}

std::vector<CuRecord> load_records(const std::filesystem::path& path) {
  const auto bytes = binio::read_file(path.string());
  binio::Reader r(bytes, path.string());
  const auto count = read_header(r, kKindRecords);
  std::vector<CuRecord> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    CuRecord rec;
    rec.cu_size = static_cast<int>(r.u32());
    rec.qp = static_cast<int>(r.u32());
    rec.ns_j_pp = r.f64();
    rec.qt_j_pp = r.f64();
    rec.optimal = r.u8() ? SplitMode::QT : SplitMode::NS;
    rec.features = read_features(r);
    out.push_back(rec);
  }
  if (r.remaining() != 0)
    throw DataError(path.string() + ": trailing bytes after " + std::to_string(count) + " records");
  return out;
}

void save_trajectories(const std::filesystem::path& path, const std::vector<Trajectory>& trajectories) {
  binio::Writer w;
  write_header(w, kKindTrajectories, trajectories.size());
  for (const auto& t : trajectories) {
    w.u32(static_cast<std::uint32_t>(t.qp));
    w.f64(t.ns_j_pp);
    w.f64(t.qt_j_pp);
    w.f64(t.delta_qt_pp);
    write_features(w, t.state);
    for (const auto& c : t.children) {
      w.f64(c.ns_j_pp);
      w.f64(c.qt_j_pp);
      write_features(w, c.features);
    }
  }
  binio::write_file(path.string(), w.bytes());
}

std::vector<Trajectory> load_trajectories(const std::filesystem::path& path) {
  const auto bytes = binio::read_file(path.string());
  binio::Reader r(bytes, path.string());
  const auto count = read_header(r, kKindTrajectories);
  std::vector<Trajectory> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    Trajectory t;
    t.qp = static_cast<int>(r.u32());
    t.ns_j_pp = r.f64();
    t.qt_j_pp = r.f64();
    t.delta_qt_pp = r.f64();
    t.state = read_features(r);
    for (auto& c : t.children) {
      c.ns_j_pp = r.f64();
      c.qt_j_pp = r.f64();
      c.features = read_features(r);
    }
    out.push_back(t);
  }
  if (r.remaining() != 0)
    throw DataError(path.string() + ": trailing bytes after " + std::to_string(count) + " trajectories");
  return out;
}

} // namespace qtaccel
