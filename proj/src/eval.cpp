#include "qtaccel/eval.hpp"

#include "qtaccel/error.hpp"
#include "qtaccel/parallel.hpp"

#include "json.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace qtaccel {

std::map<int, std::uint64_t> SetResult::pixels() const {
  std::map<int, std::uint64_t> out;
  for (const auto& [qp, s] : per_qp)
    out[qp] = s.pixels;
  return out;
}

namespace {

struct Job {
  std::size_t frame;
  int qp;
  const ThresholdPolicy* policy;
};

struct JobResult {
  std::uint64_t pixels = 0;
  double rate = 0.0;
  double sse = 0.0;
  double area = 0.0;
  std::uint64_t prunes = 0;
};

JobResult run_job(const std::vector<LumaFrame>& frames, const CodecConfig& base, const Job& job) {
  CodecConfig cfg = base;
  cfg.qp = job.qp;
  JobResult r;
  FrameResult f;
  if (job.policy) {
    auto p = encode_frame_pruned(frames[job.frame], cfg, *job.policy);
    r.prunes = p.prunes;
    f = std::move(p.frame);
  } else {
    f = encode_frame(frames[job.frame], cfg);
  }
  r.pixels = f.processed_pixels;
  r.rate = f.rate_bits;
  r.sse = f.distortion;
  r.area = static_cast<double>(f.coded.width()) * f.coded.height();
  return r;
}

void check_qps(const std::vector<int>& qps) {
  if (qps.empty())
    throw UsageError("empty QP list");
  for (int qp : qps)
    if (qp < 0 || qp > 51)
      throw UsageError("QP out of range: " + std::to_string(qp));
}

// Runs jobs in parallel and folds them in job order, so totals do not depend on the job count.
std::vector<SetResult> run_jobs(const std::vector<LumaFrame>& frames, const CodecConfig& cfg,
                                const std::vector<int>& qps, const std::vector<const ThresholdPolicy*>& policies,
                                int jobs) {
  std::vector<Job> list;
  for (const auto* p : policies)
    for (int qp : qps)
      for (std::size_t f = 0; f < frames.size(); ++f)
        list.push_back({f, qp, p});
  std::vector<JobResult> results(list.size());
  parallel_for(list.size(), jobs, [&](std::size_t i) { results[i] = run_job(frames, cfg, list[i]); });

  std::vector<SetResult> out(policies.size());
  std::size_t i = 0;
  for (auto& set : out)
    for (int qp : qps) {
      QpStats s;
      s.qp = qp;
      for (std::size_t f = 0; f < frames.size(); ++f, ++i) {
        s.pixels += results[i].pixels;
        s.rate_bits += results[i].rate;
        s.sse += results[i].sse;
        s.coded_pixels += results[i].area;
        s.prunes += results[i].prunes;
      }
      set.per_qp[qp] = s;
    }
  return out;
}

} // namespace

SetResult run_set(const std::vector<LumaFrame>& frames, const CodecConfig& cfg, const std::vector<int>& qps,
                  const ThresholdPolicy* policy, int jobs) {
  if (frames.empty())
    throw DataError("empty frame list");
  check_qps(qps);
  cfg.validate();
  return run_jobs(frames, cfg, qps, {policy}, jobs).front();
}

double delta_c(const std::map<int, std::uint64_t>& anchor, const std::map<int, std::uint64_t>& test) {
  if (anchor.empty())
    throw DataError("no QPs to compare");
  if (anchor.size() != test.size())
    throw DataError("QP set mismatch");
  double sum = 0.0;
  for (const auto& [qp, a] : anchor) {
    const auto it = test.find(qp);
    if (it == test.end())
      throw DataError("QP set mismatch: test lacks QP " + std::to_string(qp));
    if (a == 0)
      throw DataError("zero anchor complexity at QP " + std::to_string(qp));
    sum += (static_cast<double>(a) - static_cast<double>(it->second)) / static_cast<double>(a);
  }
  return 100.0 * sum / static_cast<double>(anchor.size());
}

RdCurve RdCurve::from(const SetResult& r) {
  std::vector<RdPoint> pts;
  for (const auto& [qp, s] : r.per_qp)
    pts.push_back({s.rate_bits, s.psnr_db()});
  return from(std::move(pts));
}

RdCurve RdCurve::from(std::vector<RdPoint> points) {
  std::sort(points.begin(), points.end(), [](const RdPoint& a, const RdPoint& b) { return a.rate < b.rate; });
  return RdCurve{std::move(points)};
}

namespace {

// Coefficients c0..c3 of the least-squares cubic log10(rate) = sum c_k psnr^k.
Eigen::Vector4d fit_cubic(const RdCurve& c) {
  const auto n = static_cast<Eigen::Index>(c.points.size());
  if (n < 4)
    throw DataError("RD curve needs at least 4 points");
  Eigen::MatrixXd a(n, 4);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = c.points[static_cast<std::size_t>(i)];
    if (!(p.rate > 0.0) || !std::isfinite(p.psnr))
      throw DataError("RD point needs positive rate and finite PSNR");
    for (int k = 0; k < 4; ++k)
      a(i, k) = std::pow(p.psnr, k);
    b(i) = std::log10(p.rate);
  }
  for (std::size_t i = 0; i < c.points.size(); ++i)
    for (std::size_t j = i + 1; j < c.points.size(); ++j)
      if (c.points[i].psnr == c.points[j].psnr)
        throw DataError("degenerate RD curve: repeated PSNR");
  return a.colPivHouseholderQr().solve(b);
}

double integral(const Eigen::Vector4d& c, double lo, double hi) {
  auto prim = [&](double x) {
    double s = 0.0;
    for (int k = 0; k < 4; ++k)
      s += c(k) * std::pow(x, k + 1) / (k + 1);
    return s;
  };
  return prim(hi) - prim(lo);
}

} // namespace

double bd_rate(const RdCurve& anchor, const RdCurve& test) {
  const auto ca = fit_cubic(anchor);
  const auto ct = fit_cubic(test);
  auto range = [](const RdCurve& c) {
    auto [lo, hi] = std::minmax_element(c.points.begin(), c.points.end(),
                                        [](const RdPoint& a, const RdPoint& b) { return a.psnr < b.psnr; });
    return std::pair{lo->psnr, hi->psnr};
  };
  const auto [alo, ahi] = range(anchor);
  const auto [tlo, thi] = range(test);
  const double lo = std::max(alo, tlo);
  const double hi = std::min(ahi, thi);
  if (!(hi > lo))
    throw DataError("RD curves have no PSNR overlap");
  const double avg = (integral(ct, lo, hi) - integral(ca, lo, hi)) / (hi - lo);
  return (std::pow(10.0, avg) - 1.0) * 100.0;
}

SweepResult sweep(const std::vector<LumaFrame>& frames, const CodecConfig& cfg, const ThresholdPolicy& policy,
                  std::vector<double> thresholds, const std::vector<int>& qps, int jobs, const SetResult* anchor) {
  if (thresholds.empty())
    throw UsageError("empty threshold list");
  if (frames.empty())
    throw DataError("empty frame list");
  check_qps(qps);
  cfg.validate();
  policy.validate();
  std::sort(thresholds.begin(), thresholds.end());

  std::vector<ThresholdPolicy> policies(thresholds.size(), policy);
  std::vector<const ThresholdPolicy*> ptrs;
  if (!anchor)
    ptrs.push_back(nullptr);
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    policies[i].threshold = thresholds[i];
    policies[i].size_thresholds.clear();
    ptrs.push_back(&policies[i]);
  }
  auto sets = run_jobs(frames, cfg, qps, ptrs, jobs);

  SweepResult out;
  out.anchor = anchor ? *anchor : sets.front();
  const std::size_t first = anchor ? 0 : 1;
  const auto anchor_curve = RdCurve::from(out.anchor);
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    TradeoffPoint p;
    p.threshold = thresholds[i];
    p.stats = std::move(sets[first + i]);
    p.delta_c = delta_c(out.anchor.pixels(), p.stats.pixels());
    p.bd_rate = bd_rate(anchor_curve, RdCurve::from(p.stats));
    out.points.push_back(std::move(p));
  }
  return out;
}

namespace {

std::string num(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

} // namespace

std::string sweep_csv(const SweepResult& s) {
  std::ostringstream out;
  out << "threshold,delta_c_pct,bd_rate_pct";
  for (const auto& [qp, st] : s.anchor.per_qp)
    out << ",rate_bits_qp" << qp << ",psnr_db_qp" << qp << ",pixels_qp" << qp;
  out << '\n';
  for (const auto& p : s.points) {
    out << num(p.threshold) << ',' << num(p.delta_c) << ',' << num(p.bd_rate);
    for (const auto& [qp, st] : p.stats.per_qp)
      out << ',' << num(st.rate_bits) << ',' << num(st.psnr_db()) << ',' << st.pixels;
    out << '\n';
  }
  return out.str();
}

std::string sweep_summary_json(const SweepResult& s, const CodecConfig& cfg, const std::string& model_variant) {
  nlohmann::json j;
  j["config"] = {{"ctu", cfg.ctu}, {"max_depth", cfg.max_depth}, {"split_bits", cfg.split_bits}};
  j["model_variant"] = model_variant;
  nlohmann::json anchor = nlohmann::json::array();
  for (const auto& [qp, st] : s.anchor.per_qp)
    anchor.push_back({{"qp", qp}, {"processed_pixels", st.pixels}, {"total_rate_bits", st.rate_bits},
                      {"psnr_db", st.psnr_db()}});
  j["anchor"] = anchor;
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : s.points)
    pts.push_back({{"threshold", p.threshold}, {"delta_c_pct", p.delta_c}, {"bd_rate_pct", p.bd_rate}});
  j["points"] = pts;
  return j.dump(2);
}

std::optional<double> bd_rate_at(const std::vector<TradeoffPoint>& points, double target) {
  std::vector<std::pair<double, double>> pts{{0.0, 0.0}};
  for (const auto& p : points)
    pts.emplace_back(p.delta_c, p.bd_rate);
  std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const auto [x0, y0] = pts[i];
    const auto [x1, y1] = pts[i + 1];
    if (target < x0 || target > x1)
      continue;
    if (x1 == x0)
      return y0;
    return y0 + (y1 - y0) * (target - x0) / (x1 - x0);
  }
  if (!pts.empty() && target == pts.back().first)
    return pts.back().second;
  return std::nullopt;
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]])
      ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k)
      r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

} // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2)
    throw DataError("spearman needs two equal-length samples of at least 2 values");
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - mean) * (rb[i] - mean);
    saa += (ra[i] - mean) * (ra[i] - mean);
    sbb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (saa == 0.0 || sbb == 0.0)
    throw DataError("spearman undefined for a constant sample");
  return sab / std::sqrt(saa * sbb);
}

std::vector<AblationRow> run_ablation(const std::vector<AblationConfig>& configs, const std::vector<CuRecord>& records,
                                      const std::vector<LumaFrame>& frames, const CodecConfig& cfg,
                                      const AblationSetup& setup) {
  if (configs.empty())
    throw UsageError("no ablation configurations");
  const auto anchor = run_set(frames, cfg, setup.qps, nullptr, setup.jobs);
  std::vector<AblationRow> rows;
  for (const auto& c : configs) {
    RegressionHyper h = setup.hyper;
    h.mask = c.mask;
    h.hidden = c.hidden;
    h.jobs = setup.jobs;
    auto trained = train_regression(records, "N32", h, setup.seed);
    ThresholdPolicy policy;
    policy.model = std::make_shared<const MlpModel>(std::move(trained.model));
    policy.active_sizes = setup.active_sizes;
    AblationRow row;
    row.name = c.name;
    row.mask = c.mask.to_string();
    row.hidden = c.hidden;
    row.sweep = sweep(frames, cfg, policy, setup.thresholds, setup.qps, setup.jobs, &anchor);
    row.bd_at_10 = bd_rate_at(row.sweep.points, 10.0);
    row.bd_at_20 = bd_rate_at(row.sweep.points, 20.0);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "config,mask,hidden,bd_rate_at_dc10_pct,bd_rate_at_dc20_pct\n";
  for (const auto& r : rows) {
    std::string hidden;
    for (std::size_t i = 0; i < r.hidden.size(); ++i)
      hidden += (i ? "-" : "") + std::to_string(r.hidden[i]);
    out << r.name << ",\"" << r.mask << "\"," << hidden << ',' << (r.bd_at_10 ? num(*r.bd_at_10) : "unreachable") << ','
        << (r.bd_at_20 ? num(*r.bd_at_20) : "unreachable") << '\n';
  }
  return out.str();
}

} // namespace qtaccel
