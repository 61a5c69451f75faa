#include "doctest.h"

#include "qtaccel/error.hpp"
#include "qtaccel/eval.hpp"
#include "test_util.hpp"

#include <cmath>
#include <random>

using namespace qtaccel;
using qtaccel::testing::textured_frame;

namespace {

RdCurve curve(std::vector<double> rates, std::vector<double> psnrs) {
  std::vector<RdPoint> pts;
  for (std::size_t i = 0; i < rates.size(); ++i)
    pts.push_back({rates[i], psnrs[i]});
  return RdCurve::from(std::move(pts));
}

// Random RD curve at 4 QPs: rate falls and PSNR falls with QP.
RdCurve random_curve(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double rate = 1e5 * (1.0 + 9.0 * u(rng));
  double psnr = 40.0 + 8.0 * u(rng);
  std::vector<RdPoint> pts;
  for (int i = 0; i < 4; ++i) {
    pts.push_back({rate, psnr});
    rate *= 0.3 + 0.4 * u(rng);
    psnr -= 1.5 + 3.0 * u(rng);
  }
  return RdCurve::from(std::move(pts));
}

std::shared_ptr<const MlpModel> random_model(std::uint64_t seed) {
  auto m = init_model({16, 8}, 1, seed);
  m.net.layers.back().b[0] = 1.0f;
  return std::make_shared<const MlpModel>(std::move(m));
}

std::vector<LumaFrame> small_frames() {
  return {textured_frame(128, 64, 1), textured_frame(64, 128, 2)};
}

} // namespace

TEST_CASE("delta_c arithmetic") {
  const std::map<int, std::uint64_t> a{{22, 1000}, {27, 800}, {32, 600}, {37, 400}};
  CHECK(delta_c(a, a) == 0.0);
  std::map<int, std::uint64_t> half;
  std::map<int, std::uint64_t> scaled_a;
  std::map<int, std::uint64_t> scaled_half;
  for (const auto& [qp, n] : a) {
    half[qp] = n / 2;
    scaled_a[qp] = n * 7;
    scaled_half[qp] = n / 2 * 7;
  }
  CHECK(delta_c(a, half) == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(delta_c(scaled_a, scaled_half) == doctest::Approx(delta_c(a, half)).epsilon(1e-12));

  // (1000-900)/1000, 0, 0, (400-100)/400 averaged: (0.1 + 0.75) / 4.
  const std::map<int, std::uint64_t> mixed{{22, 900}, {27, 800}, {32, 600}, {37, 100}};
  CHECK(delta_c(a, mixed) == doctest::Approx(21.25).epsilon(1e-12));

  CHECK_THROWS_AS(delta_c(a, {{22, 1}, {27, 1}, {32, 1}}), DataError);
  CHECK_THROWS_AS(delta_c(a, {{22, 1}, {27, 1}, {32, 1}, {38, 1}}), DataError);
  CHECK_THROWS_AS(delta_c({{22, 0}}, {{22, 0}}), DataError);
  CHECK_THROWS_AS(delta_c({}, {}), DataError);
}

TEST_CASE("delta_c of a depth-1 search against a depth-3 anchor is 50%") {
  const auto frames = small_frames();
  CodecConfig deep;
  deep.max_depth = 3;
  CodecConfig shallow = deep;
  shallow.max_depth = 1;
  const auto anchor = run_set(frames, deep, kDefaultQps);
  const auto test = run_set(frames, shallow, kDefaultQps);
  // 4 levels each re-cover the coded area once, 2 levels twice.
  const std::uint64_t area = 2 * 128 * 64;
  for (const auto& [qp, s] : anchor.per_qp) {
    CHECK(s.pixels == 4 * area);
    CHECK(test.per_qp.at(qp).pixels == 2 * area);
  }
  CHECK(std::abs(delta_c(anchor.pixels(), test.pixels()) - 50.0) < 1e-9);
  CHECK(delta_c(anchor.pixels(), run_set(frames, deep, kDefaultQps).pixels()) == 0.0);
}

TEST_CASE("bd_rate analytics") {
  const auto a = curve({4e5, 2e5, 1e5, 5e4}, {44.0, 40.5, 37.0, 33.8});
  CHECK(std::abs(bd_rate(a, a)) < 1e-9);

  auto shifted = a;
  for (auto& p : shifted.points)
    p.rate *= 1.05;
  CHECK(std::abs(bd_rate(a, shifted) - 5.0) < 1e-6);
  CHECK(std::abs(bd_rate(shifted, a) - (1.0 / 1.05 - 1.0) * 100.0) < 1e-6);

  // Both curves are exact cubics in PSNR, so the fit is exact; the log-rate difference
  // 0.01 + 0.002 (p - 38) averages to 0.01 over the overlap [34, 42].
  auto logr = [](double p) { return 2.0 + 0.3 * p - 0.004 * p * p + 0.00002 * p * p * p; };
  std::vector<double> pa{46.0, 42.0, 38.0, 34.0};
  std::vector<double> pt{42.0, 39.0, 36.0, 30.0};
  std::vector<double> ra;
  std::vector<double> rt;
  for (double p : pa)
    ra.push_back(std::pow(10.0, logr(p)));
  for (double p : pt)
    rt.push_back(std::pow(10.0, logr(p) + 0.01 + 0.002 * (p - 38.0)));
  CHECK(bd_rate(curve(ra, pa), curve(rt, pt)) == doctest::Approx((std::pow(10.0, 0.01) - 1.0) * 100.0).epsilon(1e-9));
}

TEST_CASE("bd_rate properties over random curves") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const auto a = random_curve(rng);
    auto b = a;
    for (auto& p : b.points) {
      p.rate *= 1.0 + 0.1 * std::generate_canonical<double, 53>(rng);
      p.psnr += 0.3 * std::generate_canonical<double, 53>(rng) - 0.15;
    }
    CHECK(std::abs(bd_rate(a, a)) < 1e-9);
    const double ab = bd_rate(a, b);
    const double ba = bd_rate(b, a);
    CHECK(std::abs(ab - (-ba / (1.0 + ba / 100.0))) < 1e-6);
  }
}

TEST_CASE("bd_rate errors") {
  const auto a = curve({4e5, 2e5, 1e5, 5e4}, {44.0, 40.5, 37.0, 33.8});
  CHECK_THROWS_AS(bd_rate(a, curve({4e5, 2e5, 1e5, 5e4}, {30.0, 29.0, 28.0, 27.0})), DataError);
  CHECK_THROWS_AS(bd_rate(a, curve({4e5, 2e5, 1e5, 5e4}, {44.0, 40.0, 40.0, 33.0})), DataError);
  CHECK_THROWS_AS(bd_rate(a, curve({4e5, 2e5, 1e5}, {44.0, 40.0, 36.0})), DataError);
  CHECK_THROWS_AS(bd_rate(a, curve({4e5, 2e5, 1e5, 0.0}, {44.0, 40.0, 36.0, 33.0})), DataError);
}

TEST_CASE("sweep") {
  const auto frames = small_frames();
  CodecConfig cfg;
  ThresholdPolicy policy;
  policy.model = random_model(11);
  policy.active_sizes = {16, 32};
  const std::vector<double> thresholds{1e9, 0.5, 1.0, 0.9, 1.1, 2.0, 0.1};
  const auto s = sweep(frames, cfg, policy, thresholds, kDefaultQps, 1);
  REQUIRE(s.points.size() == thresholds.size());
  for (std::size_t i = 1; i < s.points.size(); ++i) {
    CHECK(s.points[i - 1].threshold < s.points[i].threshold);
    CHECK(s.points[i - 1].delta_c >= s.points[i].delta_c);
  }
  for (const auto& p : s.points) {
    CHECK(p.delta_c >= 0.0);
    CHECK(p.delta_c <= 100.0);
  }
  CHECK(s.points.front().delta_c > 0.0);
  CHECK(s.points.back().threshold == 1e9);
  CHECK(s.points.back().delta_c == 0.0);
  CHECK(s.points.back().bd_rate == 0.0);

  const auto csv = sweep_csv(s);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(thresholds.size()) + 1);
  CHECK(csv.rfind("threshold,delta_c_pct,bd_rate_pct,rate_bits_qp22,psnr_db_qp22,pixels_qp22", 0) == 0);

  const auto again = sweep(frames, cfg, policy, thresholds, kDefaultQps, 3, &s.anchor);
  CHECK(sweep_csv(again) == csv);
  CHECK(sweep_summary_json(again, cfg, "N32") == sweep_summary_json(s, cfg, "N32"));

  CHECK_THROWS_AS(sweep(frames, cfg, policy, {}, kDefaultQps), UsageError);
  CHECK_THROWS_AS(run_set({}, cfg, kDefaultQps), DataError);
}

TEST_CASE("operating-point interpolation") {
  std::vector<TradeoffPoint> pts(3);
  pts[0].delta_c = 25.0;
  pts[0].bd_rate = 4.0;
  pts[1].delta_c = 15.0;
  pts[1].bd_rate = 3.0;
  pts[2].delta_c = 5.0;
  pts[2].bd_rate = 1.0;
  CHECK(*bd_rate_at(pts, 10.0) == doctest::Approx(2.0));
  CHECK(*bd_rate_at(pts, 20.0) == doctest::Approx(3.5));
  CHECK(*bd_rate_at(pts, 2.5) == doctest::Approx(0.5));
  CHECK(*bd_rate_at(pts, 25.0) == doctest::Approx(4.0));
  CHECK_FALSE(bd_rate_at(pts, 30.0).has_value());
}

TEST_CASE("ablation") {
  const std::vector<LumaFrame> train_frames{textured_frame(128, 128, 21), textured_frame(128, 128, 22)};
  const auto frames = small_frames();
  CodecConfig cfg;
  CollectOptions opts;
  const auto records = collect_records(train_frames, cfg, opts);

  AblationSetup setup;
  setup.thresholds = {0.8, 1.0, 1.2, 1e9};
  setup.hyper.epochs = 3;
  setup.hyper.batch = 32;
  setup.hyper.hidden = {16, 8};
  setup.hyper.adam.lr = 1e-3;
  setup.seed = 4;
  const std::vector<AblationConfig> configs{
      {"baseline", {}, {16, 8}},
      {"no_ni_pi_bi", {FeatureGroup::NI, FeatureGroup::PI, FeatureGroup::BI}, {16, 8}},
      {"reduced", {}, {8, 4}},
  };
  const auto rows = run_ablation(configs, records, frames, cfg, setup);
  REQUIRE(rows.size() == configs.size());
  CHECK(rows[1].mask == FeatureMask{FeatureGroup::NI, FeatureGroup::PI, FeatureGroup::BI}.to_string());
  CHECK(rows[2].hidden == std::vector<int>{8, 4});

  // The unmasked row matches a sweep of a directly trained baseline model.
  RegressionHyper h = setup.hyper;
  ThresholdPolicy policy;
  policy.model = std::make_shared<const MlpModel>(train_regression(records, "N32", h, setup.seed).model);
  const auto direct = sweep(frames, cfg, policy, setup.thresholds, setup.qps);
  CHECK(sweep_csv(direct) == sweep_csv(rows[0].sweep));

  const auto csv = ablation_csv(rows);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK_THROWS_AS(run_ablation({}, records, frames, cfg, setup), UsageError);
}

TEST_CASE("spearman") {
  const std::vector<double> a{1, 2, 3, 4, 5};
  const std::vector<double> sq{1, 4, 9, 16, 25};
  const std::vector<double> rev{5, 4, 3, 2, 1};
  CHECK(spearman(a, sq) == doctest::Approx(1.0));
  CHECK(spearman(a, rev) == doctest::Approx(-1.0));
  // Ranks (1, 2.5, 2.5, 4) against (1, 2, 3, 4): cov 4.5, var 4.5 and 5.
  const std::vector<double> tied{10, 20, 20, 30};
  const std::vector<double> lin{1, 2, 3, 4};
  CHECK(spearman(tied, lin) == doctest::Approx(4.5 / std::sqrt(4.5 * 5.0)));
  CHECK_THROWS_AS(spearman(a, lin), DataError);
  CHECK_THROWS_AS(spearman(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), DataError);
}
