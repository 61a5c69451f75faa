#include "qtaccel/mlp.hpp"

#include "binio.hpp"
#include "qtaccel/error.hpp"
#include "qtaccel/kernels.hpp"
#include "qtaccel/random.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace qtaccel {

namespace {

void check_widths(const std::vector<int>& widths) {
  if (widths.size() < 2)
    throw ModelError("network needs at least input and output widths");
  for (int w : widths)
    if (w <= 0)
      throw ModelError("network widths must be positive");
}

} // namespace

template <class T>
Network<T> Network<T>::zeros(const std::vector<int>& widths) {
  check_widths(widths);
  Network n;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const auto in = static_cast<std::size_t>(widths[l]);
    const auto out = static_cast<std::size_t>(widths[l + 1]);
    n.layers.push_back({in, out, std::vector<T>(in * out, T(0)), std::vector<T>(out, T(0))});
  }
  return n;
}

template <class T>
Network<T> Network<T>::he(const std::vector<int>& widths, std::uint64_t seed) {
  auto n = zeros(widths);
  Rng rng(seed);
  for (auto& l : n.layers) {
    const double sd = std::sqrt(2.0 / static_cast<double>(l.in));
    for (auto& v : l.w)
      v = static_cast<T>(sd * standard_normal(rng));
  }
  return n;
}

template <class T>
std::vector<int> Network<T>::widths() const {
  std::vector<int> w{static_cast<int>(layers.front().in)};
  for (const auto& l : layers)
    w.push_back(static_cast<int>(l.out));
  return w;
}

template <class T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers)
    n += l.w.size() + l.b.size();
  return n;
}

template <class T>
std::vector<T> Network<T>::forward(std::span<const T> x, std::size_t rows, int jobs) const {
  if (x.size() != rows * input_width())
    throw ModelError("input shape mismatch: expected " + std::to_string(rows) + " x " +
                     std::to_string(input_width()) + " values, got " + std::to_string(x.size()));
  std::vector<T> cur(x.begin(), x.end());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    std::vector<T> next(rows * L.out);
    kernels::dense_forward<T>(cur, L.w, L.b, next, rows, L.in, L.out, l + 1 < layers.size(), jobs);
    cur = std::move(next);
  }
  return cur;
}

template <class T>
LossAndGrads<T> loss_and_grads(const Network<T>& net, std::span<const T> x, std::span<const T> y, std::size_t rows,
                               int jobs, std::span<const std::uint8_t> select) {
  const std::size_t out = net.output_width();
  if (rows == 0)
    throw ModelError("empty batch");
  if (x.size() != rows * net.input_width())
    throw ModelError("input shape mismatch");
  if (y.size() != rows * out)
    throw ModelError("target shape mismatch");
  if (!select.empty() && select.size() != rows * out)
    throw ModelError("selection shape mismatch");

  std::vector<std::vector<T>> acts{std::vector<T>(x.begin(), x.end())};
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& L = net.layers[l];
    std::vector<T> next(rows * L.out);
    kernels::dense_forward<T>(acts.back(), L.w, L.b, next, rows, L.in, L.out, l + 1 < net.layers.size(), jobs);
    acts.push_back(std::move(next));
  }

  std::size_t count = rows * out;
  if (!select.empty())
    count = static_cast<std::size_t>(std::count_if(select.begin(), select.end(), [](auto s) { return s != 0; }));

  LossAndGrads<T> r;
  r.grads = Network<T>::zeros(net.widths());
  if (count == 0)
    return r;

  const auto& pred = acts.back();
  std::vector<T> dy(rows * out, T(0));
  double sum = 0.0;
  for (std::size_t i = 0; i < rows * out; ++i) {
    if (!select.empty() && select[i] == 0)
      continue;
    const T diff = pred[i] - y[i];
    sum += static_cast<double>(diff) * static_cast<double>(diff);
    dy[i] = T(2) * diff / static_cast<T>(count);
  }
  r.loss = sum / static_cast<double>(count);

  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const auto& L = net.layers[l];
    auto& G = r.grads.layers[l];
    kernels::dense_backward_params<T>(acts[l], dy, G.w, G.b, rows, L.in, L.out, jobs);
    if (l == 0)
      break;
    std::vector<T> dx(rows * L.in);
    kernels::dense_backward_input<T>(L.w, dy, acts[l], dx, rows, L.in, L.out, true, jobs);
    dy = std::move(dx);
  }
  return r;
}

template <class T>
AdamState<T> AdamState<T>::for_network(const Network<T>& net, AdamHyper hyper) {
  AdamState s;
  s.m = Network<T>::zeros(net.widths());
  s.v = Network<T>::zeros(net.widths());
  s.hyper = hyper;
  return s;
}

template <class T>
void adam_step(Network<T>& net, const Network<T>& grads, AdamState<T>& state) {
  if (grads.widths() != net.widths() || state.m.widths() != net.widths())
    throw ModelError("optimizer shape mismatch");
  const auto& h = state.hyper;
  ++state.step;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  auto update = [&](std::vector<T>& p, const std::vector<T>& g, std::vector<T>& m, std::vector<T>& v) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = h.beta1 * static_cast<double>(m[i]) + (1.0 - h.beta1) * gi;
      const double vi = h.beta2 * static_cast<double>(v[i]) + (1.0 - h.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      p[i] = static_cast<T>(static_cast<double>(p[i]) - h.lr * (mi / c1) / (std::sqrt(vi / c2) + h.eps));
    }
  };
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    update(net.layers[l].w, grads.layers[l].w, state.m.layers[l].w, state.v.layers[l].w);
    update(net.layers[l].b, grads.layers[l].b, state.m.layers[l].b, state.v.layers[l].b);
  }
}

template <class T>
double max_layer_gain(const Network<T>& net) {
  double worst = 0.0;
  for (const auto& L : net.layers) {
    std::vector<double> u(L.in), wu(L.out);
    for (std::size_t k = 0; k < L.in; ++k)
      u[k] = 1.0 + 0.01 * static_cast<double>(k % 7);
    double sigma = 0.0;
    for (int it = 0; it < 100; ++it) {
      const double un = std::sqrt(std::inner_product(u.begin(), u.end(), u.begin(), 0.0));
      if (un == 0.0)
        break;
      for (auto& v : u)
        v /= un;
      std::fill(wu.begin(), wu.end(), 0.0);
      for (std::size_t k = 0; k < L.in; ++k)
        for (std::size_t j = 0; j < L.out; ++j)
          wu[j] += static_cast<double>(L.w[k * L.out + j]) * u[k];
      sigma = std::sqrt(std::inner_product(wu.begin(), wu.end(), wu.begin(), 0.0));
      for (std::size_t k = 0; k < L.in; ++k) {
        double acc = 0.0;
        for (std::size_t j = 0; j < L.out; ++j)
          acc += static_cast<double>(L.w[k * L.out + j]) * wu[j];
        u[k] = acc;
      }
    }
    worst = std::max(worst, sigma);
  }
  return worst;
}

template struct Network<float>;
template struct Network<double>;
template LossAndGrads<float> loss_and_grads(const Network<float>&, std::span<const float>, std::span<const float>,
                                            std::size_t, int, std::span<const std::uint8_t>);
template LossAndGrads<double> loss_and_grads(const Network<double>&, std::span<const double>, std::span<const double>,
                                             std::size_t, int, std::span<const std::uint8_t>);
template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(Network<float>&, const Network<float>&, AdamState<float>&);
template void adam_step(Network<double>&, const Network<double>&, AdamState<double>&);
template double max_layer_gain(const Network<float>&);
template double max_layer_gain(const Network<double>&);

MlpModel init_model(const std::vector<int>& hidden, int out, std::uint64_t seed) {
  if (hidden.empty())
    throw ModelError("at least one hidden layer is required");
  if (out != 1 && out != 2)
    throw ModelError("model output width must be 1 or 2, got " + std::to_string(out));
  std::vector<int> widths{static_cast<int>(kFeatureCount)};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(out);
  MlpModel m;
  m.net = Network<float>::he(widths, seed);
  m.layout_hash = feature_layout_hash();
  m.seed = seed;
  return m;
}

void check_layout(const MlpModel& model) {
  if (model.layout_hash != feature_layout_hash())
    throw ModelError("feature layout mismatch");
  if (model.net.input_width() != kFeatureCount)
    throw ModelError("model input width " + std::to_string(model.net.input_width()) + " != " +
                     std::to_string(kFeatureCount));
}

std::vector<float> predict(const MlpModel& model, std::span<const FeatureVector> features, int jobs) {
  check_layout(model);
  std::vector<float> x;
  x.reserve(features.size() * kFeatureCount);
  for (auto v : features) {
    apply_mask(v, model.mask);
    x.insert(x.end(), v.begin(), v.end());
  }
  return model.net.forward(x, features.size(), jobs);
}

namespace {

constexpr char kModelMagic[4] = {'Q', 'T', 'N', 'N'};
constexpr int kModelVersion = 1;

const char* mode_name(NormalizationMode m) { return m == NormalizationMode::Ratio ? "ratio" : "median"; }

} // namespace

void save_model(const std::filesystem::path& path, const MlpModel& model) {
  nlohmann::json h;
  h["format"] = "qtaccel-mlp";
  h["version"] = kModelVersion;
  h["variant"] = model.variant;
  h["widths"] = model.net.widths();
  h["normalization"] = {{"mode", mode_name(model.norm.mode)}, {"c_median", model.norm.c_median}};
  h["layout_hash"] = model.layout_hash;
  h["seed"] = model.seed;
  h["mask"] = model.mask.to_string();
  h["parameter_count"] = model.net.parameter_count();
  const std::string header = h.dump();

  binio::Writer w;
  w.raw({reinterpret_cast<const std::uint8_t*>(kModelMagic), 4});
  w.u32(static_cast<std::uint32_t>(header.size()));
  w.text(header);
  model.net.for_each_parameter([&](float v) { w.f32(v); });
  binio::write_file(path.string(), w.bytes());
}

MlpModel load_model(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = binio::read_file(path.string());
  } catch (const DataError& e) {
    throw ModelError(e.what());
  }
  binio::Reader r(bytes, path.string(), binio::Reader::Errors::Model);
  const auto magic = r.raw(4);
  if (!std::equal(magic.begin(), magic.end(), kModelMagic))
    throw ModelError("not a model file: " + path.string());
  const auto header_len = r.u32();
  const auto header_bytes = r.raw(header_len);
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header_bytes.begin(), header_bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw ModelError("malformed model header: " + std::string(e.what()));
  }

  MlpModel m;
  std::size_t declared = 0;
  try {
    if (h.at("version").get<int>() != kModelVersion)
      throw ModelError("unsupported model version");
    m.variant = h.at("variant").get<std::string>();
    const auto widths = h.at("widths").get<std::vector<int>>();
    check_widths(widths);
    m.net = Network<float>::zeros(widths);
    const auto mode = h.at("normalization").at("mode").get<std::string>();
    if (mode != "ratio" && mode != "median")
      throw ModelError("unknown normalization mode '" + mode + "'");
    m.norm.mode = mode == "ratio" ? NormalizationMode::Ratio : NormalizationMode::Median;
    m.norm.c_median = h.at("normalization").at("c_median").get<double>();
    m.layout_hash = h.at("layout_hash").get<std::uint64_t>();
    m.seed = h.at("seed").get<std::uint64_t>();
    m.mask = FeatureMask::parse(h.at("mask").get<std::string>());
    declared = h.at("parameter_count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ModelError("malformed model header: " + std::string(e.what()));
  } catch (const UsageError& e) {
    throw ModelError(std::string("malformed model header: ") + e.what());
  }
  if (declared != m.net.parameter_count())
    throw ModelError("header/blob inconsistency: parameter_count does not match widths");
  if (r.remaining() < declared * 4)
    throw ModelError(path.string() + ": truncated parameter blob");
  if (r.remaining() > declared * 4)
    throw ModelError("header/blob inconsistency: trailing bytes after parameters");
  m.net.for_each_parameter([&](float& v) {
    v = r.f32();
    if (!std::isfinite(v))
      throw ModelError("non-finite parameter in " + path.string());
  });
  return m;
}

std::vector<int> variant_sizes(const std::string& variant) {
  if (variant == "N8")
    return {8};
  if (variant == "N16")
    return {16};
  if (variant == "N32")
    return {32};
  if (variant == "N32_16")
    return {32, 16};
  if (variant == "N32_16_8")
    return {32, 16, 8};
  throw UsageError("unknown variant '" + variant + "' (expected N8, N16, N32, N32_16, N32_16_8)");
}

FlatBatch flatten(const TrainingSet& set, const FeatureMask& mask) {
  FlatBatch b;
  b.x.reserve(set.size() * kFeatureCount);
  b.y.reserve(set.size() * static_cast<std::size_t>(set.out));
  for (std::size_t i = 0; i < set.size(); ++i) {
    auto v = set.x[i];
    apply_mask(v, mask);
    b.x.insert(b.x.end(), v.begin(), v.end());
    for (int o = 0; o < set.out; ++o)
      b.y.push_back(set.y[i][static_cast<std::size_t>(o)]);
  }
  return b;
}

TrainResult train_regression(const std::vector<CuRecord>& records, const std::string& variant,
                             const RegressionHyper& hyper, std::uint64_t seed) {
  const auto sizes = variant_sizes(variant);
  if (records.empty())
    throw DataError("empty training set");
  if (hyper.epochs <= 0 || hyper.batch <= 0)
    throw UsageError("epochs and batch must be positive");
  for (const auto& r : records)
    if (std::find(sizes.begin(), sizes.end(), r.cu_size) == sizes.end())
      throw DataError("dataset contains " + std::to_string(r.cu_size) + "x" + std::to_string(r.cu_size) +
                      " records, which variant " + variant + " does not accept");

  const NormalizationSpec spec{sizes.size() == 1 ? NormalizationMode::Ratio : NormalizationMode::Median, 0.0};
  const auto set = normalize_targets(records, spec);
  const auto flat = flatten(set, hyper.mask);
  const std::size_t n = set.size();
  const auto out = static_cast<std::size_t>(set.out);

  TrainResult res;
  res.model = init_model(hyper.hidden, set.out, seed);
  res.model.variant = variant;
  res.model.norm = set.spec;
  res.model.mask = hyper.mask;
  auto& net = res.model.net;
  auto adam = AdamState<float>::for_network(net, hyper.adam);

  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto batch = std::min(static_cast<std::size_t>(hyper.batch), n);
  std::vector<float> bx, by;
  std::int64_t steps = 0;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    shuffle(std::span(order), rng);
    double sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t rows = std::min(batch, n - start);
      bx.clear();
      by.clear();
      for (std::size_t i = start; i < start + rows; ++i) {
        const auto s = order[i];
        bx.insert(bx.end(), flat.x.begin() + static_cast<std::ptrdiff_t>(s * kFeatureCount),
                  flat.x.begin() + static_cast<std::ptrdiff_t>((s + 1) * kFeatureCount));
        by.insert(by.end(), flat.y.begin() + static_cast<std::ptrdiff_t>(s * out),
                  flat.y.begin() + static_cast<std::ptrdiff_t>((s + 1) * out));
      }
      const auto lg = loss_and_grads<float>(net, bx, by, rows, hyper.jobs);
      adam_step(net, lg.grads, adam);
      sum += lg.loss * static_cast<double>(rows);
      seen += rows;
      ++steps;
      if (hyper.max_steps > 0 && steps >= hyper.max_steps)
        break;
    }
    res.epoch_loss.push_back(sum / static_cast<double>(seen));
    if (hyper.max_steps > 0 && steps >= hyper.max_steps)
      break;
  }

  bool finite = true;
  net.for_each_parameter([&](float v) { finite = finite && std::isfinite(v); });
  if (!finite || max_layer_gain(net) > kMaxLayerGain)
    throw ModelError("parameter blow-up during training");
  return res;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& epoch_loss) {
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw DataError("cannot write " + path.string());
  out << "epoch,loss\n";
  out.precision(17);
  for (std::size_t e = 0; e < epoch_loss.size(); ++e)
    out << e + 1 << ',' << epoch_loss[e] << '\n';
}

} // namespace qtaccel
