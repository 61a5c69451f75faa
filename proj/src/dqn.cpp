#include "qtaccel/dqn.hpp"

#include "qtaccel/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_set>

namespace qtaccel {

ReplayMemory::ReplayMemory(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0)
    throw UsageError("replay capacity must be positive");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayMemory::push(Transition t) {
  if (t.action == SplitMode::NS && !t.next.empty())
    throw DataError("NS transition with successor states");
  if (t.action == SplitMode::QT && !t.child_level && t.next.size() != 4)
    throw DataError("QT transition needs 4 successor states");
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    return;
  }
  items_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayMemory::at(std::size_t i) const {
  if (i >= items_.size())
    throw std::out_of_range("replay index");
  return items_[(head_ + i) % items_.size()];
}

std::vector<const Transition*> ReplayMemory::sample(std::size_t batch, Rng& rng) const {
  const std::size_t n = std::min(batch, items_.size());
  std::vector<const Transition*> out;
  out.reserve(n);
  if (2 * n > items_.size()) {
    std::vector<std::size_t> idx(items_.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = i + static_cast<std::size_t>(uniform_index(rng, idx.size() - i));
      std::swap(idx[i], idx[j]);
      out.push_back(&items_[idx[i]]);
    }
    return out;
  }
  std::unordered_set<std::size_t> taken;
  while (out.size() < n) {
    const auto j = static_cast<std::size_t>(uniform_index(rng, items_.size()));
    if (taken.insert(j).second)
      out.push_back(&items_[j]);
  }
  return out;
}

void DqnHyper::validate() const {
  auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in01(epsilon_start) || !in01(epsilon_end))
    throw UsageError("epsilon must lie in [0,1]");
  if (!in01(gamma))
    throw UsageError("gamma must lie in [0,1]");
  if (batch <= 0 || steps <= 0 || capacity == 0 || epsilon_steps < 0)
    throw UsageError("batch, steps and capacity must be positive");
}

double DqnHyper::epsilon(std::int64_t step) const {
  const auto span = epsilon_steps > 0 ? epsilon_steps : steps;
  const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(std::max<std::int64_t>(span, 1)));
  return epsilon_start + (epsilon_end - epsilon_start) * frac;
}

SplitMode greedy_action(float q_ns, float q_qt) { return q_qt < q_ns ? SplitMode::QT : SplitMode::NS; }

namespace {

void require_pair(const MlpModel& q) {
  if (q.out() != 2)
    throw ModelError("Q model needs 2 outputs, has " + std::to_string(q.out()));
}

} // namespace

SplitMode select_action(const MlpModel& q, const FeatureVector& state, double epsilon, Rng& rng) {
  require_pair(q);
  if (uniform01(rng) < epsilon)
    return uniform_index(rng, 2) == 0 ? SplitMode::NS : SplitMode::QT;
  const auto v = predict(q, std::span(&state, 1));
  return greedy_action(v[0], v[1]);
}

double bellman_target(const Transition& t, const MlpModel& q, double gamma) {
  require_pair(q);
  if (t.next.empty() || t.child_level)
    return t.reward;
  if (t.next.size() != 4)
    throw DataError("malformed transition: QT needs 4 successor states");
  std::vector<FeatureVector> states;
  for (const auto& n : t.next)
    states.push_back(n.features);
  const auto v = predict(q, states);
  double sum = 0.0;
  for (std::size_t i = 0; i < 4; ++i)
    sum += std::min(v[2 * i], v[2 * i + 1]);
  return t.delta_qt + gamma * sum;
}

DqnResult train_dqn(const std::vector<Trajectory>& trajectories, const DqnHyper& hyper, std::uint64_t seed,
                    double c_median) {
  hyper.validate();
  if (trajectories.empty())
    throw DataError("empty trajectory set");
  if (c_median == 0.0)
    c_median = cost_median(trajectories);
  if (!(c_median > 0.0))
    throw DataError("c_median must be positive");
  const double parent = 1.0 / c_median;
  const double child = 1.0 / (4.0 * c_median);

  DqnResult res;
  res.model = init_model(hyper.hidden, 2, seed);
  res.model.variant = kDqnVariant;
  res.model.norm = {NormalizationMode::Median, c_median};
  res.model.mask = hyper.mask;
  auto& q = res.model;
  auto adam = AdamState<float>::for_network(q.net, hyper.adam);
  ReplayMemory memory(hyper.capacity);
  Rng rng(seed ^ 0x5851f42d4c957f2dULL);

  std::vector<std::size_t> order(trajectories.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<FeatureVector> bx;
  std::vector<float> by;
  std::vector<std::uint8_t> select;

  for (std::int64_t step = 0; step < hyper.steps; ++step) {
    const auto pos = static_cast<std::size_t>(step) % order.size();
    if (pos == 0)
      shuffle(std::span(order), rng);
    const auto& tr = trajectories[order[pos]];
    const double eps = hyper.epsilon(step);

    Transition top;
    top.state = tr.state;
    top.action = select_action(q, tr.state, eps, rng);
    top.delta_qt = tr.delta_qt_pp * parent;
    if (top.action == SplitMode::NS) {
      top.reward = tr.ns_j_pp * parent;
    } else {
      top.reward = tr.qt_j_pp * parent;
      for (const auto& c : tr.children)
        top.next.push_back({c.features, c.ns_j_pp * child, c.qt_j_pp * child});
    }
    memory.push(std::move(top));
    for (const auto& c : tr.children)
      for (auto a : {SplitMode::NS, SplitMode::QT}) {
        Transition t;
        t.state = c.features;
        t.action = a;
        t.reward = (a == SplitMode::NS ? c.ns_j_pp : c.qt_j_pp) * child;
        t.child_level = true;
        memory.push(std::move(t));
      }

    const auto batch = memory.sample(static_cast<std::size_t>(hyper.batch), rng);
    std::vector<FeatureVector> successors;
    for (const auto* t : batch)
      if (!t->child_level)
        for (const auto& n : t->next)
          successors.push_back(n.features);
    const auto succ_q = successors.empty() ? std::vector<float>{} : predict(q, successors, hyper.jobs);
    std::size_t succ = 0;
    bx.clear();
    by.clear();
    select.clear();
    for (const auto* t : batch) {
      bx.push_back(t->state);
      apply_mask(bx.back(), q.mask);
      double target = t->reward;
      if (!t->child_level && !t->next.empty()) {
        double sum = 0.0;
        for (std::size_t i = 0; i < t->next.size(); ++i, ++succ)
          sum += std::min(succ_q[2 * succ], succ_q[2 * succ + 1]);
        target = t->delta_qt + hyper.gamma * sum;
      }
      const bool is_qt = t->action == SplitMode::QT;
      by.push_back(is_qt ? 0.0f : static_cast<float>(target));
      by.push_back(is_qt ? static_cast<float>(target) : 0.0f);
      select.push_back(is_qt ? 0 : 1);
      select.push_back(is_qt ? 1 : 0);
    }
    std::vector<float> flat;
    flat.reserve(bx.size() * kFeatureCount);
    for (const auto& v : bx)
      flat.insert(flat.end(), v.begin(), v.end());
    const auto lg = loss_and_grads<float>(q.net, flat, by, bx.size(), hyper.jobs, select);
    adam_step(q.net, lg.grads, adam);
    res.diagnostics.td_error.push_back(std::sqrt(lg.loss));
    res.diagnostics.epsilon.push_back(eps);
  }

  bool finite = true;
  q.net.for_each_parameter([&](float v) { finite = finite && std::isfinite(v); });
  if (!finite || max_layer_gain(q.net) > kMaxLayerGain)
    throw ModelError("parameter blow-up during training");
  return res;
}

void write_dqn_csv(const std::filesystem::path& path, const DqnDiagnostics& d) {
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw DataError("cannot write " + path.string());
  out << "step,td_error,epsilon\n";
  out.precision(17);
  for (std::size_t i = 0; i < d.td_error.size(); ++i)
    out << i << ',' << d.td_error[i] << ',' << d.epsilon[i] << '\n';
}

} // namespace qtaccel
