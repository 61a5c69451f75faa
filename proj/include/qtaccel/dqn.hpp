#pragma once

#include "qtaccel/dataset.hpp"
#include "qtaccel/mlp.hpp"
#include "qtaccel/random.hpp"
#include "qtaccel/search.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace qtaccel {

inline const std::string kDqnVariant = "Q32_16";

/// Child state reached by a QT action, with its normalised true costs.
struct NextState {
  FeatureVector features{};
  double ns = 0.0;
  double qt = 0.0;
};

struct Transition {
  FeatureVector state{};
  SplitMode action = SplitMode::NS;
  double reward = 0.0; // normalised true cost of the taken action
  std::vector<NextState> next; // empty, or the 4 sub-CUs after QT
  double delta_qt = 0.0;
  bool child_level = false; // 16x16 transitions bootstrap nothing
};

/// Bounded FIFO ring of transitions.
class ReplayMemory {
public:
  explicit ReplayMemory(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  /// i-th stored transition, oldest first.
  const Transition& at(std::size_t i) const;
  /// Up to `batch` distinct transitions, uniformly chosen.
  std::vector<const Transition*> sample(std::size_t batch, Rng& rng) const;

private:
  std::size_t capacity_;
  std::size_t head_ = 0; // index of the oldest item once full
  std::vector<Transition> items_;
};

struct DqnHyper {
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  std::int64_t epsilon_steps = 0; // 0: decay over all steps
  double gamma = 1.0;
  int batch = 512;
  std::size_t capacity = 100000;
  std::int64_t steps = 20000;
  AdamHyper adam;
  std::vector<int> hidden = kDefaultHidden;
  FeatureMask mask;
  int jobs = 1;

  void validate() const;
  double epsilon(std::int64_t step) const;
};

/// Epsilon-greedy choice over (Q_NS, Q_QT); the greedy action is the argmin, ties go to NS.
SplitMode select_action(const MlpModel& q, const FeatureVector& state, double epsilon, Rng& rng);
SplitMode greedy_action(float q_ns, float q_qt);

double bellman_target(const Transition& t, const MlpModel& q, double gamma = 1.0);

struct DqnDiagnostics {
  std::vector<double> td_error; // per step, root-mean-square of target - Q(s, a) over the batch
  std::vector<double> epsilon;
};

struct DqnResult {
  MlpModel model;
  DqnDiagnostics diagnostics;
};

/// Costs are normalised to a 32x32 block at the median per-pixel cost: a 32x32 value is j_pp / c,
/// a 16x16 value is j_pp / (4 c), so a QT target is delta_qt plus the plain sum of the children's values.
DqnResult train_dqn(const std::vector<Trajectory>& trajectories, const DqnHyper& hyper, std::uint64_t seed,
                    double c_median = 0.0);

void write_dqn_csv(const std::filesystem::path& path, const DqnDiagnostics& d);

} // namespace qtaccel
