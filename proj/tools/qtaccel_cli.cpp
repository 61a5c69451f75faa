#include "qtaccel/dataset.hpp"
#include "qtaccel/decision.hpp"
#include "qtaccel/dqn.hpp"
#include "qtaccel/error.hpp"
#include "qtaccel/eval.hpp"
#include "qtaccel/features.hpp"
#include "qtaccel/mlp.hpp"
#include "qtaccel/parallel.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qtaccel;

namespace {

/// Reads and writes CLI11 configuration as JSON: one key per long option, one object per subcommand.
class JsonConfig : public CLI::Config {
public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    return to_json(app, default_also).dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      j = json::parse(input);
    } catch (const json::exception& e) {
      throw CLI::ConversionError("config file is not valid JSON: " + std::string(e.what()));
    }
    std::vector<CLI::ConfigItem> items;
    collect(j, {}, items);
    return items;
  }

private:
  static json to_json(const CLI::App* app, bool default_also) {
    json j = json::object();
    for (const CLI::Option* opt : app->get_options({})) {
      if (opt->get_lnames().empty() || !opt->get_configurable())
        continue;
      const std::string name = opt->get_lnames().front();
      if (name == "help" || name == "config")
        continue;
      if (opt->get_type_size() == 0) {
        j[name] = opt->count() > 0;
      } else if (opt->count() > 0) {
        const auto& r = opt->results();
        j[name] = opt->get_expected_max() > 1 ? json(r) : json(r.front());
      } else if (default_also && !opt->get_default_str().empty()) {
        j[name] = default_value(opt->get_default_str());
      }
    }
    for (const CLI::App* sub : app->get_subcommands({}))
      if (sub->parsed())
        j[sub->get_name()] = to_json(sub, default_also);
    return j;
  }

  // CLI11 renders vector defaults as "[a,b,c]".
  static json default_value(const std::string& text) {
    if (text.size() < 2 || text.front() != '[' || text.back() != ']')
      return text;
    json arr = json::array();
    std::istringstream s(text.substr(1, text.size() - 2));
    std::string item;
    while (std::getline(s, item, ','))
      arr.push_back(item);
    return arr;
  }

  static void collect(const json& j, std::vector<std::string> parents, std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        auto p = parents;
        p.push_back(key);
        collect(value, p, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      auto scalar = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
      if (value.is_array())
        for (const auto& v : value)
          item.inputs.push_back(scalar(v));
      else
        item.inputs.push_back(scalar(value));
      items.push_back(std::move(item));
    }
  }
};

struct Common {
  std::vector<std::string> frames;
  int width = 0;
  int height = 0;
  std::vector<int> qps = kDefaultQps;
  int ctu = 64;
  int max_depth = 3;
  double split_bits = 2.0;
  int jobs = 1;
  std::uint64_t seed = 1;
  std::string out;

  CodecConfig codec(int qp = 22) const {
    CodecConfig c;
    c.ctu = ctu;
    c.max_depth = max_depth;
    c.split_bits = split_bits;
    c.qp = qp;
    return c;
  }
};

void add_frames(CLI::App* cmd, Common& c, const std::string& flag = "--frames") {
  cmd->add_option(flag, c.frames, "PGM files, raw luma files or directories of PGM files")->required();
  cmd->add_option("--width", c.width, "Width of raw luma inputs");
  cmd->add_option("--height", c.height, "Height of raw luma inputs");
}

void add_codec(CLI::App* cmd, Common& c) {
  cmd->add_option("--qps", c.qps, "QP list")->delimiter(',');
  cmd->add_option("--ctu", c.ctu, "CTU size");
  cmd->add_option("--max-depth", c.max_depth, "Maximum QT depth below the CTU");
  cmd->add_option("--split-bits", c.split_bits, "Bits charged per QT split flag");
}

void add_run(CLI::App* cmd, Common& c, bool out_required = true) {
  cmd->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", c.seed, "Random seed");
  auto* o = cmd->add_option("--out", c.out, "Output file");
  if (out_required)
    o->required();
}

std::vector<LumaFrame> load_frames(const Common& c) {
  std::vector<fs::path> paths;
  for (const auto& s : c.frames) {
    const fs::path p(s);
    if (fs::is_directory(p)) {
      std::vector<fs::path> dir;
      for (const auto& e : fs::directory_iterator(p))
        if (e.path().extension() == ".pgm")
          dir.push_back(e.path());
      std::sort(dir.begin(), dir.end());
      paths.insert(paths.end(), dir.begin(), dir.end());
    } else {
      paths.push_back(p);
    }
  }
  if (paths.empty())
    throw DataError("no input frames");
  std::vector<LumaFrame> frames;
  for (const auto& p : paths) {
    if (p.extension() == ".pgm") {
      frames.push_back(load_frame(p, FrameFormat::Pgm8));
    } else {
      if (c.width <= 0 || c.height <= 0)
        throw UsageError("raw luma input " + p.string() + " needs --width and --height");
      frames.push_back(load_frame(p, FrameFormat::RawY, c.width, c.height));
    }
  }
  return frames;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path())
    fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f)
    throw DataError("cannot write " + path.string());
  f << text;
  if (!f)
    throw DataError("write failed: " + path.string());
}

fs::path sibling(const std::string& out, const std::string& suffix) { return fs::path(out + suffix); }

void write_config(const CLI::App& app, const std::string& out) {
  write_text(sibling(out, ".config.json"), app.config_to_str(true, false) + "\n");
}

MlpModel read_model(const std::string& path) { return load_model(path); }

std::string group_of(std::size_t i) {
  if (i < kPiOffset)
    return "NI";
  if (i < kBiOffset)
    return "PI";
  if (i < kSiOffset)
    return "BI";
  return (i - kSiOffset) % kRegionStride < kHogBins ? "HOG" : "GLCM";
}

std::vector<double> parse_thresholds(const std::vector<std::string>& items) {
  std::vector<double> out;
  for (const auto& s : items) {
    if (s == "inf") {
      out.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size())
      throw UsageError("bad threshold: " + s);
    out.push_back(v);
  }
  return out;
}

RdCurve read_rd_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f)
    throw DataError("cannot read " + path);
  std::string line;
  if (!std::getline(f, line) || line.rfind("qp,rate_bits,psnr_db", 0) != 0)
    throw DataError(path + ": expected header qp,rate_bits,psnr_db");
  std::vector<RdPoint> pts;
  while (std::getline(f, line)) {
    if (line.empty())
      continue;
    std::istringstream s(line);
    std::string qp;
    std::string rate;
    std::string psnr;
    if (!std::getline(s, qp, ',') || !std::getline(s, rate, ',') || !std::getline(s, psnr, ','))
      throw DataError(path + ": malformed row: " + line);
    try {
      pts.push_back({std::stod(rate), std::stod(psnr)});
    } catch (const std::exception&) {
      throw DataError(path + ": malformed row: " + line);
    }
  }
  return RdCurve::from(std::move(pts));
}

std::string rd_csv(const SetResult& r) {
  std::ostringstream out;
  out.precision(17);
  out << "qp,rate_bits,psnr_db,processed_pixels\n";
  for (const auto& [qp, s] : r.per_qp)
    out << qp << ',' << s.rate_bits << ',' << s.psnr_db() << ',' << s.pixels << '\n';
  return out.str();
}

ThresholdPolicy make_policy(const std::string& model_path, double threshold, const std::vector<int>& active) {
  ThresholdPolicy p;
  p.model = std::make_shared<const MlpModel>(read_model(model_path));
  p.threshold = threshold;
  p.active_sizes = active;
  return p;
}

struct AblationSpec {
  std::vector<std::string> entries{"baseline=none", "wo_ni_pi_bi=NI,PI,BI", "reduced=none@128,128,64"};
};

AblationConfig parse_ablation(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0)
    throw UsageError("ablation entry must be name=mask[@widths]: " + text);
  AblationConfig c;
  c.name = text.substr(0, eq);
  std::string rest = text.substr(eq + 1);
  const auto at = rest.find('@');
  if (at != std::string::npos) {
    c.hidden.clear();
    std::istringstream s(rest.substr(at + 1));
    std::string w;
    while (std::getline(s, w, ',')) {
      try {
        c.hidden.push_back(std::stoi(w));
      } catch (const std::exception&) {
        throw UsageError("bad width in ablation entry: " + text);
      }
    }
    rest = rest.substr(0, at);
  }
  c.mask = FeatureMask::parse(rest);
  return c;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quadtree intra-partitioning acceleration toolkit"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "Read options from a JSON config file");
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  Common c;
  std::string data;
  std::string model_path;
  std::string variant = "N32";
  std::string mask_text = "none";
  std::vector<int> hidden = kDefaultHidden;
  std::vector<int> sizes{32};
  std::vector<int> active{32};
  bool no_balance = false;
  bool augment = false;
  int epochs = 10;
  int batch = 512;
  double lr = 1e-5;
  std::int64_t max_steps = 0;
  DqnHyper dh;
  double threshold = std::numeric_limits<double>::infinity();
  std::vector<std::string> thresholds;
  bool exhaustive = false;
  int qp = -1;
  std::string anchor_path;
  std::string test_path;
  AblationSpec ablation;

  // dataset
  auto* dataset = app.add_subcommand("dataset", "Collect training data by exhaustive search");
  dataset->require_subcommand(1);
  auto* ds_build = dataset->add_subcommand("build", "CU records for regression training");
  add_frames(ds_build, c);
  add_codec(ds_build, c);
  add_run(ds_build, c);
  ds_build->add_option("--sizes", sizes, "CU sizes to record")->delimiter(',');
  ds_build->add_flag("--no-balance", no_balance, "Keep the natural NS/QT class ratio");
  ds_build->add_flag("--augment", augment, "Add the 7 flipped/transposed variants of every frame");
  auto* ds_traj = dataset->add_subcommand("trajectories", "32x32 / 16x16 episodes for DQN training");
  add_frames(ds_traj, c);
  add_codec(ds_traj, c);
  add_run(ds_traj, c);
  ds_traj->add_flag("--no-balance", no_balance, "Keep the natural NS/QT class ratio");
  ds_traj->add_flag("--augment", augment, "Add the 7 flipped/transposed variants of every frame");

  // features
  auto* features = app.add_subcommand("features", "Feature layout");
  features->require_subcommand(1);
  auto* describe = features->add_subcommand("describe", "Print the feature layout table as JSON");
  describe->add_option("--out", c.out, "Output file (default stdout)");

  // train
  auto* train = app.add_subcommand("train", "Train a model");
  train->require_subcommand(1);
  auto* train_reg = train->add_subcommand("reg", "Train an RD-cost regression MLP");
  train_reg->add_option("--data", data, "Record file from `dataset build`")->required();
  train_reg->add_option("--variant", variant, "N8, N16, N32, N32_16 or N32_16_8");
  train_reg->add_option("--epochs", epochs, "Training epochs")->check(CLI::PositiveNumber);
  train_reg->add_option("--batch", batch, "Minibatch size")->check(CLI::PositiveNumber);
  train_reg->add_option("--lr", lr, "Adam learning rate");
  train_reg->add_option("--max-steps", max_steps, "Stop after this many updates (0: no limit)");
  train_reg->add_option("--hidden", hidden, "Hidden layer widths")->delimiter(',');
  train_reg->add_option("--mask", mask_text, "Feature groups to zero (NI,PI,BI,HOG,GLCM or none)");
  add_run(train_reg, c);
  auto* train_dqn_cmd = train->add_subcommand("dqn", "Train the two-depth DQN");
  train_dqn_cmd->add_option("--data", data, "Trajectory file from `dataset trajectories`")->required();
  train_dqn_cmd->add_option("--steps", dh.steps, "Training steps")->check(CLI::PositiveNumber);
  train_dqn_cmd->add_option("--batch", batch, "Replay minibatch size")->check(CLI::PositiveNumber);
  train_dqn_cmd->add_option("--lr", lr, "Adam learning rate");
  train_dqn_cmd->add_option("--capacity", dh.capacity, "Replay memory capacity");
  train_dqn_cmd->add_option("--gamma", dh.gamma, "Discount factor");
  train_dqn_cmd->add_option("--epsilon-start", dh.epsilon_start, "Initial exploration rate");
  train_dqn_cmd->add_option("--epsilon-end", dh.epsilon_end, "Final exploration rate");
  train_dqn_cmd->add_option("--epsilon-steps", dh.epsilon_steps, "Decay length (0: all steps)");
  train_dqn_cmd->add_option("--hidden", hidden, "Hidden layer widths")->delimiter(',');
  train_dqn_cmd->add_option("--mask", mask_text, "Feature groups to zero");
  add_run(train_dqn_cmd, c);

  // encode
  auto* encode = app.add_subcommand("encode", "Code frames exhaustively or with a pruning policy");
  add_frames(encode, c);
  add_codec(encode, c);
  add_run(encode, c);
  encode->add_option("--qp", qp, "Single QP (overrides --qps)");
  auto* ex_flag = encode->add_flag("--exhaustive", exhaustive, "Full RDO search");
  auto* model_opt = encode->add_option("--model", model_path, "Model file for pruned search");
  encode->add_option("--threshold", threshold, "Pruning threshold");
  encode->add_option("--active", active, "CU sizes the policy runs at")->delimiter(',');
  ex_flag->excludes(model_opt);

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Threshold sweep against the exhaustive anchor");
  add_frames(sweep_cmd, c);
  add_codec(sweep_cmd, c);
  add_run(sweep_cmd, c);
  sweep_cmd->add_option("--model", model_path, "Model file")->required();
  sweep_cmd->add_option("--thresholds", thresholds, "Threshold list")->delimiter(',')->required();
  sweep_cmd->add_option("--active", active, "CU sizes the policy runs at")->delimiter(',');

  // bdrate
  auto* bdrate = app.add_subcommand("bdrate", "BD-rate between two RD curve CSV files");
  bdrate->add_option("--anchor", anchor_path, "Anchor curve (qp,rate_bits,psnr_db)")->required();
  bdrate->add_option("--test", test_path, "Test curve (qp,rate_bits,psnr_db)")->required();
  bdrate->add_option("--out", c.out, "Output JSON (default stdout)");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Retrain under feature masks or reduced widths and sweep");
  ablate->add_option("--data", data, "Record file from `dataset build`")->required();
  add_frames(ablate, c);
  add_codec(ablate, c);
  add_run(ablate, c);
  ablate->add_option("--ablation", ablation.entries, "name=mask[@widths], repeatable");
  ablate->add_option("--thresholds", thresholds, "Threshold list")->delimiter(',')->required();
  ablate->add_option("--active", active, "CU sizes the policy runs at")->delimiter(',');
  ablate->add_option("--epochs", epochs, "Training epochs")->check(CLI::PositiveNumber);
  ablate->add_option("--batch", batch, "Minibatch size")->check(CLI::PositiveNumber);
  ablate->add_option("--lr", lr, "Adam learning rate");
  ablate->add_option("--max-steps", max_steps, "Stop after this many updates (0: no limit)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0)
      return app.exit(e);
    app.exit(e);
    return 2;
  }

  try {
    if (ds_build->parsed()) {
      CollectOptions opts;
      opts.qps = c.qps;
      opts.sizes = sizes;
      opts.jobs = c.jobs;
      auto frames = load_frames(c);
      if (augment)
        frames = dihedral_augment(frames);
      auto records = collect_records(frames, c.codec(), opts);
      const auto raw = records.size();
      if (!no_balance)
        records = balance(records, c.seed);
      save_records(c.out, records);
      write_config(app, c.out);
      std::cout << "records: " << records.size() << " (collected " << raw << ")\n";
    } else if (ds_traj->parsed()) {
      auto frames = load_frames(c);
      if (augment)
        frames = dihedral_augment(frames);
      auto trajs = collect_trajectories(frames, c.codec(), c.qps, c.jobs);
      const auto raw = trajs.size();
      if (!no_balance)
        trajs = balance(trajs, c.seed);
      save_trajectories(c.out, trajs);
      write_config(app, c.out);
      std::cout << "trajectories: " << trajs.size() << " (collected " << raw << ")\n";
    } else if (describe->parsed()) {
      json table = json::array();
      const auto& names = feature_names();
      for (std::size_t i = 0; i < names.size(); ++i)
        table.push_back({{"index", i}, {"name", names[i]}, {"group", group_of(i)}});
      json j{{"feature_count", names.size()}, {"layout_hash", feature_layout_hash()}, {"features", table}};
      if (c.out.empty()) {
        std::cout << j.dump(2) << '\n';
      } else {
        write_text(c.out, j.dump(2) + "\n");
        write_config(app, c.out);
      }
    } else if (train_reg->parsed()) {
      RegressionHyper h;
      h.epochs = epochs;
      h.batch = batch;
      h.adam.lr = lr;
      h.hidden = hidden;
      h.mask = FeatureMask::parse(mask_text);
      h.max_steps = max_steps;
      h.jobs = c.jobs;
      const auto result = train_regression(load_records(data), variant, h, c.seed);
      save_model(c.out, result.model);
      write_loss_csv(sibling(c.out, ".loss.csv"), result.epoch_loss);
      write_config(app, c.out);
      std::cout << "final loss: " << result.epoch_loss.back() << '\n';
    } else if (train_dqn_cmd->parsed()) {
      dh.batch = batch;
      dh.adam.lr = lr;
      dh.hidden = hidden;
      dh.mask = FeatureMask::parse(mask_text);
      dh.jobs = c.jobs;
      const auto result = train_dqn(load_trajectories(data), dh, c.seed);
      save_model(c.out, result.model);
      write_dqn_csv(sibling(c.out, ".td.csv"), result.diagnostics);
      write_config(app, c.out);
      std::cout << "final td error: " << result.diagnostics.td_error.back() << '\n';
    } else if (encode->parsed()) {
      if (!exhaustive && model_path.empty())
        throw UsageError("encode needs --exhaustive or --model");
      const auto frames = load_frames(c);
      const std::vector<int> qps = qp >= 0 ? std::vector<int>{qp} : c.qps;
      std::optional<ThresholdPolicy> policy;
      if (!exhaustive)
        policy = make_policy(model_path, threshold, active);
      const auto set = run_set(frames, c.codec(), qps, policy ? &*policy : nullptr, c.jobs);
      json runs = json::array();
      for (const auto& [q, s] : set.per_qp) {
        auto r = json::parse(run_report_json(q, exhaustive ? std::numeric_limits<double>::infinity() : threshold,
                                             s.pixels, s.rate_bits, s.psnr_db()));
        r["frames"] = frames.size();
        runs.push_back(r);
      }
      json report{{"mode", exhaustive ? "exhaustive" : "pruned"}, {"runs", runs}};
      write_text(c.out, report.dump(2) + "\n");
      write_text(sibling(c.out, ".rd.csv"), rd_csv(set));
      write_config(app, c.out);
    } else if (sweep_cmd->parsed()) {
      const auto policy = make_policy(model_path, 1.0, active);
      const auto result = sweep(load_frames(c), c.codec(), policy, parse_thresholds(thresholds), c.qps, c.jobs);
      write_text(c.out, sweep_csv(result));
      write_text(sibling(c.out, ".summary.json"), sweep_summary_json(result, c.codec(), policy.model->variant) + "\n");
      write_config(app, c.out);
    } else if (bdrate->parsed()) {
      const double bd = bd_rate(read_rd_csv(anchor_path), read_rd_csv(test_path));
      const json j{{"anchor", anchor_path}, {"test", test_path}, {"bd_rate_pct", bd}};
      if (c.out.empty()) {
        std::cout << j.dump(2) << '\n';
      } else {
        write_text(c.out, j.dump(2) + "\n");
        write_config(app, c.out);
      }
    } else if (ablate->parsed()) {
      std::vector<AblationConfig> configs;
      for (const auto& e : ablation.entries)
        configs.push_back(parse_ablation(e));
      AblationSetup setup;
      setup.thresholds = parse_thresholds(thresholds);
      setup.qps = c.qps;
      setup.active_sizes = active;
      setup.hyper.epochs = epochs;
      setup.hyper.batch = batch;
      setup.hyper.adam.lr = lr;
      setup.hyper.max_steps = max_steps;
      setup.seed = c.seed;
      setup.jobs = c.jobs;
      const auto rows = run_ablation(configs, load_records(data), load_frames(c), c.codec(), setup);
      write_text(c.out, ablation_csv(rows));
      for (const auto& r : rows)
        write_text(sibling(c.out, "." + r.name + ".sweep.csv"), sweep_csv(r.sweep));
      write_config(app, c.out);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const ModelError& e) {
    std::cerr << "model error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
