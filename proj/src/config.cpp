#include "muss/config.hpp"

#include "muss/checkpoint.hpp"
#include "muss/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <initializer_list>

namespace muss {

namespace {

using nlohmann::json;

// Reads keys of one JSON object section, rejecting any key it was not asked about.
class Section {
 public:
  Section(const json& root, const char* name) : name_(name) {
    if (root.contains(name)) {
      obj_ = &root.at(name);
      if (!obj_->is_object()) throw ConfigError(std::string("section '") + name + "' must be an object");
    }
  }

  template <typename T>
  void read(const char* key, T& dst) {
    allowed_.push_back(key);
    if (obj_ == nullptr || !obj_->contains(key)) return;
    try {
      dst = obj_->at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(std::string("'") + name_ + "." + key + "' has the wrong type");
    }
  }

  void finish() const {
    if (obj_ == nullptr) return;
    for (const auto& [k, v] : obj_->items()) {
      bool known = false;
      for (const auto& a : allowed_) known = known || a == k;
      if (!known) throw ConfigError(std::string("unknown key '") + name_ + "." + k + "'");
    }
  }

 private:
  const char* name_;
  const json* obj_ = nullptr;
  std::vector<std::string> allowed_;
};

}  // namespace

ExperimentConfig ExperimentConfig::desk_scale() {
  ExperimentConfig c;
  c.network = {kProcessInputDim, 4, 64, 3};
  c.train.epochs = 2000;
  c.train.batch_budget = 256;
  // 2000 epochs instead of 20 000, so both step sizes are scaled up to move
  // the contexts over comparable distances.
  c.train.learning_rate = 1e-3;
  c.calibration.learning_rate = 1e-2;
  c.generator.n_units = 32;
  c.generator.points_mean = 200.0;
  return c;
}

void ExperimentConfig::validate() const {
  network.validate();
  priors.validate();
  train.validate();
  calibration.validate();
  generator.validate();
  const double sum = split.fractions.train + split.fractions.validation + split.fractions.test;
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  if (split.chunk_days < 1) throw ConfigError("split.chunk_days must be at least 1");
  if (scaling.m_list.empty() || scaling.repetitions < 1) throw ConfigError("scaling needs M values and repetitions");
  if (fewshot.n_base < 1 || fewshot.max_repetitions < 1) throw ConfigError("invalid few-shot settings");
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed config JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [k, v] : root.items()) {
    static const std::initializer_list<const char*> sections = {
        "network", "priors", "train", "calibration", "generator", "split", "scaling", "fewshot"};
    bool known = false;
    for (const char* s : sections) known = known || k == s;
    if (!known) throw ConfigError("unknown config section '" + k + "'");
  }

  ExperimentConfig c = ExperimentConfig::desk_scale();
  {
    Section s(root, "network");
    s.read("input_dim", c.network.input_dim);
    s.read("context_dim", c.network.context_dim);
    s.read("hidden_width", c.network.hidden_width);
    s.read("hidden_depth", c.network.hidden_depth);
    s.finish();
  }
  {
    Section s(root, "priors");
    s.read("theta_sigma", c.priors.theta_sigma);
    s.read("alpha", c.priors.alpha);
    s.read("beta", c.priors.beta);
    s.finish();
  }
  {
    Section s(root, "train");
    std::string averaging = "per_observation";
    s.read("learning_rate", c.train.learning_rate);
    s.read("epochs", c.train.epochs);
    s.read("batch_budget", c.train.batch_budget);
    s.read("seed", c.train.seed);
    s.read("adam_beta1", c.train.adam_beta1);
    s.read("adam_beta2", c.train.adam_beta2);
    s.read("adam_eps", c.train.adam_eps);
    s.read("validation_averaging", averaging);
    s.read("full_batch", c.train.full_batch);
    s.read("initial_precision", c.train.initial_precision);
    s.read("progress_every", c.train.progress_every);
    s.finish();
    if (averaging == "per_observation")
      c.train.validation_averaging = ValidationAveraging::per_observation;
    else if (averaging == "per_unit")
      c.train.validation_averaging = ValidationAveraging::per_unit;
    else
      throw ConfigError("train.validation_averaging must be 'per_observation' or 'per_unit'");
  }
  {
    Section s(root, "calibration");
    std::string optimizer = c.calibration.optimizer == CalibrationOptimizer::adam ? "adam" : "gradient_ascent";
    s.read("epochs", c.calibration.epochs);
    s.read("learning_rate", c.calibration.learning_rate);
    s.read("fix_precision", c.calibration.fix_precision);
    s.read("reinit_each_call", c.calibration.reinit_each_call);
    s.read("optimizer", optimizer);
    s.finish();
    if (optimizer == "adam")
      c.calibration.optimizer = CalibrationOptimizer::adam;
    else if (optimizer == "gradient_ascent")
      c.calibration.optimizer = CalibrationOptimizer::gradient_ascent;
    else
      throw ConfigError("calibration.optimizer must be 'adam' or 'gradient_ascent'");
  }
  {
    Section s(root, "generator");
    s.read("units", c.generator.n_units);
    s.read("points_mean", c.generator.points_mean);
    s.read("points_log_sigma", c.generator.points_log_sigma);
    s.read("points_min", c.generator.points_min);
    s.read("points_max", c.generator.points_max);
    s.read("seed", c.generator.seed);
    s.read("horizon_days", c.generator.horizon_days);
    s.read("start_timestamp", c.generator.start_timestamp);
    s.finish();
  }
  {
    Section s(root, "split");
    s.read("train", c.split.fractions.train);
    s.read("validation", c.split.fractions.validation);
    s.read("test", c.split.fractions.test);
    s.read("chunk_days", c.split.chunk_days);
    s.read("seed", c.split.seed);
    s.finish();
  }
  {
    Section s(root, "scaling");
    s.read("m_list", c.scaling.m_list);
    s.read("repetitions", c.scaling.repetitions);
    s.read("seed", c.scaling.seed);
    s.finish();
  }
  {
    Section s(root, "fewshot");
    s.read("n_base", c.fewshot.n_base);
    s.read("n_repetitions", c.fewshot.n_repetitions);
    s.read("max_repetitions", c.fewshot.max_repetitions);
    s.read("n_max", c.fewshot.n_max);
    s.read("seed", c.fewshot.seed);
    s.finish();
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  return parse_experiment_config(read_text_file(path));
}

}  // namespace muss
