#include "muss/harness.hpp"

#include "muss/errors.hpp"
#include "muss/objective.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>
#include <tuple>

namespace muss {

std::size_t worker_count() {
  if (const char* env = std::getenv("MUSS_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& task) {
  const std::size_t workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_index = n;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < failed_index) {
          failed_index = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

double mape(std::span<const double> predictions, std::span<const double> targets, double guard) {
  if (predictions.size() != targets.size()) throw DimensionError("mape: prediction and target counts differ");
  if (targets.empty()) throw std::invalid_argument("mape of an empty set");
  double sum = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i)
    sum += std::abs(predictions[i] - targets[i]) / std::max(std::abs(targets[i]), guard);
  return 100.0 * sum / static_cast<double>(targets.size());
}

double InverseSqrtFit::operator()(double m) const { return a + b / std::sqrt(m); }

InverseSqrtFit fit_inverse_sqrt(const std::vector<double>& m, const std::vector<double>& mse) {
  if (m.size() != mse.size() || m.size() < 2) throw std::invalid_argument("inverse-sqrt fit needs at least two points");
  const auto n = static_cast<Index>(m.size());
  Matrix design(n, 2);
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    if (!(m[static_cast<std::size_t>(i)] > 0)) throw std::invalid_argument("M values must be positive");
    design(i, 0) = 1.0;
    design(i, 1) = 1.0 / std::sqrt(m[static_cast<std::size_t>(i)]);
    y(i) = mse[static_cast<std::size_t>(i)];
  }
  const Eigen::Vector2d coef = design.colPivHouseholderQr().solve(y);
  InverseSqrtFit fit{coef(0), coef(1), 0.0};
  const double mean = y.mean();
  const double ss_tot = (y.array() - mean).square().sum();
  const double ss_res = (y - design * coef).squaredNorm();
  fit.r_squared = ss_tot > 0 ? 1.0 - ss_res / ss_tot : (ss_res == 0 ? 1.0 : 0.0);
  return fit;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty set");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

MultiUnitDataset select_units(const MultiUnitDataset& data, const std::vector<std::size_t>& units) {
  MultiUnitDataset out;
  out.units.reserve(units.size());
  for (auto i : units) out.units.push_back(data.units.at(i));
  return out;
}

FitResult pretrain(const MultiUnitDataset& labelled, const NetworkSpec& net, const PriorConfig& priors,
                   const TrainConfig& tcfg) {
  const SplitDatasets sets = partition_by_split(labelled);
  return fit(sets.train, sets.validation, net, priors, tcfg);
}

namespace {

double unit_mse(const FitResult& model, Index unit, const UnitDataset& data) {
  const Vector pred = unit_predictions(data, model.params.contexts.col(unit), model.params.theta, model.net);
  double s = 0.0;
  for (std::size_t j = 0; j < data.size(); ++j) {
    const double r = data.observations[j].y - pred[static_cast<Index>(j)];
    s += r * r;
  }
  return s / static_cast<double>(data.size());
}

std::vector<BandRow> band_summary(const std::map<std::size_t, std::vector<double>>& by_n) {
  std::vector<BandRow> rows;
  for (const auto& [n, all] : by_n) {
    std::vector<double> values;
    for (double v : all)
      if (!std::isnan(v)) values.push_back(v);
    const std::size_t failed = all.size() - values.size();
    if (values.empty()) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      rows.push_back({n, nan, nan, nan, 0, failed});
    } else {
      rows.push_back({n, quantile(values, 0.5), quantile(values, 0.25), quantile(values, 0.75), values.size(), failed});
    }
  }
  return rows;
}

double unit_mape(const FitResult& base, const CalibratedUnit& unit, const UnitDataset& test) {
  std::vector<double> pred, target;
  for (const auto& o : test.observations) {
    pred.push_back(predict(base, unit, o.x).mean);
    target.push_back(o.y);
  }
  return mape(pred, target);
}

}  // namespace

ScalingResult run_scaling(const MultiUnitDataset& data, const ScalingConfig& scfg, const NetworkSpec& net,
                          const PriorConfig& priors, const TrainConfig& tcfg) {
  const std::size_t total_units = data.unit_count();
  if (scfg.m_list.empty() || scfg.repetitions < 1) throw ConfigError("scaling needs M values and repetitions");
  for (auto m : scfg.m_list)
    if (m == 0 || m > total_units)
      throw ConfigError("M = " + std::to_string(m) + " yields zero groups of " + std::to_string(total_units) +
                        " units");
  const SplitDatasets sets = partition_by_split(data);

  struct Task {
    std::size_t m, run;
    std::vector<std::size_t> units;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (std::size_t run = 0; run < scfg.repetitions; ++run)
    for (std::size_t mi = 0; mi < scfg.m_list.size(); ++mi) {
      const std::size_t m = scfg.m_list[mi];
      std::vector<std::size_t> perm(total_units);
      std::iota(perm.begin(), perm.end(), 0);
      std::mt19937_64 rng(derive_seed(scfg.seed, run * 1000 + mi));
      std::shuffle(perm.begin(), perm.end(), rng);
      for (std::size_t g = 0; g < total_units / m; ++g) {
        Task t{m, run, {perm.begin() + static_cast<std::ptrdiff_t>(g * m),
                        perm.begin() + static_cast<std::ptrdiff_t>((g + 1) * m)},
               derive_seed(scfg.seed ^ 0x5ca1ab1eULL, tasks.size())};
        tasks.push_back(std::move(t));
      }
    }

  // Per task: test MSE of every group unit that has test data.
  std::vector<std::vector<double>> unit_mses(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t k) {
    const Task& t = tasks[k];
    TrainConfig cfg = tcfg;
    cfg.seed = t.seed;
    const FitResult model =
        fit(select_units(sets.train, t.units), select_units(sets.validation, t.units), net, priors, cfg);
    for (std::size_t g = 0; g < t.units.size(); ++g) {
      const auto& test = sets.test.units[t.units[g]];
      if (!test.empty()) unit_mses[k].push_back(unit_mse(model, static_cast<Index>(g), test));
    }
  });

  std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> pooled;
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    auto& dst = pooled[{tasks[k].m, tasks[k].run}];
    dst.insert(dst.end(), unit_mses[k].begin(), unit_mses[k].end());
  }
  ScalingResult result;
  std::map<std::size_t, std::vector<double>> per_m;
  for (const auto& [key, values] : pooled) {
    if (values.empty()) throw std::runtime_error("no unit with test data for M = " + std::to_string(key.first));
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    result.rows.push_back({key.first, key.second, mean, values.size()});
    per_m[key.first].push_back(mean);
  }
  std::vector<double> ms;
  for (const auto& [m, means] : per_m) {
    result.m_values.push_back(m);
    result.mean_test_mse.push_back(std::accumulate(means.begin(), means.end(), 0.0) /
                                   static_cast<double>(means.size()));
    ms.push_back(static_cast<double>(m));
  }
  if (ms.size() >= 2) result.fit = fit_inverse_sqrt(ms, result.mean_test_mse);
  return result;
}

FewShotResult run_fewshot(const MultiUnitDataset& data, const FewShotConfig& fcfg, const NetworkSpec& net,
                          const PriorConfig& priors, const TrainConfig& tcfg, const CalibrationConfig& ccfg) {
  const std::size_t total_units = data.unit_count();
  if (fcfg.n_base < 1 || fcfg.n_base >= total_units)
    throw ConfigError("n_base must be between 1 and the unit count minus one");

  // Base sets are drawn up front so results do not depend on scheduling.
  std::mt19937_64 rng(fcfg.seed);
  std::vector<std::vector<std::size_t>> base_sets, holdout_sets;
  std::set<std::size_t> covered;
  while ((base_sets.size() < fcfg.n_repetitions || covered.size() < total_units) &&
         base_sets.size() < fcfg.max_repetitions) {
    std::vector<std::size_t> perm(total_units);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::size_t> base(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(fcfg.n_base));
    std::vector<std::size_t> hold(perm.begin() + static_cast<std::ptrdiff_t>(fcfg.n_base), perm.end());
    std::sort(base.begin(), base.end());
    std::sort(hold.begin(), hold.end());
    covered.insert(hold.begin(), hold.end());
    base_sets.push_back(std::move(base));
    holdout_sets.push_back(std::move(hold));
  }

  struct RunOutput {
    std::vector<FewShotRecord> records;
    std::vector<double> base_mapes;
    std::vector<std::string> skipped;
  };
  std::vector<RunOutput> outputs(base_sets.size());
  parallel_for(base_sets.size(), [&](std::size_t run) {
    TrainConfig cfg = tcfg;
    cfg.seed = derive_seed(fcfg.seed ^ 0xba5eULL, run);
    const MultiUnitDataset base_data = select_units(data, base_sets[run]);
    const FitResult base = pretrain(base_data, net, priors, cfg);
    auto& out = outputs[run];

    const SplitDatasets sets = partition_by_split(base_data);
    for (std::size_t i = 0; i < sets.test.unit_count(); ++i) {
      const auto& test = sets.test.units[i];
      if (test.empty()) continue;
      UnitDataset week{test.unit_id, {}};
      for (const auto& o : test.observations)
        if (o.timestamp < test.observations.front().timestamp + 7 * 86400) week.observations.push_back(o);
      out.base_mapes.push_back(unit_mape(base, base_unit(base, static_cast<Index>(i)), week));
    }

    for (std::size_t u : holdout_sets[run]) {
      const UnitDataset& unit = data.units[u];
      const auto seq = sequential_fewshot_sequence(unit, fcfg.n_max);
      if (seq.empty()) {
        out.skipped.push_back(unit.unit_id);
        continue;
      }
      const auto curve = information_gain_curve(base, unit, seq, fcfg.n_max, ccfg, true);
      for (std::size_t n = 0; n <= seq.size(); ++n) {
        const CalibratedUnit cal = calibrate(base, fewshot_training_set(unit, seq, n), ccfg);
        const UnitDataset test = fewshot_test_set(unit, seq, n);
        out.records.push_back({unit.unit_id, run, n, unit_mape(base, cal, test), curve[n].gain.nats,
                               curve[n].gain.bits, test.size(), curve[n].posterior_failed});
      }
    }
  });

  FewShotResult result;
  result.runs = base_sets.size();
  std::vector<double> base_mapes;
  std::set<std::string> skipped;
  std::map<std::string, std::vector<std::size_t>> runs_of_unit;
  for (const auto& out : outputs) {
    result.all_records.insert(result.all_records.end(), out.records.begin(), out.records.end());
    base_mapes.insert(base_mapes.end(), out.base_mapes.begin(), out.base_mapes.end());
    skipped.insert(out.skipped.begin(), out.skipped.end());
  }
  for (const auto& r : result.all_records)
    if (r.n == 0) runs_of_unit[r.unit_id].push_back(r.run);
  result.skipped_units.assign(skipped.begin(), skipped.end());
  if (!base_mapes.empty()) result.base_reference_mape = quantile(base_mapes, 0.5);

  // One randomly chosen run represents each unit.
  std::mt19937_64 pick_rng(derive_seed(fcfg.seed, 0x9e9e));
  std::map<std::string, std::size_t> chosen;
  for (const auto& [id, runs] : runs_of_unit)
    chosen[id] = runs[std::uniform_int_distribution<std::size_t>(0, runs.size() - 1)(pick_rng)];

  std::map<std::size_t, std::vector<double>> mape_by_n, info_by_n;
  for (const auto& r : result.all_records)
    if (chosen.at(r.unit_id) == r.run) {
      result.records.push_back(r);
      mape_by_n[r.n].push_back(r.mape);
      info_by_n[r.n].push_back(r.info_nats);
    }
  std::sort(result.records.begin(), result.records.end(), [](const FewShotRecord& a, const FewShotRecord& b) {
    return std::tie(a.unit_id, a.n) < std::tie(b.unit_id, b.n);
  });
  result.mape_summary = band_summary(mape_by_n);
  result.info_summary = band_summary(info_by_n);
  return result;
}

InfoGainResult run_infogain(const FitResult& base, const MultiUnitDataset& holdout, std::size_t n_max,
                            const CalibrationConfig& ccfg) {
  InfoGainResult result;
  result.curves.resize(holdout.unit_count());
  parallel_for(holdout.unit_count(), [&](std::size_t i) {
    const auto& unit = holdout.units[i];
    result.curves[i].unit_id = unit.unit_id;
    result.curves[i].points = information_gain_curve(base, unit, sequential_fewshot_sequence(unit, n_max), n_max, ccfg, true);
  });
  std::sort(result.curves.begin(), result.curves.end(),
            [](const InfoGainCurve& a, const InfoGainCurve& b) { return a.unit_id < b.unit_id; });
  std::map<std::size_t, std::vector<double>> by_n;
  for (const auto& c : result.curves)
    for (const auto& p : c.points) by_n[p.n].push_back(p.gain.nats);
  result.summary = band_summary(by_n);
  return result;
}

}  // namespace muss
