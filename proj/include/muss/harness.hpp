#pragma once

// Experiment orchestration: scaling with the number of units, few-shot
// calibration of held-out units and their information-gain curves.

#include "muss/calib.hpp"
#include "muss/posterior.hpp"
#include "muss/synth.hpp"
#include "muss/train.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace muss {

/// Worker count: MUSS_THREADS if set and positive, else the hardware concurrency.
std::size_t worker_count();

/// Runs task(0..n-1) on up to worker_count() threads. The first exception (by
/// task index) is rethrown after all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& task);

/// 100 · mean(|ŷ - y| / max(|y|, guard)).
double mape(std::span<const double> predictions, std::span<const double> targets, double guard = 1e-3);

struct InverseSqrtFit {
  double a = 0.0;
  double b = 0.0;
  double r_squared = 0.0;

  double operator()(double m) const;
};

/// Least-squares fit of mse ≈ a + b / √m.
InverseSqrtFit fit_inverse_sqrt(const std::vector<double>& m, const std::vector<double>& mse);

/// Quantile with linear interpolation between order statistics (q in [0, 1]).
double quantile(std::vector<double> values, double q);

struct ScalingConfig {
  std::vector<std::size_t> m_list{1, 2, 4, 8, 16, 32};
  std::size_t repetitions = 5;
  std::uint64_t seed = 0;
};

struct ScalingRow {
  std::size_t m = 0;
  std::size_t run_id = 0;
  double mean_test_mse = 0.0;
  std::size_t units_evaluated = 0;
};

struct ScalingResult {
  std::vector<ScalingRow> rows;               // sorted by (m, run_id)
  std::vector<std::size_t> m_values;
  std::vector<double> mean_test_mse;          // per m, averaged over runs
  InverseSqrtFit fit;
};

/// `data` carries train/val/test labels. For every repetition and M, units are
/// shuffled into ⌊U / M⌋ disjoint groups (leftovers dropped) and one model is
/// fitted per group.
ScalingResult run_scaling(const MultiUnitDataset& data, const ScalingConfig& scfg, const NetworkSpec& net,
                          const PriorConfig& priors, const TrainConfig& tcfg);

struct FewShotConfig {
  std::size_t n_base = 24;
  /// Repetitions to run at least; more follow until every unit was held out once.
  std::size_t n_repetitions = 1;
  std::size_t max_repetitions = 200;
  std::size_t n_max = 10;
  std::uint64_t seed = 0;
};

struct FewShotRecord {
  std::string unit_id;
  std::size_t run = 0;
  std::size_t n = 0;
  double mape = 0.0;
  double info_nats = 0.0;
  double info_bits = 0.0;
  std::size_t test_points = 0;
  bool posterior_failed = false;  // info gain is NaN
};

struct BandRow {
  std::size_t n = 0;
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  std::size_t units = 0;   // values entering the quantiles
  std::size_t failed = 0;  // NaN values left out
};

struct FewShotResult {
  std::vector<FewShotRecord> records;      // one run per unit, sorted by (unit_id, n)
  std::vector<FewShotRecord> all_records;  // every (run, holdout unit, n)
  std::vector<BandRow> mape_summary;
  std::vector<BandRow> info_summary;       // nats
  double base_reference_mape = 0.0;        // median over base units, first test week
  std::size_t runs = 0;
  std::vector<std::string> skipped_units;  // holdouts with an empty sequence
};

FewShotResult run_fewshot(const MultiUnitDataset& data, const FewShotConfig& fcfg, const NetworkSpec& net,
                          const PriorConfig& priors, const TrainConfig& tcfg, const CalibrationConfig& ccfg);

struct InfoGainCurve {
  std::string unit_id;
  std::vector<InformationGainPoint> points;
};

struct InfoGainResult {
  std::vector<InfoGainCurve> curves;  // sorted by unit id
  std::vector<BandRow> summary;       // nats
};

/// Information-gain curves of held-out units against a pretrained model,
/// over the sequential few-shot protocol.
InfoGainResult run_infogain(const FitResult& base, const MultiUnitDataset& holdout, std::size_t n_max,
                            const CalibrationConfig& ccfg);

/// Restricts a dataset to the given unit positions, in that order.
MultiUnitDataset select_units(const MultiUnitDataset& data, const std::vector<std::size_t>& units);

/// Trains on the train split with the validation split for model selection.
FitResult pretrain(const MultiUnitDataset& labelled, const NetworkSpec& net, const PriorConfig& priors,
                   const TrainConfig& tcfg);

}  // namespace muss
