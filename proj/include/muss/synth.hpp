#pragma once

// Synthetic multi-unit process: every unit is a choke-equation-like
// realization of one prototype with five latent physical parameters. Also the
// chunked train/validation/test split and the sequential few-shot protocol.

#include "muss/core.hpp"

#include <array>
#include <cstdint>
#include <random>
#include <vector>

namespace muss {

/// Feature order of an observation: u, p_wh, p_dc, t_wh, eta_oil, eta_gas, q_gl.
inline constexpr Index kProcessInputDim = 7;

struct UnitPhysics {
  double flow_coefficient = 1.0;  // k > 0
  double choke_exponent = 1.0;    // [0.5, 1.5]
  double gaslift_gain = 0.0;      // [0, 0.5]
  double temperature_gain = 0.0;  // [0, 0.2]
  double noise_std = 0.01;        // [0.01, 0.05]
};

struct GeneratorConfig {
  std::size_t n_units = 32;
  double points_mean = 300.0;  // mean of the lognormal point count
  double points_log_sigma = 0.5;
  std::size_t points_min = 30;
  std::size_t points_max = 3000;
  std::uint64_t seed = 0;
  int horizon_days = 730;
  std::int64_t start_timestamp = 1577836800;  // 2020-01-01T00:00:00Z

  void validate() const;
};

/// Independent stream `stream` derived from a master seed (SplitMix64).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

UnitPhysics sample_unit(std::mt19937_64& rng);

/// Noise-free target for features in process order.
double deterministic_flow(const UnitPhysics& phys, const Eigen::Ref<const Vector>& x);

Observation sample_observation(const UnitPhysics& phys, std::mt19937_64& rng, std::int64_t timestamp);

struct GeneratedData {
  MultiUnitDataset data;
  std::vector<UnitPhysics> physics;
};

GeneratedData generate_with_physics(const GeneratorConfig& cfg);
MultiUnitDataset generate(const GeneratorConfig& cfg);

struct SplitFractions {
  double train = 0.81;
  double validation = 0.14;
  double test = 0.05;
};

struct SplitDatasets {
  MultiUnitDataset train;
  MultiUnitDataset validation;
  MultiUnitDataset test;
};

/// Tiles time into `chunk_days` windows per unit and assigns whole windows to
/// train/validation/test, in random order, greedily tracking the target fractions.
void assign_chunked_split(MultiUnitDataset& data, const SplitFractions& fractions = {}, int chunk_days = 30,
                          std::uint64_t seed = 0);

/// Groups observations by their split label. Every output lists all units.
SplitDatasets partition_by_split(const MultiUnitDataset& data);

SplitDatasets chunked_split(const MultiUnitDataset& data, const SplitFractions& fractions = {}, int chunk_days = 30,
                            std::uint64_t seed = 0);

struct FewShotStep {
  std::size_t train_index = 0;
  std::vector<std::size_t> test_indices;
};

/// Sequential evaluation protocol: each training point is the next observation
/// at least one week after the previous pick (the first pick is the first
/// observation); its test window holds the observations of the following week,
/// or the single next observation when that week is empty.
std::vector<FewShotStep> sequential_fewshot_sequence(const UnitDataset& unit, std::size_t n_max = 10);

/// Observations of the first n training picks.
UnitDataset fewshot_training_set(const UnitDataset& unit, const std::vector<FewShotStep>& sequence, std::size_t n);

/// Test window after n picks; n = 0 shares the window of the first pick.
UnitDataset fewshot_test_set(const UnitDataset& unit, const std::vector<FewShotStep>& sequence, std::size_t n);

}  // namespace muss
