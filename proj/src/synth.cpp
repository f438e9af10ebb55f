#include "muss/synth.hpp"

#include "muss/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

namespace muss {

namespace {
constexpr std::int64_t kDay = 86400;
constexpr std::int64_t kWeek = 7 * kDay;
}  // namespace

void GeneratorConfig::validate() const {
  if (n_units < 1) throw ConfigError("generator needs at least one unit");
  if (!(points_mean > 0) || !(points_log_sigma >= 0)) throw ConfigError("invalid point-count distribution");
  if (points_min < 1 || points_max < points_min) throw ConfigError("invalid point-count bounds");
  if (horizon_days < 1) throw ConfigError("horizon must be at least one day");
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

UnitPhysics sample_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> log_k(0.0, 0.3);
  UnitPhysics p;
  p.flow_coefficient = std::exp(log_k(rng));
  p.choke_exponent = std::uniform_real_distribution<double>(0.5, 1.5)(rng);
  p.gaslift_gain = std::uniform_real_distribution<double>(0.0, 0.5)(rng);
  p.temperature_gain = std::uniform_real_distribution<double>(0.0, 0.2)(rng);
  p.noise_std = std::uniform_real_distribution<double>(0.01, 0.05)(rng);
  return p;
}

double deterministic_flow(const UnitPhysics& phys, const Eigen::Ref<const Vector>& x) {
  if (x.size() != kProcessInputDim) throw DimensionError("process features must have 7 entries");
  const double u = x(0), p_wh = x(1), p_dc = x(2), t_wh = x(3), q_gl = x(6);
  const double drop = std::max(0.0, p_wh - p_dc);
  return phys.flow_coefficient * std::pow(u, phys.choke_exponent) * std::sqrt(drop) *
         (1.0 + phys.gaslift_gain * q_gl) * (1.0 + phys.temperature_gain * (t_wh - 0.5));
}

Observation sample_observation(const UnitPhysics& phys, std::mt19937_64& rng, std::int64_t timestamp) {
  auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  Observation obs;
  obs.timestamp = timestamp;
  obs.x.resize(kProcessInputDim);
  const double u = uniform(0.05, 1.0);
  const double p_wh = uniform(0.3, 1.0);
  const double p_dc = uniform(0.1, p_wh);
  const double t_wh = uniform(0.0, 1.0);
  const double eta_oil = uniform(0.0, 1.0);
  const double eta_gas = uniform(0.0, 1.0 - eta_oil);
  const double q_gl = uniform(0.0, 1.0);
  obs.x << u, p_wh, p_dc, t_wh, eta_oil, eta_gas, q_gl;
  const double z = std::normal_distribution<double>(0.0, 1.0)(rng);
  obs.y = std::clamp(deterministic_flow(phys, obs.x) + phys.noise_std * z, -0.5, 3.0);
  return obs;
}

GeneratedData generate_with_physics(const GeneratorConfig& cfg) {
  cfg.validate();
  GeneratedData out;
  out.data.units.resize(cfg.n_units);
  out.physics.resize(cfg.n_units);
  const double log_median = std::log(cfg.points_mean) - 0.5 * cfg.points_log_sigma * cfg.points_log_sigma;
  const std::int64_t horizon = static_cast<std::int64_t>(cfg.horizon_days) * kDay;
  for (std::size_t i = 0; i < cfg.n_units; ++i) {
    std::mt19937_64 rng(derive_seed(cfg.seed, i));
    const double draw = std::exp(std::normal_distribution<double>(log_median, cfg.points_log_sigma)(rng));
    const auto count = std::clamp(static_cast<std::size_t>(std::llround(draw)), cfg.points_min, cfg.points_max);
    const UnitPhysics phys = sample_unit(rng);

    std::uniform_int_distribution<std::int64_t> when(0, horizon - 1);
    std::vector<std::int64_t> stamps(count);
    for (auto& s : stamps) s = cfg.start_timestamp + when(rng);
    std::sort(stamps.begin(), stamps.end());

    auto& unit = out.data.units[i];
    char id[32];
    std::snprintf(id, sizeof id, "unit_%03zu", i);
    unit.unit_id = id;
    unit.observations.reserve(count);
    for (auto s : stamps) unit.observations.push_back(sample_observation(phys, rng, s));
    out.physics[i] = phys;
  }
  return out;
}

MultiUnitDataset generate(const GeneratorConfig& cfg) { return generate_with_physics(cfg).data; }

void assign_chunked_split(MultiUnitDataset& data, const SplitFractions& fractions, int chunk_days,
                          std::uint64_t seed) {
  const double sum = fractions.train + fractions.validation + fractions.test;
  if (std::abs(sum - 1.0) > 1e-9 || fractions.train < 0 || fractions.validation < 0 || fractions.test < 0)
    throw ConfigError("split fractions must be non-negative and sum to 1");
  if (chunk_days < 1) throw ConfigError("chunk_days must be at least 1");

  std::int64_t origin = 0;
  bool any = false;
  for (const auto& u : data.units)
    if (!u.empty()) {
      origin = any ? std::min(origin, u.observations.front().timestamp) : u.observations.front().timestamp;
      any = true;
    }
  const std::int64_t width = static_cast<std::int64_t>(chunk_days) * kDay;

  struct Chunk {
    std::size_t unit;
    std::int64_t window;
    std::size_t size;
  };
  std::vector<Chunk> chunks;
  for (std::size_t i = 0; i < data.unit_count(); ++i) {
    std::map<std::int64_t, std::size_t> counts;
    for (const auto& o : data.units[i].observations) ++counts[(o.timestamp - origin) / width];
    for (const auto& [w, n] : counts) chunks.push_back({i, w, n});
  }
  std::mt19937_64 rng(seed);
  std::shuffle(chunks.begin(), chunks.end(), rng);

  // Deficits are tracked per unit so that every unit with enough windows
  // contributes to all three sets; global fractions follow.
  const std::array<double, 3> target{fractions.train, fractions.validation, fractions.test};
  const std::array<Split, 3> label{Split::train, Split::validation, Split::test};
  std::vector<std::array<double, 3>> assigned(data.unit_count(), {0, 0, 0});
  std::vector<double> total(data.unit_count(), 0.0);
  std::map<std::pair<std::size_t, std::int64_t>, Split> chosen;
  for (const auto& c : chunks) {
    total[c.unit] += static_cast<double>(c.size);
    std::size_t best = 0;
    double best_deficit = -1e300;
    for (std::size_t s = 0; s < 3; ++s) {
      const double deficit = target[s] * total[c.unit] - assigned[c.unit][s];
      if (target[s] > 0 && deficit > best_deficit) {
        best_deficit = deficit;
        best = s;
      }
    }
    assigned[c.unit][best] += static_cast<double>(c.size);
    chosen[{c.unit, c.window}] = label[best];
  }
  for (std::size_t i = 0; i < data.unit_count(); ++i)
    for (auto& o : data.units[i].observations) o.split = chosen.at({i, (o.timestamp - origin) / width});
}

SplitDatasets partition_by_split(const MultiUnitDataset& data) {
  SplitDatasets out;
  for (auto* set : {&out.train, &out.validation, &out.test}) {
    set->units.resize(data.unit_count());
    for (std::size_t i = 0; i < data.unit_count(); ++i) set->units[i].unit_id = data.units[i].unit_id;
  }
  for (std::size_t i = 0; i < data.unit_count(); ++i)
    for (const auto& o : data.units[i].observations) {
      switch (o.split) {
        case Split::train: out.train.units[i].observations.push_back(o); break;
        case Split::validation: out.validation.units[i].observations.push_back(o); break;
        case Split::test: out.test.units[i].observations.push_back(o); break;
        case Split::none: break;
      }
    }
  return out;
}

SplitDatasets chunked_split(const MultiUnitDataset& data, const SplitFractions& fractions, int chunk_days,
                            std::uint64_t seed) {
  MultiUnitDataset labelled = data;
  assign_chunked_split(labelled, fractions, chunk_days, seed);
  return partition_by_split(labelled);
}

std::vector<FewShotStep> sequential_fewshot_sequence(const UnitDataset& unit, std::size_t n_max) {
  std::vector<FewShotStep> seq;
  const auto& obs = unit.observations;
  std::size_t pick = 0;
  while (seq.size() < n_max && pick < obs.size()) {
    FewShotStep step;
    step.train_index = pick;
    const std::int64_t t0 = obs[pick].timestamp;
    std::size_t j = pick + 1;
    for (; j < obs.size() && obs[j].timestamp < t0 + kWeek; ++j) step.test_indices.push_back(j);
    if (step.test_indices.empty()) {
      if (pick + 1 >= obs.size()) break;
      step.test_indices.push_back(pick + 1);
    }
    seq.push_back(std::move(step));
    // j is now the first observation at least a week after the pick.
    pick = j;
  }
  return seq;
}

UnitDataset fewshot_training_set(const UnitDataset& unit, const std::vector<FewShotStep>& sequence, std::size_t n) {
  if (n > sequence.size()) throw std::out_of_range("few-shot sequence is shorter than requested");
  UnitDataset out;
  out.unit_id = unit.unit_id;
  for (std::size_t k = 0; k < n; ++k) out.observations.push_back(unit.observations.at(sequence[k].train_index));
  return out;
}

UnitDataset fewshot_test_set(const UnitDataset& unit, const std::vector<FewShotStep>& sequence, std::size_t n) {
  if (sequence.empty() || n > sequence.size()) throw std::out_of_range("few-shot sequence is shorter than requested");
  UnitDataset out;
  out.unit_id = unit.unit_id;
  for (std::size_t j : sequence[n == 0 ? 0 : n - 1].test_indices) out.observations.push_back(unit.observations.at(j));
  return out;
}

}  // namespace muss
