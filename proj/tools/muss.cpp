// muss: multi-unit soft sensing experiments.
//
//   muss generate  --seed 7 --units 32 --out data.csv
//   muss pretrain  --data data.csv [--config cfg.json] --out model.json [--history h.csv]
//   muss calibrate --model model.json --data new.csv --unit ID [--points N] --out unit.json
//   muss predict   --model model.json [--unit ID | --calibrated unit.json] --x 0.5,0.6,...
//   muss scaling   --data data.csv [--config cfg.json] --out rows.csv [--summary curve.csv]
//   muss fewshot   --data data.csv [--config cfg.json] --out records.csv [--summary bands.csv]
//   muss infogain  --model model.json --data data.csv [--units a,b] --out curves.csv [--summary bands.csv]
//
// Exit codes: 0 success, 1 runtime failure, 2 bad command line, 3 malformed
// config or model file, 4 missing or unreadable file.

#include "muss/checkpoint.hpp"
#include "muss/config.hpp"
#include "muss/dataset_csv.hpp"
#include "muss/errors.hpp"
#include "muss/harness.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <set>
#include <sstream>

namespace {

using namespace muss;

enum ExitCode { kOk = 0, kRuntime = 1, kUsage = 2, kConfig = 3, kFile = 4 };

int fail(int code, const char* kind, const std::string& message) {
  std::string flat = message;
  for (auto& ch : flat)
    if (ch == '\n' || ch == '"') ch = ch == '\n' ? ' ' : '\'';
  std::cerr << "error: code=" << code << " kind=" << kind << " message=\"" << flat << "\"\n";
  return code;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

Vector parse_x(const std::string& s) {
  const auto items = split_list(s);
  Vector x(static_cast<Index>(items.size()));
  for (std::size_t i = 0; i < items.size(); ++i) {
    try {
      std::size_t used = 0;
      x[static_cast<Index>(i)] = std::stod(items[i], &used);
      if (used != items[i].size()) throw std::invalid_argument(items[i]);
    } catch (const std::exception&) {
      throw CLI::ValidationError("--x", "not a number: '" + items[i] + "'");
    }
  }
  return x;
}

ExperimentConfig config_or_default(const std::string& path) {
  return path.empty() ? ExperimentConfig::desk_scale() : load_experiment_config(path);
}

std::string history_csv(const FitResult& model) {
  std::ostringstream out;
  out << "epoch,objective_estimate,validation_mse\n";
  for (const auto& h : model.history)
    out << h.epoch << ',' << format_real(h.objective_estimate) << ',' << format_real(h.validation_mse) << '\n';
  return out.str();
}

std::string bands_header(const char* what) {
  return std::string("n,median_") + what + ",q25_" + what + ",q75_" + what + ",units";
}

void write_bands(std::ostream& out, const BandRow& r) {
  out << r.n << ',' << format_real(r.median) << ',' << format_real(r.q25) << ',' << format_real(r.q75) << ','
      << r.units;
}

UnitDataset find_unit(const MultiUnitDataset& data, const std::string& id) {
  const auto pos = data.find(id);
  if (pos < 0) throw std::invalid_argument("unit '" + id + "' not found in data");
  return data.units[static_cast<std::size_t>(pos)];
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-unit soft sensing: pretraining, few-shot calibration and experiments"};
  app.require_subcommand(1);

  std::string data_path, out_path, config_path, model_path, history_path, summary_path, unit_id, calibrated_path,
      x_text, units_text;
  std::uint64_t seed = 0;
  std::size_t units = 32, points = 0;
  double points_mean = 200.0;
  bool no_split = false;

  auto* generate = app.add_subcommand("generate", "Write a synthetic multi-unit dataset");
  generate->add_option("--seed", seed, "Master seed");
  generate->add_option("--units", units, "Number of units");
  generate->add_option("--points-mean", points_mean, "Mean observations per unit");
  generate->add_option("--config", config_path, "Config JSON (generator and split sections)");
  generate->add_flag("--no-split", no_split, "Leave every observation unassigned");
  generate->add_option("--out", out_path, "Output CSV")->required();

  auto* pretrain_cmd = app.add_subcommand("pretrain", "Fit a base model on the train split");
  pretrain_cmd->add_option("--data", data_path, "Dataset CSV")->required();
  pretrain_cmd->add_option("--config", config_path, "Config JSON");
  pretrain_cmd->add_option("--units", units_text, "Comma-separated unit ids to train on (default: all)");
  pretrain_cmd->add_option("--history", history_path, "Per-epoch history CSV");
  pretrain_cmd->add_option("--out", out_path, "Checkpoint JSON")->required();

  auto* calibrate_cmd = app.add_subcommand("calibrate", "Calibrate the context of a new unit");
  calibrate_cmd->add_option("--model", model_path, "Checkpoint JSON")->required();
  calibrate_cmd->add_option("--data", data_path, "Dataset CSV holding the unit")->required();
  calibrate_cmd->add_option("--unit", unit_id, "Unit id")->required();
  calibrate_cmd->add_option("--points", points, "Use the first N points of the sequential protocol (default: all)");
  calibrate_cmd->add_option("--config", config_path, "Config JSON (calibration section)");
  calibrate_cmd->add_option("--out", out_path, "Calibrated unit JSON")->required();

  auto* predict_cmd = app.add_subcommand("predict", "Predict mean and standard deviation for one input");
  predict_cmd->add_option("--model", model_path, "Checkpoint JSON")->required();
  auto* unit_opt = predict_cmd->add_option("--unit", unit_id, "Base unit id");
  predict_cmd->add_option("--calibrated", calibrated_path, "Calibrated unit JSON")->excludes(unit_opt);
  predict_cmd->add_option("--x", x_text, "Comma-separated input features")->required();

  auto* scaling_cmd = app.add_subcommand("scaling", "Test error as a function of the number of units");
  scaling_cmd->add_option("--data", data_path, "Dataset CSV")->required();
  scaling_cmd->add_option("--config", config_path, "Config JSON");
  scaling_cmd->add_option("--out", out_path, "Per-run rows CSV")->required();
  scaling_cmd->add_option("--summary", summary_path, "Per-M curve CSV");

  auto* fewshot_cmd = app.add_subcommand("fewshot", "Few-shot calibration of held-out units");
  fewshot_cmd->add_option("--data", data_path, "Dataset CSV")->required();
  fewshot_cmd->add_option("--config", config_path, "Config JSON");
  fewshot_cmd->add_option("--out", out_path, "Per-unit records CSV")->required();
  fewshot_cmd->add_option("--summary", summary_path, "Median and quartile bands CSV");

  auto* infogain_cmd = app.add_subcommand("infogain", "Information gain of held-out units");
  infogain_cmd->add_option("--model", model_path, "Checkpoint JSON")->required();
  infogain_cmd->add_option("--data", data_path, "Dataset CSV")->required();
  infogain_cmd->add_option("--units", units_text, "Comma-separated holdout ids (default: units not in the model)");
  infogain_cmd->add_option("--config", config_path, "Config JSON");
  infogain_cmd->add_option("--out", out_path, "Per-unit curves CSV")->required();
  infogain_cmd->add_option("--summary", summary_path, "Median and quartile bands CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kUsage, "usage", e.what());
  }

  try {
    if (generate->parsed()) {
      ExperimentConfig cfg = config_or_default(config_path);
      if (generate->count("--seed")) cfg.generator.seed = seed;
      if (generate->count("--units")) cfg.generator.n_units = units;
      if (generate->count("--points-mean")) cfg.generator.points_mean = points_mean;
      MultiUnitDataset data = muss::generate(cfg.generator);
      if (!no_split)
        assign_chunked_split(data, cfg.split.fractions, cfg.split.chunk_days,
                             derive_seed(cfg.generator.seed ^ cfg.split.seed, 0x5917));
      save_dataset_csv(out_path, data);
    } else if (pretrain_cmd->parsed()) {
      const ExperimentConfig cfg = config_or_default(config_path);
      MultiUnitDataset data = load_dataset_csv(data_path);
      if (!units_text.empty()) {
        std::vector<std::size_t> idx;
        for (const auto& id : split_list(units_text)) {
          const auto pos = data.find(id);
          if (pos < 0) throw std::invalid_argument("unit '" + id + "' not found in data");
          idx.push_back(static_cast<std::size_t>(pos));
        }
        data = select_units(data, idx);
      }
      const FitResult model = pretrain(data, cfg.network, cfg.priors, cfg.train);
      save_checkpoint(out_path, model);
      if (!history_path.empty()) write_text_file(history_path, history_csv(model));
    } else if (calibrate_cmd->parsed()) {
      const ExperimentConfig cfg = config_or_default(config_path);
      const FitResult base = load_checkpoint(model_path);
      const UnitDataset unit = find_unit(load_dataset_csv(data_path), unit_id);
      UnitDataset train = unit;
      if (calibrate_cmd->count("--points")) {
        const auto seq = sequential_fewshot_sequence(unit, points);
        train = fewshot_training_set(unit, seq, std::min(points, seq.size()));
      }
      const CalibratedUnit cal = calibrate(base, train, cfg.calibration);
      write_text_file(out_path, calibrated_unit_to_json({unit_id, cal}));
    } else if (predict_cmd->parsed()) {
      const Vector x = parse_x(x_text);
      const FitResult base = load_checkpoint(model_path);
      if (x.size() != base.net.input_dim)
        throw DimensionError("--x has " + std::to_string(x.size()) + " values, model expects " +
                             std::to_string(base.net.input_dim));
      CalibratedUnit unit = init_new_unit(base);
      std::string label = "new";
      if (!unit_id.empty()) {
        Index pos = -1;
        for (std::size_t i = 0; i < base.unit_ids.size(); ++i)
          if (base.unit_ids[i] == unit_id) pos = static_cast<Index>(i);
        if (pos < 0) throw std::invalid_argument("unit '" + unit_id + "' is not part of the model");
        unit = base_unit(base, pos);
        label = unit_id;
      } else if (!calibrated_path.empty()) {
        const auto named = calibrated_unit_from_json(read_text_file(calibrated_path));
        unit = named.unit;
        label = named.unit_id;
      }
      const Prediction p = predict(base, unit, x);
      std::cout << "unit,mean,std\n" << label << ',' << format_real(p.mean) << ',' << format_real(p.std) << '\n';
    } else if (scaling_cmd->parsed()) {
      const ExperimentConfig cfg = config_or_default(config_path);
      const MultiUnitDataset data = load_dataset_csv(data_path);
      const ScalingResult res = run_scaling(data, cfg.scaling, cfg.network, cfg.priors, cfg.train);
      std::ostringstream rows;
      rows << "m,run_id,mean_test_mse,units_evaluated\n";
      for (const auto& r : res.rows)
        rows << r.m << ',' << r.run_id << ',' << format_real(r.mean_test_mse) << ',' << r.units_evaluated << '\n';
      write_text_file(out_path, rows.str());
      if (!summary_path.empty()) {
        std::ostringstream curve;
        curve << "m,mean_test_mse,fitted_mse\n";
        for (std::size_t i = 0; i < res.m_values.size(); ++i)
          curve << res.m_values[i] << ',' << format_real(res.mean_test_mse[i]) << ','
                << format_real(res.fit(static_cast<double>(res.m_values[i]))) << '\n';
        write_text_file(summary_path, curve.str());
      }
      std::cout << "a=" << format_real(res.fit.a) << " b=" << format_real(res.fit.b)
                << " r_squared=" << format_real(res.fit.r_squared) << '\n';
    } else if (fewshot_cmd->parsed()) {
      const ExperimentConfig cfg = config_or_default(config_path);
      const MultiUnitDataset data = load_dataset_csv(data_path);
      const FewShotResult res = run_fewshot(data, cfg.fewshot, cfg.network, cfg.priors, cfg.train, cfg.calibration);
      std::ostringstream rec;
      rec << "unit_id,run,n,mape,info_nats,info_bits,test_points,posterior_failed\n";
      for (const auto& r : res.records)
        rec << r.unit_id << ',' << r.run << ',' << r.n << ',' << format_real(r.mape) << ','
            << format_real(r.info_nats) << ',' << format_real(r.info_bits) << ',' << r.test_points << ','
            << int(r.posterior_failed) << '\n';
      write_text_file(out_path, rec.str());
      if (!summary_path.empty()) {
        std::ostringstream sum;
        sum << bands_header("mape") << ",median_info_nats,q25_info_nats,q75_info_nats,info_failed\n";
        for (std::size_t i = 0; i < res.mape_summary.size(); ++i) {
          write_bands(sum, res.mape_summary[i]);
          const auto& g = res.info_summary[i];
          sum << ',' << format_real(g.median) << ',' << format_real(g.q25) << ',' << format_real(g.q75) << ','
              << g.failed << '\n';
        }
        write_text_file(summary_path, sum.str());
      }
      std::cout << "runs=" << res.runs << " base_reference_mape=" << format_real(res.base_reference_mape)
                << " skipped=" << res.skipped_units.size() << '\n';
    } else if (infogain_cmd->parsed()) {
      const ExperimentConfig cfg = config_or_default(config_path);
      const FitResult base = load_checkpoint(model_path);
      const MultiUnitDataset data = load_dataset_csv(data_path);
      std::vector<std::size_t> idx;
      if (!units_text.empty()) {
        for (const auto& id : split_list(units_text)) {
          const auto pos = data.find(id);
          if (pos < 0) throw std::invalid_argument("unit '" + id + "' not found in data");
          idx.push_back(static_cast<std::size_t>(pos));
        }
      } else {
        const std::set<std::string> in_model(base.unit_ids.begin(), base.unit_ids.end());
        for (std::size_t i = 0; i < data.unit_count(); ++i)
          if (!in_model.count(data.units[i].unit_id)) idx.push_back(i);
      }
      const InfoGainResult res = run_infogain(base, select_units(data, idx), cfg.fewshot.n_max, cfg.calibration);
      std::ostringstream curves;
      curves << "unit_id,n,nats,bits,posterior_failed\n";
      for (const auto& c : res.curves)
        for (const auto& p : c.points)
          curves << c.unit_id << ',' << p.n << ',' << format_real(p.gain.nats) << ',' << format_real(p.gain.bits)
                 << ',' << int(p.posterior_failed) << '\n';
      write_text_file(out_path, curves.str());
      if (!summary_path.empty()) {
        std::ostringstream sum;
        sum << bands_header("nats") << ",failed\n";
        for (const auto& r : res.summary) {
          write_bands(sum, r);
          sum << ',' << r.failed << '\n';
        }
        write_text_file(summary_path, sum.str());
      }
    }
  } catch (const ConfigError& e) {
    return fail(kConfig, "config", e.what());
  } catch (const FileError& e) {
    return fail(kFile, "file", e.what());
  } catch (const CLI::ParseError& e) {
    return fail(kUsage, "usage", e.what());
  } catch (const std::exception& e) {
    return fail(kRuntime, "runtime", e.what());
  }
  return kOk;
}
