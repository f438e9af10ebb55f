#pragma once

// JSON checkpoints of trained models and calibrated units. Reals are written
// with 17 significant digits so load → save reproduces the file byte for byte.

#include "muss/calib.hpp"
#include "muss/train.hpp"

#include <string>

namespace muss {

inline constexpr int kCheckpointVersion = 1;

std::string checkpoint_to_json(const FitResult& model);
/// The loaded model carries no training history.
FitResult checkpoint_from_json(const std::string& text);

void save_checkpoint(const std::string& path, const FitResult& model);
FitResult load_checkpoint(const std::string& path);

struct NamedCalibratedUnit {
  std::string unit_id;
  CalibratedUnit unit;
};

std::string calibrated_unit_to_json(const NamedCalibratedUnit& unit);
NamedCalibratedUnit calibrated_unit_from_json(const std::string& text);

/// Whole-file helpers shared by the CLI.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace muss
