#pragma once

// Dataset file format:
//   unit_id,timestamp,u,p_wh,p_dc,t_wh,eta_oil,eta_gas,q_gl,q_tot,split
// one row per observation, reals written with 17 significant digits.

#include "muss/core.hpp"

#include <iosfwd>
#include <string>

namespace muss {

inline constexpr const char* kDatasetHeader = "unit_id,timestamp,u,p_wh,p_dc,t_wh,eta_oil,eta_gas,q_gl,q_tot,split";

/// %.17g, enough digits to round-trip any double.
std::string format_real(double v);

void write_dataset_csv(std::ostream& out, const MultiUnitDataset& data);
MultiUnitDataset read_dataset_csv(std::istream& in);

void save_dataset_csv(const std::string& path, const MultiUnitDataset& data);
MultiUnitDataset load_dataset_csv(const std::string& path);

}  // namespace muss
