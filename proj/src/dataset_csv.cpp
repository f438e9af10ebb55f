#include "muss/dataset_csv.hpp"

#include "muss/errors.hpp"
#include "muss/synth.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <vector>

namespace muss {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_real(const std::string& s, std::size_t line) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE)
    throw FileError("line " + std::to_string(line) + ": malformed number '" + s + "'");
  return v;
}

}  // namespace

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_dataset_csv(std::ostream& out, const MultiUnitDataset& data) {
  out << kDatasetHeader << '\n';
  for (const auto& unit : data.units)
    for (const auto& o : unit.observations) {
      if (o.x.size() != kProcessInputDim) throw DimensionError("dataset CSV requires 7 process features");
      out << unit.unit_id << ',' << o.timestamp;
      for (Index k = 0; k < o.x.size(); ++k) out << ',' << format_real(o.x(k));
      out << ',' << format_real(o.y) << ',' << to_string(o.split) << '\n';
    }
}

MultiUnitDataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FileError("dataset file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kDatasetHeader) throw FileError("unexpected dataset header '" + line + "'");

  MultiUnitDataset data;
  std::unordered_map<std::string, std::size_t> index;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 11) throw FileError("line " + std::to_string(lineno) + ": expected 11 fields");
    Observation o;
    try {
      std::size_t used = 0;
      o.timestamp = std::stoll(f[1], &used);
      if (used != f[1].size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw FileError("line " + std::to_string(lineno) + ": malformed timestamp '" + f[1] + "'");
    }
    o.x.resize(kProcessInputDim);
    for (Index k = 0; k < kProcessInputDim; ++k) o.x(k) = parse_real(f[static_cast<std::size_t>(k) + 2], lineno);
    o.y = parse_real(f[9], lineno);
    try {
      o.split = split_from_string(f[10]);
    } catch (const std::invalid_argument& e) {
      throw FileError("line " + std::to_string(lineno) + ": " + e.what());
    }
    auto [it, inserted] = index.try_emplace(f[0], data.units.size());
    if (inserted) data.units.push_back({f[0], {}});
    data.units[it->second].observations.push_back(std::move(o));
  }
  for (auto& u : data.units)
    std::stable_sort(u.observations.begin(), u.observations.end(),
                     [](const Observation& a, const Observation& b) { return a.timestamp < b.timestamp; });
  data.validate();
  return data;
}

void save_dataset_csv(const std::string& path, const MultiUnitDataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot open '" + path + "' for writing");
  write_dataset_csv(out, data);
  if (!out) throw FileError("failed writing '" + path + "'");
}

MultiUnitDataset load_dataset_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open '" + path + "'");
  return read_dataset_csv(in);
}

}  // namespace muss
