#include "muss/checkpoint.hpp"

#include "muss/dataset_csv.hpp"
#include "muss/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace muss {

namespace {

using nlohmann::json;

std::string real(double v) {
  if (!std::isfinite(v)) throw NumericalError("cannot serialize a non-finite value");
  return format_real(v);
}

std::string quoted(const std::string& s) { return json(s).dump(); }

template <typename Vec>
std::string real_array(const Vec& v) {
  std::string out = "[";
  for (Index i = 0; i < v.size(); ++i) {
    if (i > 0) out += ", ";
    out += real(v[i]);
  }
  return out + "]";
}

Vector vector_from(const json& arr, const char* what) {
  if (!arr.is_array()) throw ConfigError(std::string(what) + " must be an array");
  Vector v(static_cast<Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number()) throw ConfigError(std::string(what) + " must hold numbers");
    v[static_cast<Index>(i)] = arr[i].get<double>();
  }
  return v;
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace

std::string checkpoint_to_json(const FitResult& model) {
  const auto& p = model.params;
  if (static_cast<Index>(model.unit_ids.size()) != p.unit_count())
    throw DimensionError("checkpoint unit ids do not match the parameter count");
  std::ostringstream out;
  out << "{\n";
  out << "  \"format_version\": " << kCheckpointVersion << ",\n";
  out << "  \"network\": {\"input_dim\": " << model.net.input_dim << ", \"context_dim\": " << model.net.context_dim
      << ", \"hidden_width\": " << model.net.hidden_width << ", \"hidden_depth\": " << model.net.hidden_depth
      << "},\n";
  out << "  \"priors\": {\"theta_sigma\": " << real(model.priors.theta_sigma)
      << ", \"alpha\": " << real(model.priors.alpha) << ", \"beta\": " << real(model.priors.beta) << "},\n";
  out << "  \"training\": {\"seed\": " << model.seed << ", \"epochs\": " << model.epochs
      << ", \"selected_epoch\": " << model.selected_epoch << "},\n";
  out << "  \"theta\": " << real_array(p.theta) << ",\n";
  out << "  \"units\": [";
  for (Index i = 0; i < p.unit_count(); ++i) {
    out << (i == 0 ? "\n" : ",\n");
    out << "    {\"unit_id\": " << quoted(model.unit_ids[static_cast<std::size_t>(i)])
        << ", \"context\": " << real_array(Vector(p.contexts.col(i)))
        << ", \"raw_precision\": " << real(p.raw_precisions[i]) << "}";
  }
  out << (p.unit_count() > 0 ? "\n  ]\n" : "]\n");
  out << "}\n";
  return out.str();
}

FitResult checkpoint_from_json(const std::string& text) {
  const json j = parse(text);
  try {
    if (j.at("format_version").get<int>() != kCheckpointVersion)
      throw ConfigError("unsupported checkpoint format version");
    FitResult m;
    const auto& n = j.at("network");
    m.net = {n.at("input_dim").get<Index>(), n.at("context_dim").get<Index>(), n.at("hidden_width").get<Index>(),
             n.at("hidden_depth").get<Index>()};
    m.net.validate();
    const auto& pr = j.at("priors");
    m.priors = {pr.at("theta_sigma").get<double>(), pr.at("alpha").get<double>(), pr.at("beta").get<double>()};
    m.priors.validate();
    const auto& tr = j.at("training");
    m.seed = tr.at("seed").get<std::uint64_t>();
    m.epochs = tr.at("epochs").get<int>();
    m.selected_epoch = tr.at("selected_epoch").get<int>();
    m.params.theta = vector_from(j.at("theta"), "theta");
    if (m.params.theta.size() != m.net.parameter_count())
      throw DimensionError("checkpoint theta length does not match its network");
    const auto& units = j.at("units");
    const auto count = static_cast<Index>(units.size());
    m.params.contexts.resize(m.net.context_dim, count);
    m.params.raw_precisions.resize(count);
    for (Index i = 0; i < count; ++i) {
      const auto& u = units[static_cast<std::size_t>(i)];
      m.unit_ids.push_back(u.at("unit_id").get<std::string>());
      const Vector c = vector_from(u.at("context"), "context");
      if (c.size() != m.net.context_dim) throw DimensionError("checkpoint context has the wrong dimension");
      m.params.contexts.col(i) = c;
      m.params.raw_precisions[i] = u.at("raw_precision").get<double>();
    }
    return m;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const FitResult& model) { write_text_file(path, checkpoint_to_json(model)); }

FitResult load_checkpoint(const std::string& path) { return checkpoint_from_json(read_text_file(path)); }

std::string calibrated_unit_to_json(const NamedCalibratedUnit& u) {
  std::ostringstream out;
  out << "{\n  \"unit_id\": " << quoted(u.unit_id) << ",\n  \"context\": " << real_array(u.unit.context)
      << ",\n  \"precision\": " << real(u.unit.precision) << ",\n  \"n_points\": " << u.unit.n_points << "\n}\n";
  return out.str();
}

NamedCalibratedUnit calibrated_unit_from_json(const std::string& text) {
  const json j = parse(text);
  try {
    NamedCalibratedUnit u;
    u.unit_id = j.at("unit_id").get<std::string>();
    u.unit.context = vector_from(j.at("context"), "context");
    u.unit.precision = j.at("precision").get<double>();
    u.unit.n_points = j.at("n_points").get<std::size_t>();
    if (!(u.unit.precision > 0)) throw ConfigError("calibrated precision must be positive");
    return u;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid calibrated unit: ") + e.what());
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw FileError("failed writing '" + path + "'");
}

}  // namespace muss
