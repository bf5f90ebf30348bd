#include "nnpc/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "nnpc/errors.hpp"

namespace nnpc {

namespace {

constexpr const char* kModelFormat = "nnpc-identifier";
constexpr int kModelVersion = 1;

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(fmt::format("cannot parse {} from '{}'", what, s));
  }
}

}  // namespace

std::string format_sig(double value, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, value);
  return buf;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + tmp.string() + "' for writing");
    out << contents;
    out.flush();
    if (!out) throw DataError("failed writing '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trajectory_csv(const Trajectory& traj) {
  std::string out = "t,i_l,v_c,duty,dcm_flag\n";
  out.reserve(traj.records.size() * 64);
  for (const TrajectoryRecord& r : traj.records) {
    out += fmt::format("{},{},{},{},{}\n", format_sig(r.t, 9), format_sig(r.state.i_l, 9),
                       format_sig(r.state.v_c, 9), format_sig(r.duty.value(), 9),
                       r.dcm ? 1 : 0);
  }
  return out;
}

std::string dataset_csv(const RawDataset& raw) {
  std::string starts;
  for (std::size_t i = 0; i < raw.episode_starts.size(); ++i) {
    if (i > 0) starts += ',';
    starts += std::to_string(raw.episode_starts[i]);
  }
  std::string out = fmt::format("# sample_period={} seed={} episode_starts={}\nk,i_l,v_c,d\n",
                                format_sig(raw.sample_period, 17), raw.seed, starts);
  out.reserve(raw.rows.size() * 72);
  for (std::size_t k = 0; k < raw.rows.size(); ++k) {
    const DatasetRow& r = raw.rows[k];
    out += fmt::format("{},{},{},{}\n", k, format_sig(r.i_l, 17), format_sig(r.v_c, 17),
                       format_sig(r.d, 17));
  }
  return out;
}

RawDataset parse_dataset_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  RawDataset raw;
  raw.episode_starts.clear();
  bool have_period = false;

  if (!std::getline(in, line) || line.rfind("#", 0) != 0) {
    throw DataError("dataset CSV must start with a '# sample_period=... seed=...' comment line");
  }
  std::istringstream meta(line.substr(1));
  std::string token;
  while (meta >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = token.substr(0, eq);
    const std::string value = token.substr(eq + 1);
    if (key == "sample_period") {
      raw.sample_period = parse_double(value, "sample_period");
      have_period = true;
    } else if (key == "seed") {
      raw.seed = std::stoull(value);
    } else if (key == "episode_starts") {
      for (const std::string& s : split(value, ',')) raw.episode_starts.push_back(std::stoull(s));
    }
  }
  if (!have_period) throw DataError("dataset CSV header lacks sample_period");
  if (raw.episode_starts.empty()) raw.episode_starts.push_back(0);

  if (!std::getline(in, line) || line != "k,i_l,v_c,d") {
    throw DataError("dataset CSV column header must be 'k,i_l,v_c,d'");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cols = split(line, ',');
    if (cols.size() != 4) throw DataError("dataset CSV row has wrong column count: " + line);
    if (std::stoull(cols[0]) != raw.rows.size()) {
      throw DataError("dataset CSV rows are not consecutive at k=" + cols[0]);
    }
    raw.rows.push_back({parse_double(cols[1], "i_l"), parse_double(cols[2], "v_c"),
                        parse_double(cols[3], "d")});
  }
  return raw;
}

nlohmann::json to_json(const Network& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const Layer& l : net.layers) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weights.size()));
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.push_back(l.weights(r, c));
    }
    layers.push_back({{"in", l.in_dim()},
                      {"out", l.out_dim()},
                      {"activation", activation_name(l.activation)},
                      {"weights", w},
                      {"biases", std::vector<double>(l.biases.begin(), l.biases.end())}});
  }
  return {{"layers", layers}};
}

Network network_from_json(const nlohmann::json& j) {
  Network net;
  try {
    for (const auto& jl : j.at("layers")) {
      const auto in = jl.at("in").get<Eigen::Index>();
      const auto out = jl.at("out").get<Eigen::Index>();
      const auto w = jl.at("weights").get<std::vector<double>>();
      const auto b = jl.at("biases").get<std::vector<double>>();
      if (in < 1 || out < 1 || static_cast<Eigen::Index>(w.size()) != in * out ||
          static_cast<Eigen::Index>(b.size()) != out) {
        throw DimensionError("model layer arrays do not match declared dimensions");
      }
      Layer l;
      l.activation = activation_from_name(jl.at("activation").get<std::string>());
      l.weights.resize(out, in);
      for (Eigen::Index r = 0; r < out; ++r) {
        for (Eigen::Index c = 0; c < in; ++c) l.weights(r, c) = w[static_cast<std::size_t>(r * in + c)];
      }
      l.biases = Eigen::Map<const Eigen::VectorXd>(b.data(), out);
      net.layers.push_back(std::move(l));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model JSON: ") + e.what());
  }
  validate(net);
  return net;
}

nlohmann::json to_json(const NormStats& s) {
  return {{"input_mean", s.input_mean},
          {"input_scale", s.input_scale},
          {"target_mean", s.target_mean},
          {"target_scale", s.target_scale}};
}

NormStats norm_stats_from_json(const nlohmann::json& j) {
  NormStats s;
  try {
    s.input_mean = j.at("input_mean").get<std::array<double, 3>>();
    s.input_scale = j.at("input_scale").get<std::array<double, 3>>();
    s.target_mean = j.at("target_mean").get<std::array<double, 2>>();
    s.target_scale = j.at("target_scale").get<std::array<double, 2>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed norm_stats: ") + e.what());
  }
  for (double v : s.input_scale) {
    if (!(v > 0.0)) throw DataError("norm_stats scales must be > 0");
  }
  for (double v : s.target_scale) {
    if (!(v > 0.0)) throw DataError("norm_stats scales must be > 0");
  }
  return s;
}

std::string bundle_to_string(const IdentifierBundle& bundle) {
  nlohmann::json j = to_json(bundle.net);
  j["format"] = kModelFormat;
  j["version"] = kModelVersion;
  j["sample_period"] = bundle.sample_period;
  j["norm_stats"] = to_json(bundle.stats);
  return j.dump(2) + "\n";
}

IdentifierBundle bundle_from_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model bundle is not valid JSON: ") + e.what());
  }
  if (j.value("format", std::string{}) != kModelFormat) {
    throw DataError("not an identifier bundle (missing format tag)");
  }
  IdentifierBundle b;
  b.net = network_from_json(j);
  b.stats = norm_stats_from_json(j.at("norm_stats"));
  b.sample_period = j.at("sample_period").get<double>();
  return b;
}

void save_bundle(const std::filesystem::path& path, const IdentifierBundle& bundle) {
  write_file_atomic(path, bundle_to_string(bundle));
}

IdentifierBundle load_bundle(const std::filesystem::path& path) {
  return bundle_from_string(read_file(path));
}

void save_dataset(const std::filesystem::path& path, const RawDataset& raw) {
  write_file_atomic(path, dataset_csv(raw));
}

RawDataset load_dataset(const std::filesystem::path& path) {
  return parse_dataset_csv(read_file(path));
}

}  // namespace nnpc
