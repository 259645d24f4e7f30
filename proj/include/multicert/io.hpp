#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "multicert/classification.hpp"
#include "multicert/segmentation.hpp"

namespace multicert {
namespace io {

using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

enum class Task { kClassification, kSegmentation };
enum class Engine { kMulticert, kAblation };

inline const char* to_string(Task t) {
  return t == Task::kClassification ? "classification" : "segmentation";
}
inline const char* to_string(Engine e) {
  return e == Engine::kMulticert ? "multicert" : "ablation";
}
inline Task task_from_string(const std::string& s) {
  if (s == "classification") return Task::kClassification;
  if (s == "segmentation") return Task::kSegmentation;
  throw ConfigError("unknown task: " + s);
}
inline Engine engine_from_string(const std::string& s) {
  if (s == "multicert") return Engine::kMulticert;
  if (s == "ablation" || s == "baseline") return Engine::kAblation;
  throw ConfigError("unknown engine: " + s);
}

// Synthetic-task knobs, consumed only by the simulate pipeline.
struct SynthSection {
  long num_samples = 20;
  double separation = 0.8;     // classification: extra mass on the true label
  double base_accuracy = 0.9;  // segmentation: per-element own-bit accuracy
  double mark_rate = 0.3;
};

struct RunConfig {
  Task task = Task::kClassification;
  Engine engine = Engine::kMulticert;
  std::vector<ModalitySpec> modalities;
  int num_classes = 2;
  double alpha = 0.001;
  long mc_samples = 100;  // N: Monte Carlo evaluations behind each vote row
  EvalMode mode = EvalMode::kExact;
  RayDirection direction{1, 1};
  long r_max = 0;
  std::uint64_t seed = 0;
  long ablation_k = 0;  // pooled subsample size, ablation engine only
  SynthSection synth;

  void validate() const {
    if (modalities.empty()) throw ConfigError("config needs >= 1 modality");
    for (const auto& m : modalities) m.validate();
    if (!(alpha > 0.0 && alpha < 1.0))
      throw ConfigError("alpha must lie in (0,1)");
    if (mc_samples < 1) throw ConfigError("N must be >= 1");
    if (num_classes < 2) throw ConfigError("need at least two classes");
    if (r_max < 0) throw ConfigError("r_max must be >= 0");
    if (direction.num < 0 || direction.den <= 0)
      throw ConfigError("direction must be a nonnegative rational");
    if (engine == Engine::kAblation) {
      long total = 0;
      for (const auto& m : modalities) total += m.n;
      if (ablation_k < 1 || ablation_k > total)
        throw ConfigError("ablation_k must lie in [1, sum of n_i]");
    }
    if (!(synth.separation >= 0.0 && synth.separation <= 1.0) ||
        !(synth.base_accuracy >= 0.0 && synth.base_accuracy <= 1.0) ||
        !(synth.mark_rate >= 0.0 && synth.mark_rate <= 1.0))
      throw ConfigError("synthetic rates must lie in [0,1]");
    if (synth.num_samples < 1)
      throw ConfigError("synthetic sample count must be >= 1");
  }
};

namespace detail_io {

inline const json& field(const json& j, const char* name) {
  const auto it = j.find(name);
  if (it == j.end())
    throw ConfigError(std::string("config: missing field '") + name + "'");
  return *it;
}

template <typename T>
T get_as(const json& j, const char* name) {
  try {
    return field(j, name).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad field '") + name +
                      "': " + e.what());
  }
}

template <typename T>
T get_or(const json& j, const char* name, T fallback) {
  if (j.find(name) == j.end()) return fallback;
  return get_as<T>(j, name);
}

}  // namespace detail_io

// Ray directions may be written as an exact "num/den" string or as a
// number; numbers convert through their exact binary value.
inline RayDirection parse_direction(const json& v) {
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    const auto slash = s.find('/');
    try {
      if (slash == std::string::npos)
        return RayDirection{std::stol(s), 1};
      return RayDirection{std::stol(s.substr(0, slash)),
                          std::stol(s.substr(slash + 1))};
    } catch (const std::exception&) {
      throw ConfigError("direction: cannot parse '" + s + "' as num/den");
    }
  }
  if (v.is_number_integer()) return RayDirection{v.get<long>(), 1};
  if (v.is_number_float()) {
    const Ratio exact = exact_ratio(v.get<double>());
    const BigNat num(exact.get_num());
    const BigNat den(exact.get_den());
    if (!num.fits_slong_p() || !den.fits_slong_p())
      throw ConfigError(
          "direction: value has no compact exact form; use \"num/den\"");
    return RayDirection{mpz_get_si(num.get_mpz_t()),
                        mpz_get_si(den.get_mpz_t())};
  }
  throw ConfigError("direction must be a number or a \"num/den\" string");
}

inline RunConfig parse_config(const json& j) {
  using detail_io::get_as;
  using detail_io::get_or;
  if (!j.is_object()) throw ConfigError("config root must be an object");
  RunConfig cfg;
  cfg.task = task_from_string(get_or<std::string>(j, "task", "classification"));
  cfg.engine = engine_from_string(get_or<std::string>(j, "engine", "multicert"));
  const auto& mods = detail_io::field(j, "modalities");
  if (!mods.is_array() || mods.empty())
    throw ConfigError("config: 'modalities' must be a non-empty array");
  for (const auto& m : mods) {
    ModalitySpec spec;
    spec.name = get_or<std::string>(m, "name",
                                    "m" + std::to_string(cfg.modalities.size()));
    spec.n = get_as<long>(m, "n");
    spec.k = get_as<long>(m, "k");
    spec.attack = attack_from_string(get_or<std::string>(m, "attack",
                                                         "modification"));
    cfg.modalities.push_back(std::move(spec));
  }
  cfg.num_classes = get_or<int>(j, "num_classes", 2);
  cfg.alpha = get_or<double>(j, "alpha", 0.001);
  cfg.mc_samples = get_or<long>(j, "N", 100);
  cfg.mode = eval_mode_from_string(get_or<std::string>(j, "mode", "exact"));
  if (j.find("direction") != j.end())
    cfg.direction = parse_direction(j.at("direction"));
  cfg.r_max = get_or<long>(j, "r_max", 0);
  cfg.seed = get_or<std::uint64_t>(j, "seed", 0);
  cfg.ablation_k = get_or<long>(j, "ablation_k", 0);
  if (j.find("synth") != j.end()) {
    const auto& s = j.at("synth");
    cfg.synth.num_samples = get_or<long>(s, "num_samples", 20);
    cfg.synth.separation = get_or<double>(s, "separation", 0.8);
    cfg.synth.base_accuracy = get_or<double>(s, "base_accuracy", 0.9);
    cfg.synth.mark_rate = get_or<double>(s, "mark_rate", 0.3);
  }
  cfg.validate();
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse failure in " + path + ": " + e.what());
  }
  return parse_config(j);
}

// Canonical re-serialization for reproducibility hashing: fixed field set,
// sorted keys, direction in exact form. Worker count is deliberately not
// part of the identity.
inline json config_json(const RunConfig& cfg) {
  json j;
  j["task"] = to_string(cfg.task);
  j["engine"] = to_string(cfg.engine);
  json mods = json::array();
  for (const auto& m : cfg.modalities) {
    mods.push_back({{"name", m.name},
                    {"n", m.n},
                    {"k", m.k},
                    {"attack", to_string(m.attack)}});
  }
  j["modalities"] = mods;
  j["num_classes"] = cfg.num_classes;
  j["alpha"] = cfg.alpha;
  j["N"] = cfg.mc_samples;
  j["mode"] = to_string(cfg.mode);
  j["direction"] = std::to_string(cfg.direction.num) + "/" +
                   std::to_string(cfg.direction.den);
  j["r_max"] = cfg.r_max;
  j["seed"] = cfg.seed;
  j["ablation_k"] = cfg.ablation_k;
  j["synth"] = {{"num_samples", cfg.synth.num_samples},
                {"separation", cfg.synth.separation},
                {"base_accuracy", cfg.synth.base_accuracy},
                {"mark_rate", cfg.synth.mark_rate}};
  return j;
}

inline std::string canonical_config(const RunConfig& cfg) {
  return config_json(cfg).dump();
}

inline std::uint64_t config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325UL;
  for (const char c : canonical_config(cfg)) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3UL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------------------
// Vote ingestion. Files are JSON lines; blank lines are allowed.

struct ClassificationRow {
  std::string sample_id;
  std::optional<int> ground_truth;
  VoteCounts votes;
};

namespace detail_io {

inline json parse_line(const std::string& line, long line_no) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw DataError("votes line " + std::to_string(line_no) + ": " + e.what());
  }
}

inline std::map<int, long> counts_of(const json& obj, long line_no) {
  if (!obj.is_object())
    throw DataError("votes line " + std::to_string(line_no) +
                    ": 'counts' must be an object");
  std::map<int, long> out;
  for (const auto& [key, value] : obj.items()) {
    int label = 0;
    try {
      label = std::stoi(key);
    } catch (const std::exception&) {
      throw DataError("votes line " + std::to_string(line_no) +
                      ": count key '" + key + "' is not a label");
    }
    if (!value.is_number_integer())
      throw DataError("votes line " + std::to_string(line_no) +
                      ": count for label " + key + " must be an integer");
    out[label] = value.get<long>();
  }
  return out;
}

template <typename Fn>
void each_line(std::istream& in, Fn&& handle) {
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    handle(parse_line(line, line_no), line_no);
  }
}

}  // namespace detail_io

inline std::vector<ClassificationRow> read_classification_votes(
    std::istream& in, int num_classes) {
  std::vector<ClassificationRow> rows;
  detail_io::each_line(in, [&](const json& j, long line_no) {
    ClassificationRow row;
    if (j.find("sample_id") == j.end())
      throw DataError("votes line " + std::to_string(line_no) +
                      ": missing 'sample_id'");
    row.sample_id = j.at("sample_id").is_string()
                        ? j.at("sample_id").get<std::string>()
                        : j.at("sample_id").dump();
    if (j.find("gt") != j.end()) row.ground_truth = j.at("gt").get<int>();
    if (j.find("N") == j.end() || j.find("counts") == j.end())
      throw DataError("votes line " + std::to_string(line_no) +
                      ": need 'N' and 'counts'");
    row.votes.total = j.at("N").get<long>();
    row.votes.num_classes = num_classes;
    row.votes.counts = detail_io::counts_of(j.at("counts"), line_no);
    try {
      row.votes.validate();
    } catch (const DataError& e) {
      throw DataError("votes line " + std::to_string(line_no) + ": " +
                      e.what());
    }
    rows.push_back(std::move(row));
  });
  return rows;
}

// Segmentation rows come in a full-histogram form {"idx","gt","N","counts"}
// or the compact form {"idx","gt","top":[[label,count],[label,count]]}
// keeping only the two leading labels; the certification consumes nothing
// beyond those two counts. Compact rows default N to the configured value.
inline std::vector<ElementVotes> read_segmentation_votes(std::istream& in,
                                                         int num_classes,
                                                         long default_n) {
  std::vector<ElementVotes> rows;
  detail_io::each_line(in, [&](const json& j, long line_no) {
    ElementVotes row;
    if (j.find("idx") == j.end())
      throw DataError("votes line " + std::to_string(line_no) +
                      ": missing 'idx'");
    row.index = j.at("idx").get<long>();
    if (j.find("gt") != j.end()) row.ground_truth = j.at("gt").get<int>();
    row.votes.num_classes = num_classes;
    if (j.find("counts") != j.end()) {
      if (j.find("N") == j.end())
        throw DataError("votes line " + std::to_string(line_no) +
                        ": full rows need 'N'");
      row.votes.total = j.at("N").get<long>();
      row.votes.counts = detail_io::counts_of(j.at("counts"), line_no);
    } else if (j.find("top") != j.end()) {
      const auto& top = j.at("top");
      if (!top.is_array() || top.empty() || top.size() > 2)
        throw DataError("votes line " + std::to_string(line_no) +
                        ": 'top' must hold one or two [label,count] pairs");
      row.votes.total = detail_io::get_or<long>(j, "N", default_n);
      row.votes.partial = true;
      long previous = -1;
      for (const auto& pair : top) {
        if (!pair.is_array() || pair.size() != 2)
          throw DataError("votes line " + std::to_string(line_no) +
                          ": 'top' entries must be [label,count]");
        const int label = pair.at(0).get<int>();
        const long count = pair.at(1).get<long>();
        if (previous >= 0 && count > previous)
          throw DataError("votes line " + std::to_string(line_no) +
                          ": 'top' pairs must be ordered by count");
        row.votes.counts[label] = count;
        previous = count;
      }
    } else {
      throw DataError("votes line " + std::to_string(line_no) +
                      ": need 'counts' or 'top'");
    }
    try {
      row.votes.validate();
    } catch (const DataError& e) {
      throw DataError("votes line " + std::to_string(line_no) + ": " +
                      e.what());
    }
    rows.push_back(std::move(row));
  });
  return rows;
}

// ---------------------------------------------------------------------------
// Emission. Probabilities always go through the same 12-significant-digit
// formatting so outputs stay byte-stable.

inline std::string format_prob(double p) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", p);
  return buf;
}

inline json prob_json(double p) { return json::parse(format_prob(p)); }

struct CurvePoint {
  long r1 = 0;
  long r2 = 0;
  std::string metric;
  double value = 0.0;
};

inline void write_curves_csv(std::ostream& out,
                             std::span<const CurvePoint> points) {
  out << "r_1,r_2,metric,value\n";
  for (const auto& p : points)
    out << p.r1 << ',' << p.r2 << ',' << p.metric << ','
        << format_prob(p.value) << '\n';
}

// Sweep outputs swap the budget columns for the swept quantity.
struct SweepPoint {
  double axis = 0.0;
  std::string metric;
  double value = 0.0;
};

inline void write_sweep_csv(std::ostream& out, const std::string& axis_name,
                            std::span<const SweepPoint> points) {
  out << axis_name << ",metric,value\n";
  for (const auto& p : points)
    out << format_prob(p.axis) << ',' << p.metric << ','
        << format_prob(p.value) << '\n';
}

inline void write_jsonl(std::ostream& out, std::span<const json> rows) {
  for (const auto& row : rows) out << row.dump() << '\n';
}

inline json metadata_json(const RunConfig& cfg) {
  json j;
  j["config_hash"] = hex64(config_hash(cfg));
  j["version"] = kVersion;
  j["task"] = to_string(cfg.task);
  j["engine"] = to_string(cfg.engine);
  j["mode"] = to_string(cfg.mode);
  j["alpha"] = prob_json(cfg.alpha);
  j["N"] = cfg.mc_samples;
  j["seed"] = cfg.seed;
  return j;
}

// Comma-separated sweep lists from the command line.
inline std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("cannot parse '" + item + "' as a number");
    }
  }
  return out;
}

inline std::vector<long> parse_long_list(const std::string& s) {
  std::vector<long> out;
  for (const double v : parse_double_list(s)) {
    const long l = static_cast<long>(v);
    if (static_cast<double>(l) != v)
      throw ConfigError("expected integers in list, got " + format_prob(v));
    out.push_back(l);
  }
  return out;
}

}  // namespace io
}  // namespace multicert
