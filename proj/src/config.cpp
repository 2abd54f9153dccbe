#include "bitturbo/config.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

namespace bitturbo {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v, std::size_t line) {
  std::uint64_t out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'", line);
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v, std::size_t line) {
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'", line);
  return out;
}

Profile parse_profile(const std::string& v, std::size_t line) {
  if (v == "desk") return Profile::desk;
  if (v == "full") return Profile::full;
  throw ConfigError("profile: expected desk or full, got '" + v + "'", line);
}

std::string profile_name(Profile p) { return p == Profile::desk ? "desk" : "full"; }

struct Field {
  std::function<void(ExperimentConfig&, const std::string&, std::size_t)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T>
Field uint_field(const std::string& key, T ExperimentConfig::*group, std::size_t T::*member) {
  return {[=](ExperimentConfig& c, const std::string& v, std::size_t line) {
            (c.*group).*member = static_cast<std::size_t>(parse_uint(key, v, line));
          },
          [=](const ExperimentConfig& c) { return std::to_string((c.*group).*member); }};
}

template <typename T>
Field real_field(const std::string& key, T ExperimentConfig::*group, double T::*member) {
  return {[=](ExperimentConfig& c, const std::string& v, std::size_t line) { (c.*group).*member = parse_real(key, v, line); },
          [=](const ExperimentConfig& c) { return fmt((c.*group).*member); }};
}

// Ordered key table; serialization follows this order.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> t;
    t.emplace_back("mode", Field{[](ExperimentConfig& c, const std::string& v, std::size_t line) {
                                   try {
                                     c.mode = QuantMode::parse(v);
                                   } catch (const std::invalid_argument& e) {
                                     throw ConfigError(std::string("mode: ") + e.what(), line);
                                   }
                                 },
                                 [](const ExperimentConfig& c) { return c.mode.name(); }});
    t.emplace_back("seed", Field{[](ExperimentConfig& c, const std::string& v, std::size_t line) {
                                   c.seed = parse_uint("seed", v, line);
                                 },
                                 [](const ExperimentConfig& c) { return std::to_string(c.seed); }});
    t.emplace_back("bag_size", Field{[](ExperimentConfig& c, const std::string& v, std::size_t line) {
                                       c.bag_size = parse_uint("bag_size", v, line);
                                     },
                                     [](const ExperimentConfig& c) { return std::to_string(c.bag_size); }});
    auto shape = &ExperimentConfig::shape;
    t.emplace_back("block_length", uint_field("block_length", shape, &CodecShape::block_length));
    t.emplace_back("iterations", uint_field("iterations", shape, &CodecShape::iterations));
    t.emplace_back("feature_size", uint_field("feature_size", shape, &CodecShape::feature_size));
    t.emplace_back("filters", uint_field("filters", shape, &CodecShape::filters));
    t.emplace_back("kernel", uint_field("kernel", shape, &CodecShape::kernel));
    t.emplace_back("encoder_layers", uint_field("encoder_layers", shape, &CodecShape::encoder_layers));
    t.emplace_back("decoder_layers", uint_field("decoder_layers", shape, &CodecShape::decoder_layers));
    auto train = &ExperimentConfig::train;
    t.emplace_back("batch_size", uint_field("batch_size", train, &TrainConfig::batch_size));
    t.emplace_back("epochs", uint_field("epochs", train, &TrainConfig::epochs));
    t.emplace_back("lr", real_field("lr", train, &TrainConfig::lr));
    t.emplace_back("plateau_patience", uint_field("plateau_patience", train, &TrainConfig::plateau_patience));
    t.emplace_back("plateau_factor", real_field("plateau_factor", train, &TrainConfig::plateau_factor));
    t.emplace_back("plateau_min_delta", real_field("plateau_min_delta", train, &TrainConfig::plateau_min_delta));
    t.emplace_back("enc_steps", uint_field("enc_steps", train, &TrainConfig::enc_steps));
    t.emplace_back("dec_steps", uint_field("dec_steps", train, &TrainConfig::dec_steps));
    t.emplace_back("enc_snr_db", real_field("enc_snr_db", train, &TrainConfig::enc_snr_db));
    t.emplace_back("dec_snr_low_db", real_field("dec_snr_low_db", train, &TrainConfig::dec_snr_low_db));
    t.emplace_back("dec_snr_high_db", real_field("dec_snr_high_db", train, &TrainConfig::dec_snr_high_db));
    t.emplace_back("val_snr_db", real_field("val_snr_db", train, &TrainConfig::val_snr_db));
    t.emplace_back("val_batches", uint_field("val_batches", train, &TrainConfig::val_batches));
    t.emplace_back("calibration_batches",
                   uint_field("calibration_batches", train, &TrainConfig::calibration_batches));
    auto sweep = &ExperimentConfig::sweep;
    t.emplace_back("snr_start", real_field("snr_start", sweep, &SweepConfig::snr_start_db));
    t.emplace_back("snr_end", real_field("snr_end", sweep, &SweepConfig::snr_end_db));
    t.emplace_back("snr_step", real_field("snr_step", sweep, &SweepConfig::snr_step_db));
    t.emplace_back("blocks_per_point", uint_field("blocks_per_point", sweep, &SweepConfig::blocks_per_point));
    t.emplace_back("target_bit_errors", uint_field("target_bit_errors", sweep, &SweepConfig::target_bit_errors));
    t.emplace_back("eval_batch_size", uint_field("eval_batch_size", sweep, &SweepConfig::batch_size));
    return t;
  }();
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& [name, field] : fields()) {
    if (name == key) return &field;
  }
  return nullptr;
}

}  // namespace

ConfigError::ConfigError(const std::string& what, std::size_t line)
    : std::invalid_argument(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

ExperimentConfig ExperimentConfig::for_profile(Profile p) {
  ExperimentConfig c;
  c.profile = p;
  if (p == Profile::desk) {
    c.shape = CodecShape::desk();
    c.train = TrainConfig::desk();
  }
  c.sync_seed();
  return c;
}

void ExperimentConfig::sync_seed() {
  train.seed = seed;
  sweep.seed = seed;
}

void ExperimentConfig::validate() const {
  try {
    shape.validate();
    train.validate();
    sweep.validate();
    mode.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (bag_size < 1) throw ConfigError("bag_size: must be >= 1");
}

ExperimentConfig parse_config(const std::string& text) {
  struct Line {
    std::size_t number;
    std::string key, value;
  };
  std::vector<Line> lines;
  std::istringstream in(text);
  std::string raw;
  std::size_t number = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, raw)) {
    ++number;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value', got '" + line + "'", number);
    Line l{number, trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
    if (l.key.empty()) throw ConfigError("missing key before '='", number);
    if (l.key != "profile" && !find_field(l.key)) throw ConfigError("unknown key '" + l.key + "'", number);
    if (auto [it, fresh] = seen.emplace(l.key, number); !fresh) {
      throw ConfigError("duplicate key '" + l.key + "' (first set on line " + std::to_string(it->second) + ")", number);
    }
    lines.push_back(std::move(l));
  }

  Profile profile = Profile::full;
  for (const Line& l : lines) {
    if (l.key == "profile") profile = parse_profile(l.value, l.number);
  }
  ExperimentConfig cfg = ExperimentConfig::for_profile(profile);
  for (const Line& l : lines) {
    if (l.key != "profile") find_field(l.key)->set(cfg, l.value, l.number);
  }
  cfg.sync_seed();
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    // Point at the line that set the offending key when there is one.
    const std::string msg = e.what();
    const auto colon = msg.find(':');
    if (colon != std::string::npos) {
      if (auto it = seen.find(msg.substr(0, colon)); it != seen.end()) throw ConfigError(msg, it->second);
    }
    throw;
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const ExperimentConfig& config) {
  std::string out = "profile = " + profile_name(config.profile) + "\n";
  for (const auto& [name, field] : fields()) out += name + " = " + field.get(config) + "\n";
  return out;
}

}  // namespace bitturbo
