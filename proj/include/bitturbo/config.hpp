#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include "bitturbo/codec.hpp"
#include "bitturbo/quantize.hpp"
#include "bitturbo/sweep.hpp"
#include "bitturbo/train.hpp"

namespace bitturbo {

enum class Profile { desk, full };

struct ExperimentConfig {
  Profile profile = Profile::full;
  QuantMode mode = QuantMode::real();
  CodecShape shape = CodecShape::full();
  TrainConfig train = TrainConfig::full();
  SweepConfig sweep;
  std::size_t bag_size = 4;
  std::uint64_t seed = 1;  // drives training and evaluation streams alike

  static ExperimentConfig for_profile(Profile p);
  /// Throws ConfigError naming the offending key.
  void validate() const;
  /// Copies `seed` into the train and sweep settings.
  void sync_seed();

  bool operator==(const ExperimentConfig&) const = default;
};

/// Parse or validation failure. line() is 0 when the problem is not tied to one line.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& what, std::size_t line = 0);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// `key = value` lines, `#` starts a comment. A `profile` line is applied
/// first wherever it appears; other keys override the profile's defaults.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
/// Every key, in a fixed order, doubles printed with 17 significant digits.
std::string serialize_config(const ExperimentConfig& config);

}  // namespace bitturbo
