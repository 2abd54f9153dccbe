#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bitturbo/codec.hpp"
#include "bitturbo/optim.hpp"

namespace bitturbo {

struct TrainConfig {
  std::size_t batch_size = 500;
  std::size_t epochs = 800;
  double lr = 1e-4;
  std::size_t plateau_patience = 50;
  double plateau_factor = 0.1;
  double plateau_min_delta = 1e-4;  // absolute improvement that counts as progress
  std::size_t enc_steps = 100;      // encoder steps per epoch
  std::size_t dec_steps = 500;      // decoder steps per epoch
  double enc_snr_db = 1.0;
  double dec_snr_low_db = -1.5;     // decoder steps draw a per-block SNR in [low, high]
  double dec_snr_high_db = 2.0;
  double val_snr_db = 1.0;
  std::size_t val_batches = 10;
  std::size_t calibration_batches = 10;
  std::uint64_t seed = 1;

  /// Full-size settings: batch 500, 800 epochs, lr 1e-4, patience 50.
  static TrainConfig full();
  /// Reduced settings sized for a single CPU core.
  static TrainConfig desk();
  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

enum class Phase : std::uint32_t { encoder = 0, decoder = 1, validation = 2 };
std::string to_string(Phase p);

struct LogEntry {
  std::size_t epoch = 0;
  Phase phase = Phase::encoder;
  double loss = 0.0;
  double lr = 0.0;

  bool operator==(const LogEntry&) const = default;
};

struct TrainingLog {
  std::vector<LogEntry> entries;

  /// `epoch,phase,loss,lr` with full double precision.
  std::string csv() const;
  static TrainingLog parse_csv(const std::string& text);

  bool operator==(const TrainingLog&) const = default;
};

/// Multiplies the learning rate by `factor` once the best loss has failed to
/// improve by at least `min_delta` for `patience` consecutive epochs. The
/// counter restarts after each decay.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, std::size_t patience, double factor = 0.1, double min_delta = 1e-4);

  /// Feeds one validation loss and returns the learning rate for the next epoch.
  double step(double loss);
  double lr() const noexcept { return lr_; }
  double best() const noexcept { return best_; }
  std::size_t stale_epochs() const noexcept { return stale_; }

 private:
  double lr_;
  std::size_t patience_;
  double factor_;
  double min_delta_;
  double best_;
  std::size_t stale_ = 0;
  bool seen_ = false;
};

/// Learning rate after replaying `history` through a fresh scheduler.
double plateau_lr(std::span<const double> history, double lr0, std::size_t patience, double factor = 0.1,
                  double min_delta = 1e-4);

/// Alternating optimization of one model. Encoder and decoder keep separate
/// Adam states; only the active phase's parameters receive gradients.
class Trainer {
 public:
  using Observer = std::function<void(const LogEntry&)>;

  /// With train_encoder = false the encoder is treated as fixed and epochs run
  /// decoder phases only.
  Trainer(CodecModel& model, TrainConfig config, bool train_encoder = true);

  /// Mean BCE over the phase's steps for the current epoch.
  double train_epoch(Phase phase);
  /// Mean BCE on the held-out validation batches, everything in inference mode.
  double validate() const;
  /// One full epoch: encoder phase, power recalibration, decoder phase,
  /// validation and learning-rate scheduling. Appends to the log.
  void run_epoch();
  void run(std::size_t epochs);

  void set_observer(Observer obs) { observer_ = std::move(obs); }
  const TrainingLog& log() const noexcept { return log_; }
  std::size_t epoch() const noexcept { return epoch_; }
  double lr() const noexcept { return scheduler_.lr(); }

 private:
  double step(Phase phase, std::size_t index);
  void set_phase(Phase phase);
  void record(Phase phase, double loss);

  CodecModel& model_;
  TrainConfig cfg_;
  bool train_encoder_;
  Adam enc_opt_;
  Adam dec_opt_;
  PlateauScheduler scheduler_;
  TrainingLog log_;
  std::size_t epoch_ = 0;
  Observer observer_;
};

/// Validation loss of a model (inference mode) on the held-out batches of `config`.
double validation_loss(const CodecModel& model, const TrainConfig& config);

struct TrainResult {
  CodecModel model;
  TrainingLog log;
};

/// Trains encoder and decoder from scratch.
TrainResult train_full(const CodecShape& shape, const QuantMode& mode, const TrainConfig& config,
                       const Trainer::Observer& observer = {});

/// Trains a fresh decoder of `mode` (seeded from config.seed) against the
/// fixed encoder and interleaver of `base`.
TrainResult train_decoder(const CodecModel& base, const QuantMode& mode, const TrainConfig& config,
                          const Trainer::Observer& observer = {});

}  // namespace bitturbo
