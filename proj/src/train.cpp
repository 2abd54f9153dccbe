#include "bitturbo/train.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "bitturbo/channel.hpp"
#include "bitturbo/rng.hpp"

namespace bitturbo {
namespace {

constexpr std::uint64_t kTagMessages = 0x4d534753;    // "MSGS"
constexpr std::uint64_t kTagNoise = 0x4e4f4953;       // "NOIS"
constexpr std::uint64_t kTagSnr = 0x534e5244;         // "SNRD"
constexpr std::uint64_t kTagValidation = 0x56414c44;  // "VALD"
constexpr std::uint64_t kTagCalibration = 0x43414c49; // "CALI"

std::uint64_t step_stream(std::uint64_t tag, std::size_t epoch, Phase phase, std::size_t step) {
  return derive_key(derive_key(derive_key(tag, epoch), static_cast<std::uint64_t>(phase)), step);
}

Tensor targets_of(const Tensor& u) {
  Tensor t(u.shape());
  auto uv = u.values();
  auto tv = t.values();
  for (std::size_t i = 0; i < uv.size(); ++i) tv[i] = (uv[i] + 1.0) / 2.0;
  return t;
}

/// sigma_n * N(0,1) per element, with sigma_n drawn per block from an SNR range.
Tensor noise_for(const Shape& shape, std::uint64_t seed, std::uint64_t stream, double snr_low, double snr_high) {
  Tensor noise(shape);
  const CounterRng normals(seed, derive_key(kTagNoise, stream));
  const CounterRng snrs(seed, derive_key(kTagSnr, stream));
  const std::size_t per_block = shape_numel(shape) / shape[0];
  auto v = noise.values();
  for (std::size_t n = 0; n < shape[0]; ++n) {
    const double snr = snr_low == snr_high ? snr_low : snrs.uniform(n, snr_low, snr_high);
    const double sigma = sigma_from_snr(snr);
    for (std::size_t i = 0; i < per_block; ++i) {
      const std::size_t idx = n * per_block + i;
      v[idx] = sigma * normals.normal(idx);
    }
  }
  return noise;
}

void set_requires_grad(const std::vector<Tensor>& params, bool on) {
  for (Tensor t : params) {
    t.set_requires_grad(on);
    if (!on) t.clear_grad();
  }
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

TrainConfig TrainConfig::full() { return {}; }

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.batch_size = 100;
  c.epochs = 40;
  c.lr = 1e-3;
  c.plateau_patience = 10;
  c.enc_steps = 5;
  c.dec_steps = 25;
  c.val_batches = 10;
  c.calibration_batches = 10;
  return c;
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* key, const char* what) {
    if (!ok) throw std::invalid_argument(std::string(key) + ": " + what);
  };
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(lr > 0.0 && std::isfinite(lr), "lr", "must be positive");
  require(plateau_patience >= 1, "plateau_patience", "must be >= 1");
  require(plateau_factor > 0.0 && plateau_factor < 1.0, "plateau_factor", "must lie in (0, 1)");
  require(plateau_min_delta >= 0.0, "plateau_min_delta", "must be >= 0");
  require(enc_steps + dec_steps >= 1, "enc_steps", "need at least one training step per epoch");
  require(dec_snr_low_db <= dec_snr_high_db, "dec_snr_low_db", "must not exceed dec_snr_high_db");
  require(val_batches >= 1, "val_batches", "must be >= 1");
  require(calibration_batches >= 1, "calibration_batches", "must be >= 1");
}

std::string to_string(Phase p) {
  switch (p) {
    case Phase::encoder: return "encoder";
    case Phase::decoder: return "decoder";
    case Phase::validation: return "validation";
  }
  return "unknown";
}

std::string TrainingLog::csv() const {
  std::string out = "epoch,phase,loss,lr\n";
  for (const LogEntry& e : entries) {
    out += std::to_string(e.epoch) + "," + to_string(e.phase) + "," + format_double(e.loss) + "," +
           format_double(e.lr) + "\n";
  }
  return out;
}

TrainingLog TrainingLog::parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "epoch,phase,loss,lr") {
    throw std::invalid_argument("training log: missing header");
  }
  TrainingLog log;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string epoch, phase, loss, lr;
    if (!std::getline(row, epoch, ',') || !std::getline(row, phase, ',') || !std::getline(row, loss, ',') ||
        !std::getline(row, lr)) {
      throw std::invalid_argument("training log line " + std::to_string(lineno) + ": expected 4 fields");
    }
    LogEntry e;
    try {
      e.epoch = std::stoull(epoch);
      e.loss = std::stod(loss);
      e.lr = std::stod(lr);
    } catch (const std::exception&) {
      throw std::invalid_argument("training log line " + std::to_string(lineno) + ": bad number");
    }
    if (phase == "encoder") {
      e.phase = Phase::encoder;
    } else if (phase == "decoder") {
      e.phase = Phase::decoder;
    } else if (phase == "validation") {
      e.phase = Phase::validation;
    } else {
      throw std::invalid_argument("training log line " + std::to_string(lineno) + ": unknown phase " + phase);
    }
    log.entries.push_back(e);
  }
  return log;
}

PlateauScheduler::PlateauScheduler(double lr, std::size_t patience, double factor, double min_delta)
    : lr_(lr), patience_(patience), factor_(factor), min_delta_(min_delta), best_(0.0) {
  if (!(lr > 0.0)) throw std::invalid_argument("plateau scheduler: lr must be positive");
  if (patience == 0) throw std::invalid_argument("plateau scheduler: patience must be >= 1");
}

double PlateauScheduler::step(double loss) {
  if (!seen_ || loss < best_ - min_delta_) {
    seen_ = true;
    best_ = loss;
    stale_ = 0;
    return lr_;
  }
  if (++stale_ >= patience_) {
    lr_ *= factor_;
    stale_ = 0;
  }
  return lr_;
}

double plateau_lr(std::span<const double> history, double lr0, std::size_t patience, double factor,
                  double min_delta) {
  PlateauScheduler s(lr0, patience, factor, min_delta);
  for (double loss : history) s.step(loss);
  return s.lr();
}

Trainer::Trainer(CodecModel& model, TrainConfig config, bool train_encoder)
    : model_(model),
      cfg_((config.validate(), config)),
      train_encoder_(train_encoder),
      enc_opt_(model.encoder_parameters()),
      dec_opt_(model.decoder_parameters()),
      scheduler_(cfg_.lr, cfg_.plateau_patience, cfg_.plateau_factor, cfg_.plateau_min_delta) {}

void Trainer::set_phase(Phase phase) {
  set_requires_grad(model_.encoder_parameters(), phase == Phase::encoder);
  set_requires_grad(model_.decoder_parameters(), phase == Phase::decoder);
}

double Trainer::step(Phase phase, std::size_t index) {
  const std::size_t k = model_.shape.block_length;
  const std::uint64_t seed = cfg_.seed;
  const bool enc = phase == Phase::encoder;
  const Tensor u = random_messages(cfg_.batch_size, k, seed, step_stream(kTagMessages, epoch_, phase, index));
  const std::uint64_t noise_stream = step_stream(kTagNoise, epoch_, phase, index);

  Tape tape;
  const Tensor x = enc ? encode(&tape, u, model_, true) : encode(u, model_);
  const Tensor noise = enc ? noise_for(x.shape(), seed, noise_stream, cfg_.enc_snr_db, cfg_.enc_snr_db)
                           : noise_for(x.shape(), seed, noise_stream, cfg_.dec_snr_low_db, cfg_.dec_snr_high_db);
  const Tensor z = add(&tape, x, noise);
  const Tensor soft = decode_soft(&tape, z, model_, true);
  Tensor loss = bce_loss(&tape, soft, targets_of(u));
  const double value = loss.item();
  if (!std::isfinite(value)) {
    throw std::runtime_error("training diverged: non-finite loss at epoch " + std::to_string(epoch_) + ", " +
                             to_string(phase) + " step " + std::to_string(index));
  }
  tape.backward(loss);
  Adam& opt = enc ? enc_opt_ : dec_opt_;
  opt.step(scheduler_.lr());
  opt.zero_grad();
  if (!enc && model_.mode.is_bit_mode()) {
    for (Tensor w : model_.decoder_weights()) clip_latent(w);
  }
  return value;
}

double Trainer::train_epoch(Phase phase) {
  if (phase == Phase::validation) return validate();
  const std::size_t steps = phase == Phase::encoder ? cfg_.enc_steps : cfg_.dec_steps;
  set_phase(phase);
  double total = 0.0;
  for (std::size_t s = 0; s < steps; ++s) total += step(phase, s);
  set_phase(Phase::validation);
  return steps ? total / static_cast<double>(steps) : 0.0;
}

double Trainer::validate() const { return validation_loss(model_, cfg_); }

void Trainer::record(Phase phase, double loss) {
  LogEntry e{epoch_, phase, loss, scheduler_.lr()};
  log_.entries.push_back(e);
  if (observer_) observer_(e);
}

void Trainer::run_epoch() {
  if (train_encoder_ && cfg_.enc_steps > 0) {
    record(Phase::encoder, train_epoch(Phase::encoder));
    calibrate_power(model_, cfg_.calibration_batches, cfg_.batch_size,
                    derive_key(cfg_.seed, derive_key(kTagCalibration, epoch_)));
  }
  if (cfg_.dec_steps > 0) record(Phase::decoder, train_epoch(Phase::decoder));
  const double val = validate();
  record(Phase::validation, val);
  scheduler_.step(val);
  ++epoch_;
}

void Trainer::run(std::size_t epochs) {
  for (std::size_t e = 0; e < epochs; ++e) run_epoch();
}

double validation_loss(const CodecModel& model, const TrainConfig& config) {
  const std::size_t k = model.shape.block_length;
  double total = 0.0;
  for (std::size_t b = 0; b < config.val_batches; ++b) {
    const std::uint64_t stream = derive_key(kTagValidation, b);
    const Tensor u = random_messages(config.batch_size, k, config.seed, stream);
    const Tensor x = encode(u, model);
    const Tensor z = add(nullptr, x, noise_for(x.shape(), config.seed, stream, config.val_snr_db, config.val_snr_db));
    total += bce_loss(nullptr, decode_soft(z, model), targets_of(u)).item();
  }
  return total / static_cast<double>(config.val_batches);
}

TrainResult train_full(const CodecShape& shape, const QuantMode& mode, const TrainConfig& config,
                       const Trainer::Observer& observer) {
  config.validate();
  CodecModel model = make_model(shape, mode, config.seed);
  // Start from frozen statistics that match the untrained encoder.
  calibrate_power(model, config.calibration_batches, config.batch_size, derive_key(config.seed, kTagCalibration));
  Trainer trainer(model, config, true);
  trainer.set_observer(observer);
  trainer.run(config.epochs);
  TrainingLog log = trainer.log();
  return {std::move(model), std::move(log)};
}

TrainResult train_decoder(const CodecModel& base, const QuantMode& mode, const TrainConfig& config,
                          const Trainer::Observer& observer) {
  config.validate();
  CodecModel model = base.clone();
  reinitialize_decoder(model, mode, config.seed);
  Trainer trainer(model, config, false);
  trainer.set_observer(observer);
  trainer.run(config.epochs);
  TrainingLog log = trainer.log();
  return {std::move(model), std::move(log)};
}

}  // namespace bitturbo
