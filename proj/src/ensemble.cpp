#include "bitturbo/ensemble.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "bitturbo/parallel.hpp"
#include "bitturbo/rng.hpp"

namespace bitturbo {
namespace {

constexpr std::uint64_t kTagMember = 0x4d454d42;  // "MEMB"

bool same_values(const Tensor& a, const Tensor& b) {
  if (a.defined() != b.defined()) return false;
  if (!a.defined()) return true;
  auto av = a.values();
  auto bv = b.values();
  return a.shape() == b.shape() && std::equal(av.begin(), av.end(), bv.begin());
}

bool same_encoder(const CodecModel& a, const CodecModel& b) {
  const auto pa = a.encoder_parameters(), pb = b.encoder_parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (!same_values(pa[i], pb[i])) return false;
  }
  return a.power.running_mean == b.power.running_mean && a.power.running_var == b.power.running_var;
}

double pairwise_sum(std::span<const double> v) {
  if (v.size() == 1) return v[0];
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

}  // namespace

const CodecModel& EnsembleModel::transmitter() const {
  if (members.empty()) throw std::invalid_argument("ensemble: no members");
  return members.front();
}

void EnsembleModel::validate() const {
  if (members.empty()) throw std::invalid_argument("ensemble: no members");
  const CodecModel& ref = members.front();
  for (std::size_t b = 1; b < members.size(); ++b) {
    const CodecModel& m = members[b];
    const std::string who = "ensemble member " + std::to_string(b) + ": ";
    if (!(m.shape == ref.shape)) throw std::invalid_argument(who + "K, M, F or widths differ from member 0");
    if (!(m.mode == ref.mode)) throw std::invalid_argument(who + "mode " + m.mode.name() + " differs from " + ref.mode.name());
    if (!(m.interleaver == ref.interleaver)) throw std::invalid_argument(who + "interleaver differs from member 0");
    if (!same_encoder(m, ref)) throw std::invalid_argument(who + "encoder weights differ from member 0");
  }
}

Tensor average_soft(std::span<const Tensor> softs) {
  if (softs.empty()) throw std::invalid_argument("average_soft: no inputs");
  for (const Tensor& s : softs) {
    if (s.shape() != softs.front().shape()) throw std::invalid_argument("average_soft: shape mismatch");
  }
  Tensor out(softs.front().shape());
  auto ov = out.values();
  std::vector<double> column(softs.size());
  const double inv = 1.0 / static_cast<double>(softs.size());
  for (std::size_t i = 0; i < ov.size(); ++i) {
    for (std::size_t b = 0; b < softs.size(); ++b) column[b] = softs[b][i];
    std::sort(column.begin(), column.end());
    ov[i] = column.front() == column.back() ? column.front() : pairwise_sum(column) * inv;
  }
  return out;
}

DecodeResult bag_decode(const Tensor& z, const EnsembleModel& ensemble) {
  ensemble.validate();
  std::vector<Tensor> softs(ensemble.size());
  parallel_for(ensemble.size(), [&](std::size_t b) { softs[b] = decode_soft(z, ensemble.members[b]); });
  Tensor soft = average_soft(softs);
  Tensor hard = hard_decision(soft);
  return {std::move(soft), std::move(hard)};
}

HardDecoder bag_decoder(const EnsembleModel& ensemble) {
  return [&ensemble](const Tensor& z) { return bag_decode(z, ensemble).hard; };
}

std::uint64_t member_seed(std::uint64_t seed, std::size_t member) { return derive_key(seed, kTagMember + member); }

BagResult train_bag_from(const CodecModel& base, const QuantMode& mode, std::size_t bag_size,
                         const TrainConfig& config) {
  if (bag_size < 1) throw std::invalid_argument("bag size must be >= 1");
  BagResult out;
  out.ensemble.members.resize(bag_size);
  out.member_logs.resize(bag_size);
  parallel_for(bag_size, [&](std::size_t b) {
    TrainConfig cfg = config;
    cfg.seed = member_seed(config.seed, b);
    TrainResult r = train_decoder(base, mode, cfg);
    out.ensemble.members[b] = std::move(r.model);
    out.member_logs[b] = std::move(r.log);
  });
  return out;
}

BagResult train_bag(const CodecShape& shape, const QuantMode& mode, std::size_t bag_size, const TrainConfig& config,
                    const Trainer::Observer& observer) {
  TrainResult base = train_full(shape, QuantMode::real(), config, observer);
  BagResult out = train_bag_from(base.model, mode, bag_size, config);
  out.encoder_log = std::move(base.log);
  return out;
}

}  // namespace bitturbo
