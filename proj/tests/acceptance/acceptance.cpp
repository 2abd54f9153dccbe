// Acceptance run: one PASS/FAIL line per criterion 1-9, exit status 1 if any fails.
//
// Criteria 6 and 7 train desk-size models (about 1.5 h on one core). Sweep
// CSVs, training curves and a summary land in --out-dir.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "bitturbo/bench.hpp"
#include "bitturbo/channel.hpp"
#include "bitturbo/cli.hpp"
#include "bitturbo/container.hpp"
#include "bitturbo/cost.hpp"
#include "bitturbo/ensemble.hpp"
#include "bitturbo/model_io.hpp"
#include "bitturbo/packed_decoder.hpp"
#include "bitturbo/parallel.hpp"
#include "bitturbo/sweep.hpp"
#include "bitturbo/train.hpp"
#include "support/gradcheck.hpp"
#include "support/kernel_oracle.hpp"

using namespace bitturbo;
using bitturbo::testing::gradient_check;
using bitturbo::testing::probe_loss;
using bitturbo::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Options {
  fs::path out_dir = "acceptance_out";
  std::set<int> only;
  std::size_t epochs = 0;  // 0: desk default
  std::size_t seeds = 3;
  std::size_t bag = 4;
};

struct Report {
  std::ofstream summary;
  int failures = 0;

  void verdict(int id, bool pass, const std::string& detail) {
    std::ostringstream line;
    line << "criterion " << id << ": " << (pass ? "PASS" : "FAIL") << "  " << detail;
    std::cout << line.str() << std::endl;
    summary << line.str() << "\n";
    summary.flush();
    failures += pass ? 0 : 1;
  }
  void info(const std::string& text) {
    std::cout << "  " << text << std::endl;
    summary << "  " << text << "\n";
    summary.flush();
  }
};

// ---------------------------------------------------------------------------
// 1. packed kernel against the float oracle

void criterion_kernel(Report& rep) {
  const auto t0 = Clock::now();
  RngCursor rng(0xA11CE);
  std::size_t trials = 0, mismatches = 0, ragged = 0;
  for (int i = 0; i < 1200; ++i) {
    const auto t = bitturbo::testing::run_kernel_trial(rng, i % 2 == 1);
    ++trials;
    mismatches += t.mismatches;
    ragged += t.h % 64 != 0;
  }
  const double secs = seconds_since(t0);
  rep.verdict(1, mismatches == 0 && secs < 60.0 && ragged > 0,
              std::to_string(trials) + " binary/ternary layers, " + std::to_string(mismatches) + " mismatching bits, " +
                  std::to_string(ragged) + " with h % 64 != 0, " + fmt("%.2f s", secs));
}

// ---------------------------------------------------------------------------
// 2. gradient suite

void criterion_gradients(Report& rep) {
  constexpr double kTol = 1e-4;
  RngCursor rng(0x6AD);
  double worst = 0.0;
  std::string worst_op;
  std::size_t checked = 0;
  auto run = [&](const std::string& op, const std::function<Tensor(Tape*)>& f, std::vector<Tensor> inputs) {
    const auto r = gradient_check(f, std::move(inputs));
    checked += r.checked;
    if (r.max_relative_error > worst) {
      worst = r.max_relative_error;
      worst_op = op;
    }
  };

  for (std::size_t k : {1, 3, 5}) {
    for (bool bias : {false, true}) {
      const ConvLayerSpec spec{3, 4, k, bias, Activation::linear};
      const Tensor x = random_tensor({2, 3, 9}, rng), w = random_tensor({4, 3, k}, rng);
      const Tensor b = bias ? random_tensor({4}, rng) : Tensor();
      const Tensor probe = random_tensor({2, 4, 9}, rng);
      std::vector<Tensor> in = {x, w};
      if (bias) in.push_back(b);
      run("conv1d", [&](Tape* t) { return probe_loss(t, conv1d(t, x, w, b, spec), probe); }, in);
    }
  }
  Tensor x = random_tensor({2, 3, 7}, rng, -2.0, 2.0);
  for (double& v : x.values()) {
    if (std::abs(v) < 1e-3) v = 0.25;
  }
  const Tensor y = random_tensor({2, 3, 7}, rng), g({1}, {0.6});
  const Tensor probe = random_tensor({2, 3, 7}, rng);
  run("elu", [&](Tape* t) { return probe_loss(t, elu(t, x), probe); }, {x});
  run("sigmoid", [&](Tape* t) { return probe_loss(t, sigmoid(t, x), probe); }, {x});
  run("scale", [&](Tape* t) { return probe_loss(t, scale(t, x, 0.3), probe); }, {x});
  run("scale_by", [&](Tape* t) { return probe_loss(t, scale_by(t, x, g), probe); }, {x, g});
  run("add", [&](Tape* t) { return probe_loss(t, add(t, x, y), probe); }, {x, y});
  run("sum", [&](Tape* t) { return sum(t, x); }, {x});

  BatchNorm bn = BatchNorm::affine(3);
  for (std::size_t c = 0; c < 3; ++c) {
    bn.gamma[c] = rng.uniform(-1.5, 1.5);
    bn.beta[c] = rng.uniform(-0.5, 0.5);
    bn.running_mean[c] = rng.uniform(-0.5, 0.5);
    bn.running_var[c] = rng.uniform(0.5, 2.0);
  }
  BatchNorm bn_train = bn;  // running statistics move on every call; the checks only read batch moments
  run("batchnorm (train)", [&](Tape* t) { return probe_loss(t, batchnorm1d(t, x, bn_train, true), probe); },
      {x, bn.gamma, bn.beta});
  run("batchnorm (eval)",
      [&](Tape* t) { return probe_loss(t, batchnorm1d(t, x, static_cast<const BatchNorm&>(bn)), probe); },
      {x, bn.gamma, bn.beta});

  const Tensor p = random_tensor({2, 1, 9}, rng, 0.05, 0.95);
  Tensor target({2, 1, 9});
  for (double& v : target.values()) v = rng.sign() > 0 ? 1.0 : 0.0;
  run("bce", [&](Tape* t) { return bce_loss(t, p, target); }, {p});

  const Tensor a = random_tensor({2, 2, 6}, rng), b = random_tensor({2, 1, 6}, rng);
  const Tensor parts[2] = {a, b};
  const Tensor probe3 = random_tensor({2, 3, 6}, rng), probe1 = random_tensor({2, 1, 6}, rng),
               probe2 = random_tensor({2, 2, 6}, rng);
  const std::vector<std::uint32_t> perm = {4, 2, 0, 5, 1, 3};
  run("concat", [&](Tape* t) { return probe_loss(t, concat_channels(t, parts), probe3); }, {a, b});
  run("slice", [&](Tape* t) { return probe_loss(t, slice_channels(t, a, 1, 1), probe1); }, {a});
  run("interleave", [&](Tape* t) { return probe_loss(t, gather_positions(t, a, perm), probe2); }, {a});
  run("deinterleave", [&](Tape* t) { return probe_loss(t, scatter_positions(t, a, perm), probe2); }, {a});

  // The whole real-valued decoder, end to end into the loss.
  CodecShape s;
  s.block_length = 8;
  s.iterations = 2;
  s.feature_size = 2;
  s.filters = 3;
  s.kernel = 3;
  s.decoder_layers = 2;
  CodecModel m = make_model(s, QuantMode::real(), 3);
  const Tensor z = random_tensor({2, 3, 8}, rng, -1.5, 1.5);
  Tensor bits({2, 1, 8});
  for (double& v : bits.values()) v = rng.sign() > 0 ? 1.0 : 0.0;
  run("decoder", [&](Tape* t) { return bce_loss(t, decode_soft(t, z, m, false), bits); }, m.decoder_parameters());

  // Straight-through estimator: exact equality with grad * 1{|r| <= 1}.
  std::size_t ste_elements = 0, ste_mismatch = 0;
  for (int trial = 0; trial < 50; ++trial) {
    Tensor r = random_tensor({4, 3, 5}, rng, -2.0, 2.0);
    r[0] = 1.0;
    r[1] = -1.0;
    const Tensor pr = random_tensor({4, 3, 5}, rng);
    for (int ternary = 0; ternary < 2; ++ternary) {
      r.set_requires_grad(true);
      r.clear_grad();
      Tape tape;
      Tensor loss = probe_loss(&tape, ternary ? ternarize(&tape, r) : binarize(&tape, r), pr);
      tape.backward(loss);
      for (std::size_t i = 0; i < r.numel(); ++i) {
        const double expected = std::abs(r[i]) <= 1.0 ? pr[i] : 0.0;
        ++ste_elements;
        ste_mismatch += r.grad()[i] != expected;
      }
    }
  }
  rep.verdict(2, worst <= kTol && ste_mismatch == 0,
              std::to_string(checked) + " partials, worst relative error " + fmt("%.2e", worst) + " (" + worst_op +
                  "), STE " + std::to_string(ste_mismatch) + "/" + std::to_string(ste_elements) + " mismatches");
}

// ---------------------------------------------------------------------------
// 3. quantizer conformance

void criterion_quantizers(Report& rep) {
  RngCursor rng(0x0BA7);
  std::size_t checked = 0, bad = 0, band_hits = 0, zeros = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(400);
    Tensor r({n});
    for (double& v : r.values()) v = rng.uniform(-1.5, 1.5);
    r[rng.below(n)] = 0.0;
    // Direct evaluation: sign with sign(0) = +1.
    const Tensor b = binarize(nullptr, r);
    for (std::size_t i = 0; i < n; ++i) {
      bad += b[i] != (r[i] >= 0.0 ? 1.0 : -1.0);
      zeros += r[i] == 0.0;
      ++checked;
    }
    // Direct evaluation: delta = 0.7 mean|r|, zero band |r| <= delta inclusive.
    double mean_abs = 0.0;
    for (double v : r.values()) mean_abs += std::abs(v);
    mean_abs /= static_cast<double>(n);
    const double delta = 0.7 * mean_abs;
    const Tensor t = ternarize(nullptr, r);
    for (std::size_t i = 0; i < n; ++i) {
      const double expected = r[i] > delta ? 1.0 : (r[i] < -delta ? -1.0 : 0.0);
      bad += t[i] != expected;
      ++checked;
    }
    // Values exactly on the band edge fall inside the zero band.
    bad += ternarize_value(delta, delta) != 0.0;
    bad += ternarize_value(-delta, delta) != 0.0;
    band_hits += 2;
  }
  double worst_ratio = 0.0;
  for (int q : {2, 4, 8}) {
    for (int trial = 0; trial < 100; ++trial) {
      const Tensor w = random_tensor({1 + rng.below(500)}, rng, -rng.uniform(0.1, 3), rng.uniform(0.1, 3));
      const Tensor qw = post_quantize(w, q);
      double s = 0.0, err = 0.0;
      for (double v : w.values()) s = std::max(s, std::abs(v));
      for (std::size_t i = 0; i < w.numel(); ++i) err = std::max(err, std::abs(w[i] - qw[i]));
      const double bound = s / ((1 << q) - 1);
      worst_ratio = std::max(worst_ratio, err / bound);
    }
  }
  rep.verdict(3, bad == 0 && worst_ratio <= 1.0 + 1e-12 && zeros > 0,
              std::to_string(checked) + " values (" + std::to_string(zeros) + " zeros, " + std::to_string(band_hits) +
                  " band-edge probes), " + std::to_string(bad) + " disagreements; post-quant worst error/bound " +
                  fmt("%.3f", worst_ratio));
}

// ---------------------------------------------------------------------------
// 4. cost arithmetic

void criterion_cost(Report& rep) {
  const double mb = storage_megabytes(2'600'000, 64);
  const auto dec = decoder_layer_shapes(CodecShape::full());
  const auto enc = encoder_layer_shapes(CodecShape::full());
  const double total_mb = storage_megabytes(parameter_count(dec) + parameter_count(enc), 64);
  const CostReport real = cost_report(dec, QuantMode::real());
  const CostReport bin = cost_report(dec, QuantMode::binary());
  const CostReport ter = cost_report(dec, QuantMode::ternary());
  const CostReport q4 = cost_report(dec, QuantMode::post_quant(4));
  const CostReport bag = cost_report(dec, QuantMode::binary(), 4);
  const double flops = static_cast<double>(real.flops_real);
  const bool ok = std::abs(mb / 20.84 - 1.0) <= 0.005 && std::abs(total_mb / 20.84 - 1.0) <= 0.005 &&
                  flops >= 2e8 && flops <= 8e8 && bin.memory_saving_x == 64.0 && ter.memory_saving_x == 64.0 &&
                  q4.memory_saving_x == 16.0 && bag.memory_saving_x == 16.0 && bin.speedup_x == 64.0 &&
                  ter.speedup_x == 64.0;
  rep.verdict(4, ok,
              "26e5 params -> " + fmt("%.3f MB", mb) + ", full-size model " + fmt("%.3f MB", total_mb) +
                  ", decoder " + fmt("%.3g FLOPs", flops) + ", savings bin/ter/q4/bag " +
                  fmt("%g", bin.memory_saving_x) + "/" + fmt("%g", ter.memory_saving_x) + "/" +
                  fmt("%g", q4.memory_saving_x) + "/" + fmt("%g", bag.memory_saving_x) + ", speedup " +
                  fmt("%g", bin.speedup_x) + "/" + fmt("%g", ter.speedup_x));
}

// ---------------------------------------------------------------------------
// 5. channel statistics

void criterion_channel(Report& rep) {
  const std::size_t n = 1'000'000;
  const Tensor noise = awgn(Tensor({n}, 0.0), ChannelSpec::from_snr(0.0, 0x5EED));
  double mean = 0.0;
  for (double v : noise.values()) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : noise.values()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  double worst_inversion = 0.0;
  for (double snr = -10.0; snr <= 20.0; snr += 0.125) {
    worst_inversion = std::max(worst_inversion, std::abs(snr_from_sigma(sigma_from_snr(snr)) - snr));
    const double sigma = std::exp(snr / 10.0);
    worst_inversion = std::max(worst_inversion, std::abs(sigma_from_snr(snr_from_sigma(sigma)) - sigma) / sigma);
  }
  const double mean_bound = 4.0 / std::sqrt(static_cast<double>(n));
  rep.verdict(5, std::abs(var - 1.0) <= 0.01 && std::abs(mean) <= mean_bound && worst_inversion <= 1e-12,
              "variance " + fmt("%.5f", var) + ", mean " + fmt("%.2e", mean) + " (bound " + fmt("%.1e", mean_bound) +
                  "), worst SNR/sigma round-trip error " + fmt("%.1e", worst_inversion));
}

// ---------------------------------------------------------------------------
// 6 and 7. desk training

using Sweep = std::vector<SweepPoint>;

SweepConfig acceptance_sweep() {
  SweepConfig c;  // -2..4 dB in 1 dB steps
  c.blocks_per_point = 2000;
  c.target_bit_errors = 1000;
  c.seed = 2024;  // one channel realization set for every model
  return c;
}

void save_sweep(const fs::path& path, const Sweep& s) { write_text_file(path.string(), sweep_csv(s)); }

Sweep pooled(const std::vector<Sweep>& runs) {
  Sweep out = runs.front();
  for (std::size_t r = 1; r < runs.size(); ++r) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i].stats += runs[r][i].stats;
  }
  return out;
}

std::string ber_row(const Sweep& s) {
  std::string row;
  for (const SweepPoint& p : s) row += fmt("%9.2e", p.stats.ber());
  return row;
}

struct SeedRun {
  TrainResult real, binary, ternary;
  Sweep untrained, s_real, s_binary, s_ternary, s_q1, s_q8;
};

TrainConfig desk_config(const Options& opt, std::uint64_t seed) {
  TrainConfig c = TrainConfig::desk();
  if (opt.epochs) c.epochs = opt.epochs;
  c.seed = seed;
  return c;
}

TrainResult train_logged(Report& rep, const Options& opt, const std::string& name, const QuantMode& mode,
                         std::uint64_t seed) {
  const auto t0 = Clock::now();
  TrainResult r = train_full(CodecShape::desk(), mode, desk_config(opt, seed));
  write_text_file((opt.out_dir / (name + ".train.csv")).string(), r.log.csv());
  save_model_file((opt.out_dir / (name + ".btae")).string(), ModelFile::from_model(r.model));
  double val = 0.0;
  for (const LogEntry& e : r.log.entries) {
    if (e.phase == Phase::validation) val = e.loss;
  }
  rep.info("trained " + name + fmt(" in %.0f s", seconds_since(t0)) + fmt(", final validation BCE %.4f", val));
  return r;
}

bool monotone_within_2se(const Sweep& s, std::string& why) {
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    const double a = s[i].stats.ber(), b = s[i + 1].stats.ber();
    const double se = std::hypot(s[i].stats.ber_standard_error(), s[i + 1].stats.ber_standard_error());
    if (b > a + 2.0 * se) {
      why = fmt("BER rises from %.3e", a) + fmt(" to %.3e", b) + fmt(" at %g dB", s[i + 1].snr_db);
      return false;
    }
  }
  return true;
}

void criterion_training(Report& rep, const Options& opt, std::vector<SeedRun>& runs) {
  const auto t0 = Clock::now();
  const SweepConfig sc = acceptance_sweep();
  bool a_ok = true, b_ok = true;
  std::string a_detail, b_detail;
  for (std::uint64_t seed = 1; seed <= opt.seeds; ++seed) {
    SeedRun run;
    const std::string tag = "seed" + std::to_string(seed);
    CodecModel untrained = make_model(CodecShape::desk(), QuantMode::real(), seed);
    calibrate_power(untrained, TrainConfig::desk().calibration_batches, TrainConfig::desk().batch_size, seed);
    run.untrained = run_sweep(untrained, float_decoder(untrained), sc);
    run.real = train_logged(rep, opt, tag + "_real", QuantMode::real(), seed);
    run.binary = train_logged(rep, opt, tag + "_binary", QuantMode::binary(), seed);
    run.ternary = train_logged(rep, opt, tag + "_ternary", QuantMode::ternary(), seed);
    const CodecModel q1 = post_quantize_model(run.real.model, 1);
    const CodecModel q8 = post_quantize_model(run.real.model, 8);
    run.s_real = run_sweep(run.real.model, float_decoder(run.real.model), sc);
    run.s_binary = run_sweep(run.binary.model, float_decoder(run.binary.model), sc);
    run.s_ternary = run_sweep(run.ternary.model, float_decoder(run.ternary.model), sc);
    run.s_q1 = run_sweep(q1, float_decoder(q1), sc);
    run.s_q8 = run_sweep(q8, float_decoder(q8), sc);
    save_sweep(opt.out_dir / (tag + "_untrained.csv"), run.untrained);
    save_sweep(opt.out_dir / (tag + "_real.csv"), run.s_real);
    save_sweep(opt.out_dir / (tag + "_binary.csv"), run.s_binary);
    save_sweep(opt.out_dir / (tag + "_ternary.csv"), run.s_ternary);
    save_sweep(opt.out_dir / (tag + "_q1.csv"), run.s_q1);
    save_sweep(opt.out_dir / (tag + "_q8.csv"), run.s_q8);

    const auto at2 = [](const Sweep& s) {
      for (const SweepPoint& p : s) {
        if (std::abs(p.snr_db - 2.0) < 1e-9) return p.stats.ber();
      }
      throw std::logic_error("sweep lacks the 2 dB point");
    };
    const double trained2 = at2(run.s_real), untrained2 = at2(run.untrained);
    a_ok &= trained2 <= 0.5 * untrained2;
    a_detail += " " + tag + fmt(" %.2e", trained2) + fmt(" vs %.2e", untrained2) + ";";
    std::string why;
    if (!monotone_within_2se(run.s_real, why)) {
      b_ok = false;
      b_detail += " " + tag + ": " + why + ";";
    }
    rep.info(tag + " BER   -2 .. 4 dB");
    rep.info("  untrained " + ber_row(run.untrained));
    rep.info("  real      " + ber_row(run.s_real));
    rep.info("  binary    " + ber_row(run.s_binary));
    rep.info("  ternary   " + ber_row(run.s_ternary));
    rep.info("  q1        " + ber_row(run.s_q1));
    rep.info("  q8        " + ber_row(run.s_q8));
    runs.push_back(std::move(run));
  }

  std::vector<Sweep> bins, ters, q1s, q8s, reals;
  for (const SeedRun& r : runs) {
    bins.push_back(r.s_binary);
    ters.push_back(r.s_ternary);
    q1s.push_back(r.s_q1);
    q8s.push_back(r.s_q8);
    reals.push_back(r.s_real);
  }
  const Sweep pb = pooled(bins), pt = pooled(ters), pq1 = pooled(q1s), pq8 = pooled(q8s), pr = pooled(reals);
  save_sweep(opt.out_dir / "pooled_real.csv", pr);
  save_sweep(opt.out_dir / "pooled_binary.csv", pb);
  save_sweep(opt.out_dir / "pooled_ternary.csv", pt);
  save_sweep(opt.out_dir / "pooled_q1.csv", pq1);
  save_sweep(opt.out_dir / "pooled_q8.csv", pq8);
  bool c_ok = true;
  std::size_t ternary_wins = 0, q8_within = 0;
  for (std::size_t i = 0; i < pb.size(); ++i) {
    c_ok &= pb[i].stats.ber() <= pq1[i].stats.ber();
    ternary_wins += pt[i].stats.ber() <= pb[i].stats.ber();
    q8_within += std::abs(pq8[i].stats.ber() - pr[i].stats.ber()) <= 0.1 * pr[i].stats.ber();
  }
  const bool d_ok = ternary_wins >= 5;
  const double secs = seconds_since(t0);
  const bool time_ok = secs < 2.0 * 3600.0;
  rep.info("pooled over " + std::to_string(runs.size()) + " seeds:");
  rep.info("  real      " + ber_row(pr));
  rep.info("  binary    " + ber_row(pb));
  rep.info("  ternary   " + ber_row(pt));
  rep.info("  q1        " + ber_row(pq1));
  rep.info("  q8        " + ber_row(pq8));
  rep.info("q8 within 10% of real at " + std::to_string(q8_within) + "/" + std::to_string(pr.size()) +
           " points (reported only)");
  rep.verdict(6, a_ok && b_ok && c_ok && d_ok && time_ok,
              std::string("(a) ") + (a_ok ? "ok" : "fail") + ", (b) " + (b_ok ? "ok" : "fail" + b_detail) + ", (c) " +
                  (c_ok ? "ok" : "fail") + ", (d) ternary <= binary at " + std::to_string(ternary_wins) +
                  "/7 points, " + fmt("%.0f s", secs) + "; BER@2dB trained vs untrained:" + a_detail);
}

void criterion_bag(Report& rep, const Options& opt, const std::vector<SeedRun>& runs) {
  const auto t0 = Clock::now();
  const SweepConfig sc = acceptance_sweep();
  const CodecModel& base = runs.front().real.model;
  const BagResult bag = train_bag_from(base, QuantMode::binary(), opt.bag, desk_config(opt, 1));
  save_model_file((opt.out_dir / "bag_binary.btae").string(), ModelFile::from_ensemble(bag.ensemble));
  std::vector<Sweep> members;
  for (std::size_t b = 0; b < bag.ensemble.size(); ++b) {
    const CodecModel& m = bag.ensemble.members[b];
    write_text_file((opt.out_dir / ("bag_member" + std::to_string(b) + ".train.csv")).string(),
                    bag.member_logs[b].csv());
    members.push_back(run_sweep(base, float_decoder(m), sc));
    save_sweep(opt.out_dir / ("bag_member" + std::to_string(b) + ".csv"), members.back());
    rep.info("  member " + std::to_string(b) + "  " + ber_row(members.back()));
  }
  const Sweep s_bag = run_sweep(base, bag_decoder(bag.ensemble), sc);
  save_sweep(opt.out_dir / "bag.csv", s_bag);
  rep.info("  bag       " + ber_row(s_bag));

  bool ok = true;
  std::string detail;
  for (std::size_t i = 0; i < s_bag.size(); ++i) {
    std::vector<std::pair<double, double>> v;  // (ber, standard error)
    for (const Sweep& m : members) v.emplace_back(m[i].stats.ber(), m[i].stats.ber_standard_error());
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    const double median = n % 2 ? v[n / 2].first : 0.5 * (v[n / 2 - 1].first + v[n / 2].first);
    const double se = n % 2 ? v[n / 2].second : 0.5 * (v[n / 2 - 1].second + v[n / 2].second);
    const double b = s_bag[i].stats.ber();
    ok &= b <= median + se;
    detail += fmt(" %gdB:", s_bag[i].snr_db) + fmt("%.2e", b) + fmt("/%.2e", median);
  }

  // Degenerate bag: one member reproduces the single decoder bit for bit.
  EnsembleModel one;
  one.members.push_back(bag.ensemble.members.front());
  Tensor z = encode(random_messages(1000, base.shape.block_length, 77, 0), base);
  z = awgn(z, ChannelSpec::from_snr(1.0, 78));
  const Tensor single = decode_soft(z, one.members.front());
  const Tensor bagged = bag_decode(z, one).soft;
  const bool b1 = std::equal(single.values().begin(), single.values().end(), bagged.values().begin());
  rep.verdict(7, ok && b1,
              "B=" + std::to_string(bag.ensemble.size()) + " bag vs median member (bag/median):" + detail +
                  "; B=1 bit-identical: " + (b1 ? "yes" : "no") + fmt(", %.0f s", seconds_since(t0)));
}

// ---------------------------------------------------------------------------
// 8. freeze/pack equivalence and throughput

void criterion_pack(Report& rep, const Options& opt, const std::vector<SeedRun>& runs) {
  std::size_t compared = 0, differing = 0;
  std::vector<const CodecModel*> models;
  std::vector<CodecModel> fallback;
  if (!runs.empty()) {
    models = {&runs.front().binary.model, &runs.front().ternary.model};
  } else {
    // Without the training criteria, pack freshly initialized models with moved statistics.
    for (const char* name : {"binary", "ternary"}) {
      CodecModel m = make_model(CodecShape::desk(), QuantMode::parse(name), 1);
      calibrate_power(m, 2, 100, 2);
      RngCursor rng(3);
      for (int i = 0; i < 3; ++i) decode_soft(nullptr, random_tensor({50, 3, 100}, rng, -2, 2), m, true);
      fallback.push_back(std::move(m));
    }
    for (const CodecModel& m : fallback) models.push_back(&m);
  }
  for (const CodecModel* m : models) {
    const PackedDecoder packed = freeze_for_edge(*m);
    for (double snr : {-2.0, 0.0, 2.0, 4.0}) {
      const std::uint64_t stream = static_cast<std::uint64_t>(std::lround((snr + 10.0) * 1000.0));
      Tensor z = encode(random_messages(1000, m->shape.block_length, 808, stream), *m);
      z = awgn(z, ChannelSpec::from_snr(snr, 809), stream);
      const Tensor a = packed.decode(z).hard, b = decode(z, *m).hard;
      for (std::size_t i = 0; i < a.numel(); ++i) differing += a[i] != b[i];
      compared += a.numel();
    }
  }
  const BenchResult layer = bench_layer(100, 100, 5, 100, 200, 5, 1);
  rep.info(bench_report(layer));
  const BenchResult desk_layer = bench_hidden_layer(CodecShape::desk(), 200, 5);
  rep.info(bench_report(desk_layer) + "  (reported only)");
  const PackedDecoder packed = freeze_for_edge(*models.front());
  const BenchResult dec = bench_decoder(*models.front(), packed, 100, 3, 5, 1);
  rep.info(bench_report(dec) + "  (reported only)");
  (void)opt;
  rep.verdict(8, differing == 0 && layer.speedup() >= 8.0,
              std::to_string(compared) + " hard decisions over 1000 blocks x {-2,0,2,4} dB x binary/ternary, " +
                  std::to_string(differing) + " differ; full-size layer packed speedup " +
                  fmt("%.1fx", layer.speedup()));
}

// ---------------------------------------------------------------------------
// 9. reproducibility of artifacts through the command line

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "bitturbo");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != kExitOk) throw std::runtime_error("bitturbo " + args[1] + " failed: " + err.str());
  return code;
}

void criterion_reproducible(Report& rep, const Options& opt) {
  const std::string config =
      "profile = desk\nepochs = 2\nenc_steps = 2\ndec_steps = 4\nval_batches = 2\ncalibration_batches = 2\n"
      "batch_size = 50\nblocks_per_point = 200\nseed = 11\n";
  const std::vector<std::string> artifacts = {
      "real.btae",   "real.btae.train.csv", "q2.btae",  "bin.btae",     "bin.btae.train.csv", "edge.btae",
      "bag.btae",    "bag.btae.member0.train.csv",      "bag.btae.member1.train.csv",       "real.csv",
      "q2.csv",      "bin.csv",             "edge.csv", "bag.csv",      "cost.csv"};
  std::vector<std::map<std::string, std::vector<std::uint8_t>>> runs;
  for (int round = 0; round < 2; ++round) {
    const fs::path dir = opt.out_dir / ("repro" + std::to_string(round));
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto p = [&](const std::string& f) { return (dir / f).string(); };
    write_text_file(p("exp.cfg"), config);
    cli({"train", "--config", p("exp.cfg"), "--out", p("real.btae"), "--quiet"});
    cli({"quantize", "--model", p("real.btae"), "--bits", "2", "--out", p("q2.btae")});
    cli({"train", "--config", p("exp.cfg"), "--mode", "binary", "--out", p("bin.btae"), "--quiet"});
    cli({"pack", "--model", p("bin.btae"), "--out", p("edge.btae")});
    cli({"train", "--config", p("exp.cfg"), "--mode", "ternary", "--bag", "2", "--out", p("bag.btae"), "--quiet"});
    for (const char* m : {"real", "q2", "bin", "bag"}) {
      cli({"eval", "--model", p(std::string(m) + ".btae"), "--config", p("exp.cfg"), "--out", p(std::string(m) + ".csv")});
    }
    cli({"eval", "--model", p("edge.btae"), "--config", p("exp.cfg"), "--packed", "--out", p("edge.csv")});
    cli({"cost", "--model", p("bag.btae"), "--csv", p("cost.csv")});
    std::map<std::string, std::vector<std::uint8_t>> files;
    for (const std::string& f : artifacts) files[f] = read_file(p(f));
    runs.push_back(std::move(files));
  }
  std::size_t identical = 0;
  std::string differ;
  for (const std::string& f : artifacts) {
    if (runs[0][f] == runs[1][f]) {
      ++identical;
    } else {
      differ += " " + f;
    }
  }
  rep.verdict(9, identical == artifacts.size(),
              std::to_string(identical) + "/" + std::to_string(artifacts.size()) +
                  " artifacts byte-identical across two runs" + (differ.empty() ? "" : " (differ:" + differ + ")"));
}

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  std::vector<int> only;
  CLI::App app{"Acceptance criteria 1-9"};
  std::string out_dir = opt.out_dir.string();
  app.add_option("--out-dir", out_dir, "Where sweeps, curves and the summary go");
  app.add_option("--only", only, "Run only these criteria");
  app.add_option("--epochs", opt.epochs, "Override the desk epoch count (development runs)");
  app.add_option("--seeds", opt.seeds, "Training seeds for criterion 6")->check(CLI::Range(1, 100));
  app.add_option("--bag", opt.bag, "Bag size for criterion 7")->check(CLI::Range(1, 64));
  CLI11_PARSE(app, argc, argv);
  opt.out_dir = out_dir;
  opt.only = {only.begin(), only.end()};
  auto wanted = [&](int id) { return opt.only.empty() || opt.only.count(id) > 0; };

  fs::create_directories(opt.out_dir);
  Report rep;
  rep.summary.open(opt.out_dir / "summary.txt");
  rep.info("worker threads: " + std::to_string(worker_count()));
  std::vector<SeedRun> runs;
  const std::vector<std::pair<int, std::function<void()>>> steps = {
      {1, [&] { criterion_kernel(rep); }},
      {2, [&] { criterion_gradients(rep); }},
      {3, [&] { criterion_quantizers(rep); }},
      {4, [&] { criterion_cost(rep); }},
      {5, [&] { criterion_channel(rep); }},
      {6, [&] { criterion_training(rep, opt, runs); }},
      {7, [&] {
         if (runs.empty()) throw std::runtime_error("needs the models of criterion 6");
         criterion_bag(rep, opt, runs);
       }},
      {8, [&] { criterion_pack(rep, opt, runs); }},
      {9, [&] { criterion_reproducible(rep, opt); }},
  };
  for (const auto& [id, fn] : steps) {
    if (!wanted(id)) continue;
    try {
      fn();
    } catch (const std::exception& e) {
      rep.verdict(id, false, std::string("error: ") + e.what());
    }
  }
  std::cout << (rep.failures ? "acceptance: FAILED " + std::to_string(rep.failures) + " criteria\n"
                             : "acceptance: all selected criteria passed\n");
  return rep.failures ? 1 : 0;
}
