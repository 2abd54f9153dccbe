#include "bitturbo/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bitturbo/bench.hpp"
#include "bitturbo/config.hpp"
#include "bitturbo/cost.hpp"
#include "bitturbo/ensemble.hpp"
#include "bitturbo/model_io.hpp"
#include "bitturbo/packed_decoder.hpp"
#include "bitturbo/sweep.hpp"
#include "bitturbo/train.hpp"

namespace bitturbo {
namespace {

struct TrainArgs {
  std::string config;
  std::string mode;
  std::string out;
  std::string log;
  std::size_t bag = 0;
  bool quiet = false;
};

struct QuantizeArgs {
  std::string model;
  int bits = 8;
  std::string out;
};

struct EvalArgs {
  std::string model;
  std::vector<std::string> ensemble;
  std::string config;
  std::optional<double> snr_start, snr_end, snr_step;
  std::optional<std::size_t> blocks, target_errors;
  std::optional<std::uint64_t> seed;
  bool packed = false;
  std::string out;
};

struct CostArgs {
  std::string model;
  std::string config;
  std::string mode;
  std::size_t bag = 1;
  std::string csv;
};

struct BenchArgs {
  std::string model;
  std::size_t iters = 200;
  std::size_t blocks = 100;
  std::size_t reps = 5;
};

struct PackArgs {
  std::string model;
  std::string out;
};

void write_output(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
  } else {
    write_text_file(path, text);
  }
}

ExperimentConfig config_for(const std::string& path, const ModelFile* model) {
  if (!path.empty()) return load_config(path);
  if (model && !model->config_text.empty()) return parse_config(model->config_text);
  return ExperimentConfig::for_profile(Profile::desk);
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg = a.config.empty() ? ExperimentConfig::for_profile(Profile::desk) : load_config(a.config);
  if (!a.mode.empty()) {
    cfg.mode = QuantMode::parse(a.mode);
    if (cfg.mode.kind == QuantMode::Kind::post_quant) {
      throw std::invalid_argument("--mode: train supports real, binary or ternary; use `quantize` for q-bit models");
    }
  }
  if (a.bag > 0) cfg.bag_size = a.bag;
  cfg.validate();

  Trainer::Observer progress;
  if (!a.quiet) {
    progress = [&err](const LogEntry& e) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "epoch %zu %-10s loss %.6f lr %.3g\n", e.epoch, to_string(e.phase).c_str(), e.loss,
                    e.lr);
      err << buf << std::flush;
    };
  }

  ModelFile file;
  if (a.bag > 0) {
    BagResult bag = train_bag(cfg.shape, cfg.mode, cfg.bag_size, cfg.train, progress);
    file = ModelFile::from_ensemble(bag.ensemble);
    file.log = bag.encoder_log;
    for (std::size_t b = 0; b < bag.member_logs.size(); ++b) {
      write_text_file(a.out + ".member" + std::to_string(b) + ".train.csv", bag.member_logs[b].csv());
    }
  } else {
    TrainResult r = train_full(cfg.shape, cfg.mode, cfg.train, progress);
    file = ModelFile::from_model(r.model);
    file.log = r.log;
  }
  file.config_text = serialize_config(cfg);
  save_model_file(a.out, file);
  write_text_file(a.log.empty() ? a.out + ".train.csv" : a.log, file.log.csv());
  out << "wrote " << a.out << " (mode " << cfg.mode.name() << ", " << file.member_count() << " decoder"
      << (file.member_count() == 1 ? "" : "s") << ")\n";
  return kExitOk;
}

int cmd_quantize(const QuantizeArgs& a, std::ostream& out) {
  ModelFile in = load_model_file(a.model);
  if (in.member_count() != 1) throw std::invalid_argument("quantize: expected a single-decoder model");
  ModelFile result = ModelFile::from_model(post_quantize_model(in.member(0), a.bits));
  result.config_text = in.config_text;
  result.log = in.log;
  save_model_file(a.out, result);
  out << "wrote " << a.out << " (mode " << result.transmitter.mode.name() << ")\n";
  return kExitOk;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const ModelFile primary = load_model_file(a.model);
  ExperimentConfig cfg = config_for(a.config, &primary);
  SweepConfig sweep = cfg.sweep;
  if (a.snr_start) sweep.snr_start_db = *a.snr_start;
  if (a.snr_end) sweep.snr_end_db = *a.snr_end;
  if (a.snr_step) sweep.snr_step_db = *a.snr_step;
  if (a.blocks) sweep.blocks_per_point = *a.blocks;
  if (a.target_errors) sweep.target_bit_errors = *a.target_errors;
  if (a.seed) sweep.seed = *a.seed;
  sweep.validate();

  std::vector<SweepPoint> points;
  const bool packed_only = primary.member_count() == 0;
  if (a.packed || packed_only) {
    if (!primary.packed) throw std::invalid_argument("eval: model has no packed decoder (run `pack` first)");
    if (!a.ensemble.empty()) throw std::invalid_argument("eval: --ensemble cannot be combined with a packed decoder");
    const PackedDecoder& p = *primary.packed;
    points = run_sweep(primary.transmitter, [&p](const Tensor& z) { return p.decode(z).hard; }, sweep);
  } else {
    EnsembleModel ens = primary.ensemble();
    std::vector<ModelFile> extra;
    for (const std::string& path : a.ensemble) {
      extra.push_back(load_model_file(path));
      if (extra.back().member_count() == 0) throw std::invalid_argument("eval: " + path + " has no float decoder");
      for (std::size_t b = 0; b < extra.back().member_count(); ++b) ens.members.push_back(extra.back().member(b));
    }
    ens.validate();
    points = ens.size() == 1 ? run_sweep(ens.transmitter(), float_decoder(ens.members.front()), sweep)
                             : run_sweep(ens.transmitter(), bag_decoder(ens), sweep, 1);
  }
  write_output(a.out, sweep_csv(points), out);
  return kExitOk;
}

int cmd_cost(const CostArgs& a, std::ostream& out) {
  CodecShape shape;
  QuantMode mode;
  std::size_t members = a.bag;
  std::uint64_t aux = 0;
  if (!a.model.empty()) {
    const ModelFile f = load_model_file(a.model);
    shape = f.transmitter.shape;
    mode = f.transmitter.mode;
    members = std::max<std::size_t>(1, f.member_count());
    if (f.packed) aux = f.packed->aux_bits();
  } else if (!a.config.empty()) {
    const ExperimentConfig cfg = load_config(a.config);
    shape = cfg.shape;
    mode = a.mode.empty() ? cfg.mode : QuantMode::parse(a.mode);
  } else {
    throw std::invalid_argument("cost: give --model or --config");
  }
  const std::vector<LayerShape> layers = decoder_layer_shapes(shape);
  const CostReport r = cost_report(layers, mode, members, aux);
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "mode            %s\n"
                "decoders (B)    %zu\n"
                "params          %llu\n"
                "storage         %llu bits (%.4f MB)\n"
                "aux             %llu bits\n"
                "flops (real)    %.4g\n"
                "bit-ops         %.4g\n"
                "memory saving   %.4gx\n"
                "speedup         %.4gx\n",
                r.mode.c_str(), r.ensemble_size, static_cast<unsigned long long>(r.params),
                static_cast<unsigned long long>(r.storage_bits), r.storage_megabytes(),
                static_cast<unsigned long long>(r.aux_bits), static_cast<double>(r.flops_real),
                static_cast<double>(r.bitops), r.memory_saving_x, r.speedup_x);
  const std::string csv = cost_csv_header() + "\n" + cost_csv_row(r) + "\n";
  if (a.csv.empty()) {
    out << buf << "\n" << csv;
  } else {
    out << buf;
    write_text_file(a.csv, csv);
  }
  return kExitOk;
}

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  const ModelFile f = load_model_file(a.model);
  if (!f.transmitter.mode.is_bit_mode()) {
    throw std::invalid_argument("bench: needs a binary or ternary model, got " + f.transmitter.mode.name());
  }
  const CodecShape& shape = f.transmitter.shape;
  const BenchResult model_layer = bench_hidden_layer(shape, a.iters, a.reps);
  const BenchResult full_layer = bench_hidden_layer(CodecShape::full(), std::max<std::size_t>(1, a.iters / 4), a.reps);
  out << bench_report(model_layer) << "\n";
  out << bench_report(full_layer) << "  [full-size layer shape]\n";
  if (f.member_count() > 0) {
    const CodecModel model = f.member(0);
    const PackedDecoder packed = f.packed ? *f.packed : freeze_for_edge(model);
    const BenchResult dec = bench_decoder(model, packed, a.blocks, std::max<std::size_t>(1, a.iters / 100), a.reps);
    out << bench_report(dec) << "\n";
  } else {
    out << "decoder comparison skipped: file holds no float decoder\n";
  }
  const std::vector<LayerShape> layers = decoder_layer_shapes(shape);
  const CostReport r = cost_report(layers, f.transmitter.mode);
  char buf[160];
  std::snprintf(buf, sizeof buf, "float decoder flops per block: %.4g (cost model)\n",
                static_cast<double>(r.flops_real));
  out << buf;
  return kExitOk;
}

int cmd_pack(const PackArgs& a, std::ostream& out) {
  const ModelFile in = load_model_file(a.model);
  if (in.member_count() != 1) throw std::invalid_argument("pack: expected a single-decoder model");
  ModelFile result;
  result.transmitter = in.transmitter;
  result.packed = freeze_for_edge(in.member(0));
  result.config_text = in.config_text;
  save_model_file(a.out, result);
  out << "wrote " << a.out << " (" << result.packed->weight_bits() << " weight bits, " << result.packed->aux_bits()
      << " aux bits)\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Train, compress, pack and evaluate neural turbo-style channel codes"};
  app.name("bitturbo");
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model (or a bag of decoders) from a config");
  t->add_option("--config", train.config, "Config file (key = value)")->check(CLI::ExistingFile);
  t->add_option("--mode", train.mode, "real, binary or ternary (overrides the config)");
  t->add_option("--out", train.out, "Output model file")->required();
  t->add_option("--log", train.log, "Training curve CSV (default: OUT.train.csv)");
  t->add_option("--bag", train.bag, "Train a shared real encoder and this many decoders");
  t->add_flag("--quiet", train.quiet, "No per-epoch progress on stderr");

  QuantizeArgs quant;
  auto* q = app.add_subcommand("quantize", "Post-training q-bit quantization of a real model's decoder");
  q->add_option("--model", quant.model, "Input real model")->required()->check(CLI::ExistingFile);
  q->add_option("--bits", quant.bits, "Bits per weight: 1, 2, 4 or 8")->required();
  q->add_option("--out", quant.out, "Output model file")->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "BER/BLER sweep over SNR");
  e->add_option("--model", ev.model, "Model file")->required()->check(CLI::ExistingFile);
  e->add_option("--ensemble", ev.ensemble, "Further models whose decoders join a bag")->check(CLI::ExistingFile);
  e->add_option("--config", ev.config, "Config supplying sweep defaults")->check(CLI::ExistingFile);
  e->add_option("--snr-start", ev.snr_start, "First SNR point (dB)");
  e->add_option("--snr-end", ev.snr_end, "Last SNR point (dB)");
  e->add_option("--snr-step", ev.snr_step, "SNR step (dB)");
  e->add_option("--blocks", ev.blocks, "Maximum blocks per point");
  e->add_option("--target-errors", ev.target_errors, "Stop a point after this many bit errors");
  e->add_option("--seed", ev.seed, "Channel and message seed");
  e->add_flag("--packed", ev.packed, "Use the packed decoder stored in the model");
  e->add_option("--out", ev.out, "CSV output (default stdout)");

  CostArgs cost;
  auto* c = app.add_subcommand("cost", "Parameter, storage and operation counts");
  c->add_option("--model", cost.model, "Model file")->check(CLI::ExistingFile);
  c->add_option("--config", cost.config, "Config describing the architecture")->check(CLI::ExistingFile);
  c->add_option("--mode", cost.mode, "Mode when costing from a config");
  c->add_option("--bag", cost.bag, "Ensemble size when costing from a config");
  c->add_option("--csv", cost.csv, "Write the CSV row here");

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "Packed versus float inference timing");
  b->add_option("--model", bench.model, "Binary or ternary model")->required()->check(CLI::ExistingFile);
  b->add_option("--iters", bench.iters, "Layer iterations per repetition");
  b->add_option("--blocks", bench.blocks, "Blocks per decoder timing batch");
  b->add_option("--reps", bench.reps, "Timed repetitions");

  PackArgs pack;
  auto* p = app.add_subcommand("pack", "Freeze a binary or ternary decoder into bit-packed form");
  p->add_option("--model", pack.model, "Input model")->required()->check(CLI::ExistingFile);
  p->add_option("--out", pack.out, "Output model file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (t->parsed()) return cmd_train(train, out, err);
    if (q->parsed()) return cmd_quantize(quant, out);
    if (e->parsed()) return cmd_eval(ev, out);
    if (c->parsed()) return cmd_cost(cost, out);
    if (b->parsed()) return cmd_bench(bench, out);
    if (p->parsed()) return cmd_pack(pack, out);
  } catch (const std::invalid_argument& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}

}  // namespace bitturbo
