// Command-line front end over the wamair C API.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wamair/wamair.h"

namespace fs = std::filesystem;

namespace {

/// A failed C API call, carried to main for the exit code.
class CliFailure : public std::runtime_error {
 public:
  CliFailure(wamair_status s, const std::string& msg) : std::runtime_error(msg), status(s) {}
  wamair_status status;
};

void check(wamair_status s) {
  if (s != WAMAIR_OK) throw CliFailure(s, wamair_last_error());
}

[[noreturn]] void io_error(const std::string& msg) { throw CliFailure(WAMAIR_ERR_IO, msg); }
[[noreturn]] void config_error(const std::string& msg) { throw CliFailure(WAMAIR_ERR_CONFIG, msg); }

int exit_code(wamair_status s) {
  switch (s) {
    case WAMAIR_OK: return 0;
    case WAMAIR_ERR_CONFIG: return 1;
    case WAMAIR_ERR_IO:
    case WAMAIR_ERR_CHECKPOINT: return 2;
    case WAMAIR_ERR_NAN: return 3;
    case WAMAIR_ERR_INVALID: return 4;
    default: return 5;
  }
}

// RAII wrappers over the opaque handles.
struct ConfigDel { void operator()(wamair_config* p) const { wamair_config_destroy(p); } };
struct CorpusDel { void operator()(wamair_corpus* p) const { wamair_corpus_destroy(p); } };
struct ModelDel { void operator()(wamair_model* p) const { wamair_model_destroy(p); } };
struct ImageDel { void operator()(wamair_image* p) const { wamair_image_destroy(p); } };
using ConfigPtr = std::unique_ptr<wamair_config, ConfigDel>;
using CorpusPtr = std::unique_ptr<wamair_corpus, CorpusDel>;
using ModelPtr = std::unique_ptr<wamair_model, ModelDel>;
using ImagePtr = std::unique_ptr<wamair_image, ImageDel>;

template <class F, class... Args>
std::string read_string(F f, Args... args) {
  size_t needed = 0;
  check(f(args..., nullptr, 0, &needed));
  std::string s(needed, '\0');
  check(f(args..., s.data(), s.size(), &needed));
  s.resize(needed - 1);
  return s;
}

struct Options {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  std::optional<uint64_t> seed;
  std::optional<int64_t> steps;
  std::string checkpoint;
  std::string input;
  int level = 1;
  std::string split = "val";
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "Config file of key=value lines");
  cmd->add_option("--set", o.sets, "Override key=value, applied after --config (repeatable)");
  cmd->add_option("--seed", o.seed, "Seed for network init and corpus");
  cmd->add_option("--steps", o.steps, "Training steps (schedule length)");
}

std::string hex(uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) io_error("cannot write " + path.string());
  f << text;
  if (!f) io_error("write failed: " + path.string());
}

fs::path prepare_out(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) io_error("cannot create output directory " + out + ": " + ec.message());
  return fs::path(out);
}

/// File first, then --set overrides, then --seed/--steps.
void apply_options(wamair_config* cfg, const Options& o) {
  if (!o.config.empty()) check(wamair_config_load_file(cfg, o.config.c_str()));
  for (const auto& s : o.sets) check(wamair_config_apply(cfg, s.c_str()));
  if (o.seed) check(wamair_config_set(cfg, "seed", std::to_string(*o.seed).c_str()));
  if (o.steps) check(wamair_config_set(cfg, "train.steps", std::to_string(*o.steps).c_str()));
}

ConfigPtr config_from(const Options& o) {
  wamair_config* raw = nullptr;
  check(wamair_config_create(&raw));
  ConfigPtr cfg(raw);
  apply_options(cfg.get(), o);
  check(wamair_config_validate(cfg.get()));
  return cfg;
}

/// The checkpoint's stored config with the command-line settings on top.
ConfigPtr config_from_model(wamair_model* model, const Options& o) {
  wamair_config* raw = nullptr;
  check(wamair_model_config(model, &raw));
  ConfigPtr cfg(raw);
  apply_options(cfg.get(), o);
  check(wamair_config_validate(cfg.get()));
  return cfg;
}

ModelPtr load_model(const std::string& path) {
  wamair_model* raw = nullptr;
  check(wamair_model_load(path.c_str(), &raw));
  return ModelPtr(raw);
}

CorpusPtr build_corpus(const wamair_config* cfg) {
  wamair_corpus* raw = nullptr;
  check(wamair_corpus_build(cfg, &raw));
  return CorpusPtr(raw);
}

ImagePtr load_image(const std::string& path) {
  wamair_image* raw = nullptr;
  check(wamair_image_load(path.c_str(), &raw));
  return ImagePtr(raw);
}

std::string format_eval(const wamair_metrics& m) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "psnr=%.6f ssim=%.6f n=%" PRId64, m.psnr, m.ssim, m.n);
  return buf;
}

std::string format_record(const wamair_loss_record& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "step=%" PRId64 " spatial=%.10g frequency=%.10g wavelet=%.10g total=%.10g lr=%.10g",
                r.step, r.spatial, r.frequency, r.wavelet, r.total, r.lr);
  return buf;
}

/// Effective config plus the command line, enough to rerun.
void write_echo(const fs::path& out, const wamair_config* cfg, const std::string& command) {
  if (cfg) write_file(out / "config.txt", read_string(wamair_config_text, cfg));
  write_file(out / "command.txt", command + "\n");
}

wamair_split parse_split(const std::string& s) {
  if (s == "val") return WAMAIR_SPLIT_VAL;
  if (s == "train") return WAMAIR_SPLIT_TRAIN;
  config_error("--split must be train or val");
}

int64_t config_int(const wamair_config* cfg, const std::string& key) {
  std::istringstream in(read_string(wamair_config_text, cfg));
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(key + "=", 0) == 0) return std::stoll(line.substr(key.size() + 1));
  }
  config_error("missing key " + key);
}

// ---------------------------------------------------------------------------
// Commands

int cmd_corpus(const Options& o, const std::string& command) {
  const ConfigPtr cfg = config_from(o);
  const fs::path out = prepare_out(o.out);
  const CorpusPtr corpus = build_corpus(cfg.get());
  write_echo(out, cfg.get(), command);
  write_file(out / "manifest.txt", read_string(wamair_corpus_manifest, corpus.get()));
  int64_t ntrain = 0, nval = 0;
  double ptrain = 0, pval = 0;
  uint64_t hash = 0;
  check(wamair_corpus_size(corpus.get(), WAMAIR_SPLIT_TRAIN, &ntrain));
  check(wamair_corpus_size(corpus.get(), WAMAIR_SPLIT_VAL, &nval));
  check(wamair_corpus_degraded_psnr(corpus.get(), WAMAIR_SPLIT_TRAIN, &ptrain));
  check(wamair_corpus_degraded_psnr(corpus.get(), WAMAIR_SPLIT_VAL, &pval));
  check(wamair_corpus_hash(corpus.get(), &hash));
  std::printf("train=%" PRId64 " val=%" PRId64 " degraded_psnr_train=%.6f degraded_psnr_val=%.6f hash=%s\n", ntrain,
              nval, ptrain, pval, hex(hash).c_str());
  return 0;
}

int cmd_train(const Options& o, const std::string& command) {
  ModelPtr model;
  ConfigPtr cfg;
  if (!o.checkpoint.empty()) {
    model = load_model(o.checkpoint);
    cfg = config_from_model(model.get(), o);
    check(wamair_model_set_config(model.get(), cfg.get()));
  } else {
    cfg = config_from(o);
    wamair_model* raw = nullptr;
    check(wamair_model_create(cfg.get(), &raw));
    model.reset(raw);
  }
  const fs::path out = prepare_out(o.out);
  write_echo(out, cfg.get(), command);
  const CorpusPtr corpus = build_corpus(cfg.get());

  const int64_t total = config_int(cfg.get(), "train.steps");
  const int64_t every = config_int(cfg.get(), "train.checkpoint_every");
  int64_t step = 0;
  check(wamair_model_step(model.get(), &step));

  std::ofstream log(out / "train.log", step > 0 ? std::ios::app : std::ios::trunc);
  if (!log) io_error("cannot write " + (out / "train.log").string());
  auto sink = [](const wamair_loss_record* r, void* user) {
    const std::string line = format_record(*r);
    *static_cast<std::ofstream*>(user) << line << "\n" << std::flush;
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
  };

  while (step < total) {
    const int64_t chunk = every > 0 ? std::min(every - step % every, total - step) : total - step;
    const wamair_status s = wamair_train(model.get(), corpus.get(), chunk, sink, &log);
    if (s == WAMAIR_ERR_NAN) {
      const std::string msg = wamair_last_error();
      check(wamair_model_save(model.get(), (out / "last_finite.wama").string().c_str()));
      throw CliFailure(WAMAIR_ERR_NAN, msg);
    }
    check(s);
    check(wamair_model_step(model.get(), &step));
    if (every > 0 && step % every == 0 && step < total) {
      check(wamair_model_save(model.get(), (out / ("step_" + std::to_string(step) + ".wama")).string().c_str()));
    }
  }
  check(wamair_model_save(model.get(), (out / "checkpoint.wama").string().c_str()));

  wamair_metrics restored{}, degraded{};
  check(wamair_evaluate(model.get(), corpus.get(), WAMAIR_SPLIT_VAL, &restored));
  check(wamair_evaluate_degraded(corpus.get(), WAMAIR_SPLIT_VAL, &degraded));
  std::printf("degraded %s\n", format_eval(degraded).c_str());
  std::printf("%s\n", format_eval(restored).c_str());
  return 0;
}

int cmd_eval(const Options& o, const std::string& command) {
  const ModelPtr model = load_model(o.checkpoint);
  const ConfigPtr cfg = config_from_model(model.get(), o);
  if (!o.out.empty()) write_echo(prepare_out(o.out), cfg.get(), command);
  const CorpusPtr corpus = build_corpus(cfg.get());
  wamair_metrics m{};
  check(wamair_evaluate(model.get(), corpus.get(), parse_split(o.split), &m));
  std::printf("%s\n", format_eval(m).c_str());
  return 0;
}

int cmd_restore(const Options& o, const std::string& command) {
  const ModelPtr model = load_model(o.checkpoint);
  const ImagePtr input = load_image(o.input);
  const fs::path out = prepare_out(o.out);
  wamair_config* raw = nullptr;
  check(wamair_model_config(model.get(), &raw));
  const ConfigPtr cfg(raw);
  write_echo(out, cfg.get(), command);
  wamair_image* restored_raw = nullptr;
  check(wamair_restore(model.get(), input.get(), &restored_raw));
  const ImagePtr restored(restored_raw);
  const fs::path target = out / (fs::path(o.input).stem().string() + "_restored.ppm");
  check(wamair_image_save(restored.get(), target.string().c_str()));
  std::printf("%s\n", target.string().c_str());
  return 0;
}

int cmd_inspect(const Options& o, const std::string& command) {
  const ImagePtr input = load_image(o.input);
  const fs::path out = prepare_out(o.out);
  write_echo(out, nullptr, command);
  wamair_image* bands[4] = {};
  check(wamair_subbands(input.get(), o.level, bands));
  ImagePtr owned[4] = {ImagePtr(bands[0]), ImagePtr(bands[1]), ImagePtr(bands[2]), ImagePtr(bands[3])};
  const char* names[4] = {"ll", "lh", "hl", "hh"};
  for (int b = 0; b < 4; ++b) {
    const fs::path target = out / (std::string(names[b]) + ".ppm");
    check(wamair_image_save(owned[b].get(), target.string().c_str()));
    int64_t h = 0, w = 0;
    check(wamair_image_size(owned[b].get(), &h, &w));
    std::printf("%s %" PRId64 "x%" PRId64 " %s\n", names[b], w, h, target.string().c_str());
  }
  return 0;
}

struct AblationRow {
  std::string group, name;
  std::vector<std::string> sets;
};

int cmd_ablate(const Options& o, const std::string& command) {
  const ConfigPtr base = config_from(o);
  const fs::path out = prepare_out(o.out);
  write_echo(out, base.get(), command);
  const CorpusPtr corpus = build_corpus(base.get());  // shared by every row
  wamair_metrics degraded{};
  check(wamair_evaluate_degraded(corpus.get(), WAMAIR_SPLIT_VAL, &degraded));

  const std::vector<AblationRow> rows = {
      {"arch", "baseline", {"net.use_gmwt=false", "net.use_mcam=false"}},
      {"arch", "+gmwtconvs", {"net.use_gmwt=true", "net.use_mcam=false"}},
      {"arch", "+mcam", {"net.use_gmwt=false", "net.use_mcam=true"}},
      {"arch", "+gmwtconvs+mcam", {"net.use_gmwt=true", "net.use_mcam=true"}},
      {"loss", "spatial", {"loss.use_frequency=false", "loss.use_wavelet=false"}},
      {"loss", "+frequency", {"loss.use_frequency=true", "loss.use_wavelet=false"}},
      {"loss", "+wavelet", {"loss.use_frequency=true", "loss.use_wavelet=true"}},
  };

  std::map<uint64_t, wamair_metrics> done;  // identical configs are trained once
  std::string table = "group\tname\tconfig_hash\tpsnr\tssim\tgain_db\n";
  std::printf("%-5s %-16s %-16s %10s %8s %8s\n", "group", "name", "config_hash", "psnr", "ssim", "gain_db");
  for (const auto& row : rows) {
    wamair_config* raw = nullptr;
    check(wamair_config_clone(base.get(), &raw));
    const ConfigPtr cfg(raw);
    if (row.group == "arch") {
      check(wamair_config_apply(cfg.get(), "loss.use_frequency=true"));
      check(wamair_config_apply(cfg.get(), "loss.use_wavelet=true"));
    } else {
      check(wamair_config_apply(cfg.get(), "net.use_gmwt=true"));
      check(wamair_config_apply(cfg.get(), "net.use_mcam=true"));
    }
    for (const auto& s : row.sets) check(wamair_config_apply(cfg.get(), s.c_str()));
    uint64_t hash = 0;
    check(wamair_config_hash(cfg.get(), &hash));
    if (!done.count(hash)) {
      wamair_model* mraw = nullptr;
      check(wamair_model_create(cfg.get(), &mraw));
      const ModelPtr model(mraw);
      check(wamair_train(model.get(), corpus.get(), config_int(cfg.get(), "train.steps"), nullptr, nullptr));
      wamair_metrics m{};
      check(wamair_evaluate(model.get(), corpus.get(), WAMAIR_SPLIT_VAL, &m));
      done[hash] = m;
    }
    const wamair_metrics& m = done[hash];
    char line[256];
    std::snprintf(line, sizeof line, "%s\t%s\t%s\t%.6f\t%.6f\t%.6f\n", row.group.c_str(), row.name.c_str(),
                  hex(hash).c_str(), m.psnr, m.ssim, m.psnr - degraded.psnr);
    table += line;
    std::printf("%-5s %-16s %-16s %10.4f %8.4f %8.4f\n", row.group.c_str(), row.name.c_str(), hex(hash).c_str(), m.psnr,
                m.ssim, m.psnr - degraded.psnr);
    std::fflush(stdout);
  }
  write_file(out / "ablation.tsv", table);
  std::printf("degraded %s\n", format_eval(degraded).c_str());
  return 0;
}

int cmd_summary(const Options& o, const std::string& command) {
  const ConfigPtr cfg = config_from(o);
  wamair_model* raw = nullptr;
  check(wamair_model_create(cfg.get(), &raw));
  const ModelPtr model(raw);
  int64_t params = 0, macs = 0;
  check(wamair_model_parameter_count(model.get(), &params));
  check(wamair_model_macs(model.get(), 256, 256, &macs));
  std::printf("parameters=%" PRId64 " macs_256x256=%" PRId64 " gflops_256x256=%.4f\n", params, macs,
              2.0 * static_cast<double>(macs) / 1e9);
  if (!o.out.empty()) {
    const fs::path out = prepare_out(o.out);
    write_echo(out, cfg.get(), command);
    write_file(out / "parameters.txt", read_string(wamair_model_manifest, model.get()));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wamair: wavelet and state-space image restoration kit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(wamair_version()));
  Options o;

  auto* corpus = app.add_subcommand("corpus", "Build a corpus and write its manifest");
  add_common(corpus, o);
  corpus->add_option("--out", o.out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train a model (or resume from --checkpoint)");
  add_common(train, o);
  train->add_option("--out", o.out, "Output directory")->required();
  train->add_option("--checkpoint", o.checkpoint, "Checkpoint to resume from");

  auto* eval = app.add_subcommand("eval", "Print PSNR/SSIM of a checkpoint on a corpus split");
  add_common(eval, o);
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint")->required();
  eval->add_option("--out", o.out, "Directory for the config echo");
  eval->add_option("--split", o.split, "train or val")->capture_default_str();

  auto* restore = app.add_subcommand("restore", "Restore one PPM image");
  restore->add_option("--checkpoint", o.checkpoint, "Checkpoint")->required();
  restore->add_option("--input", o.input, "Input image (binary PPM)")->required();
  restore->add_option("--out", o.out, "Output directory")->required();

  auto* inspect = app.add_subcommand("inspect", "Write LL/LH/HL/HH subband images");
  inspect->add_option("--input", o.input, "Input image (binary PPM)")->required();
  inspect->add_option("--level", o.level, "Decomposition level")->capture_default_str()->check(CLI::PositiveNumber);
  inspect->add_option("--out", o.out, "Output directory")->required();

  auto* ablate = app.add_subcommand("ablate", "Run the architecture and loss ablation grids");
  add_common(ablate, o);
  ablate->add_option("--out", o.out, "Output directory")->required();

  auto* summary = app.add_subcommand("summary", "Parameter count and MACs at 256x256");
  add_common(summary, o);
  summary->add_option("--out", o.out, "Directory for the parameter manifest");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  std::string command;
  for (int i = 0; i < argc; ++i) command += (i ? " " : "") + std::string(argv[i]);

  try {
    if (*corpus) return cmd_corpus(o, command);
    if (*train) return cmd_train(o, command);
    if (*eval) return cmd_eval(o, command);
    if (*restore) return cmd_restore(o, command);
    if (*inspect) return cmd_inspect(o, command);
    if (*ablate) return cmd_ablate(o, command);
    if (*summary) return cmd_summary(o, command);
  } catch (const CliFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.status);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  }
  return 1;
}
