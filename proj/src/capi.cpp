#include <algorithm>
#include <cstring>
#include <new>
#include <sstream>
#include <string>

#include "wamair/data.hpp"
#include "wamair/inference.hpp"
#include "wamair/train.hpp"
#include "wamair/wamair.h"

using namespace wama;

struct wamair_config {
  train::TrainConfig cfg;
};

struct wamair_corpus {
  data::Corpus corpus;
};

struct wamair_model {
  train::TrainConfig cfg;
  nn::RestorationNet net;
  train::TrainState state;
};

struct wamair_image {
  Tensor pixels;  // [3,H,W]
};

namespace {

thread_local std::string g_last_error;

wamair_status fail(wamair_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <class F>
wamair_status guarded(F&& f) {
  try {
    g_last_error.clear();
    f();
    return WAMAIR_OK;
  } catch (const train::NanLossError& e) {
    return fail(WAMAIR_ERR_NAN, e.what());
  } catch (const train::CheckpointError& e) {
    return fail(WAMAIR_ERR_CHECKPOINT, e.what());
  } catch (const data::IoError& e) {
    return fail(WAMAIR_ERR_IO, e.what());
  } catch (const ConfigError& e) {
    return fail(WAMAIR_ERR_CONFIG, e.what());
  } catch (const TensorError& e) {
    return fail(WAMAIR_ERR_INVALID, e.what());
  } catch (const std::bad_alloc&) {
    return fail(WAMAIR_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(WAMAIR_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(WAMAIR_ERR_INTERNAL, "unknown error");
  }
}

template <class... Ps>
bool any_null(const Ps*... ps) {
  return ((ps == nullptr) || ...);
}

#define WAMAIR_REQUIRE(...) \
  if (any_null(__VA_ARGS__)) return fail(WAMAIR_ERR_INVALID, std::string(__func__) + ": null argument")

wamair_status copy_string(const std::string& s, char* buffer, size_t capacity, size_t* needed) {
  if (needed) *needed = s.size() + 1;
  if (buffer && capacity > 0) {
    const size_t n = std::min(capacity - 1, s.size());
    std::memcpy(buffer, s.data(), n);
    buffer[n] = '\0';
  }
  return WAMAIR_OK;
}

data::Split to_split(wamair_split s) {
  if (s == WAMAIR_SPLIT_TRAIN) return data::Split::train;
  if (s == WAMAIR_SPLIT_VAL) return data::Split::val;
  throw TensorError("unknown split " + std::to_string(static_cast<int>(s)));
}

void put_metrics(const train::EvalResult& r, wamair_metrics* out) {
  out->psnr = r.psnr;
  out->ssim = r.ssim;
  out->n = r.n;
}

std::string net_keys(const train::TrainConfig& cfg) {
  std::string out, line;
  std::istringstream in(cfg.to_text());
  while (std::getline(in, line))
    if (line.rfind("net.", 0) == 0) out += line + "\n";
  return out;
}

}  // namespace

extern "C" {

const char* wamair_last_error(void) { return g_last_error.c_str(); }

const char* wamair_version(void) { return WAMAIR_VERSION_STRING; }

// ---- configuration ----------------------------------------------------------

wamair_status wamair_config_create(wamair_config** out) {
  WAMAIR_REQUIRE(out);
  return guarded([&] { *out = new wamair_config{}; });
}

void wamair_config_destroy(wamair_config* cfg) { delete cfg; }

wamair_status wamair_config_clone(const wamair_config* cfg, wamair_config** out) {
  WAMAIR_REQUIRE(cfg, out);
  return guarded([&] { *out = new wamair_config{*cfg}; });
}

wamair_status wamair_config_load_file(wamair_config* cfg, const char* path) {
  WAMAIR_REQUIRE(cfg, path);
  return guarded([&] { cfg->cfg.apply_file(path); });
}

wamair_status wamair_config_set(wamair_config* cfg, const char* key, const char* value) {
  WAMAIR_REQUIRE(cfg, key, value);
  return guarded([&] { cfg->cfg.set(key, value); });
}

wamair_status wamair_config_apply(wamair_config* cfg, const char* assignment) {
  WAMAIR_REQUIRE(cfg, assignment);
  return guarded([&] { cfg->cfg.apply_override(assignment); });
}

wamair_status wamair_config_validate(const wamair_config* cfg) {
  WAMAIR_REQUIRE(cfg);
  return guarded([&] { cfg->cfg.validate(); });
}

wamair_status wamair_config_text(const wamair_config* cfg, char* buffer, size_t capacity, size_t* needed) {
  WAMAIR_REQUIRE(cfg);
  return guarded([&] { copy_string(cfg->cfg.to_text(), buffer, capacity, needed); });
}

wamair_status wamair_config_hash(const wamair_config* cfg, uint64_t* out) {
  WAMAIR_REQUIRE(cfg, out);
  return guarded([&] { *out = cfg->cfg.hash(); });
}

// ---- corpus -----------------------------------------------------------------

wamair_status wamair_corpus_build(const wamair_config* cfg, wamair_corpus** out) {
  WAMAIR_REQUIRE(cfg, out);
  return guarded([&] { *out = new wamair_corpus{data::build_corpus(cfg->cfg.corpus)}; });
}

void wamair_corpus_destroy(wamair_corpus* corpus) { delete corpus; }

wamair_status wamair_corpus_size(const wamair_corpus* corpus, wamair_split split, int64_t* out) {
  WAMAIR_REQUIRE(corpus, out);
  return guarded([&] {
    const auto& c = corpus->corpus;
    *out = static_cast<int64_t>((to_split(split) == data::Split::train ? c.train : c.val).size());
  });
}

wamair_status wamair_corpus_degraded_psnr(const wamair_corpus* corpus, wamair_split split, double* out) {
  WAMAIR_REQUIRE(corpus, out);
  return guarded([&] {
    const auto& c = corpus->corpus;
    *out = to_split(split) == data::Split::train ? c.degraded_psnr_train : c.degraded_psnr_val;
  });
}

wamair_status wamair_corpus_hash(const wamair_corpus* corpus, uint64_t* out) {
  WAMAIR_REQUIRE(corpus, out);
  return guarded([&] { *out = corpus->corpus.manifest_hash(); });
}

wamair_status wamair_corpus_manifest(const wamair_corpus* corpus, char* buffer, size_t capacity, size_t* needed) {
  WAMAIR_REQUIRE(corpus);
  return guarded([&] { copy_string(corpus->corpus.manifest(), buffer, capacity, needed); });
}

wamair_status wamair_evaluate_degraded(const wamair_corpus* corpus, wamair_split split, wamair_metrics* out) {
  WAMAIR_REQUIRE(corpus, out);
  return guarded([&] { put_metrics(train::evaluate_degraded(corpus->corpus, to_split(split)), out); });
}

// ---- model ------------------------------------------------------------------

wamair_status wamair_model_create(const wamair_config* cfg, wamair_model** out) {
  WAMAIR_REQUIRE(cfg, out);
  return guarded([&] {
    cfg->cfg.validate();
    *out = new wamair_model{cfg->cfg, nn::build(cfg->cfg.net, cfg->cfg.seed), {}};
  });
}

wamair_status wamair_model_load(const char* path, wamair_model** out) {
  WAMAIR_REQUIRE(path, out);
  return guarded([&] {
    train::Checkpoint ck = train::load_checkpoint(path);
    *out = new wamair_model{std::move(ck.cfg), std::move(ck.net), std::move(ck.state)};
  });
}

wamair_status wamair_model_save(const wamair_model* model, const char* path) {
  WAMAIR_REQUIRE(model, path);
  return guarded([&] { train::save_checkpoint(path, model->cfg, model->net, model->state); });
}

void wamair_model_destroy(wamair_model* model) { delete model; }

wamair_status wamair_model_config(const wamair_model* model, wamair_config** out) {
  WAMAIR_REQUIRE(model, out);
  return guarded([&] { *out = new wamair_config{model->cfg}; });
}

wamair_status wamair_model_set_config(wamair_model* model, const wamair_config* cfg) {
  WAMAIR_REQUIRE(model, cfg);
  return guarded([&] {
    cfg->cfg.validate();
    if (net_keys(cfg->cfg) != net_keys(model->cfg)) {
      throw ConfigError("network settings (net.*) cannot change for an existing model");
    }
    const uint64_t seed = model->cfg.seed;
    model->cfg = cfg->cfg;
    model->cfg.seed = seed;  // the stored seed reproduces the initial weights
  });
}

wamair_status wamair_model_step(const wamair_model* model, int64_t* out) {
  WAMAIR_REQUIRE(model, out);
  *out = model->state.step;
  return WAMAIR_OK;
}

wamair_status wamair_model_parameter_count(const wamair_model* model, int64_t* out) {
  WAMAIR_REQUIRE(model, out);
  return guarded([&] { *out = nn::parameter_count(model->net); });
}

wamair_status wamair_model_macs(const wamair_model* model, int64_t height, int64_t width, int64_t* out) {
  WAMAIR_REQUIRE(model, out);
  return guarded([&] { *out = nn::estimate_macs(model->net, height, width); });
}

wamair_status wamair_model_manifest(const wamair_model* model, char* buffer, size_t capacity, size_t* needed) {
  WAMAIR_REQUIRE(model);
  return guarded([&] {
    std::string s;
    for (const auto& e : nn::manifest(model->net)) s += e.name + " " + shape_str(e.shape) + "\n";
    copy_string(s, buffer, capacity, needed);
  });
}

wamair_status wamair_train(wamair_model* model, const wamair_corpus* corpus, int64_t steps, wamair_log_fn log,
                           void* user) {
  WAMAIR_REQUIRE(model, corpus);
  return guarded([&] {
    train::LogSink sink;
    if (log) {
      sink = [&](const train::StepLog& l) {
        const wamair_loss_record rec{l.step, l.report.spatial, l.report.frequency, l.report.wavelet,
                                     l.report.total, l.lr};
        log(&rec, user);
      };
    }
    train::train(model->cfg, corpus->corpus, model->net, model->state, steps, sink);
  });
}

wamair_status wamair_evaluate(const wamair_model* model, const wamair_corpus* corpus, wamair_split split,
                              wamair_metrics* out) {
  WAMAIR_REQUIRE(model, corpus, out);
  return guarded([&] {
    put_metrics(train::evaluate(model->net, corpus->corpus, to_split(split), model->cfg.batch), out);
  });
}

// ---- images -----------------------------------------------------------------

wamair_status wamair_image_create(int64_t height, int64_t width, const double* values, wamair_image** out) {
  WAMAIR_REQUIRE(values, out);
  return guarded([&] {
    if (height < 1 || width < 1) throw TensorError("image size must be positive");
    const auto n = static_cast<size_t>(3 * height * width);
    std::vector<Real> v(n);
    for (size_t i = 0; i < n; ++i) v[i] = static_cast<Real>(values[i]);
    *out = new wamair_image{Tensor({3, height, width}, std::move(v))};
  });
}

wamair_status wamair_image_load(const char* path, wamair_image** out) {
  WAMAIR_REQUIRE(path, out);
  return guarded([&] { *out = new wamair_image{data::load_image(path)}; });
}

wamair_status wamair_image_save(const wamair_image* image, const char* path) {
  WAMAIR_REQUIRE(image, path);
  return guarded([&] { data::save_image(image->pixels, path); });
}

void wamair_image_destroy(wamair_image* image) { delete image; }

wamair_status wamair_image_size(const wamair_image* image, int64_t* height, int64_t* width) {
  WAMAIR_REQUIRE(image, height, width);
  *height = image->pixels.dim(1);
  *width = image->pixels.dim(2);
  return WAMAIR_OK;
}

wamair_status wamair_image_data(const wamair_image* image, double* out, size_t count) {
  WAMAIR_REQUIRE(image, out);
  return guarded([&] {
    if (count != static_cast<size_t>(image->pixels.numel())) {
      throw TensorError("image has " + std::to_string(image->pixels.numel()) + " values, buffer holds " +
                        std::to_string(count));
    }
    for (size_t i = 0; i < count; ++i) out[i] = static_cast<double>(image->pixels.ptr()[i]);
  });
}

wamair_status wamair_restore(const wamair_model* model, const wamair_image* input, wamair_image** out) {
  WAMAIR_REQUIRE(model, input, out);
  return guarded([&] { *out = new wamair_image{infer::restore_image(model->net, input->pixels)}; });
}

wamair_status wamair_subbands(const wamair_image* input, int level, wamair_image* out[4]) {
  WAMAIR_REQUIRE(input, out);
  return guarded([&] {
    const auto bands = infer::subband_images(input->pixels, level);
    for (size_t b = 0; b < 4; ++b) out[b] = new wamair_image{bands[b]};
  });
}

}  // extern "C"
