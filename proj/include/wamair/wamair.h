#ifndef WAMAIR_WAMAIR_H
#define WAMAIR_WAMAIR_H

/* C interface to the wamair restoration kit. All handles are opaque; every
 * fallible call returns a wamair_status and, on failure, stores a message
 * retrievable with wamair_last_error() on the same thread. Images are planar
 * RGB doubles in [0,1], laid out [3][H][W]. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define WAMAIR_API __declspec(dllexport)
#else
#define WAMAIR_API __attribute__((visibility("default")))
#endif

typedef enum wamair_status {
  WAMAIR_OK = 0,
  WAMAIR_ERR_CONFIG = 1,     /* invalid configuration value or key */
  WAMAIR_ERR_IO = 2,         /* file missing, unreadable or malformed */
  WAMAIR_ERR_NAN = 3,        /* training produced a non-finite loss */
  WAMAIR_ERR_CHECKPOINT = 4, /* checkpoint corrupt, wrong version or incompatible */
  WAMAIR_ERR_INVALID = 5,    /* bad argument: null handle, shape mismatch, ... */
  WAMAIR_ERR_INTERNAL = 6
} wamair_status;

typedef enum wamair_split { WAMAIR_SPLIT_TRAIN = 0, WAMAIR_SPLIT_VAL = 1 } wamair_split;

typedef struct wamair_config wamair_config;
typedef struct wamair_corpus wamair_corpus;
typedef struct wamair_model wamair_model;
typedef struct wamair_image wamair_image;

typedef struct wamair_metrics {
  double psnr; /* mean dB; +inf when every prediction is exact */
  double ssim;
  int64_t n;
} wamair_metrics;

typedef struct wamair_loss_record {
  int64_t step;
  double spatial;
  double frequency;
  double wavelet;
  double total;
  double lr;
} wamair_loss_record;

typedef void (*wamair_log_fn)(const wamair_loss_record* record, void* user);

/* Message of the last failure on this thread; empty when none. */
WAMAIR_API const char* wamair_last_error(void);
WAMAIR_API const char* wamair_version(void);

/* Strings are returned through caller buffers: `needed` receives the full
 * length plus the terminator; the copy is truncated to `capacity`. Pass a
 * null buffer to query the size. */

/* ---- configuration ------------------------------------------------------ */

WAMAIR_API wamair_status wamair_config_create(wamair_config** out);
WAMAIR_API void wamair_config_destroy(wamair_config* cfg);
WAMAIR_API wamair_status wamair_config_clone(const wamair_config* cfg, wamair_config** out);
/* Applies key=value lines from a file; `#` starts a comment. */
WAMAIR_API wamair_status wamair_config_load_file(wamair_config* cfg, const char* path);
WAMAIR_API wamair_status wamair_config_set(wamair_config* cfg, const char* key, const char* value);
/* Applies one "key=value" assignment. */
WAMAIR_API wamair_status wamair_config_apply(wamair_config* cfg, const char* assignment);
WAMAIR_API wamair_status wamair_config_validate(const wamair_config* cfg);
/* Every key, one "key=value" per line, in a fixed order. */
WAMAIR_API wamair_status wamair_config_text(const wamair_config* cfg, char* buffer, size_t capacity, size_t* needed);
WAMAIR_API wamair_status wamair_config_hash(const wamair_config* cfg, uint64_t* out);

/* ---- corpus ------------------------------------------------------------- */

WAMAIR_API wamair_status wamair_corpus_build(const wamair_config* cfg, wamair_corpus** out);
WAMAIR_API void wamair_corpus_destroy(wamair_corpus* corpus);
WAMAIR_API wamair_status wamair_corpus_size(const wamair_corpus* corpus, wamair_split split, int64_t* out);
/* Mean PSNR of the degraded inputs against the clean images. */
WAMAIR_API wamair_status wamair_corpus_degraded_psnr(const wamair_corpus* corpus, wamair_split split, double* out);
WAMAIR_API wamair_status wamair_corpus_hash(const wamair_corpus* corpus, uint64_t* out);
/* Lines "path, kind, seed, split". */
WAMAIR_API wamair_status wamair_corpus_manifest(const wamair_corpus* corpus, char* buffer, size_t capacity,
                                                size_t* needed);
WAMAIR_API wamair_status wamair_evaluate_degraded(const wamair_corpus* corpus, wamair_split split,
                                                  wamair_metrics* out);

/* ---- model (network, optimizer state and its configuration) ------------ */

/* Fresh network initialized from the config's seed. */
WAMAIR_API wamair_status wamair_model_create(const wamair_config* cfg, wamair_model** out);
WAMAIR_API wamair_status wamair_model_load(const char* path, wamair_model** out);
WAMAIR_API wamair_status wamair_model_save(const wamair_model* model, const char* path);
WAMAIR_API void wamair_model_destroy(wamair_model* model);
/* Copy of the configuration stored with the model. */
WAMAIR_API wamair_status wamair_model_config(const wamair_model* model, wamair_config** out);
/* Replaces training settings (schedule, loss weights, corpus) but not the
 * architecture; fails when the network keys differ. */
WAMAIR_API wamair_status wamair_model_set_config(wamair_model* model, const wamair_config* cfg);
WAMAIR_API wamair_status wamair_model_step(const wamair_model* model, int64_t* out);
WAMAIR_API wamair_status wamair_model_parameter_count(const wamair_model* model, int64_t* out);
/* Multiply-accumulates of one forward pass at height x width, batch 1. */
WAMAIR_API wamair_status wamair_model_macs(const wamair_model* model, int64_t height, int64_t width, int64_t* out);
/* Lines "name [d0,d1,...]". */
WAMAIR_API wamair_status wamair_model_manifest(const wamair_model* model, char* buffer, size_t capacity,
                                               size_t* needed);

/* Runs `steps` optimizer steps from the model's current step. `log` (may be
 * null) receives step 1, every train.log_every steps and the last step. */
WAMAIR_API wamair_status wamair_train(wamair_model* model, const wamair_corpus* corpus, int64_t steps,
                                      wamair_log_fn log, void* user);
WAMAIR_API wamair_status wamair_evaluate(const wamair_model* model, const wamair_corpus* corpus,
                                         wamair_split split, wamair_metrics* out);

/* ---- images ------------------------------------------------------------- */

WAMAIR_API wamair_status wamair_image_create(int64_t height, int64_t width, const double* data, wamair_image** out);
WAMAIR_API wamair_status wamair_image_load(const char* path, wamair_image** out);
/* Binary PPM; values are clamped and quantized to 8 bits. */
WAMAIR_API wamair_status wamair_image_save(const wamair_image* image, const char* path);
WAMAIR_API void wamair_image_destroy(wamair_image* image);
WAMAIR_API wamair_status wamair_image_size(const wamair_image* image, int64_t* height, int64_t* width);
/* Copies 3*H*W values into `out`. */
WAMAIR_API wamair_status wamair_image_data(const wamair_image* image, double* out, size_t count);

/* Full-resolution output of the model for one image. */
WAMAIR_API wamair_status wamair_restore(const wamair_model* model, const wamair_image* input, wamair_image** out);
/* Display images of the Haar subbands at `level`, ordered LL, LH, HL, HH;
 * detail bands map 0 to 0.5. */
WAMAIR_API wamair_status wamair_subbands(const wamair_image* input, int level, wamair_image* out[4]);

#ifdef __cplusplus
}
#endif

#endif
