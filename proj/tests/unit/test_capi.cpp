#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "wamair/wamair.h"

namespace {

#define ASSERT_OK(expr) ASSERT_EQ((expr), WAMAIR_OK) << wamair_last_error()

std::string config_text(const wamair_config* cfg) {
  size_t needed = 0;
  EXPECT_EQ(wamair_config_text(cfg, nullptr, 0, &needed), WAMAIR_OK);
  std::string s(needed, '\0');
  EXPECT_EQ(wamair_config_text(cfg, s.data(), s.size(), &needed), WAMAIR_OK);
  s.resize(needed - 1);
  return s;
}

std::filesystem::path temp_dir() {
  const auto d = std::filesystem::temp_directory_path() / "wamair_test_capi";
  std::filesystem::create_directories(d);
  return d;
}

/// Small config shared by the model tests.
wamair_config* tiny_config() {
  wamair_config* cfg = nullptr;
  EXPECT_EQ(wamair_config_create(&cfg), WAMAIR_OK);
  for (const char* a : {"net.channels=4", "corpus.patch=16", "corpus.patches=8", "corpus.val_fraction=0.25",
                        "train.batch=2", "train.steps=6", "train.log_every=2", "seed=7"}) {
    EXPECT_EQ(wamair_config_apply(cfg, a), WAMAIR_OK) << a;
  }
  return cfg;
}

}  // namespace

TEST(CApi, VersionAndEmptyError) {
  EXPECT_STREQ(wamair_version(), "0.1.0");
  wamair_config* cfg = nullptr;
  ASSERT_OK(wamair_config_create(&cfg));
  EXPECT_STREQ(wamair_last_error(), "");
  wamair_config_destroy(cfg);
}

TEST(CApi, NullArgumentsAreInvalid) {
  EXPECT_EQ(wamair_config_create(nullptr), WAMAIR_ERR_INVALID);
  EXPECT_NE(std::string(wamair_last_error()), "");
  EXPECT_EQ(wamair_config_set(nullptr, "a", "b"), WAMAIR_ERR_INVALID);
  int64_t n = 0;
  EXPECT_EQ(wamair_model_parameter_count(nullptr, &n), WAMAIR_ERR_INVALID);
  wamair_config_destroy(nullptr);
  wamair_model_destroy(nullptr);
}

TEST(CApi, ConfigSetTextAndHash) {
  wamair_config* a = nullptr;
  ASSERT_OK(wamair_config_create(&a));
  ASSERT_OK(wamair_config_set(a, "loss.theta", "0.25"));
  EXPECT_NE(config_text(a).find("loss.theta=0.25\n"), std::string::npos);

  wamair_config* b = nullptr;
  ASSERT_OK(wamair_config_clone(a, &b));
  uint64_t ha = 0, hb = 0;
  ASSERT_OK(wamair_config_hash(a, &ha));
  ASSERT_OK(wamair_config_hash(b, &hb));
  EXPECT_EQ(ha, hb);
  ASSERT_OK(wamair_config_apply(b, "train.steps=3"));
  ASSERT_OK(wamair_config_hash(b, &hb));
  EXPECT_NE(ha, hb);

  EXPECT_EQ(wamair_config_set(a, "net.bogus", "1"), WAMAIR_ERR_CONFIG);
  EXPECT_NE(std::string(wamair_last_error()).find("net.bogus"), std::string::npos);
  EXPECT_EQ(wamair_config_apply(a, "no-equals-sign"), WAMAIR_ERR_CONFIG);
  ASSERT_OK(wamair_config_set(a, "corpus.patch", "12"));
  EXPECT_EQ(wamair_config_validate(a), WAMAIR_ERR_CONFIG);
  wamair_config_destroy(a);
  wamair_config_destroy(b);
}

TEST(CApi, TruncatedStringCopyIsTerminated) {
  wamair_config* cfg = nullptr;
  ASSERT_OK(wamair_config_create(&cfg));
  char buf[8];
  size_t needed = 0;
  ASSERT_OK(wamair_config_text(cfg, buf, sizeof buf, &needed));
  EXPECT_GT(needed, sizeof buf);
  EXPECT_EQ(buf[7], '\0');
  EXPECT_EQ(std::string(buf), config_text(cfg).substr(0, 7));
  wamair_config_destroy(cfg);
}

TEST(CApi, ConfigFileThenOverride) {
  const auto path = temp_dir() / "cfg.txt";
  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("# comment\nloss.theta=0.5\ntrain.steps=11\n", f);
    std::fclose(f);
  }
  wamair_config* cfg = nullptr;
  ASSERT_OK(wamair_config_create(&cfg));
  ASSERT_OK(wamair_config_load_file(cfg, path.c_str()));
  ASSERT_OK(wamair_config_apply(cfg, "train.steps=12"));
  const std::string text = config_text(cfg);
  EXPECT_NE(text.find("loss.theta=0.5\n"), std::string::npos);
  EXPECT_NE(text.find("train.steps=12\n"), std::string::npos);
  EXPECT_EQ(wamair_config_load_file(cfg, (temp_dir() / "missing.txt").c_str()), WAMAIR_ERR_IO);
  wamair_config_destroy(cfg);
}

TEST(CApi, DefaultModelSize) {
  wamair_config* cfg = nullptr;
  ASSERT_OK(wamair_config_create(&cfg));
  wamair_model* m = nullptr;
  ASSERT_OK(wamair_model_create(cfg, &m));
  int64_t n = 0, macs = 0, step = -1;
  ASSERT_OK(wamair_model_parameter_count(m, &n));
  EXPECT_EQ(n, 182465);
  ASSERT_OK(wamair_model_macs(m, 256, 256, &macs));
  EXPECT_GT(macs, 0);
  ASSERT_OK(wamair_model_step(m, &step));
  EXPECT_EQ(step, 0);
  EXPECT_EQ(wamair_model_macs(m, 30, 32, &macs), WAMAIR_ERR_INVALID);
  wamair_model_destroy(m);
  wamair_config_destroy(cfg);
}

TEST(CApi, CorpusTrainEvaluateSaveLoad) {
  wamair_config* cfg = tiny_config();
  wamair_corpus* corpus = nullptr;
  ASSERT_OK(wamair_corpus_build(cfg, &corpus));
  int64_t ntrain = 0, nval = 0;
  ASSERT_OK(wamair_corpus_size(corpus, WAMAIR_SPLIT_TRAIN, &ntrain));
  ASSERT_OK(wamair_corpus_size(corpus, WAMAIR_SPLIT_VAL, &nval));
  EXPECT_EQ(ntrain, 6);
  EXPECT_EQ(nval, 2);

  double dpsnr = 0;
  wamair_metrics deg{};
  ASSERT_OK(wamair_corpus_degraded_psnr(corpus, WAMAIR_SPLIT_VAL, &dpsnr));
  ASSERT_OK(wamair_evaluate_degraded(corpus, WAMAIR_SPLIT_VAL, &deg));
  EXPECT_NEAR(deg.psnr, dpsnr, 1e-9);
  EXPECT_EQ(deg.n, 2);

  wamair_model* m = nullptr;
  ASSERT_OK(wamair_model_create(cfg, &m));
  wamair_metrics before{};
  ASSERT_OK(wamair_evaluate(m, corpus, WAMAIR_SPLIT_VAL, &before));
  EXPECT_NEAR(before.psnr, deg.psnr, 1e-9);  // zero-initialized heads

  std::vector<wamair_loss_record> logs;
  const wamair_log_fn sink = [](const wamair_loss_record* r, void* user) {
    static_cast<std::vector<wamair_loss_record>*>(user)->push_back(*r);
  };
  ASSERT_OK(wamair_train(m, corpus, 6, sink, &logs));
  ASSERT_EQ(logs.size(), 4u);  // steps 1, 2, 4, 6
  EXPECT_EQ(logs.front().step, 1);
  EXPECT_EQ(logs.back().step, 6);
  EXPECT_EQ(logs.front().lr, 1e-4);
  for (const auto& r : logs) EXPECT_TRUE(std::isfinite(r.total));
  int64_t step = 0;
  ASSERT_OK(wamair_model_step(m, &step));
  EXPECT_EQ(step, 6);

  const auto path = temp_dir() / "model.wama";
  ASSERT_OK(wamair_model_save(m, path.c_str()));
  wamair_model* loaded = nullptr;
  ASSERT_OK(wamair_model_load(path.c_str(), &loaded));
  ASSERT_OK(wamair_model_step(loaded, &step));
  EXPECT_EQ(step, 6);
  wamair_metrics a{}, b{};
  ASSERT_OK(wamair_evaluate(m, corpus, WAMAIR_SPLIT_VAL, &a));
  ASSERT_OK(wamair_evaluate(loaded, corpus, WAMAIR_SPLIT_VAL, &b));
  EXPECT_EQ(a.psnr, b.psnr);
  EXPECT_EQ(a.ssim, b.ssim);

  wamair_config* echoed = nullptr;
  ASSERT_OK(wamair_model_config(loaded, &echoed));
  EXPECT_EQ(config_text(echoed), config_text(cfg));

  ASSERT_OK(wamair_config_apply(echoed, "train.steps=20"));
  ASSERT_OK(wamair_model_set_config(loaded, echoed));
  ASSERT_OK(wamair_config_apply(echoed, "net.channels=8"));
  EXPECT_EQ(wamair_model_set_config(loaded, echoed), WAMAIR_ERR_CONFIG);

  EXPECT_EQ(wamair_model_load((temp_dir() / "missing.wama").c_str(), &loaded), WAMAIR_ERR_IO);
  wamair_config_destroy(echoed);
  wamair_model_destroy(loaded);
  wamair_model_destroy(m);
  wamair_corpus_destroy(corpus);
  wamair_config_destroy(cfg);
}

TEST(CApi, CorruptCheckpointIsReported) {
  wamair_config* cfg = tiny_config();
  wamair_model* m = nullptr;
  ASSERT_OK(wamair_model_create(cfg, &m));
  const auto path = temp_dir() / "corrupt.wama";
  ASSERT_OK(wamair_model_save(m, path.c_str()));
  {
    std::FILE* f = std::fopen(path.c_str(), "r+b");
    std::fseek(f, -16, SEEK_END);
    const int c = std::fgetc(f);
    std::fseek(f, -16, SEEK_END);
    std::fputc(c ^ 0x40, f);
    std::fclose(f);
  }
  wamair_model* loaded = nullptr;
  EXPECT_EQ(wamair_model_load(path.c_str(), &loaded), WAMAIR_ERR_CHECKPOINT);
  EXPECT_NE(std::string(wamair_last_error()).find("checksum"), std::string::npos);
  wamair_model_destroy(m);
  wamair_config_destroy(cfg);
}

TEST(CApi, ImagesRestoreAndSubbands) {
  const int64_t H = 20, W = 28;
  std::vector<double> px(static_cast<size_t>(3 * H * W));
  for (size_t i = 0; i < px.size(); ++i) px[i] = static_cast<double>(i % 251) / 255.0;
  wamair_image* img = nullptr;
  ASSERT_OK(wamair_image_create(H, W, px.data(), &img));

  wamair_config* cfg = tiny_config();
  wamair_model* m = nullptr;
  ASSERT_OK(wamair_model_create(cfg, &m));
  wamair_image* out = nullptr;
  ASSERT_OK(wamair_restore(m, img, &out));
  int64_t h = 0, w = 0;
  ASSERT_OK(wamair_image_size(out, &h, &w));
  EXPECT_EQ(h, H);
  EXPECT_EQ(w, W);
  std::vector<double> restored(px.size());
  ASSERT_OK(wamair_image_data(out, restored.data(), restored.size()));
  EXPECT_EQ(restored, px);
  EXPECT_EQ(wamair_image_data(out, restored.data(), restored.size() - 1), WAMAIR_ERR_INVALID);

  const auto path = temp_dir() / "img.ppm";
  ASSERT_OK(wamair_image_save(out, path.c_str()));
  wamair_image* reread = nullptr;
  ASSERT_OK(wamair_image_load(path.c_str(), &reread));
  std::vector<double> q(px.size());
  ASSERT_OK(wamair_image_data(reread, q.data(), q.size()));
  for (size_t i = 0; i < q.size(); ++i) ASSERT_NEAR(q[i], px[i], 0.5 / 255 + 1e-12);

  wamair_image* bands[4] = {};
  ASSERT_OK(wamair_subbands(img, 2, bands));
  for (auto* b : bands) {
    ASSERT_OK(wamair_image_size(b, &h, &w));
    EXPECT_EQ(h, H / 4);
    EXPECT_EQ(w, W / 4);
    wamair_image_destroy(b);
  }
  EXPECT_EQ(wamair_subbands(img, 3, bands), WAMAIR_ERR_INVALID);
  EXPECT_EQ(wamair_image_create(0, 4, px.data(), &out), WAMAIR_ERR_INVALID);

  wamair_image_destroy(reread);
  wamair_image_destroy(out);
  wamair_image_destroy(img);
  wamair_model_destroy(m);
  wamair_config_destroy(cfg);
}
