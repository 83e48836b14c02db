#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "support/oracles.hpp"
#include "wamair/train.hpp"

using namespace wama;
using namespace wama::testing;
using namespace wama::train;

namespace {

/// Holds one named tensor, visitable like a model.
struct Single {
  Tensor w;
  void visit(const std::string& prefix, const ParamVisitor& f) { f(join_name(prefix, "w"), w); }
};

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.net.channels = 4;
  cfg.net.blocks = 1;
  cfg.corpus.patch = 16;
  cfg.corpus.patches = 8;
  cfg.corpus.val_fraction = 0.25;
  cfg.corpus.seed = 3;
  cfg.batch = 2;
  cfg.steps = 10;
  cfg.log_every = 2;
  cfg.seed = 5;
  return cfg;
}

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "wamair_test_train";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

GradMap gradients_of(nn::RestorationNet& net, const data::Batch& b, const loss::LossWeights& w) {
  Tape tape;
  nn::RestorationNet live = watched(net, tape);
  const auto out = nn::forward(live, b.degraded);
  const auto l = loss::mte_loss({out.full, out.half, out.quarter}, target_pyramid(b.clean), w);
  const Gradients g = tape.backward(l.total);
  GradMap grads;
  live.visit("", [&](const std::string& name, Tensor& t) {
    if (g.has(t)) grads.emplace(name, g.of(t));
  });
  return grads;
}

}  // namespace

// ---------------------------------------------------------------------------
// Schedule

TEST(CosineLr, Endpoints) {
  EXPECT_EQ(cosine_lr(0, 2000), 1e-4);
  EXPECT_EQ(cosine_lr(2000, 2000), 1e-6);
  EXPECT_EQ(cosine_lr(0, 7, 3e-3, 2e-5), 3e-3);
  EXPECT_EQ(cosine_lr(7, 7, 3e-3, 2e-5), 2e-5);
}

TEST(CosineLr, Midpoint) { EXPECT_NEAR(cosine_lr(1000, 2000), 5.05e-5, 1e-18); }

TEST(CosineLr, MatchesFormulaAndIsMonotone) {
  double prev = cosine_lr(0, 500);
  for (int64_t s = 1; s <= 500; ++s) {
    const double lr = cosine_lr(s, 500);
    const double expected = 1e-6 + 0.5 * (1e-4 - 1e-6) * (1 + std::cos(std::numbers::pi * double(s) / 500.0));
    EXPECT_NEAR(lr, expected, 1e-18) << s;
    EXPECT_LE(lr, prev) << s;
    prev = lr;
  }
}

TEST(CosineLr, ClampsPastTotal) {
  EXPECT_EQ(cosine_lr(2001, 2000), 1e-6);
  EXPECT_EQ(cosine_lr(99999, 10), 1e-6);
  EXPECT_THROW(cosine_lr(-1, 10), ConfigError);
}

// ---------------------------------------------------------------------------
// Adam

TEST(Adam, ZeroGradsLeaveParamsAndMoments) {
  Rng rng(1);
  Single p{random_tensor({4, 3}, rng)};
  const auto before = values(p.w);
  AdamState st;
  for (int i = 0; i < 3; ++i) adam_step(param_refs(p), {{"w", Tensor::zeros({4, 3})}}, st, 1e-3);
  EXPECT_EQ(values(p.w), before);
  EXPECT_EQ(st.t, 3);
  EXPECT_EQ(max_abs(st.m.at("w")), 0);
  EXPECT_EQ(max_abs(st.v.at("w")), 0);
}

TEST(Adam, FirstStepOnUnitGradient) {
  Single p{Tensor::scalar(2)};
  AdamState st;
  adam_step(param_refs(p), {{"w", Tensor::scalar(1)}}, st, 1e-4);
  // m_hat = v_hat = 1, so the step is -lr / (1 + eps).
  EXPECT_NEAR(p.w.item() - 2, -1e-4, 2e-12);
  EXPECT_EQ(p.w.item(), 2 - 1e-4 / (1 + 1e-8));
}

TEST(Adam, MatchesHandRolledRecurrence) {
  Rng rng(2);
  Single p{random_tensor({5}, rng)};
  const auto init = values(p.w);
  std::vector<double> w(init.begin(), init.end()), m(5, 0), v(5, 0);
  AdamState st;
  for (int t = 1; t <= 4; ++t) {
    const Tensor g = random_tensor({5}, rng);
    const double lr = 1e-2 / t;
    adam_step(param_refs(p), {{"w", g}}, st, lr);
    for (size_t i = 0; i < 5; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g.ptr()[i];
      v[i] = 0.999 * v[i] + 0.001 * g.ptr()[i] * g.ptr()[i];
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      w[i] -= lr * mh / (std::sqrt(vh) + 1e-8);
    }
    for (size_t i = 0; i < 5; ++i) EXPECT_NEAR(p.w.ptr()[i], w[i], 1e-15) << t;
  }
}

TEST(Adam, TwoHalfStepsDifferFromOneFullStep) {
  // Splitting a gradient over two updates does not reproduce one update:
  // the normalized step moves lr per update regardless of gradient scale.
  Single a{Tensor::scalar(1)}, b{Tensor::scalar(1)};
  AdamState sa, sb;
  adam_step(param_refs(a), {{"w", Tensor::scalar(Real(0.6))}}, sa, 1e-2);
  adam_step(param_refs(b), {{"w", Tensor::scalar(Real(0.3))}}, sb, 1e-2);
  adam_step(param_refs(b), {{"w", Tensor::scalar(Real(0.3))}}, sb, 1e-2);
  EXPECT_NEAR(a.w.item(), 1 - 1e-2, 1e-9);
  EXPECT_NEAR(b.w.item(), 1 - 2e-2, 1e-9);
  EXPECT_EQ(sa.t, 1);
  EXPECT_EQ(sb.t, 2);
}

TEST(Adam, StateChangesTheNextUpdate) {
  Single fresh{Tensor::scalar(1)}, warm{Tensor::scalar(1)};
  AdamState sf, sw;
  adam_step(param_refs(warm), {{"w", Tensor::scalar(Real(2))}}, sw, 1e-2);
  const Real before = warm.w.item();
  adam_step(param_refs(warm), {{"w", Tensor::scalar(Real(-1))}}, sw, 1e-2);
  adam_step(param_refs(fresh), {{"w", Tensor::scalar(Real(-1))}}, sf, 1e-2);
  EXPECT_NE(warm.w.item() - before, fresh.w.item() - 1);
}

TEST(Adam, MissingGradientsAreListed) {
  nn::NetConfig cfg;
  cfg.channels = 4;
  nn::RestorationNet net = nn::build(cfg, 1);
  const auto refs = param_refs(net);
  GradMap grads;
  for (size_t i = 2; i < refs.size(); ++i) grads.emplace(refs[i].name, Tensor::zeros(refs[i].value->shape()));
  AdamState st;
  try {
    adam_step(refs, grads, st, 1e-3);
    FAIL() << "missing gradients accepted";
  } catch (const TensorError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(refs[0].name), std::string::npos) << msg;
    EXPECT_NE(msg.find(refs[1].name), std::string::npos) << msg;
    EXPECT_EQ(msg.find(refs[2].name), std::string::npos) << msg;
  }
  EXPECT_EQ(st.t, 0);
}

TEST(Adam, UpdateDoesNotAliasEarlierCopies) {
  Single a{Tensor::full({3}, 1)};
  const Single copy = a;
  AdamState st;
  adam_step(param_refs(a), {{"w", Tensor::ones({3})}}, st, 0.1);
  EXPECT_EQ(values(copy.w), (std::vector<Real>{1, 1, 1}));
  EXPECT_NE(values(a.w), values(copy.w));
}

TEST(ClipGradNorm, ScalesToMaxNorm) {
  GradMap g{{"a", Tensor({2}, {3, 0})}, {"b", Tensor({1}, {4})}};
  EXPECT_DOUBLE_EQ(clip_grad_norm(g, 10), 5);
  EXPECT_EQ(g.at("b").item(), 4);
  EXPECT_DOUBLE_EQ(clip_grad_norm(g, 1), 5);
  EXPECT_NEAR(g.at("a").ptr()[0], 0.6, 1e-15);
  EXPECT_NEAR(g.at("b").item(), 0.8, 1e-15);
}

// ---------------------------------------------------------------------------
// Configuration

TEST(TrainConfigText, RoundTrip) {
  TrainConfig cfg = tiny_config();
  cfg.loss.theta = Real(0.3);
  cfg.net.use_mcam = false;
  cfg.corpus.kind = data::Degradation::haze;
  cfg.grad_clip = 0.5;
  TrainConfig back;
  back.apply_text(cfg.to_text());
  EXPECT_EQ(back.to_text(), cfg.to_text());
  EXPECT_EQ(back.hash(), cfg.hash());
  EXPECT_NE(TrainConfig{}.hash(), cfg.hash());
}

TEST(TrainConfigText, OverridesAndSeed) {
  TrainConfig cfg;
  cfg.apply_text("# comment\nnet.channels = 12\nloss.use_wavelet=off  # trailing\n\n");
  cfg.apply_override("net.channels=6");
  cfg.apply_override("seed=42");
  EXPECT_EQ(cfg.net.channels, 6);
  EXPECT_FALSE(cfg.loss.use_wavelet);
  EXPECT_EQ(cfg.seed, 42u);
  EXPECT_EQ(cfg.corpus.seed, 42u);
}

TEST(TrainConfigText, Errors) {
  TrainConfig cfg;
  EXPECT_THROW(cfg.apply_override("net.widgets=3"), ConfigError);
  EXPECT_THROW(cfg.apply_override("net.use_mcam=maybe"), ConfigError);
  EXPECT_THROW(cfg.apply_override("train.steps"), ConfigError);
  EXPECT_THROW(cfg.apply_override("train.lr_max=fast"), ConfigError);
  try {
    cfg.apply_text("net.channels=8\nbogus\n", "run.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("run.cfg:2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(cfg.apply_file("/nonexistent/run.cfg"), data::IoError);
}

TEST(TrainConfigText, ValidateChecksPatchDivisibility) {
  TrainConfig cfg = tiny_config();
  EXPECT_NO_THROW(cfg.validate());
  cfg.corpus.patch = 8;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.net.wtconv_levels = 3;  // needs multiples of 32
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.lr_min = 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

// ---------------------------------------------------------------------------
// Training loop

TEST(TrainLoop, FirstStepLossEqualsStandaloneLoss) {
  const TrainConfig cfg = tiny_config();
  const data::Corpus corpus = data::build_corpus(cfg.corpus);
  nn::RestorationNet net = nn::build(cfg.net, cfg.seed);
  TrainState st;
  const TrainResult r = wama::train::train(cfg, corpus, net, st, 1);
  ASSERT_TRUE(r.first.has_value());

  const data::Batch b = data::BatchStream(corpus, cfg.batch).at_step(0);
  const auto l = loss::mte_loss(nn::image_pyramid(b.degraded), target_pyramid(b.clean), cfg.loss);
  EXPECT_EQ(r.first->total, l.report.total);
  EXPECT_EQ(r.first->spatial, l.report.spatial);
  EXPECT_EQ(r.first->frequency, l.report.frequency);
  EXPECT_EQ(r.first->wavelet, l.report.wavelet);
  EXPECT_GT(r.first->total, 0);
  EXPECT_EQ(st.step, 1);
  EXPECT_EQ(st.adam.t, 1);
}

TEST(TrainLoop, TargetPyramidUsesBilinearHalving) {
  Rng rng(3);
  const Tensor img = random_tensor({2, 3, 16, 16}, rng, 0, 1);
  const auto t = target_pyramid(img);
  EXPECT_EQ(values(t[1]), values(resize(img, ResizeMode::down2_bilinear)));
  EXPECT_EQ(values(t[2]), values(resize(t[1], ResizeMode::down2_bilinear)));
}

TEST(TrainLoop, EveryParameterGetsGradientAfterFirstStep) {
  const TrainConfig cfg = tiny_config();
  const data::Corpus corpus = data::build_corpus(cfg.corpus);
  nn::RestorationNet net = nn::build(cfg.net, cfg.seed);
  TrainState st;
  wama::train::train(cfg, corpus, net, st, 1);
  const GradMap g = gradients_of(net, data::BatchStream(corpus, cfg.batch).at_step(1), cfg.loss);
  for (const auto& p : param_refs(net)) {
    ASSERT_TRUE(g.count(p.name)) << p.name;
    EXPECT_GT(max_abs(g.at(p.name)), 0) << p.name;
  }
}

TEST(TrainLoop, LossDecreasesOnFixedBatch) {
  TrainConfig cfg = tiny_config();
  cfg.corpus.patches = 2;
  cfg.corpus.val_fraction = 0;  // one batch, seen every step
  cfg.lr_max = cfg.lr_min = 2e-3;
  cfg.steps = 40;
  const data::Corpus corpus = data::build_corpus(cfg.corpus);
  nn::RestorationNet net = nn::build(cfg.net, cfg.seed);
  TrainState st;
  const TrainResult r = wama::train::train(cfg, corpus, net, st, 40);
  EXPECT_LT(r.last->total, r.first->total);
}

TEST(TrainLoop, NoiseCorpusLossHalvesInTwoHundredSteps) {
  TrainConfig cfg;  // C=8, n=1, 64x64 noise corpus, default schedule
  cfg.steps = 200;
  const data::Corpus corpus = data::build_corpus(cfg.corpus);
  nn::RestorationNet net = nn::build(cfg.net, cfg.seed);
  TrainState st;
  const TrainResult r = wama::train::train(cfg, corpus, net, st, 200);
  EXPECT_LE(r.last->total, 0.5 * r.first->total) << "step 1 " << r.first->total << ", step 200 " << r.last->total;
}

TEST(TrainLoop, LogsAtFirstEveryKAndLast) {
  const TrainConfig cfg = tiny_config();
  const data::Corpus corpus = data::build_corpus(cfg.corpus);
  nn::RestorationNet net = nn::build(cfg.net, cfg.seed);
  TrainState st;
  std::vector<std::string> lines;
  const TrainResult r = wama::train::train(cfg, corpus, net, st, 5, [&](const StepLog& l) { lines.push_back(format_log(l)); });
  std::vector<int64_t> steps;
  for (const auto& l : r.logs) steps.push_back(l.step);
  EXPECT_EQ(steps, (std::vector<int64_t>{1, 2, 4, 5}));
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0].rfind("step=1 spatial=", 0), 0u) << lines[0];
  for (const char* field : {" frequency=", " wavelet=", " total=", " lr=0.0001"}) {
    EXPECT_NE(lines[0].find(field), std::string::npos) << lines[0];
  }
  EXPECT_EQ(r.logs[0].lr, 1e-4);
  EXPECT_EQ(r.logs[1].lr, cosine_lr(1, cfg.steps));
}

TEST(TrainLoop, NanLossAbortsWithStepAndLastReport) {
  const TrainConfig cfg = tiny_config();
  data::Corpus corpus = data::build_corpus(cfg.corpus);
  const data::BatchStream stream(corpus, cfg.batch);
  for (auto i : stream.at_step(1).indices) {
    corpus.samples[static_cast<size_t>(i)].degraded.mutable_data()[5] = std::nan("");
  }
  nn::RestorationNet net = nn::build(cfg.net, cfg.seed);
  TrainState st;
  try {
    wama::train::train(cfg, corpus, net, st, 3);
    FAIL() << "NaN loss not reported";
  } catch (const NanLossError& e) {
    EXPECT_EQ(e.step, 2);
    ASSERT_TRUE(e.last_finite.has_value());
    EXPECT_TRUE(std::isfinite(e.last_finite->total));
    EXPECT_NE(std::string(e.what()).find("step 2"), std::string::npos);
  }
  EXPECT_EQ(st.step, 1);
}

TEST(TrainLoop, RejectsIncompatiblePatch) {
  TrainConfig cfg = tiny_config();
  cfg.corpus.patch = 8;
  cfg.corpus.patches = 4;
  data::CorpusSpec spec = cfg.corpus;
  const data::Corpus corpus = data::build_corpus(spec);
  nn::RestorationNet net = nn::build(cfg.net, cfg.seed);
  TrainState st;
  EXPECT_THROW(wama::train::train(cfg, corpus, net, st, 1), ConfigError);
}

// ---------------------------------------------------------------------------
// Evaluation

TEST(Evaluate, IdenticalPairsGiveInfinityAndOne) {
  TrainConfig cfg = tiny_config();
  cfg.corpus.strength_min = cfg.corpus.strength_max = 0;
  const data::Corpus corpus = data::build_corpus(cfg.corpus);
  const nn::RestorationNet net = nn::build(cfg.net, cfg.seed);  // zero heads: identity
  const EvalResult r = evaluate(net, corpus, data::Split::val);
  EXPECT_EQ(r.psnr, loss::kPsnrInfinity);
  EXPECT_NEAR(r.ssim, 1, 1e-12);
  EXPECT_EQ(r.n, 2);
  EXPECT_EQ(format_eval(r), "psnr=inf ssim=1.000000 n=2");
}

TEST(Evaluate, KnownOffset) {
  const Tensor t = Tensor::full({2, 3, 16, 16}, Real(0.5));
  const Tensor p = Tensor::full({2, 3, 16, 16}, Real(0.6));
  const EvalResult r = evaluate_pairs(p, t);
  EXPECT_NEAR(r.psnr, 20.0, 1e-9);
  EXPECT_EQ(r.n, 2);
  EXPECT_EQ(format_eval(r).rfind("psnr=20.000000 ssim=", 0), 0u);
}

TEST(Evaluate, ClampsPredictions) {
  const Tensor t = Tensor::full({1, 3, 16, 16}, 1);
  const Tensor p = Tensor::full({1, 3, 16, 16}, 2);
  EXPECT_EQ(evaluate_pairs(p, t).psnr, loss::kPsnrInfinity);
}

TEST(Evaluate, IdentityNetMatchesDegradedBaseline) {
  const TrainConfig cfg = tiny_config();
  const data::Corpus corpus = data::build_corpus(cfg.corpus);
  const nn::RestorationNet net = nn::build(cfg.net, cfg.seed);
  const EvalResult a = evaluate(net, corpus, data::Split::val, 1);
  const EvalResult b = evaluate_degraded(corpus, data::Split::val);
  EXPECT_NEAR(a.psnr, b.psnr, 1e-12);
  EXPECT_NEAR(a.ssim, b.ssim, 1e-12);
  EXPECT_NEAR(b.psnr, corpus.degraded_psnr_val, 1e-9);
}

// ---------------------------------------------------------------------------
// Checkpoints

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    cfg = tiny_config();
    corpus = data::build_corpus(cfg.corpus);
    net = nn::build(cfg.net, cfg.seed);
    wama::train::train(cfg, corpus, net, state, 2);
  }
  TrainConfig cfg;
  data::Corpus corpus;
  nn::RestorationNet net;
  TrainState state;
};

TEST_F(CheckpointTest, SaveLoadSaveIsByteIdentical) {
  const auto path = temp_file("a.ckpt");
  save_checkpoint(path, cfg, net, state);
  const Checkpoint ck = load_checkpoint(path);
  EXPECT_EQ(ck.state.step, 2);
  EXPECT_EQ(ck.state.adam.t, 2);
  EXPECT_EQ(ck.cfg.to_text(), cfg.to_text());
  const auto a = param_refs(net);
  nn::RestorationNet loaded = ck.net;
  const auto b = param_refs(loaded);
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(values(*a[i].value), values(*b[i].value)) << a[i].name;
  const auto path2 = temp_file("b.ckpt");
  save_checkpoint(path2, ck.cfg, ck.net, ck.state);
  EXPECT_EQ(slurp(path), slurp(path2));
}

TEST_F(CheckpointTest, LayoutIsAlignedLittleEndian) {
  const std::string bytes = serialize_checkpoint(cfg, net, state);
  EXPECT_EQ(bytes.substr(0, 4), "WAMA");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), kCheckpointVersion);
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes.size() % 8, 0u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 2);  // step, little-endian
  EXPECT_NE(bytes.find("net.channels=4\n"), std::string::npos);
}

TEST_F(CheckpointTest, CorruptPayloadByteFailsChecksum) {
  std::string bytes = serialize_checkpoint(cfg, net, state);
  bytes[bytes.size() - 64] ^= 0x01;
  try {
    deserialize_checkpoint(bytes);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos) << e.what();
  }
}

TEST_F(CheckpointTest, VersionMismatch) {
  std::string bytes = serialize_checkpoint(cfg, net, state);
  bytes[4] = 9;
  try {
    deserialize_checkpoint(bytes);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("version 9"), std::string::npos) << e.what();
  }
}

TEST_F(CheckpointTest, UnknownTensorName) {
  std::string bytes = serialize_checkpoint(cfg, net, state);
  const auto pos = bytes.find("param/head0");
  ASSERT_NE(pos, std::string::npos);
  bytes.replace(pos, 11, "param/hexd0");
  try {
    deserialize_checkpoint(bytes);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("unknown tensor name 'param/hexd0"), std::string::npos) << e.what();
  }
}

TEST_F(CheckpointTest, TruncatedAndForeignFiles) {
  const std::string bytes = serialize_checkpoint(cfg, net, state);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() / 2)), CheckpointError);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, 20)), CheckpointError);
  EXPECT_THROW(deserialize_checkpoint("P6\n1 1\n255\n..."), CheckpointError);
  EXPECT_THROW(load_checkpoint("/nonexistent/x.ckpt"), data::IoError);
}

TEST_F(CheckpointTest, MismatchedConfigEcho) {
  std::string bytes = serialize_checkpoint(cfg, net, state);
  const auto pos = bytes.find("net.channels=4");
  bytes[pos + 13] = '5';  // shapes no longer match the rebuilt net
  EXPECT_THROW(deserialize_checkpoint(bytes), CheckpointError);
}

TEST(Determinism, SameSeedConfigCorpusGivesIdenticalCheckpoints) {
  const TrainConfig cfg = tiny_config();
  std::string bytes[2];
  for (auto& b : bytes) {
    const data::Corpus corpus = data::build_corpus(cfg.corpus);
    nn::RestorationNet net = nn::build(cfg.net, cfg.seed);
    TrainState st;
    wama::train::train(cfg, corpus, net, st, 3);
    b = serialize_checkpoint(cfg, net, st);
  }
  EXPECT_EQ(bytes[0], bytes[1]);
}

TEST(Determinism, ResumeEqualsStraightRun) {
  const TrainConfig cfg = tiny_config();
  const data::Corpus corpus = data::build_corpus(cfg.corpus);

  nn::RestorationNet straight = nn::build(cfg.net, cfg.seed);
  TrainState s1;
  const TrainResult full = wama::train::train(cfg, corpus, straight, s1, 5);

  nn::RestorationNet part = nn::build(cfg.net, cfg.seed);
  TrainState s2;
  wama::train::train(cfg, corpus, part, s2, 3);
  const auto path = temp_file("resume.ckpt");
  save_checkpoint(path, cfg, part, s2);
  Checkpoint ck = load_checkpoint(path);
  const TrainResult rest = wama::train::train(ck.cfg, corpus, ck.net, ck.state, 2);

  EXPECT_EQ(serialize_checkpoint(cfg, straight, s1), serialize_checkpoint(ck.cfg, ck.net, ck.state));
  EXPECT_EQ(full.last->total, rest.last->total);
}
