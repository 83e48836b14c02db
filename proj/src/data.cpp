#include "wamair/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "wamair/objective.hpp"
#include "wamair/rng.hpp"

namespace wama::data {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// PPM

namespace {

struct HeaderReader {
  const std::string& s;
  size_t pos = 0;

  [[noreturn]] void fail(const std::string& msg) const { throw IoError("ppm: malformed header: " + msg); }

  void skip_space_and_comments() {
    while (pos < s.size()) {
      const char c = s[pos];
      if (c == '#') {
        while (pos < s.size() && s[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') {
        ++pos;
      } else {
        break;
      }
    }
  }

  int64_t number(const char* what) {
    skip_space_and_comments();
    const size_t start = pos;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
    if (pos == start) fail(std::string("expected ") + what);
    int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data() + start, s.data() + pos, v);
    if (ec != std::errc() || p != s.data() + pos) fail(std::string("bad ") + what);
    return v;
  }
};

Tensor as_chw(const Tensor& img) {
  if (img.ndim() == 3 && img.dim(0) == 3) return img;
  if (img.ndim() == 4 && img.dim(0) == 1 && img.dim(1) == 3) return img.reshaped_detached({3, img.dim(2), img.dim(3)});
  throw TensorError("image must be [3,H,W] or [1,3,H,W], got " + shape_str(img.shape()));
}

}  // namespace

Tensor decode_ppm(const std::string& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') throw IoError("ppm: unsupported magic (not a PPM file)");
  if (bytes[1] != '6') {
    throw IoError(std::string("ppm: unsupported magic 'P") + bytes[1] + "' (only binary P6 is supported)");
  }
  HeaderReader r{bytes, 2};
  if (r.pos >= bytes.size() || !(bytes[r.pos] == ' ' || bytes[r.pos] == '\n' || bytes[r.pos] == '\t' ||
                                 bytes[r.pos] == '\r' || bytes[r.pos] == '#')) {
    r.fail("no separator after magic");
  }
  const int64_t w = r.number("width"), h = r.number("height"), maxval = r.number("maxval");
  if (w < 1 || h < 1) r.fail("zero image size");
  if (maxval < 1 || maxval > 255) throw IoError("ppm: unsupported maxval " + std::to_string(maxval) + " (8-bit only)");
  if (r.pos >= bytes.size()) throw IoError("ppm: truncated payload: header ends without data");
  const char sep = bytes[r.pos];
  if (!(sep == ' ' || sep == '\n' || sep == '\t' || sep == '\r')) r.fail("no separator after maxval");
  ++r.pos;
  const auto need = static_cast<size_t>(w * h * 3);
  const size_t have = bytes.size() - r.pos;
  if (have < need) {
    throw IoError("ppm: truncated payload: expected " + std::to_string(need) + " bytes, got " + std::to_string(have));
  }
  std::vector<Real> v(need);
  const auto* px = reinterpret_cast<const unsigned char*>(bytes.data() + r.pos);
  const Real scale = Real(1) / static_cast<Real>(maxval);
  for (int64_t i = 0; i < h * w; ++i) {
    for (int64_t c = 0; c < 3; ++c) v[static_cast<size_t>(c * h * w + i)] = static_cast<Real>(px[i * 3 + c]) * scale;
  }
  return Tensor({3, h, w}, std::move(v));
}

std::string encode_ppm(const Tensor& img) {
  const Tensor t = as_chw(img);
  const int64_t h = t.dim(1), w = t.dim(2);
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  const size_t header = out.size();
  out.resize(header + static_cast<size_t>(w * h * 3));
  for (int64_t i = 0; i < h * w; ++i) {
    for (int64_t c = 0; c < 3; ++c) {
      const Real v = t.ptr()[c * h * w + i];
      if (!std::isfinite(v)) throw IoError("ppm: cannot encode non-finite value");
      const long q = std::lround(std::clamp(v, Real(0), Real(1)) * 255);
      out[header + static_cast<size_t>(i * 3 + c)] = static_cast<char>(static_cast<unsigned char>(q));
    }
  }
  return out;
}

Tensor load_image(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return decode_ppm(ss.str());
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void save_image(const Tensor& img, const fs::path& path) {
  const std::string bytes = encode_ppm(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Degradations

std::string to_string(Degradation d) {
  switch (d) {
    case Degradation::haze: return "haze";
    case Degradation::rain: return "rain";
    case Degradation::noise: return "noise";
  }
  return "?";
}

Degradation parse_degradation(const std::string& s) {
  if (s == "haze") return Degradation::haze;
  if (s == "rain") return Degradation::rain;
  if (s == "noise") return Degradation::noise;
  throw ConfigError("unknown degradation '" + s + "' (haze, rain, noise)");
}

std::vector<Real> smooth_field(int64_t height, int64_t width, uint64_t seed) {
  constexpr int64_t G = 5;
  Rng rng(seed);
  std::array<double, G * G> grid{};
  for (auto& g : grid) g = rng.uniform();
  std::vector<Real> f(static_cast<size_t>(height * width));
  for (int64_t i = 0; i < height; ++i) {
    const double gy = height > 1 ? static_cast<double>(i) * (G - 1) / static_cast<double>(height - 1) : 0.0;
    const int64_t y0 = std::min<int64_t>(static_cast<int64_t>(gy), G - 2);
    const double ty = gy - static_cast<double>(y0);
    for (int64_t j = 0; j < width; ++j) {
      const double gx = width > 1 ? static_cast<double>(j) * (G - 1) / static_cast<double>(width - 1) : 0.0;
      const int64_t x0 = std::min<int64_t>(static_cast<int64_t>(gx), G - 2);
      const double tx = gx - static_cast<double>(x0);
      auto at = [&](int64_t y, int64_t x) { return grid[static_cast<size_t>(y * G + x)]; };
      const double top = at(y0, x0) * (1 - tx) + at(y0, x0 + 1) * tx;
      const double bot = at(y0 + 1, x0) * (1 - tx) + at(y0 + 1, x0 + 1) * tx;
      f[static_cast<size_t>(i * width + j)] = static_cast<Real>(top * (1 - ty) + bot * ty);
    }
  }
  return f;
}

namespace {

void check_image(const Tensor& img, const char* what) {
  if (img.ndim() < 3 || img.dim(-3) != 3) {
    throw TensorError(std::string(what) + ": expected [...,3,H,W], got " + shape_str(img.shape()));
  }
}

}  // namespace

Tensor degrade_haze(const Tensor& clean, Real t, Real a, uint64_t seed, Real variation) {
  check_image(clean, "degrade_haze");
  if (!(t > 0 && t <= 1)) throw ConfigError("haze transmission must be in (0,1], got " + std::to_string(t));
  if (!(a >= 0 && a <= 1)) throw ConfigError("haze airlight must be in [0,1], got " + std::to_string(a));
  if (!(variation >= 0 && variation <= 1)) throw ConfigError("haze variation must be in [0,1]");
  const int64_t H = clean.dim(-2), W = clean.dim(-1), planes = clean.numel() / (H * W);
  const auto field = smooth_field(H, W, seed);
  std::vector<Real> out(static_cast<size_t>(clean.numel()));
  for (int64_t p = 0; p < planes; ++p) {
    for (int64_t i = 0; i < H * W; ++i) {
      const Real tm = t + (1 - t) * variation * field[static_cast<size_t>(i)];
      const auto k = static_cast<size_t>(p * H * W + i);
      out[k] = clean.ptr()[k] * tm + a * (1 - tm);
    }
  }
  return Tensor(clean.shape(), std::move(out));
}

std::vector<Real> rain_layer(int64_t height, int64_t width, Real density, Real angle_deg, uint64_t seed) {
  if (!(density >= 0)) throw ConfigError("rain density must be >= 0");
  std::vector<Real> layer(static_cast<size_t>(height * width), 0);
  auto count = static_cast<int64_t>(std::llround(static_cast<double>(density) * static_cast<double>(height * width) / 100.0));
  if (density > 0) count = std::max<int64_t>(count, 1);
  const double theta = static_cast<double>(angle_deg) * std::numbers::pi / 180.0;
  const double dx = std::sin(theta), dy = std::cos(theta);
  Rng rng(seed);
  std::vector<int64_t> hit;
  for (int64_t s = 0; s < count; ++s) {
    const double x0 = rng.uniform() * static_cast<double>(width), y0 = rng.uniform() * static_cast<double>(height);
    const int64_t len = 4 + static_cast<int64_t>(rng.below(9));
    const auto bright = static_cast<Real>(rng.uniform(0.25, 0.5));
    hit.clear();
    for (int64_t k = 0; k < len; ++k) {
      const auto px = static_cast<int64_t>(std::floor(x0 + static_cast<double>(k) * dx));
      const auto py = static_cast<int64_t>(std::floor(y0 + static_cast<double>(k) * dy));
      if (px < 0 || px >= width || py < 0 || py >= height) continue;
      const int64_t idx = py * width + px;
      if (std::find(hit.begin(), hit.end(), idx) != hit.end()) continue;
      hit.push_back(idx);
      layer[static_cast<size_t>(idx)] += bright;
    }
  }
  return layer;
}

Tensor degrade_rain(const Tensor& clean, Real density, Real angle_deg, uint64_t seed) {
  check_image(clean, "degrade_rain");
  const int64_t H = clean.dim(-2), W = clean.dim(-1), planes = clean.numel() / (H * W);
  const auto layer = rain_layer(H, W, density, angle_deg, seed);
  std::vector<Real> out(static_cast<size_t>(clean.numel()));
  for (int64_t p = 0; p < planes; ++p) {
    for (int64_t i = 0; i < H * W; ++i) {
      const auto k = static_cast<size_t>(p * H * W + i);
      out[k] = std::clamp(clean.ptr()[k] + layer[static_cast<size_t>(i)], Real(0), Real(1));
    }
  }
  return Tensor(clean.shape(), std::move(out));
}

Tensor degrade_noise(const Tensor& clean, Real sigma, uint64_t seed) {
  check_image(clean, "degrade_noise");
  if (!(sigma >= 0)) throw ConfigError("noise sigma must be >= 0");
  Rng rng(seed);
  std::vector<Real> out(static_cast<size_t>(clean.numel()));
  for (size_t k = 0; k < out.size(); ++k) {
    const Real n = static_cast<Real>(rng.normal());
    out[k] = std::clamp(clean.ptr()[k] + sigma * n, Real(0), Real(1));
  }
  return Tensor(clean.shape(), std::move(out));
}

Tensor procedural_image(int64_t size, uint64_t seed) {
  if (size < 1) throw ConfigError("procedural image size must be >= 1");
  Rng rng(seed);
  const int64_t n = size * size;
  std::vector<Real> img(static_cast<size_t>(3 * n));
  for (int64_t c = 0; c < 3; ++c) {
    const auto f = smooth_field(size, size, rng.next());
    for (int64_t i = 0; i < n; ++i) img[static_cast<size_t>(c * n + i)] = Real(0.15) + Real(0.7) * f[static_cast<size_t>(i)];
  }
  auto paint = [&](int64_t y, int64_t x, const std::array<Real, 3>& col) {
    for (int64_t c = 0; c < 3; ++c) img[static_cast<size_t>(c * n + y * size + x)] = col[static_cast<size_t>(c)];
  };
  const int64_t shapes = 3 + static_cast<int64_t>(rng.below(4));
  const auto sz = static_cast<double>(size);
  for (int64_t s = 0; s < shapes; ++s) {
    const uint64_t type = rng.below(3);
    std::array<Real, 3> col{};
    for (auto& c : col) c = static_cast<Real>(rng.uniform(0.05, 0.95));
    const double cy = rng.uniform() * sz, cx = rng.uniform() * sz;
    const double ry = rng.uniform(sz / 16, sz / 4), rx = rng.uniform(sz / 16, sz / 4);
    const int64_t period = 2 + static_cast<int64_t>(rng.below(5));
    const bool vertical = rng.below(2) == 1;
    for (int64_t y = 0; y < size; ++y) {
      for (int64_t x = 0; x < size; ++x) {
        const double py = static_cast<double>(y) + 0.5 - cy, px = static_cast<double>(x) + 0.5 - cx;
        const bool inside_box = std::abs(py) <= ry && std::abs(px) <= rx;
        if (type == 0 && inside_box) {
          paint(y, x, col);
        } else if (type == 1 && (py * py) / (ry * ry) + (px * px) / (ry * ry) <= 1.0) {
          paint(y, x, col);
        } else if (type == 2 && inside_box && ((vertical ? x : y) / period) % 2 == 0) {
          paint(y, x, col);
        }
      }
    }
  }
  return Tensor({3, size, size}, std::move(img));
}

// ---------------------------------------------------------------------------
// Corpus spec

void CorpusSpec::validate() const {
  if (patch < 8 || (patch & (patch - 1)) != 0) throw ConfigError("corpus.patch must be a power of two >= 8");
  if (patches < 2) throw ConfigError("corpus.patches must be >= 2");
  if (!(val_fraction >= 0 && val_fraction < 1)) throw ConfigError("corpus.val_fraction must be in [0,1)");
  const auto n_val = static_cast<int64_t>(std::llround(val_fraction * static_cast<double>(patches)));
  if (patches - n_val < 1) throw ConfigError("corpus has no training patches");
  if (!(strength_min >= 0 && strength_min <= strength_max)) {
    throw ConfigError("corpus strength range must satisfy 0 <= strength_min <= strength_max");
  }
  if (kind == Degradation::haze && strength_max >= 1) throw ConfigError("haze strength (1 - t) must be < 1");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw ConfigError(key + ": invalid value '" + v + "'");
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void CorpusSpec::set(const std::string& raw_key, const std::string& value) {
  const std::string key = raw_key.rfind("corpus.", 0) == 0 ? raw_key.substr(7) : raw_key;
  const std::string full = "corpus." + key;
  if (key == "base_dir") {
    base_dir = value;
  } else if (key == "patch") {
    patch = parse_number<int64_t>(full, value);
  } else if (key == "patches") {
    patches = parse_number<int64_t>(full, value);
  } else if (key == "val_fraction") {
    val_fraction = parse_number<double>(full, value);
  } else if (key == "kind") {
    kind = parse_degradation(value);
  } else if (key == "strength_min") {
    strength_min = parse_number<double>(full, value);
  } else if (key == "strength_max") {
    strength_max = parse_number<double>(full, value);
  } else if (key == "strength") {
    strength_min = strength_max = parse_number<double>(full, value);
  } else if (key == "seed") {
    seed = parse_number<uint64_t>(full, value);
  } else {
    throw ConfigError("unknown corpus key '" + raw_key + "'");
  }
}

CorpusSpec CorpusSpec::from_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  CorpusSpec spec;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    }
    spec.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return spec;
}

std::string CorpusSpec::to_text() const {
  std::string s;
  s += "base_dir=" + base_dir + "\n";
  s += "patch=" + std::to_string(patch) + "\n";
  s += "patches=" + std::to_string(patches) + "\n";
  s += "val_fraction=" + fmt_double(val_fraction) + "\n";
  s += "kind=" + to_string(kind) + "\n";
  s += "strength_min=" + fmt_double(strength_min) + "\n";
  s += "strength_max=" + fmt_double(strength_max) + "\n";
  s += "seed=" + std::to_string(seed) + "\n";
  return s;
}

// ---------------------------------------------------------------------------
// Corpus

namespace {

constexpr uint64_t kSplitSalt = 0x5b117ULL;
constexpr uint64_t kOrderSalt = 0x0bd3bULL;
constexpr uint64_t kFlipSalt = 0xf11bULL;

Tensor crop(const Tensor& img, int64_t y, int64_t x, int64_t p) {
  const int64_t H = img.dim(1), W = img.dim(2);
  std::vector<Real> v(static_cast<size_t>(3 * p * p));
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t i = 0; i < p; ++i)
      std::copy_n(img.ptr() + (c * H + y + i) * W + x, p, v.begin() + (c * p + i) * p);
  return Tensor({3, p, p}, std::move(v));
}

}  // namespace

std::string Corpus::manifest() const {
  std::string out;
  for (const auto& s : samples) {
    out += s.source + ", " + to_string(s.kind) + ", " + std::to_string(s.seed) + ", " +
           (s.split == Split::train ? "train" : "val") + "\n";
  }
  return out;
}

uint64_t Corpus::manifest_hash() const {
  uint64_t h = fnv1a(spec.to_text());
  h = fnv1a(manifest(), h);
  for (const auto& s : samples) {
    h = fnv1a(s.clean.ptr(), static_cast<size_t>(s.clean.numel()) * sizeof(Real), h);
    h = fnv1a(s.degraded.ptr(), static_cast<size_t>(s.degraded.numel()) * sizeof(Real), h);
  }
  return h;
}

Corpus build_corpus(const CorpusSpec& spec) {
  spec.validate();
  Corpus corpus;
  corpus.spec = spec;
  const int64_t P = spec.patch;

  std::vector<std::pair<std::string, Tensor>> bases;
  if (!spec.base_dir.empty()) {
    std::error_code ec;
    if (!fs::is_directory(spec.base_dir, ec)) throw IoError("corpus.base_dir is not a directory: " + spec.base_dir);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(spec.base_dir)) {
      if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      Tensor img = load_image(f);
      if (img.dim(1) < P || img.dim(2) < P) {
        throw IoError(f.string() + " is smaller than the " + std::to_string(P) + "px patch size");
      }
      bases.emplace_back(f.string(), std::move(img));
    }
    if (bases.empty()) throw IoError("no .ppm images in " + spec.base_dir);
  }

  for (int64_t i = 0; i < spec.patches; ++i) {
    const uint64_t seed = derive_seed(spec.seed, static_cast<uint64_t>(i));
    Rng rng(seed);
    Sample s;
    s.kind = spec.kind;
    s.seed = seed;
    s.split = Split::train;
    if (bases.empty()) {
      char name[32];
      std::snprintf(name, sizeof name, "procedural/%06lld", static_cast<long long>(i));
      s.source = name;
      s.clean = procedural_image(P, rng.next());
    } else {
      const auto& [path, img] = bases[static_cast<size_t>(i) % bases.size()];
      const auto y = static_cast<int64_t>(rng.below(static_cast<uint64_t>(img.dim(1) - P + 1)));
      const auto x = static_cast<int64_t>(rng.below(static_cast<uint64_t>(img.dim(2) - P + 1)));
      s.source = path;
      s.clean = crop(img, y, x, P);
    }
    const auto strength = static_cast<Real>(rng.uniform(spec.strength_min, spec.strength_max));
    const uint64_t dseed = rng.next();
    switch (spec.kind) {
      case Degradation::noise:
        s.degraded = degrade_noise(s.clean, strength, dseed);
        break;
      case Degradation::haze:
        s.degraded = degrade_haze(s.clean, 1 - strength, static_cast<Real>(rng.uniform(0.7, 1.0)), dseed, Real(0.5));
        break;
      case Degradation::rain:
        s.degraded = degrade_rain(s.clean, strength, static_cast<Real>(rng.uniform(-30.0, 30.0)), dseed);
        break;
    }
    corpus.samples.push_back(std::move(s));
  }

  std::vector<int64_t> perm(static_cast<size_t>(spec.patches));
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int64_t>(i);
  Rng split_rng(derive_seed(spec.seed, kSplitSalt));
  for (size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[split_rng.below(i)]);
  const auto n_val = static_cast<size_t>(std::llround(spec.val_fraction * static_cast<double>(spec.patches)));
  for (size_t i = 0; i < perm.size(); ++i) {
    auto& s = corpus.samples[static_cast<size_t>(perm[i])];
    s.split = i < n_val ? Split::val : Split::train;
  }
  for (int64_t i = 0; i < spec.patches; ++i) {
    (corpus.samples[static_cast<size_t>(i)].split == Split::val ? corpus.val : corpus.train).push_back(i);
  }

  auto mean_psnr = [&](const std::vector<int64_t>& idx) {
    if (idx.empty()) return 0.0;
    double acc = 0;
    for (auto i : idx) acc += loss::psnr(corpus.samples[static_cast<size_t>(i)].degraded, corpus.samples[static_cast<size_t>(i)].clean);
    return acc / static_cast<double>(idx.size());
  };
  corpus.degraded_psnr_train = mean_psnr(corpus.train);
  corpus.degraded_psnr_val = mean_psnr(corpus.val);
  return corpus;
}

Tensor flip_horizontal(const Tensor& img) {
  const int64_t W = img.dim(-1), rows = img.numel() / W;
  std::vector<Real> v(static_cast<size_t>(img.numel()));
  for (int64_t r = 0; r < rows; ++r) {
    std::reverse_copy(img.ptr() + r * W, img.ptr() + (r + 1) * W, v.begin() + r * W);
  }
  return Tensor(img.shape(), std::move(v));
}

Batch stack(const Corpus& corpus, const std::vector<int64_t>& indices) {
  if (indices.empty()) throw TensorError("stack: no samples");
  const int64_t P = corpus.spec.patch, per = 3 * P * P;
  const auto n = static_cast<int64_t>(indices.size());
  std::vector<Real> deg(static_cast<size_t>(n * per)), cln(deg.size());
  for (int64_t b = 0; b < n; ++b) {
    const auto& s = corpus.samples.at(static_cast<size_t>(indices[static_cast<size_t>(b)]));
    std::copy_n(s.degraded.ptr(), per, deg.begin() + b * per);
    std::copy_n(s.clean.ptr(), per, cln.begin() + b * per);
  }
  Batch out;
  out.degraded = Tensor({n, 3, P, P}, std::move(deg));
  out.clean = Tensor({n, 3, P, P}, std::move(cln));
  out.indices = indices;
  out.flipped.assign(indices.size(), false);
  return out;
}

BatchStream::BatchStream(const Corpus& corpus, int64_t batch_size) : corpus_(&corpus), batch_(batch_size) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (corpus.train.empty()) throw ConfigError("corpus has no training samples");
  const auto n = static_cast<int64_t>(corpus.train.size());
  per_epoch_ = (n + batch_ - 1) / batch_;
}

std::vector<int64_t> BatchStream::order(int64_t epoch) const {
  std::vector<int64_t> idx = corpus_->train;
  Rng rng(derive_seed(corpus_->spec.seed, kOrderSalt, static_cast<uint64_t>(epoch)));
  for (size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

Batch BatchStream::batch(int64_t epoch, int64_t index) const {
  if (index < 0 || index >= per_epoch_) throw TensorError("batch index out of range");
  const auto ord = order(epoch);
  const auto begin = ord.begin() + index * batch_;
  const auto end = ord.begin() + std::min<int64_t>((index + 1) * batch_, static_cast<int64_t>(ord.size()));
  Batch b = stack(*corpus_, std::vector<int64_t>(begin, end));
  const int64_t per = b.degraded.numel() / b.degraded.dim(0);
  const int64_t P = corpus_->spec.patch;
  auto deg = b.degraded.mutable_data();
  auto cln = b.clean.mutable_data();
  for (size_t k = 0; k < b.indices.size(); ++k) {
    Rng rng(derive_seed(derive_seed(corpus_->spec.seed, kFlipSalt), static_cast<uint64_t>(epoch),
                        static_cast<uint64_t>(b.indices[k])));
    if (rng.uniform() >= 0.5) continue;
    b.flipped[k] = true;
    for (int64_t r = 0; r < 3 * P; ++r) {
      const auto off = static_cast<int64_t>(k) * per + r * P;
      std::reverse(deg.begin() + off, deg.begin() + off + P);
      std::reverse(cln.begin() + off, cln.begin() + off + P);
    }
  }
  return b;
}

std::vector<Batch> BatchStream::epoch(int64_t e) const {
  std::vector<Batch> out;
  for (int64_t i = 0; i < per_epoch_; ++i) out.push_back(batch(e, i));
  return out;
}

}  // namespace wama::data
