#include "wamair/ssm.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

#include "wamair/ops.hpp"

namespace wama::nn {

namespace {

struct ScanDims {
  int64_t batch, len, inner, state;
};

ScanDims check_scan(const Tensor& u, const Tensor& delta, const Tensor& A, const Tensor& Bm) {
  if (u.ndim() != 3) throw TensorError("selective_scan: u must be [B,L,Di], got " + shape_str(u.shape()));
  ScanDims d{u.dim(0), u.dim(1), u.dim(2), A.dim(1)};
  if (delta.shape() != u.shape()) throw TensorError("selective_scan: delta shape " + shape_str(delta.shape()));
  if (A.ndim() != 2 || A.dim(0) != d.inner) throw TensorError("selective_scan: A shape " + shape_str(A.shape()));
  if (Bm.shape() != Shape{d.batch, d.len, d.state}) {
    throw TensorError("selective_scan: B shape " + shape_str(Bm.shape()));
  }
  return d;
}

// Blocked forward pass. Writes y [B,L,Di] and, when `states` is non-null, every
// hidden state [B,L,Di,N].
void scan_forward(const ScanDims& s, const Real* u, const Real* delta, const Real* A, const Real* Bm,
                  const Real* Cm, const Real* D, int64_t chunk, Real* y, Real* states, Real* final_state) {
  const int64_t DN = s.inner * s.state;
  std::vector<Real> carry(static_cast<size_t>(DN)), local(static_cast<size_t>(DN)), decay(static_cast<size_t>(DN)),
      h(static_cast<size_t>(DN));
  chunk = std::max<int64_t>(chunk, 1);
  for (int64_t b = 0; b < s.batch; ++b) {
    std::fill(carry.begin(), carry.end(), Real(0));
    for (int64_t t0 = 0; t0 < s.len; t0 += chunk) {
      const int64_t t1 = std::min(s.len, t0 + chunk);
      std::fill(local.begin(), local.end(), Real(0));
      std::fill(decay.begin(), decay.end(), Real(1));
      for (int64_t t = t0; t < t1; ++t) {
        const int64_t bt = b * s.len + t;
        const Real* ut = u + bt * s.inner;
        const Real* dt = delta + bt * s.inner;
        const Real* bv = Bm + bt * s.state;
        const Real* cv = Cm ? Cm + bt * s.state : nullptr;
        for (int64_t d = 0; d < s.inner; ++d) {
          assert(dt[d] > 0);
          const Real du = dt[d] * ut[d];
          Real acc = 0;
          for (int64_t n = 0; n < s.state; ++n) {
            const int64_t k = d * s.state + n;
            const Real abar = std::exp(dt[d] * A[k]);
            local[k] = abar * local[k] + du * bv[n];
            decay[k] *= abar;
            h[k] = local[k] + decay[k] * carry[k];
            if (cv) acc += cv[n] * h[k];
          }
          if (y) y[bt * s.inner + d] = acc + D[d] * ut[d];
        }
        if (states) std::copy(h.begin(), h.end(), states + bt * DN);
      }
      carry = h;
    }
    if (final_state) std::copy(carry.begin(), carry.end(), final_state + b * DN);
  }
}

}  // namespace

Tensor selective_scan(const Tensor& u, const Tensor& delta, const Tensor& A, const Tensor& Bm, const Tensor& Cm,
                      const Tensor& D, ScanOptions opt) {
  const ScanDims s = check_scan(u, delta, A, Bm);
  if (Cm.shape() != Bm.shape()) throw TensorError("selective_scan: C shape " + shape_str(Cm.shape()));
  if (D.numel() != s.inner) throw TensorError("selective_scan: D shape " + shape_str(D.shape()));
  const int64_t DN = s.inner * s.state;
  std::vector<Real> y(static_cast<size_t>(u.numel()));
  const bool grad = any_requires_grad({u, delta, A, Bm, Cm, D});
  std::vector<Real> states(grad ? static_cast<size_t>(s.batch * s.len * DN) : 0);
  scan_forward(s, u.ptr(), delta.ptr(), A.ptr(), Bm.ptr(), Cm.ptr(), D.ptr(), opt.chunk, y.data(),
               grad ? states.data() : nullptr, nullptr);
  Tensor out(u.shape(), std::move(y));
  if (!grad) return out;

  auto hs = std::make_shared<std::vector<Real>>(std::move(states));
  Tensor us = u.detach(), ds = delta.detach(), as = A.detach(), bs = Bm.detach(), cs = Cm.detach(), dd = D.detach();
  return record("selective_scan", {u, delta, A, Bm, Cm, D}, out,
                [s, hs, us, ds, as, bs, cs, dd, DN](const Tensor& g, const std::vector<bool>&) {
    std::vector<Real> gu(static_cast<size_t>(us.numel())), gdelta(gu.size()), gA(static_cast<size_t>(DN)),
        gB(static_cast<size_t>(bs.numel())), gC(gB.size()), gD(static_cast<size_t>(s.inner));
    std::vector<Real> gh(static_cast<size_t>(DN));
    const Real* A = as.ptr();
    for (int64_t b = 0; b < s.batch; ++b) {
      std::fill(gh.begin(), gh.end(), Real(0));
      for (int64_t t = s.len; t-- > 0;) {
        const int64_t bt = b * s.len + t;
        const Real* gy = g.ptr() + bt * s.inner;
        const Real* ut = us.ptr() + bt * s.inner;
        const Real* dt = ds.ptr() + bt * s.inner;
        const Real* bv = bs.ptr() + bt * s.state;
        const Real* cv = cs.ptr() + bt * s.state;
        const Real* ht = hs->data() + bt * DN;
        const Real* hp = t > 0 ? hs->data() + (bt - 1) * DN : nullptr;
        Real* gbv = gB.data() + bt * s.state;
        Real* gcv = gC.data() + bt * s.state;
        for (int64_t d = 0; d < s.inner; ++d) {
          const Real gyd = gy[d];
          gD[static_cast<size_t>(d)] += gyd * ut[d];
          Real gud = dd.ptr()[d] * gyd;
          Real gdd = 0;
          for (int64_t n = 0; n < s.state; ++n) {
            const int64_t k = d * s.state + n;
            gcv[n] += gyd * ht[k];
            Real ghk = gh[static_cast<size_t>(k)] + cv[n] * gyd;
            const Real abar = std::exp(dt[d] * A[k]);
            const Real prev = hp ? hp[k] : Real(0);
            gud += ghk * dt[d] * bv[n];
            gbv[n] += ghk * dt[d] * ut[d];
            gdd += ghk * (A[k] * abar * prev + bv[n] * ut[d]);
            gA[static_cast<size_t>(k)] += ghk * dt[d] * abar * prev;
            gh[static_cast<size_t>(k)] = ghk * abar;
          }
          gu[static_cast<size_t>(bt * s.inner + d)] = gud;
          gdelta[static_cast<size_t>(bt * s.inner + d)] = gdd;
        }
      }
    }
    return std::vector<Tensor>{Tensor(us.shape(), std::move(gu)), Tensor(ds.shape(), std::move(gdelta)),
                               Tensor(as.shape(), std::move(gA)),  Tensor(bs.shape(), std::move(gB)),
                               Tensor(cs.shape(), std::move(gC)),  Tensor(dd.shape(), std::move(gD))};
  });
}

Tensor selective_scan_final_state(const Tensor& u, const Tensor& delta, const Tensor& A, const Tensor& Bm) {
  const ScanDims s = check_scan(u, delta, A, Bm);
  std::vector<Real> fs(static_cast<size_t>(s.batch * s.inner * s.state));
  std::vector<Real> zeros_d(static_cast<size_t>(s.inner), Real(0));
  scan_forward(s, u.ptr(), delta.ptr(), A.ptr(), Bm.ptr(), nullptr, zeros_d.data(), ScanOptions{}.chunk, nullptr,
               nullptr, fs.data());
  return Tensor({s.batch, s.inner, s.state}, std::move(fs));
}

// ---------------------------------------------------------------------------

void SsmParams::visit(const std::string& prefix, const ParamVisitor& f) {
  f(join_name(prefix, "a_log"), a_log);
  f(join_name(prefix, "b_proj"), b_proj);
  f(join_name(prefix, "c_proj"), c_proj);
  f(join_name(prefix, "dt_proj"), dt_proj);
  f(join_name(prefix, "dt_bias"), dt_bias);
  f(join_name(prefix, "d_skip"), d_skip);
}

SsmParams SsmParams::init(int64_t d_inner, int64_t d_state, bool selective, Rng& rng) {
  SsmParams p;
  p.selective = selective;
  std::vector<Real> alog(static_cast<size_t>(d_inner * d_state));
  for (int64_t d = 0; d < d_inner; ++d) {
    for (int64_t n = 0; n < d_state; ++n) alog[static_cast<size_t>(d * d_state + n)] = std::log(Real(n + 1));
  }
  p.a_log = Tensor({d_inner, d_state}, std::move(alog));
  const int64_t in = selective ? d_inner : 1;
  const Real bound = Real(1) / std::sqrt(static_cast<Real>(in));
  p.b_proj = init::uniform({d_state, in}, bound, rng);
  p.c_proj = init::uniform({d_state, in}, bound, rng);
  p.dt_proj = selective ? init::uniform({d_inner, in}, bound, rng) : Tensor::zeros({d_inner, 1});
  // Step sizes start log-uniform in [1e-3, 1e-1]; the bias is their inverse softplus.
  std::vector<Real> bias(static_cast<size_t>(d_inner));
  for (auto& v : bias) {
    double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
    v = static_cast<Real>(dt + std::log(-std::expm1(-dt)));
  }
  p.dt_bias = Tensor({d_inner}, std::move(bias));
  p.d_skip = Tensor::ones({d_inner});
  return p;
}

Tensor ssm_scan(const Tensor& u, const SsmParams& p, ScanOptions opt) {
  if (u.ndim() != 3 || u.dim(2) != p.inner()) {
    throw TensorError("ssm_scan: input " + shape_str(u.shape()) + " does not match inner width " +
                      std::to_string(p.inner()));
  }
  Tensor src = p.selective ? u : Tensor::ones({u.dim(0), u.dim(1), 1});
  Tensor delta = softplus(linear(src, p.dt_proj, p.dt_bias));
  Tensor bm = linear(src, p.b_proj, {});
  Tensor cm = linear(src, p.c_proj, {});
  Tensor A = neg(exp(p.a_log));
  return selective_scan(u, delta, A, bm, cm, p.d_skip, opt);
}

void MambaBlockParams::visit(const std::string& prefix, const ParamVisitor& f) {
  f(join_name(prefix, "in_proj"), in_proj);
  f(join_name(prefix, "conv_w"), conv_w);
  f(join_name(prefix, "conv_b"), conv_b);
  ssm.visit(join_name(prefix, "ssm"), f);
  f(join_name(prefix, "out_proj"), out_proj);
}

MambaBlockParams MambaBlockParams::init(const MambaConfig& cfg, Rng& rng) {
  if (cfg.d_model < 1 || cfg.d_state < 1 || cfg.d_conv < 1 || cfg.expand < 1) {
    throw TensorError("mamba config values must be >= 1");
  }
  const int64_t di = cfg.d_inner();
  MambaBlockParams p;
  p.in_proj = init::uniform({2 * di, cfg.d_model}, Real(1) / std::sqrt(static_cast<Real>(cfg.d_model)), rng);
  const Real cb = Real(1) / std::sqrt(static_cast<Real>(cfg.d_conv));
  p.conv_w = init::uniform({di, cfg.d_conv}, cb, rng);
  p.conv_b = init::uniform({di}, cb, rng);
  p.ssm = SsmParams::init(di, cfg.d_state, cfg.selective, rng);
  p.out_proj = init::uniform({cfg.d_model, di}, Real(1) / std::sqrt(static_cast<Real>(di)), rng);
  return p;
}

Tensor mamba_block(const Tensor& seq, const MambaBlockParams& p) {
  if (seq.ndim() != 3 || seq.dim(2) != p.width()) {
    throw TensorError("mamba_block: input " + shape_str(seq.shape()) + " does not match width " +
                      std::to_string(p.width()));
  }
  const int64_t di = p.inner();
  Tensor xz = linear(seq, p.in_proj, {});
  Tensor main = slice(xz, 2, 0, di);
  Tensor gate = slice(xz, 2, di, di);
  Tensor u = silu(causal_conv1d(main, p.conv_w, p.conv_b));
  Tensor y = ssm_scan(u, p.ssm);
  return linear(mul(y, silu(gate)), p.out_proj, {});
}

void McamParams::visit(const std::string& prefix, const ParamVisitor& f) {
  f(join_name(prefix, "lift_w"), lift_w);
  f(join_name(prefix, "lift_b"), lift_b);
  mamba.visit(join_name(prefix, "mamba"), f);
  f(join_name(prefix, "reduce_w"), reduce_w);
  if (separate) {
    f(join_name(prefix, "lift_w_mp"), lift_w_mp);
    f(join_name(prefix, "lift_b_mp"), lift_b_mp);
    mamba_mp.visit(join_name(prefix, "mamba_mp"), f);
    f(join_name(prefix, "reduce_w_mp"), reduce_w_mp);
  }
}

McamParams McamParams::init(const MambaConfig& cfg, bool separate, Rng& rng) {
  McamParams p;
  p.separate = separate;
  const Real rb = Real(1) / std::sqrt(static_cast<Real>(cfg.d_model));
  p.lift_w = init::uniform({cfg.d_model, 1}, Real(1), rng);
  p.lift_b = init::uniform({cfg.d_model}, Real(1), rng);
  p.mamba = MambaBlockParams::init(cfg, rng);
  p.reduce_w = init::uniform({1, cfg.d_model}, rb, rng);
  if (separate) {
    p.lift_w_mp = init::uniform({cfg.d_model, 1}, Real(1), rng);
    p.lift_b_mp = init::uniform({cfg.d_model}, Real(1), rng);
    p.mamba_mp = MambaBlockParams::init(cfg, rng);
    p.reduce_w_mp = init::uniform({1, cfg.d_model}, rb, rng);
  }
  return p;
}

Tensor mcam_branch(const Tensor& x, PoolKind kind, const McamParams& p) {
  if (x.ndim() != 4) throw TensorError("mcam expects [B,C,H,W], got " + shape_str(x.shape()));
  const int64_t B = x.dim(0), C = x.dim(1);
  const bool own = p.separate && kind == PoolKind::max;
  Tensor seq = reshape(pool_global(x, kind), {B, C, 1});
  seq = linear(seq, own ? p.lift_w_mp : p.lift_w, own ? p.lift_b_mp : p.lift_b);
  return linear(mamba_block(seq, own ? p.mamba_mp : p.mamba), own ? p.reduce_w_mp : p.reduce_w, {});
}

Tensor mcam_weights(const Tensor& x, const McamParams& p) {
  Tensor ap = mcam_branch(x, PoolKind::avg, p);
  Tensor mp = mcam_branch(x, PoolKind::max, p);
  return reshape(add(ap, mp), {x.dim(0), x.dim(1), 1, 1});
}

Tensor mcam_apply(const Tensor& x, const McamParams& p) { return add(x, mul(x, mcam_weights(x, p))); }

}  // namespace wama::nn
