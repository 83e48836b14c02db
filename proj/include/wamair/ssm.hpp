#pragma once

#include <vector>

#include "wamair/ops.hpp"
#include "wamair/params.hpp"
#include "wamair/tensor.hpp"

namespace wama::nn {

/// Selective scan over a sequence with diagonal state matrix.
///
///   abar_t = exp(delta_t[d] * A[d,n])
///   h_t[d,n] = abar_t * h_{t-1}[d,n] + delta_t[d] * B_t[n] * u_t[d],   h_0 = 0
///   y_t[d]   = sum_n C_t[n] * h_t[d,n] + D[d] * u_t[d]
///
/// Shapes: u, delta: [B,L,Di]; A: [Di,N]; Bm, Cm: [B,L,N]; D: [Di].
/// The sequence is processed in chunks of `chunk` steps: each chunk is scanned
/// from a zero state, then the carried state is propagated through the chunk's
/// cumulative decay. Results agree with the step-by-step recurrence up to
/// rounding.
struct ScanOptions {
  int64_t chunk = 16;
};

Tensor selective_scan(const Tensor& u, const Tensor& delta, const Tensor& A, const Tensor& Bm, const Tensor& Cm,
                      const Tensor& D, ScanOptions opt = {});

/// Final hidden state [B,Di,N] of the same recurrence (no autodiff).
Tensor selective_scan_final_state(const Tensor& u, const Tensor& delta, const Tensor& A, const Tensor& Bm);

/// Parameters of the selective SSM inside a Mamba block.
struct SsmParams {
  Tensor a_log;     // [Di,N]; A = -exp(a_log) < 0
  Tensor b_proj;    // selective: [N,Di]; time-invariant: [N,1]
  Tensor c_proj;    // selective: [N,Di]; time-invariant: [N,1]
  Tensor dt_proj;   // selective: [Di,Di]; time-invariant: [Di,1]
  Tensor dt_bias;   // [Di]
  Tensor d_skip;    // [Di]
  bool selective = true;

  int64_t inner() const { return a_log.dim(0); }
  int64_t state() const { return a_log.dim(1); }

  void visit(const std::string& prefix, const ParamVisitor& f);
  static SsmParams init(int64_t d_inner, int64_t d_state, bool selective, Rng& rng);
};

/// Computes delta = softplus(dt_proj(u) + dt_bias), B = b_proj(u), C = c_proj(u)
/// (constants when time-invariant) and runs the selective scan.
Tensor ssm_scan(const Tensor& u, const SsmParams& p, ScanOptions opt = {});

struct MambaConfig {
  int64_t d_model = 16;
  int64_t d_state = 32;
  int64_t d_conv = 4;
  int64_t expand = 2;
  bool selective = true;

  int64_t d_inner() const { return expand * d_model; }
};

struct MambaBlockParams {
  Tensor in_proj;    // [2*Di, d_model]
  Tensor conv_w;     // [Di, d_conv]
  Tensor conv_b;     // [Di]
  SsmParams ssm;
  Tensor out_proj;   // [d_model, Di]

  int64_t width() const { return in_proj.dim(1); }
  int64_t inner() const { return conv_w.dim(0); }

  void visit(const std::string& prefix, const ParamVisitor& f);
  static MambaBlockParams init(const MambaConfig& cfg, Rng& rng);
};

/// seq: [B,L,d_model] -> [B,L,d_model]
/// in_proj -> (main, gate); main -> causal depthwise conv1d -> silu -> ssm;
/// out = out_proj(ssm_out * silu(gate)).
Tensor mamba_block(const Tensor& seq, const MambaBlockParams& p);

/// Channel attention through Mamba. Pooled channel descriptors are read as a
/// length-C sequence of scalars, lifted to d_model, run through the block and
/// projected back to one weight per channel.
struct McamParams {
  Tensor lift_w;   // [d_model, 1]
  Tensor lift_b;   // [d_model]
  MambaBlockParams mamba;
  Tensor reduce_w; // [1, d_model]
  bool separate = false;
  // Only used when `separate`: parameters for the max-pool branch.
  Tensor lift_w_mp, lift_b_mp, reduce_w_mp;
  MambaBlockParams mamba_mp;

  void visit(const std::string& prefix, const ParamVisitor& f);
  static McamParams init(const MambaConfig& cfg, bool separate, Rng& rng);
};

/// One pooled branch: pool, lift, Mamba, reduce. Returns [B,C,1].
Tensor mcam_branch(const Tensor& x, PoolKind kind, const McamParams& p);

/// Channel weights (mamba(avg) + mamba(max)) as [B,C,1,1], avg branch first.
Tensor mcam_weights(const Tensor& x, const McamParams& p);
/// x + x * weights, weights broadcast over H x W.
Tensor mcam_apply(const Tensor& x, const McamParams& p);

}  // namespace wama::nn
