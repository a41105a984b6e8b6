#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "metado/rng.hpp"

// Transformer-style actor-critic over a population of individuals: states are
// embedded twice (PE, DE), mixed by one self-attention encoder block into
// FIPE, decoded per individual by cross-attention (Q=DE, K=V=FIPE), and read
// out as per-individual Gaussian action heads plus a pooled critic value.
// Forward and backward are hand-written; the cache carries every activation
// the backward pass needs.
namespace metado::policy {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct PolicyConfig {
  int state_dim = 10;
  int d_model = 128;
  int n_heads = 4;
  int d_ff = 256;
  int critic_hidden = 64;
  int action_dim = 3;
  double sigma_min = 1e-3;
  double sigma_max = 0.7;
};

struct Affine {
  MatrixXd W;  // out x in
  VectorXd b;  // out

  // y = x * W^T + b, rowwise over x (N x in).
  MatrixXd apply(const MatrixXd& x) const {
    return (x * W.transpose()).rowwise() + b.transpose();
  }
};

struct LayerNormParams {
  VectorXd gamma;
  VectorXd beta;
};

struct AttentionParams {
  Affine q, k, v, o;
};

struct PolicyParams {
  PolicyConfig cfg;
  Affine pe_proj, de_proj;
  LayerNormParams enc_ln1;
  AttentionParams enc_attn;
  LayerNormParams enc_ln2;
  Affine enc_ff1, enc_ff2;
  LayerNormParams dec_ln;
  AttentionParams dec_attn;
  Affine mu_head, sigma_head;
  Affine critic_hidden;
  Affine critic_out;
};

// Fixed tensor order: checkpoints, Adam state, and gradient walks all use it.
template <class P, class F>
void for_each_tensor(P& p, F&& f) {
  f("pe_proj.weight", p.pe_proj.W);
  f("pe_proj.bias", p.pe_proj.b);
  f("de_proj.weight", p.de_proj.W);
  f("de_proj.bias", p.de_proj.b);
  f("encoder.ln1.gamma", p.enc_ln1.gamma);
  f("encoder.ln1.beta", p.enc_ln1.beta);
  f("encoder.attn.q.weight", p.enc_attn.q.W);
  f("encoder.attn.q.bias", p.enc_attn.q.b);
  f("encoder.attn.k.weight", p.enc_attn.k.W);
  f("encoder.attn.k.bias", p.enc_attn.k.b);
  f("encoder.attn.v.weight", p.enc_attn.v.W);
  f("encoder.attn.v.bias", p.enc_attn.v.b);
  f("encoder.attn.out.weight", p.enc_attn.o.W);
  f("encoder.attn.out.bias", p.enc_attn.o.b);
  f("encoder.ln2.gamma", p.enc_ln2.gamma);
  f("encoder.ln2.beta", p.enc_ln2.beta);
  f("encoder.ff1.weight", p.enc_ff1.W);
  f("encoder.ff1.bias", p.enc_ff1.b);
  f("encoder.ff2.weight", p.enc_ff2.W);
  f("encoder.ff2.bias", p.enc_ff2.b);
  f("decoder.ln.gamma", p.dec_ln.gamma);
  f("decoder.ln.beta", p.dec_ln.beta);
  f("decoder.attn.q.weight", p.dec_attn.q.W);
  f("decoder.attn.q.bias", p.dec_attn.q.b);
  f("decoder.attn.k.weight", p.dec_attn.k.W);
  f("decoder.attn.k.bias", p.dec_attn.k.b);
  f("decoder.attn.v.weight", p.dec_attn.v.W);
  f("decoder.attn.v.bias", p.dec_attn.v.b);
  f("decoder.attn.out.weight", p.dec_attn.o.W);
  f("decoder.attn.out.bias", p.dec_attn.o.b);
  f("mu_head.weight", p.mu_head.W);
  f("mu_head.bias", p.mu_head.b);
  f("sigma_head.weight", p.sigma_head.W);
  f("sigma_head.bias", p.sigma_head.b);
  f("critic.hidden.weight", p.critic_hidden.W);
  f("critic.hidden.bias", p.critic_hidden.b);
  f("critic.out.weight", p.critic_out.W);
  f("critic.out.bias", p.critic_out.b);
}

namespace detail {

inline double snap_f32(double x) { return static_cast<float>(x); }

inline void init_affine(Affine& a, int out, int in, Rng& rng) {
  double r = 1.0 / std::sqrt(static_cast<double>(in));
  a.W.resize(out, in);
  for (int i = 0; i < out; ++i)
    for (int j = 0; j < in; ++j) a.W(i, j) = snap_f32(rng.uniform(-r, r));
  a.b.resize(out);
  for (int i = 0; i < out; ++i) a.b(i) = snap_f32(rng.uniform(-r, r));
}

inline void init_ln(LayerNormParams& ln, int d) {
  ln.gamma = VectorXd::Ones(d);
  ln.beta = VectorXd::Zero(d);
}

}  // namespace detail

inline PolicyParams init_params(const PolicyConfig& cfg, Rng& rng) {
  if (cfg.d_model % cfg.n_heads != 0)
    throw std::invalid_argument("d_model must be divisible by n_heads");
  PolicyParams p;
  p.cfg = cfg;
  detail::init_affine(p.pe_proj, cfg.d_model, cfg.state_dim, rng);
  detail::init_affine(p.de_proj, cfg.d_model, cfg.state_dim, rng);
  detail::init_ln(p.enc_ln1, cfg.d_model);
  detail::init_affine(p.enc_attn.q, cfg.d_model, cfg.d_model, rng);
  detail::init_affine(p.enc_attn.k, cfg.d_model, cfg.d_model, rng);
  detail::init_affine(p.enc_attn.v, cfg.d_model, cfg.d_model, rng);
  detail::init_affine(p.enc_attn.o, cfg.d_model, cfg.d_model, rng);
  detail::init_ln(p.enc_ln2, cfg.d_model);
  detail::init_affine(p.enc_ff1, cfg.d_ff, cfg.d_model, rng);
  detail::init_affine(p.enc_ff2, cfg.d_model, cfg.d_ff, rng);
  detail::init_ln(p.dec_ln, cfg.d_model);
  detail::init_affine(p.dec_attn.q, cfg.d_model, cfg.d_model, rng);
  detail::init_affine(p.dec_attn.k, cfg.d_model, cfg.d_model, rng);
  detail::init_affine(p.dec_attn.v, cfg.d_model, cfg.d_model, rng);
  detail::init_affine(p.dec_attn.o, cfg.d_model, cfg.d_model, rng);
  detail::init_affine(p.mu_head, cfg.action_dim, cfg.d_model, rng);
  detail::init_affine(p.sigma_head, cfg.action_dim, cfg.d_model, rng);
  detail::init_affine(p.critic_hidden, cfg.critic_hidden, cfg.d_model, rng);
  detail::init_affine(p.critic_out, 1, cfg.critic_hidden, rng);
  return p;
}

inline PolicyParams zeros_like(const PolicyParams& p) {
  PolicyParams g = p;
  for_each_tensor(g, [](const char*, auto& t) { t.setZero(); });
  return g;
}

struct GaussianHead {
  MatrixXd mu;     // N x A in [0, 1]
  MatrixXd sigma;  // N x A in [sigma_min, sigma_max]
};

struct LnCache {
  MatrixXd xhat;
  VectorXd istd;
};

struct AttnCache {
  MatrixXd q, k, v;          // N x d after projections
  std::vector<MatrixXd> p;   // per-head softmax, each Nq x Nk
  MatrixXd concat;           // N x d context before the output projection
};

struct ForwardCache {
  MatrixXd state;
  MatrixXd pe, de;
  LnCache ln1;
  MatrixXd a1;
  AttnCache enc;
  MatrixXd e1;
  LnCache ln2;
  MatrixXd a2, f1;  // f1 = tanh(ff1 pre-activation)
  MatrixXd fipe;
  LnCache lnq;
  MatrixXd a3;
  AttnCache dec;
  MatrixXd hrep;  // decoder output with residual, N x d
  MatrixXd mu_t, sigma_t;  // tanh values at the heads
  VectorXd hbar;
  VectorXd chid;  // critic hidden post-tanh
};

namespace detail {

inline constexpr double kLnEps = 1e-5;

inline MatrixXd layer_norm(const MatrixXd& x, const LayerNormParams& ln,
                           LnCache& cache) {
  const int n = static_cast<int>(x.rows());
  const int d = static_cast<int>(x.cols());
  cache.xhat.resize(n, d);
  cache.istd.resize(n);
  MatrixXd y(n, d);
  for (int i = 0; i < n; ++i) {
    double mean = x.row(i).mean();
    double var = (x.row(i).array() - mean).square().mean();
    double istd = 1.0 / std::sqrt(var + kLnEps);
    cache.istd(i) = istd;
    cache.xhat.row(i) = ((x.row(i).array() - mean) * istd).matrix();
    y.row(i) = cache.xhat.row(i).cwiseProduct(ln.gamma.transpose()) +
               ln.beta.transpose();
  }
  return y;
}

inline MatrixXd layer_norm_backward(const MatrixXd& dy,
                                    const LayerNormParams& ln,
                                    const LnCache& cache,
                                    LayerNormParams& grads) {
  const int n = static_cast<int>(dy.rows());
  const int d = static_cast<int>(dy.cols());
  MatrixXd dx(n, d);
  for (int i = 0; i < n; ++i) {
    Eigen::RowVectorXd dxhat =
        dy.row(i).cwiseProduct(ln.gamma.transpose());
    double m1 = dxhat.mean();
    double m2 = dxhat.cwiseProduct(cache.xhat.row(i)).mean();
    dx.row(i) = (cache.istd(i) *
                 (dxhat.array() - m1 - cache.xhat.row(i).array() * m2))
                    .matrix();
    grads.gamma += dy.row(i).cwiseProduct(cache.xhat.row(i)).transpose();
    grads.beta += dy.row(i).transpose();
  }
  return dx;
}

inline MatrixXd attention(const AttentionParams& ap, const MatrixXd& q_in,
                          const MatrixXd& kv_in, int n_heads,
                          AttnCache& cache) {
  const int d = static_cast<int>(ap.q.W.rows());
  const int dk = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  cache.q = ap.q.apply(q_in);
  cache.k = ap.k.apply(kv_in);
  cache.v = ap.v.apply(kv_in);
  const int nq = static_cast<int>(q_in.rows());
  cache.p.assign(n_heads, MatrixXd());
  cache.concat.resize(nq, d);
  for (int h = 0; h < n_heads; ++h) {
    auto qh = cache.q.middleCols(h * dk, dk);
    auto kh = cache.k.middleCols(h * dk, dk);
    auto vh = cache.v.middleCols(h * dk, dk);
    MatrixXd scores = scale * (qh * kh.transpose());
    MatrixXd& p = cache.p[h];
    p.resize(scores.rows(), scores.cols());
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
      double mx = scores.row(i).maxCoeff();
      p.row(i) = (scores.row(i).array() - mx).exp().matrix();
      p.row(i) /= p.row(i).sum();
    }
    cache.concat.middleCols(h * dk, dk) = p * vh;
  }
  return ap.o.apply(cache.concat);
}

struct AttnInputGrads {
  MatrixXd d_q_in, d_kv_in;
};

inline AttnInputGrads attention_backward(const AttentionParams& ap,
                                         const AttnCache& cache,
                                         const MatrixXd& q_in,
                                         const MatrixXd& kv_in, int n_heads,
                                         const MatrixXd& d_out,
                                         AttentionParams& grads) {
  const int d = static_cast<int>(ap.q.W.rows());
  const int dk = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  grads.o.W += d_out.transpose() * cache.concat;
  grads.o.b += d_out.colwise().sum().transpose();
  MatrixXd d_concat = d_out * ap.o.W;

  MatrixXd dq = MatrixXd::Zero(cache.q.rows(), d);
  MatrixXd dkm = MatrixXd::Zero(cache.k.rows(), d);
  MatrixXd dvm = MatrixXd::Zero(cache.v.rows(), d);
  for (int h = 0; h < n_heads; ++h) {
    auto qh = cache.q.middleCols(h * dk, dk);
    auto kh = cache.k.middleCols(h * dk, dk);
    auto vh = cache.v.middleCols(h * dk, dk);
    const MatrixXd& p = cache.p[h];
    MatrixXd d_ctx = d_concat.middleCols(h * dk, dk);
    MatrixXd dp = d_ctx * vh.transpose();
    dvm.middleCols(h * dk, dk) = p.transpose() * d_ctx;
    // softmax backward, rowwise
    MatrixXd ds(p.rows(), p.cols());
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      double dot = dp.row(i).dot(p.row(i));
      ds.row(i) = p.row(i).cwiseProduct((dp.row(i).array() - dot).matrix());
    }
    dq.middleCols(h * dk, dk) = scale * (ds * kh);
    dkm.middleCols(h * dk, dk) = scale * (ds.transpose() * qh);
  }

  grads.q.W += dq.transpose() * q_in;
  grads.q.b += dq.colwise().sum().transpose();
  grads.k.W += dkm.transpose() * kv_in;
  grads.k.b += dkm.colwise().sum().transpose();
  grads.v.W += dvm.transpose() * kv_in;
  grads.v.b += dvm.colwise().sum().transpose();

  AttnInputGrads out;
  out.d_q_in = dq * ap.q.W;
  out.d_kv_in = dkm * ap.k.W + dvm * ap.v.W;
  return out;
}

}  // namespace detail

struct ForwardResult {
  GaussianHead head;
  double value = 0.0;
  ForwardCache cache;
};

inline ForwardResult forward(const PolicyParams& p, const MatrixXd& state) {
  if (state.cols() != p.cfg.state_dim)
    throw std::invalid_argument("state width mismatch");
  if (!state.allFinite())
    throw std::invalid_argument("non-finite state input");

  ForwardResult r;
  ForwardCache& c = r.cache;
  c.state = state;
  c.pe = p.pe_proj.apply(state);
  c.de = p.de_proj.apply(state);

  // Pre-norm encoder: self-attention then feed-forward, residuals around both.
  c.a1 = detail::layer_norm(c.pe, p.enc_ln1, c.ln1);
  MatrixXd attn_out =
      detail::attention(p.enc_attn, c.a1, c.a1, p.cfg.n_heads, c.enc);
  c.e1 = c.pe + attn_out;
  c.a2 = detail::layer_norm(c.e1, p.enc_ln2, c.ln2);
  c.f1 = p.enc_ff1.apply(c.a2).array().tanh().matrix();
  c.fipe = c.e1 + p.enc_ff2.apply(c.f1);

  // Cross-attention decoder: queries from DE, keys/values from FIPE.
  c.a3 = detail::layer_norm(c.de, p.dec_ln, c.lnq);
  MatrixXd dec_out =
      detail::attention(p.dec_attn, c.a3, c.fipe, p.cfg.n_heads, c.dec);
  c.hrep = c.de + dec_out;

  c.mu_t = p.mu_head.apply(c.hrep).array().tanh().matrix();
  c.sigma_t = p.sigma_head.apply(c.hrep).array().tanh().matrix();
  r.head.mu = (0.5 * (c.mu_t.array() + 1.0)).matrix();
  r.head.sigma = (p.cfg.sigma_min + (p.cfg.sigma_max - p.cfg.sigma_min) *
                                        0.5 * (c.sigma_t.array() + 1.0))
                     .matrix();

  c.hbar = c.hrep.colwise().mean().transpose();
  c.chid = (p.critic_hidden.W * c.hbar + p.critic_hidden.b)
               .array()
               .tanh()
               .matrix();
  r.value = (p.critic_out.W * c.chid + p.critic_out.b)(0);
  return r;
}

// Accumulates exact gradients into `grads` given upstream gradients with
// respect to mu, sigma (N x A) and the scalar value.
inline void backward(const PolicyParams& p, const ForwardCache& c,
                     const MatrixXd& d_mu, const MatrixXd& d_sigma,
                     double d_value, PolicyParams& grads) {
  const int n = static_cast<int>(c.state.rows());

  // Action heads.
  MatrixXd d_mu_pre =
      (d_mu.array() * 0.5 * (1.0 - c.mu_t.array().square())).matrix();
  MatrixXd d_sig_pre = (d_sigma.array() *
                        ((p.cfg.sigma_max - p.cfg.sigma_min) * 0.5) *
                        (1.0 - c.sigma_t.array().square()))
                           .matrix();
  grads.mu_head.W += d_mu_pre.transpose() * c.hrep;
  grads.mu_head.b += d_mu_pre.colwise().sum().transpose();
  grads.sigma_head.W += d_sig_pre.transpose() * c.hrep;
  grads.sigma_head.b += d_sig_pre.colwise().sum().transpose();
  MatrixXd d_h = d_mu_pre * p.mu_head.W + d_sig_pre * p.sigma_head.W;

  // Critic head through the mean pooling.
  if (d_value != 0.0) {
    VectorXd d_chid_pre =
        (p.critic_out.W.transpose() * d_value).col(0).cwiseProduct(
            (1.0 - c.chid.array().square()).matrix());
    grads.critic_out.W += d_value * c.chid.transpose();
    grads.critic_out.b(0) += d_value;
    grads.critic_hidden.W += d_chid_pre * c.hbar.transpose();
    grads.critic_hidden.b += d_chid_pre;
    VectorXd d_hbar = p.critic_hidden.W.transpose() * d_chid_pre;
    d_h.noalias() +=
        VectorXd::Ones(n) * (d_hbar.transpose() / static_cast<double>(n));
  }

  // Decoder block.
  MatrixXd d_de = d_h;
  detail::AttnInputGrads dg = detail::attention_backward(
      p.dec_attn, c.dec, c.a3, c.fipe, p.cfg.n_heads, d_h, grads.dec_attn);
  MatrixXd d_fipe = dg.d_kv_in;
  d_de += detail::layer_norm_backward(dg.d_q_in, p.dec_ln, c.lnq, grads.dec_ln);

  // Encoder feed-forward.
  MatrixXd d_e1 = d_fipe;
  MatrixXd d_f1 = d_fipe * p.enc_ff2.W;
  grads.enc_ff2.W += d_fipe.transpose() * c.f1;
  grads.enc_ff2.b += d_fipe.colwise().sum().transpose();
  MatrixXd d_f1_pre = d_f1.array() * (1.0 - c.f1.array().square());
  grads.enc_ff1.W += d_f1_pre.transpose() * c.a2;
  grads.enc_ff1.b += d_f1_pre.colwise().sum().transpose();
  MatrixXd d_a2 = d_f1_pre * p.enc_ff1.W;
  d_e1 += detail::layer_norm_backward(d_a2, p.enc_ln2, c.ln2, grads.enc_ln2);

  // Encoder self-attention.
  MatrixXd d_pe = d_e1;
  detail::AttnInputGrads eg = detail::attention_backward(
      p.enc_attn, c.enc, c.a1, c.a1, p.cfg.n_heads, d_e1, grads.enc_attn);
  MatrixXd d_a1 = eg.d_q_in + eg.d_kv_in;
  d_pe += detail::layer_norm_backward(d_a1, p.enc_ln1, c.ln1, grads.enc_ln1);

  // Projections.
  grads.pe_proj.W += d_pe.transpose() * c.state;
  grads.pe_proj.b += d_pe.colwise().sum().transpose();
  grads.de_proj.W += d_de.transpose() * c.state;
  grads.de_proj.b += d_de.colwise().sum().transpose();
}

inline constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)

struct SampleResult {
  MatrixXd a;      // clipped to [0, 1]
  MatrixXd raw;    // pre-clip draw; log-density reference point
  double logp = 0.0;
};

inline double log_prob(const GaussianHead& head, const MatrixXd& a) {
  Eigen::ArrayXXd z = (a - head.mu).array() / head.sigma.array();
  return (-0.5 * z.square() - head.sigma.array().log() - 0.5 * kLog2Pi).sum();
}

inline double entropy(const GaussianHead& head) {
  return (head.sigma.array().log() + 0.5 * (kLog2Pi + 1.0)).sum();
}

inline SampleResult sample(const GaussianHead& head, Rng& rng) {
  SampleResult r;
  const auto n = head.mu.rows();
  const auto m = head.mu.cols();
  r.raw.resize(n, m);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      r.raw(i, j) = rng.normal(head.mu(i, j), head.sigma(i, j));
  r.a = r.raw.cwiseMax(0.0).cwiseMin(1.0);
  r.logp = log_prob(head, r.raw);
  return r;
}

}  // namespace metado::policy
