#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "metado/policy.hpp"
#include "metado/rng.hpp"

using namespace metado;
using namespace metado::policy;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

PolicyConfig tiny_config() {
  PolicyConfig cfg;
  cfg.state_dim = 10;
  cfg.d_model = 8;
  cfg.n_heads = 4;
  cfg.d_ff = 16;
  cfg.critic_hidden = 8;
  cfg.action_dim = 3;
  return cfg;
}

MatrixXd random_state(Rng& rng, int n, int dim) {
  MatrixXd s(n, dim);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < dim; ++j) s(i, j) = rng.uniform(-1.0, 1.5);
  return s;
}

struct TensorRef {
  std::string name;
  double* data;
  Eigen::Index size;
};

std::vector<TensorRef> tensor_refs(PolicyParams& p) {
  std::vector<TensorRef> refs;
  for_each_tensor(p, [&](const char* name, auto& t) {
    refs.push_back({name, t.data(), t.size()});
  });
  return refs;
}

// d(logp)/d(mu) and d(logp)/d(sigma) at a fixed evaluation point.
void logp_grads(const GaussianHead& head, const MatrixXd& a, MatrixXd& d_mu,
                MatrixXd& d_sigma) {
  Eigen::ArrayXXd z = (a - head.mu).array() / head.sigma.array();
  d_mu = (z / head.sigma.array()).matrix();
  d_sigma = ((z.square() - 1.0) / head.sigma.array()).matrix();
}

void check_all_gradients(const PolicyParams& params, const MatrixXd& state,
                         const PolicyParams& analytic,
                         const std::function<double(const PolicyParams&)>& loss) {
  const double h = 1e-4;
  PolicyParams work = params;
  std::vector<TensorRef> refs = tensor_refs(work);
  PolicyParams grads_copy = analytic;
  std::vector<TensorRef> grefs = tensor_refs(grads_copy);
  REQUIRE(refs.size() == grefs.size());

  for (std::size_t t = 0; t < refs.size(); ++t) {
    REQUIRE(refs[t].size == grefs[t].size);
    INFO("tensor " << refs[t].name);
    for (Eigen::Index k = 0; k < refs[t].size; ++k) {
      double saved = refs[t].data[k];
      refs[t].data[k] = saved + h;
      double up = loss(work);
      refs[t].data[k] = saved - h;
      double down = loss(work);
      refs[t].data[k] = saved;
      double fd = (up - down) / (2.0 * h);
      double an = grefs[t].data[k];
      double tol = 1e-3 * std::max({std::abs(fd), std::abs(an), 1e-4});
      INFO("element " << k << " fd=" << fd << " analytic=" << an);
      REQUIRE(std::abs(fd - an) <= tol);
    }
  }
}

}  // namespace

TEST_CASE("analytic gradients match central differences everywhere") {
  Rng rng(2024);
  PolicyConfig cfg = tiny_config();
  PolicyParams params = init_params(cfg, rng);
  MatrixXd state = random_state(rng, 3, cfg.state_dim);

  ForwardResult fr = forward(params, state);
  MatrixXd a_ref = fr.head.mu;
  for (Eigen::Index i = 0; i < a_ref.size(); ++i)
    a_ref(i) += rng.uniform(-0.3, 0.3);

  SECTION("log-density plus value") {
    MatrixXd d_mu, d_sigma;
    logp_grads(fr.head, a_ref, d_mu, d_sigma);
    PolicyParams analytic = zeros_like(params);
    backward(params, fr.cache, d_mu, d_sigma, 1.0, analytic);
    check_all_gradients(params, state, analytic, [&](const PolicyParams& p) {
      ForwardResult r = forward(p, state);
      return log_prob(r.head, a_ref) + r.value;
    });
  }

  SECTION("entropy") {
    MatrixXd d_mu = MatrixXd::Zero(3, cfg.action_dim);
    MatrixXd d_sigma = fr.head.sigma.cwiseInverse();
    PolicyParams analytic = zeros_like(params);
    backward(params, fr.cache, d_mu, d_sigma, 0.0, analytic);
    check_all_gradients(params, state, analytic, [&](const PolicyParams& p) {
      return entropy(forward(p, state).head);
    });
  }
}

TEST_CASE("outputs permute with the rows and the value does not") {
  Rng rng(31);
  PolicyConfig cfg = tiny_config();
  PolicyParams params = init_params(cfg, rng);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 2 + static_cast<int>(rng.below(31));
    MatrixXd state = random_state(rng, n, cfg.state_dim);
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm.begin(), perm.end());
    MatrixXd permuted(n, cfg.state_dim);
    for (int i = 0; i < n; ++i) permuted.row(i) = state.row(perm[i]);

    ForwardResult base = forward(params, state);
    ForwardResult got = forward(params, permuted);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < cfg.action_dim; ++c) {
        REQUIRE(got.head.mu(i, c) ==
                Catch::Approx(base.head.mu(perm[i], c)).margin(1e-5));
        REQUIRE(got.head.sigma(i, c) ==
                Catch::Approx(base.head.sigma(perm[i], c)).margin(1e-5));
      }
    REQUIRE(got.value == Catch::Approx(base.value).margin(1e-5));
  }
}

TEST_CASE("heads stay inside their squashed ranges") {
  Rng rng(77);
  PolicyConfig cfg = tiny_config();
  PolicyParams params = init_params(cfg, rng);
  for (int trial = 0; trial < 50; ++trial) {
    MatrixXd state = 3.0 * random_state(rng, 6, cfg.state_dim);
    ForwardResult r = forward(params, state);
    for (Eigen::Index i = 0; i < r.head.mu.size(); ++i) {
      REQUIRE(r.head.mu(i) >= 0.0);
      REQUIRE(r.head.mu(i) <= 1.0);
      REQUIRE(r.head.sigma(i) >= cfg.sigma_min);
      REQUIRE(r.head.sigma(i) <= cfg.sigma_max);
    }
  }
}

TEST_CASE("gaussian density integrates to one") {
  GaussianHead head;
  head.mu = MatrixXd::Constant(1, 1, 0.3);
  head.sigma = MatrixXd::Constant(1, 1, 0.25);

  double lo = 0.3 - 8 * 0.25, hi = 0.3 + 8 * 0.25;
  int steps = 4000;  // Simpson needs an even count
  double dx = (hi - lo) / steps;
  double acc = 0.0;
  for (int i = 0; i <= steps; ++i) {
    MatrixXd a = MatrixXd::Constant(1, 1, lo + i * dx);
    double w = (i == 0 || i == steps) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    acc += w * std::exp(log_prob(head, a));
  }
  REQUIRE(acc * dx / 3.0 == Catch::Approx(1.0).margin(1e-6));

  MatrixXd at_mu = MatrixXd::Constant(1, 1, 0.3);
  REQUIRE(log_prob(head, at_mu) ==
          Catch::Approx(-std::log(0.25) - 0.5 * kLog2Pi));
}

TEST_CASE("entropy of a unit gaussian is the textbook constant") {
  GaussianHead head;
  head.mu = MatrixXd::Zero(2, 3);
  head.sigma = MatrixXd::Constant(2, 3, 1.0);
  REQUIRE(entropy(head) == Catch::Approx(6 * 0.5 * (kLog2Pi + 1.0)));
}

TEST_CASE("sampling follows the head and clips only the applied action") {
  GaussianHead head;
  head.mu = MatrixXd::Constant(1, 1, 0.9);
  head.sigma = MatrixXd::Constant(1, 1, 0.5);
  Rng rng(4242);

  double sum = 0.0, sq = 0.0;
  int clipped = 0;
  const int draws = 50000;
  for (int i = 0; i < draws; ++i) {
    SampleResult s = sample(head, rng);
    REQUIRE(s.a(0, 0) == std::clamp(s.raw(0, 0), 0.0, 1.0));
    REQUIRE(s.logp == log_prob(head, s.raw));
    sum += s.raw(0, 0);
    sq += s.raw(0, 0) * s.raw(0, 0);
    if (s.a(0, 0) != s.raw(0, 0)) ++clipped;
  }
  double mean = sum / draws;
  double sd = std::sqrt(sq / draws - mean * mean);
  REQUIRE(mean == Catch::Approx(0.9).margin(0.01));
  REQUIRE(sd == Catch::Approx(0.5).margin(0.01));
  REQUIRE(clipped > draws / 10);  // mu near the edge, wide sigma
}

TEST_CASE("initialization is seeded, float-snapped, and fan-in scaled") {
  PolicyConfig cfg = tiny_config();
  Rng r1(9), r2(9), r3(10);
  PolicyParams a = init_params(cfg, r1);
  PolicyParams b = init_params(cfg, r2);
  PolicyParams c = init_params(cfg, r3);

  bool identical = true, differs = false;
  for_each_tensor(a, [&](const char* name, auto& t) {
    for_each_tensor(b, [&](const char* bname, auto& bt) {
      if (std::string(name) != bname) return;
      if ((t.array() != bt.array()).any()) identical = false;
    });
    for_each_tensor(c, [&](const char* cname, auto& ct) {
      if (std::string(name) != cname) return;
      if ((t.array() != ct.array()).any()) differs = true;
    });
    for (Eigen::Index k = 0; k < t.size(); ++k)
      REQUIRE(t.data()[k] == static_cast<double>(static_cast<float>(t.data()[k])));
  });
  REQUIRE(identical);
  REQUIRE(differs);

  double bound = 1.0 / std::sqrt(static_cast<double>(cfg.state_dim));
  for (Eigen::Index k = 0; k < a.pe_proj.W.size(); ++k)
    REQUIRE(std::abs(a.pe_proj.W.data()[k]) <= bound);
  REQUIRE((a.enc_ln1.gamma.array() == 1.0).all());
  REQUIRE((a.enc_ln1.beta.array() == 0.0).all());
}

TEST_CASE("tensor walk order is stable") {
  std::vector<std::string> expected = {
      "pe_proj.weight",        "pe_proj.bias",
      "de_proj.weight",        "de_proj.bias",
      "encoder.ln1.gamma",     "encoder.ln1.beta",
      "encoder.attn.q.weight", "encoder.attn.q.bias",
      "encoder.attn.k.weight", "encoder.attn.k.bias",
      "encoder.attn.v.weight", "encoder.attn.v.bias",
      "encoder.attn.out.weight", "encoder.attn.out.bias",
      "encoder.ln2.gamma",     "encoder.ln2.beta",
      "encoder.ff1.weight",    "encoder.ff1.bias",
      "encoder.ff2.weight",    "encoder.ff2.bias",
      "decoder.ln.gamma",      "decoder.ln.beta",
      "decoder.attn.q.weight", "decoder.attn.q.bias",
      "decoder.attn.k.weight", "decoder.attn.k.bias",
      "decoder.attn.v.weight", "decoder.attn.v.bias",
      "decoder.attn.out.weight", "decoder.attn.out.bias",
      "mu_head.weight",        "mu_head.bias",
      "sigma_head.weight",     "sigma_head.bias",
      "critic.hidden.weight",  "critic.hidden.bias",
      "critic.out.weight",     "critic.out.bias"};
  Rng rng(1);
  PolicyParams p = init_params(tiny_config(), rng);
  std::size_t idx = 0;
  for_each_tensor(p, [&](const char* name, auto&) {
    REQUIRE(idx < expected.size());
    REQUIRE(expected[idx] == name);
    ++idx;
  });
  REQUIRE(idx == expected.size());
}

TEST_CASE("malformed inputs and configs are rejected") {
  Rng rng(5);
  PolicyConfig cfg = tiny_config();
  PolicyParams p = init_params(cfg, rng);

  REQUIRE_THROWS_AS(forward(p, MatrixXd::Zero(2, cfg.state_dim + 1)),
                    std::invalid_argument);
  MatrixXd bad = MatrixXd::Zero(2, cfg.state_dim);
  bad(1, 3) = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(forward(p, bad), std::invalid_argument);

  PolicyConfig odd = cfg;
  odd.d_model = 10;  // not divisible by four heads
  REQUIRE_THROWS_AS(init_params(odd, rng), std::invalid_argument);
}

TEST_CASE("zeroed gradient buffers keep shapes and clear values") {
  Rng rng(6);
  PolicyParams p = init_params(tiny_config(), rng);
  PolicyParams g = zeros_like(p);
  for_each_tensor(g, [&](const char*, auto& t) {
    REQUIRE(t.size() > 0);
    REQUIRE((t.array() == 0.0).all());
  });
  REQUIRE(g.pe_proj.W.rows() == p.pe_proj.W.rows());
  REQUIRE(g.pe_proj.W.cols() == p.pe_proj.W.cols());
}
