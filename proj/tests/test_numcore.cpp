/*
 * Copyright (c) 2026 The TVTS2 Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "tvts2/common.hpp"
#include "tvts2/graph.hpp"
#include "tvts2/optim.hpp"
#include "tvts2/tensor.hpp"

using namespace tvts2;

namespace {

Tensor<double> random_tensor(std::vector<int64_t> shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = rng.normal() * scale;
  return t;
}

// Plain three-loop product, the independent oracle for the matmul kernels.
Tensor<double> matmul_oracle(const Tensor<double>& a, const Tensor<double>& b,
                             bool transpose_b) {
  int64_t m = a.rows(), k = a.cols();
  int64_t n = transpose_b ? b.rows() : b.cols();
  Tensor<double> out = Tensor<double>::zeros({m, n});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0;
      for (int64_t l = 0; l < k; ++l)
        acc += a.at(i, l) * (transpose_b ? b.at(j, l) : b.at(l, j));
      out.at(i, j) = acc;
    }
  return out;
}

// Central-difference check of d(loss)/d(inputs) for a graph rebuilt from raw
// tensors. `build` must return a scalar output.
using BuildFn =
    std::function<Graph<double>::Var(Graph<double>&, const std::vector<Graph<double>::Var>&)>;

double eval_loss(const BuildFn& build, const std::vector<Tensor<double>>& inputs) {
  Graph<double> g(false);
  std::vector<Graph<double>::Var> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(g.leaf(t));
  return g.value(build(g, vars)).at(0);
}

double max_grad_error(const BuildFn& build, std::vector<Tensor<double>> inputs,
                      double eps = 1e-6) {
  Graph<double> g(true);
  std::vector<Graph<double>::Var> vars;
  for (const auto& t : inputs) vars.push_back(g.leaf(t));
  g.backward(build(g, vars));
  std::vector<Tensor<double>> grads;
  for (auto v : vars) grads.push_back(g.grad(v));

  double worst = 0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    for (int64_t c = 0; c < inputs[i].numel(); ++c) {
      double saved = inputs[i].at(c);
      inputs[i].at(c) = saved + eps;
      double fp = eval_loss(build, inputs);
      inputs[i].at(c) = saved - eps;
      double fm = eval_loss(build, inputs);
      inputs[i].at(c) = saved;
      double fd = (fp - fm) / (2 * eps);
      double an = grads[i].at(c);
      double err = std::fabs(an - fd) / std::max({1.0, std::fabs(an), std::fabs(fd)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

// Weighted sum makes every output coordinate matter with a distinct weight.
Graph<double>::Var weighted_sum(Graph<double>& g, Graph<double>::Var x) {
  const Tensor<double>& v = g.value(x);
  Tensor<double> w(v.shape);
  for (int64_t i = 0; i < w.numel(); ++i) w.at(i) = 0.1 * static_cast<double>(i % 7) + 0.3;
  return g.sum_all(g.mul(x, g.input(std::move(w))));
}

}  // namespace

TEST_CASE("rng is deterministic and well ranged") {
  Rng a(123), b(123), c(124);
  bool same = true, diff = false;
  for (int i = 0; i < 100; ++i) {
    uint64_t x = a.next_u64(), y = b.next_u64(), z = c.next_u64();
    same = same && (x == y);
    diff = diff || (x != z);
  }
  CHECK(same);
  CHECK(diff);

  Rng r(7);
  for (int i = 0; i < 1000; ++i) {
    double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(r.index(13) < 13u);
  }

  // moments of the normal generator over many draws
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double x = r.normal();
    sum += x;
    sq += x * x;
  }
  double mean = sum / n, var = sq / n - mean * mean;
  CHECK(std::fabs(mean) < 0.05);
  CHECK(std::fabs(var - 1.0) < 0.05);

  // forked streams differ from the parent and from each other
  Rng base(99);
  Rng f1 = base.fork(1), f2 = base.fork(2);
  CHECK(f1.next_u64() != f2.next_u64());
}

TEST_CASE("round half to even") {
  CHECK(round_half_even(0.5) == 0);
  CHECK(round_half_even(1.5) == 2);
  CHECK(round_half_even(2.5) == 2);
  CHECK(round_half_even(4.5) == 4);
  CHECK(round_half_even(2.3) == 2);
  CHECK(round_half_even(2.7) == 3);
  CHECK(round_half_even(7.0) == 7);
}

TEST_CASE("tensor layout is row major") {
  Tensor<double> t({2, 3});
  for (int64_t i = 0; i < 6; ++i) t.at(i) = static_cast<double>(i);
  CHECK(t.at(0, 2) == 2.0);
  CHECK(t.at(1, 0) == 3.0);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.numel() == 6);
}

TEST_CASE("matmul against the three-loop oracle") {
  Rng rng(11);
  for (auto [m, k, n] : {std::tuple<int, int, int>{1, 1, 1}, {3, 5, 2}, {8, 8, 8}, {7, 13, 4}}) {
    Tensor<double> a = random_tensor({m, k}, rng);
    Tensor<double> b = random_tensor({k, n}, rng);
    Tensor<double> bt = random_tensor({n, k}, rng);
    Graph<double> g(false);
    Tensor<double> got = g.value(g.matmul(g.input(a), g.input(b)));
    Tensor<double> got_nt = g.value(g.matmul_nt(g.input(a), g.input(bt)));
    Tensor<double> want = matmul_oracle(a, b, false);
    Tensor<double> want_nt = matmul_oracle(a, bt, true);
    for (int64_t i = 0; i < want.numel(); ++i) CHECK(got.at(i) == doctest::Approx(want.at(i)).epsilon(1e-12));
    for (int64_t i = 0; i < want_nt.numel(); ++i)
      CHECK(got_nt.at(i) == doctest::Approx(want_nt.at(i)).epsilon(1e-12));
  }
}

TEST_CASE("softmax and layer norm match hand-computed anchors") {
  Graph<double> g(false);
  Tensor<double> x({1, 3});
  x.at(0, 0) = 1;
  x.at(0, 1) = 2;
  x.at(0, 2) = 3;
  Tensor<double> sm = g.value(g.softmax_rows(g.input(x)));
  CHECK(sm.at(0, 0) == doctest::Approx(0.09003057).epsilon(1e-7));
  CHECK(sm.at(0, 1) == doctest::Approx(0.24472847).epsilon(1e-7));
  CHECK(sm.at(0, 2) == doctest::Approx(0.66524096).epsilon(1e-7));

  Tensor<double> gain = Tensor<double>::full({1, 3}, 1.0);
  Tensor<double> bias = Tensor<double>::zeros({1, 3});
  Tensor<double> ln =
      g.value(g.layer_norm(g.input(x), g.input(gain), g.input(bias), 1e-12));
  CHECK(ln.at(0, 0) == doctest::Approx(-1.22474487).epsilon(1e-7));
  CHECK(ln.at(0, 1) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(ln.at(0, 2) == doctest::Approx(1.22474487).epsilon(1e-7));
}

TEST_CASE("gelu matches the gaussian cdf form") {
  Graph<double> g(false);
  Tensor<double> x({1, 3});
  x.at(0, 0) = 0.0;
  x.at(0, 1) = 1.0;
  x.at(0, 2) = -2.0;
  Tensor<double> y = g.value(g.gelu(g.input(x)));
  CHECK(y.at(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(y.at(0, 1) == doctest::Approx(0.8413447461).epsilon(1e-9));
  CHECK(y.at(0, 2) == doctest::Approx(-2.0 * 0.0227501319).epsilon(1e-7));
}

TEST_CASE("cross entropy anchors") {
  Graph<double> g(false);
  // near-certain correct answer: loss is softplus(-margin)
  Tensor<double> logits({1, 2});
  logits.at(0, 0) = 10;
  logits.at(0, 1) = -10;
  double loss = g.value(g.cross_entropy(g.input(logits), {0})).at(0);
  CHECK(loss == doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-9));

  // uniform logits: loss is ln(number of classes) for every target
  Tensor<double> flat = Tensor<double>::zeros({3, 5});
  double lf = g.value(g.cross_entropy(g.input(flat), {0, 2, 4})).at(0);
  CHECK(lf == doctest::Approx(std::log(5.0)).epsilon(1e-12));

  CHECK_THROWS_AS((void)g.cross_entropy(g.input(flat), {0, 2, 5}), IndexError);
}

TEST_CASE("attention forward matches a brute-force oracle") {
  Rng rng(21);
  const int s = 5, dim = 6, heads = 2, dh = dim / heads;
  Tensor<double> q = random_tensor({s, dim}, rng), k = random_tensor({s, dim}, rng),
                 v = random_tensor({s, dim}, rng);
  for (bool causal : {false, true}) {
    Graph<double> g(false);
    Tensor<double> got =
        g.value(g.attention(g.input(q), g.input(k), g.input(v), heads, causal));
    for (int h = 0; h < heads; ++h)
      for (int i = 0; i < s; ++i) {
        int jmax = causal ? i + 1 : s;
        std::vector<double> row(static_cast<size_t>(jmax));
        double mx = -1e300;
        for (int j = 0; j < jmax; ++j) {
          double dot = 0;
          for (int c = 0; c < dh; ++c) dot += q.at(i, h * dh + c) * k.at(j, h * dh + c);
          row[static_cast<size_t>(j)] = dot / std::sqrt(static_cast<double>(dh));
          mx = std::max(mx, row[static_cast<size_t>(j)]);
        }
        double z = 0;
        for (double& r : row) {
          r = std::exp(r - mx);
          z += r;
        }
        for (int c = 0; c < dh; ++c) {
          double want = 0;
          for (int j = 0; j < jmax; ++j)
            want += row[static_cast<size_t>(j)] / z * v.at(j, h * dh + c);
          CHECK(got.at(i, h * dh + c) == doctest::Approx(want).epsilon(1e-10));
        }
      }
  }
}

TEST_CASE("every differentiable op passes a finite-difference check") {
  Rng rng(31);

  auto check = [&](const char* name, const BuildFn& build,
                   std::vector<Tensor<double>> inputs) {
    double err = max_grad_error(build, std::move(inputs));
    INFO(name);
    CHECK(err < 2e-8);
  };

  using G = Graph<double>;
  using Vars = std::vector<G::Var>;

  check("add+mul+scale",
        [](G& g, const Vars& v) {
          return g.sum_all(g.scale(g.mul(g.add(v[0], v[1]), v[1]), 0.7));
        },
        {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)});

  check("add_rowvec",
        [](G& g, const Vars& v) { return weighted_sum(g, g.add_rowvec(v[0], v[1])); },
        {random_tensor({4, 3}, rng), random_tensor({1, 3}, rng)});

  check("matmul",
        [](G& g, const Vars& v) { return weighted_sum(g, g.matmul(v[0], v[1])); },
        {random_tensor({3, 5}, rng), random_tensor({5, 2}, rng)});

  check("matmul_nt",
        [](G& g, const Vars& v) { return weighted_sum(g, g.matmul_nt(v[0], v[1])); },
        {random_tensor({3, 5}, rng), random_tensor({4, 5}, rng)});

  check("affine",
        [](G& g, const Vars& v) { return weighted_sum(g, g.affine(v[0], v[1], v[2])); },
        {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng), random_tensor({1, 2}, rng)});

  check("gelu", [](G& g, const Vars& v) { return weighted_sum(g, g.gelu(v[0])); },
        {random_tensor({3, 4}, rng)});

  check("layer_norm",
        [](G& g, const Vars& v) {
          return weighted_sum(g, g.layer_norm(v[0], v[1], v[2], 1e-10));
        },
        {random_tensor({3, 6}, rng), random_tensor({1, 6}, rng), random_tensor({1, 6}, rng)});

  check("softmax_rows",
        [](G& g, const Vars& v) { return weighted_sum(g, g.softmax_rows(v[0])); },
        {random_tensor({3, 5}, rng)});

  check("l2_normalize_rows",
        [](G& g, const Vars& v) { return weighted_sum(g, g.l2_normalize_rows(v[0])); },
        {random_tensor({3, 5}, rng)});

  check("gather_rows with repeats",
        [](G& g, const Vars& v) {
          return weighted_sum(g, g.gather_rows(v[0], {0, 2, 2, 1}));
        },
        {random_tensor({3, 4}, rng)});

  check("scatter+concat+mean",
        [](G& g, const Vars& v) {
          auto sc = g.scatter_rows(v[0], {2, 0, 3}, 5);
          auto cat = g.concat_rows({sc, v[1]});
          return weighted_sum(g, g.mean_rows(cat));
        },
        {random_tensor({3, 4}, rng), random_tensor({2, 4}, rng)});

  check("attention",
        [](G& g, const Vars& v) {
          return weighted_sum(g, g.attention(v[0], v[1], v[2], 2, false));
        },
        {random_tensor({4, 6}, rng, 0.5), random_tensor({4, 6}, rng, 0.5),
         random_tensor({4, 6}, rng, 0.5)});

  check("attention causal",
        [](G& g, const Vars& v) {
          return weighted_sum(g, g.attention(v[0], v[1], v[2], 3, true));
        },
        {random_tensor({5, 6}, rng, 0.5), random_tensor({5, 6}, rng, 0.5),
         random_tensor({5, 6}, rng, 0.5)});

  check("cross_entropy",
        [](G& g, const Vars& v) { return g.cross_entropy(v[0], {1, 0, 2}); },
        {random_tensor({3, 4}, rng)});

  check("add_positional",
        [](G& g, const Vars& v) { return weighted_sum(g, g.add_positional(v[0], v[1], v[2])); },
        {random_tensor({6, 4}, rng), random_tensor({3, 4}, rng), random_tensor({2, 4}, rng)});
}

TEST_CASE("stop_gradient blocks the backward path") {
  Rng rng(41);
  Graph<double> g(true);
  auto x = g.leaf(random_tensor({2, 3}, rng));
  auto y = g.sum_all(g.mul(g.stop_gradient(x), x));
  g.backward(y);
  Tensor<double> dx = g.grad(x);
  // d/dx of sg(x)*x is sg(x), the blocked factor contributes nothing
  const Tensor<double>& xv = g.value(x);
  for (int64_t i = 0; i < dx.numel(); ++i)
    CHECK(dx.at(i) == doctest::Approx(xv.at(i)).epsilon(1e-12));
}

TEST_CASE("parameter nodes are cached and reused within a graph") {
  Parameter<double> w("w", Tensor<double>::full({1, 2}, 3.0));
  Graph<double> g(true);
  auto a = g.param(w);
  auto b = g.param(w);
  CHECK(a.id == b.id);
  g.backward(g.sum_all(g.add(a, b)));
  ParamRefs<double> refs{&w};
  zero_grad(refs);
  g.accumulate_param_grads();
  CHECK(w.grad.at(0) == 2.0);
  CHECK(w.grad.at(1) == 2.0);
}

TEST_CASE("frozen parameters get no gradient") {
  Parameter<double> w("w", Tensor<double>::full({1, 2}, 3.0));
  w.frozen = true;
  Graph<double> g(true);
  auto a = g.param(w);
  g.backward(g.sum_all(g.mul(a, a)));
  ParamRefs<double> refs{&w};
  zero_grad(refs);
  g.accumulate_param_grads();
  CHECK(w.grad.at(0) == 0.0);
  CHECK(w.grad.at(1) == 0.0);
}

TEST_CASE("seeded multi-output backward equals backward of the seeded sum") {
  Rng rng(51);
  Tensor<double> xin = random_tensor({3, 4}, rng);
  Tensor<double> seed_a = random_tensor({3, 4}, rng);
  Tensor<double> seed_b = random_tensor({1, 4}, rng);

  Graph<double> g1(true);
  auto x1 = g1.leaf(xin);
  auto a1 = g1.gelu(x1);
  auto b1 = g1.mean_rows(g1.mul(x1, x1));
  g1.backward_seeded({{a1, seed_a}, {b1, seed_b}});
  Tensor<double> dx_seeded = g1.grad(x1);

  Graph<double> g2(true);
  auto x2 = g2.leaf(xin);
  auto a2 = g2.gelu(x2);
  auto b2 = g2.mean_rows(g2.mul(x2, x2));
  auto loss = g2.add(g2.sum_all(g2.mul(a2, g2.input(seed_a))),
                     g2.sum_all(g2.mul(b2, g2.input(seed_b))));
  g2.backward(loss);
  Tensor<double> dx_sum = g2.grad(x2);

  for (int64_t i = 0; i < dx_seeded.numel(); ++i)
    CHECK(dx_seeded.at(i) == doctest::Approx(dx_sum.at(i)).epsilon(1e-12));
}

TEST_CASE("softmax rejects non-finite inputs") {
  Graph<double> g(false);
  Tensor<double> bad({1, 2});
  bad.at(0, 0) = std::numeric_limits<double>::infinity();
  bad.at(0, 1) = 0;
  CHECK_THROWS_AS((void)g.softmax_rows(g.input(bad)), NumericError);
}

TEST_CASE("gather and scatter validate their indices") {
  Graph<double> g(false);
  auto x = g.input(Tensor<double>::zeros({3, 2}));
  CHECK_THROWS_AS((void)g.gather_rows(x, {0, 3}), IndexError);
  CHECK_THROWS_AS((void)g.scatter_rows(x, {0, 0, 1}, 4), ContractError);
  CHECK_THROWS_AS((void)g.scatter_rows(x, {0, 1, 4}, 4), IndexError);
}

TEST_CASE("adamw first step matches hand computation") {
  Parameter<double> w("w", Tensor<double>::full({1, 1}, 1.0));
  AdamWOptions opt;
  opt.lr_fresh = opt.lr_carried = 0.1;
  opt.weight_decay = 0.05;
  opt.beta1 = 0.9;
  opt.beta2 = 0.999;
  opt.eps = 1e-8;
  ParamRefs<double> refs{&w};
  AdamW<double> adam(refs, opt);

  zero_grad(refs);
  w.grad.at(0) = 1.0;
  adam.step();
  // decay multiplies by 1 - 0.1*0.05 = 0.995; the bias-corrected update is
  // 0.1 * 1/(1+1e-8)
  double expect = 0.995 - 0.1 / (1.0 + 1e-8);
  CHECK(w.value.at(0) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("adamw with zero gradient applies pure decay") {
  Parameter<double> w("w", Tensor<double>::full({1, 1}, 2.0));
  AdamWOptions opt;
  opt.lr_fresh = opt.lr_carried = 0.1;
  opt.weight_decay = 0.05;
  ParamRefs<double> refs{&w};
  AdamW<double> adam(refs, opt);
  zero_grad(refs);
  adam.step();
  CHECK(w.value.at(0) == doctest::Approx(2.0 * 0.995).epsilon(1e-12));
}

TEST_CASE("adamw refuses a step without accumulated gradients") {
  Parameter<double> w("w", Tensor<double>::full({1, 1}, 1.0));
  ParamRefs<double> refs{&w};
  AdamW<double> adam(refs, AdamWOptions{});
  CHECK_THROWS_AS(adam.step(), ContractError);
}

TEST_CASE("adamw honors freezing and learning-rate groups") {
  Parameter<double> frozen("a", Tensor<double>::full({1, 1}, 1.0));
  frozen.frozen = true;
  Parameter<double> fresh("b", Tensor<double>::full({1, 1}, 1.0), ParamGroup::Fresh);
  Parameter<double> carried("c", Tensor<double>::full({1, 1}, 1.0), ParamGroup::Carried);
  AdamWOptions opt;
  opt.lr_fresh = 0.2;
  opt.lr_carried = 0.01;
  opt.weight_decay = 0.0;
  ParamRefs<double> refs{&frozen, &fresh, &carried};
  AdamW<double> adam(refs, opt);
  CHECK(adam.trainable_count() == 2);
  zero_grad(refs);
  frozen.grad.at(0) = 5.0;  // must be ignored entirely
  fresh.grad.at(0) = 1.0;
  carried.grad.at(0) = 1.0;
  adam.step();
  CHECK(frozen.value.at(0) == 1.0);
  CHECK(fresh.value.at(0) == doctest::Approx(1.0 - 0.2 / (1.0 + 1e-8)).epsilon(1e-10));
  CHECK(carried.value.at(0) == doctest::Approx(1.0 - 0.01 / (1.0 + 1e-8)).epsilon(1e-10));
}
