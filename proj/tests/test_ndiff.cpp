#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "riskgraph/ndiff.hpp"

using namespace riskgraph;
using Tape = nd::Tape<double>;
using Store = nd::ParamStore<double>;

namespace {

// Builds a scalar from arbitrary leaves; returns the scalar tape id.
using BuildFn = std::function<int(Tape&, std::map<std::string, int>&)>;

std::map<std::string, int> make_leaves(Tape& t, Store& P) {
  std::map<std::string, int> ids;
  for (auto& [name, p] : P) ids[name] = t.leaf(p);
  return ids;
}

double forward_value(Store& P, const BuildFn& build) {
  Tape t;
  auto ids = make_leaves(t, P);
  int out = build(t, ids);
  return t.val(out)[0];
}

// Central finite differences on every coordinate of every parameter against
// the analytic reverse-mode gradient, with a relative tolerance floored at 1.
void fd_check(Store& P, const BuildFn& build, double tol = 1e-6) {
  nd::zero_grads(P);
  {
    Tape t;
    auto ids = make_leaves(t, P);
    int out = build(t, ids);
    t.backward(out);
  }
  std::map<std::string, std::vector<double>> analytic;
  for (auto& [name, p] : P) analytic[name] = p.grad;

  const double h = 1e-6;
  for (auto& [name, p] : P) {
    for (size_t i = 0; i < p.value.size(); ++i) {
      double keep = p.value[i];
      p.value[i] = keep + h;
      double fp = forward_value(P, build);
      p.value[i] = keep - h;
      double fm = forward_value(P, build);
      p.value[i] = keep;
      double fd = (fp - fm) / (2.0 * h);
      double an = analytic[name][i];
      double rel = std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
      INFO(name, "[", i, "] fd=", fd, " analytic=", an);
      CHECK(rel <= tol);
    }
  }
}

// Reduces a tape node of any shape to a scalar via fixed random weights.
int reduce_scalar(Tape& t, int y, uint64_t seed) {
  const nd::Shape& s = t.shape(y);
  int flat = nd::reshape(t, y, nd::s2(1, s.numel()));
  Rng rng(seed);
  std::vector<double> w(size_t(s.numel()));
  for (double& v : w) v = rng.uniform(-1.0, 1.0);
  int wc = t.constant(nd::s2(s.numel(), 1), std::move(w));
  return nd::sum_all(t, nd::matmul(t, flat, wc));
}

Store random_store(const std::vector<std::pair<std::string, nd::Shape>>& specs, uint64_t seed,
                   double away_from_zero = 0.0) {
  Store P;
  Rng rng(seed);
  for (const auto& [name, shape] : specs) {
    auto& p = nd::add_param(P, name, shape);
    for (double& v : p.value) {
      v = rng.uniform(-2.0, 2.0);
      if (away_from_zero > 0.0 && std::abs(v) < away_from_zero)
        v = v < 0 ? v - away_from_zero : v + away_from_zero;
    }
  }
  return P;
}

}  // namespace

TEST_CASE("finite differences validate every elementwise and shaping op") {
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    Store P = random_store({{"a", nd::s2(3, 4)}, {"b", nd::s2(3, 4)}, {"bias", nd::s1(4)}}, seed,
                           0.05);
    fd_check(P, [seed](Tape& t, std::map<std::string, int>& ids) {
      int sum = nd::add(t, ids["a"], ids["b"]);
      int scaled = nd::scale(t, sum, -1.7);
      int biased = nd::add_bias(t, scaled, ids["bias"]);
      int rl = nd::relu(t, biased);
      int rs = nd::reshape(t, rl, nd::s2(4, 3));
      int sl = nd::slice_cols(t, rs, 1, 3);
      return reduce_scalar(t, sl, seed);
    });
  }
}

TEST_CASE("finite differences validate matmul and bmm on both operands") {
  for (uint64_t seed : {4ull, 5ull, 6ull}) {
    Store P = random_store({{"a", nd::s2(3, 4)}, {"b", nd::s2(4, 2)}}, seed);
    fd_check(P, [seed](Tape& t, std::map<std::string, int>& ids) {
      return reduce_scalar(t, nd::matmul(t, ids["a"], ids["b"]), seed);
    });

    Store Q = random_store({{"a", nd::s3(2, 3, 4)}, {"b", nd::s3(2, 4, 2)}}, seed + 100);
    fd_check(Q, [seed](Tape& t, std::map<std::string, int>& ids) {
      return reduce_scalar(t, nd::bmm(t, ids["a"], ids["b"]), seed);
    });
  }
}

TEST_CASE("finite differences validate concatenation and gathering") {
  for (uint64_t seed : {7ull, 8ull}) {
    Store P = random_store({{"a", nd::s2(3, 2)}, {"b", nd::s2(3, 4)}, {"c", nd::s2(2, 6)}}, seed);
    fd_check(P, [seed](Tape& t, std::map<std::string, int>& ids) {
      int cols = nd::concat_cols(t, {ids["a"], ids["b"]});   // [3,6]
      int rows = nd::concat_rows(t, {cols, ids["c"]});       // [5,6]
      int gathered = nd::gather_rows(t, rows, {4, -1, 0, 2, 2});
      return reduce_scalar(t, gathered, seed);
    });
  }
}

TEST_CASE("finite differences validate segment means with empty segments") {
  for (uint64_t seed : {9ull, 10ull}) {
    Store P = random_store({{"x", nd::s2(5, 3)}}, seed);
    fd_check(P, [seed](Tape& t, std::map<std::string, int>& ids) {
      std::vector<std::vector<int64_t>> segs = {{0, 1, 2}, {}, {4}, {3, 3}};
      return reduce_scalar(t, nd::segment_mean_rows(t, ids["x"], segs), seed);
    });
  }
}

TEST_CASE("finite differences validate layer norm on input and affine terms") {
  for (uint64_t seed : {11ull, 12ull, 13ull}) {
    Store P = random_store({{"x", nd::s2(4, 6)}, {"gamma", nd::s1(6)}, {"beta", nd::s1(6)}}, seed);
    fd_check(P, [seed](Tape& t, std::map<std::string, int>& ids) {
      return reduce_scalar(t, nd::layer_norm(t, ids["x"], ids["gamma"], ids["beta"]), seed);
    }, 1e-5);
  }
}

TEST_CASE("finite differences validate masked softmax including a dead row") {
  for (uint64_t seed : {14ull, 15ull}) {
    Store P = random_store({{"x", nd::s2(3, 4)}}, seed);
    fd_check(P, [seed](Tape& t, std::map<std::string, int>& ids) {
      std::vector<uint8_t> mask = {1, 1, 0, 1,
                                   0, 0, 0, 0,   // fully masked row stays zero
                                   1, 0, 1, 1};
      return reduce_scalar(t, nd::softmax_masked(t, ids["x"], mask), seed);
    });
  }
}

TEST_CASE("masked softmax rows sum to one over the mask and zero elsewhere") {
  Store P = random_store({{"x", nd::s2(2, 5)}}, 77);
  Tape t;
  auto ids = make_leaves(t, P);
  std::vector<uint8_t> mask = {1, 0, 1, 1, 0, 0, 0, 0, 0, 0};
  int y = nd::softmax_masked(t, ids["x"], mask);
  const auto& v = t.val(y);
  CHECK(v[0] + v[2] + v[3] == doctest::Approx(1.0));
  CHECK(v[1] == 0.0);
  CHECK(v[4] == 0.0);
  for (int j = 0; j < 5; ++j) CHECK(v[size_t(5 + j)] == 0.0);
}

TEST_CASE("finite differences validate dropout with a reproducible mask") {
  for (uint64_t seed : {16ull, 17ull}) {
    Store P = random_store({{"x", nd::s2(4, 5)}}, seed);
    fd_check(P, [seed](Tape& t, std::map<std::string, int>& ids) {
      Rng rng(seed * 31 + 1);  // fresh identical stream per evaluation
      int y = nd::dropout(t, ids["x"], 0.4, rng);
      return reduce_scalar(t, y, seed);
    });
  }
  Store P = random_store({{"x", nd::s2(1, 3)}}, 5);
  Tape t;
  auto ids = make_leaves(t, P);
  Rng rng(1);
  CHECK_THROWS(nd::dropout(t, ids["x"], 1.0, rng));
}

TEST_CASE("finite differences validate entry selection and weighted cross entropy") {
  for (uint64_t seed : {18ull, 19ull, 20ull}) {
    Store P = random_store({{"logits", nd::s2(4, 3)}}, seed);
    fd_check(P, [](Tape& t, std::map<std::string, int>& ids) {
      return nd::select_entry(t, ids["logits"], 2, 1);
    });
    fd_check(P, [](Tape& t, std::map<std::string, int>& ids) {
      return nd::weighted_cross_entropy(t, ids["logits"], {0, 2, 1, 2}, {1.0, 2.5, 0.5});
    });
  }
}

TEST_CASE("cross entropy value matches a direct computation") {
  Store P;
  auto& p = nd::add_param(P, "logits", nd::s2(1, 3));
  p.value = {1.0, 2.0, 0.5};
  Tape t;
  auto ids = make_leaves(t, P);
  int loss = nd::weighted_cross_entropy(t, ids["logits"], {1}, {1.0, 1.0, 1.0});
  double denom = std::exp(1.0) + std::exp(2.0) + std::exp(0.5);
  CHECK(t.val(loss)[0] == doctest::Approx(-std::log(std::exp(2.0) / denom)));
  CHECK_THROWS(nd::weighted_cross_entropy(t, ids["logits"], {3}, {1.0, 1.0, 1.0}));
  CHECK_THROWS(nd::weighted_cross_entropy(t, ids["logits"], {0, 1}, {1.0, 1.0, 1.0}));
}

TEST_CASE("backward counter tracks reverse passes only") {
  Store P = random_store({{"x", nd::s2(2, 2)}}, 3);
  int64_t before = nd::backward_invocations();
  {
    Tape t;
    auto ids = make_leaves(t, P);
    reduce_scalar(t, nd::relu(t, ids["x"]), 3);
  }
  CHECK(nd::backward_invocations() == before);  // forward-only
  {
    Tape t;
    auto ids = make_leaves(t, P);
    int out = reduce_scalar(t, nd::relu(t, ids["x"]), 3);
    t.backward(out);
  }
  CHECK(nd::backward_invocations() == before + 1);
}

TEST_CASE("backward rejects non-scalar and constant targets") {
  Store P = random_store({{"x", nd::s2(2, 2)}}, 4);
  Tape t;
  auto ids = make_leaves(t, P);
  CHECK_THROWS(t.backward(ids["x"]));
  int c = t.constant(nd::s1(1), {5.0});
  CHECK_THROWS(t.backward(c));
}

TEST_CASE("adam minimizes a quadratic and rejects non-finite gradients") {
  Store P;
  auto& p = nd::add_param(P, "w", nd::s1(4));
  p.value = {5.0, -3.0, 2.0, 8.0};
  nd::AdamState<double> opt;
  opt.lr = 0.1;
  for (int step = 0; step < 400; ++step) {
    nd::zero_grads(P);
    Tape t;
    int w = t.leaf(P.at("w"));
    int sq = nd::sum_all(t, nd::matmul(t, nd::reshape(t, w, nd::s2(1, 4)),
                                       nd::reshape(t, w, nd::s2(4, 1))));
    t.backward(sq);
    opt.step(P);
  }
  for (double v : P.at("w").value) CHECK(std::abs(v) < 1e-3);

  P.at("w").grad[0] = std::nan("");
  CHECK_THROWS(opt.step(P));
}
