#include <cmath>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "riskgraph/rng.hpp"
#include "riskgraph/sha256.hpp"

using namespace riskgraph;

TEST_CASE("sha256 matches the NIST reference vectors") {
  CHECK(sha256_hex(std::string()) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex(std::string("abc")) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex(std::string("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq")) ==
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
  // One-million 'a' (streamed through the incremental interface).
  Sha256 h;
  std::string chunk(1000, 'a');
  for (int i = 0; i < 1000; ++i) h.update(chunk);
  CHECK(h.hex_digest() == "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0");
}

TEST_CASE("sha256 incremental equals one-shot and file hashing") {
  std::string msg = "the quick brown fox jumps over the lazy dog, twice over";
  Sha256 h;
  h.update(msg.substr(0, 7));
  h.update(msg.substr(7));
  CHECK(h.hex_digest() == sha256_hex(msg));

  std::string path = "/tmp/riskgraph_sha_test.bin";
  std::FILE* f = std::fopen(path.c_str(), "wb");
  REQUIRE(f != nullptr);
  std::fwrite(msg.data(), 1, msg.size(), f);
  std::fclose(f);
  CHECK(sha256_file_hex(path) == sha256_hex(msg));
}

TEST_CASE("rng streams are deterministic per seed") {
  Rng a(123), b(123), c(124);
  bool same = true, diff = false;
  for (int i = 0; i < 100; ++i) {
    uint64_t va = a.next_u64();
    same = same && va == b.next_u64();
    diff = diff || va != c.next_u64();
  }
  CHECK(same);
  CHECK(diff);
}

TEST_CASE("uniform stays in [0,1) and fills the range") {
  Rng rng(7);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 20000; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("uniform_index is unbiased across buckets") {
  Rng rng(99);
  std::vector<int> counts(10, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[rng.uniform_index(10)];
  for (int c : counts) {
    CHECK(c > n / 10 - 600);  // ~6 sigma for p=0.1
    CHECK(c < n / 10 + 600);
  }
}

TEST_CASE("uniform_int includes both endpoints") {
  Rng rng(5);
  std::set<int> seen;
  for (int i = 0; i < 1000; ++i) seen.insert(rng.uniform_int(-2, 3));
  CHECK(seen == std::set<int>{-2, -1, 0, 1, 2, 3});
}

TEST_CASE("normal moments match the standard distribution") {
  Rng rng(11);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    double v = rng.normal();
    sum += v;
    sq += v * v;
  }
  double mean = sum / n;
  double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("truncated_normal never leaves its bounds") {
  Rng rng(13);
  for (int i = 0; i < 20000; ++i) {
    double v = rng.truncated_normal(5.0, 10.0, 4.0, 6.0);
    CHECK(v >= 4.0);
    CHECK(v <= 6.0);
  }
  // Impossible window still terminates (clamp fallback).
  double v = rng.truncated_normal(0.0, 0.001, 50.0, 51.0);
  CHECK(v >= 50.0);
  CHECK(v <= 51.0);
}

TEST_CASE("poisson mean tracks lambda") {
  Rng rng(17);
  const int n = 50000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += rng.poisson(3.0);
  CHECK(std::abs(sum / n - 3.0) < 0.05);
}

TEST_CASE("categorical follows the weight vector and rejects bad input") {
  Rng rng(19);
  std::vector<double> w = {1.0, 0.0, 3.0};
  std::vector<int> counts(3, 0);
  const int n = 40000;
  for (int i = 0; i < n; ++i) ++counts[rng.categorical(w)];
  CHECK(counts[1] == 0);
  CHECK(std::abs(counts[0] / double(n) - 0.25) < 0.02);
  CHECK(std::abs(counts[2] / double(n) - 0.75) < 0.02);
  CHECK_THROWS(rng.categorical({}));
  CHECK_THROWS(rng.categorical({-1.0, 2.0}));
  CHECK_THROWS(rng.categorical({0.0, 0.0}));
}

TEST_CASE("shuffle permutes and differs across seeds") {
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[size_t(i)] = i;
  std::vector<int> a = v, b = v;
  Rng r1(1), r2(2);
  r1.shuffle(a);
  r2.shuffle(b);
  std::set<int> sa(a.begin(), a.end());
  CHECK(sa.size() == 50);
  CHECK(a != b);
  std::vector<int> a2 = v;
  Rng r1b(1);
  r1b.shuffle(a2);
  CHECK(a == a2);
}

TEST_CASE("sub_rng derives independent labeled streams") {
  CHECK(fnv1a64("alpha") != fnv1a64("beta"));
  CHECK(fnv1a64("alpha") == fnv1a64("alpha"));
  Rng a = sub_rng(42, "stage/one");
  Rng b = sub_rng(42, "stage/two");
  Rng a2 = sub_rng(42, "stage/one");
  CHECK(a.next_u64() != b.next_u64());
  Rng a3 = sub_rng(42, "stage/one");
  CHECK(a3.next_u64() == a2.next_u64());
}
