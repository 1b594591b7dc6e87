#include <cmath>
#include <cstdio>
#include <filesystem>

#include "common/error.hpp"
#include "doctest.h"
#include "numerics/checkpoint.hpp"
#include "numerics/grad_check.hpp"
#include "numerics/ops.hpp"

using namespace elcorec;
using namespace elcorec::nn;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool grad = false) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

// Weighted sum with fixed random weights, so every output coordinate matters.
Tensor probe(const Tensor& t, std::uint64_t seed) {
  Rng rng(seed);
  auto w = random_tensor(t.shape(), rng);
  return sum(mul(t, w));
}

}  // namespace

TEST_CASE("matmul examples") {
  auto id = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto a = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto r = matmul(id, a);
  CHECK(std::vector<double>(r.values().begin(), r.values().end()) == std::vector<double>{1, 2, 3, 4});

  auto z = matmul(Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 1}, {0, 0}));
  CHECK(z.shape() == Shape{1, 1});
  CHECK(z.item() == 0.0);

  auto c = matmul(a, Tensor::from({2, 1}, {5, 6}));
  CHECK(c.at(0, 0) == 17.0);
  CHECK(c.at(1, 0) == 39.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({2, 3});
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul by identity is exact") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng.integer(0, 6), n = 1 + rng.integer(0, 6);
    auto a = random_tensor({m, n}, rng, -100, 100);
    std::vector<double> iv(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) iv[i * n + i] = 1.0;
    auto r = matmul(a, Tensor::from({n, n}, iv));
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(r.values()[i] == a.values()[i]);
  }
}

TEST_CASE("softmax examples") {
  auto one = softmax(Tensor::from({1}, {42.0}));
  CHECK(one.item() == doctest::Approx(1.0).epsilon(1e-15));
  auto half = softmax(Tensor::from({2}, {0, 0}));
  CHECK(half.at(0) == 0.5);
  CHECK(half.at(1) == 0.5);
  auto s = softmax(Tensor::from({3}, {1, 2, 3}));
  CHECK(s.at(0) == doctest::Approx(0.0900305731703805).epsilon(1e-12));
  CHECK(s.at(1) == doctest::Approx(0.2447284710547977).epsilon(1e-12));
  CHECK(s.at(2) == doctest::Approx(0.6652409557748219).epsilon(1e-12));
  CHECK_THROWS_AS(softmax(std::span<const double>{}), DomainError);
}

TEST_CASE("softmax sums to one for large inputs") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.integer(0, 30);
    auto v = random_tensor({n}, rng, -500, 500);
    auto s = softmax(v);
    double total = 0.0;
    for (double x : s.values()) {
      CHECK(x >= 0.0);
      CHECK(std::isfinite(x));
      total += x;
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("leaky_relu and sigmoid examples") {
  auto y = leaky_relu(Tensor::from({3}, {1.0, 0.0, -1.0}), 0.2);
  CHECK(y.at(0) == 1.0);
  CHECK(y.at(1) == 0.0);
  CHECK(y.at(2) == doctest::Approx(-0.2).epsilon(1e-15));
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(1.0) == doctest::Approx(0.731059).epsilon(1e-6));
  CHECK(sigmoid(-1.0) == doctest::Approx(0.268941).epsilon(1e-6));
  double prev = 0.0;
  for (double x = -30; x <= 30; x += 0.5) {
    const double s = sigmoid(x);
    CHECK(s > prev);
    prev = s;
  }
}

TEST_CASE("grad_check examples") {
  ParamStore ps;
  ps.add("x", Tensor::from({3}, {0.3, -1.2, 2.5}));
  auto& x = ps.get("x");
  auto r1 = grad_check([&] { return sum(x); }, ps, 1e-3);
  CHECK(r1.max_relative_error <= 1e-10);

  ParamStore sq;
  sq.add("x", Tensor::from({2}, {1, 2}));
  auto& y = sq.get("x");
  auto r2 = grad_check([&] { return sum(mul(y, y)); }, sq, 1e-5);
  CHECK(r2.max_relative_error <= 1e-6);

  CHECK_THROWS_AS(grad_check([&] { return sum(x); }, ps, 1.0), DomainError);
  CHECK_THROWS_AS(grad_check([&] { return log(scale(sum(x), 0.0)); }, ps, 1e-5), DomainError);
}

TEST_CASE("grad_check flags non-finite losses") {
  ParamStore ps;
  ps.add("x", Tensor::from({1}, {1e308}));
  auto& x = ps.get("x");
  CHECK_THROWS_AS(grad_check([&] { return sum(mul(x, x)); }, ps, 1e-5), NumericError);
}

TEST_CASE("every differentiable op passes a gradient check at random shapes") {
  Rng rng(2024);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t m = 2 + rng.integer(0, 3), k = 2 + rng.integer(0, 3), n = 2 + rng.integer(0, 3);
    ParamStore ps;
    auto& a = ps.add("a", random_tensor({m, k}, rng));
    auto& b = ps.add("b", random_tensor({k, n}, rng));
    auto& c = ps.add("c", random_tensor({m, k}, rng));
    auto& g = ps.add("gamma", random_tensor({k}, rng, 0.5, 1.5));
    auto& be = ps.add("beta", random_tensor({k}, rng));
    auto& table = ps.add("table", random_tensor({5, k}, rng));
    const std::uint64_t seed = rng.next_u64();
    const std::vector<std::size_t> idx{4, 0, 4, 2};

    const std::vector<std::pair<const char*, std::function<Tensor()>>> cases = {
        {"matmul", [&] { return probe(matmul(a, b), seed); }},
        {"matmul_nt", [&] { return probe(matmul(a, c, false, true), seed); }},
        {"matmul_tn", [&] { return probe(matmul(a, c, true, false), seed); }},
        {"softmax", [&] { return probe(softmax(a), seed); }},
        {"leaky_relu", [&] { return probe(leaky_relu(a, 0.2), seed); }},
        {"elu", [&] { return probe(elu(a), seed); }},
        {"gelu", [&] { return probe(gelu(a), seed); }},
        {"sigmoid", [&] { return probe(sigmoid(a), seed); }},
        {"concat", [&] { return probe(concat_cols({a, c}), seed); }},
        {"concat_rows", [&] { return probe(concat_rows({a, c}), seed); }},
        {"slice", [&] { return probe(slice_cols(concat_cols({a, c}), 1, k + 1), seed); }},
        {"embedding", [&] { return probe(gather_rows(table, idx), seed); }},
        {"layer_norm", [&] { return probe(layer_norm(a, g, be), seed); }},
        {"add_row", [&] { return probe(add_row(a, be), seed); }},
        {"row_cosine", [&] { return probe(row_cosine(a, c), seed); }},
        {"bce", [&] {
           std::vector<double> y(m);
           for (std::size_t i = 0; i < m; ++i) y[i] = static_cast<double>(i % 2);
           return binary_cross_entropy(sigmoid(row_cosine(a, c)), y);
         }},
        {"cross_entropy", [&] {
           std::vector<std::size_t> t(m);
           for (std::size_t i = 0; i < m; ++i) t[i] = i % n;
           return cross_entropy(matmul(a, b), t);
         }},
        {"replace_row", [&] { return probe(replace_row(a, 1, slice_rows(c, 0, 1)), seed); }},
    };
    for (const auto& [name, f] : cases) {
      auto r = grad_check(f, ps, 1e-5);
      INFO(std::string(name), " worst ", r.worst_param, "[", r.worst_index, "]");
      CHECK(r.max_relative_error <= 1e-6);
    }
  }
}

TEST_CASE("graph-attention primitives pass a gradient check") {
  Rng rng(7);
  const std::size_t heads = 2, dh = 3, nodes = 4;
  const std::vector<std::size_t> src{0, 1, 2, 3, 1, 0};
  const std::vector<std::size_t> dst{1, 1, 0, 2, 3, 3};
  ParamStore ps;
  auto& x = ps.add("x", random_tensor({nodes, heads * dh}, rng));
  auto& att = ps.add("att", random_tensor({heads, dh}, rng));
  const auto seed = rng.next_u64();
  auto f = [&] {
    auto s = add(gather_rows(head_dot(x, att), dst), gather_rows(head_dot(x, att), src));
    auto alpha = segment_softmax(leaky_relu(s, 0.2), dst, nodes);
    auto msg = head_scale(gather_rows(x, src), alpha);
    return probe(elu(segment_sum(msg, dst, nodes)), seed);
  };
  CHECK(grad_check(f, ps, 1e-5).max_relative_error <= 1e-6);
}

TEST_CASE("causal attention gradient and causality") {
  Rng rng(5);
  const std::size_t len = 5, d = 4;
  ParamStore ps;
  auto& q = ps.add("q", random_tensor({len, d}, rng));
  auto& k = ps.add("k", random_tensor({len, d}, rng));
  auto& v = ps.add("v", random_tensor({len, d}, rng));
  const auto seed = rng.next_u64();
  CHECK(grad_check([&] { return probe(causal_attention(q, k, v, 2), seed); }, ps, 1e-5).max_relative_error <= 1e-6);

  auto base = causal_attention(q, k, v, 2).detach();
  auto k2 = k.detach();
  auto v2 = v.detach();
  k2.mutable_values()[4 * d] += 3.0;
  v2.mutable_values()[4 * d + 1] -= 2.0;
  auto moved = causal_attention(q, k2, v2, 2);
  for (std::size_t i = 0; i < 4 * d; ++i) CHECK(moved.values()[i] == base.values()[i]);
}

TEST_CASE("shared subexpressions accumulate gradients") {
  auto x = Tensor::from({1}, {3.0}, true);
  auto y = add(mul(x, x), x);  // x^2 + x
  sum(y).backward();
  CHECK(x.grad()[0] == doctest::Approx(7.0));
}

TEST_CASE("no-grad mode records no history") {
  auto x = Tensor::from({1}, {3.0}, true);
  NoGradGuard guard;
  auto y = mul(x, x);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("adamw with zero gradients leaves parameters unchanged") {
  Rng rng(1);
  ParamStore ps;
  auto& w = ps.add_uniform("w", {3, 4}, 4, rng);
  const std::vector<double> before(w.values().begin(), w.values().end());
  w.mutable_grad();
  AdamW opt;
  opt.weight_decay = 0.0;
  for (int i = 0; i < 5; ++i) opt.step(ps);
  CHECK(std::vector<double>(w.values().begin(), w.values().end()) == before);
  CHECK(ps.step_count() == 5);
}

TEST_CASE("adamw minimises a quadratic") {
  ParamStore ps;
  auto& w = ps.add("w", Tensor::from({2}, {3.0, -2.0}));
  AdamW opt;
  opt.lr = 0.05;
  for (int i = 0; i < 500; ++i) {
    ps.zero_grad();
    sum(mul(w, w)).backward();
    opt.step(ps);
  }
  CHECK(std::abs(w.at(0)) < 1e-2);
  CHECK(std::abs(w.at(1)) < 1e-2);
}

TEST_CASE("uniform init respects fan-in bound") {
  Rng rng(9);
  ParamStore ps;
  auto& w = ps.add_uniform("w", {16, 8}, 16, rng);
  for (double x : w.values()) CHECK(std::abs(x) <= 0.25);
  CHECK_THROWS_AS(ps.add_uniform("w", {1}, 1, rng), InvalidArgumentError);
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(99);
  ParamStore ps;
  ps.add("a", random_tensor({3, 5}, rng, -1e10, 1e10));
  ps.add("b.c", Tensor::from({2}, {std::nextafter(1.0, 2.0), -0.0}));
  Checkpoint ck;
  append_params(ck, ps, "model.");
  ck.meta["note"] = "hello";
  const auto path = (std::filesystem::temp_directory_path() / "elcorec_ckpt_test.bin").string();
  write_checkpoint(path, ck);
  auto back = read_checkpoint(path);
  CHECK(back.meta["note"] == "hello");
  for (const auto& arr : ck.arrays) {
    const auto& other = back.find(arr.name);
    CHECK(other.shape == arr.shape);
    CHECK(std::memcmp(other.values.data(), arr.values.data(), arr.values.size() * sizeof(double)) == 0);
  }
  ParamStore fresh;
  fresh.add("a", Tensor::zeros({3, 5}));
  fresh.add("b.c", Tensor::zeros({2}));
  load_params(back, fresh, "model.");
  CHECK(std::signbit(fresh.get("b.c").at(1)));
  std::remove(path.c_str());
}

TEST_CASE("checkpoint reader rejects foreign files") {
  const auto path = (std::filesystem::temp_directory_path() / "elcorec_not_ckpt.bin").string();
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("definitely not a checkpoint", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(read_checkpoint(path), FormatError);
  std::remove(path.c_str());
}
