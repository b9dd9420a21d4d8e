#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <set>

#include "coc/adam.hpp"
#include "coc/errors.hpp"
#include "coc/gradcheck.hpp"
#include "coc/rng.hpp"
#include "coc/tape.hpp"
#include "coc/tensor.hpp"
#include "doctest.h"

using namespace coc;

namespace {

Tensor rand_tensor(std::vector<int> shape, std::mt19937_64& g, double scale = 1.0) {
  Tensor t = Tensor::zeros(shape);
  for (double& v : t.values) v = uniform_range(g, -scale, scale);
  return t;
}

template <typename E, typename F>
bool throws_mentioning(F&& f, const std::string& needle) {
  try {
    f();
  } catch (const E& e) {
    return std::string(e.what()).find(needle) != std::string::npos;
  } catch (...) {
    return false;
  }
  return false;
}

}  // namespace

TEST_CASE("tensor shape and accessor basics") {
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.at(1, 2) == 6.0);
  t.at(0, 1) = 9.0;
  CHECK(t.values[1] == 9.0);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor::zeros({0, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor::from({3}, {1, 2, 3}).rows(), DimensionError);

  Tensor g = Tensor::zeros({2}, true);
  CHECK(g.grad.size() == 2);
  g.grad[0] = 5.0;
  g.zero_grad();
  CHECK(g.grad[0] == 0.0);
  g.set_requires_grad(false);
  CHECK(g.grad.empty());

  Tensor inf = Tensor::from({2}, {1.0, INFINITY});
  CHECK_FALSE(inf.all_finite());
  CHECK(t.all_finite());
}

TEST_CASE("param store rejects duplicates and unknown names") {
  ParamStore store;
  store.add("w", Tensor::zeros({2, 2}, true));
  store.add("b", Tensor::zeros({2}, true));
  CHECK_THROWS_AS(store.add("w", Tensor::zeros({1})), ContractError);
  CHECK_THROWS_AS(store.get("nope"), ContractError);
  CHECK(store.contains("b"));
  CHECK(store.total_values() == 6);

  // map ordering is the deterministic iteration contract
  std::vector<std::string> names;
  for (const auto& [n, t] : store.items()) names.push_back(n);
  CHECK(names == std::vector<std::string>{"b", "w"});
}

TEST_CASE("checkpoint round trip is lossless") {
  ParamStore store;
  std::mt19937_64 g(7);
  store.add("alpha", rand_tensor({3, 4}, g));
  store.add("beta", Tensor::from({3}, {1.0 / 3.0, M_PI, 1e-300}));
  const std::string path = "ckpt_test.json";
  save_checkpoint(store, path);
  ParamStore back = load_checkpoint(path);
  REQUIRE(back.size() == 2);
  for (const auto& [name, t] : store.items()) {
    const Tensor& u = back.get(name);
    CHECK(u.shape == t.shape);
    REQUIRE(u.values.size() == t.values.size());
    for (size_t i = 0; i < t.values.size(); ++i) CHECK(u.values[i] == t.values[i]);
    CHECK(u.requires_grad);
  }
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint version and parse failures") {
  CHECK_THROWS_AS(load_checkpoint("no_such_file.json"), IoError);

  {
    FILE* f = std::fopen("ckpt_bad1.json", "w");
    std::fputs("{\"params\":{}}", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_checkpoint("ckpt_bad1.json"), ConfigError);

  {
    FILE* f = std::fopen("ckpt_bad2.json", "w");
    std::fputs("{\"format_version\":99,\"params\":{}}", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_checkpoint("ckpt_bad2.json"), ConfigError);

  {
    FILE* f = std::fopen("ckpt_bad3.json", "w");
    std::fputs("{not json", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_checkpoint("ckpt_bad3.json"), IoError);

  std::filesystem::remove("ckpt_bad1.json");
  std::filesystem::remove("ckpt_bad2.json");
  std::filesystem::remove("ckpt_bad3.json");
}

TEST_CASE("rng helpers are deterministic and in range") {
  std::mt19937_64 a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    const double u = uniform01(a);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(u == uniform01(b));
  }
  std::mt19937_64 g(3);
  std::set<int> seen;
  for (int i = 0; i < 500; ++i) {
    const int v = uniform_int(g, -2, 2);
    CHECK(v >= -2);
    CHECK(v <= 2);
    seen.insert(v);
  }
  CHECK(seen.size() == 5);  // all five values hit over 500 draws
  for (int i = 0; i < 100; ++i) CHECK(std::isfinite(gaussian(g)));

  std::vector<int> perm(20);
  for (int i = 0; i < 20; ++i) perm[i] = i;
  shuffle_indices(perm, g);
  std::set<int> uniq(perm.begin(), perm.end());
  CHECK(uniq.size() == 20);
}

TEST_CASE("forward values of the elementary ops") {
  Tape tp;
  Var a = tp.constant({2, 2}, {1, 2, 3, 4});
  Var b = tp.constant({2, 2}, {5, 6, 7, 8});

  Var mm = matmul(a, b);
  CHECK(tp.value(mm) == std::vector<double>{19, 22, 43, 50});

  Var s = add(a, b);
  CHECK(tp.value(s) == std::vector<double>{6, 8, 10, 12});

  Var h = mul(a, b);
  CHECK(tp.value(h) == std::vector<double>{5, 12, 21, 32});

  Var sc = scale(a, -2.0);
  CHECK(tp.value(sc) == std::vector<double>{-2, -4, -6, -8});

  Var rv = tp.constant({2}, {10, 20});
  Var ar = add_rowwise(a, rv);
  CHECK(tp.value(ar) == std::vector<double>{11, 22, 13, 24});

  Var c0 = concat({a, b}, 0);
  CHECK(tp.shape(c0) == std::vector<int>{4, 2});
  CHECK(tp.value(c0) == std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});

  Var c1 = concat({a, b}, 1);
  CHECK(tp.shape(c1) == std::vector<int>{2, 4});
  CHECK(tp.value(c1) == std::vector<double>{1, 2, 5, 6, 3, 4, 7, 8});

  Var r1 = row(c1, 1);
  CHECK(tp.shape(r1) == std::vector<int>{1, 4});
  CHECK(tp.value(r1) == std::vector<double>{3, 4, 7, 8});

  Var tr = transpose(c1);
  CHECK(tp.shape(tr) == std::vector<int>{4, 2});
  CHECK(tp.value(tr) == std::vector<double>{1, 3, 2, 4, 5, 7, 6, 8});

  Var sm = softmax(tp.constant({2}, {0.0, std::log(3.0)}), 0);
  CHECK(tp.value(sm)[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(tp.value(sm)[1] == doctest::Approx(0.75).epsilon(1e-12));

  // shifted inputs give identical softmax (max subtraction keeps exp in range)
  Var sm_big = softmax(tp.constant({2}, {5000.0, 5000.0 + std::log(3.0)}), 0);
  CHECK(tp.value(sm_big)[0] == doctest::Approx(0.25).epsilon(1e-12));

  Var smr = softmax(tp.constant({2, 2}, {0, 0, 1, 3}), 1);
  CHECK(tp.value(smr)[0] == doctest::Approx(0.5));
  const double e2 = std::exp(2.0);
  CHECK(tp.value(smr)[3] == doctest::Approx(e2 / (1.0 + e2)));

  Var smc = softmax(tp.constant({2, 2}, {0, 1, 0, 3}), 0);
  CHECK(tp.value(smc)[0] == doctest::Approx(0.5));
  CHECK(tp.value(smc)[2] == doctest::Approx(0.5));
  CHECK(tp.value(smc)[3] == doctest::Approx(e2 / (1.0 + e2)));

  CHECK(tp.scalar(sum_all(a)) == 10.0);
  CHECK(tp.scalar(mean_all(a)) == 2.5);

  Var nv = l2_normalize(tp.constant({2}, {3.0, 4.0}), 0);
  CHECK(tp.value(nv)[0] == doctest::Approx(0.6));
  CHECK(tp.value(nv)[1] == doctest::Approx(0.8));

  Var nr = l2_normalize(tp.constant({2, 2}, {3, 4, 0, 0}), 1);
  CHECK(tp.value(nr)[0] == doctest::Approx(0.6));
  CHECK(tp.value(nr)[2] == 0.0);  // zero row passes through as zeros
  CHECK(tp.value(nr)[3] == 0.0);

  CHECK(tp.scalar(tanh(tp.constant_scalar(0.5))) == doctest::Approx(std::tanh(0.5)));
  CHECK(tp.scalar(sigmoid(tp.constant_scalar(0.0))) == 0.5);
  CHECK(tp.scalar(log(tp.constant_scalar(M_E))) == doctest::Approx(1.0));
  CHECK(tp.scalar(exp(tp.constant_scalar(1.0))) == doctest::Approx(M_E));

  Var bce = bce_with_logits(tp.constant({2}, {0.0, 0.0}), {1.0, 0.0});
  CHECK(tp.scalar(bce) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  // extreme logits stay finite in the stable form
  Var bce2 = bce_with_logits(tp.constant({2}, {1000.0, -1000.0}), {0.0, 1.0});
  CHECK(std::isfinite(tp.scalar(bce2)));
  CHECK(tp.scalar(bce2) == doctest::Approx(1000.0));
}

TEST_CASE("shape mismatches raise dimension errors naming the op") {
  Tape tp;
  Var a = tp.constant({2, 3}, std::vector<double>(6, 1.0));
  Var b = tp.constant({2, 2}, std::vector<double>(4, 1.0));
  CHECK(throws_mentioning<DimensionError>([&] { matmul(a, b); }, "matmul"));
  CHECK(throws_mentioning<DimensionError>([&] { add(a, b); }, "add"));
  CHECK(throws_mentioning<DimensionError>([&] { mul(a, b); }, "mul"));
  CHECK_THROWS_AS(concat({a, b}, 0), DimensionError);
  CHECK_THROWS_AS(row(a, 2), DimensionError);
  CHECK_THROWS_AS(softmax(a, 2), DimensionError);
  CHECK_THROWS_AS(add_rowwise(a, b), DimensionError);
  CHECK_THROWS_AS(bce_with_logits(a, {1.0}), DimensionError);
}

TEST_CASE("tape state machine") {
  Tensor w = Tensor::from({2}, {1.0, 2.0}, true);
  Tape tp;
  Var wl = tp.leaf(w);
  Var loss = sum_all(wl);
  tp.backward(loss);
  CHECK(w.grad == std::vector<double>{1.0, 1.0});
  CHECK(tp.consumed());
  CHECK_THROWS_AS(tp.backward(loss), StateError);
  CHECK_THROWS_AS(sum_all(wl), StateError);  // no new nodes after backward

  Tape tp2;
  Var v = tp2.constant({2}, {1, 2});
  CHECK_THROWS_AS(tp2.backward(v), ContractError);  // non-scalar loss

  Tape tp3;
  Var x3 = tp3.constant({2}, {1, 2});
  CHECK_THROWS_AS(add(v, x3), ContractError);  // vars from different tapes

  CHECK_THROWS_AS(log(tp3.constant_scalar(-1.0)), NumericError);
  CHECK_THROWS_AS(log(tp3.constant_scalar(0.0)), NumericError);
}

TEST_CASE("leaf gradients accumulate across multiple uses") {
  Tensor w = Tensor::from({2}, {3.0, -1.0}, true);
  Tape tp;
  Var wl = tp.leaf(w);
  Var loss = add(sum_all(mul(wl, wl)), sum_all(wl));  // sum(w^2) + sum(w)
  tp.backward(loss);
  CHECK(w.grad[0] == doctest::Approx(2.0 * 3.0 + 1.0));
  CHECK(w.grad[1] == doctest::Approx(2.0 * -1.0 + 1.0));

  // a second tape adds on top of whatever is already in Tensor.grad
  Tape tp2;
  Var wl2 = tp2.leaf(w);
  tp2.backward(sum_all(wl2));
  CHECK(w.grad[0] == doctest::Approx(8.0));
}

TEST_CASE("constants receive no gradient") {
  Tensor w = Tensor::from({2}, {1.0, 1.0}, true);
  Tensor frozen = Tensor::from({2}, {5.0, 5.0});  // requires_grad false
  Tape tp;
  Var wl = tp.leaf(w);
  Var fl = tp.leaf(frozen);
  tp.backward(sum_all(mul(wl, fl)));
  CHECK(w.grad == std::vector<double>{5.0, 5.0});
  CHECK(frozen.grad.empty());
}

TEST_CASE("dropout semantics") {
  std::mt19937_64 g(11);
  Tape tp;
  Var x = tp.constant({10, 10}, std::vector<double>(100, 1.0));

  Var eval_out = dropout(x, 0.5, false, g);
  CHECK(eval_out.id == x.id);  // identity, not a copy

  Var zero_rate = dropout(x, 0.0, true, g);
  CHECK(zero_rate.id == x.id);

  Var train_out = dropout(x, 0.5, true, g);
  int kept = 0;
  for (double v : tp.value(train_out)) {
    CHECK((v == 0.0 || v == doctest::Approx(2.0)));
    if (v != 0.0) ++kept;
  }
  CHECK(kept > 20);
  CHECK(kept < 80);
  CHECK_THROWS_AS(dropout(x, 1.0, true, g), ContractError);
  CHECK_THROWS_AS(dropout(x, -0.1, true, g), ContractError);
}

TEST_CASE("gradients match central differences across the op set") {
  std::mt19937_64 g(1234);
  Tensor W = rand_tensor({2, 3}, g, 0.5);
  Tensor bvec = rand_tensor({3}, g, 0.5);
  Tensor U = rand_tensor({3, 2}, g, 0.5);
  Tensor C = rand_tensor({2, 2}, g, 0.5);
  Tensor x = rand_tensor({2, 2}, g, 1.0);
  const std::vector<double> targets = {1, 0, 0, 1, 1, 1, 0, 0};

  auto build = [&](Tape& tp) -> Var {
    Var wl = tp.leaf(W);
    Var bl = tp.leaf(bvec);
    Var ul = tp.leaf(U);
    Var cl = tp.leaf(C);
    Var xl = tp.leaf(x);

    Var h = tanh(add_rowwise(matmul(xl, wl), bl));       // 2x3
    Var sm_row = softmax(h, 1);                          // 2x3
    Var t2 = sigmoid(matmul(h, ul));                     // 2x2
    Var e = exp(scale(t2, 0.3));                         // 2x2, positive
    Var lg = log(add(e, mul(cl, cl)));                   // positive argument
    Var m0 = mul(lg, t2);
    Var cc = concat({m0, lg}, 1);                        // 2x4
    Var cr = concat({m0, lg}, 0);                        // 4x2
    Var r1 = row(cc, 1);
    Var n0 = l2_normalize(cc, 1);
    Var smc = softmax(cr, 0);
    Var part1 = mean_all(mul(n0, concat({softmax(cc, 1)}, 1)));
    Var part2 = scale(sum_all(r1), 0.1);
    Var part3 = bce_with_logits(cc, targets);
    Var part4 = add(mean_all(sm_row), scale(sum_all(smc), 0.05));
    Var part5 = scale(sum_all(l2_normalize(cr, 0)), 0.02);
    Var part6 = scale(sum_all(matmul(transpose(m0), lg)), 0.01);
    return add(add(add(part1, part2), add(part3, part4)), add(part5, part6));
  };

  auto res = grad_check(build,
                        {{"W", &W}, {"b", &bvec}, {"U", &U}, {"C", &C}, {"x", &x}},
                        1e-5);
  CAPTURE(res.worst.param);
  CAPTURE(res.worst.index);
  CAPTURE(res.worst.analytic);
  CAPTURE(res.worst.numeric);
  CHECK(res.max_rel_err < 1e-6);
  CHECK(res.checked == 6 + 3 + 6 + 4 + 4);
}

TEST_CASE("dropout gradient uses the frozen mask") {
  Tensor x = Tensor::from({4, 4}, std::vector<double>(16, 0.7), true);
  auto build = [&](Tape& tp) -> Var {
    std::mt19937_64 g(99);  // reseeded per build: identical mask every call
    Var xl = tp.leaf(x);
    Var d = dropout(xl, 0.5, true, g);
    return sum_all(mul(d, d));
  };
  auto res = grad_check(build, {{"x", &x}}, 1e-6);
  CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("grad_check rejects nondeterministic losses") {
  Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  int calls = 0;
  auto build = [&](Tape& tp) -> Var {
    Var xl = tp.leaf(x);
    return scale(sum_all(xl), 1.0 + 0.1 * (calls++));
  };
  CHECK_THROWS_AS(grad_check(build, {{"x", &x}}, 1e-5), ContractError);
}

TEST_CASE("adam first step moves each weight by roughly lr") {
  ParamStore store;
  store.add("w", Tensor::from({2}, {1.0, 2.0}, true));
  store.get("w").grad = {0.5, -0.3};
  Adam opt(AdamConfig{0.01, 0.9, 0.999, 1e-8});
  opt.step(store);
  // mhat = g, vhat = g*g  =>  update = lr * g / (|g| + eps) ~= lr * sign(g)
  CHECK(store.get("w").values[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
  CHECK(store.get("w").values[1] == doctest::Approx(2.0 + 0.01).epsilon(1e-6));
  CHECK(store.get("w").grad == std::vector<double>{0.0, 0.0});
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adam contract violations") {
  ParamStore store;
  store.add("w", Tensor::from({1}, {1.0}, true));
  Adam opt(AdamConfig{});
  SUBCASE("missing gradient") {
    store.get("w").set_requires_grad(false);
    CHECK_THROWS_AS(opt.step(store), ContractError);
  }
  SUBCASE("parameter added after the first step") {
    store.get("w").grad = {1.0};
    opt.step(store);
    store.add("late", Tensor::from({1}, {0.0}, true));
    store.get("late").grad = {1.0};
    store.get("w").grad = {1.0};
    CHECK_THROWS_AS(opt.step(store), ContractError);
  }
}

TEST_CASE("adam trajectories are bit-identical across repeats") {
  auto run = [](int steps) {
    ParamStore store;
    std::mt19937_64 g(5);
    store.add("w", rand_tensor({3, 3}, g));
    store.get("w").set_requires_grad(true);
    Adam opt(AdamConfig{0.05, 0.9, 0.999, 1e-8});
    for (int s = 0; s < steps; ++s) {
      Tape tp;
      Var wl = tp.leaf(store.get("w"));
      tp.backward(mean_all(mul(tanh(wl), tanh(wl))));
      opt.step(store);
    }
    return store.get("w").values;
  };
  const auto a = run(10);
  const auto b = run(10);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}
