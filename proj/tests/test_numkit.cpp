// Copyright 2026 the refqa authors
// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch.hpp>

#include <cmath>
#include <cstring>

#include "refqa/gradcheck.hpp"
#include "refqa/graph.hpp"
#include "refqa/mlp.hpp"
#include "refqa/rng.hpp"
#include "refqa/tensor.hpp"

using namespace refqa;

TEST_CASE("tensor basics") {
  Tensor t = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  REQUIRE(t.size() == 6);
  REQUIRE(t.at(1, 2) == 6.0);
  REQUIRE(t.shape_str() == "(2x3)");
  REQUIRE_THROWS_AS(Tensor::matrix(2, 2, {1, 2, 3}), DimError);

  Tensor bad = Tensor::vector({1.0, std::nan("")});
  REQUIRE_FALSE(bad.all_finite());
  REQUIRE_THROWS_AS(bad.require_finite("test"), NumericError);
}

TEST_CASE("param registry rejects duplicates and unknown names") {
  ParamRegistry reg;
  reg.add("w", Tensor::vector({1, 2}));
  REQUIRE_THROWS_AS(reg.add("w", Tensor::vector({3})), ConfigError);
  REQUIRE_THROWS_AS(reg.value("nope"), ConfigError);
  REQUIRE(reg.grad("w").shape == reg.value("w").shape);
}

TEST_CASE("rng determinism and stream quality") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());

  Rng c(42), d(43);
  bool differs = false;
  for (int i = 0; i < 10; ++i) differs |= c.next_u64() != d.next_u64();
  REQUIRE(differs);

  Rng e(7);
  double mean = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = e.normal();
    mean += x;
    sq += x * x;
  }
  mean /= n;
  sq = sq / n - mean * mean;
  REQUIRE(std::abs(mean) < 0.03);
  REQUIRE(std::abs(sq - 1.0) < 0.05);

  Rng f(9);
  for (int i = 0; i < 1000; ++i) REQUIRE(f.below(13) < 13);

  // fork gives an unrelated stream
  Rng base(5);
  REQUIRE(base.fork(1).next_u64() != base.fork(2).next_u64());
}

TEST_CASE("linear examples") {
  Graph g;
  SECTION("identity") {
    Var y = g.linear(g.constant(Tensor::vector({3, -1})),
                     g.constant(Tensor::matrix(2, 2, {1, 0, 0, 1})),
                     g.constant(Tensor::vector({0, 0})));
    REQUIRE(g.value(y).data == std::vector<double>{3, -1});
  }
  SECTION("hand matrix multiply") {
    Var y = g.linear(g.constant(Tensor::vector({1, 1})),
                     g.constant(Tensor::matrix(2, 2, {1, 2, 0, 1})),
                     g.constant(Tensor::vector({1, 1})));
    REQUIRE(g.value(y).data == std::vector<double>{4, 2});
  }
  SECTION("shape mismatch names both shapes") {
    REQUIRE_THROWS_WITH(g.linear(g.constant(Tensor::vector({1, 2, 3})),
                                 g.constant(Tensor::matrix(2, 2, {1, 0, 0, 1})),
                                 g.constant(Tensor::vector({0, 0}))),
                        Catch::Contains("(2x2)") && Catch::Contains("(3)"));
  }
  SECTION("gradient of sum w.r.t. bias is all ones") {
    ParamRegistry reg;
    Rng rng(1);
    reg.add("W", glorot_uniform(3, 2, rng));
    reg.add("b", Tensor::zeros({3}));
    Graph gg(&reg);
    Var y = gg.linear(gg.constant(Tensor::vector({0.3, -0.7})), gg.param("W"), gg.param("b"));
    gg.backward(gg.sum(y));
    REQUIRE(reg.grad("b").data == std::vector<double>{1, 1, 1});
  }
}

TEST_CASE("gelu uses the exact erf form") {
  Graph g;
  Var y = g.gelu(g.constant(Tensor::vector({0.0, -1.0, 2.0})));
  REQUIRE(g.value(y)[0] == 0.0);
  REQUIRE(g.value(y)[1] == Approx(-0.15866).margin(5e-6));
  REQUIRE(g.value(y)[2] == Approx(1.95450).margin(5e-6));
}

TEST_CASE("sigmoid values and saturation") {
  Graph g;
  Var y = g.sigmoid(g.constant(Tensor::vector({0.0, -1000.0, std::log(3.0), 1000.0})));
  REQUIRE(g.value(y)[0] == 0.5);
  REQUIRE(g.value(y)[1] == 0.0);
  REQUIRE(g.value(y)[2] == Approx(0.75).epsilon(1e-12));
  REQUIRE(g.value(y)[3] == 1.0);
  REQUIRE(g.value(y).all_finite());
}

TEST_CASE("softplus is stable and strictly positive") {
  Graph g;
  Var y = g.softplus(g.constant(Tensor::vector({0.0, 1000.0, -1000.0})));
  REQUIRE(g.value(y)[0] == Approx(std::log(2.0)).epsilon(1e-12));
  REQUIRE(g.value(y)[1] == Approx(1000.0).epsilon(1e-12));
  REQUIRE(g.value(y)[2] > 0.0);
  REQUIRE(g.value(y)[2] < 1e-300);
}

TEST_CASE("sigmoid and softplus are monotone on a grid") {
  // (exact-erf gelu is intentionally not monotone near x = -0.75)
  Graph g;
  std::vector<double> grid;
  for (double x = -30.0; x <= 30.0; x += 0.125) grid.push_back(x);
  Var s = g.sigmoid(g.constant(Tensor::vector(grid)));
  Var p = g.softplus(g.constant(Tensor::vector(grid)));
  for (std::size_t i = 1; i < grid.size(); ++i) {
    REQUIRE(g.value(s)[i] >= g.value(s)[i - 1]);
    REQUIRE(g.value(p)[i] >= g.value(p)[i - 1]);
  }
}

TEST_CASE("layer_norm examples") {
  Graph g;
  SECTION("constant input collapses to bias") {
    Var y = g.layer_norm(g.constant(Tensor::vector({5, 5, 5})),
                         g.constant(Tensor::vector({1, 1, 1})),
                         g.constant(Tensor::vector({0, 0, 0})), 1e-5);
    for (double v : g.value(y).data) REQUIRE(v == 0.0);
  }
  SECTION("two-point normalization, eps 0") {
    Var y = g.layer_norm(g.constant(Tensor::vector({1, 3})), g.constant(Tensor::vector({1, 1})),
                         g.constant(Tensor::vector({0, 0})), 0.0);
    REQUIRE(g.value(y)[0] == Approx(-1.0).epsilon(1e-12));
    REQUIRE(g.value(y)[1] == Approx(1.0).epsilon(1e-12));
  }
  SECTION("zero gain returns bias") {
    Var y = g.layer_norm(g.constant(Tensor::vector({2, 7, -5})),
                         g.constant(Tensor::vector({0, 0, 0})),
                         g.constant(Tensor::vector({4, 4, 4})), 1e-5);
    REQUIRE(g.value(y).data == std::vector<double>{4, 4, 4});
  }
  SECTION("output is standardized when variance dominates eps") {
    Rng rng(3);
    std::vector<double> x(64);
    for (double& v : x) v = 10.0 * rng.normal();
    Tensor ones = Tensor::zeros({64});
    for (double& v : ones.data) v = 1.0;
    Var y = g.layer_norm(g.constant(Tensor::vector(x)), g.constant(ones),
                         g.constant(Tensor::zeros({64})), 1e-5);
    double mean = 0.0, var = 0.0;
    for (double v : g.value(y).data) mean += v;
    mean /= 64;
    for (double v : g.value(y).data) var += (v - mean) * (v - mean);
    var /= 64;
    REQUIRE(std::abs(mean) < 1e-12);
    REQUIRE(var == Approx(1.0).margin(1e-4));
  }
}

TEST_CASE("mlp_forward") {
  ParamRegistry reg;
  Rng rng(1);

  SECTION("identity layer leaves input unchanged") {
    MlpSpec spec{{{2, 2, Act::none}}, 0.0};
    register_mlp(reg, "id", spec, rng);
    reg.value("id.l0.W") = Tensor::matrix(2, 2, {1, 0, 0, 1});
    Graph g(&reg);
    Var y = mlp_forward(g, g.constant(Tensor::vector({0.25, -4})), "id", spec, true, rng);
    REQUIRE(g.value(y).data == std::vector<double>{0.25, -4});
  }

  SECTION("two-layer hand computation") {
    MlpSpec spec{{{2, 2, Act::relu}, {2, 1, Act::none}}, 0.0};
    register_mlp(reg, "m", spec, rng);
    reg.value("m.l0.W") = Tensor::matrix(2, 2, {1, 0, 0, -1});
    reg.value("m.l0.b") = Tensor::vector({0.5, 0.5});
    reg.value("m.l1.W") = Tensor::matrix(1, 2, {1, 2});
    reg.value("m.l1.b") = Tensor::vector({0.25});
    Graph g(&reg);
    Var y = mlp_forward(g, g.constant(Tensor::vector({1, 2})), "m", spec, false, rng);
    // l0: [1.5, -1.5] -> relu [1.5, 0]; l1: 1*1.5 + 2*0 + 0.25
    REQUIRE(g.value(y)[0] == Approx(1.75).epsilon(1e-15));
  }

  SECTION("dropout rate 0 makes training and eval identical") {
    MlpSpec spec{{{3, 3, Act::gelu}, {3, 2, Act::none}}, 0.0};
    register_mlp(reg, "d0", spec, rng);
    Graph g(&reg);
    Rng r1(9), r2(10);
    Var a = mlp_forward(g, g.constant(Tensor::vector({1, 2, 3})), "d0", spec, true, r1);
    Var b = mlp_forward(g, g.constant(Tensor::vector({1, 2, 3})), "d0", spec, false, r2);
    REQUIRE(g.value(a).data == g.value(b).data);
  }

  SECTION("dropout draws are reproducible and scale by 1/(1-rate)") {
    MlpSpec spec{{{8, 8, Act::none}, {8, 8, Act::none}}, 0.5};
    register_mlp(reg, "dr", spec, rng);
    reg.value("dr.l0.W") = [&] {
      Tensor t = Tensor::zeros({8, 8});
      for (std::size_t i = 0; i < 8; ++i) t.at(i, i) = 1.0;
      return t;
    }();
    reg.value("dr.l1.W") = reg.value("dr.l0.W");
    std::vector<double> x(8, 1.0);
    Graph g1(&reg), g2(&reg);
    Rng ra(77), rb(77);
    Var y1 = mlp_forward(g1, g1.constant(Tensor::vector(x)), "dr", spec, true, ra);
    Var y2 = mlp_forward(g2, g2.constant(Tensor::vector(x)), "dr", spec, true, rb);
    REQUIRE(g1.value(y1).data == g2.value(y2).data);
    // hidden activations after dropout are 0 or scaled by 1/(1-0.5)
    bool dropped = false;
    for (double v : g1.value(y1).data) {
      REQUIRE((v == 0.0 || std::abs(v - 2.0) < 1e-12));
      dropped |= v == 0.0;
    }
    REQUIRE(dropped);
  }
}

TEST_CASE("grad_check validates exact and broken gradients") {
  ParamRegistry reg;
  Rng rng(11);
  reg.add("W", glorot_uniform(3, 3, rng));
  reg.add("b", Tensor::vector({0.1, -0.2, 0.3}));
  const std::vector<double> x{0.5, -1.5, 2.0};

  auto f = [&](ParamRegistry& r, bool with_grad) {
    Graph g(&r);
    Var y = g.sum(g.linear(g.constant(Tensor::vector(x)), g.param("W"), g.param("b")));
    if (with_grad) g.backward(y);
    return g.value(y)[0];
  };

  SECTION("linear function is exact to FD noise") {
    GradCheckReport rep = grad_check(reg, f, 1e-4, 1e-10);
    REQUIRE(rep.pass());
    REQUIRE(rep.max_rel_err < 1e-10);
  }

  SECTION("a corrupted gradient is caught") {
    auto broken = [&](ParamRegistry& r, bool with_grad) {
      const double v = f(r, with_grad);
      if (with_grad) r.grad("W").data[4] += 0.5;
      return v;
    };
    GradCheckReport rep = grad_check(reg, broken, 1e-4, 1e-10);
    REQUIRE_FALSE(rep.pass());
  }

  SECTION("non-finite objective names the perturbed parameter") {
    auto fragile = [&](ParamRegistry& r, bool with_grad) {
      if (r.value("b")[0] > 0.1) return std::nan("");
      return f(r, with_grad);
    };
    REQUIRE_THROWS_WITH(grad_check(reg, fragile, 1e-4, 1e-10), Catch::Contains("b[0]"));
  }
}

// Composite chains match central finite differences on randomized inputs.
TEST_CASE("composite gradients match finite differences", "[fd]") {
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    ParamRegistry reg;
    Rng rng(100 + trial);
    const std::size_t d = 4;
    reg.add("W", glorot_uniform(d, d, rng));
    reg.add("b", Tensor::zeros({d}));
    reg.add("gate", [&] {
      Tensor t = Tensor::zeros({2 * d});
      for (double& v : t.data) v = 0.3 * rng.normal();
      return t;
    }());
    reg.add("gain", [&] {
      Tensor t = Tensor::zeros({d});
      for (double& v : t.data) v = 1.0 + 0.1 * rng.normal();
      return t;
    }());
    reg.add("bias", Tensor::zeros({d}));
    std::vector<double> x(d);
    for (double& v : x) v = rng.normal();

    auto f = [&](ParamRegistry& r, bool with_grad) {
      Graph g(&r);
      Var in = g.constant(Tensor::vector(x));
      Var h = g.gelu(g.linear(in, g.param("W"), g.param("b")));
      Var alpha = g.sigmoid(g.dot(g.param("gate"), g.concat(h, in)));
      Var mixed = g.layer_norm(g.add(g.scale(alpha, h), in), g.param("gain"), g.param("bias"),
                               1e-5);
      Var out = g.sum(g.softplus(g.relu(mixed)));
      if (with_grad) g.backward(out);
      return g.value(out)[0];
    };
    GradCheckReport rep = grad_check(reg, f, 1e-4, 1e-4);
    INFO("trial " << trial << " max rel err " << rep.max_rel_err);
    REQUIRE(rep.pass());
  }
}

TEST_CASE("forward and backward are bitwise reproducible") {
  auto run = [] {
    ParamRegistry reg;
    Rng rng(21);
    reg.add("W", glorot_uniform(5, 5, rng));
    reg.add("b", Tensor::zeros({5}));
    std::vector<double> x(5);
    for (double& v : x) v = rng.normal();
    Graph g(&reg);
    Rng drop(3);
    Var y = g.dropout(g.gelu(g.linear(g.constant(Tensor::vector(x)), g.param("W"), g.param("b"))),
                      0.3, true, drop);
    Var loss = g.sum(y);
    g.backward(loss);
    std::vector<double> out = g.value(loss).data;
    const Tensor& gw = reg.grad("W");
    out.insert(out.end(), gw.data.begin(), gw.data.end());
    return out;
  };
  std::vector<double> a = run(), b = run();
  REQUIRE(a.size() == b.size());
  REQUIRE(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}
