#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "dm/adam.hpp"
#include "dm/graph.hpp"
#include "dm/rng.hpp"
#include "dm/tensor.hpp"
#include "support/test_util.hpp"

using dm::Graph;
using dm::NodeId;
using dm::Tensor;
using testutil::fd_check;
using testutil::random_tensor;

TEST_CASE("rng determinism and stream separation") {
  dm::RngStream a(42, "alpha");
  dm::RngStream b(42, "alpha");
  dm::RngStream c(42, "beta");
  bool same = true, differ = false;
  for (int i = 0; i < 100; ++i) {
    double va = a.uniform();
    same = same && (va == b.uniform());
    differ = differ || (va != c.uniform());
  }
  CHECK(same);
  CHECK(differ);
}

TEST_CASE("rng uniform range and normal moments") {
  dm::RngStream rng(7, "moments");
  double sum = 0.0, sumsq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    double z = rng.normal();
    sum += z;
    sumsq += z * z;
  }
  double mean = sum / n;
  double var = sumsq / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("rng categorical respects probabilities") {
  dm::RngStream rng(3, "cat");
  std::vector<double> p = {0.5, 0.25, 0.25};
  std::vector<int> counts(3, 0);
  const int n = 40000;
  for (int i = 0; i < n; ++i) counts[rng.categorical(p)]++;
  for (int k = 0; k < 3; ++k)
    CHECK(std::abs(counts[k] / double(n) - p[k]) < 0.02);
}

TEST_CASE("checkpoint serialization golden bytes") {
  dm::ParamStore store;
  store.add("w", Tensor(1, 2, {1.5, -2.0}));
  std::vector<uint8_t> bytes = dm::serialize_params(store);
  const uint8_t expected[] = {
      'D', 'M', 'C', 'K',
      0x01, 0x00, 0x00, 0x00,              // version 1
      0x01, 0x00,                          // name length
      'w',
      0x02,                                // rank
      0x01, 0x00, 0x00, 0x00,              // dim 0
      0x02, 0x00, 0x00, 0x00,              // dim 1
      0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xf8, 0x3f,  // 1.5
      0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xc0,  // -2.0
  };
  REQUIRE(bytes.size() == sizeof(expected));
  CHECK(std::memcmp(bytes.data(), expected, sizeof(expected)) == 0);
}

TEST_CASE("checkpoint round trip is bit exact") {
  dm::RngStream rng(11, "ckpt");
  dm::ParamStore store;
  store.add("encoder/layer0/W", random_tensor(rng, 7, 5));
  store.add("encoder/layer0/b", random_tensor(rng, 1, 7, 1e-12));
  store.add("critic/out/W", random_tensor(rng, 1, 7, 1e9));
  testutil::TempDir tmp("ckpt");
  std::string path = tmp.file("model.dmck");
  dm::save_checkpoint(path, store);
  dm::ParamStore loaded = dm::load_checkpoint(path);
  REQUIRE(loaded.count() == store.count());
  for (int64_t i = 0; i < store.count(); ++i) {
    CHECK(loaded.name(i) == store.name(i));
    const Tensor& a = store.value(i);
    const Tensor& b = loaded.value(i);
    REQUIRE(a.same_shape(b));
    CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
  }
}

TEST_CASE("checkpoint truncation reports byte offset") {
  dm::ParamStore store;
  store.add("w", Tensor(2, 3, {1, 2, 3, 4, 5, 6}));
  std::vector<uint8_t> bytes = dm::serialize_params(store);
  bytes.resize(bytes.size() - 5);
  bool threw = false;
  try {
    dm::deserialize_params(bytes);
  } catch (const dm::Error& e) {
    threw = true;
    CHECK(e.status() == dm::Status::Io);
    CHECK(std::string(e.what()).find("byte") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("checkpoint rejects non-finite parameters") {
  dm::ParamStore store;
  store.add("w", Tensor(1, 1, {std::nan("")}));
  CHECK_THROWS_AS((void)dm::serialize_params(store), dm::Error);
}

TEST_CASE("graph forward basics") {
  Graph g;
  NodeId x = g.input(Tensor(1, 2, {1.0, 2.0}));

  SUBCASE("identity affine returns input") {
    NodeId w = g.constant(Tensor(2, 2, {1, 0, 0, 1}));
    NodeId b = g.constant(Tensor(1, 2, {0, 0}));
    NodeId y = g.affine(x, w, b);
    CHECK(g.value(y)[0] == 1.0);
    CHECK(g.value(y)[1] == 2.0);
  }
  SUBCASE("relu clamps negatives") {
    NodeId v = g.constant(Tensor(1, 2, {-1.0, 3.0}));
    NodeId y = g.leaky_relu(v, 0.0);
    CHECK(g.value(y)[0] == 0.0);
    CHECK(g.value(y)[1] == 3.0);
  }
  SUBCASE("two layer hand computed value") {
    // pre1 = (3.5, -1), relu -> (3.5, 0), out = 2*3.5 + 0.25 = 7.25
    NodeId w1 = g.constant(Tensor(2, 2, {1, 1, 0, 1}));
    NodeId b1 = g.constant(Tensor(1, 2, {0.5, -3}));
    NodeId h = g.leaky_relu(g.affine(x, w1, b1), 0.0);
    NodeId w2 = g.constant(Tensor(1, 2, {2, 1}));
    NodeId b2 = g.constant(Tensor(1, 1, {0.25}));
    NodeId y = g.affine(h, w2, b2);
    CHECK(g.value(y)[0] == doctest::Approx(7.25).epsilon(1e-12));
  }
  SUBCASE("shape mismatch raises") {
    NodeId v = g.constant(Tensor(1, 3, {1, 2, 3}));
    CHECK_THROWS_AS((void)g.add(x, v), dm::Error);
  }
}

TEST_CASE("graph row and column reductions") {
  Graph g;
  NodeId a = g.constant(Tensor(2, 3, {1, 2, 3, 4, 5, 6}));
  CHECK(g.value(g.row_sum(a))[0] == 6.0);
  CHECK(g.value(g.row_sum(a))[1] == 15.0);
  CHECK(g.value(g.col_sum(a))[2] == 9.0);
  CHECK(g.value(g.sum_all(a))[0] == 21.0);
  CHECK(g.value(g.mean_all(a))[0] == doctest::Approx(3.5));
  NodeId s = g.slice_rows(a, 1, 2);
  CHECK(g.value(s).rows() == 1);
  CHECK(g.value(s)[0] == 4.0);
  NodeId p = g.pad_rows(s, 0, 3);
  CHECK(g.value(p).rows() == 3);
  CHECK(g.value(p).at(0, 1) == 5.0);
  CHECK(g.value(p).at(2, 2) == 0.0);
  NodeId c = g.concat_rows(a, s);
  CHECK(g.value(c).rows() == 3);
  CHECK(g.value(c).at(2, 0) == 4.0);
}

TEST_CASE("gradient of squared parameter is exact") {
  Graph g;
  NodeId w = g.param(Tensor(1, 1, {3.0}));
  NodeId y = g.mul(w, w);
  std::vector<NodeId> grads = g.backward(y, {w});
  CHECK(g.value(grads[0])[0] == 6.0);
}

TEST_CASE("gradient through constants is zero") {
  Graph g;
  NodeId w = g.param(Tensor(2, 2, {1, 2, 3, 4}));
  NodeId c = g.constant(Tensor(1, 1, {5.0}));
  NodeId root = g.sum_all(c);
  std::vector<NodeId> grads = g.backward(root, {w});
  for (int64_t i = 0; i < 4; ++i) CHECK(g.value(grads[0])[i] == 0.0);
}

TEST_CASE("backward is deterministic bit for bit") {
  dm::RngStream rng(5, "det");
  Tensor w = random_tensor(rng, 4, 3);
  Tensor x = random_tensor(rng, 6, 3);
  auto run = [&]() {
    Graph g;
    NodeId wp = g.param(w);
    NodeId xp = g.constant(x);
    NodeId root = g.sum_all(g.leaky_relu(g.matmul(xp, wp, false, true), 0.1));
    return g.value(g.backward(root, {wp})[0]);
  };
  Tensor g1 = run();
  Tensor g2 = run();
  CHECK(std::memcmp(g1.data(), g2.data(), sizeof(double) * g1.size()) == 0);
}

TEST_CASE("finite differences: elementwise and matmul ops") {
  dm::RngStream rng(19, "fd1");
  SUBCASE("add sub mul div mix") {
    auto build = [](Graph& g, const std::vector<NodeId>& p) {
      NodeId s = g.add(p[0], p[1]);
      NodeId q = g.mul(s, g.sub(p[0], g.scale(p[1], 0.5)));
      NodeId r = g.div(q, g.add_scalar(g.mul(p[1], p[1]), 1.0));
      return g.sum_all(r);
    };
    auto rep = fd_check(build, {random_tensor(rng, 3, 4), random_tensor(rng, 3, 4)});
    CHECK(rep.max_err < 1e-5);
  }
  SUBCASE("matmul all transpose combinations") {
    for (int ta = 0; ta < 2; ++ta) {
      for (int tb = 0; tb < 2; ++tb) {
        Tensor a = ta ? random_tensor(rng, 4, 3) : random_tensor(rng, 3, 4);
        Tensor b = tb ? random_tensor(rng, 5, 4) : random_tensor(rng, 4, 5);
        auto build = [ta, tb](Graph& g, const std::vector<NodeId>& p) {
          NodeId m = g.matmul(p[0], p[1], ta != 0, tb != 0);
          return g.sum_all(g.mul(m, m));
        };
        auto rep = fd_check(build, {a, b});
        CHECK(rep.max_err < 1e-5);
      }
    }
  }
  SUBCASE("sqrt exp log chain on positive inputs") {
    Tensor x(2, 3);
    dm::RngStream r2(23, "pos");
    for (int64_t i = 0; i < x.size(); ++i) x[i] = 0.5 + r2.uniform();
    auto build = [](Graph& g, const std::vector<NodeId>& p) {
      NodeId y = g.log_op(g.add_scalar(g.exp_op(g.sqrt_op(p[0])), 1.0));
      return g.sum_all(y);
    };
    CHECK(fd_check(build, {x}).max_err < 1e-5);
  }
  SUBCASE("broadcast and reduction combo") {
    auto build = [](Graph& g, const std::vector<NodeId>& p) {
      NodeId rows = g.bcast_row(p[0], 5);           // 1x4 -> 5x4
      NodeId cols = g.bcast_col(p[1], 4);           // 5x1 -> 5x4
      NodeId m = g.mul(rows, cols);
      return g.sum_all(g.mul(g.row_sum(m), g.row_sum(m)));
    };
    auto rep = fd_check(build, {random_tensor(rng, 1, 4), random_tensor(rng, 5, 1)});
    CHECK(rep.max_err < 1e-5);
  }
  SUBCASE("concat slice pad") {
    auto build = [](Graph& g, const std::vector<NodeId>& p) {
      NodeId c = g.concat_rows(p[0], p[1]);
      NodeId s = g.slice_rows(c, 1, 4);
      NodeId q = g.pad_rows(s, 2, 6);
      return g.sum_all(g.mul(q, q));
    };
    auto rep = fd_check(build, {random_tensor(rng, 2, 3), random_tensor(rng, 3, 3)});
    CHECK(rep.max_err < 1e-5);
  }
}

TEST_CASE("finite differences: relu network away from kinks") {
  // Inputs chosen so every preactivation magnitude exceeds 1e-3; finite
  // differences with h=1e-6 then see a locally linear activation.
  dm::RngStream rng(31, "fd2");
  Tensor x = random_tensor(rng, 4, 2);
  Tensor w1 = random_tensor(rng, 5, 2);
  Tensor b1(1, 5, 0.3);
  Tensor w2 = random_tensor(rng, 1, 5);
  Tensor b2(1, 1, {0.1});
  auto build = [&x](Graph& g, const std::vector<NodeId>& p) {
    NodeId h = g.leaky_relu(g.affine(g.constant(x), p[0], p[1]), 0.0);
    NodeId y = g.affine(h, p[2], p[3]);
    return g.sum_all(g.mul(y, y));
  };
  // Verify the kink-free margin before trusting the check.
  {
    Graph g;
    NodeId pre = g.affine(g.constant(x), g.constant(w1), g.constant(b1));
    double margin = 1e9;
    for (int64_t i = 0; i < g.value(pre).size(); ++i)
      margin = std::min(margin, std::abs(g.value(pre)[i]));
    REQUIRE(margin > 1e-3);
  }
  auto rep = fd_check(build, {w1, b1, w2, b2});
  CHECK(rep.max_err < 1e-5);
}

TEST_CASE("finite differences: layer-norm style composite") {
  // Exercises div, sqrt, broadcast and reduction backward rules together.
  dm::RngStream rng(37, "fd3");
  Tensor x = random_tensor(rng, 3, 4);
  auto build = [](Graph& g, const std::vector<NodeId>& p) {
    NodeId xx = p[0];
    int64_t d = g.value(xx).cols();
    NodeId m = g.scale(g.row_sum(xx), 1.0 / double(d));
    NodeId cen = g.sub(xx, g.bcast_col(m, d));
    NodeId var = g.scale(g.row_sum(g.mul(cen, cen)), 1.0 / double(d));
    NodeId sd = g.sqrt_op(g.add_scalar(var, 1e-5));
    NodeId norm = g.div(cen, g.bcast_col(sd, d));
    NodeId out = g.add(g.mul(norm, g.bcast_row(p[1], 3)), g.bcast_row(p[2], 3));
    return g.sum_all(g.mul(out, out));
  };
  auto rep = fd_check(build, {x, random_tensor(rng, 1, 4), random_tensor(rng, 1, 4)});
  CHECK(rep.max_err < 1e-5);
}

TEST_CASE("input gradient of a linear functional recovers coefficients") {
  Graph g;
  Tensor w(1, 3, {2.0, -1.0, 0.5});
  NodeId x = g.input(Tensor(4, 3, 1.0));
  NodeId s = g.sum_all(g.matmul(x, g.constant(w), false, true));
  NodeId grad = g.backward(s, {x})[0];
  const Tensor& gv = g.value(grad);
  REQUIRE(gv.rows() == 4);
  for (int64_t r = 0; r < 4; ++r)
    for (int64_t c = 0; c < 3; ++c) CHECK(gv.at(r, c) == w[c]);
}

TEST_CASE("second order: gradient-penalty style objective matches finite differences") {
  // F(theta) = sum over rows of (||grad_x g_theta(x)||^2); the inner gradient
  // is produced by backward() and must itself be differentiable.
  dm::RngStream rng(41, "fd4");
  Tensor x = random_tensor(rng, 3, 2);
  Tensor w1 = random_tensor(rng, 4, 2);
  Tensor b1(1, 4, 0.4);
  Tensor w2 = random_tensor(rng, 1, 4);
  auto build = [&x](Graph& g, const std::vector<NodeId>& p) {
    NodeId xin = g.input(x);
    NodeId h = g.leaky_relu(g.affine(xin, p[0], p[1]), 0.2);
    NodeId out = g.matmul(h, p[2], false, true);  // n x 1
    NodeId s = g.sum_all(out);
    NodeId gx = g.backward(s, {xin})[0];          // n x 2
    return g.sum_all(g.mul(gx, gx));
  };
  auto rep = fd_check(build, {w1, b1, w2});
  CHECK(rep.max_err < 1e-5);
}

TEST_CASE("second order: norm penalty with epsilon floor") {
  // sqrt(max(sumsq, 1e-24)) keeps the penalty differentiable at zero critics.
  dm::RngStream rng(43, "fd5");
  Tensor x = random_tensor(rng, 2, 3);
  Tensor w = random_tensor(rng, 1, 3);
  auto build = [&x](Graph& g, const std::vector<NodeId>& p) {
    NodeId xin = g.input(x);
    NodeId out = g.matmul(xin, p[0], false, true);
    NodeId s = g.sum_all(out);
    NodeId gx = g.backward(s, {xin})[0];
    NodeId norms = g.sqrt_op(g.max_scalar(g.row_sumsq(gx), 1e-24));
    NodeId dev = g.add_scalar(norms, -1.0);
    return g.mean_all(g.mul(dev, dev));
  };
  auto rep = fd_check(build, {w});
  CHECK(rep.max_err < 1e-5);
}

TEST_CASE("adam hand example: single step on squared loss") {
  dm::ParamStore params;
  params.add("w", Tensor(1, 1, {1.0}));
  dm::AdamConfig cfg;
  cfg.schedule = dm::LrSchedule::constant(0.1);
  dm::Adam opt(cfg);
  // d(w^2)/dw at w=1 is 2.
  opt.step(params, {Tensor(1, 1, {2.0})});
  CHECK(params.value("w")[0] == doctest::Approx(0.9).epsilon(1e-8));
}

TEST_CASE("adam zero gradient leaves parameters unchanged") {
  dm::ParamStore params;
  params.add("w", Tensor(2, 2, {1, -2, 3, -4}));
  dm::AdamConfig cfg;
  cfg.schedule = dm::LrSchedule::constant(0.05);
  dm::Adam opt(cfg);
  for (int i = 0; i < 3; ++i) opt.step(params, {Tensor(2, 2, 0.0)});
  CHECK(params.value("w")[0] == 1.0);
  CHECK(params.value("w")[3] == -4.0);
}

TEST_CASE("adam flags non-finite gradients with the parameter name") {
  dm::ParamStore params;
  params.add("critic/W", Tensor(1, 1, {1.0}));
  dm::AdamConfig cfg;
  dm::Adam opt(cfg);
  bool threw = false;
  try {
    opt.step(params, {Tensor(1, 1, {std::nan("")})});
  } catch (const dm::Error& e) {
    threw = true;
    CHECK(e.status() == dm::Status::Numeric);
    CHECK(std::string(e.what()).find("critic/W") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("linear warmup schedule") {
  auto s = dm::LrSchedule::linear_warmup(3e-5, 500);
  CHECK(s.at(0) == doctest::Approx(3e-5 / 500).epsilon(1e-12));
  CHECK(s.at(249) == doctest::Approx(3e-5 * 250 / 500).epsilon(1e-12));
  CHECK(s.at(499) == doctest::Approx(3e-5).epsilon(1e-12));
  CHECK(s.at(500) == 3e-5);
  CHECK(s.at(100000) == 3e-5);
}

TEST_CASE("exponential decay schedule endpoints") {
  auto s = dm::LrSchedule::exp_decay(1e-2, 1e-6, 1000);
  CHECK(s.at(0) == doctest::Approx(1e-2).epsilon(1e-12));
  CHECK(s.at(999) == doctest::Approx(1e-6).epsilon(1e-12));
  // Geometric midpoint at the middle step.
  CHECK(std::log10(s.at(499)) < -3.5);
  CHECK(std::log10(s.at(499)) > -4.5);
}

TEST_CASE("warmup is applied to the first optimizer step") {
  dm::ParamStore params;
  params.add("w", Tensor(1, 1, {0.0}));
  dm::AdamConfig cfg;
  cfg.schedule = dm::LrSchedule::linear_warmup(1e-2, 500);
  dm::Adam opt(cfg);
  opt.step(params, {Tensor(1, 1, {2.0})});
  CHECK(opt.last_lr() == doctest::Approx(1e-2 / 500).epsilon(1e-12));
  // First Adam update moves by ~lr in the gradient direction.
  CHECK(params.value("w")[0] == doctest::Approx(-1e-2 / 500).epsilon(1e-6));
}
