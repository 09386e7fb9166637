#include <vector>

#include "doctest.h"
#include "smem/error.hpp"
#include "smem/optim.hpp"

using namespace smem;

TEST_CASE("one momentum step applies v = -lr*g") {
  Tensor p({2}, {1.0, -2.0});
  p.ensure_grad();
  p.grad() = {0.5, -1.0};
  OptState s;
  s.learning_rate = 0.1;
  s.momentum = 0.9;
  sgd_momentum_step(p, s);
  CHECK(p[0] == doctest::Approx(1.0 - 0.1 * 0.5).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(-2.0 + 0.1).epsilon(1e-15));
  CHECK(s.velocity[0] == doctest::Approx(-0.05).epsilon(1e-15));
  // gradient is cleared for the next accumulation pass
  CHECK(p.grad() == std::vector<double>{0.0, 0.0});
}

TEST_CASE("momentum carries velocity across steps") {
  Tensor p({1}, {0.0});
  OptState s;
  s.learning_rate = 1.0;
  s.momentum = 0.5;
  p.ensure_grad();
  p.grad() = {1.0};
  sgd_momentum_step(p, s);  // v = -1, p = -1
  p.grad() = {1.0};
  sgd_momentum_step(p, s);  // v = -0.5 - 1 = -1.5, p = -2.5
  CHECK(p[0] == doctest::Approx(-2.5).epsilon(1e-15));
  CHECK(s.velocity[0] == doctest::Approx(-1.5).epsilon(1e-15));
}

TEST_CASE("weight decay adds wd times theta to the gradient") {
  Tensor p({1}, {2.0});
  OptState s;
  s.learning_rate = 0.1;
  s.momentum = 0.0;
  s.weight_decay = 0.5;
  p.ensure_grad();
  p.grad() = {0.0};
  sgd_momentum_step(p, s);
  // effective gradient = 0 + 0.5*2 = 1; p = 2 - 0.1
  CHECK(p[0] == doctest::Approx(1.9).epsilon(1e-15));
}

TEST_CASE("step without a gradient is a usage error") {
  Tensor p({2}, {1.0, 1.0});
  OptState s;
  CHECK_THROWS_AS(sgd_momentum_step(p, s), Error);
}

TEST_CASE("bundled optimizer updates every parameter") {
  Tensor a({1}, {1.0});
  Tensor b({1}, {2.0});
  a.ensure_grad();
  b.ensure_grad();
  a.grad() = {1.0};
  b.grad() = {1.0};
  SgdMomentum opt({&a, &b}, 0.5, 0.0, 0.0);
  opt.step();
  CHECK(a[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(b[0] == doctest::Approx(1.5).epsilon(1e-15));
  a.grad() = {1.0};
  b.grad() = {1.0};
  opt.set_learning_rate(0.25);
  opt.step();
  CHECK(a[0] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("schedule halves once per period") {
  CHECK(scheduled_lr(0.08, 0, 6) == 0.08);
  CHECK(scheduled_lr(0.08, 5, 6) == 0.08);
  CHECK(scheduled_lr(0.08, 6, 6) == 0.04);
  CHECK(scheduled_lr(0.08, 11, 6) == 0.04);
  CHECK(scheduled_lr(0.08, 12, 6) == 0.02);  // third period
  CHECK(scheduled_lr(0.08, 100, 0) == 0.08);  // period zero disables the schedule
}
