#include <doctest.h>

#include <cmath>
#include <sstream>

#include "cfie/checkpoint.hpp"
#include "cfie/errors.hpp"
#include "cfie/numerics.hpp"
#include "cfie/optim.hpp"
#include "../support/gradcheck.hpp"

using namespace cfie;
using namespace cfie::num;

TEST_CASE("matmul and matmul_nt match hand values") {
  Tape tape(Tape::Mode::Inference);
  Var a = tape.constant(Array::from_rows({{1, 2}, {3, 4}}));
  Var b = tape.constant(Array::from_rows({{5, 6}, {7, 8}}));
  CHECK(matmul(a, b).value() == Array::from_rows({{19, 22}, {43, 50}}));
  CHECK(matmul_nt(a, b).value() == Array::from_rows({{17, 23}, {39, 53}}));
}

TEST_CASE("shape mismatches raise DimensionError") {
  Tape tape;
  Var a = tape.constant(Array(2, 3));
  Var b = tape.constant(Array(2, 3));
  CHECK_THROWS_AS(matmul(a, b), DimensionError);
  CHECK_THROWS_AS(add(a, tape.constant(Array(3, 2))), DimensionError);
  CHECK_THROWS_AS(add_bias(a, tape.constant(Array(1, 2))), DimensionError);
}

TEST_CASE("softmax rows sum to one and survive large logits") {
  Tape tape(Tape::Mode::Inference);
  Var s = softmax(tape.constant(Array::from_rows({{1000, 1001, 999}, {-5, 0, 5}})));
  for (std::size_t r = 0; r < 2; ++r) {
    double total = 0.0;
    for (double v : s.value().row(r)) total += v;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    for (double v : s.value().row(r)) CHECK(std::isfinite(v));
  }
}

TEST_CASE("cross entropy value helper agrees with the op") {
  const std::vector<double> logits = {0.3, -1.2, 2.0};
  Tape tape(Tape::Mode::Inference);
  const int gold[] = {2};
  Var ce = cross_entropy(tape.constant(Array::row_vector(logits)), gold);
  CHECK(ce.value()[0] == doctest::Approx(cross_entropy(std::span<const double>(logits), 2)).epsilon(1e-14));
  const double lse = std::log(std::exp(0.3) + std::exp(-1.2) + std::exp(2.0));
  CHECK(cross_entropy(std::span<const double>(logits), 2) == doctest::Approx(lse - 2.0).epsilon(1e-14));
}

TEST_CASE("gradients of every op match central differences") {
  std::mt19937_64 rng(11);
  for (auto& [name, build] : gradcheck::op_builders()) {
    gradcheck::Case c;
    c.name = name;
    build(c, rng);
    CAPTURE(name);
    CHECK(gradcheck::check(c) < 1e-3);
  }
}

TEST_CASE("composed model losses match central differences") {
  for (auto& mc : gradcheck::model_cases()) {
    CAPTURE(mc.name);
    CHECK(gradcheck::check_model(mc) < 1e-3);
  }
}

TEST_CASE("inference tape records no gradients") {
  ParameterSet ps;
  Parameter& p = ps.add("w", Array::from_rows({{1.0, 2.0}}));
  Tape tape(Tape::Mode::Inference);
  Var v = sum(mul(tape.parameter(p), tape.parameter(p)));
  CHECK(v.value()[0] == 5.0);
  CHECK_FALSE(tape.recording());
}

TEST_CASE("a parameter used twice accumulates both gradient paths") {
  ParameterSet ps;
  Parameter& p = ps.add("w", Array::from_rows({{3.0}}));
  p.grad = Array(1, 1);
  Tape tape;
  Var w = tape.parameter(p);
  tape.backward(mul(w, w));
  CHECK(p.grad[0] == doctest::Approx(6.0));
}

TEST_CASE("finite difference checker flags a wrong gradient") {
  auto f = [](std::span<const double> x) { return x[0] * x[0]; };
  auto wrong = [](std::span<const double> x) { return std::vector<double>{3.0 * x[0]}; };
  auto right = [](std::span<const double> x) { return std::vector<double>{2.0 * x[0]}; };
  const std::vector<double> at = {1.5};
  CHECK(finite_difference_check(f, wrong, at) > 0.1);
  CHECK(finite_difference_check(f, right, at) < 1e-8);
}

TEST_CASE("adam moves a quadratic toward its minimum and clips") {
  ParameterSet ps;
  Parameter& p = ps.add("w", Array::from_rows({{4.0, -4.0}}));
  Adam adam({0.1, 0.9, 0.999, 1e-8, 1.0});
  for (int step = 0; step < 200; ++step) {
    p.grad = Array(1, 2);
    p.grad[0] = 2.0 * p.value[0];
    p.grad[1] = 2.0 * p.value[1];
    adam.step(ps);
  }
  CHECK(std::abs(p.value[0]) < 0.1);
  CHECK(std::abs(p.value[1]) < 0.1);
  CHECK(adam.steps() == 200);
}

TEST_CASE("checkpoint streams round-trip values bit for bit") {
  std::mt19937_64 rng(3);
  ParameterSet ps;
  ps.add("a", gradcheck::random_array(rng, 3, 2));
  ps.add("b.c", gradcheck::random_array(rng, 1, 5));
  std::stringstream buf;
  write_checkpoint(buf, "{\"k\":1}", ps);
  const CheckpointData data = read_checkpoint(buf);
  CHECK(data.header == "{\"k\":1}");
  ParameterSet fresh;
  fresh.add("a", Array(3, 2));
  fresh.add("b.c", Array(1, 5));
  assign_parameters(fresh, data);
  CHECK(fresh.at("a").value == ps.at("a").value);
  CHECK(fresh.at("b.c").value == ps.at("b.c").value);
}

TEST_CASE("checkpoint reader rejects bad magic, versions and shapes") {
  std::stringstream bad("NOTACKPT 1\n");
  CHECK_THROWS_AS(read_checkpoint(bad), VersionError);
  std::stringstream future("CFIECKPT 99\n");
  CHECK_THROWS_AS(read_checkpoint(future), VersionError);

  ParameterSet ps;
  ps.add("a", Array(2, 2, 1.0));
  std::stringstream buf;
  write_checkpoint(buf, "{}", ps);
  const CheckpointData data = read_checkpoint(buf);
  ParameterSet other;
  other.add("a", Array(2, 3));
  CHECK_THROWS_AS(assign_parameters(other, data), VersionError);
}
