// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "oliera/error.hpp"
#include "oliera/lie.hpp"

using namespace oliera;
using namespace oliera::testing;

TEST_CASE("group_check") {
  CHECK_NOTHROW(group_check(Tensor::matrix({{2, -3}}), 1e-12));
  try {
    group_check(Tensor::matrix({{1, 0}}));
    FAIL("expected a membership error");
  } catch (const MembershipError& e) {
    CHECK(e.row() == 0);
    CHECK(e.col() == 1);
  }
  CHECK_THROWS_AS(group_check(Tensor::matrix({{1e-15}}), 1e-12), MembershipError);
  CHECK_THROWS_AS(group_check(Tensor::matrix({{1e-12}}), 1e-12), MembershipError);
  CHECK_THROWS_AS(group_check(Tensor::matrix({{1.0}}), 0.0), ContractError);
}

TEST_CASE("group_mul") {
  std::mt19937_64 rng(31);
  const GroupElement w(nonzero({3, 4}, rng));
  CHECK(group_mul(w, group_identity({3, 4})).value().bit_equal(w.value()));
  CHECK(group_mul(GroupElement(Tensor::matrix({{2}})), GroupElement(Tensor::matrix({{0.5}}))).value().bit_equal(
      Tensor::matrix({{1}})));
  const GroupElement v(nonzero({3, 4}, rng));
  CHECK(group_mul(w, v).value().bit_equal(group_mul(v, w).value()));
  CHECK_THROWS_AS(group_mul(w, group_identity({4, 3})), ShapeError);
  // underflow of the product leaves the group
  CHECK_THROWS_AS(group_mul(GroupElement(Tensor::matrix({{1e-7}})), GroupElement(Tensor::matrix({{1e-7}}))),
                  MembershipError);
}

TEST_CASE("group_inverse") {
  CHECK(group_inverse(GroupElement(Tensor::matrix({{2, -0.5}}))).value().bit_equal(Tensor::matrix({{0.5, -2}})));
  CHECK(group_inverse(group_identity({2, 2})).value().bit_equal(ones({2, 2})));
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 20; ++trial) {
    const GroupElement w(nonzero({4, 5}, rng, 1e-3, 1e3));
    CHECK(max_abs_diff(group_mul(w, group_inverse(w)).value(), ones({4, 5})) < 1e-12);
  }
}

TEST_CASE("recover_delta") {
  CHECK(recover_delta(GroupElement(Tensor::matrix({{2}})), GroupElement(Tensor::matrix({{6}}))).bit_equal(
      Tensor::matrix({{3}})));
  std::mt19937_64 rng(33);
  const GroupElement w(nonzero({3, 3}, rng));
  CHECK(max_abs_diff(recover_delta(w, w), ones({3, 3})) <= 1e-15);
  for (int trial = 0; trial < 20; ++trial) {
    const GroupElement a(nonzero({3, 6}, rng));
    const GroupElement b(nonzero({3, 6}, rng));
    CHECK(max_abs_diff(group_mul(a, GroupElement(recover_delta(a, b))).value(), b.value()) <= 1e-10);
  }
  CHECK_THROWS_AS(recover_delta(group_identity({2, 2}), group_identity({2, 3})), ShapeError);
}

TEST_CASE("exp_taylor") {
  for (int n = 1; n <= 4; ++n) CHECK(exp_taylor(Tensor::zeros({2, 3}), TaylorOrder(n)).bit_equal(ones({2, 3})));
  CHECK(exp_taylor(Tensor::matrix({{0.1}}), TaylorOrder(2))(0, 0) == doctest::Approx(1.105).epsilon(1e-15));
  CHECK_THROWS_AS(TaylorOrder(0), ContractError);
  Tape tape;
  CHECK_THROWS_AS(exp_taylor(tape.leaf(ones({1})), 0), ContractError);

  std::mt19937_64 rng(34);
  const double bound3 = std::pow(0.1, 4) * std::exp(0.1) / 24.0;
  CHECK(bound3 == doctest::Approx(4.6e-6).epsilon(0.01));
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = uniform({5, 5}, rng, -0.1, 0.1);
    CHECK(max_abs_diff(exp_taylor(x, TaylorOrder(3)), exp_true(x)) <= bound3);
  }
}

TEST_CASE("delta_from_factors and LoraFactors") {
  CHECK(delta_from_factors(LoraFactors(Tensor::zeros({3, 2}), ones({2, 4}))).bit_equal(Tensor::zeros({3, 4})));
  CHECK(delta_from_factors(LoraFactors(Tensor::matrix({{1}, {2}}), Tensor::matrix({{3, 4}})))
            .bit_equal(Tensor::matrix({{3, 4}, {6, 8}})));
  CHECK_THROWS_AS(LoraFactors(ones({3, 2}), ones({3, 4})), ShapeError);
  CHECK_THROWS_AS(LoraFactors(ones({3, 4}), ones({4, 5})), ShapeError);  // r > min(out, in)
  CHECK_THROWS_AS(LoraFactors(ones({3}), ones({1, 4})), ShapeError);

  std::mt19937_64 rng(35);
  for (int trial = 0; trial < 30; ++trial) {
    std::uniform_int_distribution<std::size_t> rr(1, 3);
    const std::size_t r = rr(rng);
    const LoraFactors f(uniform({7, r}, rng), uniform({r, 6}, rng));
    const Tensor d = delta_from_factors(f);
    CHECK(d.same_shape(Tensor({7, 6})));
    CHECK(numerical_rank(d) <= r);
  }
}

TEST_CASE("apply_update") {
  const GroupElement w(Tensor::matrix({{2, -3}}));
  const LoraFactors zero(Tensor::zeros({1, 1}), Tensor::zeros({1, 2}));
  for (int n = 1; n <= 3; ++n) CHECK(apply_update(w, zero, TaylorOrder(n)).bit_equal(w.value()));
  const LoraFactors f(Tensor::matrix({{1}}), Tensor::matrix({{0.5, 0.1}}));
  CHECK(max_abs_diff(apply_update(w, f, TaylorOrder(1)), Tensor::matrix({{3, -3.3}})) <= 1e-15);
  CHECK_THROWS_AS(apply_update(GroupElement(ones({2, 2})), f, TaylorOrder(1)), ShapeError);

  std::mt19937_64 rng(36);
  for (int trial = 0; trial < 20; ++trial) {
    const GroupElement wr(nonzero({4, 6}, rng));
    const LoraFactors fr(uniform({4, 2}, rng, -2, 2), uniform({2, 6}, rng, -2, 2));
    const Tensor exact = hadamard(wr.value(), exp_true(delta_from_factors(fr)));
    for (std::size_t i = 0; i < exact.numel(); ++i) CHECK(std::signbit(exact[i]) == std::signbit(wr.value()[i]));
  }
}

TEST_CASE("apply_update: gradients reach B and A, never W") {
  std::mt19937_64 rng(37);
  const Tensor mix = uniform({4, 5}, rng);
  for (int trial = 0; trial < 20; ++trial) {
    const GroupElement w(nonzero({4, 5}, rng));
    const int order = 1 + trial % 3;
    const GraphFn f = [&](Tape& t, const std::vector<Var>& v) {
      return sum(hadamard(apply_update(w, v[0], v[1], TaylorOrder(order)), t.constant(mix)));
    };
    CHECK(gradient_check(f, {uniform({4, 2}, rng), uniform({2, 5}, rng)}) < 1e-4);
    Tape tape;
    Var b = tape.leaf(uniform({4, 2}, rng));
    Var a = tape.leaf(uniform({2, 5}, rng));
    CHECK(tape.backward(sum(apply_update(w, b, a, TaylorOrder(order)))).size() == 2);
  }
}

TEST_CASE("compose_task_updates") {
  std::mt19937_64 rng(38);
  const GroupElement w(nonzero({3, 5}, rng));
  CHECK(compose_task_updates(w, {}, TaylorOrder(2)).bit_equal(w.value()));
  const LoraFactors f1(uniform({3, 2}, rng, -0.5, 0.5), uniform({2, 5}, rng, -0.5, 0.5));
  const LoraFactors f2(uniform({3, 2}, rng, -0.5, 0.5), uniform({2, 5}, rng, -0.5, 0.5));
  const std::vector<LoraFactors> one{f1};
  CHECK(compose_task_updates(w, one, TaylorOrder(2)).bit_equal(apply_update(w, f1, TaylorOrder(2))));
  const std::vector<LoraFactors> ab{f1, f2};
  const std::vector<LoraFactors> ba{f2, f1};
  CHECK(max_abs_diff(compose_task_updates(w, ab, TaylorOrder(2)), compose_task_updates(w, ba, TaylorOrder(2))) <=
        1e-12);
  const std::vector<LoraFactors> bad{LoraFactors(ones({2, 1}), ones({1, 5}))};
  CHECK_THROWS_AS(compose_task_updates(w, bad, TaylorOrder(1)), ShapeError);
}

TEST_CASE("membership guard clamps instead of failing") {
  // order 1 with BA = -1 gives an exact zero
  const GroupElement w(Tensor::matrix({{2, 3}}));
  const LoraFactors f(Tensor::matrix({{1}}), Tensor::matrix({{-1, 0.5}}));
  const std::size_t before = membership_clamp_count();
  const Tensor out = apply_update(w, f, TaylorOrder(1));
  CHECK(membership_clamp_count() == before + 1);
  CHECK(out(0, 0) > kMembershipEps);
  CHECK_NOTHROW(group_check(out));
  Tensor t = Tensor::matrix({{-0.0, 1.0}});
  CHECK(guard_membership(t) == 1);
  CHECK(t(0, 0) < -kMembershipEps);
}
