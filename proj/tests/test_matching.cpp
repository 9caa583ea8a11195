#include <cmath>

#include "doctest.h"
#include "snipper/error.hpp"
#include "snipper/matching.hpp"
#include "snipper/ops.hpp"
#include "support/oracles.hpp"

using namespace snipper;
using namespace snipper::matching;
using geometry::Pose;
using geometry::Trajectory;

namespace {

constexpr std::size_t kJ = 15;

std::vector<std::vector<double>> random_cost(std::size_t preds, std::size_t targets, Rng& rng) {
  std::vector<std::vector<double>> c(preds, std::vector<double>(targets));
  for (auto& row : c)
    for (auto& x : row) x = rng.uniform() < 0.2 ? std::floor(rng.uniform(0, 4)) : rng.uniform(-3, 5);
  return c;
}

// Layer whose final outputs reproduce `targets` exactly (loss space) on the
// first target.size() queries; other people are confidently absent.
model::LayerPrediction perfect_layer(const std::vector<Trajectory>& targets, std::size_t people,
                                     std::size_t slots) {
  const std::size_t q = people * slots;
  std::vector<double> xy(q * 2, 0.5), d(q, 5.0), off(q * kJ * 3, 0.0), vis(q * kJ, -40.0), occ(q, -40.0);
  for (std::size_t i = 0; i < targets.size(); ++i)
    for (std::size_t t = 0; t < slots; ++t) {
      const auto& p = targets[i].poses[t];
      if (!p) continue;
      const std::size_t r = i * slots + t;
      xy[2 * r] = p->root[0];
      xy[2 * r + 1] = p->root[1];
      d[r] = p->root[2];
      for (std::size_t k = 0; k < kJ; ++k) {
        for (std::size_t a = 0; a < 3; ++a) off[(r * kJ + k) * 3 + a] = p->offsets[k][a];
        vis[r * kJ + k] = p->visibility[k] > 0.5 ? 40.0 : -40.0;
      }
      occ[r] = 40.0;
    }
  model::LayerPrediction l;
  l.root_xy = Tensor({q, 2}, xy, true);
  l.root_depth = Tensor({q, 1}, d, true);
  l.offsets = Tensor({q, kJ * 3}, off, true);
  l.vis_logits = Tensor({q, kJ}, vis, true);
  l.occ_logits = Tensor({q, 1}, occ, true);
  l.reference = Tensor({q, 3}, 0.0, true);
  return l;
}

}  // namespace

TEST_CASE("hungarian equals brute force on random matrices") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t targets = 1 + rng.below(6);
    const std::size_t preds = targets + rng.below(7 - targets);
    const auto cost = random_cost(preds, targets, rng);
    const auto a = hungarian(cost);
    CHECK(a.total_cost == oracle::brute_force_assignment(cost));
    std::vector<bool> used(preds, false);
    for (auto p : a.target_to_pred) {
      CHECK(!used[p]);
      used[p] = true;
    }
  }
}

TEST_CASE("hungarian edge cases") {
  CHECK(hungarian({}).target_to_pred.empty());
  CHECK(hungarian({{}, {}}).total_cost == 0.0);
  CHECK_THROWS_AS(hungarian({{1.0, 2.0}}), CapacityError);
  CHECK_THROWS_AS(hungarian({{1.0, 2.0}, {1.0}}), DimensionError);
  CHECK_THROWS_AS(hungarian({{std::nan("")}}), NumericError);
  // all-equal costs still give a valid permutation
  const auto a = hungarian({{1, 1, 1}, {1, 1, 1}, {1, 1, 1}});
  CHECK(a.total_cost == 3.0);
}

TEST_CASE("pair costs by hand") {
  Pose tp = Pose::zeros(2), pp = Pose::zeros(2);
  tp.root = {0.5, 0.5, 5.0};
  tp.visibility = {1.0, 0.0};
  pp.root = {0.6, 0.5, 5.0};
  pp.visibility = {1.0, 1.0};
  pp.occurrence = 0.8;
  const Trajectory target{{tp, std::nullopt}, 0};
  Pose absent = pp;
  absent.occurrence = 0.1;
  const Trajectory pred{{pp, absent}, 0};
  CHECK(occ_cost(pred, target) == doctest::Approx(-0.8));
  // only the visible joint counts: |0.1| in x
  CHECK(traj_cost(pred, target) == doctest::Approx(0.1));
  // (0)^2 + (1)^2 present, (1)^2 + (1)^2 absent slot -> 3 / 4
  CHECK(vis_cost(pred, target) == doctest::Approx(0.75));
  const Trajectory never{{std::nullopt, std::nullopt}, 1};
  CHECK_THROWS_AS(occ_cost(pred, never), DegenerateError);
}

TEST_CASE("training loss equals the scalar-loop oracle") {
  Rng rng(2);
  const std::size_t people = 4, T = 4, Tf = 2, slots = T + Tf;
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<model::LayerPrediction> layers = {oracle::random_layer(people, slots, kJ, rng),
                                                  oracle::random_layer(people, slots, kJ, rng)};
    std::vector<Trajectory> targets = {
        oracle::random_target({true, true, true, true, true, true}, kJ, rng),
        oracle::random_target({false, true, true, true, true, false}, kJ, rng)};
    const Tensor heat = oracle::random_leaf({T, 4, 4, kJ}, rng);
    const Tensor heat_t = oracle::random_leaf({T, 4, 4, kJ}, rng, 0.0, 1.0);
    for (bool absent : {false, true}) {
      LossConfig cfg;
      cfg.supervise_absent = absent;
      const auto got = training_loss(layers, targets, heat, heat_t, people, slots, kJ, cfg);
      const auto want = oracle::loss_oracle(layers, targets, heat, heat_t, people, slots, kJ, absent);
      CHECK(std::abs(got.summed.occ - want.occ) < 1e-10);
      CHECK(std::abs(got.summed.traj - want.traj) < 1e-10);
      CHECK(std::abs(got.summed.vis - want.vis) < 1e-10);
      CHECK(std::abs(got.summed.offset - want.offset) < 1e-10);
      CHECK(std::abs(got.summed.smooth - want.smooth) < 1e-10);
      CHECK(std::abs(got.summed.heatmap - want.heatmap) < 1e-10);
      CHECK(std::abs(got.summed.total - want.total) < 1e-10);
      CHECK(std::abs(got.total.item() - want.total) < 1e-10);
    }
  }
}

TEST_CASE("perfect predictions leave only the target's own smoothness") {
  Rng rng(3);
  const std::size_t people = 3, slots = 5;
  std::vector<Trajectory> targets = {oracle::random_target({true, true, true, true, true}, kJ, rng),
                                     oracle::random_target({true, true, true, true, true}, kJ, rng)};
  const auto layer = perfect_layer(targets, people, slots);
  const Tensor heat({2, 3, 3, kJ}, 0.25);
  const auto loss = training_loss({layer}, targets, heat, heat, people, slots, kJ);
  CHECK(loss.summed.occ < 1e-12);
  CHECK(loss.summed.traj < 1e-12);
  CHECK(loss.summed.offset < 1e-12);
  CHECK(loss.summed.vis < 1e-12);
  CHECK(loss.summed.heatmap == 0.0);
  double own = 0.0;
  for (const auto& t : targets)
    for (std::size_t s = 1; s < slots; ++s)
      for (std::size_t k = 0; k < kJ; ++k)
        for (int a = 0; a < 3; ++a) {
          const double d = t.poses[s]->offsets[k][a] - t.poses[s - 1]->offsets[k][a];
          own += d * d / (kJ * (slots - 1)) / 2.0;
        }
  CHECK(loss.summed.smooth == doctest::Approx(own).epsilon(1e-12));
}

TEST_CASE("matching drops degenerate targets and reuses the final-layer assignment") {
  Rng rng(4);
  const std::size_t people = 3, slots = 3;
  Trajectory hidden = oracle::random_target({true, true, true}, kJ, rng);
  for (auto& p : hidden.poses) std::fill(p->visibility.begin(), p->visibility.end(), 0.0);
  const Trajectory never{{std::nullopt, std::nullopt, std::nullopt}, 5};
  const std::vector<Trajectory> targets = {hidden, oracle::random_target({true, true, false}, kJ, rng), never};
  const auto layers = std::vector{oracle::random_layer(people, slots, kJ, rng),
                                  oracle::random_layer(people, slots, kJ, rng)};
  const Tensor heat({1, 2, 2, kJ}, 0.0);
  const auto loss = training_loss(layers, targets, heat, heat, people, slots, kJ);
  CHECK(loss.match.kept_targets == std::vector<std::size_t>{1});
  CHECK(loss.match.dropped_targets == std::vector<std::size_t>{0, 2});
  CHECK(loss.layers.size() == 2);
  // no targets at all: only the absence term remains
  const auto empty = training_loss(layers, {}, heat, heat, people, slots, kJ);
  CHECK(empty.summed.traj == 0.0);
  CHECK(empty.summed.occ > 0.0);
  CHECK_THROWS_AS(training_loss(layers, targets, heat, Tensor({1, 2, 3, kJ}), people, slots, kJ),
                  DimensionError);
}

TEST_CASE("training loss gradients w.r.t. predictions") {
  Rng rng(5);
  const std::size_t people = 3, slots = 4;
  auto layers = std::vector{oracle::random_layer(people, slots, kJ, rng),
                            oracle::random_layer(people, slots, kJ, rng)};
  const std::vector<Trajectory> targets = {oracle::random_target({true, true, true, false}, kJ, rng),
                                           oracle::random_target({true, true, true, true}, kJ, rng)};
  Tensor heat = oracle::random_leaf({2, 3, 3, kJ}, rng);
  const Tensor heat_t = oracle::random_leaf({2, 3, 3, kJ}, rng, 0.0, 1.0);
  auto f = [&] { return training_loss(layers, targets, heat, heat_t, people, slots, kJ).total; };
  std::vector<Tensor> leaves{heat};
  for (auto& l : layers)
    for (auto* t : {&l.root_xy, &l.root_depth, &l.offsets, &l.vis_logits, &l.occ_logits}) leaves.push_back(*t);
  CHECK(oracle::grad_check(leaves, f, rng).rel_error < 1e-4);
}

TEST_CASE("loss-space conversion") {
  const geometry::CameraIntrinsics cam{80, 80, 32, 32};
  Pose p = Pose::zeros(2);
  p.root = {32.0, 16.0, 4.0};
  p.offsets[1] = {20.0, -10.0, 0.1};
  const auto t = to_loss_space(Trajectory{{p, std::nullopt}, 3}, 64, 64, cam);
  CHECK(t.identity == 3);
  CHECK(!t.poses[1]);
  CHECK(t.poses[0]->root[0] == 0.5);
  CHECK(t.poses[0]->root[1] == 0.25);
  CHECK(t.poses[0]->root[2] == 4.0);
  CHECK(t.poses[0]->offsets[1][0] == doctest::Approx(1.0));
  CHECK(t.poses[0]->offsets[1][1] == doctest::Approx(-0.5));
  CHECK(t.poses[0]->offsets[1][2] == doctest::Approx(0.1));
}

TEST_CASE("target heatmaps peak at visible joints") {
  Pose p = Pose::zeros(2);
  p.root = {32.0, 0.0, 5.0};  // grid x = 32 / 64 * 15 = 7.5
  p.offsets[1] = {-32.0, 64.0, 0.0};
  p.visibility = {1.0, 0.0};
  const Tensor h = target_heatmaps({{p}}, 2, 16, 16, 64, 64, 2.0);
  REQUIRE(h.shape() == Shape{1, 16, 16, 2});
  // joint 0 at grid (7.5, 0): cell (0, 7) has distance 0.5
  CHECK(h[(0 * 16 + 7) * 2] == doctest::Approx(std::exp(-0.25 / 8.0)));
  double hidden = 0.0;
  for (std::size_t i = 0; i < 256; ++i) hidden += h[i * 2 + 1];
  CHECK(hidden == 0.0);
  // two people: max, not sum
  const Tensor two = target_heatmaps({{p, p}}, 2, 16, 16, 64, 64, 2.0);
  for (std::size_t i = 0; i < h.numel(); ++i) CHECK(two[i] == h[i]);
}
