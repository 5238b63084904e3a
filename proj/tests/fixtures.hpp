#pragma once

#include <memory>
#include <vector>

#include "car/gridworld.hpp"
#include "car/policy.hpp"

namespace car::test {

inline GridSpec doorkey_spec(int tile = 8, std::uint64_t layout = 3) {
  GridSpec s;
  s.tile_px = tile;
  s.seed = layout;
  return s;
}

struct Corpora {
  std::shared_ptr<const std::vector<Trajectory>> expert;
  std::shared_ptr<const std::vector<Trajectory>> random;
};

// Expert seeds 0..n_expert-1, random seeds seed_base + i.
inline Corpora doorkey_corpora(const GridSpec& spec, int n_expert = 2, int n_random = 100,
                               std::uint64_t seed_base = 1000) {
  const GridEnv env(spec);
  auto expert = std::make_shared<std::vector<Trajectory>>();
  auto random = std::make_shared<std::vector<Trajectory>>();
  for (int i = 0; i < n_expert; ++i) expert->push_back(rollout_grid(env, PolicyKind::Expert, i).traj);
  for (int i = 0; i < n_random; ++i) random->push_back(rollout_grid(env, PolicyKind::Random, seed_base + i).traj);
  return {expert, random};
}

// Built once per process; tile 8 keeps the 100 random rollouts small.
inline const Corpora& shared_doorkey_corpora() {
  static const Corpora c = doorkey_corpora(doorkey_spec());
  return c;
}

}  // namespace car::test
