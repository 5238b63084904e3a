#include "car/blockpush.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>

#include "car/error.hpp"

namespace car {

namespace {

Vec2d operator+(Vec2d a, Vec2d b) { return {a.x + b.x, a.y + b.y}; }
Vec2d operator-(Vec2d a, Vec2d b) { return {a.x - b.x, a.y - b.y}; }
Vec2d operator*(Vec2d a, double s) { return {a.x * s, a.y * s}; }
double norm(Vec2d a) { return std::hypot(a.x, a.y); }

Vec2d snap(Vec2d v, int px) { return {snap_to_lattice(v.x, px), snap_to_lattice(v.y, px)}; }

// Closest point on the axis-aligned square to p.
Vec2d closest_on_block(Vec2d p, Vec2d block, double half) {
  return {std::clamp(p.x, block.x - half, block.x + half), std::clamp(p.y, block.y - half, block.y + half)};
}

// Largest lattice coordinate range that keeps a body of `half` inside the unit square.
double clamp_body(double v, double half, int px) {
  double lo = snap_to_lattice(half, px);
  if (lo < half) lo += 1.0 / px;
  double hi = snap_to_lattice(1.0 - half, px);
  if (hi > 1.0 - half) hi -= 1.0 / px;
  return std::clamp(v, lo, hi);
}

bool agent_overlaps_block(Vec2d agent, Vec2d block, const PushConfig& cfg) {
  const Vec2d q = closest_on_block(agent, block, cfg.block_half);
  return norm(agent - q) < cfg.agent_radius - 1e-9;
}

// Liang-Barsky test of segment a->b against the open box |p - c| < half.
bool segment_hits_box(Vec2d a, Vec2d b, Vec2d c, double half) {
  double t0 = 0.0, t1 = 1.0;
  const Vec2d d = b - a;
  const std::array<double, 4> p = {-d.x, d.x, -d.y, d.y};
  const std::array<double, 4> q = {a.x - (c.x - half), (c.x + half) - a.x, a.y - (c.y - half), (c.y + half) - a.y};
  for (int i = 0; i < 4; ++i) {
    if (std::abs(p[i]) < 1e-15) {
      if (q[i] <= 0.0) return false;
    } else {
      const double t = q[i] / p[i];
      if (p[i] < 0.0) {
        t0 = std::max(t0, t);
      } else {
        t1 = std::min(t1, t);
      }
      if (t0 >= t1) return false;
    }
  }
  return t1 - t0 > 1e-9;
}

Vec2d clamp_velocity(Vec2d v, double vmax) { return {std::clamp(v.x, -vmax, vmax), std::clamp(v.y, -vmax, vmax)}; }

}  // namespace

double snap_to_lattice(double v, int render_px) { return (std::round(v * render_px - 0.5) + 0.5) / render_px; }

void PushConfig::validate() const {
  if (render_px < 32) throw InvalidSpec("render_px must be at least 32");
  if (agent_radius <= 0 || block_half <= 0 || target_half <= block_half)
    throw InvalidSpec("target must be larger than the block and sizes positive");
  if (v_max <= 0 || dt <= 0) throw InvalidSpec("v_max and dt must be positive");
  if (max_steps < 1) throw InvalidSpec("max_steps must be positive");
  if (min_separation <= 0 || min_separation > 0.9) throw InvalidSpec("min_separation must be in (0, 0.9]");
}

PushState push_reset(const PushConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> inner(0.15, 0.85);
  std::uniform_real_distribution<double> wide(0.1, 0.9);
  PushState s;
  while (true) {
    s.target = snap({inner(rng), inner(rng)}, cfg.render_px);
    s.block = snap({inner(rng), inner(rng)}, cfg.render_px);
    if (norm(s.block - s.target) >= cfg.min_separation) break;
  }
  while (true) {
    s.agent = snap({wide(rng), wide(rng)}, cfg.render_px);
    const Vec2d q = closest_on_block(s.agent, s.block, cfg.block_half);
    const bool clear_of_block = norm(s.agent - q) >= cfg.agent_radius + 0.01;
    const bool clear_of_target = std::max(std::abs(s.agent.x - s.target.x), std::abs(s.agent.y - s.target.y)) >
                                 cfg.target_half + cfg.agent_radius + 1.0 / cfg.render_px;
    if (clear_of_block && clear_of_target) break;
  }
  return s;
}

bool push_block_in_target(const PushState& s, const PushConfig& cfg) {
  const double slack = cfg.target_half - cfg.block_half + 1e-9;
  return std::abs(s.block.x - s.target.x) <= slack && std::abs(s.block.y - s.target.y) <= slack;
}

double push_block_target_distance(const PushState& s) { return norm(s.block - s.target); }

PushStepResult push_step(const PushState& state, Vec2d velocity, const PushConfig& cfg) {
  PushStepResult r;
  r.state = state;
  PushState& s = r.state;
  const int px = cfg.render_px;
  const Vec2d v = clamp_velocity(velocity, cfg.v_max);
  const Vec2d before = s.agent;
  s.agent = snap({clamp_body(s.agent.x + v.x * cfg.dt, cfg.agent_radius, px),
                  clamp_body(s.agent.y + v.y * cfg.dt, cfg.agent_radius, px)},
                 px);

  const Vec2d q = closest_on_block(s.agent, s.block, cfg.block_half);
  const Vec2d delta = q - s.agent;
  const double dist = norm(delta);
  if (dist < cfg.agent_radius) {
    Vec2d push;
    if (dist > 1e-12) {
      push = delta * ((cfg.agent_radius - dist) / dist);
    } else {
      push = v * cfg.dt;  // agent center ended up inside the block
    }
    s.block = snap({clamp_body(s.block.x + push.x, cfg.block_half, px), clamp_body(s.block.y + push.y, cfg.block_half, px)},
                   px);
    // Resolve any remaining overlap (wall clamp or rounding) by backing the agent out.
    if (agent_overlaps_block(s.agent, s.block, cfg)) {
      const Vec2d q2 = closest_on_block(s.agent, s.block, cfg.block_half);
      const Vec2d away = s.agent - q2;
      const double d2 = norm(away);
      Vec2d fixed = d2 > 1e-12 ? q2 + away * (cfg.agent_radius / d2) : before;
      fixed = {clamp_body(fixed.x, cfg.agent_radius, px), clamp_body(fixed.y, cfg.agent_radius, px)};
      // Round outward so the snapped agent stays clear.
      Vec2d snapped = snap(fixed, px);
      for (int k = 0; k < 4 && agent_overlaps_block(snapped, s.block, cfg); ++k) {
        snapped = snap(snapped + (snapped - s.block) * (1.0 / std::max(norm(snapped - s.block), 1e-9) / px), px);
      }
      s.agent = agent_overlaps_block(snapped, s.block, cfg) ? before : snapped;
    }
  }

  ++s.steps;
  r.done = push_block_in_target(s, cfg);
  if (!r.done && s.steps >= cfg.max_steps) r.truncated = true;
  return r;
}

Frame push_render(const PushState& s, const PushConfig& cfg) {
  const int px = cfg.render_px;
  Frame f(px, px, rgb_of(Color::Black));
  auto fill_square = [&](Vec2d c, double half, Color color) {
    const double cx = c.x * px, cy = c.y * px, h = half * px;
    for (int y = static_cast<int>(std::floor(cy - h)); y <= static_cast<int>(std::ceil(cy + h)); ++y) {
      for (int x = static_cast<int>(std::floor(cx - h)); x <= static_cast<int>(std::ceil(cx + h)); ++x) {
        if (!f.contains(x, y)) continue;
        if (std::abs(x + 0.5 - cx) <= h && std::abs(y + 0.5 - cy) <= h) f.set(x, y, rgb_of(color));
      }
    }
  };
  fill_square(s.target, cfg.target_half, Color::Yellow);
  fill_disc(f, s.agent.x * px, s.agent.y * px, cfg.agent_radius * px, rgb_of(Color::Blue));
  // The block goes last so its silhouette is never clipped.
  fill_square(s.block, cfg.block_half, Color::Green);
  return f;
}

Vec2d push_expert(const PushState& s, const PushConfig& cfg) {
  const double tol = 0.5 / cfg.render_px;
  const Vec2d u = s.target - s.block;
  int axis;
  if (std::abs(u.x) > tol) {
    axis = 0;
  } else if (std::abs(u.y) > tol) {
    axis = 1;
  } else {
    return {0.0, 0.0};
  }
  const double along = axis == 0 ? u.x : u.y;
  const double sign = along > 0 ? 1.0 : -1.0;
  const double reach = cfg.block_half + cfg.agent_radius;
  const double gap = 1.0 / cfg.render_px;
  const Vec2d e = axis == 0 ? Vec2d{1.0, 0.0} : Vec2d{0.0, 1.0};
  const Vec2d contact = s.block - e * (sign * (reach + gap));

  // Aligned behind the block: push.
  const double perp = axis == 0 ? s.block.y - s.agent.y : s.block.x - s.agent.x;
  const double behind = axis == 0 ? (s.block.x - s.agent.x) * sign : (s.block.y - s.agent.y) * sign;
  if (std::abs(perp) <= 1.5 / cfg.render_px && behind >= reach - 1e-9 && behind <= reach + 0.02) {
    const double face_gap = behind - reach;
    const double speed = std::min(cfg.v_max, std::abs(along) + face_gap);
    const Vec2d v = e * (sign * speed);
    const Vec2d correction = axis == 0 ? Vec2d{0.0, perp} : Vec2d{perp, 0.0};
    return clamp_velocity(v + correction, cfg.v_max);
  }

  // Otherwise travel to the contact point along the shortest path through the
  // visibility graph {agent, detour corners, contact}.
  const double clearance = reach;
  const double h = reach + 0.012;
  std::array<Vec2d, 6> nodes = {s.agent,
                                Vec2d{s.block.x - h, s.block.y - h},
                                Vec2d{s.block.x + h, s.block.y - h},
                                Vec2d{s.block.x + h, s.block.y + h},
                                Vec2d{s.block.x - h, s.block.y + h},
                                contact};
  for (std::size_t i = 1; i < 5; ++i) {
    nodes[i] = {std::clamp(nodes[i].x, cfg.agent_radius, 1.0 - cfg.agent_radius),
                std::clamp(nodes[i].y, cfg.agent_radius, 1.0 - cfg.agent_radius)};
  }
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::array<double, 6> dist;
  std::array<int, 6> parent;
  std::array<bool, 6> done{};
  dist.fill(kInf);
  parent.fill(-1);
  dist[0] = 0.0;
  for (int iter = 0; iter < 6; ++iter) {
    int u = -1;
    for (int i = 0; i < 6; ++i) {
      if (!done[i] && dist[i] < kInf && (u < 0 || dist[i] < dist[u])) u = i;
    }
    if (u < 0) break;
    done[u] = true;
    for (int w = 0; w < 6; ++w) {
      if (done[w] || segment_hits_box(nodes[u], nodes[w], s.block, clearance)) continue;
      const double nd = dist[u] + norm(nodes[w] - nodes[u]);
      if (nd < dist[w]) {
        dist[w] = nd;
        parent[w] = u;
      }
    }
  }
  Vec2d waypoint;
  if (dist[5] < kInf) {
    int node = 5;
    while (parent[node] != 0) node = parent[node];
    waypoint = nodes[node];
  } else {
    // Boxed in (e.g. block against a wall): back away from the block.
    waypoint = s.agent + (s.agent - s.block) * (1.0 / std::max(norm(s.agent - s.block), 1e-9));
  }
  return clamp_velocity(waypoint - s.agent, cfg.v_max);
}

}  // namespace car
