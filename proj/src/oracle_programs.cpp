#include "car/oracle_programs.hpp"

#include <charconv>
#include <cmath>

#include "car/blockpush.hpp"

namespace car::oracle {

namespace {

std::string real(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, r.ptr);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

// Replaces every "$name" placeholder.
std::string fill(std::string text, const std::string& name, const std::string& value) {
  for (std::size_t at = text.find(name); at != std::string::npos; at = text.find(name, at + value.size())) {
    text.replace(at, name.size(), value);
  }
  return text;
}

}  // namespace

GridPrograms grid_programs(int tile_px) {
  const std::string eps = real(tile_px / 8.0);
  const std::string near = real(2.0 * tile_px);
  GridPrograms g;
  g.agent_id = R"(// The agent is the red triangle.
fn agents() {
  return filter_vertices(contours(mask(frame(), "red")), $eps, 3, 3);
}

fn identify() {
  return detection(agents());
}
)";
  g.key_id = R"(// Keys are yellow outlines with more than four corners.
fn identify() {
  let yellow = contours(mask(frame(), "yellow"));
  return detection(filter_vertices(yellow, $eps, 5, 1000));
}
)";
  g.door_id = R"(// Doors are yellow and at most four-cornered: a square when closed,
// a strip when open.
fn identify() {
  let yellow = contours(mask(frame(), "yellow"));
  return detection(filter_vertices(yellow, $eps, 1, 4));
}
)";
  g.goal_id = R"(fn identify() {
  let green = contours(mask(frame(), "green"));
  return detection(filter_vertices(green, $eps, 4, 4));
}
)";
  g.key_check = R"(// Done once no key-shaped yellow contour is left.
fn check() {
  let yellow = contours(mask(frame(), "yellow"));
  let keys = filter_vertices(yellow, $eps, 5, 1000);
  return count(keys) == 0;
}
)";
  g.door_check = R"(fn door() {
  let yellow = contours(mask(frame(), "yellow"));
  return largest(filter_vertices(yellow, $eps, 1, 4));
}

// An open door is drawn as a tall thin strip.
fn check() {
  let box = bbox(door());
  return height(box) >= 3 * width(box);
}
)";
  g.goal_check = R"(fn agents() {
  return filter_vertices(contours(mask(frame(), "red")), $eps, 3, 3);
}

fn check() {
  if !has("goal") {
    let green = contours(mask(initial(), "green"));
    store "goal" = largest(filter_vertices(green, $eps, 4, 4));
  }
  let a = agents();
  if count(a) == 0 {
    return false;
  }
  return contains(recall("goal"), centroid(largest(a)));
}
)";
  g.proximity_key_check = R"(fn check() {
  if !has("key") {
    let yellow = contours(mask(initial(), "yellow"));
    store "key" = centroid(largest(filter_vertices(yellow, $eps, 5, 1000)));
  }
  let a = filter_vertices(contours(mask(frame(), "red")), $eps, 3, 3);
  if count(a) == 0 {
    return false;
  }
  return dist(centroid(largest(a)), recall("key")) < $near;
}
)";
  for (std::string* s : {&g.agent_id, &g.key_id, &g.door_id, &g.goal_id, &g.key_check, &g.door_check, &g.goal_check,
                         &g.proximity_key_check}) {
    *s = fill(fill(*s, "$eps", eps), "$near", near);
  }
  return g;
}

PushPrograms push_programs() {
  const PushConfig cfg;
  // Largest center offset (in pixels) that still keeps the block inside the target.
  const std::string slack = real(std::floor((cfg.target_half - cfg.block_half) * cfg.render_px * 100.0) / 100.0);
  PushPrograms p;
  p.block_id = R"(fn identify() {
  return detection(contours(mask(frame(), "green")));
}
)";
  p.target_id = R"(fn identify() {
  return detection(contours(mask(frame(), "yellow")));
}
)";
  p.goal_check = R"(// The target never moves; remember where it was before anything covered it.
fn check() {
  if !has("target") {
    store "target" = centroid(largest(contours(mask(initial(), "yellow"))));
  }
  let blocks = contours(mask(frame(), "green"));
  if count(blocks) == 0 {
    return false;
  }
  let b = centroid(largest(blocks));
  let t = recall("target");
  return abs(x(b) - x(t)) <= $slack && abs(y(b) - y(t)) <= $slack;
}
)";
  p.incremental_reward = R"(fn block_now() {
  return centroid(largest(contours(mask(frame(), "green"))));
}

fn reward() {
  if !has("d0") {
    store "target" = centroid(largest(contours(mask(initial(), "yellow"))));
    let start = centroid(largest(contours(mask(initial(), "green"))));
    store "d0" = dist(start, recall("target"));
  }
  let d0 = recall("d0");
  let r = (d0 - dist(block_now(), recall("target"))) / d0;
  return max(0.0, min(1.0, r));
}
)";
  p.goal_check = fill(p.goal_check, "$slack", slack);
  return p;
}

}  // namespace car::oracle
