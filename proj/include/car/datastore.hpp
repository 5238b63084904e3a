#pragma once

// On-disk artifacts: trajectories as PNG frames plus a versioned manifest,
// corpora of trajectories, session transcripts, reports and programs.
//
// Trajectory directory layout:
//   frame_000000.png ... frame_NNNNNN.png   8-bit RGB, no alpha
//   manifest.json                            "v1", see TrajectoryManifest
//   .lock                                    advisory writer lock

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "car/artifacts.hpp"
#include "car/blockpush.hpp"
#include "car/frame.hpp"
#include "car/gridworld.hpp"
#include "car/policy.hpp"
#include "car/rewardlang.hpp"
#include "car/session.hpp"
#include "car/verifier.hpp"

namespace car {

namespace fs = std::filesystem;

inline constexpr std::string_view kManifestVersion = "v1";

// ---- codecs and hashes ----

std::vector<std::uint8_t> encode_png(const Frame& frame);
// Throws IntegrityError on undecodable data.
Frame decode_png(std::span<const std::uint8_t> bytes);
void write_png(const fs::path& path, const Frame& frame);
Frame read_png(const fs::path& path);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);
// Hash of the PNG encoding; this is what session logs and manifests record.
std::string frame_hash(const Frame& frame);

std::vector<std::uint8_t> read_bytes(const fs::path& path);
std::string read_text(const fs::path& path);
void write_text(const fs::path& path, std::string_view text);

// Canonical one-line descriptions; their hashes identify the exact spec.
std::string canonical_spec(const GridSpec& spec);
std::string canonical_spec(const PushConfig& cfg);

// ---- trajectories ----

struct FrameEntry {
  std::string file;
  std::string sha256;
  friend bool operator==(const FrameEntry&, const FrameEntry&) = default;
};

struct TrajectoryManifest {
  std::string version{kManifestVersion};
  std::string env_id;
  std::string spec;
  std::string spec_hash;
  std::string policy;
  std::uint64_t seed = 0;
  int frame_count = 0;
  std::vector<std::vector<double>> actions;
  std::vector<double> rewards;
  std::vector<FrameEntry> frames;
  // SHA-256 of the manifest serialized without this field.
  std::string content_hash;

  std::string to_json() const;
  // Throws SchemaError.
  static TrajectoryManifest from_json(std::string_view text);
};

// Exclusive, advisory, per-directory writer lock (flock on `.lock`).
class DirLock {
 public:
  // Throws IoError when another writer holds the lock.
  explicit DirLock(const fs::path& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  int fd_ = -1;
};

TrajectoryManifest save_trajectory(const Trajectory& traj, const fs::path& dir, std::string_view spec = {});
// Validates counts and every frame hash. Throws IntegrityError, SchemaError
// or IoError. Never writes.
Trajectory load_trajectory(const fs::path& dir, TrajectoryManifest* manifest = nullptr);

// A corpus is a directory of trajectory directories traj_000000, traj_000001...
fs::path corpus_entry(const fs::path& dir, std::size_t index);
std::vector<TrajectoryManifest> save_corpus(const std::vector<Trajectory>& trajs, const fs::path& dir,
                                            std::string_view spec = {});
// Throws IoError when the directory is missing or holds no trajectories.
std::vector<Trajectory> load_corpus(const fs::path& dir);

// ---- sessions, reports, programs ----

// JSON lines: {"role", "text", "image_hashes", "timestamp"}.
std::string session_to_jsonl(const std::vector<SessionRecord>& records);
// Throws SchemaError naming the 1-based line.
std::vector<SessionRecord> session_from_jsonl(std::string_view text);
void save_session(const fs::path& path, const std::vector<SessionRecord>& records);
std::vector<SessionRecord> load_session(const fs::path& path);

void save_report(const fs::path& path, const VerificationReport& report);
VerificationReport load_report(const fs::path& path);

// Programs are stored as their source text (`.rwd`).
void save_program(const fs::path& path, const dsl::Program& program);
// Throws SchemaError when the file does not parse.
dsl::Program load_program(const fs::path& path);

// Generated programs as programs/*.rwd plus an artifacts.json index that
// records each file's SHA-256:
//   agent_ID_script, task_<i>_o<k>_ID_script, task_<i>_check,
//   goal_o<k>_ID_script, goal_check, goal_reward
void save_artifacts(const fs::path& dir, const GeneratedArtifacts& artifacts);
// Throws IoError, SchemaError, or IntegrityError on a hash mismatch.
GeneratedArtifacts load_artifacts(const fs::path& dir);

}  // namespace car
