#include "car/datastore.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <openssl/evp.h>
#include <png.h>

#include "json.hpp"

#include "car/error.hpp"

namespace car {

using json = nlohmann::json;

namespace {

std::string frame_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06zu.png", i);
  return buf;
}

std::string traj_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "traj_%06zu", i);
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

json manifest_body(const TrajectoryManifest& m) {
  json frames = json::array();
  for (const FrameEntry& f : m.frames) frames.push_back({{"file", f.file}, {"sha256", f.sha256}});
  return {{"version", m.version}, {"env_id", m.env_id},   {"spec", m.spec},
          {"spec_hash", m.spec_hash}, {"policy", m.policy}, {"seed", m.seed},
          {"frame_count", m.frame_count}, {"actions", m.actions}, {"rewards", m.rewards},
          {"frames", frames}};
}

}  // namespace

// ---- codecs and hashes ----

std::vector<std::uint8_t> encode_png(const Frame& frame) {
  if (frame.empty()) throw IntegrityError("cannot encode an empty frame");
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(frame.width());
  image.height = static_cast<png_uint_32>(frame.height());
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, frame.data().data(), 0, nullptr)) {
    throw IntegrityError(std::string("png encode failed: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, frame.data().data(), 0, nullptr)) {
    throw IntegrityError(std::string("png encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

Frame decode_png(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw IntegrityError(std::string("png decode failed: ") + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  Frame frame(static_cast<int>(image.width), static_cast<int>(image.height));
  if (!png_image_finish_read(&image, nullptr, frame.data().data(), 0, nullptr)) {
    png_image_free(&image);
    throw IntegrityError(std::string("png decode failed: ") + image.message);
  }
  return frame;
}

void write_png(const fs::path& path, const Frame& frame) {
  const std::vector<std::uint8_t> bytes = encode_png(frame);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write " + path.string());
}

Frame read_png(const fs::path& path) {
  const std::vector<std::uint8_t> bytes = read_bytes(path);
  return decode_png(bytes);
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw IntegrityError("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 15];
  }
  return out;
}

std::string sha256_hex(std::string_view text) {
  return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string frame_hash(const Frame& frame) { return sha256_hex(encode_png(frame)); }

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("cannot write " + path.string());
}

std::string canonical_spec(const GridSpec& spec) {
  std::ostringstream os;
  os << spec.env_id() << " tile=" << spec.tile_px << " seed=" << spec.seed << " max_steps=" << spec.step_limit();
  return os.str();
}

std::string canonical_spec(const PushConfig& cfg) {
  json j = {{"render_px", cfg.render_px},     {"agent_radius", cfg.agent_radius}, {"block_half", cfg.block_half},
            {"target_half", cfg.target_half}, {"v_max", cfg.v_max},               {"dt", cfg.dt},
            {"max_steps", cfg.max_steps},     {"min_separation", cfg.min_separation}};
  return std::string(kPushEnvId) + " " + j.dump();
}

// ---- manifest ----

std::string TrajectoryManifest::to_json() const {
  json j = manifest_body(*this);
  j["content_hash"] = content_hash;
  return j.dump(2) + "\n";
}

TrajectoryManifest TrajectoryManifest::from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    TrajectoryManifest m;
    m.version = j.at("version").get<std::string>();
    if (m.version != kManifestVersion) throw SchemaError("unsupported manifest version " + m.version);
    m.env_id = j.at("env_id").get<std::string>();
    m.spec = j.at("spec").get<std::string>();
    m.spec_hash = j.at("spec_hash").get<std::string>();
    m.policy = j.at("policy").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.frame_count = j.at("frame_count").get<int>();
    m.actions = j.at("actions").get<std::vector<std::vector<double>>>();
    m.rewards = j.at("rewards").get<std::vector<double>>();
    for (const json& f : j.at("frames")) {
      m.frames.push_back({f.at("file").get<std::string>(), f.at("sha256").get<std::string>()});
    }
    m.content_hash = j.at("content_hash").get<std::string>();
    return m;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed manifest: ") + e.what());
  }
}

// ---- lock ----

DirLock::DirLock(const fs::path& dir) {
  ensure_dir(dir);
  const fs::path p = dir / ".lock";
  fd_ = ::open(p.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw IoError("cannot open " + p.string() + ": " + std::strerror(errno));
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw IoError(dir.string() + " is locked by another writer");
  }
}

DirLock::~DirLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

// ---- trajectories ----

TrajectoryManifest save_trajectory(const Trajectory& traj, const fs::path& dir, std::string_view spec) {
  if (traj.frames.size() != traj.actions.size() + 1 || traj.frames.size() != traj.rewards.size() + 1) {
    throw IntegrityError("trajectory needs frames = actions + 1 = rewards + 1");
  }
  DirLock lock(dir);
  TrajectoryManifest m;
  m.env_id = traj.env_id;
  m.spec = spec.empty() ? traj.env_id : std::string(spec);
  m.spec_hash = sha256_hex(m.spec);
  m.policy = traj.policy;
  m.seed = traj.seed;
  m.frame_count = static_cast<int>(traj.frames.size());
  m.actions = traj.actions;
  m.rewards = traj.rewards;
  for (std::size_t i = 0; i < traj.frames.size(); ++i) {
    const std::vector<std::uint8_t> bytes = encode_png(traj.frames[i]);
    const std::string name = frame_name(i);
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("cannot write " + (dir / name).string());
    m.frames.push_back({name, sha256_hex(bytes)});
  }
  m.content_hash = sha256_hex(manifest_body(m).dump());
  write_text(dir / "manifest.json", m.to_json());
  return m;
}

Trajectory load_trajectory(const fs::path& dir, TrajectoryManifest* manifest) {
  if (!fs::is_directory(dir)) throw IoError("no trajectory directory " + dir.string());
  TrajectoryManifest m = TrajectoryManifest::from_json(read_text(dir / "manifest.json"));
  if (sha256_hex(manifest_body(m).dump()) != m.content_hash) {
    throw IntegrityError("manifest content hash mismatch in " + dir.string());
  }
  if (sha256_hex(m.spec) != m.spec_hash) throw IntegrityError("spec hash mismatch in " + dir.string());
  const auto n = static_cast<std::size_t>(std::max(0, m.frame_count));
  if (m.frame_count < 1 || m.frames.size() != n || m.actions.size() + 1 != n || m.rewards.size() + 1 != n) {
    throw IntegrityError("frame, action and reward counts disagree in " + dir.string());
  }
  Trajectory t;
  t.env_id = m.env_id;
  t.policy = m.policy;
  t.seed = m.seed;
  t.actions = m.actions;
  t.rewards = m.rewards;
  for (const FrameEntry& f : m.frames) {
    const fs::path p = dir / f.file;
    if (!fs::is_regular_file(p)) throw IntegrityError("missing frame " + p.string());
    const std::vector<std::uint8_t> bytes = read_bytes(p);
    if (sha256_hex(bytes) != f.sha256) throw IntegrityError("hash mismatch for " + p.string());
    t.frames.push_back(decode_png(bytes));
  }
  if (manifest != nullptr) *manifest = std::move(m);
  return t;
}

fs::path corpus_entry(const fs::path& dir, std::size_t index) { return dir / traj_name(index); }

std::vector<TrajectoryManifest> save_corpus(const std::vector<Trajectory>& trajs, const fs::path& dir,
                                            std::string_view spec) {
  ensure_dir(dir);
  std::vector<TrajectoryManifest> out;
  for (std::size_t i = 0; i < trajs.size(); ++i) out.push_back(save_trajectory(trajs[i], dir / traj_name(i), spec));
  return out;
}

std::vector<Trajectory> load_corpus(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("no corpus directory " + dir.string());
  std::vector<fs::path> dirs;
  for (const fs::directory_entry& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && fs::exists(e.path() / "manifest.json")) dirs.push_back(e.path());
  }
  if (dirs.empty()) throw IoError("corpus " + dir.string() + " holds no trajectories");
  std::sort(dirs.begin(), dirs.end());
  std::vector<Trajectory> out;
  out.reserve(dirs.size());
  for (const fs::path& d : dirs) out.push_back(load_trajectory(d));
  return out;
}

// ---- sessions ----

std::string session_to_jsonl(const std::vector<SessionRecord>& records) {
  std::string out;
  for (const SessionRecord& r : records) {
    const json j = {{"role", r.role}, {"text", r.text}, {"image_hashes", r.image_hashes}, {"timestamp", r.timestamp}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<SessionRecord> session_from_jsonl(std::string_view text) {
  std::vector<SessionRecord> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      SessionRecord r;
      r.role = j.at("role").get<std::string>();
      if (r.role != "system" && r.role != "user" && r.role != "assistant") {
        throw SchemaError("line " + std::to_string(line_no) + ": unknown role '" + r.role + "'");
      }
      r.text = j.at("text").get<std::string>();
      r.image_hashes = j.at("image_hashes").get<std::vector<std::string>>();
      r.timestamp = j.at("timestamp").get<std::string>();
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw SchemaError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void save_session(const fs::path& path, const std::vector<SessionRecord>& records) {
  write_text(path, session_to_jsonl(records));
}

std::vector<SessionRecord> load_session(const fs::path& path) { return session_from_jsonl(read_text(path)); }

// ---- reports and programs ----

void save_report(const fs::path& path, const VerificationReport& report) { write_text(path, report.to_json()); }

VerificationReport load_report(const fs::path& path) { return VerificationReport::from_json(read_text(path)); }

void save_program(const fs::path& path, const dsl::Program& program) {
  std::string text = program.source.empty() ? dsl::format(program) : program.source;
  if (text.empty() || text.back() != '\n') text += '\n';
  write_text(path, text);
}

dsl::Program load_program(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return dsl::parse_any(text);
  } catch (const dsl::ParseError& e) {
    throw SchemaError(path.string() + ":" + to_string(e.pos()) + ": " + e.what());
  } catch (const dsl::WrongEntrypoint& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

// ---- generated artifacts ----

namespace {

constexpr std::string_view kArtifactsFormat = "car-artifacts/v1";

}  // namespace

void save_artifacts(const fs::path& dir, const GeneratedArtifacts& a) {
  DirLock lock(dir);
  ensure_dir(dir / "programs");
  json files = json::object();
  auto put = [&](const std::string& stem, const dsl::Program& p) -> json {
    const std::string rel = "programs/" + stem + ".rwd";
    save_program(dir / rel, p);
    files[rel] = sha256_hex(read_bytes(dir / rel));
    return rel;
  };
  json j;
  j["format"] = kArtifactsFormat;
  j["task_description"] = a.task_description;
  j["subtask_descriptions"] = a.subtask_descriptions;
  j["agent_identifier"] = a.agent_identifier ? put("agent_ID_script", *a.agent_identifier) : json(nullptr);
  j["identifiers"] = json::array();
  for (std::size_t i = 0; i < a.identifiers.size(); ++i) {
    json row = json::array();
    for (std::size_t k = 0; k < a.identifiers[i].size(); ++k) {
      row.push_back(put("task_" + std::to_string(i + 1) + "_o" + std::to_string(k + 1) + "_ID_script",
                        a.identifiers[i][k]));
    }
    j["identifiers"].push_back(row);
  }
  j["checkers"] = json::array();
  for (std::size_t i = 0; i < a.checkers.size(); ++i) {
    j["checkers"].push_back(put("task_" + std::to_string(i + 1) + "_check", a.checkers[i]));
  }
  j["goal_identifiers"] = json::array();
  for (std::size_t k = 0; k < a.goal_identifiers.size(); ++k) {
    j["goal_identifiers"].push_back(put("goal_o" + std::to_string(k + 1) + "_ID_script", a.goal_identifiers[k]));
  }
  j["goal"] = a.goal ? put("goal_check", *a.goal) : json(nullptr);
  j["reward"] = a.reward ? put("goal_reward", *a.reward) : json(nullptr);
  j["failed_attempts"] = json::array();
  for (const auto& [slot, n] : a.failed_attempts) j["failed_attempts"].push_back({{"slot", slot}, {"failures", n}});
  j["session_log"] = a.session_log;
  j["sha256"] = files;
  write_text(dir / "artifacts.json", j.dump(2) + "\n");
}

GeneratedArtifacts load_artifacts(const fs::path& dir) {
  if (!fs::is_regular_file(dir / "artifacts.json")) throw IoError("no artifacts.json in " + dir.string());
  try {
    const json j = json::parse(read_text(dir / "artifacts.json"));
    if (j.at("format") != kArtifactsFormat) throw SchemaError("unsupported artifacts format");
    const json& hashes = j.at("sha256");
    auto get = [&](const json& rel) {
      const std::string r = rel.get<std::string>();
      const fs::path p = dir / r;
      if (!fs::is_regular_file(p)) throw IoError("missing program " + p.string());
      if (sha256_hex(read_bytes(p)) != hashes.at(r).get<std::string>()) {
        throw IntegrityError("hash mismatch for " + p.string());
      }
      return load_program(p);
    };
    GeneratedArtifacts a;
    a.task_description = j.at("task_description").get<std::string>();
    a.subtask_descriptions = j.at("subtask_descriptions").get<std::vector<std::string>>();
    if (!j.at("agent_identifier").is_null()) a.agent_identifier = get(j.at("agent_identifier"));
    for (const json& row : j.at("identifiers")) {
      a.identifiers.emplace_back();
      for (const json& rel : row) a.identifiers.back().push_back(get(rel));
    }
    for (const json& rel : j.at("checkers")) a.checkers.push_back(get(rel));
    for (const json& rel : j.at("goal_identifiers")) a.goal_identifiers.push_back(get(rel));
    if (!j.at("goal").is_null()) a.goal = get(j.at("goal"));
    if (!j.at("reward").is_null()) a.reward = get(j.at("reward"));
    for (const json& f : j.at("failed_attempts")) {
      a.failed_attempts.emplace_back(f.at("slot").get<std::string>(), f.at("failures").get<int>());
    }
    a.session_log = j.at("session_log").get<std::string>();
    return a;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed artifacts.json: ") + e.what());
  }
}

}  // namespace car
