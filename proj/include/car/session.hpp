#pragma once

// One line of a generation transcript. Images are referenced by the SHA-256
// of their PNG encoding so a replay can check it was shown the same frames.

#include <string>
#include <vector>

namespace car {

struct SessionRecord {
  std::string role;  // system, user or assistant
  std::string text;
  std::vector<std::string> image_hashes;
  std::string timestamp;  // ISO 8601, UTC

  friend bool operator==(const SessionRecord&, const SessionRecord&) = default;
};

}  // namespace car
