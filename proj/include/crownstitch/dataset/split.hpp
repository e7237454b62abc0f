#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace crownstitch::dataset {

enum class SplitRole { kTrain, kVal, kTest };

std::string to_string(SplitRole role);
SplitRole parse_split_role(const std::string& text);

// Site-level split assignment. Tiles never move between roles on their own:
// a site is assigned as a whole.
class SplitManifest {
 public:
  // Records the site's role and tile count. Re-assigning a site to the same
  // role updates its tile count; a different role is a ValidationError.
  void assign(const std::string& site, SplitRole role, int tiles);

  const std::map<std::string, SplitRole>& roles() const { return roles_; }
  int tile_count(SplitRole role) const;

  static SplitManifest load(const std::filesystem::path& path);
  // Missing file yields an empty manifest.
  static SplitManifest load_or_empty(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  bool operator==(const SplitManifest&) const = default;

 private:
  std::map<std::string, SplitRole> roles_;
  std::map<std::string, int> tiles_;
};

}  // namespace crownstitch::dataset
