// Shared helpers for the unit and acceptance suites.
#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace vlab::testing
{

inline const std::filesystem::path source_dir = VLAB_SOURCE_DIR;
inline const std::filesystem::path tools_dir = VLAB_TOOLS_DIR;

inline std::filesystem::path data_path(std::string_view relative)
{
  return source_dir / "data" / relative;
}

/// Fresh directory removed on destruction.
class TempDir
{
public:
  TempDir()
  {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("vlab-test-" + std::to_string(rd()) + "-" + std::to_string(++counter));
    std::filesystem::create_directories(path_);
  }
  ~TempDir()
  {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir &) = delete;
  TempDir & operator=(const TempDir &) = delete;

  const std::filesystem::path & path() const { return path_; }
  std::filesystem::path operator/(std::string_view name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

inline constexpr std::string_view marker = "@<TRIPOS>MOLECULE";

/// A synthetic MOL2 database and the records it was assembled from.
struct SyntheticDb
{
  std::string preamble;
  std::vector<std::string> records;
  std::string bytes() const
  {
    std::string out = preamble;
    for (const auto & r : records) {
      out += r;
    }
    return out;
  }
};

/// Records of roughly `min_size`..`max_size` bytes, each starting with the
/// marker at line start. Bodies contain marker-like text that is not at line
/// start, so naive substring splitting would be wrong.
inline SyntheticDb make_db(std::mt19937_64 & rng, std::size_t count, std::size_t min_size, std::size_t max_size)
{
  SyntheticDb db;
  std::uniform_int_distribution<std::size_t> size(min_size, max_size);
  std::uniform_int_distribution<int> letter('a', 'z');
  if (rng() % 2) {
    db.preamble = "# generated header\n# comment " + std::to_string(rng() % 1000) + "\n";
  }
  for (std::size_t i = 0; i < count; ++i) {
    std::string rec(marker);
    rec += "\nmol_" + std::to_string(i + 1) + "\n";
    const std::size_t target = std::max(size(rng), rec.size() + 2);
    while (rec.size() + 1 < target) {
      const auto roll = rng() % 40;
      if (roll == 0) {
        rec += " x@<TRIPOS>MOLECULE";
      } else if (roll < 4) {
        rec += '\n';
      } else {
        rec += static_cast<char>(letter(rng));
      }
    }
    rec += '\n';
    db.records.push_back(std::move(rec));
  }
  return db;
}

/// Independent oracle: walks the file line by line and starts a new record
/// at each line that begins with the marker.
inline std::vector<std::string> oracle_split(std::string_view bytes)
{
  std::vector<std::string> records;
  std::size_t pos = 0;
  bool in_record = false;
  while (pos < bytes.size()) {
    std::size_t end = bytes.find('\n', pos);
    end = end == std::string_view::npos ? bytes.size() : end + 1;
    const auto line = bytes.substr(pos, end - pos);
    if (line.substr(0, marker.size()) == marker) {
      records.emplace_back();
      in_record = true;
    }
    if (in_record) {
      records.back() += line;
    }
    pos = end;
  }
  return records;
}

}  // namespace vlab::testing
