// index.hpp - byte-offset index tables over multi-record MOL2 databases.
#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vlab::cdb
{

/// Every record starts with this marker at the beginning of a line.
inline constexpr std::string_view record_marker = "@<TRIPOS>MOLECULE";

class CdbError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

class EmptyDatabaseError : public CdbError
{
public:
  using CdbError::CdbError;
};

class IndexFormatError : public CdbError
{
public:
  using CdbError::CdbError;
};

class StaleIndexError : public CdbError
{
public:
  using CdbError::CdbError;
};

class RecordOutOfRange : public CdbError
{
public:
  RecordOutOfRange(std::uint64_t n, std::uint64_t record_count);
  std::uint64_t requested() const { return n_; }
  std::uint64_t record_count() const { return count_; }

private:
  std::uint64_t n_;
  std::uint64_t count_;
};

struct IndexEntry
{
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
  friend bool operator==(const IndexEntry &, const IndexEntry &) = default;
};

/// Entry n (1-based) locates molecule n. Entries tile the file from the first
/// marker to end of file.
struct CdbIndex
{
  std::string database_name;
  std::uint64_t source_size = 0;
  std::string source_checksum;
  std::vector<IndexEntry> entries;

  std::uint64_t record_count() const { return entries.size(); }

  friend bool operator==(const CdbIndex &, const CdbIndex &) = default;
};

/// Throws EmptyDatabaseError when no marker begins a line.
CdbIndex build_index(std::string_view database_bytes, std::string database_name = {});
CdbIndex build_index_file(const std::filesystem::path & database);

/// Text form: `CDBIDX 1 <count> <size> <sha256>` then `<n> <offset> <length>`.
std::string write_index(const CdbIndex & index);
CdbIndex read_index(std::string_view bytes);

/// Throws RecordOutOfRange unless 1 <= n <= record_count.
IndexEntry lookup(const CdbIndex & index, std::uint64_t n);

/// Throws StaleIndexError when the file no longer matches the size and
/// checksum recorded in the index.
void check_fresh(const CdbIndex & index, const std::filesystem::path & database);

}  // namespace vlab::cdb
