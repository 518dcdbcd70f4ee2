#include "vlab/cdb/index.hpp"

#include "vlab/digest.hpp"

#include <charconv>
#include <sstream>

namespace vlab::cdb
{

namespace
{

bool parse_u64(std::string_view text, std::uint64_t & out)
{
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size() && !text.empty();
}

std::vector<std::string_view> fields(std::string_view line)
{
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && line[i] == ' ') {
      ++i;
    }
    const auto start = i;
    while (i < line.size() && line[i] != ' ') {
      ++i;
    }
    if (i > start) {
      out.push_back(line.substr(start, i - start));
    }
  }
  return out;
}

}  // namespace

RecordOutOfRange::RecordOutOfRange(std::uint64_t n, std::uint64_t record_count)
: CdbError(
    "molecule " + std::to_string(n) + " out of range (database has " + std::to_string(record_count) + " records)"),
  n_(n),
  count_(record_count)
{
}

CdbIndex build_index(std::string_view bytes, std::string database_name)
{
  CdbIndex index;
  index.database_name = std::move(database_name);
  index.source_size = bytes.size();
  index.source_checksum = sha256_hex(bytes);

  std::vector<std::uint64_t> starts;
  std::size_t pos = 0;
  while ((pos = bytes.find(record_marker, pos)) != std::string_view::npos) {
    if (pos == 0 || bytes[pos - 1] == '\n') {
      starts.push_back(pos);
    }
    pos += record_marker.size();
  }
  if (starts.empty()) {
    throw EmptyDatabaseError(
      "empty database" + (index.database_name.empty() ? std::string() : " '" + index.database_name + "'") +
      ": no record marker found");
  }
  index.entries.reserve(starts.size());
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const auto end = i + 1 < starts.size() ? starts[i + 1] : bytes.size();
    index.entries.push_back(IndexEntry{starts[i], end - starts[i]});
  }
  return index;
}

CdbIndex build_index_file(const std::filesystem::path & database)
{
  return build_index(read_file(database), database.stem().string());
}

std::string write_index(const CdbIndex & index)
{
  if (index.entries.empty()) {
    throw IndexFormatError("refusing to write an index with no entries");
  }
  std::ostringstream out;
  out << "CDBIDX 1 " << index.entries.size() << ' ' << index.source_size << ' ' << index.source_checksum << '\n';
  std::uint64_t n = 1;
  for (const auto & e : index.entries) {
    out << n++ << ' ' << e.offset << ' ' << e.length << '\n';
  }
  return out.str();
}

CdbIndex read_index(std::string_view bytes)
{
  std::size_t pos = 0;
  auto next_line = [&](std::string_view & line) {
    if (pos >= bytes.size()) {
      return false;
    }
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string_view::npos) {
      line = bytes.substr(pos);
      pos = bytes.size();
    } else {
      line = bytes.substr(pos, nl - pos);
      pos = nl + 1;
    }
    return true;
  };

  std::string_view line;
  if (!next_line(line)) {
    throw IndexFormatError("index is empty");
  }
  auto header = fields(line);
  if (header.size() != 5 || header[0] != "CDBIDX") {
    throw IndexFormatError("malformed index header");
  }
  if (header[1] != "1") {
    throw IndexFormatError("unsupported index version " + std::string(header[1]));
  }
  std::uint64_t count = 0;
  CdbIndex index;
  if (!parse_u64(header[2], count) || !parse_u64(header[3], index.source_size)) {
    throw IndexFormatError("malformed index header");
  }
  if (!is_sha256_hex(header[4])) {
    throw IndexFormatError("malformed checksum field in index header");
  }
  index.source_checksum = std::string(header[4]);
  if (count == 0) {
    throw IndexFormatError("index declares zero records");
  }

  index.entries.reserve(count);
  for (std::uint64_t n = 1; n <= count; ++n) {
    if (!next_line(line)) {
      throw IndexFormatError(
        "truncated index table: expected " + std::to_string(count) + " entries, found " + std::to_string(n - 1));
    }
    auto f = fields(line);
    std::uint64_t k = 0;
    IndexEntry e;
    if (f.size() != 3 || !parse_u64(f[0], k) || !parse_u64(f[1], e.offset) || !parse_u64(f[2], e.length)) {
      throw IndexFormatError("malformed index entry on line " + std::to_string(n + 1));
    }
    if (k != n) {
      throw IndexFormatError("index entry " + std::to_string(n) + " out of order");
    }
    if (!index.entries.empty()) {
      const auto & prev = index.entries.back();
      if (prev.offset + prev.length != e.offset) {
        throw IndexFormatError("index entries " + std::to_string(n - 1) + " and " + std::to_string(n) + " do not tile");
      }
    }
    if (e.length == 0) {
      throw IndexFormatError("index entry " + std::to_string(n) + " has zero length");
    }
    index.entries.push_back(e);
  }
  const auto & last = index.entries.back();
  if (last.offset + last.length != index.source_size) {
    throw IndexFormatError("index table does not reach the end of the database");
  }
  while (next_line(line)) {
    if (!line.empty()) {
      throw IndexFormatError("trailing data after index table");
    }
  }
  return index;
}

IndexEntry lookup(const CdbIndex & index, std::uint64_t n)
{
  if (n < 1 || n > index.record_count()) {
    throw RecordOutOfRange(n, index.record_count());
  }
  return index.entries[n - 1];
}

void check_fresh(const CdbIndex & index, const std::filesystem::path & database)
{
  std::error_code ec;
  const auto size = std::filesystem::file_size(database, ec);
  if (ec) {
    throw CdbError("cannot stat database " + database.string() + ": " + ec.message());
  }
  if (size != index.source_size) {
    throw StaleIndexError(
      "stale index for " + database.string() + ": size " + std::to_string(size) + " != indexed " +
      std::to_string(index.source_size));
  }
  if (sha256_hex_file(database) != index.source_checksum) {
    throw StaleIndexError("stale index for " + database.string() + ": checksum mismatch");
  }
}

}  // namespace vlab::cdb
