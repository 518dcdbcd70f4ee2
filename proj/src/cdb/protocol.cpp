#include "vlab/cdb/protocol.hpp"

#include <charconv>
#include <stdexcept>
#include <vector>

namespace vlab::cdb
{

Endpoint Endpoint::parse(std::string_view text)
{
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == text.size()) {
    throw std::invalid_argument("endpoint must be host:port, got '" + std::string(text) + "'");
  }
  unsigned port = 0;
  auto digits = text.substr(colon + 1);
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || port == 0 || port > 65535) {
    throw std::invalid_argument("bad port in endpoint '" + std::string(text) + "'");
  }
  return Endpoint{std::string(text.substr(0, colon)), static_cast<std::uint16_t>(port)};
}

bool is_database_name(std::string_view name)
{
  if (name.empty()) {
    return false;
  }
  for (char c : name) {
    const bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' ||
                    c == '.' || c == '-';
    if (!ok) {
      return false;
    }
  }
  return true;
}

std::optional<Request> parse_request(std::string_view line)
{
  std::vector<std::string_view> words;
  std::size_t i = 0;
  while (i < line.size()) {
    if (line[i] == ' ') {
      ++i;
      continue;
    }
    const auto start = i;
    while (i < line.size() && line[i] != ' ') {
      ++i;
    }
    words.push_back(line.substr(start, i - start));
  }
  if (words.empty()) {
    return std::nullopt;
  }
  Request req;
  if (words[0] == "PING" && words.size() == 1) {
    req.kind = Request::Kind::ping;
    return req;
  }
  if (words[0] == "STAT" && words.size() == 2 && is_database_name(words[1])) {
    req.kind = Request::Kind::stat;
    req.database = std::string(words[1]);
    return req;
  }
  if (words[0] == "GET" && words.size() == 3 && is_database_name(words[1])) {
    auto digits = words[2];
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), req.n);
    if (ec != std::errc() || ptr != digits.data() + digits.size()) {
      return std::nullopt;
    }
    req.kind = Request::Kind::get;
    req.database = std::string(words[1]);
    return req;
  }
  return std::nullopt;
}

std::string format_request(const Request & request)
{
  switch (request.kind) {
    case Request::Kind::get:
      return "GET " + request.database + " " + std::to_string(request.n) + "\r\n";
    case Request::Kind::stat:
      return "STAT " + request.database + "\r\n";
    case Request::Kind::ping:
      break;
  }
  return "PING\r\n";
}

}  // namespace vlab::cdb
