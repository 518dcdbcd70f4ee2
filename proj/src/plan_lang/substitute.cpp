#include "vlab/plan_lang.hpp"

#include <algorithm>

namespace vlab::plan
{

namespace
{

bool is_ident_start(char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_'; }
bool is_ident_char(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }

struct Token
{
  enum class Kind { literal, dollar, name };
  Kind kind;
  std::string_view text;
};

// Splits a template into literal runs, escaped dollars and placemaker names.
template <typename Sink>
void scan_template(std::string_view text, Sink && sink)
{
  std::size_t literal_start = 0;
  std::size_t i = 0;
  auto flush = [&](std::size_t end) {
    if (end > literal_start) {
      sink(Token{Token::Kind::literal, text.substr(literal_start, end - literal_start)});
    }
  };
  while (i < text.size()) {
    if (text[i] != '$') {
      ++i;
      continue;
    }
    flush(i);
    if (i + 1 >= text.size()) {
      throw SubstitutionError("dangling '$' at end of input", {});
    }
    const char next = text[i + 1];
    if (next == '$') {
      sink(Token{Token::Kind::dollar, text.substr(i, 1)});
      i += 2;
    } else if (next == '{') {
      const auto close = text.find('}', i + 2);
      if (close == std::string_view::npos) {
        throw SubstitutionError("unterminated '${' placemaker at offset " + std::to_string(i), {});
      }
      auto name = text.substr(i + 2, close - i - 2);
      if (!is_identifier(name)) {
        throw SubstitutionError("malformed placemaker '${" + std::string(name) + "}'", {});
      }
      sink(Token{Token::Kind::name, name});
      i = close + 1;
    } else if (is_ident_start(next)) {
      std::size_t end = i + 1;
      while (end < text.size() && is_ident_char(text[end])) {
        ++end;
      }
      sink(Token{Token::Kind::name, text.substr(i + 1, end - i - 1)});
      i = end;
    } else {
      throw SubstitutionError("malformed placemaker at offset " + std::to_string(i), {});
    }
    literal_start = i;
  }
  flush(text.size());
}

}  // namespace

SubstitutionError::SubstitutionError(std::string message, std::vector<std::string> unbound)
: std::runtime_error(std::move(message)), unbound_(std::move(unbound))
{
}

bool is_identifier(std::string_view text)
{
  if (text.empty() || !is_ident_start(text.front())) {
    return false;
  }
  return std::all_of(text.begin() + 1, text.end(), is_ident_char);
}

std::string substitute(std::string_view text, const Bindings & bindings)
{
  std::string out;
  out.reserve(text.size());
  std::vector<std::string> unbound;
  scan_template(text, [&](const Token & token) {
    switch (token.kind) {
      case Token::Kind::literal:
        out.append(token.text);
        break;
      case Token::Kind::dollar:
        out.push_back('$');
        break;
      case Token::Kind::name: {
        auto it = bindings.find(token.text);
        if (it == bindings.end()) {
          if (std::find(unbound.begin(), unbound.end(), token.text) == unbound.end()) {
            unbound.emplace_back(token.text);
          }
        } else {
          out.append(it->second);
        }
        break;
      }
    }
  });
  if (!unbound.empty()) {
    std::string message = "unbound placemaker";
    message += unbound.size() > 1 ? "s: " : ": ";
    for (std::size_t k = 0; k < unbound.size(); ++k) {
      message += (k ? ", " : "") + unbound[k];
    }
    throw SubstitutionError(std::move(message), std::move(unbound));
  }
  return out;
}

std::vector<std::string> placemakers(std::string_view text)
{
  std::vector<std::string> names;
  scan_template(text, [&](const Token & token) {
    if (token.kind == Token::Kind::name &&
        std::find(names.begin(), names.end(), token.text) == names.end()) {
      names.emplace_back(token.text);
    }
  });
  return names;
}

}  // namespace vlab::plan
