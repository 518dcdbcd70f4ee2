#include "vlab/plan_lang.hpp"

#include <charconv>
#include <set>

namespace vlab::plan
{

namespace
{

struct Token
{
  enum class Kind { word, string, semicolon, end };
  Kind kind = Kind::end;
  std::string text;
  int line = 0;
};

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v'; }

// Thrown inside a statement to abandon it; the diagnostic is already recorded.
struct StatementAbort
{
};

class Parser
{
public:
  explicit Parser(std::string_view source) : src_(source) {}

  ParseResult run()
  {
    for (;;) {
      try {
        Token tok = next_token();
        if (tok.kind == Token::Kind::end) {
          break;
        }
        if (tok.kind == Token::Kind::word && tok.text == "parameter") {
          parse_parameter(tok.line);
        } else if (tok.kind == Token::Kind::word && tok.text == "task") {
          parse_task(tok.line);
        } else if (tok.kind == Token::Kind::semicolon) {
          error(tok.line, "unexpected ';'");
        } else {
          error(tok.line, "unknown keyword '" + tok.text + "'");
          skip_line();
        }
      } catch (const StatementAbort &) {
        recover();
      }
    }
    ParseResult result;
    result.diagnostics = std::move(diags_);
    if (result.diagnostics.empty()) {
      result.plan = std::move(plan_);
    }
    return result;
  }

private:
  // -- lexing --------------------------------------------------------------

  bool eof() const { return pos_ >= src_.size(); }

  void advance()
  {
    if (src_[pos_] == '\n') {
      ++line_;
    }
    ++pos_;
  }

  void skip_comment()
  {
    while (!eof() && src_[pos_] != '\n') {
      ++pos_;
    }
  }

  void skip_blank()
  {
    while (!eof()) {
      if (is_space(src_[pos_])) {
        advance();
      } else if (src_[pos_] == '#') {
        skip_comment();
      } else {
        break;
      }
    }
  }

  void skip_line()
  {
    skip_comment();
  }

  Token next_token()
  {
    skip_blank();
    Token tok;
    tok.line = line_;
    if (eof()) {
      return tok;
    }
    const char c = src_[pos_];
    if (c == ';') {
      ++pos_;
      tok.kind = Token::Kind::semicolon;
      return tok;
    }
    if (c == '"') {
      ++pos_;
      const std::size_t start = pos_;
      while (!eof() && src_[pos_] != '"' && src_[pos_] != '\n') {
        ++pos_;
      }
      if (eof() || src_[pos_] == '\n') {
        error(tok.line, "unterminated string");
        throw StatementAbort{};
      }
      tok.kind = Token::Kind::string;
      tok.text = std::string(src_.substr(start, pos_ - start));
      ++pos_;
      return tok;
    }
    const std::size_t start = pos_;
    while (!eof() && !is_space(src_[pos_]) && src_[pos_] != ';' && src_[pos_] != '"' && src_[pos_] != '#') {
      ++pos_;
    }
    tok.kind = Token::Kind::word;
    tok.text = std::string(src_.substr(start, pos_ - start));
    return tok;
  }

  Token peek_token()
  {
    const auto saved_pos = pos_;
    const auto saved_line = line_;
    const auto saved_diags = diags_.size();
    Token tok;
    try {
      tok = next_token();
    } catch (const StatementAbort &) {
      tok = Token{};
    }
    pos_ = saved_pos;
    line_ = saved_line;
    diags_.resize(saved_diags);
    return tok;
  }

  // Skips to just past the next ';' at statement level, or to end of input.
  void recover()
  {
    while (!eof()) {
      const char c = src_[pos_];
      if (c == ';') {
        ++pos_;
        return;
      }
      if (c == '#') {
        skip_comment();
        continue;
      }
      if (c == '"') {
        // Jump over a string, stopping at end of line if it never closes.
        ++pos_;
        while (!eof() && src_[pos_] != '"' && src_[pos_] != '\n') {
          ++pos_;
        }
        if (!eof() && src_[pos_] == '"') {
          ++pos_;
        }
        continue;
      }
      advance();
    }
  }

  void error(int line, std::string message) { diags_.push_back(Diagnostic{line, std::move(message)}); }

  [[noreturn]] void fail(int line, std::string message)
  {
    error(line, std::move(message));
    throw StatementAbort{};
  }

  std::string describe(const Token & tok)
  {
    switch (tok.kind) {
      case Token::Kind::word:
        return "'" + tok.text + "'";
      case Token::Kind::string:
        return "string \"" + tok.text + "\"";
      case Token::Kind::semicolon:
        return "';'";
      case Token::Kind::end:
        break;
    }
    return "end of input";
  }

  Token expect_word(std::string_view keyword, std::string_view context)
  {
    Token tok = next_token();
    if (tok.kind != Token::Kind::word || tok.text != keyword) {
      fail(tok.line, std::string(context) + ": expected '" + std::string(keyword) + "', found " + describe(tok));
    }
    return tok;
  }

  std::string expect_string(std::string_view context)
  {
    Token tok = next_token();
    if (tok.kind != Token::Kind::string) {
      fail(tok.line, std::string(context) + ": expected a quoted string, found " + describe(tok));
    }
    return tok.text;
  }

  void expect_semicolon()
  {
    Token tok = next_token();
    if (tok.kind != Token::Kind::semicolon) {
      fail(tok.line, "expected ';' to end the parameter, found " + describe(tok));
    }
  }

  std::int64_t expect_integer(std::string_view context)
  {
    Token tok = next_token();
    std::int64_t value = 0;
    if (tok.kind == Token::Kind::word) {
      const char * first = tok.text.data();
      const char * last = first + tok.text.size();
      auto [ptr, ec] = std::from_chars(first, last, value);
      if (ec == std::errc() && ptr == last) {
        return value;
      }
      if (ec == std::errc::result_out_of_range) {
        fail(tok.line, std::string(context) + ": integer out of range '" + tok.text + "'");
      }
    }
    fail(tok.line, std::string(context) + ": expected an integer, found " + describe(tok));
  }

  // -- statements ------------------------------------------------------------

  void parse_parameter(int line)
  {
    Token name = next_token();
    if (name.kind != Token::Kind::word || !is_identifier(name.text)) {
      fail(name.line, "invalid parameter name " + describe(name));
    }
    ParameterDecl decl;
    decl.name = name.text;
    decl.line.value = line;

    Token tok = next_token();
    if (tok.kind == Token::Kind::word && tok.text == "label") {
      decl.label = expect_string("label");
      tok = next_token();
    }
    if (tok.kind != Token::Kind::word) {
      fail(tok.line, "expected a parameter type, found " + describe(tok));
    }
    if (tok.text == "text") {
      decl.domain = parse_text_clause();
    } else if (tok.text == "integer") {
      decl.domain = parse_integer_clause();
    } else if (tok.text == "float") {
      decl.domain = parse_float_clause();
    } else {
      fail(tok.line, "unknown keyword '" + tok.text + "' (expected text, integer or float)");
    }
    expect_semicolon();

    if (!declared_.insert(decl.name).second) {
      error(line, "duplicate parameter '" + decl.name + "'");
      return;
    }
    plan_.parameters.push_back(std::move(decl));
  }

  ParameterDomain parse_text_clause()
  {
    Token tok = next_token();
    if (tok.kind == Token::Kind::word && tok.text == "default") {
      return TextDefault{expect_string("text default")};
    }
    if (tok.kind != Token::Kind::word || tok.text != "select") {
      fail(tok.line, "unknown keyword " + describe(tok) + " after 'text'");
    }
    expect_word("oneof", "text select");
    TextSelectOneOf oneof;
    for (;;) {
      Token next = peek_token();
      if (next.kind != Token::Kind::string) {
        break;
      }
      oneof.values.push_back(next_token().text);
    }
    if (oneof.values.empty()) {
      fail(line_, "select oneof needs at least one value");
    }
    Token next = peek_token();
    if (next.kind == Token::Kind::word && next.text == "default") {
      next_token();
      const int default_line = line_;
      oneof.default_value = expect_string("select oneof default");
      bool member = false;
      for (const auto & v : oneof.values) {
        member = member || v == *oneof.default_value;
      }
      if (!member) {
        fail(default_line, "default \"" + *oneof.default_value + "\" is not one of the listed values");
      }
    }
    return oneof;
  }

  ParameterDomain parse_integer_clause()
  {
    Token tok = next_token();
    if (tok.kind == Token::Kind::word && tok.text == "default") {
      return IntegerDefault{expect_integer("integer default")};
    }
    if (tok.kind != Token::Kind::word || tok.text != "range") {
      fail(tok.line, "unknown keyword " + describe(tok) + " after 'integer'");
    }
    const int range_line = tok.line;
    IntegerRange range;
    Token from = next_token();
    if (from.kind != Token::Kind::word || from.text != "from") {
      fail(from.line, "malformed range: expected 'from', found " + describe(from));
    }
    range.from = expect_integer("malformed range");
    Token to = next_token();
    if (to.kind != Token::Kind::word || to.text != "to") {
      fail(to.line, "malformed range: expected 'to', found " + describe(to));
    }
    range.to = expect_integer("malformed range");
    Token step = peek_token();
    if (step.kind == Token::Kind::word && step.text == "step") {
      next_token();
      range.step = expect_integer("malformed range");
    }
    if (range.from > range.to) {
      fail(range_line, "range from exceeds to");
    }
    if (range.step < 1) {
      fail(range_line, "range step must be positive");
    }
    return range;
  }

  ParameterDomain parse_float_clause()
  {
    expect_word("default", "float");
    Token tok = next_token();
    FloatDefault value;
    bool ok = tok.kind == Token::Kind::word;
    if (ok) {
      // -?digits(.digits)?
      std::string_view text = tok.text;
      std::size_t i = (!text.empty() && text[0] == '-') ? 1 : 0;
      const std::size_t int_start = i;
      while (i < text.size() && text[i] >= '0' && text[i] <= '9') {
        ++i;
      }
      ok = i > int_start;
      if (ok && i < text.size() && text[i] == '.') {
        const std::size_t frac_start = ++i;
        while (i < text.size() && text[i] >= '0' && text[i] <= '9') {
          ++i;
        }
        ok = i > frac_start;
      }
      ok = ok && i == text.size();
    }
    if (!ok) {
      fail(tok.line, "float default: expected a decimal, found " + describe(tok));
    }
    value.text = tok.text;
    std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), value.value);
    return value;
  }

  // -- tasks (line oriented) -------------------------------------------------

  // Reads the remainder of the current line as whitespace-separated words,
  // dropping a trailing comment. Leaves pos_ at the start of the next line.
  std::vector<std::string> read_line_words()
  {
    std::vector<std::string> words;
    while (!eof() && src_[pos_] != '\n') {
      const char c = src_[pos_];
      if (is_space(c)) {
        ++pos_;
        continue;
      }
      if (c == '#') {
        skip_comment();
        break;
      }
      const std::size_t start = pos_;
      while (!eof() && !is_space(src_[pos_])) {
        ++pos_;
      }
      words.emplace_back(src_.substr(start, pos_ - start));
    }
    if (!eof()) {
      advance();
    }
    return words;
  }

  void parse_task(int line)
  {
    const int header_line = line_;
    auto header = read_line_words();
    TaskScript task;
    task.line.value = line;
    bool valid = true;
    if (header.empty()) {
      error(header_line, "task needs a name (nodestart or main)");
      valid = false;
    } else if (header[0] == "nodestart") {
      task.kind = TaskKind::nodestart;
    } else if (header[0] == "main") {
      task.kind = TaskKind::main;
    } else {
      error(header_line, "unknown task '" + header[0] + "'");
      valid = false;
    }
    if (header.size() > 1) {
      error(header_line, "unexpected '" + header[1] + "' after task name");
    }

    while (!eof()) {
      const int cmd_line = line_;
      auto words = read_line_words();
      if (words.empty()) {
        continue;
      }
      if (words[0] == "endtask") {
        if (words.size() > 1) {
          error(cmd_line, "unexpected '" + words[1] + "' after endtask");
        }
        if (valid) {
          plan_.tasks.push_back(std::move(task));
        }
        return;
      }
      if (auto cmd = parse_command(words, cmd_line)) {
        task.commands.push_back(std::move(*cmd));
      }
    }
    error(line, "task block without endtask");
  }

  std::optional<Command> parse_command(const std::vector<std::string> & words, int line)
  {
    constexpr std::string_view node_prefix = "node:";
    const std::string & verb = words[0];
    const std::size_t argc = words.size() - 1;
    Command cmd;
    cmd.line.value = line;

    if (verb == "copy") {
      if (argc != 2) {
        error(line, "copy takes exactly two paths");
        return std::nullopt;
      }
      const bool src_node = words[1].rfind(node_prefix, 0) == 0;
      const bool dst_node = words[2].rfind(node_prefix, 0) == 0;
      if (src_node == dst_node) {
        error(line, "copy needs exactly one 'node:' side");
        return std::nullopt;
      }
      std::string src = src_node ? words[1].substr(node_prefix.size()) : words[1];
      std::string dst = dst_node ? words[2].substr(node_prefix.size()) : words[2];
      if (src.empty() || dst.empty()) {
        error(line, "copy path is empty");
        return std::nullopt;
      }
      if (src_node) {
        cmd.action = CopyFromNode{std::move(src), std::move(dst)};
      } else {
        cmd.action = CopyToNode{std::move(src), std::move(dst)};
      }
      return cmd;
    }

    const bool on_node = verb.rfind(node_prefix, 0) == 0;
    const std::string_view base = on_node ? std::string_view(verb).substr(node_prefix.size()) : verb;
    if (base == "substitute") {
      if (argc != 2) {
        error(line, "substitute takes an input and an output file");
        return std::nullopt;
      }
      cmd.action = Substitute{words[1], words[2], on_node};
      return cmd;
    }
    if (base == "execute") {
      if (argc == 0) {
        error(line, "execute needs a command");
        return std::nullopt;
      }
      cmd.action = Execute{std::vector<std::string>(words.begin() + 1, words.end()), on_node};
      return cmd;
    }
    error(line, "unknown command '" + verb + "'");
    return std::nullopt;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  std::vector<Diagnostic> diags_;
  std::set<std::string, std::less<>> declared_;
  PlanFile plan_;
};

}  // namespace

std::string format_diagnostic(std::string_view file, const Diagnostic & diag)
{
  return std::string(file) + ":" + std::to_string(diag.line) + ": " + diag.message;
}

std::string_view to_string(TaskKind kind)
{
  return kind == TaskKind::nodestart ? "nodestart" : "main";
}

bool is_pseudo_parameter(std::string_view name)
{
  for (auto p : pseudo_parameters) {
    if (p == name) {
      return true;
    }
  }
  return false;
}

const ParameterDecl * PlanFile::find_parameter(std::string_view name) const
{
  for (const auto & p : parameters) {
    if (p.name == name) {
      return &p;
    }
  }
  return nullptr;
}

const TaskScript * PlanFile::find_task(TaskKind kind) const
{
  for (const auto & t : tasks) {
    if (t.kind == kind) {
      return &t;
    }
  }
  return nullptr;
}

ParseResult parse_plan(std::string_view source)
{
  return Parser(source).run();
}

}  // namespace vlab::plan
