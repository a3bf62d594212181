// SPDX-License-Identifier: Apache-2.0

#include "oass/xml.hpp"

#include <cctype>

#include "oass/common.hpp"

namespace oass {

const XmlNode* XmlNode::child(const std::string& tag) const {
  for (const auto& c : children)
    if (c->name == tag) return c.get();
  return nullptr;
}

std::vector<const XmlNode*> XmlNode::children_named(const std::string& tag) const {
  std::vector<const XmlNode*> out;
  for (const auto& c : children)
    if (c->name == tag) out.push_back(c.get());
  return out;
}

namespace {

class Parser {
 public:
  explicit Parser(const std::string& text) : s_(text) {}

  std::unique_ptr<XmlNode> parse() {
    skip_prolog();
    auto root = parse_element("");
    skip_ws_and_comments();
    if (pos_ != s_.size()) fail("", "trailing content after root element");
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw DataError("xml parse error at " + (path.empty() ? "/" : path) + ": " + msg);
  }

  bool eof() const { return pos_ >= s_.size(); }
  char peek() const { return s_[pos_]; }

  void skip_ws() {
    while (!eof() && std::isspace(static_cast<unsigned char>(peek()))) ++pos_;
  }

  bool try_consume(const char* lit) {
    size_t n = std::char_traits<char>::length(lit);
    if (s_.compare(pos_, n, lit) != 0) return false;
    pos_ += n;
    return true;
  }

  void skip_comment(const std::string& path) {
    size_t end = s_.find("-->", pos_);
    if (end == std::string::npos) fail(path, "unterminated comment");
    pos_ = end + 3;
  }

  void skip_ws_and_comments(const std::string& path = "") {
    for (;;) {
      skip_ws();
      if (try_consume("<!--"))
        skip_comment(path);
      else
        return;
    }
  }

  void skip_prolog() {
    for (;;) {
      skip_ws();
      if (try_consume("<?")) {
        size_t end = s_.find("?>", pos_);
        if (end == std::string::npos) fail("", "unterminated declaration");
        pos_ = end + 2;
      } else if (try_consume("<!--")) {
        skip_comment("");
      } else if (s_.compare(pos_, 9, "<!DOCTYPE") == 0) {
        size_t end = s_.find('>', pos_);
        if (end == std::string::npos) fail("", "unterminated DOCTYPE");
        pos_ = end + 1;
      } else {
        return;
      }
    }
  }

  std::string parse_name(const std::string& path) {
    size_t start = pos_;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) ||
                      peek() == '_' || peek() == '-' || peek() == ':' || peek() == '.'))
      ++pos_;
    if (pos_ == start) fail(path, "expected a name");
    return s_.substr(start, pos_ - start);
  }

  std::string decode_entities(const std::string& raw, const std::string& path) {
    std::string out;
    out.reserve(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] != '&') {
        out += raw[i];
        continue;
      }
      size_t semi = raw.find(';', i);
      if (semi == std::string::npos) fail(path, "unterminated entity reference");
      std::string ent = raw.substr(i + 1, semi - i - 1);
      if (ent == "lt") out += '<';
      else if (ent == "gt") out += '>';
      else if (ent == "amp") out += '&';
      else if (ent == "quot") out += '"';
      else if (ent == "apos") out += '\'';
      else if (!ent.empty() && ent[0] == '#') {
        int code = std::stoi(ent.substr(ent[1] == 'x' || ent[1] == 'X' ? 2 : 1),
                             nullptr, ent[1] == 'x' || ent[1] == 'X' ? 16 : 10);
        out += static_cast<char>(code);
      } else {
        fail(path, "unknown entity &" + ent + ";");
      }
      i = semi;
    }
    return out;
  }

  std::unique_ptr<XmlNode> parse_element(const std::string& parent_path) {
    skip_ws_and_comments(parent_path);
    if (eof() || peek() != '<') fail(parent_path, "expected an element");
    ++pos_;
    auto node = std::make_unique<XmlNode>();
    node->name = parse_name(parent_path);
    const std::string path = parent_path + "/" + node->name;

    // attributes
    for (;;) {
      skip_ws();
      if (eof()) fail(path, "unterminated start tag");
      if (try_consume("/>")) return node;
      if (peek() == '>') {
        ++pos_;
        break;
      }
      std::string an = parse_name(path);
      skip_ws();
      if (eof() || peek() != '=') fail(path, "expected '=' after attribute " + an);
      ++pos_;
      skip_ws();
      if (eof() || (peek() != '"' && peek() != '\'')) fail(path, "expected a quoted attribute value");
      char quote = peek();
      ++pos_;
      size_t end = s_.find(quote, pos_);
      if (end == std::string::npos) fail(path, "unterminated attribute value");
      node->attrs.emplace_back(an, decode_entities(s_.substr(pos_, end - pos_), path));
      pos_ = end + 1;
    }

    // content
    int child_counter = 0;
    for (;;) {
      size_t lt = s_.find('<', pos_);
      if (lt == std::string::npos) fail(path, "unterminated element");
      std::string raw = s_.substr(pos_, lt - pos_);
      node->text += decode_entities(raw, path);
      pos_ = lt;
      if (try_consume("<!--")) {
        skip_comment(path);
        continue;
      }
      if (s_.compare(pos_, 2, "</") == 0) {
        pos_ += 2;
        std::string close = parse_name(path);
        if (close != node->name)
          fail(path, "mismatched closing tag </" + close + ">");
        skip_ws();
        if (eof() || peek() != '>') fail(path, "malformed closing tag");
        ++pos_;
        return node;
      }
      ++child_counter;
      std::string indexed_path = path + "/" + "(child " + std::to_string(child_counter) + ")";
      (void)indexed_path;
      node->children.push_back(parse_element(path));
    }
  }

  const std::string& s_;
  size_t pos_ = 0;
};

}  // namespace

std::unique_ptr<XmlNode> parse_xml(const std::string& text) {
  return Parser(text).parse();
}

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace oass
