// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>
#include <vector>

namespace oass {

// Minimal XML subset: elements, attributes, text, comments, declarations and
// the five predefined entities. Enough for VOC annotation files; errors carry
// the element path (e.g. /annotation/object[2]/bndbox).
struct XmlNode {
  std::string name;
  std::string text;  // concatenated character data
  std::vector<std::pair<std::string, std::string>> attrs;
  std::vector<std::unique_ptr<XmlNode>> children;

  const XmlNode* child(const std::string& tag) const;
  std::vector<const XmlNode*> children_named(const std::string& tag) const;
};

std::unique_ptr<XmlNode> parse_xml(const std::string& text);

std::string xml_escape(const std::string& s);

}  // namespace oass
