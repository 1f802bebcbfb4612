#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace wip {

/**
 * @brief Flat `key = value` text with optional `[section]` headers.
 *
 * `#` starts a comment. Keys before the first header belong to the unnamed
 * top-level section; every header opens a new section, so repeated headers
 * (e.g. several `[waypoint]` blocks) are kept in order.
 */
struct KeyValueSection
{
  std::string name;
  int line{0};
  std::map<std::string, std::string> values;

  bool has(const std::string & key) const { return values.count(key) != 0; }
  /// Throws ParseError naming `key` when missing or not a finite number.
  double number(const std::string & key) const;
  double number_or(const std::string & key, double fallback) const;
  std::optional<std::string> text(const std::string & key) const;
};

struct KeyValueDocument
{
  std::vector<KeyValueSection> sections;  ///< sections[0] is the top level

  const KeyValueSection & top() const { return sections.front(); }
  std::vector<const KeyValueSection *> all(const std::string & name) const;
};

KeyValueDocument parse_key_value(const std::string & text);
KeyValueDocument load_key_value(const std::filesystem::path & file);

std::string read_text_file(const std::filesystem::path & file);
/// Writes through a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path & file, const std::string & content);

}  // namespace wip
