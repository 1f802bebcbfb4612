#include "wip/keyvalue.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "wip/errors.hpp"

namespace wip {
namespace {

std::string trim(const std::string & s)
{
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

double KeyValueSection::number(const std::string & key) const
{
  const auto it = values.find(key);
  if (it == values.end()) {
    throw ParseError("missing field '" + key + "'" + (name.empty() ? "" : " in [" + name + "]"), key);
  }
  const std::string & raw = it->second;
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), out);
  if (ec != std::errc{} || ptr != raw.data() + raw.size() || !std::isfinite(out)) {
    throw ParseError("field '" + key + "' is not a finite number: '" + raw + "'", key);
  }
  return out;
}

double KeyValueSection::number_or(const std::string & key, double fallback) const
{
  return has(key) ? number(key) : fallback;
}

std::optional<std::string> KeyValueSection::text(const std::string & key) const
{
  const auto it = values.find(key);
  if (it == values.end()) return std::nullopt;
  return it->second;
}

std::vector<const KeyValueSection *> KeyValueDocument::all(const std::string & name) const
{
  std::vector<const KeyValueSection *> out;
  for (const auto & s : sections) {
    if (s.name == name) out.push_back(&s);
  }
  return out;
}

KeyValueDocument parse_key_value(const std::string & text)
{
  KeyValueDocument doc;
  doc.sections.emplace_back();
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ParseError("line " + std::to_string(lineno) + ": unterminated section header", line);
      }
      KeyValueSection section;
      section.name = trim(line.substr(1, line.size() - 2));
      section.line = lineno;
      doc.sections.push_back(std::move(section));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("line " + std::to_string(lineno) + ": expected 'key = value'", line);
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw ParseError("line " + std::to_string(lineno) + ": empty key", line);
    }
    auto & values = doc.sections.back().values;
    if (values.count(key)) {
      throw ParseError("line " + std::to_string(lineno) + ": duplicate field '" + key + "'", key);
    }
    values[key] = trim(line.substr(eq + 1));
  }
  return doc;
}

std::string read_text_file(const std::filesystem::path & file)
{
  std::ifstream in(file);
  if (!in) {
    throw ParseError("cannot open '" + file.string() + "'", file.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

KeyValueDocument load_key_value(const std::filesystem::path & file)
{
  return parse_key_value(read_text_file(file));
}

void write_file_atomic(const std::filesystem::path & file, const std::string & content)
{
  auto tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, file);
}

}  // namespace wip
