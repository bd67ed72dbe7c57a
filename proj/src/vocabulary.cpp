#include "sisg/vocabulary.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace sisg {

std::string_view to_string(TextRole role) {
  switch (role) {
    case TextRole::matching:
      return "matching";
    case TextRole::mismatching:
      return "mismatching";
    case TextRole::relevant:
      return "relevant";
  }
  return "unknown";
}

Vocabulary::Vocabulary() {
  add(std::string(kPadToken));
  add(std::string(kUnkToken));
}

void Vocabulary::add(std::string token) {
  if (index_.count(token)) throw std::invalid_argument("duplicate vocabulary token '" + token + "'");
  index_.emplace(token, static_cast<int64_t>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(const std::vector<std::string>& captions) {
  std::set<std::string> words;
  for (const auto& c : captions) {
    for (auto& w : split_tokens(c)) words.insert(std::move(w));
  }
  Vocabulary v;
  for (const auto& w : words) {
    if (w != kPadToken && w != kUnkToken) v.add(w);
  }
  return v;
}

Vocabulary Vocabulary::from_text(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (lines.size() < 2 || lines[0] != kPadToken || lines[1] != kUnkToken) {
    throw std::runtime_error("vocabulary must start with the reserved tokens <pad> and <unk>");
  }
  Vocabulary v;
  for (size_t i = 2; i < lines.size(); ++i) {
    if (lines[i].empty()) throw std::runtime_error("vocabulary line " + std::to_string(i + 1) + " is empty");
    v.add(lines[i]);
  }
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

std::string Vocabulary::to_text() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary file " + path.string());
  out << to_text();
}

int64_t Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(int64_t id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
  return tokens_[static_cast<size_t>(id)];
}

std::vector<std::string> split_tokens(std::string_view raw_text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : raw_text) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c) || std::ispunct(c)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

TextSample tokenize(std::string_view raw_text, const Vocabulary& vocabulary, TextRole role) {
  auto words = split_tokens(raw_text);
  if (words.empty()) throw std::invalid_argument("empty caption");
  TextSample s;
  s.raw_text = std::string(raw_text);
  s.role = role;
  s.token_ids.reserve(words.size());
  for (const auto& w : words) s.token_ids.push_back(vocabulary.id(w));
  return s;
}

}  // namespace sisg
