#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sisg {

enum class TextRole { matching, mismatching, relevant };

std::string_view to_string(TextRole role);

struct TextSample {
  std::vector<int64_t> token_ids;
  std::string raw_text;
  TextRole role = TextRole::matching;
};

/// Token table. On disk: one token per line, line number is the id.
/// Ids 0 and 1 are reserved for padding and unknown tokens.
class Vocabulary {
 public:
  static constexpr int64_t kPadId = 0;
  static constexpr int64_t kUnkId = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();

  /// Sorted unique tokens of `captions` after the reserved entries.
  static Vocabulary build(const std::vector<std::string>& captions);
  static Vocabulary load(const std::filesystem::path& path);
  static Vocabulary from_text(const std::string& text);

  void save(const std::filesystem::path& path) const;
  std::string to_text() const;

  int64_t id(std::string_view token) const;
  const std::string& token(int64_t id) const;
  int64_t size() const { return static_cast<int64_t>(tokens_.size()); }
  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  void add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int64_t> index_;
};

/// Lowercases and splits on whitespace and punctuation.
std::vector<std::string> split_tokens(std::string_view raw_text);

/// Maps a caption to vocabulary ids; unknown words become kUnkId.
/// Throws std::invalid_argument for a caption with no tokens.
TextSample tokenize(std::string_view raw_text, const Vocabulary& vocabulary, TextRole role = TextRole::matching);

}  // namespace sisg
