#pragma once

#include <cstddef>
#include <nlohmann/json.hpp>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace elcorec::lm {

inline constexpr std::string_view kPad = "<pad>";
inline constexpr std::string_view kBos = "<bos>";
inline constexpr std::string_view kEos = "<eos>";
inline constexpr std::string_view kUnk = "<unk>";
inline constexpr std::string_view kExpert = "<ExpertEmb>";
inline constexpr std::string_view kYes = "Yes";
inline constexpr std::string_view kNo = "No";

/// Whole-word split: runs of letters/digits (bytes >= 0x80 included) form one
/// word, every other visible character is its own token, and the reserved
/// angle-bracket tokens stay atomic. Case is preserved.
std::vector<std::string> split_words(std::string_view text);

class Tokenizer {
 public:
  static constexpr std::size_t kPadId = 0, kBosId = 1, kEosId = 2, kUnkId = 3, kExpertId = 4, kYesId = 5, kNoId = 6;

  /// Reserved tokens first, then corpus words by descending frequency, ties
  /// lexicographic. Words seen fewer than `min_count` times map to <unk>.
  static Tokenizer build(const std::vector<std::string>& corpus, std::size_t min_count = 1, std::size_t max_size = 0);

  std::vector<std::size_t> encode(std::string_view text) const;
  std::string decode(const std::vector<std::size_t>& ids) const;
  std::size_t id(std::string_view token) const;  // <unk> id when absent
  bool contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }
  const std::string& token(std::size_t id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  nlohmann::ordered_json to_json() const;
  static Tokenizer from_json(const nlohmann::json& j);

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace elcorec::lm
