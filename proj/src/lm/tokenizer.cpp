#include "lm/tokenizer.hpp"

#include <algorithm>
#include <map>

#include "common/error.hpp"

namespace elcorec::lm {
namespace {

const std::string_view kReserved[] = {kPad, kBos, kEos, kUnk, kExpert, kYes, kNo};

bool word_char(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

}  // namespace

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      ++i;
      continue;
    }
    if (c == '<') {
      bool matched = false;
      for (auto r : kReserved) {
        if (r.front() == '<' && text.substr(i, r.size()) == r) {
          out.emplace_back(r);
          i += r.size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    if (word_char(c)) {
      const std::size_t start = i;
      while (i < text.size() && word_char(static_cast<unsigned char>(text[i]))) ++i;
      out.emplace_back(text.substr(start, i - start));
    } else {
      out.emplace_back(1, text[i]);
      ++i;
    }
  }
  return out;
}

void Tokenizer::add(const std::string& token) {
  if (index_.emplace(token, tokens_.size()).second) tokens_.push_back(token);
}

Tokenizer Tokenizer::build(const std::vector<std::string>& corpus, std::size_t min_count, std::size_t max_size) {
  Tokenizer t;
  for (auto r : kReserved) t.add(std::string(r));
  std::map<std::string, std::size_t> counts;
  for (const auto& text : corpus)
    for (auto& w : split_words(text)) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  for (const auto& [w, n] : ranked) {
    if (n < min_count) break;
    if (max_size > 0 && t.size() >= max_size) break;
    t.add(w);
  }
  return t;
}

std::size_t Tokenizer::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Tokenizer::token(std::size_t id) const {
  if (id >= tokens_.size()) throw LookupError("token id " + std::to_string(id) + " outside vocabulary");
  return tokens_[id];
}

std::vector<std::size_t> Tokenizer::encode(std::string_view text) const {
  std::vector<std::size_t> out;
  for (const auto& w : split_words(text)) out.push_back(id(w));
  return out;
}

std::string Tokenizer::decode(const std::vector<std::size_t>& ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

nlohmann::ordered_json Tokenizer::to_json() const { return nlohmann::ordered_json(tokens_); }

Tokenizer Tokenizer::from_json(const nlohmann::json& j) {
  Tokenizer t;
  for (const auto& tok : j) t.add(tok.get<std::string>());
  for (std::size_t i = 0; i < std::size(kReserved); ++i)
    if (t.tokens_.size() <= i || t.tokens_[i] != kReserved[i]) throw FormatError("vocabulary does not start with the reserved tokens");
  return t;
}

}  // namespace elcorec::lm
