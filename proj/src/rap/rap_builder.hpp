#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "dataset/sample_io.hpp"
#include "dataset/types.hpp"
#include "kb/knowledge_base.hpp"
#include "lm/tokenizer.hpp"

namespace elcorec::rap {

/// Link-prompt wording. The defaults come from config/rap_template.json,
/// compiled in; a file with the same keys can replace them at run time.
struct RapTemplate {
  std::string preamble;
  std::string empty_profile;
  std::string profile_pair;
  std::string retrieved_header;
  std::string recent_header;
  std::string plain_header;
  std::string line;
  std::string line_without_rating;
  std::string placeholder;
  std::string question;

  static RapTemplate defaults();
  static RapTemplate from_json(const nlohmann::json& j);
  static RapTemplate load(const std::string& path);
  nlohmann::ordered_json to_json() const;
};

enum class SegmentKind { Preamble, Header, RetrievedLine, RecentLine, Placeholder, Question };

const char* segment_kind_name(SegmentKind k);
SegmentKind segment_kind_from(const std::string& name);

struct Segment {
  SegmentKind kind;
  std::string text;
};

struct RapPrompt {
  std::string id;
  std::string mode;  // "rap" or "plain"
  std::vector<Segment> segments;
  std::string text;  // segments joined by '\n'
  long placeholder_index = -1;  // word-token index of <ExpertEmb>; -1 when absent
  std::string answer;  // "Yes" / "No"
  int label = 0;
  std::vector<std::string> retrieved_ids;  // chronological
  std::vector<std::string> recent_ids;     // chronological
  data::Sample sample;
};

struct RapOptions {
  std::size_t k_ret = 15;
  std::size_t k_rec = 15;
  bool show_rating = true;
};

/// Preamble, retrieved section, recent section, placeholder sentence and the
/// question, one segment per line. Throws ConstructionError on an empty
/// history and LookupError if the KB lacks an item.
RapPrompt build_rap_prompt(const data::Sample& sample, const kb::KnowledgeBase& kb, const RapOptions& opt,
                           const RapTemplate& tpl = RapTemplate::defaults());

/// Retrieval-only prompt with K lines and no placeholder.
RapPrompt build_plain_prompt(const data::Sample& sample, const kb::KnowledgeBase& kb, std::size_t k,
                             bool show_rating = true, const RapTemplate& tpl = RapTemplate::defaults());

std::size_t prompt_token_length(std::string_view text, const lm::Tokenizer& tokenizer);

/// Joins segments and recomputes text and placeholder_index.
void finalize(RapPrompt& prompt);

nlohmann::ordered_json prompt_to_json(const RapPrompt& p);
RapPrompt prompt_from_json(const nlohmann::ordered_json& j, data::ProfileInterner& interner);
void write_prompts(const std::string& path, const std::vector<RapPrompt>& prompts);
std::vector<RapPrompt> read_prompts(const std::string& path);

}  // namespace elcorec::rap
