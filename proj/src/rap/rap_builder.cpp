#include "rap/rap_builder.hpp"

#include <algorithm>
#include <fstream>

#include "common/error.hpp"
#include "dataset/sample_io.hpp"
#include "rap_template_data.hpp"

namespace elcorec::rap {
namespace {

std::string replace_all(std::string s, std::string_view key, std::string_view value) {
  std::size_t pos = 0;
  while ((pos = s.find(key, pos)) != std::string::npos) {
    s.replace(pos, key.size(), value);
    pos += value.size();
  }
  return s;
}

// Keeps item text from forging reserved tokens.
std::string sanitize(std::string s) {
  std::replace(s.begin(), s.end(), '<', '(');
  std::replace(s.begin(), s.end(), '>', ')');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

std::string render_line(const RapTemplate& tpl, const data::HistoryEntry& e, bool show_rating) {
  const std::string& pattern = show_rating ? tpl.line : tpl.line_without_rating;
  return replace_all(replace_all(pattern, "{title}", sanitize(e.item->title)), "{rating}", std::to_string(e.rating));
}

std::string render_profile(const RapTemplate& tpl, const data::UserProfile& user) {
  if (user.features.empty()) return tpl.empty_profile;
  std::string out;
  for (const auto& f : user.features) {
    std::string value;
    for (std::size_t i = 0; i < f.values.size(); ++i) value += (i ? "/" : "") + f.values[i];
    if (!out.empty()) out += ", ";
    out += replace_all(replace_all(tpl.profile_pair, "{field}", sanitize(f.field)), "{value}", sanitize(value));
  }
  return out;
}

std::vector<std::string> history_ids(const data::Sample& s) {
  std::vector<std::string> ids;
  ids.reserve(s.history.size());
  for (const auto& e : s.history) ids.push_back(e.item->id);
  return ids;
}

// Retrieved positions in chronological order.
std::vector<std::size_t> retrieved_positions(const data::Sample& s, const kb::KnowledgeBase& kb, std::size_t k) {
  std::vector<std::size_t> pos;
  for (const auto& r : kb::retrieve_topk(kb, s.target->id, history_ids(s), k)) pos.push_back(r.position);
  std::sort(pos.begin(), pos.end());
  return pos;
}

RapPrompt start(const data::Sample& sample, const RapTemplate& tpl, const char* mode) {
  if (sample.history.empty()) throw ConstructionError("sample '" + sample.id + "' has an empty history");
  RapPrompt p;
  p.id = sample.id;
  p.mode = mode;
  p.label = sample.label;
  p.answer = sample.label ? std::string(lm::kYes) : std::string(lm::kNo);
  p.sample = sample;
  p.segments.push_back({SegmentKind::Preamble, replace_all(tpl.preamble, "{user_profile}", render_profile(tpl, *sample.user))});
  return p;
}

void finish(RapPrompt& p, const RapTemplate& tpl) {
  p.segments.push_back({SegmentKind::Question, replace_all(tpl.question, "{target_title}", sanitize(p.sample.target->title))});
  finalize(p);
}

}  // namespace

RapTemplate RapTemplate::defaults() {
  static const RapTemplate tpl = from_json(nlohmann::json::parse(kDefaultRapTemplate));
  return tpl;
}

RapTemplate RapTemplate::from_json(const nlohmann::json& j) {
  RapTemplate t;
  auto get = [&](const char* key) {
    if (!j.contains(key)) throw FormatError(std::string("prompt template lacks '") + key + "'");
    return j.at(key).get<std::string>();
  };
  t.preamble = get("preamble");
  t.empty_profile = get("empty_profile");
  t.profile_pair = get("profile_pair");
  t.retrieved_header = get("retrieved_header");
  t.recent_header = get("recent_header");
  t.plain_header = get("plain_header");
  t.line = get("line");
  t.line_without_rating = get("line_without_rating");
  t.placeholder = get("placeholder");
  t.question = get("question");
  const auto n = lm::split_words(t.placeholder);
  if (std::count(n.begin(), n.end(), std::string(lm::kExpert)) != 1)
    throw FormatError("placeholder sentence must contain <ExpertEmb> exactly once");
  for (const auto* s : {&t.preamble, &t.retrieved_header, &t.recent_header, &t.plain_header, &t.line, &t.question}) {
    if (s->find(lm::kExpert) != std::string::npos) throw FormatError("<ExpertEmb> may only appear in the placeholder sentence");
  }
  return t;
}

RapTemplate RapTemplate::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open template '" + path + "'");
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

nlohmann::ordered_json RapTemplate::to_json() const {
  return {{"preamble", preamble},         {"empty_profile", empty_profile},
          {"profile_pair", profile_pair}, {"retrieved_header", retrieved_header},
          {"recent_header", recent_header}, {"plain_header", plain_header},
          {"line", line},                 {"line_without_rating", line_without_rating},
          {"placeholder", placeholder},   {"question", question}};
}

const char* segment_kind_name(SegmentKind k) {
  switch (k) {
    case SegmentKind::Preamble: return "preamble";
    case SegmentKind::Header: return "header";
    case SegmentKind::RetrievedLine: return "retrieved";
    case SegmentKind::RecentLine: return "recent";
    case SegmentKind::Placeholder: return "placeholder";
    case SegmentKind::Question: return "question";
  }
  return "?";
}

SegmentKind segment_kind_from(const std::string& name) {
  for (auto k : {SegmentKind::Preamble, SegmentKind::Header, SegmentKind::RetrievedLine, SegmentKind::RecentLine,
                 SegmentKind::Placeholder, SegmentKind::Question})
    if (name == segment_kind_name(k)) return k;
  throw FormatError("unknown prompt segment kind '" + name + "'");
}

void finalize(RapPrompt& p) {
  p.text.clear();
  for (std::size_t i = 0; i < p.segments.size(); ++i) {
    if (i) p.text += '\n';
    p.text += p.segments[i].text;
  }
  p.placeholder_index = -1;
  const auto words = lm::split_words(p.text);
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (words[i] != lm::kExpert) continue;
    if (p.placeholder_index >= 0) throw ConstructionError("prompt '" + p.id + "' holds more than one placeholder");
    p.placeholder_index = static_cast<long>(i);
  }
}

RapPrompt build_rap_prompt(const data::Sample& sample, const kb::KnowledgeBase& kb, const RapOptions& opt,
                           const RapTemplate& tpl) {
  if (opt.k_ret == 0 || opt.k_rec == 0) throw InvalidArgumentError("K_ret and K_rec must be >= 1");
  RapPrompt p = start(sample, tpl, "rap");
  if (!kb.contains(sample.target->id)) throw LookupError("item '" + sample.target->id + "' is not in the knowledge base");

  p.segments.push_back({SegmentKind::Header, tpl.retrieved_header});
  for (auto i : retrieved_positions(sample, kb, opt.k_ret)) {
    p.segments.push_back({SegmentKind::RetrievedLine, render_line(tpl, sample.history[i], opt.show_rating)});
    p.retrieved_ids.push_back(sample.history[i].item->id);
  }
  p.segments.push_back({SegmentKind::Header, tpl.recent_header});
  const std::size_t n = sample.history.size();
  for (std::size_t i = n - std::min(n, opt.k_rec); i < n; ++i) {
    p.segments.push_back({SegmentKind::RecentLine, render_line(tpl, sample.history[i], opt.show_rating)});
    p.recent_ids.push_back(sample.history[i].item->id);
  }
  p.segments.push_back({SegmentKind::Placeholder, tpl.placeholder});
  finish(p, tpl);
  return p;
}

RapPrompt build_plain_prompt(const data::Sample& sample, const kb::KnowledgeBase& kb, std::size_t k, bool show_rating,
                             const RapTemplate& tpl) {
  if (k == 0) throw InvalidArgumentError("K must be >= 1");
  RapPrompt p = start(sample, tpl, "plain");
  p.segments.push_back({SegmentKind::Header, tpl.plain_header});
  for (auto i : retrieved_positions(sample, kb, k)) {
    p.segments.push_back({SegmentKind::RetrievedLine, render_line(tpl, sample.history[i], show_rating)});
    p.retrieved_ids.push_back(sample.history[i].item->id);
  }
  finish(p, tpl);
  return p;
}

std::size_t prompt_token_length(std::string_view text, const lm::Tokenizer& tokenizer) {
  return tokenizer.encode(text).size();
}

nlohmann::ordered_json prompt_to_json(const RapPrompt& p) {
  nlohmann::ordered_json j;
  j["id"] = p.id;
  j["mode"] = p.mode;
  j["text"] = p.text;
  auto segs = nlohmann::ordered_json::array();
  for (const auto& s : p.segments) segs.push_back({{"kind", segment_kind_name(s.kind)}, {"text", s.text}});
  j["segments"] = std::move(segs);
  j["placeholder_index"] = p.placeholder_index >= 0 ? nlohmann::ordered_json(p.placeholder_index) : nlohmann::ordered_json();
  j["answer"] = p.answer;
  j["label"] = p.label;
  j["retrieved_ids"] = p.retrieved_ids;
  j["recent_ids"] = p.recent_ids;
  j["sample"] = data::sample_to_json(p.sample);
  return j;
}

RapPrompt prompt_from_json(const nlohmann::ordered_json& j, data::ProfileInterner& interner) {
  RapPrompt p;
  p.id = j.at("id").get<std::string>();
  p.mode = j.at("mode").get<std::string>();
  for (const auto& s : j.at("segments")) p.segments.push_back({segment_kind_from(s.at("kind").get<std::string>()), s.at("text").get<std::string>()});
  p.answer = j.at("answer").get<std::string>();
  p.label = j.at("label").get<int>();
  p.retrieved_ids = j.value("retrieved_ids", std::vector<std::string>{});
  p.recent_ids = j.value("recent_ids", std::vector<std::string>{});
  p.sample = data::sample_from_json(j.at("sample"), interner);
  finalize(p);
  if (p.text != j.at("text").get<std::string>()) throw FormatError("prompt '" + p.id + "': text does not match its segments");
  if ((p.answer == lm::kYes) != (p.label == 1) || (p.answer != lm::kYes && p.answer != lm::kNo))
    throw FormatError("prompt '" + p.id + "': answer does not match label");
  return p;
}

void write_prompts(const std::string& path, const std::vector<RapPrompt>& prompts) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  for (const auto& p : prompts) out << prompt_to_json(p).dump() << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

std::vector<RapPrompt> read_prompts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<RapPrompt> out;
  data::ProfileInterner interner;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(prompt_from_json(nlohmann::ordered_json::parse(line), interner));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace elcorec::rap
