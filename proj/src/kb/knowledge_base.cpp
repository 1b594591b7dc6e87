#include "kb/knowledge_base.hpp"

#include <algorithm>
#include <cmath>

#include "common/error.hpp"
#include "common/hash.hpp"
#include "numerics/checkpoint.hpp"

namespace elcorec::kb {

std::string render_description(const data::ItemProfile& item) {
  std::string out = "The title is " + item.title + ".";
  for (const auto& f : item.features) {
    out += " The " + f.field + " is ";
    for (std::size_t i = 0; i < f.values.size(); ++i) {
      if (i) out += ", ";
      out += f.values[i];
    }
    out += ".";
  }
  return out;
}

std::vector<std::string> text_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c >= 0x80) {
      cur.push_back(ch);
    } else if (c >= 'A' && c <= 'Z') {
      cur.push_back(static_cast<char>(c - 'A' + 'a'));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<double> embed_text(std::string_view text, std::size_t dim, std::uint64_t seed) {
  if (dim < 16) throw DomainError("embedding dim must be >= 16, got " + std::to_string(dim));
  const auto tokens = text_tokens(text);
  if (tokens.empty()) throw DomainError("cannot embed text without tokens");
  std::vector<double> v(dim, 0.0);
  auto bump = [&](const std::string& feature) {
    const auto h = stable_hash(feature, seed);
    v[h % dim] += (h >> 63) ? -1.0 : 1.0;
  };
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    bump(tokens[i]);
    if (i + 1 < tokens.size()) bump(tokens[i] + '\x1f' + tokens[i + 1]);
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  // Signed collisions can cancel everything out; fall back to the first token.
  if (norm == 0.0) {
    bump(tokens.front() + '\x1e');
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
  }
  for (double& x : v) x /= norm;
  return v;
}

void KnowledgeBase::insert(const std::string& id, std::string description, std::vector<double> vec) {
  if (index_.count(id)) throw ConstructionError("duplicate item id '" + id + "' in knowledge base");
  if (vec.size() != dim_) throw DimensionError("knowledge base vector for '" + id + "' has wrong length");
  index_.emplace(id, ids_.size());
  ids_.push_back(id);
  descriptions_.push_back(std::move(description));
  vectors_.insert(vectors_.end(), vec.begin(), vec.end());
}

std::size_t KnowledgeBase::slot(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw LookupError("item '" + id + "' is not in the knowledge base");
  return it->second;
}

std::span<const double> KnowledgeBase::vector(const std::string& id) const {
  return {vectors_.data() + slot(id) * dim_, dim_};
}

const std::string& KnowledgeBase::description(const std::string& id) const { return descriptions_[slot(id)]; }

double KnowledgeBase::similarity(const std::string& a, const std::string& b) const {
  const auto va = vector(a), vb = vector(b);
  double s = 0.0;
  for (std::size_t i = 0; i < dim_; ++i) s += va[i] * vb[i];
  return std::clamp(s, -1.0, 1.0);
}

void KnowledgeBase::save(const std::string& path) const {
  nn::Checkpoint ckpt;
  ckpt.meta["kind"] = "knowledge_base";
  ckpt.meta["dim"] = dim_;
  ckpt.meta["seed"] = seed_;
  ckpt.meta["ids"] = ids_;
  ckpt.meta["descriptions"] = descriptions_;
  ckpt.add("vectors", {ids_.size(), dim_}, vectors_);
  nn::write_checkpoint(path, ckpt);
}

KnowledgeBase KnowledgeBase::load(const std::string& path) {
  const auto ckpt = nn::read_checkpoint(path);
  if (ckpt.meta.value("kind", std::string()) != "knowledge_base")
    throw FormatError("'" + path + "' is not a knowledge base file");
  KnowledgeBase kb(ckpt.meta.at("dim").get<std::size_t>(), ckpt.meta.at("seed").get<std::uint64_t>());
  const auto ids = ckpt.meta.at("ids").get<std::vector<std::string>>();
  auto desc = ckpt.meta.at("descriptions").get<std::vector<std::string>>();
  const auto& vec = ckpt.find("vectors");
  if (desc.size() != ids.size() || vec.values.size() != ids.size() * kb.dim_)
    throw FormatError("'" + path + "': inconsistent knowledge base sizes");
  for (std::size_t i = 0; i < ids.size(); ++i) {
    kb.insert(ids[i], std::move(desc[i]),
              std::vector<double>(vec.values.begin() + static_cast<std::ptrdiff_t>(i * kb.dim_),
                                  vec.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * kb.dim_)));
  }
  return kb;
}

KnowledgeBase build_kb(const std::vector<data::ItemPtr>& items, std::size_t dim, std::uint64_t seed) {
  KnowledgeBase kb(dim, seed);
  for (const auto& item : items) {
    auto text = render_description(*item);
    auto vec = embed_text(text, dim, seed);
    kb.insert(item->id, std::move(text), std::move(vec));
  }
  return kb;
}

std::int64_t rank_key(double similarity) { return std::llround(similarity * 1e9); }

std::vector<Retrieved> retrieve_topk(const KnowledgeBase& kb, const std::string& target_id,
                                     const std::vector<std::string>& history, std::size_t k) {
  if (k == 0) throw InvalidArgumentError("retrieval K must be >= 1");
  std::vector<Retrieved> all;
  all.reserve(history.size());
  for (std::size_t i = 0; i < history.size(); ++i) all.push_back({history[i], kb.similarity(target_id, history[i]), i});
  auto better = [](const Retrieved& a, const Retrieved& b) {
    const auto ka = rank_key(a.similarity), kb = rank_key(b.similarity);
    return ka != kb ? ka > kb : a.position > b.position;
  };
  const std::size_t keep = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), better);
  all.resize(keep);
  return all;
}

}  // namespace elcorec::kb
