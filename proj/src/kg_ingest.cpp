#include "grasame/kg_ingest.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "grasame/errors.hpp"
#include "json.hpp"

namespace grasame {
namespace {

constexpr std::string_view kPunctuation = ".,;:!?()[]\"'";

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

const char* role_name(SpanRole role) {
  switch (role) {
    case SpanRole::kHead: return "head";
    case SpanRole::kRelation: return "relation";
    case SpanRole::kTail: return "tail";
  }
  return "?";
}

}  // namespace

const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> tokens = {"<pad>", "<unk>", "<s>", "</s>",
                                                  "<Graph>", "<H>", "<R>", "<T>"};
  return tokens;
}

Vocabulary::Vocabulary() {
  for (const auto& t : reserved_tokens()) add(t);
}

int Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return ids_.count(std::string(token)) > 0;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

int Vocabulary::add(const std::string& token) {
  auto [it, inserted] = ids_.try_emplace(token, static_cast<int>(tokens_.size()));
  if (inserted) tokens_.push_back(token);
  return it->second;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary file " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open vocabulary file " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  const auto& reserved = reserved_tokens();
  if (lines.size() < reserved.size() ||
      !std::equal(reserved.begin(), reserved.end(), lines.begin())) {
    throw DataError("vocabulary file " + path.string() + " does not start with the reserved tokens");
  }
  Vocabulary vocab;
  for (std::size_t i = reserved.size(); i < lines.size(); ++i) {
    if (vocab.contains(lines[i])) {
      throw DataError("duplicate token '" + lines[i] + "' at line " + std::to_string(i + 1) +
                      " of " + path.string());
    }
    vocab.add(lines[i]);
  }
  return vocab;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

Example parse_example(std::string_view line, std::size_t line_number) {
  const std::string where = " at line " + std::to_string(line_number);
  nlohmann::json record;
  try {
    record = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("malformed JSON" + where + ": " + e.what());
  }
  if (!record.is_object() || !record.contains("triples") || !record["triples"].is_array()) {
    throw DataError("record without a \"triples\" array" + where);
  }
  Example example;
  const auto& triples = record["triples"];
  if (triples.empty()) throw DataError("empty triple list" + where);
  for (std::size_t k = 0; k < triples.size(); ++k) {
    const auto& t = triples[k];
    if (!t.is_array() || t.size() != 3 || !t[0].is_string() || !t[1].is_string() ||
        !t[2].is_string()) {
      throw DataError("triple " + std::to_string(k) + " is not a 3-element string array" + where);
    }
    auto field = [&](std::size_t i) {
      return std::string(trim(t[i].get_ref<const std::string&>()));
    };
    Triple triple{field(0), field(1), field(2)};
    const std::pair<const char*, const std::string*> fields[] = {
        {"head", &triple.head}, {"relation", &triple.relation}, {"tail", &triple.tail}};
    for (const auto& [name, value] : fields) {
      if (trim(normalize_entity(*value)).empty()) {
        throw DataError(std::string("empty ") + name + " field in triple " + std::to_string(k) +
                        where);
      }
    }
    example.triples.push_back(std::move(triple));
  }
  if (record.contains("text")) {
    if (!record["text"].is_string()) throw DataError("\"text\" is not a string" + where);
    example.target_text = record["text"].get<std::string>();
  }
  return example;
}

std::string format_example(const Example& example) {
  nlohmann::ordered_json record;
  record["triples"] = nlohmann::ordered_json::array();
  for (const auto& t : example.triples) record["triples"].push_back({t.head, t.relation, t.tail});
  if (!example.target_text.empty()) record["text"] = example.target_text;
  return record.dump();
}

std::vector<Example> parse_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset " + path.string());
  std::vector<Example> examples;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    examples.push_back(parse_example(line, line_number));
  }
  return examples;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::string_view s = trim(text);
  // Paired quotes around a whole value ("1907-07-11") are dropped. Quotes
  // inside the value keep the outer pair, so re-tokenizing joined output
  // cannot strip a different pair.
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"' &&
      s.substr(1, s.size() - 2).find('"') == std::string_view::npos) {
    s = s.substr(1, s.size() - 2);
  }
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (char c : s) {
    if (is_space(c)) {
      flush();
    } else if (kPunctuation.find(c) != std::string_view::npos) {
      flush();
      tokens.emplace_back(1, c);
    } else {
      current.push_back(c);
    }
  }
  flush();
  return tokens;
}

std::string normalize_entity(std::string_view entity) {
  std::string out(entity);
  std::replace(out.begin(), out.end(), '_', ' ');
  return out;
}

std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

TokenizedGraphInput linearize(const Example& example, const Vocabulary& vocab,
                              const LinearizeOptions& options) {
  if (example.triples.empty()) throw DataError("example has no triples");
  TokenizedGraphInput out;
  auto push = [&](std::string token, TokenKind kind, int triple, int span) {
    out.tokens.push_back(vocab.id(token));
    out.kinds.push_back(kind);
    out.triple_index.push_back(triple);
    out.entity_span_id.push_back(span);
    out.surface.push_back(std::move(token));
  };

  for (auto& t : tokenize(options.prompt)) push(std::move(t), TokenKind::kPrompt, kNoIndex, kNoIndex);
  push(reserved_tokens()[Vocabulary::kGraph], TokenKind::kGlobal, kNoIndex, kNoIndex);

  std::map<std::string, int> occurrence_keys;
  for (std::size_t ti = 0; ti < example.triples.size(); ++ti) {
    const Triple& triple = example.triples[ti];
    const struct {
      SpanRole role;
      TokenKind marker;
      int marker_id;
      std::string text;
    } parts[] = {
        {SpanRole::kHead, TokenKind::kSpecialH, Vocabulary::kHead, normalize_entity(triple.head)},
        {SpanRole::kRelation, TokenKind::kSpecialR, Vocabulary::kRelation, triple.relation},
        {SpanRole::kTail, TokenKind::kSpecialT, Vocabulary::kTail, normalize_entity(triple.tail)},
    };
    for (const auto& part : parts) {
      auto words = tokenize(part.text);
      if (words.empty()) {
        throw DataError(std::string("empty ") + role_name(part.role) + " in triple " +
                        std::to_string(ti));
      }
      EntitySpan span;
      span.triple = static_cast<int>(ti);
      span.role = part.role;
      span.special_position = out.size();
      span.first_token = out.size() + 1;
      span.length = words.size();
      span.key = detokenize(words);
      if (part.role != SpanRole::kRelation) {
        auto [it, inserted] = occurrence_keys.try_emplace(
            span.key, static_cast<int>(out.spans.size()));
        span.occurrence_key = it->second;
      }
      const int span_id = static_cast<int>(out.spans.size());
      push(reserved_tokens()[static_cast<std::size_t>(part.marker_id)], part.marker,
           static_cast<int>(ti), kNoIndex);
      for (auto& w : words) push(std::move(w), TokenKind::kEntity, static_cast<int>(ti), span_id);
      out.spans.push_back(std::move(span));
    }
  }
  if (out.size() > options.max_sequence_length) {
    throw DataError("linearized sequence has " + std::to_string(out.size()) +
                    " tokens, exceeding max_sequence_length " +
                    std::to_string(options.max_sequence_length));
  }
  return out;
}

Example parse_linearized(std::string_view text) {
  const auto& reserved = reserved_tokens();
  const std::string& graph = reserved[Vocabulary::kGraph];
  const std::string& head = reserved[Vocabulary::kHead];
  const std::string& rel = reserved[Vocabulary::kRelation];
  const std::string& tail = reserved[Vocabulary::kTail];

  auto tokens = tokenize(text);
  auto it = std::find(tokens.begin(), tokens.end(), graph);
  if (it == tokens.end()) throw DataError("linearized text has no " + graph + " marker");
  ++it;

  Example example;
  std::vector<std::string> words;
  std::string* slot = nullptr;
  auto close_slot = [&] {
    if (slot) *slot = detokenize(words);
    words.clear();
  };
  for (; it != tokens.end(); ++it) {
    if (*it == head) {
      close_slot();
      example.triples.emplace_back();
      slot = &example.triples.back().head;
    } else if (*it == rel || *it == tail) {
      if (example.triples.empty()) throw DataError("marker " + *it + " before the first " + head);
      close_slot();
      slot = *it == rel ? &example.triples.back().relation : &example.triples.back().tail;
    } else {
      if (!slot) throw DataError("token '" + *it + "' outside any triple");
      words.push_back(*it);
    }
  }
  close_slot();
  if (example.triples.empty()) throw DataError("linearized text has no triples");
  return example;
}

Vocabulary build_vocabulary(const std::vector<Example>& corpus, std::size_t min_count,
                            const LinearizeOptions& options) {
  if (corpus.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
  const Vocabulary reserved;
  std::map<std::string, std::size_t> counts;
  LinearizeOptions unbounded = options;
  unbounded.max_sequence_length = SIZE_MAX;
  for (const auto& example : corpus) {
    for (const auto& t : linearize(example, reserved, unbounded).surface) ++counts[t];
    for (const auto& t : tokenize(example.target_text)) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [token, count] : counts) {
    if (count >= min_count && !reserved.contains(token)) ranked.emplace_back(token, count);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary vocab;
  for (const auto& [token, count] : ranked) vocab.add(token);
  return vocab;
}

}  // namespace grasame
