#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace grasame {

struct Triple {
  std::string head;
  std::string relation;
  std::string tail;
};

struct Example {
  std::vector<Triple> triples;
  std::string target_text;  // empty at inference time
};

enum class TokenKind : std::uint8_t {
  kPrompt,
  kGlobal,
  kSpecialH,
  kSpecialR,
  kSpecialT,
  kEntity,
};

enum class SpanRole : std::uint8_t { kHead, kRelation, kTail };

inline constexpr int kNoIndex = -1;

// One head/relation/tail occurrence in the linearized sequence.
struct EntitySpan {
  int triple = kNoIndex;
  SpanRole role = SpanRole::kHead;
  std::size_t special_position = 0;  // position of the <H>/<R>/<T> marker
  std::size_t first_token = 0;       // first content token position
  std::size_t length = 0;            // number of content tokens
  std::string key;                   // normalized surface string
  // Spans whose normalized strings match share an occurrence key. Only
  // head/tail spans are keyed; relation spans carry kNoIndex.
  int occurrence_key = kNoIndex;
};

struct TokenizedGraphInput {
  std::vector<int> tokens;
  std::vector<TokenKind> kinds;
  std::vector<int> triple_index;
  std::vector<int> entity_span_id;
  std::vector<std::string> surface;
  std::vector<EntitySpan> spans;

  std::size_t size() const { return tokens.size(); }
  std::size_t num_triples() const { return spans.size() / 3; }
};

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kGraph = 4;
  static constexpr int kHead = 5;
  static constexpr int kRelation = 6;
  static constexpr int kTail = 7;
  static constexpr int kNumReserved = 8;

  // Starts with the reserved tokens only.
  Vocabulary();

  // Returns kUnk for unknown tokens.
  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }

  // Adds the token if absent and returns its id.
  int add(const std::string& token);

  // One token per line; line number (0-based) is the id.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

const std::vector<std::string>& reserved_tokens();

struct LinearizeOptions {
  std::string prompt = "translate graph to English: ";
  std::size_t max_sequence_length = 187;
};

std::vector<Example> parse_dataset(const std::filesystem::path& path);
// Parses one JSON-lines record; line_number is used in error messages.
Example parse_example(std::string_view line, std::size_t line_number);

// One JSON-lines record, the inverse of parse_example.
std::string format_example(const Example& example);

std::vector<std::string> tokenize(std::string_view text);

// Underscores become spaces; used for head and tail strings.
std::string normalize_entity(std::string_view entity);

// Tokens of a prompt, <Graph>, then <H> head <R> relation <T> tail per triple.
// Throws DataError when the sequence exceeds max_sequence_length.
TokenizedGraphInput linearize(const Example& example, const Vocabulary& vocab,
                              const LinearizeOptions& options = {});

std::string detokenize(const std::vector<std::string>& tokens);

// Inverse of linearize on detokenized text: recovers the triples that follow
// the <Graph> marker. Entity strings come back in tokenized form.
Example parse_linearized(std::string_view text);

// Reserved tokens first, then corpus tokens with frequency >= min_count,
// ordered by descending frequency and then lexicographically.
Vocabulary build_vocabulary(const std::vector<Example>& corpus, std::size_t min_count,
                            const LinearizeOptions& options = {});

}  // namespace grasame
