#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "grasame/errors.hpp"
#include "grasame/kg_ingest.hpp"

using namespace grasame;
using Tokens = std::vector<std::string>;

namespace {

Example iraq() { return {{{"Iraq", "language", "Arabic"}}, "Iraq language is Arabic."}; }

Example monocacy() {
  const std::string monument = "14th_New_Jersey_Volunteer_Infantry_Monument";
  return {{{"Monocacy_National_Battlefield", "location", "Frederick_County,_Maryland"},
           {monument, "established", "\"1907-07-11\""},
           {monument, "country", "\"United States\""},
           {monument, "category", "Historic_districts_in_the_United_States"},
           {monument, "district", "Monocacy_National_Battlefield"},
           {monument, "state", "\"Maryland\""}},
          ""};
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("grasame_kg_" + name);
}

}  // namespace

// Expected token lists come from tests/oracles/tokenizer_oracle.py.
TEST_CASE("tokenize matches the reference tokenizer") {
  CHECK(tokenize("Frederick County, Maryland") == Tokens{"Frederick", "County", ",", "Maryland"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("\"1907-07-11\"") == Tokens{"1907-07-11"});
  CHECK(tokenize("translate graph to English: ") ==
        Tokens{"translate", "graph", "to", "English", ":"});
  CHECK(tokenize("The 14th New Jersey Volunteer Infantry Monument is located on the Monocacy "
                 "National Battlefield, Frederick County, Maryland.") ==
        Tokens{"The",      "14th", "New",         "Jersey",     "Volunteer", "Infantry", "Monument",
               "is",       "located", "on",        "the",        "Monocacy",  "National", "Battlefield",
               ",",        "Frederick", "County",  ",",          "Maryland",  "."});
  CHECK(tokenize("Alan Bean (born 1932) isn't [retired]!") ==
        Tokens{"Alan", "Bean", "(", "born", "1932", ")", "isn", "'", "t", "[", "retired", "]", "!"});
  CHECK(tokenize("\"United States\"") == Tokens{"United", "States"});
  CHECK(tokenize("\"a \"b\" c\"") == Tokens{"\"", "a", "\"", "b", "\"", "c", "\""});
  CHECK(tokenize("  spaced\tout\nwords  ") == Tokens{"spaced", "out", "words"});
  CHECK(tokenize("x-ray;gamma?delta") == Tokens{"x-ray", ";", "gamma", "?", "delta"});
}

TEST_CASE("Iraq linearization") {
  const Vocabulary vocab = build_vocabulary({iraq()}, 1);
  const auto input = linearize(iraq(), vocab);
  CHECK(detokenize(input.surface) ==
        "translate graph to English : <Graph> <H> Iraq <R> language <T> Arabic");
  REQUIRE(input.size() == 12);
  CHECK(input.num_triples() == 1);
  CHECK(input.kinds[5] == TokenKind::kGlobal);
  CHECK(input.tokens[5] == Vocabulary::kGraph);
  CHECK(input.tokens[6] == Vocabulary::kHead);
  CHECK(input.tokens[8] == Vocabulary::kRelation);
  CHECK(input.tokens[10] == Vocabulary::kTail);
  for (std::size_t i = 0; i < 5; ++i) CHECK(input.kinds[i] == TokenKind::kPrompt);
  CHECK(input.spans[0].key == "Iraq");
  CHECK(input.spans[2].first_token == 11);
}

TEST_CASE("no prompt and single-token entities give length 7") {
  LinearizeOptions options;
  options.prompt = "";
  const auto input = linearize(iraq(), Vocabulary{}, options);
  CHECK(input.size() == 7);
  for (int t : input.tokens) CHECK(t != Vocabulary::kPad);
}

TEST_CASE("structure counts and order") {
  const auto input = linearize(monocacy(), Vocabulary{});
  std::size_t global = 0, special = 0;
  int last_triple = -1;
  for (std::size_t i = 0; i < input.size(); ++i) {
    const auto k = input.kinds[i];
    if (k == TokenKind::kGlobal) ++global;
    if (k == TokenKind::kSpecialH || k == TokenKind::kSpecialR || k == TokenKind::kSpecialT) {
      ++special;
      CHECK(input.triple_index[i] >= last_triple);
      last_triple = input.triple_index[i];
    }
  }
  CHECK(global == 1);
  CHECK(special == 18);
  CHECK(input.num_triples() == 6);
}

TEST_CASE("shared entity strings share occurrence keys") {
  const auto input = linearize(monocacy(), Vocabulary{});
  const auto& s = input.spans;
  // Heads of triples 1..5 are the same monument.
  for (std::size_t t = 2; t <= 5; ++t) CHECK(s[t * 3].occurrence_key == s[3].occurrence_key);
  // Battlefield: head of triple 0, tail of triple 4.
  CHECK(s[0].occurrence_key == s[4 * 3 + 2].occurrence_key);
  CHECK(s[0].occurrence_key != s[3].occurrence_key);
  for (std::size_t t = 0; t < 6; ++t) CHECK(s[t * 3 + 1].occurrence_key == kNoIndex);

  // Brute-force scan: equal keys exactly when the normalized strings match.
  for (std::size_t a = 0; a < s.size(); ++a) {
    for (std::size_t b = 0; b < s.size(); ++b) {
      if (s[a].role == SpanRole::kRelation || s[b].role == SpanRole::kRelation) continue;
      CHECK((s[a].key == s[b].key) == (s[a].occurrence_key == s[b].occurrence_key));
    }
  }
}

TEST_CASE("entity identity is case sensitive") {
  const Example ex{{{"Paris", "country", "France"}, {"paris", "country", "France"}}, ""};
  const auto input = linearize(ex, Vocabulary{});
  CHECK(input.spans[0].occurrence_key != input.spans[3].occurrence_key);
  CHECK(input.spans[2].occurrence_key == input.spans[5].occurrence_key);
}

TEST_CASE("linearize errors") {
  CHECK_THROWS_AS(linearize(Example{}, Vocabulary{}), DataError);
  LinearizeOptions tight;
  tight.max_sequence_length = 11;
  CHECK_THROWS_AS(linearize(iraq(), Vocabulary{}, tight), DataError);
  tight.max_sequence_length = 12;
  CHECK_NOTHROW(linearize(iraq(), Vocabulary{}, tight));
  CHECK_THROWS_AS(linearize(Example{{{"___", "r", "x"}}, ""}, Vocabulary{}), DataError);
}

TEST_CASE("round trip through detokenized text") {
  const auto input = linearize(monocacy(), Vocabulary{});
  const Example back = parse_linearized(detokenize(input.surface));
  REQUIRE(back.triples.size() == 6);
  const auto again = linearize(back, Vocabulary{});
  CHECK(again.surface == input.surface);
  CHECK(again.kinds == input.kinds);
  CHECK(again.triple_index == input.triple_index);
  CHECK(again.entity_span_id == input.entity_span_id);
  CHECK(back.triples[0].tail == "Frederick County , Maryland");
}

TEST_CASE("parse_linearized rejects text without structure") {
  CHECK_THROWS_AS(parse_linearized("no graph here"), DataError);
  CHECK_THROWS_AS(parse_linearized("<Graph>"), DataError);
  CHECK_THROWS_AS(parse_linearized("<Graph> stray <H> a <R> b <T> c"), DataError);
}

TEST_CASE("linearization is deterministic") {
  const Vocabulary vocab = build_vocabulary({monocacy(), iraq()}, 1);
  const auto a = linearize(monocacy(), vocab);
  const auto b = linearize(monocacy(), vocab);
  CHECK(a.tokens == b.tokens);
  CHECK(a.surface == b.surface);
}

TEST_CASE("vocabulary construction") {
  const Example ex = iraq();
  const Vocabulary vocab = build_vocabulary({ex}, 1);
  // reserved + translate graph to English : Iraq language Arabic is .
  CHECK(vocab.size() == Vocabulary::kNumReserved + 10);
  for (const auto& t : linearize(ex, Vocabulary{}).surface) CHECK(vocab.contains(t));
  for (const auto& t : tokenize(ex.target_text)) CHECK(vocab.contains(t));
  for (std::size_t i = 0; i < reserved_tokens().size(); ++i) {
    CHECK(vocab.token(static_cast<int>(i)) == reserved_tokens()[i]);
  }
  // Arabic, Iraq and language appear in graph and text; ties sort by string.
  CHECK(vocab.id("Arabic") == Vocabulary::kNumReserved);
  CHECK(vocab.id("Iraq") == Vocabulary::kNumReserved + 1);
  CHECK(vocab.id("language") == Vocabulary::kNumReserved + 2);
}

TEST_CASE("min_count maps rare tokens to UNK") {
  const Vocabulary vocab = build_vocabulary({iraq()}, 2);
  CHECK(vocab.contains("Iraq"));
  CHECK_FALSE(vocab.contains("translate"));
  CHECK(vocab.id("translate") == Vocabulary::kUnk);
  CHECK(vocab.encode({"Iraq", "translate"}) == std::vector<int>{vocab.id("Iraq"), Vocabulary::kUnk});
  CHECK_THROWS_AS(build_vocabulary({}, 1), DataError);
}

TEST_CASE("vocabulary save and load round trip") {
  const Vocabulary vocab = build_vocabulary({monocacy(), iraq()}, 1);
  const auto path = temp_path("vocab.txt");
  vocab.save(path);
  const Vocabulary loaded = Vocabulary::load(path);
  CHECK(loaded == vocab);
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    CHECK(loaded.id(vocab.token(static_cast<int>(i))) == static_cast<int>(i));
  }
  std::ofstream(path) << "hello\n";
  CHECK_THROWS_AS(Vocabulary::load(path), DataError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(Vocabulary::load(path), DataError);
  CHECK_THROWS(vocab.token(static_cast<int>(vocab.size())));
}

TEST_CASE("dataset parsing") {
  const Example ex = parse_example(
      R"({"triples": [["Iraq", "language", "Arabic"]], "text": "Iraq language is Arabic."})", 1);
  REQUIRE(ex.triples.size() == 1);
  CHECK(ex.triples[0].relation == "language");
  CHECK(ex.target_text == "Iraq language is Arabic.");

  const Example no_text = parse_example(R"({"triples": [["a", "b", "c"]]})", 1);
  CHECK(no_text.target_text.empty());

  CHECK_THROWS_AS(parse_example("{not json", 3), DataError);
  CHECK_THROWS_AS(parse_example(R"({"text": "x"})", 1), DataError);
  CHECK_THROWS_AS(parse_example(R"({"triples": []})", 1), DataError);
  CHECK_THROWS_AS(parse_example(R"({"triples": [["a", "b"]]})", 1), DataError);
  CHECK_THROWS_AS(parse_example(R"({"triples": [["a", "", "c"]]})", 1), DataError);
  CHECK_THROWS_AS(parse_example(R"({"triples": [["a", "b", "c"]], "text": 3})", 1), DataError);

  try {
    parse_example("{", 17);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("17") != std::string::npos);
  }
}

TEST_CASE("format_example is the inverse of parse_example") {
  const Example ex = monocacy();
  const Example back = parse_example(format_example(ex), 1);
  REQUIRE(back.triples.size() == ex.triples.size());
  for (std::size_t i = 0; i < ex.triples.size(); ++i) {
    CHECK(back.triples[i].head == ex.triples[i].head);
    CHECK(back.triples[i].relation == ex.triples[i].relation);
    CHECK(back.triples[i].tail == ex.triples[i].tail);
  }

  const auto path = temp_path("data.jsonl");
  {
    std::ofstream out(path);
    out << format_example(iraq()) << "\n\n" << format_example(ex) << "\n";
  }
  const auto all = parse_dataset(path);
  CHECK(all.size() == 2);
  CHECK(all[0].target_text == iraq().target_text);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(parse_dataset(path), DataError);
}
