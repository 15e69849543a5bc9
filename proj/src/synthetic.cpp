#include "grasame/synthetic.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>

#include "grasame/rng.hpp"

namespace grasame {

namespace {

enum class Kind { kPlace, kCountry, kPerson, kLanguage, kYear, kRiver, kNumber };

const std::vector<std::string>& pool(Kind kind) {
  static const std::vector<std::string> places = {
      "Alder_Bay", "Brenn",   "Corvo_Ridge",  "Dalmar", "Elsworth",
      "Fenwick_Hollow", "Garro", "Hestia_Falls", "Iwen", "Jorvik_Point"};
  static const std::vector<std::string> countries = {"Norland", "Ostria", "Pavonia", "Quessia",
                                                     "Rimeland"};
  static const std::vector<std::string> people = {"Ada_Voss", "Bram_Keller", "Cora_Lind",
                                                  "Dario_Mendez", "Elin_Shaw", "Felix_Orne"};
  static const std::vector<std::string> languages = {"Norlandic", "Ostrian", "Pavonic"};
  static const std::vector<std::string> years = {"1852", "1907", "1931", "1968", "1994"};
  static const std::vector<std::string> rivers = {"Tamber", "Ulla", "Veyra"};
  static const std::vector<std::string> numbers = {"730", "12000", "48500"};
  switch (kind) {
    case Kind::kPlace: return places;
    case Kind::kCountry: return countries;
    case Kind::kPerson: return people;
    case Kind::kLanguage: return languages;
    case Kind::kYear: return years;
    case Kind::kRiver: return rivers;
    case Kind::kNumber: return numbers;
  }
  throw std::logic_error("unknown entity kind");
}

struct RelationTemplate {
  const char* name;
  Kind head;
  Kind tail;
  const char* text;  // {h} and {t} are replaced
};

const std::vector<RelationTemplate>& relations() {
  static const std::vector<RelationTemplate> r = {
      {"country", Kind::kPlace, Kind::kCountry, "{h} is located in {t} ."},
      {"capital", Kind::kCountry, Kind::kPlace, "the capital of {h} is {t} ."},
      {"leaderName", Kind::kCountry, Kind::kPerson, "{t} is the leader of {h} ."},
      {"language", Kind::kCountry, Kind::kLanguage, "{t} is spoken in {h} ."},
      {"foundingYear", Kind::kPlace, Kind::kYear, "{h} was founded in {t} ."},
      {"river", Kind::kPlace, Kind::kRiver, "the {t} river flows through {h} ."},
      {"birthPlace", Kind::kPerson, Kind::kPlace, "{h} was born in {t} ."},
      {"nationality", Kind::kPerson, Kind::kCountry, "{h} is a citizen of {t} ."},
      {"isPartOf", Kind::kPlace, Kind::kPlace, "{h} is part of {t} ."},
      {"populationTotal", Kind::kPlace, Kind::kNumber, "{h} has a population of {t} ."},
      {"mayor", Kind::kPlace, Kind::kPerson, "the mayor of {h} is {t} ."},
      {"sourceCountry", Kind::kRiver, Kind::kCountry, "the {h} river starts in {t} ."},
  };
  return r;
}

std::string render(const RelationTemplate& rel, const std::string& head, const std::string& tail) {
  std::string text = rel.text;
  auto replace = [&text](const std::string& key, const std::string& value) {
    const auto pos = text.find(key);
    text.replace(pos, key.size(), value);
  };
  replace("{h}", normalize_entity(head));
  replace("{t}", normalize_entity(tail));
  return text;
}

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& items) {
  return items[rng.below(items.size())];
}

}  // namespace

std::vector<Example> make_synthetic_corpus(const SyntheticOptions& options) {
  if (options.min_triples == 0 || options.min_triples > options.max_triples) {
    throw std::invalid_argument("synthetic corpus: bad triple count range");
  }
  Rng rng(options.seed);
  std::vector<Example> out;
  std::set<std::vector<std::string>> seen;
  std::size_t attempts = 0;
  while (out.size() < options.num_examples) {
    if (++attempts > options.num_examples * 1000) {
      throw std::runtime_error("synthetic corpus: could not find enough distinct examples");
    }
    const std::size_t k =
        options.min_triples + rng.below(options.max_triples - options.min_triples + 1);
    Example ex;
    std::vector<std::pair<std::string, Kind>> entities;
    std::vector<std::string> sentences;
    std::vector<std::string> key;
    while (ex.triples.size() < k) {
      const RelationTemplate* rel = nullptr;
      std::string head;
      if (!entities.empty() && rng.uniform() < options.share_probability) {
        const auto& [name, kind] = pick(rng, entities);
        std::vector<const RelationTemplate*> fits;
        for (const auto& r : relations()) {
          if (r.head == kind) fits.push_back(&r);
        }
        if (fits.empty()) continue;
        rel = pick(rng, fits);
        head = name;
      } else {
        rel = &pick(rng, relations());
        head = pick(rng, pool(rel->head));
      }
      const std::string tail = pick(rng, pool(rel->tail));
      if (tail == head) continue;
      const bool duplicate = std::any_of(ex.triples.begin(), ex.triples.end(), [&](const Triple& t) {
        return t.head == head && t.relation == rel->name;
      });
      if (duplicate) continue;
      ex.triples.push_back({head, rel->name, tail});
      entities.emplace_back(head, rel->head);
      entities.emplace_back(tail, rel->tail);
      sentences.push_back(render(*rel, head, tail));
      key.insert(key.end(), {head, rel->name, tail});
    }
    if (!seen.insert(key).second) continue;
    for (const auto& s : sentences) {
      if (!ex.target_text.empty()) ex.target_text += ' ';
      ex.target_text += s;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace grasame
