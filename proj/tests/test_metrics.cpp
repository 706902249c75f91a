#include <algorithm>
#include <map>
#include <vector>

#include "advner/errors.hpp"
#include "advner/metrics.hpp"
#include "advner/rng.hpp"
#include "doctest.h"

using namespace advner;
using metrics::EntitySpan;

namespace {

// Independent reference scorer: repairs tags to strict IOB2 first, then runs
// a separate span scan and counts span multiset overlaps per sentence.
std::vector<EntitySpan> oracle_spans(const std::vector<std::string>& tags) {
  // repair: rewrite orphan I-X as B-X
  std::vector<std::string> fixed = tags;
  std::string prev_type;
  bool prev_ent = false;
  for (size_t i = 0; i < fixed.size(); ++i) {
    const std::string& t = fixed[i];
    if (t.size() >= 3 && t[1] == '-' && (t[0] == 'B' || t[0] == 'I')) {
      const std::string type = t.substr(2);
      if (t[0] == 'I' && !(prev_ent && prev_type == type)) fixed[i] = "B-" + type;
      prev_ent = true;
      prev_type = type;
    } else {
      prev_ent = false;
      prev_type.clear();
    }
  }
  // strict scan over the repaired sequence
  std::vector<EntitySpan> spans;
  for (size_t i = 0; i < fixed.size();) {
    if (fixed[i].size() >= 3 && fixed[i][0] == 'B') {
      const std::string type = fixed[i].substr(2);
      size_t j = i + 1;
      while (j < fixed.size() && fixed[j] == "I-" + type) ++j;
      spans.push_back({type, static_cast<int64_t>(i), static_cast<int64_t>(j)});
      i = j;
    } else {
      ++i;
    }
  }
  return spans;
}

struct OracleCounts {
  int64_t tp = 0, fp = 0, fn = 0;
};

OracleCounts oracle_prf(const std::vector<std::vector<std::string>>& pred,
                        const std::vector<std::vector<std::string>>& gold) {
  OracleCounts c;
  for (size_t s = 0; s < pred.size(); ++s) {
    auto p = oracle_spans(pred[s]);
    auto g = oracle_spans(gold[s]);
    std::vector<bool> used(g.size(), false);
    for (const auto& ps : p) {
      bool hit = false;
      for (size_t k = 0; k < g.size(); ++k) {
        if (!used[k] && g[k] == ps) {
          used[k] = true;
          hit = true;
          break;
        }
      }
      if (hit)
        ++c.tp;
      else
        ++c.fp;
    }
    for (size_t k = 0; k < g.size(); ++k)
      if (!used[k]) ++c.fn;
  }
  return c;
}

std::vector<std::string> random_tags(SplitMix64& rng, int len) {
  static const std::vector<std::string> pool{"O",     "B-PER", "I-PER", "B-LOC",
                                             "I-LOC", "B-ORG", "I-ORG"};
  std::vector<std::string> out;
  for (int i = 0; i < len; ++i) out.push_back(pool[rng.below(pool.size())]);
  return out;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("extract_entities basic cases") {
  auto spans = metrics::extract_entities({"B-PER", "I-PER", "O", "B-LOC"});
  std::sort(spans.begin(), spans.end());
  CHECK(spans == std::vector<EntitySpan>{{"LOC", 3, 4}, {"PER", 0, 2}});

  CHECK(metrics::extract_entities({"O", "O", "O"}).empty());

  // orphan I- run starts a span (conlleval repair)
  auto orphan = metrics::extract_entities({"I-ORG", "I-ORG"});
  CHECK(orphan == std::vector<EntitySpan>{{"ORG", 0, 2}});
}

TEST_CASE("extract_entities matches conlleval repair semantics on fixtures") {
  using Case = std::pair<std::vector<std::string>, std::vector<EntitySpan>>;
  const std::vector<Case> cases{
      {{"B-PER"}, {{"PER", 0, 1}}},
      {{"I-PER"}, {{"PER", 0, 1}}},
      {{"O", "I-PER"}, {{"PER", 1, 2}}},
      {{"B-PER", "I-PER"}, {{"PER", 0, 2}}},
      {{"B-PER", "B-PER"}, {{"PER", 0, 1}, {"PER", 1, 2}}},
      {{"I-PER", "I-PER"}, {{"PER", 0, 2}}},
      {{"I-PER", "B-PER"}, {{"PER", 0, 1}, {"PER", 1, 2}}},
      {{"B-PER", "I-LOC"}, {{"PER", 0, 1}, {"LOC", 1, 2}}},
      {{"I-PER", "I-LOC"}, {{"PER", 0, 1}, {"LOC", 1, 2}}},
      {{"B-PER", "O", "I-PER"}, {{"PER", 0, 1}, {"PER", 2, 3}}},
      {{"O", "O", "O"}, {}},
      {{"B-LOC", "I-LOC", "I-LOC", "O"}, {{"LOC", 0, 3}}},
      {{"I-ORG", "I-ORG"}, {{"ORG", 0, 2}}},
      {{"O", "B-ORG"}, {{"ORG", 1, 2}}},
      {{"B-ORG", "I-ORG", "B-ORG"}, {{"ORG", 0, 2}, {"ORG", 2, 3}}},
      {{"I-LOC", "O", "I-LOC", "I-LOC"}, {{"LOC", 0, 1}, {"LOC", 2, 4}}},
      {{"B-PER", "I-PER", "I-LOC", "I-LOC"}, {{"PER", 0, 2}, {"LOC", 2, 4}}},
      {{"I-PER", "I-PER", "I-PER"}, {{"PER", 0, 3}}},
      {{"O", "I-LOC", "B-LOC"}, {{"LOC", 1, 2}, {"LOC", 2, 3}}},
      {{"B-PER", "B-LOC", "I-LOC"}, {{"PER", 0, 1}, {"LOC", 1, 3}}},
  };
  REQUIRE(cases.size() == 20);
  for (size_t i = 0; i < cases.size(); ++i) {
    CAPTURE(i);
    auto got = metrics::extract_entities(cases[i].first);
    CHECK(got == cases[i].second);
  }
}

TEST_CASE("prf1 perfect prediction scores 1.0") {
  std::vector<std::vector<std::string>> gold{{"B-PER", "I-PER", "O"}};
  auto m = metrics::prf1(gold, gold);
  CHECK(m.precision == 1.0);
  CHECK(m.recall == 1.0);
  CHECK(m.f1 == 1.0);
  CHECK(m.tp == 1);
}

TEST_CASE("prf1 half right / half spurious scores 0.5") {
  // gold: PER@0-1, LOC@2-3; pred finds PER@0-1 plus spurious ORG@2-3
  std::vector<std::vector<std::string>> gold{{"B-PER", "O", "B-LOC", "O"}};
  std::vector<std::vector<std::string>> pred{{"B-PER", "O", "B-ORG", "O"}};
  auto m = metrics::prf1(pred, gold);
  CHECK(m.tp == 1);
  CHECK(m.fp == 1);
  CHECK(m.fn == 1);
  CHECK(m.precision == 0.5);
  CHECK(m.recall == 0.5);
  CHECK(m.f1 == 0.5);
  CHECK(m.per_type.at("PER").f1 == 1.0);
  CHECK(m.per_type.at("LOC").recall == 0.0);
}

TEST_CASE("prf1 all-O prediction scores 0 under the 0/0 convention") {
  std::vector<std::vector<std::string>> gold{{"B-PER", "O"}};
  std::vector<std::vector<std::string>> pred{{"O", "O"}};
  auto m = metrics::prf1(pred, gold);
  CHECK(m.precision == 0.0);
  CHECK(m.recall == 0.0);
  CHECK(m.f1 == 0.0);
}

TEST_CASE("prf1 rejects misaligned inputs with the sentence index") {
  std::vector<std::vector<std::string>> gold{{"O"}, {"O", "O"}};
  std::vector<std::vector<std::string>> pred{{"O"}, {"O"}};
  try {
    metrics::prf1(pred, gold);
    FAIL("expected ContractError");
  } catch (const ContractError& e) {
    CHECK(std::string(e.what()).find("sentence 1") != std::string::npos);
  }
}

TEST_CASE("prf1 agrees with the brute-force oracle on 1000 random pairs") {
  SplitMix64 rng(777);
  for (int iter = 0; iter < 1000; ++iter) {
    const int n_sent = 1 + static_cast<int>(rng.below(4));
    std::vector<std::vector<std::string>> pred, gold;
    for (int s = 0; s < n_sent; ++s) {
      const int len = 1 + static_cast<int>(rng.below(10));
      pred.push_back(random_tags(rng, len));
      gold.push_back(random_tags(rng, len));
    }
    auto m = metrics::prf1(pred, gold);
    auto o = oracle_prf(pred, gold);
    REQUIRE(m.tp == o.tp);
    REQUIRE(m.fp == o.fp);
    REQUIRE(m.fn == o.fn);
  }
}

TEST_CASE("f1 is symmetric under swapping pred and gold") {
  SplitMix64 rng(778);
  for (int iter = 0; iter < 200; ++iter) {
    const int len = 1 + static_cast<int>(rng.below(10));
    std::vector<std::vector<std::string>> a{random_tags(rng, len)};
    std::vector<std::vector<std::string>> b{random_tags(rng, len)};
    CHECK(metrics::prf1(a, b).f1 == doctest::Approx(metrics::prf1(b, a).f1));
  }
}

TEST_CASE("adding an all-O sentence to both sides changes nothing") {
  std::vector<std::vector<std::string>> gold{{"B-PER", "O", "B-LOC"}};
  std::vector<std::vector<std::string>> pred{{"B-PER", "O", "B-ORG"}};
  auto before = metrics::prf1(pred, gold);
  gold.push_back({"O", "O", "O", "O"});
  pred.push_back({"O", "O", "O", "O"});
  auto after = metrics::prf1(pred, gold);
  CHECK(before.precision == after.precision);
  CHECK(before.recall == after.recall);
  CHECK(before.f1 == after.f1);
  CHECK(before.tp == after.tp);
}

TEST_CASE("domain_accuracy counts argmax hits, ties to source") {
  using data::Domain;
  std::vector<float> logits{0.2f, 0.8f, 0.9f, 0.1f, 0.5f, 0.5f};
  std::vector<Domain> gold{Domain::target, Domain::source, Domain::source};
  CHECK(metrics::domain_accuracy(logits, gold) == 1.0);

  std::vector<Domain> gold2{Domain::target, Domain::source, Domain::target};
  CHECK(metrics::domain_accuracy(logits, gold2) == doctest::Approx(2.0 / 3.0));

  CHECK_THROWS_AS(metrics::domain_accuracy({}, {}), ContractError);
}

TEST_CASE("domain_accuracy on random balanced logits is near one half") {
  SplitMix64 rng(779);
  const int n = 4000;
  std::vector<float> logits;
  std::vector<data::Domain> gold;
  for (int i = 0; i < n; ++i) {
    logits.push_back(rng.uniform_float(-1, 1));
    logits.push_back(rng.uniform_float(-1, 1));
    gold.push_back(i % 2 ? data::Domain::source : data::Domain::target);
  }
  const double acc = metrics::domain_accuracy(logits, gold);
  CHECK(acc > 0.45);
  CHECK(acc < 0.55);
}

TEST_CASE("flatten exposes the documented keys") {
  std::vector<std::vector<std::string>> gold{{"B-PER", "O"}};
  auto flat = metrics::flatten(metrics::prf1(gold, gold));
  CHECK(flat.count("precision"));
  CHECK(flat.count("recall"));
  CHECK(flat.count("f1"));
  CHECK(flat.count("per_type.PER.f1"));
}

}  // TEST_SUITE
