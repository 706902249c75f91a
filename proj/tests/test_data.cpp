#include <sstream>
#include <vector>

#include "advner/data.hpp"
#include "advner/errors.hpp"
#include "advner/metrics.hpp"
#include "advner/rng.hpp"
#include "doctest.h"

using namespace advner;
using data::TagScheme;
using data::TokenSequence;

namespace {

const std::vector<std::string> kTypes{"PER", "LOC", "ORG"};

// Random well-formed sequences per scheme, returning the true span set so
// conversions can be checked for span preservation.
struct Labeled {
  std::vector<std::string> tags;
  std::vector<metrics::EntitySpan> spans;
};

Labeled random_scheme_tags(TagScheme scheme, SplitMix64& rng) {
  Labeled out;
  const int len = 1 + static_cast<int>(rng.below(12));
  std::string prev_entity_type;  // type of entity run that just ended here
  while (static_cast<int>(out.tags.size()) < len) {
    const bool entity = rng.uniform() < 0.55;
    if (!entity) {
      out.tags.emplace_back("O");
      prev_entity_type.clear();
      continue;
    }
    const std::string type = kTypes[rng.below(kTypes.size())];
    const int remaining = len - static_cast<int>(out.tags.size());
    const int elen = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(
                             std::min(3, remaining))));
    const int64_t start = static_cast<int64_t>(out.tags.size());
    switch (scheme) {
      case TagScheme::iob2:
        out.tags.push_back("B-" + type);
        for (int i = 1; i < elen; ++i) out.tags.push_back("I-" + type);
        break;
      case TagScheme::iob1:
        // B- only where an entity of the same type directly precedes
        out.tags.push_back((prev_entity_type == type ? "B-" : "I-") + type);
        for (int i = 1; i < elen; ++i) out.tags.push_back("I-" + type);
        break;
      case TagScheme::bilou:
        if (elen == 1) {
          out.tags.push_back("U-" + type);
        } else {
          out.tags.push_back("B-" + type);
          for (int i = 1; i < elen - 1; ++i) out.tags.push_back("I-" + type);
          out.tags.push_back("L-" + type);
        }
        break;
      case TagScheme::token_class:
        // adjacent same-type entities merge under this scheme; force a
        // separator unless the previous run had a different type
        if (prev_entity_type == type) {
          out.tags.emplace_back("O");
          prev_entity_type.clear();
          continue;
        }
        for (int i = 0; i < elen; ++i) out.tags.push_back(type);
        break;
    }
    out.spans.push_back({type, start, start + elen});
    prev_entity_type = type;
  }
  return out;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("parse_conll reads the column format") {
  std::istringstream in("Jean B-PER\nParis B-LOC\n\n");
  auto seqs = data::parse_conll(in);
  REQUIRE(seqs.size() == 1);
  CHECK(seqs[0].tokens == std::vector<std::string>{"Jean", "Paris"});
  CHECK(seqs[0].tags == std::vector<std::string>{"B-PER", "B-LOC"});
}

TEST_CASE("parse_conll on empty input yields no sentences") {
  std::istringstream in("");
  CHECK(data::parse_conll(in).empty());
}

TEST_CASE("parse_conll tolerates CRLF and trailing blank lines") {
  std::istringstream in("a B-PER\r\nb O\r\n\r\n\r\nc O\n\n\n");
  auto seqs = data::parse_conll(in);
  REQUIRE(seqs.size() == 2);
  CHECK(seqs[0].tokens == std::vector<std::string>{"a", "b"});
  CHECK(seqs[1].tokens == std::vector<std::string>{"c"});
}

TEST_CASE("parse_conll reports single-column lines when labels are expected") {
  std::istringstream in("token\n");
  try {
    data::parse_conll(in);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }
}

TEST_CASE("parse_conll long-sentence policies") {
  std::string text;
  for (int i = 0; i < 10; ++i) text += "tok" + std::to_string(i) + " O\n";
  data::ParseOptions opts;
  opts.max_len = 4;

  opts.long_policy = data::LongSentencePolicy::truncate;
  {
    std::istringstream in(text);
    auto seqs = data::parse_conll(in, opts);
    REQUIRE(seqs.size() == 1);
    CHECK(seqs[0].tokens.size() == 4);
    CHECK(seqs[0].tags.size() == 4);
  }
  opts.long_policy = data::LongSentencePolicy::split;
  {
    std::istringstream in(text);
    auto seqs = data::parse_conll(in, opts);
    REQUIRE(seqs.size() == 3);
    CHECK(seqs[0].tokens.size() == 4);
    CHECK(seqs[2].tokens.size() == 2);
    CHECK(seqs[2].tags.size() == 2);
  }
  opts.long_policy = data::LongSentencePolicy::reject;
  {
    std::istringstream in(text);
    CHECK_THROWS_AS(data::parse_conll(in, opts), DataError);
  }
}

TEST_CASE("to_iob is the identity on IOB input") {
  const std::vector<std::string> tags{"B-PER", "I-PER", "O"};
  CHECK(data::to_iob(tags, TagScheme::iob2) == tags);
}

TEST_CASE("to_iob converts token classes") {
  const std::vector<std::string> in{"PER", "PER", "O", "LOC"};
  const std::vector<std::string> want{"B-PER", "I-PER", "O", "B-LOC"};
  CHECK(data::to_iob(in, TagScheme::token_class) == want);
}

TEST_CASE("to_iob converts BILOU") {
  const std::vector<std::string> in{"U-LOC", "O", "B-ORG", "L-ORG"};
  const std::vector<std::string> want{"B-LOC", "O", "B-ORG", "I-ORG"};
  CHECK(data::to_iob(in, TagScheme::bilou) == want);
}

TEST_CASE("to_iob converts IOB1 entity-initial I tags") {
  // IOB1: entities open with I-; B- appears only between adjacent same-type
  // entities
  const std::vector<std::string> in{"I-PER", "B-PER", "I-LOC", "O", "I-LOC"};
  const std::vector<std::string> want{"B-PER", "B-PER", "B-LOC", "O", "B-LOC"};
  CHECK(data::to_iob(in, TagScheme::iob1) == want);
  const std::vector<std::string> run{"I-ORG", "I-ORG", "O"};
  CHECK(data::to_iob(run, TagScheme::iob1) ==
        std::vector<std::string>{"B-ORG", "I-ORG", "O"});
}

TEST_CASE("to_iob rejects malformed tags with the index") {
  try {
    data::to_iob({"B-PER", "Q-LOC"}, TagScheme::iob2);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("index 1") != std::string::npos);
  }
}

TEST_CASE("to_iob output is valid IOB, idempotent, and span-preserving") {
  SplitMix64 rng(2024);
  const TagScheme schemes[] = {TagScheme::iob1, TagScheme::iob2, TagScheme::bilou,
                               TagScheme::token_class};
  int checked = 0;
  for (int iter = 0; iter < 10000; ++iter) {
    const TagScheme scheme = schemes[iter % 4];
    Labeled lab = random_scheme_tags(scheme, rng);
    auto iob = data::to_iob(lab.tags, scheme);
    REQUIRE(data::is_valid_iob(iob));
    REQUIRE(data::to_iob(iob, TagScheme::iob2) == iob);  // idempotent
    // conversion preserves the span set exactly
    auto got = metrics::extract_entities(iob);
    std::sort(got.begin(), got.end());
    std::sort(lab.spans.begin(), lab.spans.end());
    REQUIRE(got == lab.spans);
    ++checked;
  }
  CHECK(checked == 10000);
}

TEST_CASE("build_vocab applies min_freq and is deterministic") {
  std::vector<TokenSequence> corpus(1);
  corpus[0].tokens = {"a", "a", "a", "b"};
  corpus[0].tags = {"O", "B-PER", "I-PER", "O"};
  auto v = data::build_vocab(corpus, 2);
  CHECK(v.token_id("a") >= 2);
  CHECK(v.token_id("b") == data::Vocab::kUnk);
  CHECK(v.tagset[0] == "O");
  CHECK(v.tag_id("O") == 0);

  auto v2 = data::build_vocab(corpus, 2);
  CHECK(v.id_to_token == v2.id_to_token);
  CHECK(v.tagset == v2.tagset);
  CHECK(v.content_hash() == v2.content_hash());
}

TEST_CASE("vocab orders by frequency then lexicographically") {
  std::vector<TokenSequence> corpus(1);
  corpus[0].tokens = {"zz", "zz", "aa", "aa", "mm"};
  auto v = data::build_vocab(corpus, 1);
  // aa and zz tie at 2 -> lexicographic; mm last
  CHECK(v.id_to_token[2] == "aa");
  CHECK(v.id_to_token[3] == "zz");
  CHECK(v.id_to_token[4] == "mm");
}

TEST_CASE("make_batches splits 10 sequences into 4,4,2 and preserves order") {
  std::vector<TokenSequence> seqs(10);
  for (size_t i = 0; i < seqs.size(); ++i) {
    seqs[i].tokens.assign(1 + i % 3, "w");
    seqs[i].token_ids.assign(1 + i % 3, static_cast<int32_t>(i + 2));
  }
  auto batches = data::make_batches(seqs, 4, 7, false);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].rows == 4);
  CHECK(batches[1].rows == 4);
  CHECK(batches[2].rows == 2);
  CHECK(batches[0].seq_index == std::vector<int64_t>{0, 1, 2, 3});

  auto b1 = data::make_batches(seqs, 4, 99, true);
  auto b2 = data::make_batches(seqs, 4, 99, true);
  REQUIRE(b1.size() == b2.size());
  for (size_t i = 0; i < b1.size(); ++i) {
    CHECK(b1[i].seq_index == b2[i].seq_index);
    CHECK(b1[i].tokens == b2[i].tokens);
  }
  CHECK_THROWS_AS(data::make_batches(seqs, 0, 1, false), ConfigError);
}

TEST_CASE("parse -> batch -> un-pad round trip recovers token ids") {
  SplitMix64 rng(5150);
  std::vector<TokenSequence> seqs;
  for (int i = 0; i < 57; ++i) {
    TokenSequence s;
    const int len = 1 + static_cast<int>(rng.below(9));
    for (int j = 0; j < len; ++j)
      s.tokens.push_back("w" + std::to_string(rng.below(40)));
    seqs.push_back(std::move(s));
  }
  auto vocab = data::build_vocab(seqs, 1);
  data::assign_ids(seqs, vocab);
  auto batches = data::make_batches(seqs, 8, 3, true);
  size_t seen = 0;
  for (const auto& b : batches) {
    for (int64_t r = 0; r < b.rows; ++r) {
      std::vector<int32_t> ids;
      for (int64_t l = 0; l < b.len; ++l) {
        if (b.mask[static_cast<size_t>(r * b.len + l)]) {
          ids.push_back(b.tokens[static_cast<size_t>(r * b.len + l)]);
          CHECK(b.tokens[static_cast<size_t>(r * b.len + l)] != data::Vocab::kPad);
        } else {
          CHECK(b.tokens[static_cast<size_t>(r * b.len + l)] == data::Vocab::kPad);
        }
      }
      REQUIRE(ids == seqs[static_cast<size_t>(b.seq_index[static_cast<size_t>(r)])].token_ids);
      ++seen;
    }
  }
  CHECK(seen == seqs.size());
}

TEST_CASE("load_unlabeled reads plain text") {
  std::istringstream in("le chat dort\n\nla nuit tombe\n");
  auto seqs = data::load_unlabeled(in);
  REQUIRE(seqs.size() == 2);
  CHECK(seqs[0].tokens == std::vector<std::string>{"le", "chat", "dort"});
  CHECK(seqs[0].tags.empty());
  CHECK(seqs[0].domain == data::Domain::target);
}

TEST_CASE("load_unlabeled maps OOV tokens to UNK after assign_ids") {
  std::vector<TokenSequence> src(1);
  src[0].tokens = {"chat"};
  auto vocab = data::build_vocab(src, 1);
  std::istringstream in("chat inconnu\n");
  auto seqs = data::load_unlabeled(in);
  data::assign_ids(seqs, vocab);
  CHECK(seqs[0].token_ids[0] == vocab.token_id("chat"));
  CHECK(seqs[0].token_ids[1] == data::Vocab::kUnk);
}

TEST_CASE("load_unlabeled can strip tags from CoNLL input") {
  std::istringstream in("Jean B-PER\nParis B-LOC\n\n");
  auto seqs = data::load_unlabeled(in, /*conll_format=*/true);
  REQUIRE(seqs.size() == 1);
  CHECK(seqs[0].tokens == std::vector<std::string>{"Jean", "Paris"});
  CHECK(seqs[0].tags.empty());
}

}  // TEST_SUITE
