#include <algorithm>
#include <set>
#include <sstream>

#include "advner/data.hpp"
#include "advner/errors.hpp"
#include "advner/synth.hpp"
#include "doctest.h"

using namespace advner;
using synth::DomainSpec;
using synth::PairMode;

namespace {

std::vector<data::TokenSequence> parse(const std::string& text) {
  std::istringstream in(text);
  return data::parse_conll(in);
}

DomainSpec base_spec(uint64_t seed, int64_t n = 400) {
  DomainSpec s;
  s.seed = seed;
  s.n_sentences = n;
  return s;
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("generation is deterministic per spec") {
  DomainSpec s = base_spec(5, 50);
  CHECK(synth::generate(s) == synth::generate(s));
  DomainSpec s2 = s;
  s2.seed = 6;
  CHECK(synth::generate(s) != synth::generate(s2));
}

TEST_CASE("entity_density zero produces only O tags") {
  DomainSpec s = base_spec(7, 50);
  s.entity_density = 0.0;
  for (const auto& seq : parse(synth::generate(s))) {
    for (const auto& tag : seq.tags) CHECK(tag == "O");
  }
}

TEST_CASE("generated corpora parse cleanly and are already IOB") {
  DomainSpec s = base_spec(8, 200);
  s.noise_rate = 0.05;
  auto seqs = parse(synth::generate(s));
  CHECK(seqs.size() == 200);
  for (const auto& seq : seqs) {
    REQUIRE(seq.tokens.size() == seq.tags.size());
    REQUIRE(data::is_valid_iob(seq.tags));
    CHECK(data::to_iob(seq.tags, data::TagScheme::iob2) == seq.tags);
  }
}

TEST_CASE("corpus statistics track the spec within 5 percent") {
  DomainSpec s = base_spec(9, 2000);
  s.entity_density = 0.25;
  s.min_len = 6;
  s.max_len = 18;
  auto seqs = parse(synth::generate(s));
  int64_t entity_tokens = 0, total_tokens = 0;
  for (const auto& seq : seqs) {
    total_tokens += static_cast<int64_t>(seq.tokens.size());
    for (const auto& tag : seq.tags) entity_tokens += tag != "O";
  }
  const double density =
      static_cast<double>(entity_tokens) / static_cast<double>(total_tokens);
  CHECK(density == doctest::Approx(0.25).epsilon(0.05));
  const double mean_len =
      static_cast<double>(total_tokens) / static_cast<double>(seqs.size());
  CHECK(mean_len == doctest::Approx(12.0).epsilon(0.05));
}

TEST_CASE("gap=1 with disjoint private pools gives zero context overlap") {
  DomainSpec src = base_spec(10, 300);
  src.domain_gap = 1.0;
  DomainSpec tgt = base_spec(11, 300);
  tgt.domain_gap = 1.0;
  auto [a, b] = synth::generate_pair(src, tgt, PairMode::different);
  CHECK(synth::context_jaccard(parse(a), parse(b)) == 0.0);
}

TEST_CASE("pair modes order the context-vocabulary overlap") {
  DomainSpec src = base_spec(12, 800);
  src.domain_gap = 0.9;
  DomainSpec tgt = base_spec(13, 800);
  tgt.domain_gap = 0.9;

  auto [s_same, t_same] = synth::generate_pair(src, tgt, PairMode::same);
  const double j_same = synth::context_jaccard(parse(s_same), parse(t_same));
  CHECK(j_same > 0.8);

  auto [s_diff, t_diff] = synth::generate_pair(src, tgt, PairMode::different);
  const double j_diff = synth::context_jaccard(parse(s_diff), parse(t_diff));
  CHECK(j_diff < 0.3);

  auto [s_mix, t_mix] = synth::generate_pair(src, tgt, PairMode::mixed);
  const double j_mix = synth::context_jaccard(parse(s_mix), parse(t_mix));
  CHECK(j_mix > j_diff);
  CHECK(j_mix < j_same);
}

TEST_CASE("same-mode target shares the source pools") {
  DomainSpec src = base_spec(14, 10);
  DomainSpec tgt = base_spec(15, 10);
  auto [rs, rt] = synth::resolve_pair_specs(src, tgt, PairMode::same);
  CHECK(rt.private_pool_seed == rs.resolved_private_seed());
  CHECK(rt.domain_gap == rs.domain_gap);
  CHECK(rt.shared_pool_seed == rs.shared_pool_seed);
  CHECK(rt.gazetteer_seed == rs.gazetteer_seed);
}

TEST_CASE("invalid specs are rejected") {
  DomainSpec s = base_spec(16);
  s.shared_pool_size = 0;
  CHECK_THROWS_AS(synth::generate(s), ConfigError);
  DomainSpec s2 = base_spec(17);
  s2.entity_density = 1.0;
  CHECK_THROWS_AS(synth::generate(s2), ConfigError);
  DomainSpec s3 = base_spec(18);
  s3.min_len = 9;
  s3.max_len = 6;
  CHECK_THROWS_AS(synth::generate(s3), ConfigError);
  DomainSpec s4 = base_spec(19);
  s4.entity_types.clear();
  CHECK_THROWS_AS(synth::generate(s4), ConfigError);
}

TEST_CASE("entity surfaces come from shared gazetteers across domains") {
  // different-mode pair: context diverges, entity inventory stays shared
  DomainSpec src = base_spec(20, 400);
  src.domain_gap = 0.9;
  DomainSpec tgt = base_spec(21, 400);
  tgt.domain_gap = 0.9;
  auto [a, b] = synth::generate_pair(src, tgt, PairMode::different);
  auto entity_set = [](const std::vector<data::TokenSequence>& seqs) {
    std::set<std::string> out;
    for (const auto& s : seqs)
      for (size_t i = 0; i < s.tokens.size(); ++i)
        if (s.tags[i] != "O") out.insert(s.tokens[i]);
    return out;
  };
  const auto ea = entity_set(parse(a));
  const auto eb = entity_set(parse(b));
  std::vector<std::string> inter;
  std::set_intersection(ea.begin(), ea.end(), eb.begin(), eb.end(),
                        std::back_inserter(inter));
  const double jaccard = static_cast<double>(inter.size()) /
                         static_cast<double>(ea.size() + eb.size() - inter.size());
  CHECK(jaccard > 0.8);
}

}  // TEST_SUITE
