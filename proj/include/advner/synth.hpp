#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "advner/data.hpp"

namespace advner::synth {

// Generator parameters for one synthetic domain. Context words come from a
// shared pool (common to both domains when the shared seed matches) and a
// domain-private pool; domain_gap is the probability a context token draws
// from the private side. Entity surfaces come from per-type gazetteers built
// from gazetteer_seed, so two domains with the same gazetteer seed share
// their entity inventory: that is the domain-invariant signal a feature
// extractor can latch onto. A slice of every gazetteer is shared across
// types (ambiguous) so that type decisions need context; each type has
// trigger words, split shared/private like the context pools.
struct DomainSpec {
  uint64_t seed = 1;
  int64_t n_sentences = 1000;
  int64_t min_len = 6;
  int64_t max_len = 18;
  std::vector<std::string> entity_types = {"PER", "LOC", "ORG"};
  double entity_density = 0.25;  // target fraction of entity tokens
  int64_t shared_pool_size = 200;
  int64_t private_pool_size = 400;
  uint64_t shared_pool_seed = 0x5a11;
  uint64_t gazetteer_seed = 0x9a22;
  uint64_t private_pool_seed = 0;  // 0 -> derived from seed
  double domain_gap = 0.5;
  double noise_rate = 0.0;  // char substitutions on context tokens only
  int64_t gazetteer_size = 60;  // per type
  double ambiguous_fraction = 0.3;
  int64_t triggers_per_type = 4;
  double trigger_rate = 0.7;
  // mixed-mode target: per-sentence choice among these private pools (the
  // first is conventionally the source domain's)
  std::vector<uint64_t> mixture_private_seeds;
  // different-mode target: private pool built disjoint from this domain's
  uint64_t disjoint_from_private_seed = 0;

  uint64_t resolved_private_seed() const;
  void validate() const;  // throws ConfigError
};

enum class PairMode { same, different, mixed };

PairMode pair_mode_from_string(const std::string& s);  // throws ConfigError
std::string to_string(PairMode mode);

// Deterministic CoNLL text (token TAB tag, blank line between sentences).
std::string generate(const DomainSpec& spec);

// Adjust the target spec for the requested relationship to the source:
//   same      -> target reuses the source's private pool and gap
//   different -> disjoint private pools (target avoids source's words)
//   mixed     -> target draws each sentence from several private pools,
//                the source's among them
std::pair<DomainSpec, DomainSpec> resolve_pair_specs(const DomainSpec& source,
                                                     DomainSpec target, PairMode mode);

std::pair<std::string, std::string> generate_pair(const DomainSpec& source,
                                                  DomainSpec target, PairMode mode);

// Jaccard overlap of the context-token (O-tagged) vocabularies.
double context_jaccard(const std::vector<data::TokenSequence>& a,
                       const std::vector<data::TokenSequence>& b);

}  // namespace advner::synth
