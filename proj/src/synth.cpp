#include "advner/synth.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "advner/errors.hpp"
#include "advner/rng.hpp"

namespace advner::synth {

namespace {

const char* kConsonants[] = {"b", "d", "f", "g", "k", "l", "m",
                             "n", "p", "r", "s", "t", "v", "z"};
const char* kVowels[] = {"a", "e", "i", "o", "u", "ou"};

std::string syllable_word(SplitMix64& rng, int64_t syllables) {
  std::string w;
  for (int64_t s = 0; s < syllables; ++s) {
    w += kConsonants[rng.below(14)];
    w += kVowels[rng.below(6)];
  }
  return w;
}

// size unique pseudo-words, none of them in forbidden; deterministic in seed.
std::vector<std::string> make_pool(uint64_t seed, int64_t size,
                                   const std::set<std::string>& forbidden) {
  SplitMix64 rng(seed);
  std::set<std::string> seen;
  std::vector<std::string> out;
  int64_t guard = 0;
  while (static_cast<int64_t>(out.size()) < size) {
    if (++guard > size * 1000 + 10000) {
      throw ConfigError("synth: word pool exhausted; pools too large for word space");
    }
    std::string w = syllable_word(rng, 3 + static_cast<int64_t>(rng.below(2)));
    if (forbidden.count(w) || seen.count(w)) continue;
    seen.insert(w);
    out.push_back(std::move(w));
  }
  return out;
}

std::string capitalize(std::string w) {
  if (!w.empty()) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
  return w;
}

struct Pools {
  std::vector<std::string> shared_context;
  std::vector<std::vector<std::string>> shared_triggers;  // per type index
  // one component per private pool (mixed mode has several)
  std::vector<std::vector<std::string>> private_context;
  std::vector<std::vector<std::vector<std::string>>> private_triggers;
  std::vector<std::vector<std::string>> gazetteers;  // per type index
};

void build_private_component(uint64_t priv_seed, const DomainSpec& spec,
                             std::set<std::string>& forbidden, Pools& pools) {
  auto ctx = make_pool(mix64(priv_seed, 1), spec.private_pool_size, forbidden);
  forbidden.insert(ctx.begin(), ctx.end());
  std::vector<std::vector<std::string>> trig;
  for (size_t t = 0; t < spec.entity_types.size(); ++t) {
    auto words = make_pool(mix64(priv_seed, 100 + t), spec.triggers_per_type, forbidden);
    forbidden.insert(words.begin(), words.end());
    trig.push_back(std::move(words));
  }
  pools.private_context.push_back(std::move(ctx));
  pools.private_triggers.push_back(std::move(trig));
}

Pools build_pools(const DomainSpec& spec) {
  Pools pools;
  std::set<std::string> forbidden;

  pools.shared_context = make_pool(mix64(spec.shared_pool_seed, 1),
                                   spec.shared_pool_size, forbidden);
  forbidden.insert(pools.shared_context.begin(), pools.shared_context.end());
  for (size_t t = 0; t < spec.entity_types.size(); ++t) {
    auto words =
        make_pool(mix64(spec.shared_pool_seed, 100 + t), spec.triggers_per_type,
                  forbidden);
    forbidden.insert(words.begin(), words.end());
    pools.shared_triggers.push_back(std::move(words));
  }

  // gazetteers: a per-type unique part plus an ambiguous slice shared by all
  // types, capitalized for a surface-shape cue
  const int64_t ambiguous =
      static_cast<int64_t>(spec.ambiguous_fraction * static_cast<double>(spec.gazetteer_size));
  const int64_t unique = spec.gazetteer_size - ambiguous;
  auto ambiguous_pool = make_pool(mix64(spec.gazetteer_seed, 300), ambiguous, forbidden);
  forbidden.insert(ambiguous_pool.begin(), ambiguous_pool.end());
  for (size_t t = 0; t < spec.entity_types.size(); ++t) {
    auto words = make_pool(mix64(spec.gazetteer_seed, 200 + t), unique, forbidden);
    forbidden.insert(words.begin(), words.end());
    std::vector<std::string> gaz;
    for (auto& w : words) gaz.push_back(capitalize(w));
    for (auto& w : ambiguous_pool) gaz.push_back(capitalize(w));
    pools.gazetteers.push_back(std::move(gaz));
  }

  // the disjoint-from pool is built (and forbidden) before this domain's own
  if (spec.disjoint_from_private_seed != 0) {
    Pools scratch;
    std::set<std::string> forbid_copy = forbidden;
    build_private_component(spec.disjoint_from_private_seed, spec, forbid_copy, scratch);
    for (const auto& w : scratch.private_context[0]) forbidden.insert(w);
    for (const auto& tw : scratch.private_triggers[0])
      forbidden.insert(tw.begin(), tw.end());
  }

  if (spec.mixture_private_seeds.empty()) {
    build_private_component(spec.resolved_private_seed(), spec, forbidden, pools);
  } else {
    for (uint64_t s : spec.mixture_private_seeds)
      build_private_component(s, spec, forbidden, pools);
  }
  return pools;
}

void apply_noise(std::string& w, SplitMix64& rng) {
  static const char letters[] = "abcdefghijklmnopqrstuvwxyz";
  if (w.empty()) return;
  const size_t pos = static_cast<size_t>(rng.below(w.size()));
  w[pos] = letters[rng.below(26)];
}

}  // namespace

uint64_t DomainSpec::resolved_private_seed() const {
  return private_pool_seed != 0 ? private_pool_seed : mix64(seed, 0x70726976);
}

void DomainSpec::validate() const {
  if (n_sentences < 1) throw ConfigError("synth: n_sentences must be >= 1");
  if (min_len < 1 || max_len < min_len)
    throw ConfigError("synth: need 1 <= min_len <= max_len");
  if (entity_types.empty()) throw ConfigError("synth: entity_types must be nonempty");
  if (!(entity_density >= 0.0 && entity_density < 1.0))
    throw ConfigError("synth: entity_density must be in [0,1)");
  if (shared_pool_size < 1 || private_pool_size < 1 || gazetteer_size < 1 ||
      triggers_per_type < 1)
    throw ConfigError("synth: word pools must be nonempty");
  if (!(domain_gap >= 0.0 && domain_gap <= 1.0))
    throw ConfigError("synth: domain_gap must be in [0,1]");
  if (!(noise_rate >= 0.0 && noise_rate < 1.0))
    throw ConfigError("synth: noise_rate must be in [0,1)");
  if (!(ambiguous_fraction >= 0.0 && ambiguous_fraction < 1.0))
    throw ConfigError("synth: ambiguous_fraction must be in [0,1)");
  if (!(trigger_rate >= 0.0 && trigger_rate <= 1.0))
    throw ConfigError("synth: trigger_rate must be in [0,1]");
}

PairMode pair_mode_from_string(const std::string& s) {
  if (s == "same") return PairMode::same;
  if (s == "different") return PairMode::different;
  if (s == "mixed") return PairMode::mixed;
  throw ConfigError("synth: unknown pair mode '" + s + "'");
}

std::string to_string(PairMode mode) {
  switch (mode) {
    case PairMode::same: return "same";
    case PairMode::different: return "different";
    case PairMode::mixed: return "mixed";
  }
  return "?";
}

std::string generate(const DomainSpec& spec) {
  spec.validate();
  const Pools pools = build_pools(spec);
  SplitMix64 rng(spec.seed);
  std::ostringstream out;

  const size_t n_components = pools.private_context.size();
  const size_t n_types = spec.entity_types.size();
  const double q = spec.trigger_rate;

  for (int64_t s = 0; s < spec.n_sentences; ++s) {
    const int64_t len =
        spec.min_len + static_cast<int64_t>(rng.below(
                           static_cast<uint64_t>(spec.max_len - spec.min_len + 1)));
    const size_t component = n_components == 1 ? 0 : rng.below(n_components);
    std::vector<std::string> tokens, tags;
    while (static_cast<int64_t>(tokens.size()) < len) {
      const int64_t remaining = len - static_cast<int64_t>(tokens.size());
      // per-position start probability chosen so the expected fraction of
      // entity tokens matches entity_density despite triggers and truncation
      const double q_here = remaining >= 2 ? q : 0.0;
      const int64_t room_est = remaining - (q_here > 0 ? 1 : 0);
      const double mean_elen =
          0.6 * static_cast<double>(std::min<int64_t>(1, room_est)) +
          0.3 * static_cast<double>(std::min<int64_t>(2, room_est)) +
          0.1 * static_cast<double>(std::min<int64_t>(3, room_est));
      const double d = spec.entity_density;
      const double denom = mean_elen - d * (mean_elen + q_here - 1.0);
      const double p_start = denom > 0 ? d / denom : 0.0;

      if (rng.uniform() < p_start) {
        const size_t type = rng.below(n_types);
        const bool with_trigger = q_here > 0 && rng.uniform() < q;
        if (with_trigger) {
          const bool private_side = rng.uniform() < spec.domain_gap;
          const auto& trig = private_side ? pools.private_triggers[component][type]
                                          : pools.shared_triggers[type];
          std::string w = trig[rng.below(trig.size())];
          if (spec.noise_rate > 0.0 && rng.uniform() < spec.noise_rate)
            apply_noise(w, rng);
          tokens.push_back(std::move(w));
          tags.emplace_back("O");
        }
        const int64_t room = len - static_cast<int64_t>(tokens.size());
        const double u = rng.uniform();
        int64_t elen = u < 0.6 ? 1 : (u < 0.9 ? 2 : 3);
        elen = std::min(elen, room);
        const auto& gaz = pools.gazetteers[type];
        for (int64_t e = 0; e < elen; ++e) {
          tokens.push_back(gaz[rng.below(gaz.size())]);
          tags.emplace_back(e == 0 ? "B-" + spec.entity_types[type]
                                   : "I-" + spec.entity_types[type]);
        }
      } else {
        const bool private_side = rng.uniform() < spec.domain_gap;
        const auto& ctx = private_side ? pools.private_context[component]
                                       : pools.shared_context;
        std::string w = ctx[rng.below(ctx.size())];
        if (spec.noise_rate > 0.0 && rng.uniform() < spec.noise_rate)
          apply_noise(w, rng);
        tokens.push_back(std::move(w));
        tags.emplace_back("O");
      }
    }
    for (size_t i = 0; i < tokens.size(); ++i)
      out << tokens[i] << "\t" << tags[i] << "\n";
    out << "\n";
  }
  return out.str();
}

std::pair<DomainSpec, DomainSpec> resolve_pair_specs(const DomainSpec& source,
                                                     DomainSpec target, PairMode mode) {
  if (source.entity_types != target.entity_types) {
    throw ConfigError("generate_pair: source and target entity type sets must match");
  }
  target.shared_pool_seed = source.shared_pool_seed;
  target.gazetteer_seed = source.gazetteer_seed;
  target.mixture_private_seeds.clear();
  target.disjoint_from_private_seed = 0;
  switch (mode) {
    case PairMode::same:
      target.private_pool_seed = source.resolved_private_seed();
      target.domain_gap = source.domain_gap;
      break;
    case PairMode::different:
      if (target.resolved_private_seed() == source.resolved_private_seed())
        target.private_pool_seed = mix64(target.resolved_private_seed(), 0xd1ff);
      target.disjoint_from_private_seed = source.resolved_private_seed();
      break;
    case PairMode::mixed:
      target.mixture_private_seeds = {source.resolved_private_seed(),
                                      mix64(target.resolved_private_seed(), 2),
                                      mix64(target.resolved_private_seed(), 3)};
      break;
  }
  return {source, target};
}

std::pair<std::string, std::string> generate_pair(const DomainSpec& source,
                                                  DomainSpec target, PairMode mode) {
  auto [s, t] = resolve_pair_specs(source, std::move(target), mode);
  return {generate(s), generate(t)};
}

double context_jaccard(const std::vector<data::TokenSequence>& a,
                       const std::vector<data::TokenSequence>& b) {
  auto context_set = [](const std::vector<data::TokenSequence>& seqs) {
    std::set<std::string> out;
    for (const auto& s : seqs) {
      for (size_t i = 0; i < s.tokens.size(); ++i) {
        if (i < s.tags.size() && s.tags[i] == "O") out.insert(s.tokens[i]);
      }
    }
    return out;
  };
  const auto sa = context_set(a);
  const auto sb = context_set(b);
  std::vector<std::string> inter;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(),
                        std::back_inserter(inter));
  const size_t uni = sa.size() + sb.size() - inter.size();
  return uni == 0 ? 0.0 : static_cast<double>(inter.size()) / static_cast<double>(uni);
}

}  // namespace advner::synth
