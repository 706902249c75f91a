#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace advner::data {

enum class Domain { source, target };

// One sentence: surface tokens, optional aligned IOB tags, and (after
// numericalization against a Vocab) the id views of both.
struct TokenSequence {
  std::vector<std::string> tokens;
  std::vector<int32_t> token_ids;
  std::vector<std::string> tags;     // empty when unlabeled
  std::vector<int32_t> tag_ids;      // empty when unlabeled
  Domain domain = Domain::source;
};

// Token and tag inventories. Token ids are dense: 0 = PAD, 1 = UNK, then
// corpus tokens ordered by (frequency desc, token asc). Tagset keeps O first.
struct Vocab {
  static constexpr int32_t kPad = 0;
  static constexpr int32_t kUnk = 1;

  std::vector<std::string> id_to_token;  // includes <pad>, <unk>
  std::unordered_map<std::string, int32_t> token_to_id;
  std::vector<std::string> tagset;
  std::unordered_map<std::string, int32_t> tag_to_id;

  int32_t token_id(const std::string& tok) const {
    auto it = token_to_id.find(tok);
    return it == token_to_id.end() ? kUnk : it->second;
  }
  int32_t tag_id(const std::string& tag) const;  // throws DataError if unknown
  int64_t size() const { return static_cast<int64_t>(id_to_token.size()); }
  int64_t n_tags() const { return static_cast<int64_t>(tagset.size()); }
  uint64_t content_hash() const;
};

// Padded batch. Row-major [rows x len]; mask is 1 exactly at real positions.
struct Batch {
  int64_t rows = 0;
  int64_t len = 0;
  std::vector<int32_t> tokens;     // PAD-filled
  std::vector<int32_t> mask;
  std::vector<int32_t> tags;       // empty when unlabeled; -1 at pad positions
  std::vector<Domain> domain;      // per row
  std::vector<int64_t> seq_index;  // position of each row in the source corpus
  bool has_tags() const { return !tags.empty(); }
};

enum class TagScheme { iob1, iob2, bilou, token_class };

enum class LongSentencePolicy { truncate, split, reject };

struct ParseOptions {
  bool labeled = true;
  int max_len = 128;
  LongSentencePolicy long_policy = LongSentencePolicy::truncate;
  std::ostream* warn = nullptr;  // truncation warnings, if anyone listens
};

// CoNLL column format: one token per line, whitespace-separated columns, tag
// in the last column, blank line between sentences. CRLF tolerated.
std::vector<TokenSequence> parse_conll(std::istream& in, const ParseOptions& opts = {});
std::vector<TokenSequence> parse_conll_file(const std::string& path,
                                            const ParseOptions& opts = {});

// Convert a tag sequence in the given scheme to IOB2 (every entity starts
// with B-). Deterministic; output always satisfies the IOB grammar.
std::vector<std::string> to_iob(const std::vector<std::string>& tags, TagScheme scheme);

// True iff tags satisfy the IOB2 grammar: O | B-X | I-X with I-X only after
// B-X or I-X of the same type.
bool is_valid_iob(const std::vector<std::string>& tags);

// Vocabulary over one or more corpora (the union across corpora is the
// default training setup). Tokens below min_freq map to UNK.
Vocab build_vocab_union(const std::vector<const std::vector<TokenSequence>*>& corpora,
                        int min_freq = 1);
Vocab build_vocab(const std::vector<TokenSequence>& corpus, int min_freq = 1);

// Fill token_ids (and tag_ids when tags are present) from the vocab.
void assign_ids(std::vector<TokenSequence>& seqs, const Vocab& vocab);

// Every sequence appears exactly once; padding to the per-batch max length;
// shuffle applies a deterministic permutation of the seed.
std::vector<Batch> make_batches(const std::vector<TokenSequence>& seqs,
                                int64_t batch_size, uint64_t seed, bool shuffle);

// Unlabeled corpus: plain text, one sentence per line, whitespace tokens;
// or CoNLL with tags dropped when conll_format is set. Empty lines skipped.
std::vector<TokenSequence> load_unlabeled(std::istream& in, bool conll_format = false,
                                          const ParseOptions& opts = {});
std::vector<TokenSequence> load_unlabeled_file(const std::string& path,
                                               bool conll_format = false,
                                               const ParseOptions& opts = {});

}  // namespace advner::data
