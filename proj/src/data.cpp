#include "advner/data.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "advner/errors.hpp"
#include "advner/rng.hpp"

namespace advner::data {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

void strip_cr(std::string& line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
}

// Splits "B-PER" into prefix 'B' and type "PER"; "O" has prefix 'O' and an
// empty type. Throws DataError on anything else.
struct TagParts {
  char prefix;
  std::string type;
};

TagParts parse_tag(const std::string& tag, size_t index, const char* allowed) {
  if (tag == "O") return {'O', ""};
  if (tag.size() >= 3 && tag[1] == '-') {
    const char p = tag[0];
    for (const char* a = allowed; *a; ++a) {
      if (p == *a) return {p, tag.substr(2)};
    }
  }
  throw DataError("malformed tag '" + tag + "' at index " + std::to_string(index));
}

void finish_sentence(std::vector<TokenSequence>& out, TokenSequence& cur,
                     const ParseOptions& opts, int64_t sentence_no) {
  if (cur.tokens.empty()) return;
  const size_t max_len = static_cast<size_t>(opts.max_len);
  if (cur.tokens.size() > max_len) {
    switch (opts.long_policy) {
      case LongSentencePolicy::reject:
        throw DataError("sentence " + std::to_string(sentence_no) + " has " +
                        std::to_string(cur.tokens.size()) +
                        " tokens, exceeding max_len " + std::to_string(opts.max_len));
      case LongSentencePolicy::split: {
        for (size_t off = 0; off < cur.tokens.size(); off += max_len) {
          TokenSequence part;
          part.domain = cur.domain;
          const size_t end = std::min(cur.tokens.size(), off + max_len);
          part.tokens.assign(cur.tokens.begin() + static_cast<long>(off),
                             cur.tokens.begin() + static_cast<long>(end));
          if (!cur.tags.empty())
            part.tags.assign(cur.tags.begin() + static_cast<long>(off),
                             cur.tags.begin() + static_cast<long>(end));
          out.push_back(std::move(part));
        }
        cur = TokenSequence{};
        return;
      }
      case LongSentencePolicy::truncate:
        if (opts.warn) {
          *opts.warn << "warning: truncating sentence " << sentence_no << " from "
                     << cur.tokens.size() << " to " << opts.max_len << " tokens\n";
        }
        cur.tokens.resize(max_len);
        if (!cur.tags.empty()) cur.tags.resize(max_len);
        break;
    }
  }
  out.push_back(std::move(cur));
  cur = TokenSequence{};
}

}  // namespace

int32_t Vocab::tag_id(const std::string& tag) const {
  auto it = tag_to_id.find(tag);
  if (it == tag_to_id.end()) throw DataError("unknown tag '" + tag + "'");
  return it->second;
}

uint64_t Vocab::content_hash() const {
  uint64_t h = 0xcbf29ce484222325ull;
  auto feed = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    h ^= 0x1f;
    h *= 0x100000001b3ull;
  };
  for (const auto& t : id_to_token) feed(t);
  feed("|tags|");
  for (const auto& t : tagset) feed(t);
  return h;
}

std::vector<TokenSequence> parse_conll(std::istream& in, const ParseOptions& opts) {
  std::vector<TokenSequence> out;
  TokenSequence cur;
  std::string line;
  int64_t line_no = 0;
  int64_t sentence_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    auto cols = split_ws(line);
    if (cols.empty()) {
      if (!cur.tokens.empty()) ++sentence_no;
      finish_sentence(out, cur, opts, sentence_no);
      continue;
    }
    if (opts.labeled) {
      if (cols.size() < 2) {
        throw DataError("line " + std::to_string(line_no) +
                        ": expected token and tag columns, got '" + line + "'");
      }
      cur.tokens.push_back(cols.front());
      cur.tags.push_back(cols.back());
    } else {
      cur.tokens.push_back(cols.front());
    }
  }
  if (!cur.tokens.empty()) ++sentence_no;
  finish_sentence(out, cur, opts, sentence_no);
  return out;
}

std::vector<TokenSequence> parse_conll_file(const std::string& path,
                                            const ParseOptions& opts) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CoNLL file: " + path);
  return parse_conll(in, opts);
}

std::vector<std::string> to_iob(const std::vector<std::string>& tags, TagScheme scheme) {
  std::vector<std::string> out;
  out.reserve(tags.size());
  switch (scheme) {
    case TagScheme::iob2:
    case TagScheme::iob1: {
      // IOB1 allows I-X to open an entity; IOB2 requires B-X. Both re-emit as
      // IOB2: a token starts an entity if it is B-tagged or if an I-tag is not
      // a same-type continuation.
      std::string prev_type;
      bool prev_entity = false;
      for (size_t i = 0; i < tags.size(); ++i) {
        const TagParts p = parse_tag(tags[i], i, "BI");
        if (p.prefix == 'O') {
          out.emplace_back("O");
          prev_entity = false;
          prev_type.clear();
          continue;
        }
        const bool cont = p.prefix == 'I' && prev_entity && prev_type == p.type;
        out.push_back((cont ? "I-" : "B-") + p.type);
        prev_entity = true;
        prev_type = p.type;
      }
      break;
    }
    case TagScheme::bilou: {
      for (size_t i = 0; i < tags.size(); ++i) {
        const TagParts p = parse_tag(tags[i], i, "BILU");
        switch (p.prefix) {
          case 'O': out.emplace_back("O"); break;
          case 'B':
          case 'U': out.push_back("B-" + p.type); break;
          case 'I':
          case 'L': out.push_back("I-" + p.type); break;
        }
      }
      break;
    }
    case TagScheme::token_class: {
      // Bare class names per token; adjacent equal classes form one entity.
      std::string prev_type;
      for (size_t i = 0; i < tags.size(); ++i) {
        const std::string& t = tags[i];
        if (t == "O") {
          out.emplace_back("O");
          prev_type.clear();
          continue;
        }
        if (t.empty() || t.find('-') != std::string::npos) {
          throw DataError("malformed class tag '" + t + "' at index " +
                          std::to_string(i));
        }
        out.push_back((t == prev_type ? "I-" : "B-") + t);
        prev_type = t;
      }
      break;
    }
  }
  return out;
}

bool is_valid_iob(const std::vector<std::string>& tags) {
  std::string prev_type;
  bool prev_entity = false;
  for (const auto& tag : tags) {
    if (tag == "O") {
      prev_entity = false;
      prev_type.clear();
      continue;
    }
    if (tag.size() < 3 || tag[1] != '-' || (tag[0] != 'B' && tag[0] != 'I')) return false;
    const std::string type = tag.substr(2);
    if (tag[0] == 'I' && !(prev_entity && prev_type == type)) return false;
    prev_entity = true;
    prev_type = type;
  }
  return true;
}

Vocab build_vocab_union(const std::vector<const std::vector<TokenSequence>*>& corpora,
                        int min_freq) {
  if (min_freq < 1) throw ConfigError("build_vocab: min_freq must be >= 1");
  std::map<std::string, int64_t> freq;
  std::map<std::string, int> tags;
  for (const auto* corpus : corpora) {
    for (const auto& seq : *corpus) {
      for (const auto& tok : seq.tokens) ++freq[tok];
      for (const auto& tag : seq.tags) ++tags[tag];
    }
  }
  Vocab v;
  v.id_to_token = {"<pad>", "<unk>"};
  std::vector<std::pair<std::string, int64_t>> items(freq.begin(), freq.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (const auto& [tok, n] : items) {
    if (n < min_freq) continue;
    v.id_to_token.push_back(tok);
  }
  for (size_t i = 0; i < v.id_to_token.size(); ++i)
    v.token_to_id[v.id_to_token[i]] = static_cast<int32_t>(i);

  v.tagset.emplace_back("O");
  for (const auto& [tag, n] : tags) {
    if (tag != "O") v.tagset.push_back(tag);  // std::map order: lexicographic
  }
  for (size_t i = 0; i < v.tagset.size(); ++i)
    v.tag_to_id[v.tagset[i]] = static_cast<int32_t>(i);
  return v;
}

Vocab build_vocab(const std::vector<TokenSequence>& corpus, int min_freq) {
  return build_vocab_union(std::vector<const std::vector<TokenSequence>*>{&corpus}, min_freq);
}

void assign_ids(std::vector<TokenSequence>& seqs, const Vocab& vocab) {
  for (auto& seq : seqs) {
    seq.token_ids.resize(seq.tokens.size());
    for (size_t i = 0; i < seq.tokens.size(); ++i)
      seq.token_ids[i] = vocab.token_id(seq.tokens[i]);
    if (!seq.tags.empty()) {
      seq.tag_ids.resize(seq.tags.size());
      for (size_t i = 0; i < seq.tags.size(); ++i)
        seq.tag_ids[i] = vocab.tag_id(seq.tags[i]);
    }
  }
}

std::vector<Batch> make_batches(const std::vector<TokenSequence>& seqs,
                                int64_t batch_size, uint64_t seed, bool shuffle) {
  if (batch_size < 1) throw ConfigError("make_batches: batch_size must be >= 1");
  std::vector<int64_t> order(seqs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);
  if (shuffle) {
    SplitMix64 rng(seed);
    for (size_t i = order.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(rng.below(i));
      std::swap(order[i - 1], order[j]);
    }
  }
  std::vector<Batch> out;
  for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(order.size(), start + static_cast<size_t>(batch_size));
    Batch b;
    b.rows = static_cast<int64_t>(end - start);
    int64_t maxlen = 1;
    bool any_tags = false;
    for (size_t r = start; r < end; ++r) {
      const auto& s = seqs[static_cast<size_t>(order[r])];
      maxlen = std::max(maxlen, static_cast<int64_t>(s.tokens.size()));
      any_tags = any_tags || !s.tag_ids.empty();
    }
    b.len = maxlen;
    b.tokens.assign(static_cast<size_t>(b.rows * b.len), Vocab::kPad);
    b.mask.assign(static_cast<size_t>(b.rows * b.len), 0);
    if (any_tags) b.tags.assign(static_cast<size_t>(b.rows * b.len), -1);
    for (size_t r = start; r < end; ++r) {
      const int64_t row = static_cast<int64_t>(r - start);
      const auto& s = seqs[static_cast<size_t>(order[r])];
      if (s.token_ids.size() != s.tokens.size()) {
        throw ContractError("make_batches: sequence " + std::to_string(order[r]) +
                            " has no token ids; call assign_ids first");
      }
      if (any_tags && s.tag_ids.empty()) {
        throw ContractError("make_batches: mixed labeled/unlabeled sequences in batch");
      }
      for (size_t i = 0; i < s.token_ids.size(); ++i) {
        b.tokens[static_cast<size_t>(row * b.len) + i] = s.token_ids[i];
        b.mask[static_cast<size_t>(row * b.len) + i] = 1;
        if (any_tags) b.tags[static_cast<size_t>(row * b.len) + i] = s.tag_ids[i];
      }
      b.domain.push_back(s.domain);
      b.seq_index.push_back(order[r]);
    }
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<TokenSequence> load_unlabeled(std::istream& in, bool conll_format,
                                          const ParseOptions& opts) {
  ParseOptions local = opts;
  local.labeled = false;
  std::vector<TokenSequence> out;
  if (conll_format) {
    out = parse_conll(in, local);
  } else {
    std::string line;
    int64_t sentence_no = 0;
    while (std::getline(in, line)) {
      strip_cr(line);
      auto toks = split_ws(line);
      if (toks.empty()) continue;
      TokenSequence seq;
      seq.tokens = std::move(toks);
      ++sentence_no;
      finish_sentence(out, seq, local, sentence_no);
    }
  }
  for (auto& seq : out) seq.domain = Domain::target;
  return out;
}

std::vector<TokenSequence> load_unlabeled_file(const std::string& path,
                                               bool conll_format,
                                               const ParseOptions& opts) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file: " + path);
  return load_unlabeled(in, conll_format, opts);
}

}  // namespace advner::data
