#include "advner/metrics.hpp"

#include <algorithm>

#include "advner/errors.hpp"

namespace advner::metrics {

namespace {

struct Prefixed {
  char prefix = 'O';
  std::string type;
};

// Evaluation-time tag reading is permissive: anything unparseable counts as O.
Prefixed read_tag(const std::string& tag) {
  if (tag.size() >= 3 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-')
    return {tag[0], tag.substr(2)};
  return {'O', ""};
}

double ratio(int64_t num, int64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double f1_of(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

}  // namespace

std::vector<EntitySpan> extract_entities(const std::vector<std::string>& tags) {
  std::vector<EntitySpan> spans;
  std::string open_type;
  int64_t open_start = -1;
  auto close = [&](int64_t end) {
    if (open_start >= 0) spans.push_back({open_type, open_start, end});
    open_start = -1;
    open_type.clear();
  };
  for (int64_t i = 0; i < static_cast<int64_t>(tags.size()); ++i) {
    const Prefixed t = read_tag(tags[static_cast<size_t>(i)]);
    if (t.prefix == 'O') {
      close(i);
    } else if (t.prefix == 'B') {
      close(i);
      open_type = t.type;
      open_start = i;
    } else {  // I: continue same-type run, otherwise start one (repair)
      if (open_start < 0 || open_type != t.type) {
        close(i);
        open_type = t.type;
        open_start = i;
      }
    }
  }
  close(static_cast<int64_t>(tags.size()));
  return spans;
}

Metrics prf1(const std::vector<std::vector<std::string>>& pred,
             const std::vector<std::vector<std::string>>& gold) {
  if (pred.size() != gold.size()) {
    throw ContractError("prf1: pred has " + std::to_string(pred.size()) +
                        " sentences, gold has " + std::to_string(gold.size()));
  }
  Metrics m;
  for (size_t s = 0; s < pred.size(); ++s) {
    if (pred[s].size() != gold[s].size()) {
      throw ContractError("prf1: length mismatch at sentence " + std::to_string(s) +
                          " (" + std::to_string(pred[s].size()) + " vs " +
                          std::to_string(gold[s].size()) + ")");
    }
    auto p_spans = extract_entities(pred[s]);
    auto g_spans = extract_entities(gold[s]);
    std::sort(p_spans.begin(), p_spans.end());
    std::sort(g_spans.begin(), g_spans.end());
    // set intersection on sorted unique spans (extraction cannot produce
    // duplicates within a sentence)
    size_t i = 0, j = 0;
    while (i < p_spans.size() || j < g_spans.size()) {
      if (i < p_spans.size() && j < g_spans.size() && p_spans[i] == g_spans[j]) {
        ++m.tp;
        ++m.per_type[p_spans[i].type].tp;
        ++i;
        ++j;
      } else if (j == g_spans.size() ||
                 (i < p_spans.size() && p_spans[i] < g_spans[j])) {
        ++m.fp;
        ++m.per_type[p_spans[i].type].fp;
        ++i;
      } else {
        ++m.fn;
        ++m.per_type[g_spans[j].type].fn;
        ++j;
      }
    }
  }
  m.precision = ratio(m.tp, m.tp + m.fp);
  m.recall = ratio(m.tp, m.tp + m.fn);
  m.f1 = f1_of(m.precision, m.recall);
  for (auto& [type, t] : m.per_type) {
    t.precision = ratio(t.tp, t.tp + t.fp);
    t.recall = ratio(t.tp, t.tp + t.fn);
    t.f1 = f1_of(t.precision, t.recall);
  }
  return m;
}

double domain_accuracy(const std::vector<float>& logits,
                       const std::vector<data::Domain>& gold) {
  if (gold.empty() || logits.size() != gold.size() * 2) {
    throw ContractError("domain_accuracy: expected nonempty [n x 2] logits");
  }
  int64_t correct = 0;
  for (size_t r = 0; r < gold.size(); ++r) {
    const int pred = logits[2 * r + 1] > logits[2 * r] ? 1 : 0;  // tie -> source
    const int want = gold[r] == data::Domain::target ? 1 : 0;
    correct += pred == want;
  }
  return static_cast<double>(correct) / static_cast<double>(gold.size());
}

std::map<std::string, double> flatten(const Metrics& m) {
  std::map<std::string, double> out;
  out["precision"] = m.precision;
  out["recall"] = m.recall;
  out["f1"] = m.f1;
  out["tp"] = static_cast<double>(m.tp);
  out["fp"] = static_cast<double>(m.fp);
  out["fn"] = static_cast<double>(m.fn);
  for (const auto& [type, t] : m.per_type) {
    out["per_type." + type + ".precision"] = t.precision;
    out["per_type." + type + ".recall"] = t.recall;
    out["per_type." + type + ".f1"] = t.f1;
  }
  return out;
}

}  // namespace advner::metrics
