#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "advner/data.hpp"

namespace advner::metrics {

// Typed entity span, [start, end) in token positions.
struct EntitySpan {
  std::string type;
  int64_t start = 0;
  int64_t end = 0;
  auto operator<=>(const EntitySpan&) const = default;
};

struct PerTypeMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int64_t tp = 0, fp = 0, fn = 0;
};

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int64_t tp = 0, fp = 0, fn = 0;
  std::map<std::string, PerTypeMetrics> per_type;
};

// Extract maximal B-X (I-X)* runs as spans. Ill-formed sequences are repaired
// rather than rejected: an orphan I-X (not continuing a same-type entity)
// starts a new span, matching conlleval.
std::vector<EntitySpan> extract_entities(const std::vector<std::string>& tags);

// Entity-level exact-match scoring (type and both boundaries), micro-averaged,
// with a per-type breakdown. 0/0 divisions yield 0.
Metrics prf1(const std::vector<std::vector<std::string>>& pred,
             const std::vector<std::vector<std::string>>& gold);

// Fraction of rows whose argmax matches the gold domain; argmax ties break to
// class 0 (source).
double domain_accuracy(const std::vector<float>& logits /* [n x 2] row-major */,
                       const std::vector<data::Domain>& gold);

// Flat key-value view ("precision", "per_type.PER.f1", ...) for reports.
std::map<std::string, double> flatten(const Metrics& m);

}  // namespace advner::metrics
