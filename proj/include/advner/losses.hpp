#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "advner/tape.hpp"

namespace advner::losses {

// Per-step loss report: the token-level NER term, the source+target domain
// term, their weighted total (l_total = l_ner + alpha * l_adv), and the batch
// composition it was computed over.
struct LossBreakdown {
  double l_ner = 0.0;
  double l_adv = 0.0;
  double l_total = 0.0;
  double alpha = 0.0;
  int64_t n_source_tokens = 0;
  int64_t n_source_seqs = 0;
  int64_t n_target_seqs = 0;
};

// Mean over real (mask==1) token positions of -log softmax(logits)[gold tag].
// Padded positions contribute nothing. Throws DataError when a tag id is out
// of range.
ad::NodeId ner_loss(ad::Tape& tape, ad::NodeId logits,
                    const std::vector<int32_t>& tags, const std::vector<int32_t>& mask);

// Mean NLL over source rows (gold class 0) and target rows (gold class 1),
// averaged over all b_s + b_t rows. tgt_logits may be absent (baseline mode):
// the loss is then the source term alone.
ad::NodeId domain_loss(ad::Tape& tape, ad::NodeId src_logits,
                       std::optional<ad::NodeId> tgt_logits);

// l_ner + alpha * l_adv as a tape scalar. Negative alpha is a config error.
ad::NodeId total_loss(ad::Tape& tape, ad::NodeId l_ner, ad::NodeId l_adv, double alpha);

}  // namespace advner::losses
