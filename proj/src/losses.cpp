#include "advner/losses.hpp"

#include "advner/errors.hpp"

namespace advner::losses {

ad::NodeId ner_loss(ad::Tape& tape, ad::NodeId logits, const std::vector<int32_t>& tags,
                    const std::vector<int32_t>& mask) {
  return tape.nll_masked(logits, tags, mask);
}

ad::NodeId domain_loss(ad::Tape& tape, ad::NodeId src_logits,
                       std::optional<ad::NodeId> tgt_logits) {
  const int64_t b_s = tape.value(src_logits).shape.dim(0);
  if (b_s < 1) throw ContractError("domain_loss: empty source batch");
  const std::vector<int32_t> src_labels(static_cast<size_t>(b_s), 0);
  ad::NodeId src_sum = tape.nll_rows(src_logits, src_labels);
  if (!tgt_logits) {
    return tape.scale(src_sum, 1.0 / static_cast<double>(b_s));
  }
  const int64_t b_t = tape.value(*tgt_logits).shape.dim(0);
  if (b_t < 1) throw ContractError("domain_loss: empty target batch");
  const std::vector<int32_t> tgt_labels(static_cast<size_t>(b_t), 1);
  ad::NodeId tgt_sum = tape.nll_rows(*tgt_logits, tgt_labels);
  return tape.scale(tape.add(src_sum, tgt_sum), 1.0 / static_cast<double>(b_s + b_t));
}

ad::NodeId total_loss(ad::Tape& tape, ad::NodeId l_ner, ad::NodeId l_adv, double alpha) {
  if (alpha < 0.0) {
    throw ConfigError("total_loss: alpha must be >= 0, got " + std::to_string(alpha));
  }
  return tape.add(l_ner, tape.scale(l_adv, alpha));
}

}  // namespace advner::losses
