#include "mscd/losses.hpp"

namespace mscd {

std::string_view tag_name(LossTag tag) {
  switch (tag) {
    case LossTag::Joint: return "L1+L2";
    case LossTag::Cluster1: return "L1";
    case LossTag::Cluster2: return "L2";
    case LossTag::Temporal: return "L12";
    case LossTag::Contrastive: return "L12c";
    case LossTag::Aggregate: return "L1+L12+L12c";
    case LossTag::Cluster12Mean: return "L1L2mean";
  }
  return "?";
}

std::vector<std::size_t> shuffle_batch(std::size_t batch, Rng& rng) {
  if (batch < 1) throw Error("shuffle_batch needs at least one patch");
  return rng.permutation(batch);
}

std::vector<std::int64_t> cluster_usage(const PseudoLabelMap& labels, Index clusters) {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(clusters), 0);
  for (auto label : labels.labels) {
    if (label < 0 || label >= clusters) throw Error("pseudo-label out of range");
    ++counts[static_cast<std::size_t>(label)];
  }
  return counts;
}

}  // namespace mscd
