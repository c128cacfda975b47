#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "vslam/common/types.hpp"
#include "vslam/imgproc/brief.hpp"

namespace vslam {

using WordId = int;

// Sparse tf-idf weights, L1-normalized.
using BowSignature = std::map<WordId, double>;

// 1 - |a - b|_1 / 2, which for L1-normalized signatures is the sum of the
// per-word minima.
double BowSimilarity(const BowSignature& a, const BowSignature& b);

struct VocabularyOptions {
  int branching = 10;
  int max_leaf_size = 150;
  int kmedians_iterations = 10;
  std::uint64_t seed = 1;
};

// Hierarchical binary vocabulary grown online: descriptors accumulate in
// leaves, and a leaf holding more than max_leaf_size descriptors is split
// into `branching` children by k-medians over Hamming distance. Every
// inserted descriptor stays stored, so splits keep the inverted index
// exact.
class VocabularyTree {
 public:
  explicit VocabularyTree(const VocabularyOptions& options = {});

  // Inserts the descriptors of a new keyframe and indexes it.
  void AddKeyframe(KeyframeId kf, const std::vector<BriefDescriptor>& descriptors);
  bool HasKeyframe(KeyframeId kf) const { return kf_words_.count(kf) > 0; }

  // Leaf word of a descriptor.
  WordId Lookup(const BriefDescriptor& d) const;

  // Signature of an indexed keyframe under the current idf.
  BowSignature Signature(KeyframeId kf) const;
  // Signature of an arbitrary descriptor set (not inserted).
  BowSignature Transform(const std::vector<BriefDescriptor>& descriptors) const;

  // Similarity of the signature against every indexed keyframe sharing a
  // word with it.
  std::map<KeyframeId, double> Score(const BowSignature& s) const;

  double Idf(WordId w) const;
  std::size_t NumKeyframes() const { return kf_words_.size(); }
  std::size_t NumWords() const;
  std::size_t NumDescriptors() const { return num_descriptors_; }
  // word -> (keyframe -> number of its descriptors in the word).
  const std::map<WordId, std::map<KeyframeId, int>>& inverted_index() const { return inverted_; }
  // Descriptors stored in a leaf with their keyframe.
  const std::vector<std::pair<BriefDescriptor, KeyframeId>>& LeafDescriptors(WordId w) const;

 private:
  struct Node {
    BriefDescriptor center;
    std::vector<int> children;
    std::vector<std::pair<BriefDescriptor, KeyframeId>> descriptors;  // leaves only
    bool splittable = true;
  };

  void Split(int node);
  BowSignature Weigh(const std::map<WordId, int>& counts) const;

  VocabularyOptions options_;
  std::vector<Node> nodes_;
  std::map<WordId, std::map<KeyframeId, int>> inverted_;
  std::map<KeyframeId, std::map<WordId, int>> kf_words_;
  std::size_t num_descriptors_ = 0;
};

struct LoopDetectorOptions {
  VocabularyOptions vocabulary;
  int temporal_window = 20;        // most recent keyframes never proposed
  double min_score_ratio = 0.3;    // of the best score inside the window
  double min_score = 0.0;          // absolute floor on the candidate score
  int island_radius = 5;           // keyframe ids grouped around a candidate
  int consistent_queries = 2;      // consecutive queries agreeing on an island
};

struct LoopQuery {
  // Unmasked keyframes by decreasing score (ties: lower id first).
  std::vector<std::pair<KeyframeId, double>> ranked;
  double recent_best = 0.0;
  // Top candidate passing the score gate and the temporal consistency.
  std::optional<KeyframeId> candidate;
};

// Vocabulary plus the candidate gating: temporal mask, score ratio against
// the recent keyframes and consistency over consecutive queries.
class LoopDetector {
 public:
  explicit LoopDetector(const LoopDetectorOptions& options = {});

  LoopQuery UpdateAndQuery(KeyframeId kf, const std::vector<BriefDescriptor>& descriptors);
  const VocabularyTree& vocabulary() const { return tree_; }
  // Forgets the consistency history (after a closure).
  void ResetConsistency() { history_.clear(); }

 private:
  LoopDetectorOptions options_;
  VocabularyTree tree_;
  std::vector<KeyframeId> order_;  // indexed keyframes in insertion order
  // Gated top candidate of each recent query (empty when none passed).
  std::vector<std::optional<KeyframeId>> history_;
};

}  // namespace vslam
