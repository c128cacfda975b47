#include "vslam/loopclosing/vocabulary.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vslam/common/random.hpp"

namespace vslam {

double BowSimilarity(const BowSignature& a, const BowSignature& b) {
  double s = 0.0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      s += std::min(ia->second, ib->second);
      ++ia;
      ++ib;
    }
  }
  return s;
}

VocabularyTree::VocabularyTree(const VocabularyOptions& options) : options_(options) {
  nodes_.emplace_back();
}

WordId VocabularyTree::Lookup(const BriefDescriptor& d) const {
  int n = 0;
  while (!nodes_[n].children.empty()) {
    int best = nodes_[n].children.front();
    int best_dist = std::numeric_limits<int>::max();
    for (int c : nodes_[n].children) {
      const int dist = HammingDistance(d, nodes_[c].center);
      if (dist < best_dist) {
        best_dist = dist;
        best = c;
      }
    }
    n = best;
  }
  return n;
}

void VocabularyTree::AddKeyframe(KeyframeId kf, const std::vector<BriefDescriptor>& descriptors) {
  auto& words = kf_words_[kf];
  std::vector<int> touched;
  for (const BriefDescriptor& d : descriptors) {
    const WordId w = Lookup(d);
    nodes_[w].descriptors.emplace_back(d, kf);
    ++words[w];
    ++inverted_[w][kf];
    touched.push_back(w);
    ++num_descriptors_;
  }
  std::sort(touched.begin(), touched.end());
  touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
  for (int w : touched) {
    if (static_cast<int>(nodes_[w].descriptors.size()) > options_.max_leaf_size) Split(w);
  }
}

namespace {

BriefDescriptor BitwiseMedian(const std::vector<const BriefDescriptor*>& members) {
  BriefDescriptor m;
  const std::size_t n = members.size();
  for (int bit = 0; bit < 256; ++bit) {
    std::size_t ones = 0;
    for (const BriefDescriptor* d : members) ones += d->bit(bit);
    if (2 * ones > n) m.bits[bit >> 6] |= 1ull << (bit & 63);
  }
  return m;
}

int Nearest(const BriefDescriptor& d, const std::vector<BriefDescriptor>& centers) {
  int best = 0;
  int best_dist = std::numeric_limits<int>::max();
  for (std::size_t c = 0; c < centers.size(); ++c) {
    const int dist = HammingDistance(d, centers[c]);
    if (dist < best_dist) {
      best_dist = dist;
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace

void VocabularyTree::Split(int node) {
  const auto items = nodes_[node].descriptors;
  const int n = static_cast<int>(items.size());
  const int k = std::min(options_.branching, n);
  Rng rng(options_.seed, StreamId(node, n));

  // k-means++ seeding on squared Hamming distances.
  std::vector<BriefDescriptor> centers = {items[rng.UniformInt(n)].first};
  std::vector<double> d2(n);
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      const double d = HammingDistance(items[i].first, centers[Nearest(items[i].first, centers)]);
      d2[i] = d * d;
      total += d2[i];
    }
    if (total == 0.0) break;
    double r = rng.Uniform() * total;
    int pick = n - 1;
    for (int i = 0; i < n; ++i) {
      r -= d2[i];
      if (r < 0.0) {
        pick = i;
        break;
      }
    }
    centers.push_back(items[pick].first);
  }

  std::vector<int> assign(n, -1);
  for (int it = 0; it < options_.kmedians_iterations; ++it) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      const int c = Nearest(items[i].first, centers);
      changed |= c != assign[i];
      assign[i] = c;
    }
    if (!changed) break;
    std::vector<std::vector<const BriefDescriptor*>> members(centers.size());
    for (int i = 0; i < n; ++i) members[assign[i]].push_back(&items[i].first);
    for (std::size_t c = 0; c < centers.size(); ++c) {
      if (!members[c].empty()) centers[c] = BitwiseMedian(members[c]);
    }
  }
  // Final assignment against the final centers, as Lookup will do.
  for (int i = 0; i < n; ++i) assign[i] = Nearest(items[i].first, centers);
  std::vector<int> sizes(centers.size(), 0);
  for (int a : assign) ++sizes[a];
  const int nonempty = static_cast<int>(std::count_if(sizes.begin(), sizes.end(), [](int s) { return s > 0; }));
  if (nonempty <= 1) {
    nodes_[node].splittable = false;
    return;
  }

  // Children for the non-empty clusters; Lookup ties go to the lower index,
  // matching Nearest over the same center order.
  std::vector<int> child_of(centers.size(), -1);
  for (std::size_t c = 0; c < centers.size(); ++c) {
    if (sizes[c] == 0) continue;
    child_of[c] = static_cast<int>(nodes_.size());
    Node child;
    child.center = centers[c];
    nodes_.push_back(std::move(child));
    nodes_[node].children.push_back(child_of[c]);
  }
  inverted_.erase(node);
  for (int i = 0; i < n; ++i) {
    const int child = child_of[assign[i]];
    const KeyframeId kf = items[i].second;
    nodes_[child].descriptors.push_back(items[i]);
    auto& words = kf_words_[kf];
    if (--words[node] == 0) words.erase(node);
    ++words[child];
    ++inverted_[child][kf];
  }
  nodes_[node].descriptors.clear();
  nodes_[node].descriptors.shrink_to_fit();
  const std::vector<int> children = nodes_[node].children;
  for (int c : children) {
    if (static_cast<int>(nodes_[c].descriptors.size()) > options_.max_leaf_size) Split(c);
  }
}

double VocabularyTree::Idf(WordId w) const {
  const double n = static_cast<double>(kf_words_.size());
  if (n == 0.0) return 0.0;
  auto it = inverted_.find(w);
  const double df = it == inverted_.end() ? 1.0 : static_cast<double>(it->second.size());
  return std::log(n / std::max(df, 1.0));
}

std::size_t VocabularyTree::NumWords() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.children.empty(); }));
}

const std::vector<std::pair<BriefDescriptor, KeyframeId>>& VocabularyTree::LeafDescriptors(WordId w) const {
  return nodes_.at(w).descriptors;
}

BowSignature VocabularyTree::Weigh(const std::map<WordId, int>& counts) const {
  BowSignature s;
  double total_count = 0.0;
  for (const auto& [w, c] : counts) total_count += c;
  if (total_count == 0.0) return s;
  double sum = 0.0;
  for (const auto& [w, c] : counts) {
    const double v = c / total_count * Idf(w);
    if (v > 0.0) {
      s[w] = v;
      sum += v;
    }
  }
  for (auto& [w, v] : s) v /= sum;
  return s;
}

BowSignature VocabularyTree::Signature(KeyframeId kf) const {
  auto it = kf_words_.find(kf);
  return it == kf_words_.end() ? BowSignature{} : Weigh(it->second);
}

BowSignature VocabularyTree::Transform(const std::vector<BriefDescriptor>& descriptors) const {
  std::map<WordId, int> counts;
  for (const BriefDescriptor& d : descriptors) ++counts[Lookup(d)];
  return Weigh(counts);
}

std::map<KeyframeId, double> VocabularyTree::Score(const BowSignature& s) const {
  std::map<KeyframeId, double> out;
  std::map<KeyframeId, BowSignature> cache;
  for (const auto& [w, v] : s) {
    auto it = inverted_.find(w);
    if (it == inverted_.end()) continue;
    for (const auto& [kf, count] : it->second) {
      auto c = cache.find(kf);
      if (c == cache.end()) c = cache.emplace(kf, Signature(kf)).first;
      auto e = c->second.find(w);
      if (e != c->second.end()) out[kf] += std::min(v, e->second);
    }
  }
  return out;
}

LoopDetector::LoopDetector(const LoopDetectorOptions& options)
    : options_(options), tree_(options.vocabulary) {}

LoopQuery LoopDetector::UpdateAndQuery(KeyframeId kf, const std::vector<BriefDescriptor>& descriptors) {
  LoopQuery q;
  tree_.AddKeyframe(kf, descriptors);
  order_.push_back(kf);
  const auto scores = tree_.Score(tree_.Signature(kf));

  const std::size_t w = static_cast<std::size_t>(std::max(options_.temporal_window, 0));
  const std::size_t first_masked = order_.size() > w + 1 ? order_.size() - w - 1 : 0;
  std::map<KeyframeId, bool> masked;
  for (std::size_t i = first_masked; i < order_.size(); ++i) masked[order_[i]] = true;
  for (const auto& [id, score] : scores) {
    if (id == kf) continue;
    if (masked.count(id)) {
      q.recent_best = std::max(q.recent_best, score);
    } else {
      q.ranked.emplace_back(id, score);
    }
  }
  std::sort(q.ranked.begin(), q.ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });

  std::optional<KeyframeId> top;
  if (!q.ranked.empty()) {
    const double score = q.ranked.front().second;
    if (score > options_.min_score_ratio * q.recent_best && score > options_.min_score) {
      top = q.ranked.front().first;
    }
  }
  history_.push_back(top);
  const std::size_t need = static_cast<std::size_t>(std::max(options_.consistent_queries, 1));
  if (history_.size() > need) history_.erase(history_.begin(), history_.end() - need);
  if (top && history_.size() == need) {
    bool consistent = true;
    for (const auto& h : history_) {
      consistent &= h.has_value() && std::abs(*h - *top) <= options_.island_radius;
    }
    if (consistent) q.candidate = top;
  }
  return q;
}

}  // namespace vslam
