#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <unordered_map>
#include <vector>

#include "stolen/embedding_store.hpp"

namespace stolen {

// Modified Kneser-Ney discounts for counts 1, 2 and 3+ at one order.
struct Discounts {
  double d1 = 0.75;
  double d2 = 0.75;
  double d3plus = 0.75;
  // Count-of-counts were insufficient; the fixed 0.75 was used instead.
  bool fallback = false;

  double operator()(std::uint64_t count) const {
    return count == 0 ? 0.0 : count == 1 ? d1 : count == 2 ? d2 : d3plus;
  }
};

inline constexpr double kFallbackDiscount = 0.75;

// D1 = 1 - 2Y n2/n1, D2 = 2 - 3Y n3/n2, D3+ = 3 - 4Y n4/n3, Y = n1/(n1 + 2 n2).
// Falls back to a flat 0.75 when n1..n4 has a zero or a discount leaves (0, k].
Discounts estimate_discounts(const std::array<std::uint64_t, 4> &count_of_counts);

/// Interpolated modified Kneser-Ney trigram model. Histories are padded on
/// the left with <s>, so the first word of a sentence is predicted from
/// (<s>, <s>). The unigram level uses continuation counts and interpolates
/// with the uniform distribution over the vocabulary.
class TrigramModel {
 public:
  static TrigramModel fit(const Corpus &corpus, const Vocabulary &vocab);

  // Rebuilds from raw trigram counts; the lower orders are derived.
  TrigramModel(Vocabulary vocab,
               std::unordered_map<std::uint64_t, std::uint64_t> trigram_counts);

  const Vocabulary &vocab() const noexcept { return vocab_; }

  double prob(WordId u, WordId v, WordId w) const;  // P(w | u v)
  double prob_bigram(WordId v, WordId w) const;      // P(w | v)
  double prob_unigram(WordId w) const;

  // Conditional given the history of a sentence position.
  double prob_at(std::span<const WordId> sentence, std::size_t position) const;

  std::uint64_t count(WordId u, WordId v, WordId w) const;
  std::uint64_t context_count(WordId u, WordId v) const;
  std::uint64_t continuation_count(WordId v, WordId w) const;  // N1+(. v w)
  std::uint64_t continuation_count(WordId w) const;            // N1+(. w)

  // Index 0: unigram, 1: bigram, 2: trigram.
  const std::array<Discounts, 3> &discounts() const noexcept { return discounts_; }
  bool used_fallback() const;

  std::size_t num_trigram_types() const noexcept { return c3_.size(); }

  // Sorted plain text: a vocabulary block, then "<order> <tokens...> <count>"
  // lines for orders 1..3 (raw counts).
  void write(std::ostream &out) const;
  static TrigramModel read(std::istream &in, const std::string &source = "<stream>");

 private:
  struct ContextStats {
    std::uint64_t total = 0;
    std::array<std::uint64_t, 3> n{};  // types with count 1, 2, 3+
  };

  static std::uint64_t key2(WordId a, WordId b);
  static std::uint64_t key3(WordId a, WordId b, WordId c);
  void build();
  double gamma(const Discounts &d, const ContextStats &s) const;

  Vocabulary vocab_;
  std::unordered_map<std::uint64_t, std::uint64_t> c3_;
  std::unordered_map<std::uint64_t, ContextStats> ctx3_;   // (u, v)
  std::unordered_map<std::uint64_t, std::uint64_t> cont2_;  // (v, w)
  std::unordered_map<WordId, ContextStats> ctx2_;           // v
  std::vector<std::uint64_t> cont1_;                        // w
  ContextStats ctx1_;
  std::array<Discounts, 3> discounts_;
};

// Trigram history (u, v) of a position, padded with <s>.
std::pair<WordId, WordId> trigram_history(std::span<const WordId> sentence,
                                          std::size_t position, WordId bos);

}  // namespace stolen
