#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace stolen {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by the text loaders; carries the 1-based line of the offending input.
class ParseError : public Error {
 public:
  ParseError(const std::string &source, std::size_t line,
             const std::string &message);

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

using WordId = std::size_t;

inline constexpr std::string_view kBeginSentence = "<s>";
inline constexpr std::string_view kEndSentence = "</s>";
inline constexpr std::string_view kUnknown = "<unk>";

class Vocabulary {
 public:
  Vocabulary() = default;

  // Throws Error on duplicate tokens.
  explicit Vocabulary(std::vector<std::string> tokens);

  // Returns the id of `token`, appending it when absent.
  WordId add(std::string_view token);

  std::optional<WordId> find(std::string_view token) const;
  WordId id(std::string_view token) const;

  const std::string &token(WordId id) const { return tokens_.at(id); }
  const std::vector<std::string> &tokens() const noexcept { return tokens_; }
  std::size_t size() const noexcept { return tokens_.size(); }

  bool operator==(const Vocabulary &other) const {
    return tokens_ == other.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, WordId> index_;
};

/// Output-layer geometry of a dot-product softmax: one row x_i per word plus
/// a per-word bias b_i. Immutable once constructed.
class EmbeddingSpace {
 public:
  // Throws Error unless |V| >= 2, rows match the vocabulary, biases match,
  // and every value is finite.
  EmbeddingSpace(Vocabulary vocab, Eigen::MatrixXd vectors,
                 Eigen::VectorXd biases);
  EmbeddingSpace(Vocabulary vocab, Eigen::MatrixXd vectors);

  const Vocabulary &vocab() const noexcept { return vocab_; }
  const Eigen::MatrixXd &vectors() const noexcept { return vectors_; }
  const Eigen::VectorXd &biases() const noexcept { return biases_; }

  std::size_t size() const noexcept { return vocab_.size(); }
  std::size_t dim() const noexcept {
    return static_cast<std::size_t>(vectors_.cols());
  }

  auto vector(WordId id) const { return vectors_.row(static_cast<Eigen::Index>(id)); }
  double bias(WordId id) const { return biases_[static_cast<Eigen::Index>(id)]; }

  bool has_zero_biases() const { return (biases_.array() == 0.0).all(); }

  EmbeddingSpace without_biases() const;

  // Row i of the result is row order[i] of this space.
  EmbeddingSpace permuted(std::span<const WordId> order) const;

  bool operator==(const EmbeddingSpace &other) const;

 private:
  Vocabulary vocab_;
  Eigen::MatrixXd vectors_;
  Eigen::VectorXd biases_;
};

struct Corpus {
  // Each sentence starts with <s> and ends with </s>.
  std::vector<std::vector<WordId>> sentences;

  // Number of predicted positions (every token after the leading <s>).
  std::size_t num_predictions() const;
};

struct LoadedCorpus {
  Corpus corpus;
  Vocabulary vocab;
};

EmbeddingSpace parse_embeddings(std::istream &in,
                                const std::string &source = "<stream>");
EmbeddingSpace load_embeddings(const std::filesystem::path &path);

// Shortest round-trip decimal representation; the bias column is omitted
// when every bias is zero.
void write_embeddings(const EmbeddingSpace &space, std::ostream &out);
void save_embeddings(const EmbeddingSpace &space,
                     const std::filesystem::path &path);

/// Reads one whitespace-tokenized sentence per line. Without a vocabulary the
/// result vocabulary is `<s>`, `</s>`, `<unk>` followed by corpus tokens in
/// first-occurrence order; with one, out-of-vocabulary tokens map to `<unk>`.
LoadedCorpus parse_corpus(std::istream &in, const Vocabulary *vocab = nullptr,
                          const std::string &source = "<stream>");
LoadedCorpus load_corpus(const std::filesystem::path &path,
                         const Vocabulary *vocab = nullptr);

std::vector<double> norms(const EmbeddingSpace &space);

}  // namespace stolen
