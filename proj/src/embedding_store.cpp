#include "stolen/embedding_store.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "stolen/format.hpp"

namespace stolen {

ParseError::ParseError(const std::string &source, std::size_t line,
                       const std::string &message)
    : Error(source + ":" + std::to_string(line) + ": " + message), line_(line) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  tokens_.reserve(tokens.size());
  for (auto &tok : tokens) {
    if (index_.contains(tok))
      throw Error("duplicate token '" + tok + "' in vocabulary");
    index_.emplace(tok, tokens_.size());
    tokens_.push_back(std::move(tok));
  }
}

WordId Vocabulary::add(std::string_view token) {
  std::string key(token);
  auto it = index_.find(key);
  if (it != index_.end())
    return it->second;
  WordId id = tokens_.size();
  index_.emplace(key, id);
  tokens_.push_back(std::move(key));
  return id;
}

std::optional<WordId> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end())
    return std::nullopt;
  return it->second;
}

WordId Vocabulary::id(std::string_view token) const {
  auto found = find(token);
  if (!found)
    throw Error("token '" + std::string(token) + "' not in vocabulary");
  return *found;
}

EmbeddingSpace::EmbeddingSpace(Vocabulary vocab, Eigen::MatrixXd vectors,
                               Eigen::VectorXd biases)
    : vocab_(std::move(vocab)), vectors_(std::move(vectors)),
      biases_(std::move(biases)) {
  if (vocab_.size() < 2)
    throw Error("embedding space needs at least 2 words");
  if (static_cast<std::size_t>(vectors_.rows()) != vocab_.size())
    throw Error("embedding matrix has " + std::to_string(vectors_.rows()) +
                " rows for a vocabulary of " + std::to_string(vocab_.size()));
  if (vectors_.cols() < 1)
    throw Error("embedding dimension must be positive");
  if (static_cast<std::size_t>(biases_.size()) != vocab_.size())
    throw Error("bias vector length does not match vocabulary");
  if (!vectors_.allFinite() || !biases_.allFinite())
    throw Error("embedding space contains non-finite values");
}

EmbeddingSpace::EmbeddingSpace(Vocabulary vocab, Eigen::MatrixXd vectors)
    : EmbeddingSpace(std::move(vocab), vectors,
                     Eigen::VectorXd::Zero(vectors.rows())) {}

EmbeddingSpace EmbeddingSpace::without_biases() const {
  return EmbeddingSpace(vocab_, vectors_);
}

EmbeddingSpace EmbeddingSpace::permuted(std::span<const WordId> order) const {
  if (order.size() != size())
    throw Error("permutation length does not match vocabulary");
  std::vector<std::string> tokens;
  Eigen::MatrixXd rows(vectors_.rows(), vectors_.cols());
  Eigen::VectorXd b(biases_.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    tokens.push_back(vocab_.token(order[i]));
    rows.row(static_cast<Eigen::Index>(i)) = vector(order[i]);
    b[static_cast<Eigen::Index>(i)] = bias(order[i]);
  }
  return EmbeddingSpace(Vocabulary(std::move(tokens)), std::move(rows),
                        std::move(b));
}

bool EmbeddingSpace::operator==(const EmbeddingSpace &other) const {
  return vocab_ == other.vocab_ && vectors_.rows() == other.vectors_.rows() &&
         vectors_.cols() == other.vectors_.cols() &&
         vectors_ == other.vectors_ && biases_ == other.biases_;
}

std::size_t Corpus::num_predictions() const {
  std::size_t n = 0;
  for (const auto &s : sentences)
    n += s.empty() ? 0 : s.size() - 1;
  return n;
}

EmbeddingSpace parse_embeddings(std::istream &in, const std::string &source) {
  std::string line;
  std::size_t lineno = 0;

  auto next_nonblank = [&]() -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      if (!split_whitespace(line).empty())
        return true;
    }
    return false;
  };

  if (!next_nonblank())
    throw ParseError(source, lineno, "missing header");
  auto header = split_whitespace(line);
  if (header.size() != 2)
    throw ParseError(source, lineno, "header must be '<vocab_size> <dim>'");
  auto parse_count = [&](std::string_view field) -> std::size_t {
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size() || value == 0)
      throw ParseError(source, lineno,
                       "malformed header field '" + std::string(field) + "'");
    return value;
  };
  const std::size_t n = parse_count(header[0]);
  const std::size_t d = parse_count(header[1]);

  Vocabulary vocab;
  Eigen::MatrixXd vectors(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  Eigen::VectorXd biases = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));

  for (std::size_t row = 0; row < n; ++row) {
    if (!next_nonblank())
      throw ParseError(source, lineno,
                       "expected " + std::to_string(n) + " rows, found " +
                           std::to_string(row));
    auto fields = split_whitespace(line);
    if (fields.size() != d + 1 && fields.size() != d + 2)
      throw ParseError(source, lineno,
                       "row has " + std::to_string(fields.size() - 1) +
                           " values, expected " + std::to_string(d) + " or " +
                           std::to_string(d + 1));
    if (vocab.find(fields[0]))
      throw ParseError(source, lineno,
                       "duplicate token '" + std::string(fields[0]) + "'");
    vocab.add(fields[0]);
    for (std::size_t k = 1; k < fields.size(); ++k) {
      auto v = parse_double(fields[k]);
      if (!v)
        throw ParseError(source, lineno,
                         "malformed number '" + std::string(fields[k]) + "'");
      if (!std::isfinite(*v))
        throw ParseError(source, lineno,
                         "non-finite value '" + std::string(fields[k]) + "'");
      if (k <= d)
        vectors(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(k - 1)) = *v;
      else
        biases[static_cast<Eigen::Index>(row)] = *v;
    }
  }
  if (next_nonblank())
    throw ParseError(source, lineno,
                     "more rows than the header's " + std::to_string(n));

  try {
    return EmbeddingSpace(std::move(vocab), std::move(vectors),
                          std::move(biases));
  } catch (const Error &e) {
    throw ParseError(source, 1, e.what());
  }
}

EmbeddingSpace load_embeddings(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw Error("cannot open embeddings file '" + path.string() + "'");
  return parse_embeddings(in, path.string());
}

void write_embeddings(const EmbeddingSpace &space, std::ostream &out) {
  const bool with_bias = !space.has_zero_biases();
  out << space.size() << ' ' << space.dim() << '\n';
  for (WordId i = 0; i < space.size(); ++i) {
    out << space.vocab().token(i);
    auto row = space.vector(i);
    for (Eigen::Index k = 0; k < row.size(); ++k)
      out << ' ' << format_double(row[k]);
    if (with_bias)
      out << ' ' << format_double(space.bias(i));
    out << '\n';
  }
}

void save_embeddings(const EmbeddingSpace &space,
                     const std::filesystem::path &path) {
  std::ofstream out(path);
  if (!out)
    throw Error("cannot write embeddings file '" + path.string() + "'");
  write_embeddings(space, out);
}

LoadedCorpus parse_corpus(std::istream &in, const Vocabulary *vocab,
                          const std::string &source) {
  LoadedCorpus result;
  if (vocab) {
    result.vocab = *vocab;
    for (auto sentinel : {kBeginSentence, kEndSentence, kUnknown})
      if (!vocab->find(sentinel))
        throw Error("vocabulary lacks reserved token '" +
                    std::string(sentinel) + "'");
  } else {
    for (auto sentinel : {kBeginSentence, kEndSentence, kUnknown})
      result.vocab.add(sentinel);
  }
  const WordId bos = result.vocab.id(kBeginSentence);
  const WordId eos = result.vocab.id(kEndSentence);
  const WordId unk = result.vocab.id(kUnknown);

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto tokens = split_whitespace(line);
    if (tokens.empty())
      continue;
    std::vector<WordId> sentence;
    sentence.reserve(tokens.size() + 2);
    sentence.push_back(bos);
    for (auto tok : tokens) {
      if (vocab) {
        auto id = result.vocab.find(tok);
        sentence.push_back(id ? *id : unk);
      } else {
        sentence.push_back(result.vocab.add(tok));
      }
    }
    sentence.push_back(eos);
    result.corpus.sentences.push_back(std::move(sentence));
  }
  if (result.corpus.sentences.empty())
    throw ParseError(source, lineno, "corpus is empty");
  return result;
}

LoadedCorpus load_corpus(const std::filesystem::path &path,
                         const Vocabulary *vocab) {
  std::ifstream in(path);
  if (!in)
    throw Error("cannot open corpus file '" + path.string() + "'");
  return parse_corpus(in, vocab, path.string());
}

std::vector<double> norms(const EmbeddingSpace &space) {
  std::vector<double> out(space.size());
  for (WordId i = 0; i < space.size(); ++i)
    out[i] = space.vector(i).norm();
  return out;
}

}  // namespace stolen
