#include "stolen/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <tuple>

#include "stolen/format.hpp"

namespace stolen {

namespace {
  constexpr std::uint64_t kIdBits = 21;
  constexpr std::uint64_t kIdMask = (std::uint64_t{1} << kIdBits) - 1;
}  // namespace

Discounts estimate_discounts(const std::array<std::uint64_t, 4> &n) {
  Discounts out;
  if (n[0] == 0 || n[1] == 0 || n[2] == 0) {
    out.fallback = true;
    return out;
  }
  const double n1 = static_cast<double>(n[0]);
  const double n2 = static_cast<double>(n[1]);
  const double n3 = static_cast<double>(n[2]);
  const double n4 = static_cast<double>(n[3]);
  const double y = n1 / (n1 + 2.0 * n2);
  Discounts d;
  d.d1 = 1.0 - 2.0 * y * n2 / n1;
  d.d2 = 2.0 - 3.0 * y * n3 / n2;
  d.d3plus = 3.0 - 4.0 * y * n4 / n3;
  const bool valid = d.d1 > 0.0 && d.d1 <= 1.0 && d.d2 > 0.0 && d.d2 <= 2.0 &&
                     d.d3plus > 0.0 && d.d3plus <= 3.0;
  if (!valid) {
    out.fallback = true;
    return out;
  }
  return d;
}

std::pair<WordId, WordId> trigram_history(std::span<const WordId> sentence,
                                          std::size_t position, WordId bos) {
  const WordId u = position >= 2 ? sentence[position - 2] : bos;
  const WordId v = position >= 1 ? sentence[position - 1] : bos;
  return {u, v};
}

std::uint64_t TrigramModel::key2(WordId a, WordId b) {
  return (static_cast<std::uint64_t>(a) << kIdBits) | static_cast<std::uint64_t>(b);
}

std::uint64_t TrigramModel::key3(WordId a, WordId b, WordId c) {
  return (static_cast<std::uint64_t>(a) << (2 * kIdBits)) |
         (static_cast<std::uint64_t>(b) << kIdBits) | static_cast<std::uint64_t>(c);
}

TrigramModel TrigramModel::fit(const Corpus &corpus, const Vocabulary &vocab) {
  const WordId bos = vocab.id(kBeginSentence);
  std::unordered_map<std::uint64_t, std::uint64_t> counts;
  for (const auto &sentence : corpus.sentences) {
    if (sentence.empty() || sentence.front() != bos)
      throw Error("trigram fitting needs sentences that begin with <s>");
    for (std::size_t t = 1; t < sentence.size(); ++t) {
      if (sentence[t] >= vocab.size())
        throw Error("corpus token id exceeds the vocabulary");
      auto [u, v] = trigram_history(sentence, t, bos);
      ++counts[key3(u, v, sentence[t])];
    }
  }
  return TrigramModel(vocab, std::move(counts));
}

TrigramModel::TrigramModel(Vocabulary vocab,
                           std::unordered_map<std::uint64_t, std::uint64_t> trigram_counts)
    : vocab_(std::move(vocab)), c3_(std::move(trigram_counts)) {
  if (vocab_.size() > kIdMask)
    throw Error("vocabulary too large for packed n-gram keys");
  build();
}

void TrigramModel::build() {
  auto bump = [](ContextStats &s, std::uint64_t c) {
    s.total += c;
    ++s.n[std::min<std::uint64_t>(c, 3) - 1];
  };
  auto tally = [](std::array<std::uint64_t, 4> &coc, std::uint64_t c) {
    if (c >= 1 && c <= 4)
      ++coc[c - 1];
  };

  std::array<std::uint64_t, 4> coc3{}, coc2{}, coc1{};
  for (const auto &[key, c] : c3_) {
    const WordId u = (key >> (2 * kIdBits)) & kIdMask;
    const WordId v = (key >> kIdBits) & kIdMask;
    const WordId w = key & kIdMask;
    bump(ctx3_[key2(u, v)], c);
    ++cont2_[key2(v, w)];
    tally(coc3, c);
  }
  cont1_.assign(vocab_.size(), 0);
  for (const auto &[key, c] : cont2_) {
    const WordId v = (key >> kIdBits) & kIdMask;
    const WordId w = key & kIdMask;
    bump(ctx2_[v], c);
    ++cont1_[w];
    tally(coc2, c);
  }
  for (auto c : cont1_) {
    if (c == 0)
      continue;
    bump(ctx1_, c);
    tally(coc1, c);
  }
  discounts_ = {estimate_discounts(coc1), estimate_discounts(coc2),
                estimate_discounts(coc3)};
}

bool TrigramModel::used_fallback() const {
  return std::any_of(discounts_.begin(), discounts_.end(),
                     [](const Discounts &d) { return d.fallback; });
}

double TrigramModel::gamma(const Discounts &d, const ContextStats &s) const {
  return (d.d1 * static_cast<double>(s.n[0]) + d.d2 * static_cast<double>(s.n[1]) +
          d.d3plus * static_cast<double>(s.n[2])) /
         static_cast<double>(s.total);
}

double TrigramModel::prob_unigram(WordId w) const {
  const double uniform = 1.0 / static_cast<double>(vocab_.size());
  if (ctx1_.total == 0)
    return uniform;
  const auto &d = discounts_[0];
  const auto c = cont1_.at(w);
  const double head = std::max(static_cast<double>(c) - d(c), 0.0) /
                      static_cast<double>(ctx1_.total);
  return head + gamma(d, ctx1_) * uniform;
}

double TrigramModel::prob_bigram(WordId v, WordId w) const {
  auto it = ctx2_.find(v);
  if (it == ctx2_.end())
    return prob_unigram(w);
  const auto &d = discounts_[1];
  const auto c = continuation_count(v, w);
  const double head = std::max(static_cast<double>(c) - d(c), 0.0) /
                      static_cast<double>(it->second.total);
  return head + gamma(d, it->second) * prob_unigram(w);
}

double TrigramModel::prob(WordId u, WordId v, WordId w) const {
  auto it = ctx3_.find(key2(u, v));
  if (it == ctx3_.end())
    return prob_bigram(v, w);
  const auto &d = discounts_[2];
  const auto c = count(u, v, w);
  const double head = std::max(static_cast<double>(c) - d(c), 0.0) /
                      static_cast<double>(it->second.total);
  return head + gamma(d, it->second) * prob_bigram(v, w);
}

double TrigramModel::prob_at(std::span<const WordId> sentence,
                             std::size_t position) const {
  auto [u, v] = trigram_history(sentence, position, vocab_.id(kBeginSentence));
  return prob(u, v, sentence[position]);
}

std::uint64_t TrigramModel::count(WordId u, WordId v, WordId w) const {
  auto it = c3_.find(key3(u, v, w));
  return it == c3_.end() ? 0 : it->second;
}

std::uint64_t TrigramModel::context_count(WordId u, WordId v) const {
  auto it = ctx3_.find(key2(u, v));
  return it == ctx3_.end() ? 0 : it->second.total;
}

std::uint64_t TrigramModel::continuation_count(WordId v, WordId w) const {
  auto it = cont2_.find(key2(v, w));
  return it == cont2_.end() ? 0 : it->second;
}

std::uint64_t TrigramModel::continuation_count(WordId w) const {
  return cont1_.at(w);
}

void TrigramModel::write(std::ostream &out) const {
  out << "\\vocab " << vocab_.size() << '\n';
  for (const auto &tok : vocab_.tokens())
    out << tok << '\n';
  out << "\\counts\n";

  std::map<std::tuple<WordId, WordId, WordId>, std::uint64_t> tri;
  std::map<std::pair<WordId, WordId>, std::uint64_t> bi;
  std::map<WordId, std::uint64_t> uni;
  for (const auto &[key, c] : c3_) {
    const WordId u = (key >> (2 * kIdBits)) & kIdMask;
    const WordId v = (key >> kIdBits) & kIdMask;
    const WordId w = key & kIdMask;
    tri[{u, v, w}] = c;
    bi[{v, w}] += c;
    uni[w] += c;
  }
  const auto &t = vocab_.tokens();
  for (const auto &[w, c] : uni)
    out << "1 " << t[w] << ' ' << c << '\n';
  for (const auto &[vw, c] : bi)
    out << "2 " << t[vw.first] << ' ' << t[vw.second] << ' ' << c << '\n';
  for (const auto &[uvw, c] : tri)
    out << "3 " << t[std::get<0>(uvw)] << ' ' << t[std::get<1>(uvw)] << ' '
        << t[std::get<2>(uvw)] << ' ' << c << '\n';
}

TrigramModel TrigramModel::read(std::istream &in, const std::string &source) {
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> bool {
    if (!std::getline(in, line))
      return false;
    ++lineno;
    return true;
  };

  if (!next())
    throw ParseError(source, lineno, "missing vocabulary header");
  auto header = split_whitespace(line);
  if (header.size() != 2 || header[0] != "\\vocab")
    throw ParseError(source, lineno, "expected '\\vocab <size>'");
  const auto size = parse_double(header[1]);
  if (!size || *size < 0)
    throw ParseError(source, lineno, "malformed vocabulary size");
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < static_cast<std::size_t>(*size); ++i) {
    if (!next())
      throw ParseError(source, lineno, "truncated vocabulary block");
    auto f = split_whitespace(line);
    if (f.size() != 1)
      throw ParseError(source, lineno, "vocabulary lines hold one token");
    tokens.emplace_back(f[0]);
  }
  Vocabulary vocab(std::move(tokens));
  if (!next() || line != "\\counts")
    throw ParseError(source, lineno, "expected '\\counts'");

  auto lookup = [&](std::string_view tok) {
    auto id = vocab.find(tok);
    if (!id)
      throw ParseError(source, lineno, "unknown token '" + std::string(tok) + "'");
    return *id;
  };
  auto parse_count = [&](std::string_view f) {
    auto v = parse_double(f);
    if (!v || *v < 1 || *v != std::floor(*v))
      throw ParseError(source, lineno, "malformed count '" + std::string(f) + "'");
    return static_cast<std::uint64_t>(*v);
  };

  std::unordered_map<std::uint64_t, std::uint64_t> c3;
  std::map<std::pair<WordId, WordId>, std::uint64_t> bi_declared, bi_derived;
  std::map<WordId, std::uint64_t> uni_declared, uni_derived;
  while (next()) {
    auto f = split_whitespace(line);
    if (f.empty())
      continue;
    if (f[0] == "1" && f.size() == 3) {
      uni_declared[lookup(f[1])] = parse_count(f[2]);
    } else if (f[0] == "2" && f.size() == 4) {
      bi_declared[{lookup(f[1]), lookup(f[2])}] = parse_count(f[3]);
    } else if (f[0] == "3" && f.size() == 5) {
      const WordId u = lookup(f[1]), v = lookup(f[2]), w = lookup(f[3]);
      const auto c = parse_count(f[4]);
      c3[key3(u, v, w)] = c;
      bi_derived[{v, w}] += c;
      uni_derived[w] += c;
    } else {
      throw ParseError(source, lineno, "malformed count line");
    }
  }
  if (bi_declared != bi_derived || uni_declared != uni_derived)
    throw ParseError(source, lineno,
                     "lower-order counts are inconsistent with trigram counts");
  return TrigramModel(std::move(vocab), std::move(c3));
}

}  // namespace stolen
