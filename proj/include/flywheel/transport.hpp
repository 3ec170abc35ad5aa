#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flywheel/random.hpp"

namespace flywheel::transport {

using TokenId = std::uint32_t;
using TokenIds = std::vector<TokenId>;

// Toy vocabulary with deliberately overlapping pieces ("a", "b", "ab").
// encode() is the training-side path: greedy longest match.
class ToyTokenizer {
 public:
  explicit ToyTokenizer(std::map<std::string, TokenId> vocabulary);

  TokenIds encode(std::string_view text) const;  // throws kUnencodableText
  std::string decode(std::span<const TokenId> ids) const;  // throws kUnknownToken

  std::optional<TokenId> id_of(std::string_view piece) const;
  const std::string& piece(TokenId id) const;  // throws kUnknownToken

  // Every way to write `text` as a sequence of vocabulary pieces.
  std::vector<TokenIds> segmentations(std::string_view text) const;

  const std::map<std::string, TokenId>& vocabulary() const { return vocabulary_; }

 private:
  std::map<std::string, TokenId> vocabulary_;
  std::map<TokenId, std::string> pieces_;
  std::size_t longest_piece_ = 0;
};

// Next-token table keyed by context suffix. Lookup uses the longest suffix of
// the running sequence (at most `window` tokens) that has an entry; the empty
// context, if present, is the fallback.
class ToyScorer {
 public:
  struct Entry {
    TokenId token;
    double probability;
  };
  using Table = std::map<TokenIds, std::vector<Entry>>;

  // Throws kInvalidArgument when a distribution is not normalized to 1e-9.
  ToyScorer(std::size_t window, TokenId stop_token, Table table);

  const std::vector<Entry>& distribution(std::span<const TokenId> context) const;
  double log_prob(std::span<const TokenId> context, TokenId next) const;  // throws kUnknownToken

  TokenId stop_token() const { return stop_token_; }
  std::size_t window() const { return window_; }
  const Table& table() const { return table_; }

 private:
  std::size_t window_;
  TokenId stop_token_;
  Table table_;
};

// The wire record: inference-time ids travel next to the text.
struct GenerationRecord {
  TokenIds prompt_ids;
  std::string output_text;
  TokenIds output_ids;  // excludes the stop token
  double sampler_logprob = 0.0;  // natural log, summed over output_ids
  bool operator==(const GenerationRecord&) const = default;
};

GenerationRecord generate(const ToyScorer& scorer, const ToyTokenizer& tokenizer,
                          const TokenIds& prompt, std::size_t max_tokens, Rng& rng);

// Sum of log p(t_i | x, t_<i). An empty continuation scores 0.
double logprob_from_ids(const ToyScorer& scorer, const TokenIds& prompt, const TokenIds& ids);

// Re-tokenizes `text` with the longest-match encoder first. This is the path
// that disagrees with the sampler whenever segmentation is ambiguous.
double logprob_from_text(const ToyScorer& scorer, const ToyTokenizer& tokenizer,
                         const TokenIds& prompt, std::string_view text);

struct AlignmentReport {
  bool aligned = false;
  double id_delta = 0.0;  // |logprob_from_ids - sampler_logprob|
  std::optional<double> text_delta;  // |logprob_from_text - sampler_logprob|
};

inline constexpr double kAlignmentTolerance = 1e-9;

AlignmentReport verify_alignment(const GenerationRecord& record, const ToyScorer& scorer,
                                 const ToyTokenizer* tokenizer = nullptr);

std::string serialize(const GenerationRecord& record);
GenerationRecord deserialize(std::string_view text);  // throws kParseError

// Shipped ambiguous corpus: "ab" is both one piece and "a"+"b", and the scorer
// puts 0.9*0.9 on the split path but only 0.05 on the merged piece.
struct AmbiguousFixture {
  ToyTokenizer tokenizer;
  ToyScorer scorer;
  TokenIds prompt;
};

AmbiguousFixture ambiguous_fixture();

// Record whose ids are the longest-match re-encoding of its own text, with the
// sampler log-prob left as generated. Used to show the mismatch.
GenerationRecord retokenized(const GenerationRecord& record, const ToyTokenizer& tokenizer);

}  // namespace flywheel::transport
