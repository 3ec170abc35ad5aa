#include "flywheel/transport.hpp"

#include <algorithm>
#include <cmath>

#include "flywheel/error.hpp"
#include "json.hpp"

namespace flywheel::transport {

ToyTokenizer::ToyTokenizer(std::map<std::string, TokenId> vocabulary)
    : vocabulary_(std::move(vocabulary)) {
  for (const auto& [piece, id] : vocabulary_) {
    if (piece.empty()) throw Error(ErrorCode::kInvalidArgument, "empty vocabulary piece");
    if (!pieces_.emplace(id, piece).second)
      throw Error(ErrorCode::kInvalidArgument, "token id " + std::to_string(id) + " used twice");
    longest_piece_ = std::max(longest_piece_, piece.size());
  }
}

TokenIds ToyTokenizer::encode(std::string_view text) const {
  TokenIds ids;
  std::size_t pos = 0;
  while (pos < text.size()) {
    bool matched = false;
    for (std::size_t len = std::min(longest_piece_, text.size() - pos); len > 0; --len) {
      const auto it = vocabulary_.find(std::string(text.substr(pos, len)));
      if (it != vocabulary_.end()) {
        ids.push_back(it->second);
        pos += len;
        matched = true;
        break;
      }
    }
    if (!matched)
      throw Error(ErrorCode::kUnencodableText,
                  "no piece matches at offset " + std::to_string(pos) + " of '" + std::string(text) + "'");
  }
  return ids;
}

std::string ToyTokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) out += piece(id);
  return out;
}

std::optional<TokenId> ToyTokenizer::id_of(std::string_view piece) const {
  const auto it = vocabulary_.find(std::string(piece));
  if (it == vocabulary_.end()) return std::nullopt;
  return it->second;
}

const std::string& ToyTokenizer::piece(TokenId id) const {
  const auto it = pieces_.find(id);
  if (it == pieces_.end()) throw Error(ErrorCode::kUnknownToken, "token id " + std::to_string(id));
  return it->second;
}

std::vector<TokenIds> ToyTokenizer::segmentations(std::string_view text) const {
  // suffixes[i] = all segmentations of text[i..]
  std::vector<std::vector<TokenIds>> suffixes(text.size() + 1);
  suffixes[text.size()].push_back({});
  for (std::size_t i = text.size(); i-- > 0;) {
    for (std::size_t len = 1; len <= std::min(longest_piece_, text.size() - i); ++len) {
      const auto id = id_of(text.substr(i, len));
      if (!id) continue;
      for (const auto& rest : suffixes[i + len]) {
        TokenIds seg{*id};
        seg.insert(seg.end(), rest.begin(), rest.end());
        suffixes[i].push_back(std::move(seg));
      }
    }
  }
  return suffixes[0];
}

ToyScorer::ToyScorer(std::size_t window, TokenId stop_token, Table table)
    : window_(window), stop_token_(stop_token), table_(std::move(table)) {
  for (const auto& [context, entries] : table_) {
    if (context.size() > window_)
      throw Error(ErrorCode::kInvalidArgument, "scorer context longer than its window");
    double total = 0.0;
    for (const auto& e : entries) {
      if (e.probability <= 0.0)
        throw Error(ErrorCode::kInvalidArgument, "scorer probabilities must be positive");
      total += e.probability;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw Error(ErrorCode::kInvalidArgument, "scorer distribution sums to " + std::to_string(total));
  }
}

const std::vector<ToyScorer::Entry>& ToyScorer::distribution(std::span<const TokenId> context) const {
  for (std::size_t len = std::min(window_, context.size()) + 1; len-- > 0;) {
    const TokenIds key(context.end() - static_cast<std::ptrdiff_t>(len), context.end());
    const auto it = table_.find(key);
    if (it != table_.end()) return it->second;
  }
  throw Error(ErrorCode::kUnknownToken, "no scorer entry for the current context");
}

double ToyScorer::log_prob(std::span<const TokenId> context, TokenId next) const {
  for (const auto& e : distribution(context))
    if (e.token == next) return std::log(e.probability);
  throw Error(ErrorCode::kUnknownToken, "token id " + std::to_string(next) + " absent from scorer table");
}

GenerationRecord generate(const ToyScorer& scorer, const ToyTokenizer& tokenizer,
                          const TokenIds& prompt, std::size_t max_tokens, Rng& rng) {
  GenerationRecord record;
  record.prompt_ids = prompt;
  TokenIds sequence = prompt;
  double logprob = 0.0;
  for (std::size_t i = 0; i < max_tokens; ++i) {
    const auto& dist = scorer.distribution(sequence);
    const double u = rng.uniform01();
    double cumulative = 0.0;
    const ToyScorer::Entry* chosen = &dist.back();
    for (const auto& e : dist) {
      cumulative += e.probability;
      if (u < cumulative) {
        chosen = &e;
        break;
      }
    }
    if (chosen->token == scorer.stop_token()) break;
    logprob += std::log(chosen->probability);
    sequence.push_back(chosen->token);
    record.output_ids.push_back(chosen->token);
  }
  record.output_text = tokenizer.decode(record.output_ids);
  record.sampler_logprob = logprob;
  return record;
}

double logprob_from_ids(const ToyScorer& scorer, const TokenIds& prompt, const TokenIds& ids) {
  TokenIds sequence = prompt;
  double total = 0.0;
  for (TokenId id : ids) {
    total += scorer.log_prob(sequence, id);
    sequence.push_back(id);
  }
  return total;
}

double logprob_from_text(const ToyScorer& scorer, const ToyTokenizer& tokenizer,
                         const TokenIds& prompt, std::string_view text) {
  return logprob_from_ids(scorer, prompt, tokenizer.encode(text));
}

AlignmentReport verify_alignment(const GenerationRecord& record, const ToyScorer& scorer,
                                 const ToyTokenizer* tokenizer) {
  AlignmentReport report;
  report.id_delta = std::abs(logprob_from_ids(scorer, record.prompt_ids, record.output_ids) -
                             record.sampler_logprob);
  report.aligned = report.id_delta <= kAlignmentTolerance;
  if (tokenizer != nullptr) {
    try {
      report.text_delta =
          std::abs(logprob_from_text(scorer, *tokenizer, record.prompt_ids, record.output_text) -
                   record.sampler_logprob);
    } catch (const Error&) {
      // the text path may hit pieces the scorer never emits in this context
    }
  }
  return report;
}

std::string serialize(const GenerationRecord& record) {
  nlohmann::json j = {{"x_ids", record.prompt_ids},
                      {"y", record.output_text},
                      {"t_infer", record.output_ids},
                      {"logprob", record.sampler_logprob}};
  return j.dump();
}

GenerationRecord deserialize(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    GenerationRecord record;
    record.prompt_ids = j.at("x_ids").get<TokenIds>();
    record.output_text = j.at("y").get<std::string>();
    record.output_ids = j.at("t_infer").get<TokenIds>();
    record.sampler_logprob = j.at("logprob").get<double>();
    return record;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, e.what());
  }
}

AmbiguousFixture ambiguous_fixture() {
  constexpr TokenId kStop = 0, kA = 1, kB = 2, kAB = 3, kC = 4, kBos = 9;
  ToyTokenizer tokenizer({{"a", kA}, {"b", kB}, {"ab", kAB}, {"c", kC}});
  ToyScorer::Table table = {
      {{kBos}, {{kA, 0.9}, {kAB, 0.05}, {kC, 0.05}}},
      {{kA}, {{kB, 0.9}, {kStop, 0.05}, {kC, 0.05}}},
      {{kB}, {{kStop, 0.8}, {kC, 0.2}}},
      {{kAB}, {{kStop, 0.7}, {kC, 0.3}}},
      {{kC}, {{kStop, 0.6}, {kA, 0.2}, {kB, 0.2}}},
  };
  return {std::move(tokenizer), ToyScorer(1, kStop, std::move(table)), {kBos}};
}

GenerationRecord retokenized(const GenerationRecord& record, const ToyTokenizer& tokenizer) {
  GenerationRecord out = record;
  out.output_ids = tokenizer.encode(record.output_text);
  return out;
}

}  // namespace flywheel::transport
