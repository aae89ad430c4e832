#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "irs/errors.hpp"
#include "irs/retrieval.hpp"

namespace irs {

inline constexpr std::size_t kDefaultConsensusThreshold = 5;

/// Retrieved train index per (query, extractor), stored row-major.
class VoteTable {
 public:
  VoteTable() = default;

  void add_column(std::string extractor_name, std::span<const std::int64_t> votes) {
    if (names_.empty()) {
      n_query_ = votes.size();
    } else {
      detail::require(votes.size() == n_query_, "extractor '" + extractor_name + "' voted on " +
                                                    std::to_string(votes.size()) + " queries, expected " +
                                                    std::to_string(n_query_));
    }
    names_.push_back(std::move(extractor_name));
    columns_.emplace_back(votes.begin(), votes.end());
  }

  void add_column(std::string extractor_name, const RetrievalOutcome& outcome) {
    add_column(std::move(extractor_name), std::span<const std::int64_t>(outcome.nearest));
  }

  const std::vector<std::string>& extractor_names() const { return names_; }
  std::size_t n_query() const { return n_query_; }
  std::size_t n_extractors() const { return names_.size(); }
  std::int64_t vote(std::size_t query, std::size_t extractor) const { return columns_[extractor][query]; }

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<std::int64_t>> columns_;
  std::size_t n_query_ = 0;
};

struct ConsensusResult {
  std::size_t threshold = kDefaultConsensusThreshold;
  std::vector<std::optional<std::int64_t>> assignment;
  std::size_t n_consensus = 0;
  std::vector<double> agreement;  // per extractor; 0 when no query reached consensus
};

namespace detail {

// (index, votes) pairs for one query, most-voted first, ties by index.
inline std::vector<std::pair<std::int64_t, std::size_t>> tally(const VoteTable& table, std::size_t query) {
  std::vector<std::int64_t> votes(table.n_extractors());
  for (std::size_t e = 0; e < votes.size(); ++e) votes[e] = table.vote(query, e);
  std::sort(votes.begin(), votes.end());
  std::vector<std::pair<std::int64_t, std::size_t>> counts;
  for (const auto v : votes) {
    if (!counts.empty() && counts.back().first == v) {
      ++counts.back().second;
    } else {
      counts.emplace_back(v, 1);
    }
  }
  std::stable_sort(counts.begin(), counts.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return counts;
}

}  // namespace detail

/// Consensus per query: the index with at least `threshold` votes. Below a
/// strict majority two indices can qualify; the one with more votes wins and
/// an exact tie leaves the query without consensus.
inline ConsensusResult build_consensus(const VoteTable& table,
                                       std::size_t threshold = kDefaultConsensusThreshold) {
  detail::require(table.n_extractors() >= 2, "consensus needs at least two extractors");
  detail::require(threshold >= 2 && threshold <= table.n_extractors(),
                  "consensus threshold " + std::to_string(threshold) + " must lie in [2, " +
                      std::to_string(table.n_extractors()) + "]");
  ConsensusResult result;
  result.threshold = threshold;
  result.assignment.resize(table.n_query());
  std::vector<std::size_t> matches(table.n_extractors(), 0);
  for (std::size_t q = 0; q < table.n_query(); ++q) {
    const auto counts = detail::tally(table, q);
    if (counts.front().second < threshold) continue;
    if (counts.size() > 1 && counts[1].second == counts.front().second) continue;
    const auto winner = counts.front().first;
    result.assignment[q] = winner;
    ++result.n_consensus;
    for (std::size_t e = 0; e < table.n_extractors(); ++e) matches[e] += table.vote(q, e) == winner;
  }
  result.agreement.resize(table.n_extractors(), 0.0);
  if (result.n_consensus > 0) {
    for (std::size_t e = 0; e < matches.size(); ++e) {
      result.agreement[e] = static_cast<double>(matches[e]) / static_cast<double>(result.n_consensus);
    }
  }
  return result;
}

/// counts[L-1] = number of queries whose most common vote has L supporters.
inline std::vector<std::size_t> consensus_histogram(const VoteTable& table) {
  std::vector<std::size_t> counts(table.n_extractors(), 0);
  for (std::size_t q = 0; q < table.n_query(); ++q) ++counts[detail::tally(table, q).front().second - 1];
  return counts;
}

/// Fraction of queries on which extractors i and j retrieve the same index.
inline std::vector<std::vector<double>> pairwise_agreement(const VoteTable& table) {
  const std::size_t m = table.n_extractors();
  std::vector<std::vector<double>> out(m, std::vector<double>(m, 1.0));
  if (table.n_query() == 0) return out;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      std::size_t same = 0;
      for (std::size_t q = 0; q < table.n_query(); ++q) same += table.vote(q, i) == table.vote(q, j);
      out[i][j] = out[j][i] = static_cast<double>(same) / static_cast<double>(table.n_query());
    }
  }
  return out;
}

}  // namespace irs
