#pragma once

// Query-log ingestion: normalization, background filtering, prefix
// extraction and dataset splitting.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "nqac/timestamp.hpp"

namespace nqac::corpus {

struct QueryRecord {
  std::string user_id;
  std::string query;  // normalized
  Timestamp timestamp;

  friend bool operator==(const QueryRecord&, const QueryRecord&) = default;
};

struct PrefixSample {
  std::string prefix;
  std::string target;
  std::string user_id;
  Timestamp timestamp;

  friend bool operator==(const PrefixSample&, const PrefixSample&) = default;
};

// Column layout of a tab-separated log. Defaults match the AOL dump
// (AnonID, Query, QueryTime, ItemRank, ClickURL).
struct LogFormat {
  std::size_t user_column = 0;
  std::size_t query_column = 1;
  std::size_t timestamp_column = 2;
  // When set, a first line whose timestamp column does not parse is treated
  // as a header rather than a malformed record.
  bool allow_header = true;
};

struct ParseReport {
  std::size_t lines = 0;
  std::size_t parsed = 0;
  std::size_t malformed = 0;
  bool header_skipped = false;
};

struct ParseResult {
  std::vector<QueryRecord> records;
  ParseReport report;
};

// Lowercase (ASCII), map control characters to spaces, collapse whitespace
// runs to one space, trim.
std::string normalize(std::string_view text);

// Like normalize(), but a trailing run of whitespace after non-blank text is
// kept as one space: a typed prefix "new " differs from "new".
std::string normalize_prefix(std::string_view text);

// Whitespace-separated words of an already normalized query.
std::vector<std::string> split_words(std::string_view query);

ParseResult parse_log(std::istream& in, const LogFormat& format = {});
ParseResult parse_log_file(const std::string& path, const LogFormat& format = {});

using QueryCounts = std::map<std::string, std::uint64_t>;

QueryCounts filter_background(const std::vector<QueryRecord>& records, std::uint64_t min_count = 3,
                              std::size_t max_len = 100);

std::vector<PrefixSample> extract_prefixes(const QueryRecord& record);

// Shuffle with a seed, then cut by fractions (background, train, validation, test).
struct FractionSplit {
  std::array<double, 4> fractions{0.7, 0.1, 0.1, 0.1};
  std::uint64_t seed = 7;
};

// Sort by timestamp (stable), then cut by fractions.
struct TimeOrderedSplit {
  std::array<double, 4> fractions{0.7, 0.1, 0.1, 0.1};
};

// Explicit cut points: background < first <= train < second <= validation < third <= test.
struct TimeCutSplit {
  std::array<Timestamp, 3> cuts;
};

using SplitPolicy = std::variant<FractionSplit, TimeOrderedSplit, TimeCutSplit>;

struct DatasetSplit {
  std::vector<QueryRecord> background_records;
  std::vector<QueryRecord> train_records;
  std::vector<QueryRecord> validation_records;
  std::vector<QueryRecord> test_records;
  QueryCounts background;  // filtered counts over background_records
  std::vector<PrefixSample> train;
  std::vector<PrefixSample> validation;
  std::vector<PrefixSample> test;
};

struct BackgroundFilter {
  std::uint64_t min_count = 3;
  std::size_t max_len = 100;
};

DatasetSplit split_dataset(const std::vector<QueryRecord>& records, const SplitPolicy& policy,
                           const BackgroundFilter& filter = {});

// TSV persistence. Records: (user_id, query, timestamp). Samples: (prefix, target, user_id, timestamp).
void write_records(std::ostream& out, const std::vector<QueryRecord>& records);
void write_samples(std::ostream& out, const std::vector<PrefixSample>& samples);
std::vector<PrefixSample> read_samples(std::istream& in);
std::vector<PrefixSample> read_samples_file(const std::string& path);

// Counts as "query\tcount" lines.
void write_counts(std::ostream& out, const QueryCounts& counts);
QueryCounts read_counts(std::istream& in);

}  // namespace nqac::corpus
