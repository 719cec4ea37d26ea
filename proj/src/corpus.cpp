#include "nqac/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "nqac/errors.hpp"

namespace nqac::corpus {

namespace {

bool is_blank(unsigned char c) { return c <= 0x20 || c == 0x7F; }

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      cols.push_back(line.substr(start));
      break;
    }
    cols.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return cols;
}

std::vector<std::size_t> cut_points(std::size_t n, const std::array<double, 4>& fractions) {
  double sum = 0;
  for (double f : fractions) {
    if (f < 0 || !std::isfinite(f)) throw ConfigError("split fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  std::vector<std::size_t> cuts;
  double acc = 0;
  for (int i = 0; i < 3; ++i) {
    acc += fractions[i];
    cuts.push_back(std::min(n, static_cast<std::size_t>(std::llround(acc * static_cast<double>(n)))));
  }
  cuts.push_back(n);
  return cuts;
}

std::vector<PrefixSample> expand(const std::vector<QueryRecord>& records) {
  std::vector<PrefixSample> out;
  for (const auto& r : records) {
    auto s = extract_prefixes(r);
    out.insert(out.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  return out;
}

}  // namespace

std::string normalize(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_blank(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
  }
  return out;
}

std::string normalize_prefix(std::string_view text) {
  std::string out = normalize(text);
  if (!out.empty() && !text.empty() && is_blank(static_cast<unsigned char>(text.back()))) out.push_back(' ');
  return out;
}

std::vector<std::string> split_words(std::string_view query) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < query.size()) {
    while (i < query.size() && query[i] == ' ') ++i;
    const auto start = i;
    while (i < query.size() && query[i] != ' ') ++i;
    if (i > start) words.emplace_back(query.substr(start, i - start));
  }
  return words;
}

ParseResult parse_log(std::istream& in, const LogFormat& format) {
  if (!in) throw IoError("query log stream is not readable");
  ParseResult result;
  const std::size_t needed =
      std::max({format.user_column, format.query_column, format.timestamp_column}) + 1;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++result.report.lines;
    const auto cols = split_tabs(line);
    std::optional<Timestamp> ts;
    if (cols.size() >= needed) ts = Timestamp::parse(cols[format.timestamp_column]);
    if (!ts) {
      if (result.report.lines == 1 && format.allow_header && cols.size() >= needed) {
        result.report.header_skipped = true;
        continue;
      }
      ++result.report.malformed;
      continue;
    }
    QueryRecord rec{std::string(cols[format.user_column]), normalize(cols[format.query_column]), *ts};
    if (rec.query.empty() || rec.user_id.empty()) {
      ++result.report.malformed;
      continue;
    }
    result.records.push_back(std::move(rec));
    ++result.report.parsed;
  }
  if (in.bad()) throw IoError("read failure in query log");
  return result;
}

ParseResult parse_log_file(const std::string& path, const LogFormat& format) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open query log: " + path);
  return parse_log(in, format);
}

QueryCounts filter_background(const std::vector<QueryRecord>& records, std::uint64_t min_count,
                              std::size_t max_len) {
  QueryCounts all;
  for (const auto& r : records) ++all[r.query];
  QueryCounts kept;
  for (auto& [q, n] : all)
    if (n >= min_count && q.size() <= max_len) kept.emplace(q, n);
  return kept;
}

std::vector<PrefixSample> extract_prefixes(const QueryRecord& record) {
  std::vector<PrefixSample> out;
  const auto& q = record.query;
  const auto first_end = q.find(' ');
  const std::size_t first_len = first_end == std::string::npos ? q.size() : first_end;
  for (std::size_t len = first_len + 1; len + 1 <= q.size(); ++len)
    out.push_back({q.substr(0, len), q, record.user_id, record.timestamp});
  return out;
}

DatasetSplit split_dataset(const std::vector<QueryRecord>& records, const SplitPolicy& policy,
                           const BackgroundFilter& filter) {
  DatasetSplit split;
  std::array<std::vector<QueryRecord>*, 4> parts{&split.background_records, &split.train_records,
                                                 &split.validation_records, &split.test_records};

  auto cut_by_fraction = [&](const std::vector<std::size_t>& order, const std::array<double, 4>& f) {
    const auto cuts = cut_points(order.size(), f);
    std::size_t part = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
      while (i >= cuts[part]) ++part;
      parts[part]->push_back(records[order[i]]);
    }
  };

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);

  if (const auto* p = std::get_if<FractionSplit>(&policy)) {
    std::mt19937_64 rng(p->seed);
    // Fisher-Yates with our own index draw so the permutation does not depend
    // on the standard library's distribution implementation.
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    cut_by_fraction(order, p->fractions);
  } else if (const auto* p = std::get_if<TimeOrderedSplit>(&policy)) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return records[a].timestamp < records[b].timestamp;
    });
    cut_by_fraction(order, p->fractions);
  } else {
    const auto& cuts = std::get<TimeCutSplit>(policy).cuts;
    if (!(cuts[0] <= cuts[1] && cuts[1] <= cuts[2]))
      throw ConfigError("time cut points must be non-decreasing");
    for (const auto& r : records) {
      std::size_t part = 0;
      while (part < 3 && !(r.timestamp < cuts[part])) ++part;
      parts[part]->push_back(r);
    }
  }

  split.background = filter_background(split.background_records, filter.min_count, filter.max_len);
  split.train = expand(split.train_records);
  split.validation = expand(split.validation_records);
  split.test = expand(split.test_records);
  return split;
}

void write_records(std::ostream& out, const std::vector<QueryRecord>& records) {
  for (const auto& r : records)
    out << r.user_id << '\t' << r.query << '\t' << r.timestamp.to_string() << '\n';
}

void write_samples(std::ostream& out, const std::vector<PrefixSample>& samples) {
  for (const auto& s : samples)
    out << s.prefix << '\t' << s.target << '\t' << s.user_id << '\t' << s.timestamp.to_string()
        << '\n';
}

std::vector<PrefixSample> read_samples(std::istream& in) {
  std::vector<PrefixSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cols = split_tabs(line);
    std::optional<Timestamp> ts;
    if (cols.size() >= 4) ts = Timestamp::parse(cols[3]);
    if (!ts) throw ParseError("bad prefix sample at line " + std::to_string(lineno));
    out.push_back({std::string(cols[0]), std::string(cols[1]), std::string(cols[2]), *ts});
  }
  return out;
}

std::vector<PrefixSample> read_samples_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open sample file: " + path);
  return read_samples(in);
}

void write_counts(std::ostream& out, const QueryCounts& counts) {
  for (const auto& [q, n] : counts) out << q << '\t' << n << '\n';
}

QueryCounts read_counts(std::istream& in) {
  QueryCounts counts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw ParseError("bad count line " + std::to_string(lineno));
    try {
      counts[line.substr(0, tab)] += std::stoull(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw ParseError("bad count line " + std::to_string(lineno));
    }
  }
  return counts;
}

}  // namespace nqac::corpus
