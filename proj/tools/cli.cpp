#include "nqac/cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "nqac/corpus.hpp"
#include "nqac/engine.hpp"
#include "nqac/errors.hpp"
#include "nqac/eval.hpp"
#include "nqac/features.hpp"
#include "nqac/lm_train.hpp"
#include "nqac/mpc.hpp"
#include "nqac/service.hpp"

namespace nqac::cli {

namespace {

// Raised for unreadable or inconsistent artifacts so they map to exit code 2
// even when the library reports them as configuration problems.
class ArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EngineOptions {
  std::string trie, model, words, users;
  std::size_t beam_width = 10;
  std::size_t max_length = 30;
  double diversity = 0.5;

  void add_to(CLI::App* app) {
    app->add_option("--trie", trie, "MPC trie file");
    app->add_option("--model", model, "language model file");
    app->add_option("--words", words, "word embedding table");
    app->add_option("--users", users, "user vector table");
    app->add_option("--beam-width", beam_width, "beam width")->capture_default_str();
    app->add_option("--max-length", max_length, "maximum generated characters")->capture_default_str();
    app->add_option("--diversity", diversity, "diversity penalty weight")->capture_default_str();
  }

  engine::QacEngine build() const {
    engine::EnginePaths p;
    if (!trie.empty()) p.trie = trie;
    if (!model.empty()) p.model = model;
    if (!words.empty()) p.word_embeddings = words;
    if (!users.empty()) p.user_vectors = users;
    if (!p.trie && !p.model) throw ConfigError("need --trie, --model, or both");
    decoder::DecoderConfig d;
    d.beam_width = beam_width;
    d.max_length = max_length;
    d.diversity = diversity;
    d.k = std::min<std::size_t>(d.k, beam_width);
    d.validate();
    try {
      return engine::QacEngine::build(p, d);
    } catch (const ConfigError& e) {
      throw ArtifactError(e.what());
    }
  }
};

const std::map<std::string, engine::Strategy> kStrategies{{"mpc", engine::Strategy::mpc},
                                                          {"neural", engine::Strategy::neural},
                                                          {"neural_diverse", engine::Strategy::neural_diverse},
                                                          {"routed", engine::Strategy::routed}};

std::vector<corpus::QueryRecord> read_records(const std::string& path, std::ostream& err) {
  const auto parsed = corpus::parse_log_file(path);
  if (parsed.report.malformed > 0)
    err << path << ": skipped " << parsed.report.malformed << " malformed line(s)\n";
  return parsed.records;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  return out;
}

std::vector<std::string> queries_of(const std::vector<corpus::QueryRecord>& records) {
  std::vector<std::string> q;
  q.reserve(records.size());
  for (const auto& r : records) q.push_back(r.query);
  return q;
}

std::vector<lm::TrainingExample> examples_for(const std::vector<corpus::QueryRecord>& records,
                                              const lm::ModelSpec& spec, const features::UserVectorTable* users) {
  std::vector<lm::TrainingExample> out;
  out.reserve(records.size());
  for (const auto& r : records)
    out.push_back({r.query, lm::make_context(spec, users, r.user_id, r.timestamp)});
  return out;
}

std::vector<corpus::PrefixSample> limit(std::vector<corpus::PrefixSample> s, std::size_t n) {
  if (n > 0 && s.size() > n) s.resize(n);
  return s;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Query auto-completion toolkit", args.empty() ? "nqac" : args[0]};
  app.require_subcommand(1);

  // ingest
  std::string ingest_log, ingest_out;
  corpus::LogFormat format;
  bool no_header = false;
  auto* ingest = app.add_subcommand("ingest", "parse a raw query log into normalized records");
  ingest->add_option("--log", ingest_log, "tab-separated query log")->required();
  ingest->add_option("--out", ingest_out, "records output (user, query, time)")->required();
  ingest->add_option("--user-col", format.user_column)->capture_default_str();
  ingest->add_option("--query-col", format.query_column)->capture_default_str();
  ingest->add_option("--time-col", format.timestamp_column)->capture_default_str();
  ingest->add_flag("--no-header", no_header, "treat the first line as data");

  // split
  std::string split_records, split_dir, split_policy = "fraction";
  std::vector<double> fractions{0.7, 0.1, 0.1, 0.1};
  std::uint64_t split_seed = 7;
  corpus::BackgroundFilter filter;
  auto* split = app.add_subcommand("split", "split records into background/train/validation/test");
  split->add_option("--records", split_records)->required();
  split->add_option("--out-dir", split_dir)->required();
  split->add_option("--policy", split_policy)->check(CLI::IsMember({"fraction", "time"}))->capture_default_str();
  split->add_option("--fractions", fractions)->expected(4)->capture_default_str();
  split->add_option("--seed", split_seed)->capture_default_str();
  split->add_option("--min-count", filter.min_count)->capture_default_str();
  split->add_option("--max-len", filter.max_len)->capture_default_str();

  // build-trie
  std::string trie_counts, trie_out;
  auto* build_trie = app.add_subcommand("build-trie", "build the MPC trie from background counts");
  build_trie->add_option("--counts", trie_counts, "query<TAB>count file")->required();
  build_trie->add_option("--out", trie_out)->required();

  // train-embeddings
  std::string emb_records, emb_out;
  features::WordEmbeddingConfig emb;
  auto* train_emb = app.add_subcommand("train-embeddings", "skip-gram word embeddings over queries");
  train_emb->add_option("--records", emb_records)->required();
  train_emb->add_option("--out", emb_out)->required();
  train_emb->add_option("--dim", emb.dim)->capture_default_str();
  train_emb->add_option("--epochs", emb.epochs)->capture_default_str();
  train_emb->add_option("--window", emb.window)->capture_default_str();
  train_emb->add_option("--negative", emb.negative_samples)->capture_default_str();
  train_emb->add_option("--lr", emb.learning_rate)->capture_default_str();
  train_emb->add_option("--seed", emb.seed)->capture_default_str();

  // train-users
  std::string usr_records, usr_out;
  features::UserVectorConfig usr;
  std::size_t history = 0;
  auto* train_users = app.add_subcommand("train-users", "user vectors from query histories");
  train_users->add_option("--records", usr_records)->required();
  train_users->add_option("--out", usr_out)->required();
  train_users->add_option("--dim", usr.dim)->capture_default_str();
  train_users->add_option("--epochs", usr.epochs)->capture_default_str();
  train_users->add_option("--lr", usr.learning_rate)->capture_default_str();
  train_users->add_option("--seed", usr.seed)->capture_default_str();
  train_users->add_option("--history", history, "most recent queries per user (0 = all)")->capture_default_str();
  train_users->add_flag("--full-batch", usr.full_batch);

  // train-lm
  std::string lm_train_path, lm_val_path, lm_out, lm_words, lm_users, lm_metrics, activation = "relu";
  lm::ModelSpec spec;
  lm::TrainConfig tc;
  std::size_t min_char_freq = 5;
  bool no_time = false;
  std::uint64_t init_seed = 1;
  auto* train_lm = app.add_subcommand("train-lm", "train the character language model");
  train_lm->add_option("--train", lm_train_path, "training records")->required();
  train_lm->add_option("--validation", lm_val_path, "validation records");
  train_lm->add_option("--out", lm_out)->required();
  train_lm->add_option("--words", lm_words, "word embedding table (omit to drop the word slot)");
  train_lm->add_option("--users", lm_users, "user vector table (omit to drop the user slot)");
  train_lm->add_flag("--no-time", no_time, "drop the time slot");
  train_lm->add_option("--hidden", spec.hidden)->capture_default_str();
  train_lm->add_option("--layers", spec.layers)->capture_default_str();
  train_lm->add_option("--activation", activation)->check(CLI::IsMember({"relu", "tanh"}))->capture_default_str();
  train_lm->add_option("--epochs", tc.epochs)->capture_default_str();
  train_lm->add_option("--lr", tc.learning_rate)->capture_default_str();
  train_lm->add_option("--batch", tc.batch_size)->capture_default_str();
  train_lm->add_option("--dropout", tc.dropout)->capture_default_str();
  train_lm->add_option("--clip", tc.clip_norm)->capture_default_str();
  train_lm->add_option("--seed", tc.seed)->capture_default_str();
  train_lm->add_option("--init-seed", init_seed)->capture_default_str();
  train_lm->add_option("--max-len", tc.max_sequence_length)->capture_default_str();
  train_lm->add_option("--min-char-freq", min_char_freq)->capture_default_str();
  train_lm->add_option("--metrics", lm_metrics, "per-epoch JSON lines");

  // eval
  std::string eval_test, eval_json;
  std::vector<std::string> eval_strategies;
  eval::EvalOptions eval_opts;
  eval_opts.passes = 3;
  std::size_t eval_limit = 0;
  EngineOptions eval_engine;
  auto* eval_cmd = app.add_subcommand("eval", "MRR and latency on test prefixes");
  eval_cmd->add_option("--test", eval_test, "prefix samples (prefix, target, user, time)")->required();
  eval_cmd->add_option("--strategy", eval_strategies, "repeatable; default: every available one")
      ->check(CLI::IsMember({"mpc", "neural", "neural_diverse", "routed"}));
  eval_cmd->add_option("--k", eval_opts.k)->capture_default_str();
  eval_cmd->add_option("--passes", eval_opts.passes, "timing passes")->capture_default_str();
  eval_cmd->add_option("--limit", eval_limit, "use only the first N samples")->capture_default_str();
  eval_cmd->add_option("--json", eval_json, "write the report as JSON");
  eval_engine.add_to(eval_cmd);

  // suggest
  std::string sug_prefix, sug_user, sug_time, sug_strategy = "routed";
  std::size_t sug_k = 10;
  EngineOptions sug_engine;
  auto* suggest = app.add_subcommand("suggest", "print completions for one prefix");
  suggest->add_option("--prefix", sug_prefix)->required();
  suggest->add_option("--strategy", sug_strategy)
      ->check(CLI::IsMember({"mpc", "neural", "neural_diverse", "routed"}))
      ->capture_default_str();
  suggest->add_option("--k", sug_k)->capture_default_str();
  suggest->add_option("--user", sug_user);
  suggest->add_option("--time", sug_time, "ISO-8601 timestamp");
  sug_engine.add_to(suggest);

  // serve
  std::string serve_config;
  int serve_port = -1;
  auto* serve = app.add_subcommand("serve", "run the HTTP suggestion service");
  serve->add_option("--config", serve_config, "key = value config file")->required();
  serve->add_option("--port", serve_port, "override the configured port");

  // bench
  std::string bench_test, bench_strategy = "routed";
  std::size_t bench_k = 10, bench_limit = 200;
  int bench_iterations = 1;
  EngineOptions bench_engine;
  auto* bench = app.add_subcommand("bench", "suggest latency over a prefix file");
  bench->add_option("--test", bench_test)->required();
  bench->add_option("--strategy", bench_strategy)
      ->check(CLI::IsMember({"mpc", "neural", "neural_diverse", "routed"}))
      ->capture_default_str();
  bench->add_option("--k", bench_k)->capture_default_str();
  bench->add_option("--limit", bench_limit)->capture_default_str();
  bench->add_option("--iterations", bench_iterations)->capture_default_str();
  bench_engine.add_to(bench);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("nqac");
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*ingest) {
      format.allow_header = !no_header;
      const auto parsed = corpus::parse_log_file(ingest_log, format);
      auto o = open_out(ingest_out);
      corpus::write_records(o, parsed.records);
      out << "lines " << parsed.report.lines << ", records " << parsed.report.parsed << ", malformed "
          << parsed.report.malformed << (parsed.report.header_skipped ? ", header skipped" : "") << '\n';
    } else if (*split) {
      const auto records = read_records(split_records, err);
      corpus::SplitPolicy policy;
      const std::array<double, 4> f{fractions[0], fractions[1], fractions[2], fractions[3]};
      if (split_policy == "time")
        policy = corpus::TimeOrderedSplit{f};
      else
        policy = corpus::FractionSplit{f, split_seed};
      const auto s = corpus::split_dataset(records, policy, filter);
      std::filesystem::create_directories(split_dir);
      const std::filesystem::path dir(split_dir);
      auto write_r = [&](const char* name, const auto& r) {
        auto o = open_out((dir / name).string());
        corpus::write_records(o, r);
      };
      auto write_s = [&](const char* name, const auto& r) {
        auto o = open_out((dir / name).string());
        corpus::write_samples(o, r);
      };
      write_r("background.tsv", s.background_records);
      write_r("train.tsv", s.train_records);
      write_r("validation.tsv", s.validation_records);
      write_r("test.tsv", s.test_records);
      {
        auto o = open_out((dir / "background_counts.tsv").string());
        corpus::write_counts(o, s.background);
      }
      write_s("train_prefixes.tsv", s.train);
      write_s("validation_prefixes.tsv", s.validation);
      write_s("test_prefixes.tsv", s.test);
      out << "background " << s.background_records.size() << " (" << s.background.size() << " distinct kept), train "
          << s.train_records.size() << ", validation " << s.validation_records.size() << ", test "
          << s.test_records.size() << " records; test prefixes " << s.test.size() << '\n';
    } else if (*build_trie) {
      std::ifstream in(trie_counts);
      if (!in) throw IoError("cannot open counts: " + trie_counts);
      const mpc::CountedTrie trie(corpus::read_counts(in));
      trie.save_file(trie_out);
      out << "queries " << trie.size() << ", nodes " << trie.node_count() << ", total count " << trie.total() << '\n';
    } else if (*train_emb) {
      const auto table = features::train_word_embeddings(queries_of(read_records(emb_records, err)), emb);
      table.save_text_file(emb_out);
      out << "words " << table.size() << ", dim " << table.dim() << '\n';
    } else if (*train_users) {
      const auto hist = features::build_user_histories(read_records(usr_records, err), history);
      const auto trained = features::train_user_vectors(hist, usr);
      trained.table.save_text_file(usr_out);
      out << "users " << trained.table.size() << ", dim " << trained.table.dim();
      if (!trained.objective.empty()) out << ", objective " << trained.objective.front() << " -> " << trained.objective.back();
      out << '\n';
    } else if (*train_lm) {
      const auto train_records = read_records(lm_train_path, err);
      std::optional<features::WordEmbeddingTable> words;
      std::optional<features::UserVectorTable> users;
      try {
        if (!lm_words.empty()) words = features::VectorTable::load_text_file(lm_words);
        if (!lm_users.empty()) users = features::VectorTable::load_text_file(lm_users);
      } catch (const ParseError& e) {
        throw ArtifactError(e.what());
      }
      spec.word_dim = words ? words->dim() : 0;
      spec.user_dim = users ? users->dim() : 0;
      spec.time_dim = no_time ? 0 : 4;
      spec.candidate = activation == "tanh" ? lm::Activation::tanh : lm::Activation::relu;
      tc.validate();
      const auto vocab = lm::Vocabulary::build(queries_of(train_records), min_char_freq);
      auto model = lm::LmModel::random(spec, vocab, init_seed);
      const auto* users_ptr = users ? &*users : nullptr;
      const auto train_set = examples_for(train_records, spec, users_ptr);
      std::vector<lm::TrainingExample> val_set;
      if (!lm_val_path.empty()) val_set = examples_for(read_records(lm_val_path, err), spec, users_ptr);
      std::ofstream metrics;
      if (!lm_metrics.empty()) metrics = open_out(lm_metrics);
      const auto result = lm::train(model, words ? &*words : nullptr, train_set, val_set, tc, {},
                                    lm_metrics.empty() ? nullptr : &metrics);
      model.save_file(lm_out);
      out << "parameters " << model.parameter_count() << ", vocabulary " << vocab.size();
      if (!result.history.empty()) {
        const auto& last = result.history.back();
        out << ", final train loss " << last.train.per_query << " (" << last.train.per_char << " per char)";
        if (last.validation) out << ", validation " << last.validation->per_query;
      }
      out << '\n';
    } else if (*eval_cmd) {
      const auto engine = eval_engine.build();
      const auto samples = limit(corpus::read_samples_file(eval_test), eval_limit);
      std::vector<engine::Strategy> strategies;
      for (const auto& s : eval_strategies) strategies.push_back(kStrategies.at(s));
      if (strategies.empty()) {
        if (engine.has_trie()) strategies.push_back(engine::Strategy::mpc);
        if (engine.has_model()) {
          strategies.push_back(engine::Strategy::neural);
          strategies.push_back(engine::Strategy::neural_diverse);
        }
        if (engine.has_trie() && engine.has_model()) strategies.push_back(engine::Strategy::routed);
      }
      std::vector<eval::EvalReport> reports;
      for (auto s : strategies) reports.push_back(eval::evaluate(engine, samples, s, eval_opts));
      out << eval::format_table(reports);
      nlohmann::json j{{"reports", nlohmann::json::array()}, {"t_tests", nlohmann::json::array()}};
      for (const auto& r : reports) j["reports"].push_back(eval::to_json(r));
      for (std::size_t i = 1; i < reports.size() && samples.size() >= 2; ++i) {
        const auto t = eval::paired_t_test(reports[i].reciprocal_ranks, reports[0].reciprocal_ranks);
        out << "paired t-test " << reports[i].strategy << " vs " << reports[0].strategy << ": t = " << t.t_statistic
            << ", p = " << t.p_value << '\n';
        j["t_tests"].push_back({{"a", reports[i].strategy},
                                {"b", reports[0].strategy},
                                {"mean_difference", t.mean_difference},
                                {"t", t.t_statistic},
                                {"p", t.p_value}});
      }
      if (!eval_json.empty()) open_out(eval_json) << j.dump(2) << '\n';
    } else if (*suggest) {
      engine::SuggestRequest req;
      req.prefix = sug_prefix;
      req.k = sug_k;
      req.strategy = kStrategies.at(sug_strategy);
      if (!sug_user.empty()) req.user_id = sug_user;
      if (!sug_time.empty()) {
        req.timestamp = Timestamp::parse(sug_time);
        if (!req.timestamp) throw ConfigError("--time must be an ISO-8601 timestamp");
      }
      const auto engine = sug_engine.build();
      const auto resp = engine.suggest(req);
      for (std::size_t i = 0; i < resp.suggestions.size(); ++i)
        out << (i + 1) << '\t' << resp.suggestions[i].text << '\t' << resp.suggestions[i].score << '\n';
    } else if (*serve) {
      auto config = service::load_config(serve_config);
      if (serve_port >= 0) config.port = serve_port;
      try {
        service::run(config);
      } catch (const ConfigError& e) {
        throw ArtifactError(e.what());
      }
    } else if (*bench) {
      const auto engine = bench_engine.build();
      const auto samples = limit(corpus::read_samples_file(bench_test), bench_limit);
      if (samples.empty()) throw EvalError("no prefixes to benchmark");
      std::vector<double> ms;
      for (int it = 0; it < std::max(1, bench_iterations); ++it)
        for (const auto& s : samples) {
          engine::SuggestRequest req{s.prefix, s.user_id, s.timestamp, bench_k, kStrategies.at(bench_strategy)};
          const auto t0 = std::chrono::steady_clock::now();
          engine.suggest(req);
          ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
        }
      std::sort(ms.begin(), ms.end());
      auto pct = [&](double q) {
        const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(ms.size()))) - 1;
        return ms[std::min(idx, ms.size() - 1)];
      };
      double sum = 0;
      for (double m : ms) sum += m;
      out << nlohmann::json{{"strategy", bench_strategy},
                            {"requests", ms.size()},
                            {"mean_ms", sum / static_cast<double>(ms.size())},
                            {"p50_ms", pct(0.5)},
                            {"p95_ms", pct(0.95)},
                            {"max_ms", ms.back()}}
                 .dump()
          << '\n';
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace nqac::cli
