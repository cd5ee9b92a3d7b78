// quadgen command-line tool. Subcommands: stats, build-vocab, train-lcd, infer-lcd,
// train, decode, eval, trie-dump. Exit codes: 0 ok, 1 usage, 2 data, 3 numeric.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "quadgen/cbow.hpp"
#include "quadgen/decode.hpp"
#include "quadgen/eval.hpp"
#include "quadgen/fusion.hpp"
#include "quadgen/lcd.hpp"
#include "quadgen/linearize.hpp"
#include "quadgen/schema.hpp"
#include "quadgen/scorers.hpp"
#include "quadgen/trie.hpp"

namespace fs = std::filesystem;
using namespace quadgen;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void setup_logging() {
  auto logger = spdlog::stderr_logger_mt("quadgen");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* lvl = std::getenv("QUADGEN_LOG")) spdlog::set_level(spdlog::level::from_str(lvl));
}

// One sentence per line; anything after the first tab (ACOS annotations) is ignored.
std::vector<TokenSeq> read_sentences(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::vector<TokenSeq> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(split_whitespace(to_lower(line.substr(0, line.find('\t')))));
  return out;
}

std::vector<Sample> ingest_or_fail(const std::string& path, const CategorySchema* schema) {
  auto r = ingest_acos_file(path, default_polarity_map(), schema);
  for (const auto& i : r.issues) spdlog::warn("{}:{}: {}", path, i.line, i.message);
  if (!r.issues.empty()) throw DataError(path + ": " + std::to_string(r.issues.size()) + " malformed line(s)");
  return r.samples;
}

CbowExclusions exclusions(const std::string& stopwords, const std::string& sentiment) {
  CbowExclusions ex;
  if (!stopwords.empty()) ex.stopwords = load_word_list(stopwords);
  if (!sentiment.empty()) ex.sentiment_words = load_word_list(sentiment);
  return ex;
}

std::vector<VectorXd> features(std::span<const Sample> samples, const CbowVocab& vocab) {
  std::vector<VectorXd> xs;
  for (const auto& s : samples) xs.push_back(featurize(s.text, vocab));
  return xs;
}

void write_curve(const std::string& path, const std::vector<double>& values) {
  if (path.empty()) return;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "epoch,loss\n";
  for (std::size_t i = 0; i < values.size(); ++i) out << i + 1 << ',' << values[i] << '\n';
}

std::ostream& output(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path);
  if (!file) throw DataError("cannot write '" + path + "'");
  file.precision(17);
  return file;
}

// Gold may be linearized (one sequence per line) or ACOS TSV.
std::vector<std::vector<Quadruple>> read_gold(const std::string& path, const CategorySchema& schema, bool sep) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string first;
  std::getline(in, first);
  in.close();
  std::vector<std::vector<Quadruple>> out;
  if (first.find('\t') != std::string::npos) {
    for (auto& s : ingest_or_fail(path, &schema)) out.push_back(std::move(s.gold));
    return out;
  }
  std::ifstream again(path);
  std::string line;
  std::size_t n = 0;
  while (std::getline(again, line)) {
    ++n;
    try {
      out.push_back(parse(split_whitespace(line), schema, {sep}));
    } catch (const ParseError& e) {
      throw DataError(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

struct Common {
  std::uint64_t seed = 42;          // parameter initialization
  std::uint64_t shuffle_seed = 13;  // minibatch order and reparameterization noise
};

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"quadgen: trie-constrained generative extraction of sentiment quadruples"};
  app.require_subcommand(1);
  app.set_config("--config", "", "INI/TOML config file (key = value, [subcommand] sections); flags win");
  Common common;
  app.add_option("--seed", common.seed, "seed for parameter initialization and random scorers")->capture_default_str();
  app.add_option("--shuffle-seed", common.shuffle_seed, "seed for minibatch order and sampling noise")
      ->capture_default_str();

  // stats
  auto* stats = app.add_subcommand("stats", "sample / quadruple / implicit-element counts of ACOS TSV splits");
  std::vector<std::string> stats_files;
  std::string stats_name = "dataset";
  stats->add_option("files", stats_files, "one ACOS TSV file per split")->required();
  stats->add_option("--name", stats_name, "dataset name for the table header");

  // build-vocab
  auto* bv = app.add_subcommand("build-vocab", "build the category bag-of-words vocabulary");
  std::string bv_train, bv_out, bv_stop, bv_sent;
  std::size_t bv_min_freq = 1;
  bv->add_option("--train", bv_train, "training ACOS TSV")->required();
  bv->add_option("--out", bv_out, "output vocabulary, one word per line")->required();
  bv->add_option("--stopwords", bv_stop, "stopword list (default: built-in)");
  bv->add_option("--sentiment-words", bv_sent, "sentiment word list (default: built-in)");
  bv->add_option("--min-freq", bv_min_freq)->capture_default_str();

  // train-lcd
  auto* tl = app.add_subcommand("train-lcd", "pre-train the latent category VAE on CBoW features");
  std::string tl_train, tl_vocab, tl_schema, tl_out, tl_curve;
  LcdTrainConfig tl_cfg;
  Index tl_dim = 32, tl_hidden = 256;
  tl->add_option("--train", tl_train, "training ACOS TSV")->required();
  tl->add_option("--vocab", tl_vocab, "CBoW vocabulary")->required();
  tl->add_option("--schema", tl_schema, "schema file; K = number of categories")->required();
  tl->add_option("--out", tl_out, "output tensor file")->required();
  tl->add_option("--epochs", tl_cfg.epochs)->capture_default_str();
  tl->add_option("--lr", tl_cfg.learning_rate)->capture_default_str();
  tl->add_option("--batch", tl_cfg.batch_size)->capture_default_str();
  tl->add_option("--kl-warmup", tl_cfg.kl_warmup)->capture_default_str();
  tl->add_option("--dim", tl_dim)->capture_default_str();
  tl->add_option("--hidden", tl_hidden)->capture_default_str();
  tl->add_option("--loss-csv", tl_curve, "write the per-epoch loss curve");

  // infer-lcd
  auto* il = app.add_subcommand("infer-lcd", "latent category distribution Z per sentence");
  std::string il_input, il_vocab, il_params, il_out;
  il->add_option("--input", il_input, "sentences (plain text or ACOS TSV)")->required();
  il->add_option("--vocab", il_vocab, "CBoW vocabulary")->required();
  il->add_option("--params", il_params, "LCD tensor file")->required();
  il->add_option("--emit-z", il_out, "CSV output (default stdout)");

  // train
  auto* tr = app.add_subcommand("train", "train the fused seq2seq model with the alternating schedule");
  std::string tr_train, tr_schema, tr_vocab, tr_lcd, tr_out, tr_curve, tr_stop, tr_sent;
  Seq2SeqTrainConfig tr_cfg;
  LcdTrainConfig tr_lcd_cfg;
  Index tr_hidden = 128, tr_dim = 32;
  bool no_lcd = false, rescale_v = false, separators = false;
  tr->add_option("--train", tr_train, "training ACOS TSV")->required();
  tr->add_option("--schema", tr_schema, "schema file (default: derived from the training labels)");
  tr->add_option("--vocab", tr_vocab, "CBoW vocabulary (default: built from --train)");
  tr->add_option("--stopwords", tr_stop);
  tr->add_option("--sentiment-words", tr_sent);
  tr->add_option("--lcd-params", tr_lcd, "pre-trained LCD tensors (default: pre-train here)");
  tr->add_option("--out", tr_out, "model directory")->required();
  tr->add_option("--gen-epochs", tr_cfg.gen_epochs)->capture_default_str();
  tr->add_option("--lcd-epochs", tr_cfg.lcd_epochs)->capture_default_str();
  tr->add_option("--rounds", tr_cfg.rounds)->capture_default_str();
  tr->add_option("--lr", tr_cfg.learning_rate)->capture_default_str();
  tr->add_option("--lcd-lr", tr_cfg.lcd_learning_rate)->capture_default_str();
  tr->add_option("--batch", tr_cfg.batch_size)->capture_default_str();
  tr->add_option("--hidden", tr_hidden)->capture_default_str();
  tr->add_option("--dim", tr_dim)->capture_default_str();
  tr->add_option("--pretrain-epochs", tr_lcd_cfg.epochs)->capture_default_str();
  tr->add_option("--recon-lr", tr_cfg.lcd.learning_rate, "SGD rate of the reconstruction phases")
      ->capture_default_str();
  tr->add_flag("--no-lcd", no_lcd, "ablation: V = H, attention bypassed");
  tr->add_flag("--rescale-v", rescale_v, "multiply V by the sentence length");
  tr->add_flag("--separators", separators, "use '|' field separators in targets");
  tr->add_option("--loss-csv", tr_curve, "write the generation loss curve");

  // decode
  auto* dc = app.add_subcommand("decode", "generate one linearized sequence per input sentence");
  std::string dc_input, dc_schema, dc_model, dc_out, dc_scorer = "toy";
  std::size_t dc_beam = 1, dc_max_len = 128;
  bool dc_unconstrained = false, dc_constrained = false, dc_copy = false, dc_sep = false;
  dc->add_option("--input", dc_input, "sentences; ACOS TSV is required for the oracle scorer")->required();
  dc->add_option("--scorer", dc_scorer, "toy | random | oracle")
      ->check(CLI::IsMember({"toy", "random", "oracle"}))
      ->capture_default_str();
  dc->add_option("--model", dc_model, "model directory (toy scorer)");
  dc->add_option("--schema", dc_schema, "schema file (random / oracle scorers)");
  dc->add_option("--output", dc_out, "output file (default stdout)");
  auto* c_flag = dc->add_flag("--constrained", dc_constrained, "trie-constrained search (default)");
  dc->add_flag("--unconstrained", dc_unconstrained, "plain greedy search (ablation)")->excludes(c_flag);
  dc->add_option("--beam", dc_beam)->check(CLI::PositiveNumber)->capture_default_str();
  dc->add_option("--max-len", dc_max_len)->check(CLI::Range(4, 100000))->capture_default_str();
  dc->add_flag("--copy-restricted", dc_copy, "span tokens only from the source sentence");
  dc->add_flag("--separators", dc_sep, "separator grammar (random / oracle scorers)");

  // eval
  auto* ev = app.add_subcommand("eval", "exact-match P/R/F1 overall and per implicit subset");
  std::string ev_pred, ev_gold, ev_schema, ev_csv;
  bool ev_sep = false;
  ev->add_option("--pred", ev_pred, "predictions, one linearized sequence per line")->required();
  ev->add_option("--gold", ev_gold, "gold, linearized or ACOS TSV")->required();
  ev->add_option("--schema", ev_schema, "schema file")->required();
  ev->add_option("--csv", ev_csv, "also write the table as CSV");
  ev->add_flag("--separators", ev_sep);

  // trie-dump
  auto* td = app.add_subcommand("trie-dump", "print the category and sentiment tries");
  std::string td_schema;
  bool td_split = false;
  td->add_option("--schema", td_schema, "schema file")->required();
  td->add_flag("--split-underscore", td_split, "tokenize symbols on '_'");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  spdlog::info("config hash {:016x} seed {} shuffle-seed {}", fnv1a(app.config_to_str(true, false)), common.seed,
               common.shuffle_seed);

  try {
    if (*stats) {
      std::vector<std::vector<Sample>> splits;
      std::vector<NamedSplit> named;
      for (const auto& f : stats_files) splits.push_back(ingest_or_fail(f, nullptr));
      for (std::size_t i = 0; i < splits.size(); ++i)
        named.emplace_back(fs::path(stats_files[i]).stem().string(), splits[i]);
      write_stats_table(std::cout, stats_name, dataset_stats(named));
    } else if (*bv) {
      auto samples = ingest_or_fail(bv_train, nullptr);
      auto v = build_cbow_vocab(samples, exclusions(bv_stop, bv_sent), bv_min_freq);
      save_cbow_vocab(v, bv_out);
      spdlog::info("CBoW vocabulary: {} words -> {}", v.size(), bv_out);
    } else if (*tl) {
      auto schema = load_schema_file(tl_schema);
      auto samples = ingest_or_fail(tl_train, &schema);
      auto vocab = load_cbow_vocab(tl_vocab);
      auto xs = features(samples, vocab);
      tl_cfg.seed = common.shuffle_seed;
      LcdTrainReport rep;
      auto init = LcdParams::init({static_cast<Index>(vocab.size()), static_cast<Index>(schema.category_count()),
                                   tl_dim, tl_hidden},
                                  common.seed);
      auto p = train_lcd(xs, init, tl_cfg, &rep);
      for (std::size_t i = 0; i < rep.epoch_loss.size(); ++i)
        spdlog::debug("epoch {} neg_elbo {:.6f}", i + 1, rep.epoch_loss[i]);
      save_tensors(tl_out, p.to_tensors());
      write_curve(tl_curve, rep.epoch_loss);
      const double last = rep.epoch_loss.empty() ? rep.initial_loss : rep.epoch_loss.back();
      std::cout << "initial_neg_elbo " << rep.initial_loss << "\nfinal_neg_elbo " << last << "\nratio "
                << last / rep.initial_loss << "\n";
      if (rep.diverged) throw NumericError("lcd", "training diverged; last finite parameters saved");
    } else if (*il) {
      auto vocab = load_cbow_vocab(il_vocab);
      auto p = LcdParams::from_tensors(load_tensors(il_params));
      if (p.shape().vocab != static_cast<Index>(vocab.size()))
        throw DataError("LCD parameters do not match the vocabulary size");
      std::ofstream file;
      auto& os = output(il_out, file);
      const auto k = p.shape().categories;
      os << "sentence";
      for (Index i = 0; i < k; ++i) os << ",z" << i;
      os << ",argmax\n";
      std::size_t n = 0;
      for (const auto& s : read_sentences(il_input)) {
        auto z = infer_lcd(featurize(s, vocab), p).z;
        Index am;
        z.maxCoeff(&am);
        os << n++;
        for (Index i = 0; i < k; ++i) os << ',' << z[i];
        os << ',' << am << '\n';
      }
    } else if (*tr) {
      std::optional<CategorySchema> schema;
      if (!tr_schema.empty()) schema = load_schema_file(tr_schema);
      auto samples = ingest_or_fail(tr_train, schema ? &*schema : nullptr);
      if (!schema) schema = derive_schema(samples);
      auto cbow = tr_vocab.empty() ? build_cbow_vocab(samples, exclusions(tr_stop, tr_sent)) : load_cbow_vocab(tr_vocab);
      LcdParams lcd;
      if (!tr_lcd.empty()) {
        lcd = LcdParams::from_tensors(load_tensors(tr_lcd));
      } else {
        LcdTrainReport rep;
        tr_lcd_cfg.seed = common.shuffle_seed;
        lcd = train_lcd(features(samples, cbow),
                        LcdParams::init({static_cast<Index>(cbow.size()), static_cast<Index>(schema->category_count()),
                                         tr_dim, 256},
                                        common.seed),
                        tr_lcd_cfg, &rep);
        if (rep.diverged) throw NumericError("lcd", "pre-training diverged");
        if (!rep.epoch_loss.empty())
          spdlog::info("LCD pre-training neg_elbo {:.4f} -> {:.4f}", rep.initial_loss, rep.epoch_loss.back());
      }
      FusionOptions fo{.use_lcd = !no_lcd, .rescale_v = rescale_v, .separators = separators};
      auto model = make_model(*schema, samples, cbow, lcd, fo, tr_hidden, common.seed);
      tr_cfg.seed = common.shuffle_seed;
      Seq2SeqTrainReport rep;
      train_seq2seq(samples, model, tr_cfg, &rep);
      save_model(model, tr_out);
      write_curve(tr_curve, rep.gen_epoch_loss);
      if (!rep.gen_epoch_loss.empty())
        spdlog::info("generation loss {:.4f} after {} epochs", rep.gen_epoch_loss.back(), rep.gen_epoch_loss.size());
      if (rep.diverged) throw NumericError("decoder", "training diverged; last finite parameters saved");
    } else if (*dc) {
      ExtractOptions opt;
      opt.mode = dc_unconstrained ? DecodeMode::Unconstrained : DecodeMode::Constrained;
      opt.beam = dc_beam;
      opt.max_len = dc_max_len;
      opt.copy_restricted = dc_copy;
      std::ofstream file;
      auto& os = output(dc_out, file);
      if (dc_scorer == "toy") {
        if (dc_model.empty()) throw CLI::RequiredError("--model (toy scorer)");
        auto model = load_model(dc_model);
        auto grammar = make_grammar(model, dc_copy);
        for (const auto& s : read_sentences(dc_input)) os << join(extract(model, grammar, s, opt).decoded.tokens) << '\n';
      } else {
        if (dc_schema.empty()) throw CLI::RequiredError("--schema (random / oracle scorer)");
        auto schema = load_schema_file(dc_schema);
        std::vector<Sample> samples;
        if (dc_scorer == "oracle") {
          samples = ingest_or_fail(dc_input, &schema);
        } else {
          for (auto& s : read_sentences(dc_input)) samples.push_back({std::move(s), {}});
        }
        std::set<std::string> words;
        for (const auto& s : samples)
          for (const auto& w : s.text)
            if (is_span_token(w)) words.insert(w);
        const TokenSeq vocab = make_target_vocabulary(schema, TokenSeq(words.begin(), words.end()));
        QuadGrammar grammar(schema, vocab, {dc_sep, dc_copy});
        for (std::size_t i = 0; i < samples.size(); ++i) {
          std::unique_ptr<Scorer> sc;
          if (dc_scorer == "oracle")
            sc = std::make_unique<OracleScorer>(vocab, linearize(samples[i].gold, schema, {dc_sep}));
          else
            sc = std::make_unique<UniformRandomScorer>(vocab, common.seed + i);
          os << join(extract_with(*sc, grammar, samples[i].text, opt).decoded.tokens) << '\n';
        }
      }
    } else if (*ev) {
      auto schema = load_schema_file(ev_schema);
      auto gold = read_gold(ev_gold, schema, ev_sep);
      std::ifstream in(ev_pred);
      if (!in) throw DataError("cannot open '" + ev_pred + "'");
      std::vector<std::vector<Quadruple>> pred;
      std::size_t malformed = 0;
      std::string line;
      while (std::getline(in, line)) {
        auto r = parse_partial(split_whitespace(line), schema, {ev_sep});
        malformed += r.error.has_value();
        pred.push_back(std::move(r.quads));
      }
      if (pred.size() != gold.size())
        throw DataError("prediction file has " + std::to_string(pred.size()) + " lines, gold has " +
                        std::to_string(gold.size()));
      if (malformed) spdlog::warn("{} malformed prediction(s); their well-formed prefixes were scored", malformed);
      auto report = evaluate(pred, gold);
      write_eval_table(std::cout, report);
      if (!ev_csv.empty()) {
        std::ofstream csv(ev_csv);
        if (!csv) throw DataError("cannot write '" + ev_csv + "'");
        write_eval_csv(csv, report);
      }
    } else if (*td) {
      auto schema = load_schema_file(td_schema, default_polarities(), td_split ? SymbolMode::SplitUnderscore : SymbolMode::Single);
      std::cout << "categories\n";
      dump_trie(std::cout, build_category_trie(schema), 1);
      std::cout << "sentiments\n";
      dump_trie(std::cout, build_sentiment_trie(schema), 1);
    }
  } catch (const CLI::Error& e) {
    spdlog::error("{}", e.what());
    return kUsage;
  } catch (const NumericError& e) {
    spdlog::error("numeric failure: {}", e.what());
    return kNumeric;
  } catch (const quadgen::Error& e) {
    spdlog::error("{}", e.what());
    return kData;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kData;
  }
  return kOk;
}
