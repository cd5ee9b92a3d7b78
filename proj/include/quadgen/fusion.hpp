#pragma once

// Category-text fusion and the desk-scale seq2seq stand-in.
//
//   encoder    H_j = emb(x_j) + mean_i emb(x_i)
//   attention  e_j = <R_lcd, H_j> / sqrt(dim),  a = softmax(e),  V_j = a_j H_j
//   decoder    m   = sum_j V_j
//              h   = tanh(A e(y_{t-1}) + B e(y_{t-2}) + C m + q(#quads so far) + b)
//              s   = W h + c   over the target vocabulary
//   loss       sum_t -log softmax(s_t)[y_t]   (teacher forcing)
//
// Training alternates E1 epochs of generation loss (Adam; gradients also reach the
// LCD encoder through R_lcd) with E2 epochs of LCD reconstruction loss (SGD).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "quadgen/cbow.hpp"
#include "quadgen/decode.hpp"
#include "quadgen/error.hpp"
#include "quadgen/lcd.hpp"
#include "quadgen/linearize.hpp"
#include "quadgen/numeric.hpp"
#include "quadgen/params_io.hpp"
#include "quadgen/schema.hpp"
#include "quadgen/scorers.hpp"

namespace quadgen {

inline constexpr std::string_view kUnknownToken = "⟨unk⟩";

/// Token list with an index; lookups of unseen tokens fall back to ⟨unk⟩ when present.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(TokenSeq tokens) : tokens_(std::move(tokens)) {
    for (std::size_t i = 0; i < tokens_.size(); ++i)
      if (!index_.emplace(tokens_[i], i).second) throw DataError("duplicate vocabulary token '" + tokens_[i] + "'");
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  const TokenSeq& tokens() const noexcept { return tokens_; }
  const std::string& operator[](std::size_t i) const { return tokens_[i]; }
  bool contains(const std::string& t) const { return index_.count(t) != 0; }

  std::size_t id(const std::string& t) const {
    if (auto it = index_.find(t); it != index_.end()) return it->second;
    if (auto it = index_.find(std::string(kUnknownToken)); it != index_.end()) return it->second;
    throw DataError("token '" + t + "' not in vocabulary");
  }

 private:
  TokenSeq tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Source-side vocabulary: ⟨unk⟩ plus every training word, sorted.
inline Vocabulary build_source_vocab(std::span<const Sample> samples) {
  std::set<std::string> words{std::string(kUnknownToken)};
  for (const auto& s : samples) words.insert(s.text.begin(), s.text.end());
  return Vocabulary(TokenSeq(words.begin(), words.end()));
}

/// Target-side vocabulary: structural tokens, schema symbols and every span token
/// of the training texts.
inline Vocabulary build_target_vocab(const CategorySchema& schema, std::span<const Sample> samples,
                                     bool separators = false) {
  std::set<std::string> words;
  for (const auto& s : samples)
    for (const auto& w : s.text)
      if (is_span_token(w)) words.insert(w);
  TokenSeq ws(words.begin(), words.end());
  return Vocabulary(make_target_vocabulary(schema, ws, separators));
}

// ---------------------------------------------------------------------------
// Encoder and attention

struct EncoderOutput {
  MatrixXd h;  // N x dim
  TokenSeq tokens;
};

struct FusedMemory {
  MatrixXd v;  // N x dim
  VectorXd a;  // N
};

/// H_j = emb(x_j) + mean_i emb(x_i). Unknown words use the ⟨unk⟩ row.
inline EncoderOutput toy_encode(std::span<const std::string> text, const Vocabulary& vocab, const MatrixXd& embed) {
  EncoderOutput out;
  out.tokens.assign(text.begin(), text.end());
  const auto n = static_cast<Index>(text.size());
  out.h.resize(n, embed.cols());
  for (Index j = 0; j < n; ++j) out.h.row(j) = embed.row(static_cast<Index>(vocab.id(text[static_cast<std::size_t>(j)])));
  if (n > 0) {
    const Eigen::RowVectorXd mean = out.h.colwise().mean();
    out.h.rowwise() += mean;
  }
  return out;
}

inline FusedMemory category_text_attention(const VectorXd& r_lcd, const MatrixXd& h) {
  if (r_lcd.size() != h.cols())
    throw Error("category_text_attention: R_lcd has length " + std::to_string(r_lcd.size()) + ", encoder dim is " +
                std::to_string(h.cols()));
  FusedMemory m;
  if (h.rows() == 0) {
    m.v = h;
    return m;
  }
  const VectorXd e = h * r_lcd / std::sqrt(static_cast<double>(h.cols()));
  m.a = softmax(e);
  m.v = m.a.asDiagonal() * h;
  return m;
}

// ---------------------------------------------------------------------------
// Parameters

struct Seq2SeqShape {
  Index source_vocab = 0;
  Index target_vocab = 0;
  Index dim = 32;
  Index hidden = 128;
  Index count_buckets = 4;

  friend bool operator==(const Seq2SeqShape&, const Seq2SeqShape&) = default;
};

struct Seq2SeqParams {
  MatrixXd src_embed;  // |S| x dim
  MatrixXd tgt_embed;  // |T| x dim
  MatrixXd w_prev;     // hidden x dim
  MatrixXd w_prev2;    // hidden x dim
  MatrixXd w_mem;      // hidden x dim
  MatrixXd w_count;    // hidden x count_buckets
  VectorXd b_h;
  MatrixXd w_out;      // |T| x hidden
  VectorXd b_out;

  static Seq2SeqParams zeros(const Seq2SeqShape& s) {
    Seq2SeqParams p;
    p.src_embed = MatrixXd::Zero(s.source_vocab, s.dim);
    p.tgt_embed = MatrixXd::Zero(s.target_vocab, s.dim);
    p.w_prev = MatrixXd::Zero(s.hidden, s.dim);
    p.w_prev2 = MatrixXd::Zero(s.hidden, s.dim);
    p.w_mem = MatrixXd::Zero(s.hidden, s.dim);
    p.w_count = MatrixXd::Zero(s.hidden, s.count_buckets);
    p.b_h = VectorXd::Zero(s.hidden);
    p.w_out = MatrixXd::Zero(s.target_vocab, s.hidden);
    p.b_out = VectorXd::Zero(s.target_vocab);
    return p;
  }

  /// Embeddings uniform in (-0.5, 0.5); weight matrices Xavier-uniform; biases zero.
  static Seq2SeqParams init(const Seq2SeqShape& s, std::uint64_t seed) {
    auto p = zeros(s);
    std::mt19937_64 rng(seed);
    auto xavier = [&](MatrixXd& m) { fill_uniform(m, std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols())), rng); };
    fill_uniform(p.src_embed, 0.5, rng);
    fill_uniform(p.tgt_embed, 0.5, rng);
    xavier(p.w_prev);
    xavier(p.w_prev2);
    xavier(p.w_mem);
    xavier(p.w_count);
    xavier(p.w_out);
    return p;
  }

  Seq2SeqShape shape() const {
    return {src_embed.rows(), tgt_embed.rows(), src_embed.cols(), w_prev.rows(), w_count.cols()};
  }

  template <class Self, class F>
  static void visit(Self& p, F&& f) {
    f("s2s.src_embed", p.src_embed);
    f("s2s.tgt_embed", p.tgt_embed);
    f("s2s.w_prev", p.w_prev);
    f("s2s.w_prev2", p.w_prev2);
    f("s2s.w_mem", p.w_mem);
    f("s2s.w_count", p.w_count);
    f("s2s.b_h", p.b_h);
    f("s2s.w_out", p.w_out);
    f("s2s.b_out", p.b_out);
  }

  template <class A, class B, class F>
  static void zip(A& a, B& b, F&& f) {
    f(a.src_embed, b.src_embed);
    f(a.tgt_embed, b.tgt_embed);
    f(a.w_prev, b.w_prev);
    f(a.w_prev2, b.w_prev2);
    f(a.w_mem, b.w_mem);
    f(a.w_count, b.w_count);
    f(a.b_h, b.b_h);
    f(a.w_out, b.w_out);
    f(a.b_out, b.b_out);
  }

  bool all_finite() const {
    bool ok = true;
    visit(*this, [&](const char*, const auto& t) { ok = ok && t.allFinite(); });
    return ok;
  }

  std::vector<NamedTensor> to_tensors() const {
    std::vector<NamedTensor> out;
    visit(*this, [&](const char* name, const auto& t) { out.emplace_back(name, MatrixXd(t)); });
    return out;
  }

  static Seq2SeqParams from_tensors(const std::vector<NamedTensor>& ts) {
    const auto& src = find_tensor(ts, "s2s.src_embed");
    const auto& tgt = find_tensor(ts, "s2s.tgt_embed");
    const auto& wp = find_tensor(ts, "s2s.w_prev");
    const auto& wc = find_tensor(ts, "s2s.w_count");
    Seq2SeqShape s{src.rows(), tgt.rows(), src.cols(), wp.rows(), wc.cols()};
    auto p = zeros(s);
    visit(p, [&](const char* name, auto& t) { t = find_tensor(ts, name, t.rows(), t.cols()); });
    return p;
  }
};

// ---------------------------------------------------------------------------
// Model

struct FusionOptions {
  bool use_lcd = true;     // false: V = H_enc, attention bypassed
  bool rescale_v = false;  // multiply V by N
  bool separators = false;
};

struct Seq2SeqModel {
  CategorySchema schema;
  CbowVocab cbow;
  Vocabulary source;
  Vocabulary target;
  LcdParams lcd;
  Seq2SeqParams net;
  FusionOptions options;
};

/// Builds an untrained model around pre-trained LCD parameters.
inline Seq2SeqModel make_model(const CategorySchema& schema, std::span<const Sample> train, CbowVocab cbow,
                               LcdParams lcd, FusionOptions options = {}, Index hidden = 128,
                               std::uint64_t seed = 17) {
  if (train.empty()) throw DataError("make_model: empty training set");
  const auto ls = lcd.shape();
  if (ls.vocab != static_cast<Index>(cbow.size())) throw DataError("LCD parameters do not match the CBoW vocabulary");
  Seq2SeqModel m{schema, std::move(cbow), build_source_vocab(train),
                 build_target_vocab(schema, train, options.separators), std::move(lcd), {}, options};
  Seq2SeqShape s{static_cast<Index>(m.source.size()), static_cast<Index>(m.target.size()), ls.dim, hidden, 4};
  m.net = Seq2SeqParams::init(s, seed);
  return m;
}

/// Per-sentence forward state shared by the loss and the scorer.
struct SentenceMemory {
  CbowFeature x;
  LcdForwardTrace lcd;  // eps = 0; empty when LCD is disabled
  EncoderOutput enc;
  FusedMemory fused;
  VectorXd pooled;      // sum_j V_j
  double v_scale = 1.0;
};

inline SentenceMemory encode_sentence(const Seq2SeqModel& m, std::span<const std::string> text) {
  SentenceMemory s;
  s.enc = toy_encode(text, m.source, m.net.src_embed);
  if (m.options.use_lcd) {
    s.x = featurize(text, m.cbow);
    s.lcd = lcd_forward(s.x, m.lcd, VectorXd::Zero(m.lcd.shape().categories));
    s.fused = category_text_attention(s.lcd.r_lcd, s.enc.h);
  } else {
    s.fused.v = s.enc.h;
    const auto n = s.enc.h.rows();
    s.fused.a = n > 0 ? VectorXd::Constant(n, 1.0 / static_cast<double>(n)) : VectorXd();
  }
  if (m.options.rescale_v) {
    s.v_scale = static_cast<double>(std::max<Index>(1, s.enc.h.rows()));
    s.fused.v *= s.v_scale;
  }
  s.pooled = s.fused.v.rows() > 0 ? VectorXd(s.fused.v.colwise().sum().transpose())
                                  : VectorXd::Zero(m.net.shape().dim);
  require_finite(s.pooled, "fusion");
  return s;
}

namespace detail {

struct StepInputs {
  std::size_t last;
  std::size_t prev;
  Index bucket;
};

inline StepInputs step_inputs(const Seq2SeqModel& m, std::span<const std::string> history) {
  if (history.empty()) throw DecodeError("decoder prefix must start with ⟨bos⟩");
  const std::size_t bos = m.target.id(std::string(tok::kBos));
  StepInputs in{m.target.id(history.back()), history.size() >= 2 ? m.target.id(history[history.size() - 2]) : bos, 0};
  const auto quads = std::count(history.begin(), history.end(), std::string(tok::kOpenQuad));
  in.bucket = std::min<Index>(static_cast<Index>(quads), m.net.shape().count_buckets - 1);
  return in;
}

inline VectorXd hidden_state(const Seq2SeqParams& p, const StepInputs& in, const VectorXd& pooled) {
  VectorXd pre = p.w_prev * p.tgt_embed.row(static_cast<Index>(in.last)).transpose() +
                 p.w_prev2 * p.tgt_embed.row(static_cast<Index>(in.prev)).transpose() + p.w_mem * pooled +
                 p.w_count.col(in.bucket) + p.b_h;
  return pre.array().tanh();
}

}  // namespace detail

/// Scores over the target vocabulary for the next token after `history`.
inline VectorXd toy_decoder_step(const Seq2SeqModel& m, const SentenceMemory& mem, std::span<const std::string> history) {
  const auto in = detail::step_inputs(m, history);
  VectorXd s = m.net.w_out * detail::hidden_state(m.net, in, mem.pooled) + m.net.b_out;
  require_finite(s, "decoder");
  return s;
}

/// Scorer bound to one sentence.
class ToyScorer final : public Scorer {
 public:
  ToyScorer(const Seq2SeqModel& model, std::span<const std::string> text)
      : model_(model), memory_(encode_sentence(model, text)) {}

  const TokenSeq& vocabulary() const override { return model_.target.tokens(); }
  std::vector<double> next_scores(std::span<const std::string> history) override {
    VectorXd s = toy_decoder_step(model_, memory_, history);
    return {s.data(), s.data() + s.size()};
  }
  bool shareable() const override { return true; }
  const SentenceMemory& memory() const noexcept { return memory_; }

 private:
  const Seq2SeqModel& model_;
  SentenceMemory memory_;
};

// ---------------------------------------------------------------------------
// Generation loss and gradients

/// Decoder target: linearize(gold) followed by ⟨eos⟩.
inline TokenSeq decoder_target(const Seq2SeqModel& m, const Sample& s) {
  auto t = linearize(s.gold, m.schema, {m.options.separators});
  t.emplace_back(tok::kEos);
  return t;
}

struct Seq2SeqGrad {
  Seq2SeqParams net;
  LcdParams lcd;
};

/// Teacher-forced negative log-likelihood of the gold target. When `grad` is given,
/// the gradient is accumulated into it.
inline double seq2seq_loss(const Seq2SeqModel& m, const Sample& sample, Seq2SeqGrad* grad = nullptr) {
  const auto mem = encode_sentence(m, sample.text);
  const auto target = decoder_target(m, sample);
  const auto& p = m.net;
  TokenSeq history{std::string(tok::kBos)};
  double loss = 0.0;
  VectorXd d_pooled = VectorXd::Zero(p.shape().dim);
  for (const auto& y : target) {
    const auto in = detail::step_inputs(m, history);
    const VectorXd h = detail::hidden_state(p, in, mem.pooled);
    const VectorXd logp = log_softmax(p.w_out * h + p.b_out);
    const auto yi = static_cast<Index>(m.target.id(y));
    loss -= logp[yi];
    if (grad) {
      auto& g = grad->net;
      VectorXd d_s = logp.array().exp();
      d_s[yi] -= 1.0;
      g.w_out += d_s * h.transpose();
      g.b_out += d_s;
      const VectorXd d_pre = (p.w_out.transpose() * d_s).array() * (1.0 - h.array().square());
      const auto last = static_cast<Index>(in.last), prev = static_cast<Index>(in.prev);
      g.w_prev += d_pre * p.tgt_embed.row(last);
      g.tgt_embed.row(last) += (p.w_prev.transpose() * d_pre).transpose();
      g.w_prev2 += d_pre * p.tgt_embed.row(prev);
      g.tgt_embed.row(prev) += (p.w_prev2.transpose() * d_pre).transpose();
      g.w_mem += d_pre * mem.pooled.transpose();
      d_pooled += p.w_mem.transpose() * d_pre;
      g.w_count.col(in.bucket) += d_pre;
      g.b_h += d_pre;
    }
    history.push_back(y);
  }
  if (!std::isfinite(loss)) throw NumericError("decoder", "non-finite generation loss");
  if (!grad) return loss;

  // pooled = c * sum_j V_j; every row of V receives the same upstream gradient.
  const Index n = mem.enc.h.rows();
  const Index dim = p.shape().dim;
  if (n == 0) return loss;
  const Eigen::RowVectorXd d_v = mem.v_scale * d_pooled.transpose();
  MatrixXd d_h(n, dim);
  if (m.options.use_lcd) {
    const auto& h = mem.enc.h;
    const auto& a = mem.fused.a;
    const VectorXd d_a = h * d_v.transpose();             // dL/da_j = <dV_j, H_j>
    const VectorXd d_e = softmax_backward(a, d_a);
    const double inv = 1.0 / std::sqrt(static_cast<double>(dim));
    const VectorXd& r = mem.lcd.r_lcd;
    for (Index j = 0; j < n; ++j) d_h.row(j) = a[j] * d_v + d_e[j] * inv * r.transpose();
    const VectorXd d_r = inv * (h.transpose() * d_e);
    LcdBackwardOptions bo;
    bo.recon_weight = 0.0;
    bo.kl_weight = 0.0;
    bo.r_lcd_grad = &d_r;
    auto gl = lcd_backward(mem.x, m.lcd, mem.lcd, bo);
    LcdParams::zip(grad->lcd, gl, [](auto& acc, const auto& d) { acc += d; });
  } else {
    d_h.rowwise() = d_v;
  }
  // H_j = E[x_j] + mean_i E[x_i]
  const Eigen::RowVectorXd mean_grad = d_h.colwise().sum() / static_cast<double>(n);
  for (Index j = 0; j < n; ++j) {
    const auto row = static_cast<Index>(m.source.id(sample.text[static_cast<std::size_t>(j)]));
    grad->net.src_embed.row(row) += d_h.row(j) + mean_grad;
  }
  return loss;
}

inline Seq2SeqGrad zero_grad(const Seq2SeqModel& m) {
  return {Seq2SeqParams::zeros(m.net.shape()), LcdParams::zeros(m.lcd.shape())};
}

// ---------------------------------------------------------------------------
// Optimizer

/// Adam over any parameter struct exposing static zip().
template <class P>
class Adam {
 public:
  Adam(const P& like, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : m_(like), v_(like), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    P::zip(m_, v_, [](auto& a, auto& b) {
      a.setZero();
      b.setZero();
    });
  }

  void step(P& params, P& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    P::zip(m_, grad, [&](auto& m, const auto& g) { m = b1_ * m + (1.0 - b1_) * g; });
    P::zip(v_, grad, [&](auto& v, const auto& g) { v = b2_ * v + (1.0 - b2_) * g.cwiseProduct(g); });
    auto ps = flat(params), ms = flat(m_), vs = flat(v_);
    for (std::size_t k = 0; k < ps.size(); ++k)
      for (Index i = 0; i < ps[k].second; ++i)
        ps[k].first[i] -= lr_ * (ms[k].first[i] / c1) / (std::sqrt(vs[k].first[i] / c2) + eps_);
  }

 private:
  static std::vector<std::pair<double*, Index>> flat(P& p) {
    std::vector<std::pair<double*, Index>> out;
    P::visit(p, [&](const char*, auto& t) { out.emplace_back(t.data(), t.size()); });
    return out;
  }

  P m_, v_;
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Alternating schedule

struct Seq2SeqTrainConfig {
  std::size_t gen_epochs = 20;  // E1
  std::size_t lcd_epochs = 10;  // E2
  std::size_t rounds = 3;       // R
  double learning_rate = 0.01;
  double lcd_learning_rate = 0.001;  // Adam rate for LCD parameters under the generation loss
  std::size_t batch_size = 4;
  bool tune_lcd = true;              // let the generation loss update the LCD encoder
  LcdTrainConfig lcd;           // rate / batch for the reconstruction phases (no warm-up)
  std::uint64_t seed = 23;
};

struct Seq2SeqTrainReport {
  std::vector<double> gen_epoch_loss;  // mean teacher-forced loss after each generation epoch
  std::vector<double> lcd_epoch_loss;  // mean neg_elbo after each reconstruction epoch
  bool diverged = false;
};

inline double mean_generation_loss(const Seq2SeqModel& m, std::span<const Sample> samples) {
  double total = 0.0;
  for (const auto& s : samples) total += seq2seq_loss(m, s);
  return samples.empty() ? 0.0 : total / static_cast<double>(samples.size());
}

/// Trains `model` in place. On divergence the parameters from the start of the failing
/// epoch are restored and training stops with report.diverged set.
inline void train_seq2seq(std::span<const Sample> samples, Seq2SeqModel& model, const Seq2SeqTrainConfig& cfg,
                          Seq2SeqTrainReport* report = nullptr) {
  if (samples.empty()) throw DataError("train_seq2seq: empty training set");
  Seq2SeqTrainReport local;
  auto& rep = report ? *report : local;
  std::mt19937_64 rng(cfg.seed);
  Adam<Seq2SeqParams> opt_net(model.net, cfg.learning_rate);
  Adam<LcdParams> opt_lcd(model.lcd, cfg.lcd_learning_rate);
  const bool lcd_in_loop = model.options.use_lcd;

  std::vector<VectorXd> corpus;
  if (lcd_in_loop)
    for (const auto& s : samples) corpus.push_back(featurize(s.text, model.cbow));
  LcdTrainConfig recon = cfg.lcd;
  recon.epochs = cfg.lcd_epochs;
  recon.kl_warmup = 0;

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = std::max<std::size_t>(1, cfg.batch_size);

  for (std::size_t round = 0; round < cfg.rounds; ++round) {
    for (std::size_t epoch = 0; epoch < cfg.gen_epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      const auto net_ckpt = model.net;
      const auto lcd_ckpt = model.lcd;
      try {
        for (std::size_t start = 0; start < order.size(); start += batch) {
          const std::size_t end = std::min(order.size(), start + batch);
          auto g = zero_grad(model);
          for (std::size_t i = start; i < end; ++i) seq2seq_loss(model, samples[order[i]], &g);
          const double scale = 1.0 / static_cast<double>(end - start);
          Seq2SeqParams::zip(g.net, g.net, [scale](auto& t, auto&) { t *= scale; });
          opt_net.step(model.net, g.net);
          if (lcd_in_loop && cfg.tune_lcd) {
            LcdParams::zip(g.lcd, g.lcd, [scale](auto& t, auto&) { t *= scale; });
            opt_lcd.step(model.lcd, g.lcd);
          }
        }
        const double loss = mean_generation_loss(model, samples);
        if (!std::isfinite(loss) || !model.net.all_finite() || !model.lcd.all_finite())
          throw NumericError("decoder", "generation loss diverged");
        rep.gen_epoch_loss.push_back(loss);
      } catch (const NumericError&) {
        model.net = net_ckpt;
        model.lcd = lcd_ckpt;
        rep.diverged = true;
        return;
      }
    }
    if (lcd_in_loop && cfg.lcd_epochs > 0) {
      LcdTrainReport lr;
      lcd_sgd_epochs(corpus, model.lcd, recon, rng, lr);
      rep.lcd_epoch_loss.insert(rep.lcd_epoch_loss.end(), lr.epoch_loss.begin(), lr.epoch_loss.end());
      if (lr.diverged) {
        rep.diverged = true;
        return;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Inference

enum class DecodeMode { Constrained, Unconstrained };

struct ExtractOptions {
  DecodeMode mode = DecodeMode::Constrained;
  std::size_t beam = 1;
  std::size_t max_len = 128;
  bool copy_restricted = false;
};

struct Extraction {
  DecodeResult decoded;
  std::vector<Quadruple> quads;  // parsed quadruples; for malformed output, the well-formed prefix
  bool valid = true;
};

/// Decodes with any scorer and parses the result.
inline Extraction extract_with(Scorer& scorer, const QuadGrammar& grammar, std::span<const std::string> text,
                               const ExtractOptions& opt) {
  Extraction e;
  if (opt.mode == DecodeMode::Unconstrained)
    e.decoded = unconstrained_greedy_decode(scorer, opt.max_len);
  else if (opt.beam > 1)
    e.decoded = constrained_beam_decode(grammar, scorer, opt.beam, opt.max_len, text);
  else
    e.decoded = constrained_greedy_decode(grammar, scorer, opt.max_len, text);
  const auto& sep = grammar.options().separators;
  auto parsed = parse_partial(e.decoded.tokens, grammar.schema(), {sep});
  e.quads = std::move(parsed.quads);
  e.valid = !parsed.error.has_value();
  return e;
}

inline Extraction extract(const Seq2SeqModel& m, const QuadGrammar& grammar, std::span<const std::string> text,
                          const ExtractOptions& opt = {}) {
  ToyScorer scorer(m, text);
  return extract_with(scorer, grammar, text, opt);
}

inline QuadGrammar make_grammar(const Seq2SeqModel& m, bool copy_restricted = false) {
  return QuadGrammar(m.schema, m.target.tokens(), {m.options.separators, copy_restricted});
}

// ---------------------------------------------------------------------------
// Persistence
//
// A model directory holds schema.txt, cbow_vocab.txt, source_vocab.txt,
// target_vocab.txt, options.txt (key=value) and model.bin (lcd.* and s2s.* tensors).

namespace detail {

inline void write_lines(const std::filesystem::path& p, const TokenSeq& lines) {
  std::ofstream out(p);
  if (!out) throw DataError("cannot write '" + p.string() + "'");
  for (const auto& l : lines) out << l << '\n';
}

inline TokenSeq read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open '" + p.string() + "'");
  TokenSeq out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(line);
  return out;
}

}  // namespace detail

inline void save_model(const Seq2SeqModel& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "schema.txt");
    if (!out) throw DataError("cannot write schema into '" + dir.string() + "'");
    out << m.schema.to_text();
  }
  save_cbow_vocab(m.cbow, (dir / "cbow_vocab.txt").string());
  detail::write_lines(dir / "source_vocab.txt", m.source.tokens());
  detail::write_lines(dir / "target_vocab.txt", m.target.tokens());
  detail::write_lines(dir / "options.txt", {"use_lcd=" + std::to_string(m.options.use_lcd),
                                            "rescale_v=" + std::to_string(m.options.rescale_v),
                                            "separators=" + std::to_string(m.options.separators)});
  auto tensors = m.lcd.to_tensors();
  auto net = m.net.to_tensors();
  tensors.insert(tensors.end(), net.begin(), net.end());
  save_tensors((dir / "model.bin").string(), tensors);
}

inline Seq2SeqModel load_model(const std::filesystem::path& dir) {
  Seq2SeqModel m{load_schema_file((dir / "schema.txt").string()),
                 load_cbow_vocab((dir / "cbow_vocab.txt").string()),
                 Vocabulary(detail::read_lines(dir / "source_vocab.txt")),
                 Vocabulary(detail::read_lines(dir / "target_vocab.txt")),
                 {},
                 {},
                 {}};
  for (const auto& line : detail::read_lines(dir / "options.txt")) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("bad options line '" + line + "'");
    const auto key = line.substr(0, eq);
    const bool on = line.substr(eq + 1) == "1";
    if (key == "use_lcd") m.options.use_lcd = on;
    else if (key == "rescale_v") m.options.rescale_v = on;
    else if (key == "separators") m.options.separators = on;
    else throw DataError("unknown model option '" + key + "'");
  }
  const auto tensors = load_tensors((dir / "model.bin").string());
  m.lcd = LcdParams::from_tensors(tensors);
  m.net = Seq2SeqParams::from_tensors(tensors);
  const auto s = m.net.shape();
  if (s.source_vocab != static_cast<Index>(m.source.size()) || s.target_vocab != static_cast<Index>(m.target.size()))
    throw DataError("model tensors do not match the stored vocabularies");
  if (m.lcd.shape().vocab != static_cast<Index>(m.cbow.size()) || m.lcd.shape().dim != s.dim)
    throw DataError("LCD tensors do not match the CBoW vocabulary or encoder dim");
  return m;
}

}  // namespace quadgen
