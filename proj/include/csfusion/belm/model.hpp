#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "csfusion/belm/config.hpp"
#include "csfusion/belm/input.hpp"
#include "csfusion/belm/layers.hpp"
#include "csfusion/error.hpp"
#include "csfusion/rng.hpp"
#include "csfusion/vocab.hpp"

namespace csfusion::belm {

/// Sequences of a mini-batch laid out row after row.
struct PackedBatch {
  std::vector<TokenId> src_ids;
  std::vector<int> src_pos;
  std::vector<Segment> src;
  std::vector<TokenId> tgt_in;   // <sos> y1 .. yn
  std::vector<TokenId> tgt_out;  // y1 .. yn <eos>; empty when scoring prefixes
  std::vector<Segment> tgt;

  std::size_t sequences() const { return src.size(); }
};

inline std::vector<int> source_positions(const BelmInput& in,
                                         PositionScheme scheme) {
  std::vector<int> pos(in.tokens.size());
  for (std::size_t i = 0; i < pos.size(); ++i) {
    if (scheme == PositionScheme::kAbsolute) {
      pos[i] = static_cast<int>(i);
    } else if (i < in.blank_pos) {
      pos[i] = static_cast<int>(i);
    } else if (i == in.blank_pos) {
      pos[i] = 0;
    } else {
      pos[i] = static_cast<int>(i - in.blank_pos - 1);
    }
  }
  return pos;
}

inline void append_source(PackedBatch& b, const BelmInput& in,
                          PositionScheme scheme) {
  const auto start = static_cast<Eigen::Index>(b.src_ids.size());
  b.src_ids.insert(b.src_ids.end(), in.tokens.begin(), in.tokens.end());
  const auto pos = source_positions(in, scheme);
  b.src_pos.insert(b.src_pos.end(), pos.begin(), pos.end());
  b.src.push_back({start, static_cast<Eigen::Index>(in.tokens.size())});
}

/// Teacher-forcing batch: decoder reads <sos>+target and predicts target+<eos>.
inline PackedBatch pack_training(
    const std::vector<std::pair<const BelmInput*, const Utterance*>>& items,
    PositionScheme scheme) {
  PackedBatch b;
  for (const auto& [in, target] : items) {
    append_source(b, *in, scheme);
    const auto start = static_cast<Eigen::Index>(b.tgt_in.size());
    b.tgt_in.push_back(Vocab::kSos);
    b.tgt_in.insert(b.tgt_in.end(), target->begin(), target->end());
    b.tgt_out.insert(b.tgt_out.end(), target->begin(), target->end());
    b.tgt_out.push_back(Vocab::kEos);
    b.tgt.push_back({start, static_cast<Eigen::Index>(target->size() + 1)});
  }
  return b;
}

/// Sinusoidal position codes, one row per position.
template <typename T>
Mat<T> sinusoid_table(int rows, int d) {
  Mat<T> pe(rows, d);
  for (int p = 0; p < rows; ++p) {
    for (int i = 0; i < d; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / d);
      const double angle = p * freq;
      pe(p, i) = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

/// Fusion encoder-decoder over the full bilingual vocabulary.
template <typename T>
class BelmModel {
 public:
  using Scalar = T;

  struct Tape {
    Mat<T> src_drop, tgt_drop;
    std::vector<typename EncoderLayer<T>::Cache> enc;
    typename LayerNorm<T>::Cache enc_norm;
    Mat<T> memory;
    std::vector<typename DecoderLayer<T>::Cache> dec;
    typename LayerNorm<T>::Cache dec_norm;
    Mat<T> dec_out;
  };

  /// Projected cross-attention keys and values of one encoded input.
  struct EncodedSource {
    std::vector<Mat<T>> cross_k, cross_v;
  };

  /// Self-attention keys and values of the decoded prefix, per layer.
  struct DecoderState {
    std::vector<Mat<T>> self_k, self_v;
    int steps = 0;
  };

  BelmModel(const BelmConfig& config, std::size_t vocab_size)
      : config_(config), vocab_size_(static_cast<Eigen::Index>(vocab_size)) {
    config_.validate();
    if (vocab_size < static_cast<std::size_t>(Vocab::kNumSpecials)) {
      throw Error(ErrorKind::kInvalidConfig, "vocab_size below special count");
    }
    const Eigen::Index d = config_.d_model;
    Rng rng = Rng::derive(config_.seed, 0, 0x696e6974);
    embedding_.resize(vocab_size_, d);
    const double stddev = 1.0 / std::sqrt(static_cast<double>(d));
    for (Eigen::Index i = 0; i < embedding_.value.size(); ++i) {
      embedding_.value.data()[i] = static_cast<T>(rng.normal() * stddev);
    }
    encoder_.resize(static_cast<std::size_t>(config_.enc_layers));
    for (auto& layer : encoder_) layer.init(d, config_.heads, config_.d_ff, rng);
    enc_norm_.init(d);
    decoder_.resize(static_cast<std::size_t>(config_.dec_layers));
    for (auto& layer : decoder_) layer.init(d, config_.heads, config_.d_ff, rng);
    dec_norm_.init(d);
    output_.init(d, vocab_size_, rng);
    positions_ = sinusoid_table<T>(config_.max_len + 1, config_.d_model);
  }

  const BelmConfig& config() const { return config_; }
  std::size_t vocab_size() const { return static_cast<std::size_t>(vocab_size_); }
  std::uint64_t steps() const { return steps_; }
  void set_steps(std::uint64_t s) { steps_ = s; }

  /// Calls f(name, Param&) for every parameter in declaration order.
  template <typename F>
  void visit(F&& f) {
    f(std::string("embedding"), embedding_);
    for (std::size_t i = 0; i < encoder_.size(); ++i) {
      encoder_[i].visit("enc" + std::to_string(i), f);
    }
    enc_norm_.visit("enc_norm", f);
    for (std::size_t i = 0; i < decoder_.size(); ++i) {
      decoder_[i].visit("dec" + std::to_string(i), f);
    }
    dec_norm_.visit("dec_norm", f);
    output_.visit("output", f);
  }

  template <typename F>
  void visit(F&& f) const {
    const_cast<BelmModel*>(this)->visit(
        [&](const std::string& name, Param<T>& p) {
          f(name, static_cast<const Param<T>&>(p));
        });
  }

  std::vector<Param<T>*> parameters() {
    std::vector<Param<T>*> out;
    visit([&](const std::string&, Param<T>& p) { out.push_back(&p); });
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    visit([&](const std::string&, const Param<T>& p) {
      n += static_cast<std::size_t>(p.value.size());
    });
    return n;
  }

  void zero_grad() {
    visit([](const std::string&, Param<T>& p) { p.grad.setZero(); });
  }

  void check_lengths(const BelmInput& in, std::size_t target_steps) const {
    const auto limit = static_cast<std::size_t>(config_.max_len);
    if (in.size() > limit) {
      throw Error(ErrorKind::kTooLong, "input of " + std::to_string(in.size()) +
                                           " tokens exceeds max_len " +
                                           std::to_string(limit));
    }
    if (target_steps > limit) {
      throw Error(ErrorKind::kTooLong,
                  "target of " + std::to_string(target_steps) +
                      " decoder steps exceeds max_len " + std::to_string(limit));
    }
    for (TokenId t : in.tokens) check_id(t);
  }

  /// Logits for every decoder position of a packed batch. Dropout is applied
  /// when `drop` is active; `tape` records what backward() needs.
  Mat<T> forward_batch(const PackedBatch& b, const DropoutContext& drop,
                       Tape* tape) const {
    Mat<T> x = embed(b.src_ids, b.src_pos);
    apply_dropout(x, drop, tape ? &tape->src_drop : nullptr);
    if (tape) tape->enc.resize(encoder_.size());
    for (std::size_t i = 0; i < encoder_.size(); ++i) {
      x = encoder_[i].forward(x, b.src, drop, tape ? &tape->enc[i] : nullptr);
    }
    Mat<T> memory = enc_norm_.forward(x, tape ? &tape->enc_norm : nullptr);

    std::vector<int> tgt_pos(b.tgt_in.size());
    for (const auto& s : b.tgt) {
      for (Eigen::Index i = 0; i < s.len; ++i) {
        tgt_pos[static_cast<std::size_t>(s.start + i)] = static_cast<int>(i);
      }
    }
    Mat<T> y = embed(b.tgt_in, tgt_pos);
    apply_dropout(y, drop, tape ? &tape->tgt_drop : nullptr);
    if (tape) tape->dec.resize(decoder_.size());
    for (std::size_t i = 0; i < decoder_.size(); ++i) {
      y = decoder_[i].forward(y, memory, b.tgt, b.src, drop,
                              tape ? &tape->dec[i] : nullptr);
    }
    Mat<T> h = dec_norm_.forward(y, tape ? &tape->dec_norm : nullptr);
    Mat<T> logits = output_.forward(h);
    if (tape) {
      tape->memory = std::move(memory);
      tape->dec_out = std::move(h);
    }
    return logits;
  }

  /// Accumulates parameter gradients of a loss whose logit gradient is
  /// `dlogits`.
  void backward_batch(const PackedBatch& b, const Tape& tape,
                      const Mat<T>& dlogits) {
    Mat<T> dy = output_.backward(tape.dec_out, dlogits);
    dy = dec_norm_.backward(tape.dec_norm, dy);
    Mat<T> dmemory = Mat<T>::Zero(tape.memory.rows(), tape.memory.cols());
    for (std::size_t i = decoder_.size(); i-- > 0;) {
      dy = decoder_[i].backward(tape.dec[i], dy, dmemory);
    }
    dropout_backward(dy, tape.tgt_drop);
    embed_backward(b.tgt_in, dy);

    Mat<T> dx = enc_norm_.backward(tape.enc_norm, dmemory);
    for (std::size_t i = encoder_.size(); i-- > 0;) {
      dx = encoder_[i].backward(tape.enc[i], dx);
    }
    dropout_backward(dx, tape.src_drop);
    embed_backward(b.src_ids, dx);
  }

  /// Evaluation-mode logits, one row per position of the sos-prefixed
  /// `target_prefix`.
  Mat<T> forward(const BelmInput& in,
                 const std::vector<TokenId>& target_prefix) const {
    check_lengths(in, target_prefix.size());
    if (target_prefix.empty() || target_prefix.front() != Vocab::kSos) {
      throw Error(ErrorKind::kInvalidArgument, "target prefix must start with <sos>");
    }
    for (TokenId t : target_prefix) check_id(t);
    PackedBatch b;
    append_source(b, in, config_.positions);
    b.tgt_in = target_prefix;
    b.tgt.push_back({0, static_cast<Eigen::Index>(target_prefix.size())});
    return forward_batch(b, DropoutContext{}, nullptr);
  }

  /// Mean label-smoothed cross-entropy of target+<eos>, evaluation mode.
  T loss(const BelmInput& in, const Utterance& target) const {
    check_lengths(in, target.size() + 1);
    for (TokenId t : target) check_id(t);
    const PackedBatch b = pack_training({{&in, &target}}, config_.positions);
    return smoothed_cross_entropy(forward_batch(b, DropoutContext{}, nullptr),
                                  b.tgt_out, nullptr);
  }

  /// Label-smoothed cross-entropy averaged over rows; writes d loss/d logits.
  T smoothed_cross_entropy(const Mat<T>& logits,
                           const std::vector<TokenId>& gold,
                           Mat<T>* dlogits) const {
    const auto rows = logits.rows();
    const T eps = static_cast<T>(config_.label_smoothing);
    const T uniform = eps / static_cast<T>(vocab_size_);
    const T n = static_cast<T>(rows);
    if (dlogits) dlogits->resize(rows, logits.cols());
    T total = 0;
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto row = logits.row(r);
      const T mx = row.maxCoeff();
      const T lse = mx + std::log((row.array() - mx).exp().sum());
      const auto g = static_cast<Eigen::Index>(gold[static_cast<std::size_t>(r)]);
      const T logp_gold = row(g) - lse;
      const T sum_logp = row.sum() - static_cast<T>(vocab_size_) * lse;
      total += -(T(1) - eps) * logp_gold - uniform * sum_logp;
      if (dlogits) {
        auto drow = dlogits->row(r);
        drow = (row.array() - lse).exp().matrix();
        drow.array() -= uniform;
        drow(g) -= T(1) - eps;
        drow /= n;
      }
    }
    return total / n;
  }

  /// One teacher-forcing pass over a batch: zeroes gradients, fills them,
  /// returns the batch loss.
  T loss_and_grad(const PackedBatch& b, const DropoutContext& drop) {
    zero_grad();
    Tape tape;
    const Mat<T> logits = forward_batch(b, drop, &tape);
    Mat<T> dlogits;
    const T value = smoothed_cross_entropy(logits, b.tgt_out, &dlogits);
    backward_batch(b, tape, dlogits);
    return value;
  }

  EncodedSource encode_source(const BelmInput& in) const {
    check_lengths(in, 0);
    PackedBatch b;
    append_source(b, in, config_.positions);
    Mat<T> x = embed(b.src_ids, b.src_pos);
    for (const auto& layer : encoder_) {
      x = layer.forward(x, b.src, DropoutContext{}, nullptr);
    }
    const Mat<T> memory = enc_norm_.forward(x, nullptr);
    EncodedSource enc;
    for (const auto& layer : decoder_) {
      enc.cross_k.push_back(layer.cross_attn.wk.forward(memory));
      enc.cross_v.push_back(layer.cross_attn.wv.forward(memory));
    }
    return enc;
  }

  DecoderState initial_state() const {
    DecoderState s;
    s.self_k.assign(decoder_.size(), Mat<T>(0, config_.d_model));
    s.self_v.assign(decoder_.size(), Mat<T>(0, config_.d_model));
    return s;
  }

  /// Feeds `token` at the next decoder position and returns log-probabilities
  /// of the following token. Matches forward() row for row.
  Eigen::Matrix<T, 1, Eigen::Dynamic> step(const EncodedSource& enc,
                                           DecoderState& state,
                                           TokenId token) const {
    check_id(token);
    if (state.steps > config_.max_len) {
      throw Error(ErrorKind::kTooLong, "decoder state exceeded max_len");
    }
    Mat<T> x = embed({token}, {state.steps});
    for (std::size_t l = 0; l < decoder_.size(); ++l) {
      const auto& layer = decoder_[l];
      const Mat<T> a = layer.ln1.forward(x, nullptr);
      append_row(state.self_k[l], layer.self_attn.wk.forward(a));
      append_row(state.self_v[l], layer.self_attn.wv.forward(a));
      x += layer.self_attn.attend(a, state.self_k[l], state.self_v[l]);
      x += layer.cross_attn.attend(layer.ln2.forward(x, nullptr), enc.cross_k[l],
                                   enc.cross_v[l]);
      x += layer.ff.forward(layer.ln3.forward(x, nullptr), nullptr);
    }
    ++state.steps;
    Eigen::Matrix<T, 1, Eigen::Dynamic> logits =
        output_.forward(dec_norm_.forward(x, nullptr)).row(0);
    const T mx = logits.maxCoeff();
    const T lse = mx + std::log((logits.array() - mx).exp().sum());
    logits.array() -= lse;
    return logits;
  }

 private:
  void check_id(TokenId t) const {
    if (t < 0 || t >= vocab_size_) {
      throw Error(ErrorKind::kUnknownId, std::to_string(t));
    }
  }

  static void append_row(Mat<T>& m, const Mat<T>& row) {
    m.conservativeResize(m.rows() + 1, Eigen::NoChange);
    m.row(m.rows() - 1) = row.row(0);
  }

  Mat<T> embed(const std::vector<TokenId>& ids,
               const std::vector<int>& pos) const {
    const T scale = std::sqrt(static_cast<T>(config_.d_model));
    Mat<T> x(static_cast<Eigen::Index>(ids.size()), config_.d_model);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      x.row(r) = embedding_.value.row(ids[i]) * scale + positions_.row(pos[i]);
    }
    return x;
  }

  void embed_backward(const std::vector<TokenId>& ids, const Mat<T>& dx) {
    const T scale = std::sqrt(static_cast<T>(config_.d_model));
    for (std::size_t i = 0; i < ids.size(); ++i) {
      embedding_.grad.row(ids[i]) += dx.row(static_cast<Eigen::Index>(i)) * scale;
    }
  }

  BelmConfig config_;
  Eigen::Index vocab_size_;
  std::uint64_t steps_ = 0;
  Param<T> embedding_;
  std::vector<EncoderLayer<T>> encoder_;
  LayerNorm<T> enc_norm_;
  std::vector<DecoderLayer<T>> decoder_;
  LayerNorm<T> dec_norm_;
  Linear<T> output_;
  Mat<T> positions_;
};

}  // namespace csfusion::belm
