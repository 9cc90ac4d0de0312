#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "csfusion/rng.hpp"

namespace csfusion::belm {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Row range of one sequence inside a packed batch.
struct Segment {
  Eigen::Index start = 0;
  Eigen::Index len = 0;
};

template <typename T>
struct Param {
  Mat<T> value;
  Mat<T> grad;

  void resize(Eigen::Index rows, Eigen::Index cols) {
    value = Mat<T>::Zero(rows, cols);
    grad = Mat<T>::Zero(rows, cols);
  }
};

/// Dropout source for one forward pass; a null rng means evaluation mode.
struct DropoutContext {
  Rng* rng = nullptr;
  double p = 0.0;

  bool active() const { return rng != nullptr && p > 0.0; }
};

/// Applies inverted dropout in place and records the mask for backward.
template <typename T>
void apply_dropout(Mat<T>& x, const DropoutContext& ctx, Mat<T>* mask) {
  if (!ctx.active()) {
    if (mask) mask->resize(0, 0);
    return;
  }
  const T keep_scale = T(1) / T(1 - ctx.p);
  Mat<T> m(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = ctx.rng->bernoulli(ctx.p) ? T(0) : keep_scale;
  }
  x.array() *= m.array();
  if (mask) *mask = std::move(m);
}

template <typename T>
void dropout_backward(Mat<T>& dy, const Mat<T>& mask) {
  if (mask.size() != 0) dy.array() *= mask.array();
}

/// Row-wise softmax in place; -inf entries get probability zero.
template <typename T>
void softmax_rows(Mat<T>& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    auto row = s.row(r);
    const T mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
}

template <typename T>
struct Linear {
  Param<T> w;  // in x out
  Param<T> b;  // 1 x out

  void init(Eigen::Index in, Eigen::Index out, Rng& rng) {
    w.resize(in, out);
    b.resize(1, out);
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (Eigen::Index i = 0; i < w.value.size(); ++i) {
      w.value.data()[i] = static_cast<T>((2.0 * rng.uniform() - 1.0) * limit);
    }
  }

  Mat<T> forward(const Mat<T>& x) const {
    Mat<T> y = x * w.value;
    y.rowwise() += b.value.row(0);
    return y;
  }

  Mat<T> backward(const Mat<T>& x, const Mat<T>& dy) {
    w.grad.noalias() += x.transpose() * dy;
    b.grad += dy.colwise().sum();
    return dy * w.value.transpose();
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".w", w);
    f(prefix + ".b", b);
  }
};

template <typename T>
struct LayerNorm {
  struct Cache {
    Mat<T> xhat;
    Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std;
  };

  Param<T> gamma;  // 1 x d
  Param<T> beta;   // 1 x d
  static constexpr double kEps = 1e-5;

  void init(Eigen::Index d) {
    gamma.resize(1, d);
    beta.resize(1, d);
    gamma.value.setOnes();
  }

  Mat<T> forward(const Mat<T>& x, Cache* cache) const {
    const Eigen::Index d = x.cols();
    Mat<T> xhat(x.rows(), d);
    Eigen::Matrix<T, Eigen::Dynamic, 1> inv(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const T mean = x.row(r).mean();
      const auto centered = (x.row(r).array() - mean).eval();
      const T var = centered.square().mean();
      inv(r) = T(1) / std::sqrt(var + static_cast<T>(kEps));
      xhat.row(r) = centered * inv(r);
    }
    Mat<T> y = xhat.array().rowwise() * gamma.value.row(0).array();
    y.rowwise() += beta.value.row(0);
    if (cache) {
      cache->xhat = std::move(xhat);
      cache->inv_std = std::move(inv);
    }
    return y;
  }

  Mat<T> backward(const Cache& c, const Mat<T>& dy) {
    gamma.grad += (dy.array() * c.xhat.array()).colwise().sum().matrix();
    beta.grad += dy.colwise().sum();
    const Mat<T> dxhat = dy.array().rowwise() * gamma.value.row(0).array();
    Mat<T> dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
      const T mean_d = dxhat.row(r).mean();
      const T mean_dx = dxhat.row(r).dot(c.xhat.row(r)) / static_cast<T>(dy.cols());
      dx.row(r) = c.inv_std(r) * (dxhat.row(r).array() - mean_d -
                                  c.xhat.row(r).array() * mean_dx)
                                     .matrix();
    }
    return dx;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".gamma", gamma);
    f(prefix + ".beta", beta);
  }
};

/// Multi-head scaled dot-product attention over packed sequences. Query
/// segment i attends only inside key segment i.
template <typename T>
struct MultiHeadAttention {
  struct Cache {
    Mat<T> xq, xkv;
    Mat<T> q, k, v;
    Mat<T> concat;
    std::vector<Mat<T>> probs;  // [segment * heads + head]
    std::vector<Segment> q_segs, kv_segs;
    bool self = false;
  };

  Linear<T> wq, wk, wv, wo;
  int heads = 1;

  void init(Eigen::Index d, int n_heads, Rng& rng) {
    heads = n_heads;
    wq.init(d, d, rng);
    wk.init(d, d, rng);
    wv.init(d, d, rng);
    wo.init(d, d, rng);
  }

  Eigen::Index head_dim() const { return wq.w.value.cols() / heads; }

  /// Self-attention when `xkv` is null. `causal` masks keys after the query
  /// position (query and key segments must then coincide).
  Mat<T> forward(const Mat<T>& xq, const Mat<T>* xkv,
                 const std::vector<Segment>& q_segs,
                 const std::vector<Segment>& kv_segs, bool causal,
                 Cache* cache) const {
    const Mat<T>& kv_in = xkv ? *xkv : xq;
    Mat<T> q = wq.forward(xq);
    Mat<T> k = wk.forward(kv_in);
    Mat<T> v = wv.forward(kv_in);
    const Eigen::Index dk = head_dim();
    const T scale = T(1) / std::sqrt(static_cast<T>(dk));
    Mat<T> concat = Mat<T>::Zero(xq.rows(), q.cols());
    std::vector<Mat<T>> probs;
    if (cache) probs.reserve(q_segs.size() * static_cast<std::size_t>(heads));
    for (std::size_t s = 0; s < q_segs.size(); ++s) {
      const Segment qs = q_segs[s], ks = kv_segs[s];
      for (int h = 0; h < heads; ++h) {
        const Eigen::Index c0 = h * dk;
        Mat<T> p = (q.block(qs.start, c0, qs.len, dk) *
                    k.block(ks.start, c0, ks.len, dk).transpose()) *
                   scale;
        if (causal) {
          for (Eigen::Index i = 0; i < p.rows(); ++i) {
            for (Eigen::Index j = i + 1; j < p.cols(); ++j) {
              p(i, j) = -std::numeric_limits<T>::infinity();
            }
          }
        }
        softmax_rows(p);
        concat.block(qs.start, c0, qs.len, dk).noalias() =
            p * v.block(ks.start, c0, ks.len, dk);
        if (cache) probs.push_back(std::move(p));
      }
    }
    Mat<T> out = wo.forward(concat);
    if (cache) {
      cache->xq = xq;
      cache->self = xkv == nullptr;
      if (!cache->self) cache->xkv = *xkv;
      cache->q = std::move(q);
      cache->k = std::move(k);
      cache->v = std::move(v);
      cache->concat = std::move(concat);
      cache->probs = std::move(probs);
      cache->q_segs = q_segs;
      cache->kv_segs = kv_segs;
    }
    return out;
  }

  /// Returns (d_query_input, d_key_value_input). For self-attention the two
  /// are already summed into the first and the second is empty.
  std::pair<Mat<T>, Mat<T>> backward(const Cache& c, const Mat<T>& dout) {
    const Mat<T> dconcat = wo.backward(c.concat, dout);
    const Eigen::Index dk = head_dim();
    const T scale = T(1) / std::sqrt(static_cast<T>(dk));
    Mat<T> dq = Mat<T>::Zero(c.q.rows(), c.q.cols());
    Mat<T> dkm = Mat<T>::Zero(c.k.rows(), c.k.cols());
    Mat<T> dv = Mat<T>::Zero(c.v.rows(), c.v.cols());
    for (std::size_t s = 0; s < c.q_segs.size(); ++s) {
      const Segment qs = c.q_segs[s], ks = c.kv_segs[s];
      for (int h = 0; h < heads; ++h) {
        const Eigen::Index c0 = h * dk;
        const Mat<T>& p = c.probs[s * static_cast<std::size_t>(heads) +
                                  static_cast<std::size_t>(h)];
        const auto d_o = dconcat.block(qs.start, c0, qs.len, dk);
        const Mat<T> dp = d_o * c.v.block(ks.start, c0, ks.len, dk).transpose();
        dv.block(ks.start, c0, ks.len, dk).noalias() += p.transpose() * d_o;
        Mat<T> ds = p.array() *
                    (dp.array().colwise() - (dp.array() * p.array()).rowwise().sum());
        ds *= scale;
        dq.block(qs.start, c0, qs.len, dk).noalias() +=
            ds * c.k.block(ks.start, c0, ks.len, dk);
        dkm.block(ks.start, c0, ks.len, dk).noalias() +=
            ds.transpose() * c.q.block(qs.start, c0, qs.len, dk);
      }
    }
    const Mat<T>& kv_in = c.self ? c.xq : c.xkv;
    Mat<T> dxq = wq.backward(c.xq, dq);
    Mat<T> dxkv = wk.backward(kv_in, dkm);
    dxkv += wv.backward(kv_in, dv);
    if (c.self) {
      dxq += dxkv;
      return {std::move(dxq), Mat<T>()};
    }
    return {std::move(dxq), std::move(dxkv)};
  }

  /// One query row against already projected keys and values.
  Mat<T> attend(const Mat<T>& xq_row, const Mat<T>& k, const Mat<T>& v) const {
    const Mat<T> q = wq.forward(xq_row);
    const Eigen::Index dk = head_dim();
    const T scale = T(1) / std::sqrt(static_cast<T>(dk));
    Mat<T> concat(1, q.cols());
    for (int h = 0; h < heads; ++h) {
      const Eigen::Index c0 = h * dk;
      Mat<T> p = (q.block(0, c0, 1, dk) * k.block(0, c0, k.rows(), dk).transpose()) *
                 scale;
      softmax_rows(p);
      concat.block(0, c0, 1, dk).noalias() = p * v.block(0, c0, v.rows(), dk);
    }
    return wo.forward(concat);
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    wq.visit(prefix + ".q", f);
    wk.visit(prefix + ".k", f);
    wv.visit(prefix + ".v", f);
    wo.visit(prefix + ".o", f);
  }
};

template <typename T>
struct FeedForward {
  struct Cache {
    Mat<T> x, pre, hidden;
  };

  Linear<T> w1, w2;

  void init(Eigen::Index d, Eigen::Index d_ff, Rng& rng) {
    w1.init(d, d_ff, rng);
    w2.init(d_ff, d, rng);
  }

  Mat<T> forward(const Mat<T>& x, Cache* cache) const {
    Mat<T> pre = w1.forward(x);
    Mat<T> hidden = pre.cwiseMax(T(0));
    Mat<T> y = w2.forward(hidden);
    if (cache) {
      cache->x = x;
      cache->pre = std::move(pre);
      cache->hidden = std::move(hidden);
    }
    return y;
  }

  Mat<T> backward(const Cache& c, const Mat<T>& dy) {
    Mat<T> dh = w2.backward(c.hidden, dy);
    dh.array() *= (c.pre.array() > T(0)).template cast<T>();
    return w1.backward(c.x, dh);
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    w1.visit(prefix + ".ff1", f);
    w2.visit(prefix + ".ff2", f);
  }
};

/// Pre-norm block: self-attention then feed-forward, each residual.
template <typename T>
struct EncoderLayer {
  struct Cache {
    typename LayerNorm<T>::Cache ln1, ln2;
    typename MultiHeadAttention<T>::Cache attn;
    typename FeedForward<T>::Cache ff;
    Mat<T> drop1, drop2;
  };

  LayerNorm<T> ln1, ln2;
  MultiHeadAttention<T> attn;
  FeedForward<T> ff;

  void init(Eigen::Index d, int heads, Eigen::Index d_ff, Rng& rng) {
    ln1.init(d);
    ln2.init(d);
    attn.init(d, heads, rng);
    ff.init(d, d_ff, rng);
  }

  Mat<T> forward(const Mat<T>& x, const std::vector<Segment>& segs,
                 const DropoutContext& drop, Cache* c) const {
    Mat<T> a = attn.forward(ln1.forward(x, c ? &c->ln1 : nullptr), nullptr,
                            segs, segs, false, c ? &c->attn : nullptr);
    apply_dropout(a, drop, c ? &c->drop1 : nullptr);
    Mat<T> x1 = x + a;
    Mat<T> f = ff.forward(ln2.forward(x1, c ? &c->ln2 : nullptr),
                          c ? &c->ff : nullptr);
    apply_dropout(f, drop, c ? &c->drop2 : nullptr);
    return x1 + f;
  }

  Mat<T> backward(const Cache& c, const Mat<T>& dout) {
    Mat<T> df = dout;
    dropout_backward(df, c.drop2);
    Mat<T> dx1 = dout + ln2.backward(c.ln2, ff.backward(c.ff, df));
    Mat<T> da = dx1;
    dropout_backward(da, c.drop1);
    return dx1 + ln1.backward(c.ln1, attn.backward(c.attn, da).first);
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    ln1.visit(prefix + ".ln1", f);
    attn.visit(prefix + ".self", f);
    ln2.visit(prefix + ".ln2", f);
    ff.visit(prefix, f);
  }
};

/// Pre-norm block: causal self-attention, cross-attention to the encoder
/// memory, feed-forward.
template <typename T>
struct DecoderLayer {
  struct Cache {
    typename LayerNorm<T>::Cache ln1, ln2, ln3;
    typename MultiHeadAttention<T>::Cache self_attn, cross_attn;
    typename FeedForward<T>::Cache ff;
    Mat<T> drop1, drop2, drop3;
  };

  LayerNorm<T> ln1, ln2, ln3;
  MultiHeadAttention<T> self_attn, cross_attn;
  FeedForward<T> ff;

  void init(Eigen::Index d, int heads, Eigen::Index d_ff, Rng& rng) {
    ln1.init(d);
    ln2.init(d);
    ln3.init(d);
    self_attn.init(d, heads, rng);
    cross_attn.init(d, heads, rng);
    ff.init(d, d_ff, rng);
  }

  Mat<T> forward(const Mat<T>& x, const Mat<T>& memory,
                 const std::vector<Segment>& tgt_segs,
                 const std::vector<Segment>& src_segs,
                 const DropoutContext& drop, Cache* c) const {
    Mat<T> a = self_attn.forward(ln1.forward(x, c ? &c->ln1 : nullptr), nullptr,
                                 tgt_segs, tgt_segs, true,
                                 c ? &c->self_attn : nullptr);
    apply_dropout(a, drop, c ? &c->drop1 : nullptr);
    Mat<T> x1 = x + a;
    Mat<T> b = cross_attn.forward(ln2.forward(x1, c ? &c->ln2 : nullptr),
                                  &memory, tgt_segs, src_segs, false,
                                  c ? &c->cross_attn : nullptr);
    apply_dropout(b, drop, c ? &c->drop2 : nullptr);
    Mat<T> x2 = x1 + b;
    Mat<T> f = ff.forward(ln3.forward(x2, c ? &c->ln3 : nullptr),
                          c ? &c->ff : nullptr);
    apply_dropout(f, drop, c ? &c->drop3 : nullptr);
    return x2 + f;
  }

  /// Returns d_input; adds the memory gradient into `dmemory`.
  Mat<T> backward(const Cache& c, const Mat<T>& dout, Mat<T>& dmemory) {
    Mat<T> df = dout;
    dropout_backward(df, c.drop3);
    Mat<T> dx2 = dout + ln3.backward(c.ln3, ff.backward(c.ff, df));
    Mat<T> db = dx2;
    dropout_backward(db, c.drop2);
    auto [dq, dmem] = cross_attn.backward(c.cross_attn, db);
    dmemory += dmem;
    Mat<T> dx1 = dx2 + ln2.backward(c.ln2, dq);
    Mat<T> da = dx1;
    dropout_backward(da, c.drop1);
    return dx1 + ln1.backward(c.ln1, self_attn.backward(c.self_attn, da).first);
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    ln1.visit(prefix + ".ln1", f);
    self_attn.visit(prefix + ".self", f);
    ln2.visit(prefix + ".ln2", f);
    cross_attn.visit(prefix + ".cross", f);
    ln3.visit(prefix + ".ln3", f);
    ff.visit(prefix, f);
  }
};

}  // namespace csfusion::belm
