#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "csfusion/belm/model.hpp"
#include "csfusion/error.hpp"

namespace csfusion::belm {

struct Hypothesis {
  Utterance tokens;
  double log_prob = 0.0;
  /// False when the search hit max_len before emitting <eos>.
  bool finished = true;
};

/// Tokens the decoder may emit: everything except blank and sos. <eos>
/// ends a hypothesis.
inline bool emittable(TokenId t) {
  return t != Vocab::kBlank && t != Vocab::kSos;
}

namespace detail {

inline bool better(const Hypothesis& a, const Hypothesis& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  return a.tokens < b.tokens;
}

}  // namespace detail

/// Beam search over sos-started sequences, scored by summed log-probability
/// (no length normalisation). Hypotheses end at <eos> or, unfinished, after
/// max_len decoder steps. Returns up to `nbest` hypotheses, best first.
template <typename T>
std::vector<Hypothesis> beam_search(const BelmModel<T>& model,
                                    const BelmInput& input, std::size_t beam,
                                    std::size_t nbest = 1) {
  if (beam == 0) throw Error(ErrorKind::kInvalidArgument, "beam must be positive");
  using State = typename BelmModel<T>::DecoderState;
  struct Live {
    Hypothesis hyp;
    State state;
    TokenId last;
  };
  struct Candidate {
    double score;
    std::size_t parent;
    TokenId token;
  };

  const auto enc = model.encode_source(input);
  const auto vocab_size = static_cast<TokenId>(model.vocab_size());
  const int max_steps = model.config().max_len;

  std::vector<Live> alive;
  alive.push_back({Hypothesis{{}, 0.0, false}, model.initial_state(), Vocab::kSos});
  std::vector<Hypothesis> done;

  for (int step = 0; step < max_steps && !alive.empty(); ++step) {
    std::vector<Candidate> candidates;
    candidates.reserve(alive.size() * static_cast<std::size_t>(vocab_size));
    for (std::size_t h = 0; h < alive.size(); ++h) {
      const auto logp = model.step(enc, alive[h].state, alive[h].last);
      for (TokenId t = 0; t < vocab_size; ++t) {
        if (!emittable(t)) continue;
        candidates.push_back(
            {alive[h].hyp.log_prob + static_cast<double>(logp(t)), h, t});
      }
    }
    const std::size_t keep = std::min(beam, candidates.size());
    auto order = [](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.parent != b.parent) return a.parent < b.parent;
      return a.token < b.token;
    };
    std::partial_sort(candidates.begin(),
                      candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(), order);

    std::vector<Live> next;
    for (std::size_t i = 0; i < keep; ++i) {
      const Candidate& c = candidates[i];
      const Live& parent = alive[c.parent];
      if (c.token == Vocab::kEos) {
        done.push_back({parent.hyp.tokens, c.score, true});
        continue;
      }
      Live child{parent.hyp, parent.state, c.token};
      child.hyp.tokens.push_back(c.token);
      child.hyp.log_prob = c.score;
      next.push_back(std::move(child));
    }
    alive = std::move(next);

    // Scores only fall as hypotheses grow, so once the n-th best finished
    // hypothesis beats every live one the ranking is settled.
    if (done.size() >= nbest && !alive.empty()) {
      std::vector<double> scores;
      for (const auto& d : done) scores.push_back(d.log_prob);
      std::nth_element(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(nbest - 1),
                       scores.end(), std::greater<>());
      double best_alive = -std::numeric_limits<double>::infinity();
      for (const auto& a : alive) best_alive = std::max(best_alive, a.hyp.log_prob);
      if (scores[nbest - 1] >= best_alive) alive.clear();
    }
  }
  for (auto& a : alive) {
    a.hyp.finished = false;
    done.push_back(std::move(a.hyp));
  }
  std::sort(done.begin(), done.end(), detail::better);
  if (done.size() > nbest) done.resize(nbest);
  return done;
}

template <typename T>
Hypothesis decode(const BelmModel<T>& model, const BelmInput& input,
                  std::size_t beam) {
  return beam_search(model, input, beam, 1).front();
}

/// Argmax rollout recomputing the full decoder at every step.
template <typename T>
Hypothesis greedy_decode(const BelmModel<T>& model, const BelmInput& input) {
  std::vector<TokenId> prefix{Vocab::kSos};
  Hypothesis hyp{{}, 0.0, false};
  for (int step = 0; step < model.config().max_len; ++step) {
    const Mat<T> logits = model.forward(input, prefix);
    const auto row = logits.row(logits.rows() - 1);
    const T mx = row.maxCoeff();
    const T lse = mx + std::log((row.array() - mx).exp().sum());
    TokenId best = -1;
    for (TokenId t = 0; t < static_cast<TokenId>(row.size()); ++t) {
      if (emittable(t) && (best < 0 || row(t) > row(best))) best = t;
    }
    hyp.log_prob += static_cast<double>(row(best) - lse);
    if (best == Vocab::kEos) {
      hyp.finished = true;
      break;
    }
    hyp.tokens.push_back(best);
    prefix.push_back(best);
  }
  return hyp;
}

}  // namespace csfusion::belm
