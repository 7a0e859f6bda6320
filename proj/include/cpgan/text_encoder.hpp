#pragma once

#include <utility>
#include <vector>

#include "cpgan/memory_bank.hpp"
#include "cpgan/ops.hpp"

namespace cpgan {
namespace text {

constexpr double kLeakySlope = 0.2;

// Caption encoder: per-word embedding fused with projected memory, then a
// bidirectional LSTM. Output per step is d = 2 * hidden (forward half on
// top, backward half below); the sentence embedding is the last column.
template <typename T>
struct TextEncoderParams {
  index_t embed_dim = 0;
  index_t hidden = 0;  // per direction, d = 2 * hidden

  Tensor<T> embedding;              // (embed_dim, vocab_size)
  Tensor<T> fuse_w1, fuse_b1;       // (embed_dim, memory_dim), (embed_dim, 1)
  Tensor<T> fuse_w2, fuse_b2;       // (embed_dim, embed_dim), (embed_dim, 1)
  Tensor<T> wx_fwd, wh_fwd, b_fwd;  // (4h, 2e), (4h, h), (4h, 1)
  Tensor<T> wx_bwd, wh_bwd, b_bwd;

  static TextEncoderParams init(index_t vocab_size, index_t embed_dim,
                                index_t memory_dim, index_t d, Rng& rng,
                                T stddev = T(0.02)) {
    require(d % 2 == 0, "text encoder output dim must be even, got ", d);
    TextEncoderParams p;
    p.embed_dim = embed_dim;
    p.hidden = d / 2;
    index_t h = p.hidden;
    p.embedding = Tensor<T>::randn({embed_dim, vocab_size}, rng, stddev);
    p.fuse_w1 = Tensor<T>::randn({embed_dim, memory_dim}, rng, stddev);
    p.fuse_b1 = Tensor<T>::zeros({embed_dim, 1});
    p.fuse_w2 = Tensor<T>::randn({embed_dim, embed_dim}, rng, stddev);
    p.fuse_b2 = Tensor<T>::zeros({embed_dim, 1});
    p.wx_fwd = Tensor<T>::randn({4 * h, 2 * embed_dim}, rng, stddev);
    p.wh_fwd = Tensor<T>::randn({4 * h, h}, rng, stddev);
    p.b_fwd = Tensor<T>::zeros({4 * h, 1});
    p.wx_bwd = Tensor<T>::randn({4 * h, 2 * embed_dim}, rng, stddev);
    p.wh_bwd = Tensor<T>::randn({4 * h, h}, rng, stddev);
    p.b_bwd = Tensor<T>::zeros({4 * h, 1});
    return p;
  }

  std::vector<Tensor<T>> parameters() const {
    return {embedding, fuse_w1, fuse_b1, fuse_w2, fuse_b2,
            wx_fwd,    wh_fwd,  b_fwd,   wx_bwd,  wh_bwd,  b_bwd};
  }

  void set_requires_grad(bool b) const {
    for (auto& t : parameters()) t.set_requires_grad(b);
  }
};

// Memory row as a constant (memory_dim, 1) tensor.
template <typename T>
Tensor<T> memory_column(const MemoryBank& bank, index_t word_id) {
  require(word_id >= 0 && word_id < bank.vocab_size, "word id ", word_id,
          " out of range [0,", bank.vocab_size, ")");
  std::vector<T> col((std::size_t)bank.memory_dim);
  const double* r = bank.row(word_id);
  for (index_t d = 0; d < bank.memory_dim; ++d) col[(std::size_t)d] = (T)r[d];
  return Tensor<T>::from_data({bank.memory_dim, 1}, std::move(col));
}

// f_i = [e_i; p(m_i)], a (2*embed_dim, 1) column. The bank is a frozen
// input; gradient reaches the embedding and the fusion MLP.
template <typename T>
Tensor<T> fuse_word(index_t word_id, const TextEncoderParams<T>& params,
                    const MemoryBank& bank) {
  require(word_id >= 0 && word_id < params.embedding.extent(1), "word id ",
          word_id, " out of range for vocab ", params.embedding.extent(1));
  auto e = ops::slice_cols(params.embedding, word_id, 1);
  auto m = memory_column<T>(bank, word_id);
  auto hidden = ops::leaky_relu(
      ops::affine(params.fuse_w1, m, params.fuse_b1), (T)kLeakySlope);
  auto pm = ops::affine(params.fuse_w2, hidden, params.fuse_b2);
  return ops::concat(0, std::vector<Tensor<T>>{e, pm});
}

namespace detail {

// One LSTM step: gates in i, f, g, o row blocks.
template <typename T>
void lstm_step(const Tensor<T>& wx, const Tensor<T>& wh, const Tensor<T>& b,
               const Tensor<T>& x, Tensor<T>& h, Tensor<T>& c) {
  index_t hd = wh.extent(1);
  auto pre = ops::add(ops::affine(wx, x, b), ops::matmul(wh, h));
  auto ig = ops::sigmoid(ops::slice_rows(pre, 0, hd));
  auto fg = ops::sigmoid(ops::slice_rows(pre, hd, hd));
  auto gg = ops::tanh(ops::slice_rows(pre, 2 * hd, hd));
  auto og = ops::sigmoid(ops::slice_rows(pre, 3 * hd, hd));
  c = ops::add(ops::mul(fg, c), ops::mul(ig, gg));
  h = ops::mul(og, ops::tanh(c));
}

}  // namespace detail

template <typename T>
struct TextEncoding {
  Tensor<T> words;     // (d, T)
  Tensor<T> sentence;  // (d, 1), the last column of words
};

template <typename T>
TextEncoding<T> encode_text(const std::vector<index_t>& tokens,
                            const TextEncoderParams<T>& params,
                            const MemoryBank& bank) {
  require(!tokens.empty(), "encode_text on an empty token list");
  index_t t_len = (index_t)tokens.size();
  index_t h = params.hidden;

  std::vector<Tensor<T>> fused;
  for (index_t tok : tokens) fused.push_back(fuse_word(tok, params, bank));

  std::vector<Tensor<T>> fwd((std::size_t)t_len), bwd((std::size_t)t_len);
  {
    auto hh = Tensor<T>::zeros({h, 1});
    auto cc = Tensor<T>::zeros({h, 1});
    for (index_t t = 0; t < t_len; ++t) {
      detail::lstm_step(params.wx_fwd, params.wh_fwd, params.b_fwd,
                        fused[(std::size_t)t], hh, cc);
      fwd[(std::size_t)t] = hh;
    }
  }
  {
    auto hh = Tensor<T>::zeros({h, 1});
    auto cc = Tensor<T>::zeros({h, 1});
    for (index_t t = t_len - 1; t >= 0; --t) {
      detail::lstm_step(params.wx_bwd, params.wh_bwd, params.b_bwd,
                        fused[(std::size_t)t], hh, cc);
      bwd[(std::size_t)t] = hh;
    }
  }

  std::vector<Tensor<T>> cols;
  for (index_t t = 0; t < t_len; ++t)
    cols.push_back(ops::concat(
        0, std::vector<Tensor<T>>{fwd[(std::size_t)t], bwd[(std::size_t)t]}));
  TextEncoding<T> out;
  out.words = ops::concat(1, cols);
  out.sentence = ops::slice_cols(out.words, t_len - 1, 1);
  return out;
}

}  // namespace text
}  // namespace cpgan
