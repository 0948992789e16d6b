#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "angrymtl/graph.hpp"
#include "angrymtl/params.hpp"

namespace angrymtl {

// Lowercased surface tokens: runs of alphanumerics (bytes >= 0x80 count as
// word characters) plus single-character punctuation tokens.
std::vector<std::string> basic_tokens(const std::string& text);

// Subword ids for the shared encoder. Two modes share the special ids
// PAD=0 CLS=1 SEP=2 UNK=3:
//  - hashed: every word maps to 4 + fnv1a(word) % (vocab_size - 4)
//  - wordpiece: greedy longest-match against an explicit piece list, with
//    non-initial pieces spelled "##..."; unmatched words become UNK
struct ContextualTokenizer {
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kSep = 2;
  static constexpr int kUnk = 3;

  int vocab_size = 1024;
  std::vector<std::string> pieces;                 // empty in hashed mode
  std::unordered_map<std::string, int> piece_ids;  // empty in hashed mode

  static ContextualTokenizer hashed(int vocab_size = 1024);
  static ContextualTokenizer wordpiece(const std::vector<std::string>& vocab);
  static ContextualTokenizer wordpiece_file(const std::string& path);

  bool is_wordpiece() const { return !pieces.empty(); }

  // [CLS] pieces... [SEP]; when the full sequence would exceed max_len the
  // pieces are cut so the result is exactly max_len long, [SEP] kept.
  // Throws EmptyText when the text has no tokens.
  std::vector<int> encode(const std::string& text, int max_len) const;
};

// Word ids for the static embedding table. Id 0 is reserved; in bucket mode
// words hash to 1..size-1, in list mode unknown words fall back to 0.
struct StaticVocabulary {
  int size = 4096;
  std::unordered_map<std::string, int> word_ids;  // empty in bucket mode

  static StaticVocabulary hashed(int buckets = 4096);
  static StaticVocabulary from_words(const std::vector<std::string>& words);

  int lookup(const std::string& word) const;
  // One id per basic token. Throws EmptyText when the text has no tokens.
  std::vector<int> encode(const std::string& text) const;
};

// Frozen word-vector table; row 0 is the all-zero OOV row in loaded mode and
// stays zero in the random fallback too.
struct StaticVectors {
  StaticVocabulary vocab;
  Mat table;  // vocab.size x dim
};

// Text format: one "word v1 .. vdim" line per word, space separated.
StaticVectors load_static_vectors(const std::string& path, int dim);
StaticVectors random_static_vectors(int buckets, int dim, uint64_t seed);

// ---------------------------------------------------------------------------
// Shared encoder: a small pre-norm-free (post-LN) transformer. The output is
// the encoding at the [CLS] position.

struct TransformerDims {
  int d = 768;
  int layers = 2;
  int heads = 2;
  int vocab = 1024;
  int max_len = 128;
  int ffn_mult = 4;
};

struct AttnParams {
  Tensor* wq;
  Tensor* bq;
  Tensor* wk;
  Tensor* bk;
  Tensor* wv;
  Tensor* bv;
  Tensor* wo;
  Tensor* bo;
};

struct LayerNormParams {
  Tensor* gamma;
  Tensor* beta;
};

struct FfnParams {
  Tensor* w1;
  Tensor* b1;
  Tensor* w2;
  Tensor* b2;
};

struct TransformerLayerParams {
  AttnParams attn;
  LayerNormParams ln1;
  FfnParams ffn;
  LayerNormParams ln2;
};

struct SharedEncoderParams {
  TransformerDims dims;
  Tensor* tok_embed = nullptr;  // vocab x d
  Tensor* pos_embed = nullptr;  // max_len x d
  std::vector<TransformerLayerParams> layers;
};

// Registers tensors under "shared.*". d must be divisible by heads.
SharedEncoderParams add_shared_encoder(ParamStore& store, const TransformerDims& dims);
// N(0, 0.02) for embeddings and weights, gamma=1, beta and biases 0.
void init_shared_encoder(const SharedEncoderParams& p, uint64_t seed);
// token_ids must be nonempty and no longer than dims.max_len. Returns d x 1.
ag::Expr shared_encode(ag::Graph& g, const SharedEncoderParams& p,
                       const std::vector<int>& token_ids);

// ---------------------------------------------------------------------------
// Private encoder: a bidirectional LSTM over static word vectors. The output
// concatenates the forward direction's last hidden state with the backward
// direction's last hidden state (the one produced at the first token).

struct LstmParams {
  Tensor* w_ih;  // 4h x input_dim, gate order i,f,g,o
  Tensor* w_hh;  // 4h x h
  Tensor* b;     // 4h x 1
};

struct PrivateEncoderParams {
  int input_dim = 0;
  int hidden = 0;
  LstmParams fwd;
  LstmParams bwd;
};

// Registers tensors under "task.<task_id>.lstm.*".
PrivateEncoderParams add_private_encoder(ParamStore& store, const std::string& task_id,
                                         int input_dim, int hidden);
void init_private_encoder(const PrivateEncoderParams& p, uint64_t seed);
// embedded: T x input_dim, one row per token, T >= 1. Returns 2h x 1.
ag::Expr private_encode(ag::Graph& g, const PrivateEncoderParams& p, ag::Expr embedded);

}  // namespace angrymtl
