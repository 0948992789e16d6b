#include "angrymtl/encoders.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "angrymtl/errors.hpp"
#include "angrymtl/rng.hpp"

namespace angrymtl {

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

}  // namespace

std::vector<std::string> basic_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (is_word_byte(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
      continue;
    }
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
    if (!std::isspace(c)) out.emplace_back(1, static_cast<char>(c));
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// ---------------------------------------------------------------------------

ContextualTokenizer ContextualTokenizer::hashed(int vocab_size) {
  if (vocab_size <= kUnk + 1) throw ConfigError("contextual vocab too small");
  ContextualTokenizer t;
  t.vocab_size = vocab_size;
  return t;
}

ContextualTokenizer ContextualTokenizer::wordpiece(const std::vector<std::string>& vocab) {
  ContextualTokenizer t;
  t.pieces = vocab;
  t.vocab_size = static_cast<int>(vocab.size());
  for (size_t i = 0; i < vocab.size(); ++i) t.piece_ids[vocab[i]] = static_cast<int>(i);
  if (t.vocab_size <= kUnk + 1) throw ConfigError("wordpiece vocab too small");
  return t;
}

ContextualTokenizer ContextualTokenizer::wordpiece_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocab file: " + path);
  std::vector<std::string> vocab;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) vocab.push_back(line);
  }
  return wordpiece(vocab);
}

std::vector<int> ContextualTokenizer::encode(const std::string& text, int max_len) const {
  if (max_len < 3) throw ConfigError("max_len must leave room for [CLS] and [SEP]");
  std::vector<std::string> words = basic_tokens(text);
  if (words.empty()) throw EmptyText("no tokens in text");

  std::vector<int> ids;
  ids.push_back(kCls);
  if (!is_wordpiece()) {
    const uint64_t span = static_cast<uint64_t>(vocab_size - (kUnk + 1));
    for (const std::string& w : words) {
      ids.push_back(kUnk + 1 + static_cast<int>(fnv1a(w) % span));
    }
  } else {
    for (const std::string& w : words) {
      // greedy longest match; continuation pieces carry the "##" prefix
      size_t at = 0;
      std::vector<int> piece_run;
      bool ok = true;
      while (at < w.size()) {
        size_t len = w.size() - at;
        int found = -1;
        while (len > 0) {
          std::string cand = (at == 0 ? "" : "##") + w.substr(at, len);
          auto it = piece_ids.find(cand);
          if (it != piece_ids.end()) {
            found = it->second;
            break;
          }
          --len;
        }
        if (found < 0) {
          ok = false;
          break;
        }
        piece_run.push_back(found);
        at += len;
      }
      if (ok) {
        ids.insert(ids.end(), piece_run.begin(), piece_run.end());
      } else {
        ids.push_back(kUnk);
      }
    }
  }
  ids.push_back(kSep);
  if (static_cast<int>(ids.size()) > max_len) {
    ids.resize(static_cast<size_t>(max_len));
    ids.back() = kSep;
  }
  return ids;
}

// ---------------------------------------------------------------------------

StaticVocabulary StaticVocabulary::hashed(int buckets) {
  if (buckets < 2) throw ConfigError("static vocab needs at least 2 buckets");
  StaticVocabulary v;
  v.size = buckets;
  return v;
}

StaticVocabulary StaticVocabulary::from_words(const std::vector<std::string>& words) {
  StaticVocabulary v;
  v.size = static_cast<int>(words.size()) + 1;
  for (size_t i = 0; i < words.size(); ++i) {
    v.word_ids.emplace(words[i], static_cast<int>(i) + 1);
  }
  return v;
}

int StaticVocabulary::lookup(const std::string& word) const {
  if (word_ids.empty()) {
    return 1 + static_cast<int>(fnv1a(word) % static_cast<uint64_t>(size - 1));
  }
  auto it = word_ids.find(word);
  return it == word_ids.end() ? 0 : it->second;
}

std::vector<int> StaticVocabulary::encode(const std::string& text) const {
  std::vector<std::string> words = basic_tokens(text);
  if (words.empty()) throw EmptyText("no tokens in text");
  std::vector<int> ids;
  ids.reserve(words.size());
  for (const std::string& w : words) ids.push_back(lookup(w));
  return ids;
}

StaticVectors load_static_vectors(const std::string& path, int dim) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vector file: " + path);
  std::vector<std::string> words;
  std::vector<Eigen::RowVectorXd> rows;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    Eigen::RowVectorXd v(dim);
    for (int j = 0; j < dim; ++j) {
      if (!(ss >> v(j))) {
        throw DataError("vector file line " + std::to_string(line_no) + ": expected " +
                        std::to_string(dim) + " values after the word");
      }
    }
    double extra;
    if (ss >> extra) {
      throw DataError("vector file line " + std::to_string(line_no) + ": more than " +
                      std::to_string(dim) + " values");
    }
    words.push_back(word);
    rows.push_back(v);
  }
  if (words.empty()) throw DataError("vector file is empty: " + path);

  StaticVectors sv;
  sv.vocab = StaticVocabulary::from_words(words);
  sv.table = Mat::Zero(sv.vocab.size, dim);
  for (size_t i = 0; i < rows.size(); ++i) sv.table.row(static_cast<long>(i) + 1) = rows[i];
  return sv;
}

StaticVectors random_static_vectors(int buckets, int dim, uint64_t seed) {
  StaticVectors sv;
  sv.vocab = StaticVocabulary::hashed(buckets);
  sv.table = Mat::Zero(buckets, dim);
  Rng rng(mix_seed(seed, fnv1a("static.embed")));
  for (long i = 1; i < sv.table.rows(); ++i) {
    for (long j = 0; j < sv.table.cols(); ++j) sv.table(i, j) = rng.gaussian(0.0, 0.1);
  }
  return sv;
}

// ---------------------------------------------------------------------------

SharedEncoderParams add_shared_encoder(ParamStore& store, const TransformerDims& dims) {
  if (dims.d <= 0 || dims.heads <= 0 || dims.d % dims.heads != 0) {
    throw ConfigError("encoder width must be a positive multiple of the head count");
  }
  SharedEncoderParams p;
  p.dims = dims;
  p.tok_embed = &store.add("shared.tok_embed", dims.vocab, dims.d);
  p.pos_embed = &store.add("shared.pos_embed", dims.max_len, dims.d);
  for (int l = 0; l < dims.layers; ++l) {
    const std::string base = "shared.l" + std::to_string(l) + ".";
    TransformerLayerParams lp;
    lp.attn.wq = &store.add(base + "attn.wq", dims.d, dims.d);
    lp.attn.bq = &store.add(base + "attn.bq", dims.d, 1);
    lp.attn.wk = &store.add(base + "attn.wk", dims.d, dims.d);
    lp.attn.bk = &store.add(base + "attn.bk", dims.d, 1);
    lp.attn.wv = &store.add(base + "attn.wv", dims.d, dims.d);
    lp.attn.bv = &store.add(base + "attn.bv", dims.d, 1);
    lp.attn.wo = &store.add(base + "attn.wo", dims.d, dims.d);
    lp.attn.bo = &store.add(base + "attn.bo", dims.d, 1);
    lp.ln1.gamma = &store.add(base + "ln1.gamma", dims.d, 1);
    lp.ln1.beta = &store.add(base + "ln1.beta", dims.d, 1);
    lp.ffn.w1 = &store.add(base + "ffn.w1", dims.d, dims.d * dims.ffn_mult);
    lp.ffn.b1 = &store.add(base + "ffn.b1", dims.d * dims.ffn_mult, 1);
    lp.ffn.w2 = &store.add(base + "ffn.w2", dims.d * dims.ffn_mult, dims.d);
    lp.ffn.b2 = &store.add(base + "ffn.b2", dims.d, 1);
    lp.ln2.gamma = &store.add(base + "ln2.gamma", dims.d, 1);
    lp.ln2.beta = &store.add(base + "ln2.beta", dims.d, 1);
    p.layers.push_back(lp);
  }
  return p;
}

void init_shared_encoder(const SharedEncoderParams& p, uint64_t seed) {
  fill_normal(*p.tok_embed, 0.0, 0.02, seed);
  fill_normal(*p.pos_embed, 0.0, 0.02, seed);
  for (const TransformerLayerParams& lp : p.layers) {
    fill_normal(*lp.attn.wq, 0.0, 0.02, seed);
    fill_normal(*lp.attn.wk, 0.0, 0.02, seed);
    fill_normal(*lp.attn.wv, 0.0, 0.02, seed);
    fill_normal(*lp.attn.wo, 0.0, 0.02, seed);
    fill_normal(*lp.ffn.w1, 0.0, 0.02, seed);
    fill_normal(*lp.ffn.w2, 0.0, 0.02, seed);
    lp.ln1.gamma->value.setOnes();
    lp.ln2.gamma->value.setOnes();
    // biases and LN shifts stay zero
  }
}

ag::Expr shared_encode(ag::Graph& g, const SharedEncoderParams& p,
                       const std::vector<int>& token_ids) {
  if (token_ids.empty()) throw EmptyText("shared encoder got an empty sequence");
  const long T = static_cast<long>(token_ids.size());
  if (T > p.dims.max_len) {
    throw DimensionMismatch("sequence length " + std::to_string(T) + " exceeds max_len " +
                            std::to_string(p.dims.max_len));
  }
  const int d = p.dims.d;
  const int heads = p.dims.heads;
  const long hd = d / heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));

  std::vector<int> positions(token_ids.size());
  for (size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i);

  ag::Expr x = g.lookup(*p.tok_embed, token_ids) + g.lookup(*p.pos_embed, positions);

  for (const TransformerLayerParams& lp : p.layers) {
    ag::Expr q = ag::add_bias_rows(ag::matmul(x, g.param(*lp.attn.wq)), g.param(*lp.attn.bq));
    ag::Expr k = ag::add_bias_rows(ag::matmul(x, g.param(*lp.attn.wk)), g.param(*lp.attn.bk));
    ag::Expr v = ag::add_bias_rows(ag::matmul(x, g.param(*lp.attn.wv)), g.param(*lp.attn.bv));

    std::vector<ag::Expr> head_outs;
    for (int h = 0; h < heads; ++h) {
      ag::Expr qh = ag::slice_cols(q, h * hd, hd);
      ag::Expr kh = ag::slice_cols(k, h * hd, hd);
      ag::Expr vh = ag::slice_cols(v, h * hd, hd);
      ag::Expr attn = ag::softmax_rows(ag::scale(ag::matmul(qh, ag::transpose(kh)), att_scale));
      head_outs.push_back(ag::matmul(attn, vh));
    }
    ag::Expr o = ag::add_bias_rows(ag::matmul(ag::concat_cols(head_outs), g.param(*lp.attn.wo)),
                                   g.param(*lp.attn.bo));
    x = ag::add_bias_rows(
        ag::scale_cols(ag::layer_norm_rows(x + o), g.param(*lp.ln1.gamma)),
        g.param(*lp.ln1.beta));

    ag::Expr h1 = ag::relu(
        ag::add_bias_rows(ag::matmul(x, g.param(*lp.ffn.w1)), g.param(*lp.ffn.b1)));
    ag::Expr f = ag::add_bias_rows(ag::matmul(h1, g.param(*lp.ffn.w2)), g.param(*lp.ffn.b2));
    x = ag::add_bias_rows(
        ag::scale_cols(ag::layer_norm_rows(x + f), g.param(*lp.ln2.gamma)),
        g.param(*lp.ln2.beta));
  }
  return ag::row_as_col(x, 0);
}

// ---------------------------------------------------------------------------

PrivateEncoderParams add_private_encoder(ParamStore& store, const std::string& task_id,
                                         int input_dim, int hidden) {
  if (input_dim <= 0 || hidden <= 0) throw ConfigError("lstm dims must be positive");
  PrivateEncoderParams p;
  p.input_dim = input_dim;
  p.hidden = hidden;
  const std::string base = "task." + task_id + ".lstm.";
  p.fwd.w_ih = &store.add(base + "fwd.w_ih", 4 * hidden, input_dim);
  p.fwd.w_hh = &store.add(base + "fwd.w_hh", 4 * hidden, hidden);
  p.fwd.b = &store.add(base + "fwd.b", 4 * hidden, 1);
  p.bwd.w_ih = &store.add(base + "bwd.w_ih", 4 * hidden, input_dim);
  p.bwd.w_hh = &store.add(base + "bwd.w_hh", 4 * hidden, hidden);
  p.bwd.b = &store.add(base + "bwd.b", 4 * hidden, 1);
  return p;
}

void init_private_encoder(const PrivateEncoderParams& p, uint64_t seed) {
  fill_xavier(*p.fwd.w_ih, seed);
  fill_xavier(*p.fwd.w_hh, seed);
  fill_xavier(*p.bwd.w_ih, seed);
  fill_xavier(*p.bwd.w_hh, seed);
  // forget-gate bias of 1 keeps early gradients flowing
  p.fwd.b->value.block(p.hidden, 0, p.hidden, 1).setOnes();
  p.bwd.b->value.block(p.hidden, 0, p.hidden, 1).setOnes();
}

namespace {

// One direction over the given time order; returns the last hidden state.
ag::Expr lstm_last_hidden(ag::Graph& g, const LstmParams& lp, int hidden, ag::Expr embedded,
                          const std::vector<long>& order) {
  ag::Expr w_ih = g.param(*lp.w_ih);
  ag::Expr w_hh = g.param(*lp.w_hh);
  ag::Expr b = g.param(*lp.b);
  ag::Expr h = g.constant(Mat::Zero(hidden, 1));
  ag::Expr c = g.constant(Mat::Zero(hidden, 1));
  for (long t : order) {
    ag::Expr x_t = ag::row_as_col(embedded, t);
    ag::Expr z = ag::matmul(w_ih, x_t) + ag::matmul(w_hh, h) + b;
    ag::Expr i_g = ag::sigmoid(ag::slice_rows(z, 0, hidden));
    ag::Expr f_g = ag::sigmoid(ag::slice_rows(z, hidden, hidden));
    ag::Expr g_g = ag::tanh_(ag::slice_rows(z, 2 * hidden, hidden));
    ag::Expr o_g = ag::sigmoid(ag::slice_rows(z, 3 * hidden, hidden));
    c = f_g * c + i_g * g_g;
    h = o_g * ag::tanh_(c);
  }
  return h;
}

}  // namespace

ag::Expr private_encode(ag::Graph& g, const PrivateEncoderParams& p, ag::Expr embedded) {
  const long T = embedded.rows();
  if (T < 1) throw EmptyText("private encoder got an empty sequence");
  if (embedded.cols() != p.input_dim) {
    throw DimensionMismatch("private encoder expected width " + std::to_string(p.input_dim) +
                            ", got " + std::to_string(embedded.cols()));
  }
  std::vector<long> fwd_order(static_cast<size_t>(T));
  std::vector<long> bwd_order(static_cast<size_t>(T));
  for (long t = 0; t < T; ++t) {
    fwd_order[static_cast<size_t>(t)] = t;
    bwd_order[static_cast<size_t>(t)] = T - 1 - t;
  }
  ag::Expr hf = lstm_last_hidden(g, p.fwd, p.hidden, embedded, fwd_order);
  ag::Expr hb = lstm_last_hidden(g, p.bwd, p.hidden, embedded, bwd_order);
  return ag::concat_rows({hf, hb});
}

}  // namespace angrymtl
