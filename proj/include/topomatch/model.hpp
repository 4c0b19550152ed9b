#pragma once

// Siamese recurrent pair classifier with hand-written gradients.
//
// Both strings of a pair are encoded by the same embedding + stacked
// (bi)recurrent network; the two vectors are merged elementwise as
// 1 - (h1 - h2)^2 and scored by a one-hidden-layer ReLU head with a sigmoid
// output. Recurrent cells follow the usual gate conventions (two bias vectors
// per gate set; GRU gates r,z,n; LSTM gates i,f,g,o).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "topomatch/errors.hpp"
#include "topomatch/preprocess.hpp"
#include "topomatch/rng.hpp"

namespace topomatch {

enum class RnnType { gru, lstm, rnn };
enum class CombinationMode { one_minus_sq_absdiff };

inline std::string to_string(RnnType t) {
  switch (t) {
    case RnnType::gru: return "gru";
    case RnnType::lstm: return "lstm";
    case RnnType::rnn: return "rnn";
  }
  return "gru";
}

inline RnnType parse_rnn_type(const std::string& s) {
  if (s == "gru" || s == "GRU") return RnnType::gru;
  if (s == "lstm" || s == "LSTM") return RnnType::lstm;
  if (s == "rnn" || s == "RNN") return RnnType::rnn;
  throw InputError("unknown rnn_type: " + s);
}

inline CombinationMode parse_combination_mode(const std::string& s) {
  if (s == "one_minus_sq_absdiff") return CombinationMode::one_minus_sq_absdiff;
  throw InputError("unknown combination_mode: " + s);
}

struct ModelConfig {
  RnnType rnn_type = RnnType::gru;
  int embedding_dim = 60;
  int hidden_dim = 60;
  int num_layers = 2;
  bool bidirectional = true;
  int ff_hidden_dim = 120;
  double dropout_p = 0.01;
  double learning_rate = 0.001;
  int batch_size = 64;
  CombinationMode combination_mode = CombinationMode::one_minus_sq_absdiff;

  int directions() const { return bidirectional ? 2 : 1; }
  /// Per-string vector dimension D.
  int vector_dim() const { return directions() * hidden_dim; }
  int gates() const {
    switch (rnn_type) {
      case RnnType::gru: return 3;
      case RnnType::lstm: return 4;
      case RnnType::rnn: return 1;
    }
    return 3;
  }
  int layer_input_dim(int layer) const { return layer == 0 ? embedding_dim : vector_dim(); }

  void validate() const {
    if (embedding_dim <= 0 || hidden_dim <= 0 || num_layers <= 0 || ff_hidden_dim <= 0 || batch_size <= 0) {
      throw InputError("model dimensions and batch_size must be positive");
    }
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw InputError("dropout_p must lie in [0, 1)");
    if (!(learning_rate > 0.0)) throw InputError("learning_rate must be positive");
  }

  nlohmann::json to_json() const {
    return {{"rnn_type", to_string(rnn_type)},
            {"embedding_dim", embedding_dim},
            {"hidden_dim", hidden_dim},
            {"num_layers", num_layers},
            {"bidirectional", bidirectional},
            {"ff_hidden_dim", ff_hidden_dim},
            {"dropout_p", dropout_p},
            {"learning_rate", learning_rate},
            {"batch_size", batch_size},
            {"combination_mode", "one_minus_sq_absdiff"}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.rnn_type = parse_rnn_type(j.at("rnn_type").get<std::string>());
    c.embedding_dim = j.at("embedding_dim").get<int>();
    c.hidden_dim = j.at("hidden_dim").get<int>();
    c.num_layers = j.at("num_layers").get<int>();
    c.bidirectional = j.at("bidirectional").get<bool>();
    c.ff_hidden_dim = j.at("ff_hidden_dim").get<int>();
    c.dropout_p = j.at("dropout_p").get<double>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.combination_mode = parse_combination_mode(j.at("combination_mode").get<std::string>());
    c.validate();
    return c;
  }

  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// One direction of one recurrent layer. w_ih is (G*H x in), w_hh is (G*H x H).
template <typename T>
struct RecurrentWeights {
  Mat<T> w_ih;
  Mat<T> w_hh;
  Vec<T> b_ih;
  Vec<T> b_hh;
};

template <typename T>
struct ModelParameters {
  RowMat<T> embedding;                       // V x E
  std::vector<RecurrentWeights<T>> recurrent;  // index layer * directions + direction
  Mat<T> ff_w;                               // F x D
  Vec<T> ff_b;                               // F
  Mat<T> out_w;                              // 1 x F
  Vec<T> out_b;                              // 1
  int directions = 1;

  static ModelParameters zeros(const ModelConfig& cfg, std::size_t vocab_size) {
    ModelParameters p;
    const int h = cfg.hidden_dim;
    const int g = cfg.gates();
    p.embedding = RowMat<T>::Zero(static_cast<Eigen::Index>(vocab_size), cfg.embedding_dim);
    for (int layer = 0; layer < cfg.num_layers; ++layer) {
      for (int dir = 0; dir < cfg.directions(); ++dir) {
        RecurrentWeights<T> w;
        w.w_ih = Mat<T>::Zero(g * h, cfg.layer_input_dim(layer));
        w.w_hh = Mat<T>::Zero(g * h, h);
        w.b_ih = Vec<T>::Zero(g * h);
        w.b_hh = Vec<T>::Zero(g * h);
        p.recurrent.push_back(std::move(w));
      }
    }
    p.ff_w = Mat<T>::Zero(cfg.ff_hidden_dim, cfg.vector_dim());
    p.ff_b = Vec<T>::Zero(cfg.ff_hidden_dim);
    p.out_w = Mat<T>::Zero(1, cfg.ff_hidden_dim);
    p.out_b = Vec<T>::Zero(1);
    p.directions = cfg.directions();
    return p;
  }

  /// Visits every tensor as (name, dense Eigen object). Order is fixed and
  /// defines the serialization layout.
  template <typename F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <typename F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  template <typename U>
  ModelParameters<U> cast() const {
    ModelParameters<U> out;
    out.embedding = embedding.template cast<U>();
    for (const auto& w : recurrent) {
      out.recurrent.push_back({w.w_ih.template cast<U>(), w.w_hh.template cast<U>(), w.b_ih.template cast<U>(),
                               w.b_hh.template cast<U>()});
    }
    out.ff_w = ff_w.template cast<U>();
    out.ff_b = ff_b.template cast<U>();
    out.out_w = out_w.template cast<U>();
    out.out_b = out_b.template cast<U>();
    out.directions = directions;
    return out;
  }

 private:
  template <typename Self, typename F>
  static void visit(Self& self, F& f) {
    f(std::string("embedding"), self.embedding);
    const auto dirs = static_cast<std::size_t>(self.directions);
    for (std::size_t i = 0; i < self.recurrent.size(); ++i) {
      const std::string prefix = "rnn.l" + std::to_string(i / dirs) + (i % dirs == 0 ? ".fwd." : ".bwd.");
      f(prefix + "w_ih", self.recurrent[i].w_ih);
      f(prefix + "w_hh", self.recurrent[i].w_hh);
      f(prefix + "b_ih", self.recurrent[i].b_ih);
      f(prefix + "b_hh", self.recurrent[i].b_hh);
    }
    f(std::string("ff.w"), self.ff_w);
    f(std::string("ff.b"), self.ff_b);
    f(std::string("out.w"), self.out_w);
    f(std::string("out.b"), self.out_b);
  }
};

template <typename T>
struct Model {
  ModelConfig config;
  ModelParameters<T> params;

  /// Both branches of the pair network read this single storage.
  const ModelParameters<T>& branch_parameters(int /*branch*/) const { return params; }
  ModelParameters<T>& branch_parameters(int /*branch*/) { return params; }

  template <typename U>
  Model<U> cast() const {
    return Model<U>{config, params.template cast<U>()};
  }
};

/// Closed-form parameter count.
inline std::size_t count_params(const ModelConfig& cfg, std::size_t vocab_size) {
  const std::size_t h = static_cast<std::size_t>(cfg.hidden_dim);
  const std::size_t g = static_cast<std::size_t>(cfg.gates());
  std::size_t total = vocab_size * static_cast<std::size_t>(cfg.embedding_dim);
  for (int layer = 0; layer < cfg.num_layers; ++layer) {
    const std::size_t in = static_cast<std::size_t>(cfg.layer_input_dim(layer));
    total += static_cast<std::size_t>(cfg.directions()) * (g * h * in + g * h * h + 2 * g * h);
  }
  const std::size_t d = static_cast<std::size_t>(cfg.vector_dim());
  const std::size_t f = static_cast<std::size_t>(cfg.ff_hidden_dim);
  total += d * f + f + f + 1;
  return total;
}

/// Number of scalars actually stored in a parameter set.
template <typename T>
std::size_t enumerate_params(const ModelParameters<T>& p) {
  std::size_t n = 0;
  p.for_each([&](const std::string&, const auto& tensor) { n += static_cast<std::size_t>(tensor.size()); });
  return n;
}

/// Uniform(+-1/sqrt(hidden)) for recurrent and head tensors, Uniform(+-0.1)
/// for embeddings, zero PAD row.
template <typename T>
Model<T> init_model(const ModelConfig& cfg, const Vocabulary& vocab, std::uint64_t seed) {
  cfg.validate();
  Model<T> m{cfg, ModelParameters<T>::zeros(cfg, vocab.size())};
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim));
  m.params.for_each([&](const std::string& name, auto& tensor) {
    const double b = name == "embedding" ? 0.1 : bound;
    // Row-major logical order so the draw sequence does not depend on storage layout.
    for (Eigen::Index r = 0; r < tensor.rows(); ++r) {
      for (Eigen::Index c = 0; c < tensor.cols(); ++c) tensor(r, c) = static_cast<T>(rng.uniform(-b, b));
    }
  });
  m.params.embedding.row(Vocabulary::kPad).setZero();
  return m;
}

namespace detail {

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

/// Inverted dropout mask with entries 0 or 1/(1-p).
template <typename T>
Mat<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  Mat<T> mask(rows, cols);
  const T keep = static_cast<T>(1.0 / (1.0 - p));
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) mask(r, c) = rng.bernoulli(p) ? T(0) : keep;
  }
  return mask;
}

}  // namespace detail

/// Activations of one direction of one layer, indexed by processing step k
/// (k = position for forward, len-1-position for backward).
template <typename T>
struct DirectionTrace {
  Mat<T> gates;   // G*H x len, post-activation gate values
  Mat<T> hn;      // GRU only: H x len, W_hn h + b_hn
  Mat<T> states;  // H x (len+1), column 0 is the zero initial state
  Mat<T> cells;   // LSTM only: H x (len+1)
};

template <typename T>
struct LayerTrace {
  Mat<T> input;  // in x len, after dropout
  Mat<T> mask;   // in x len, empty when dropout is inactive
  std::vector<DirectionTrace<T>> dirs;
};

template <typename T>
struct StringTrace {
  std::vector<std::int32_t> tokens;
  std::vector<LayerTrace<T>> layers;
  Vec<T> output;  // D
};

namespace detail {

template <typename T>
DirectionTrace<T> run_direction(const ModelConfig& cfg, const RecurrentWeights<T>& w, const Mat<T>& x,
                                bool reverse) {
  const Eigen::Index len = x.cols();
  const Eigen::Index h = cfg.hidden_dim;
  DirectionTrace<T> tr;
  const Mat<T> gi = (w.w_ih * x).colwise() + w.b_ih;
  tr.gates.resize(w.w_ih.rows(), len);
  tr.states = Mat<T>::Zero(h, len + 1);
  Vec<T> gh(w.w_hh.rows());
  switch (cfg.rnn_type) {
    case RnnType::gru: {
      tr.hn.resize(h, len);
      for (Eigen::Index k = 0; k < len; ++k) {
        const Eigen::Index t = reverse ? len - 1 - k : k;
        gh.noalias() = w.w_hh * tr.states.col(k);
        gh += w.b_hh;
        auto g = tr.gates.col(k);
        for (Eigen::Index i = 0; i < h; ++i) {
          const T r = sigmoid(gi(i, t) + gh(i));
          const T z = sigmoid(gi(h + i, t) + gh(h + i));
          const T n = std::tanh(gi(2 * h + i, t) + r * gh(2 * h + i));
          g(i) = r;
          g(h + i) = z;
          g(2 * h + i) = n;
          tr.hn(i, k) = gh(2 * h + i);
          tr.states(i, k + 1) = (T(1) - z) * n + z * tr.states(i, k);
        }
      }
      break;
    }
    case RnnType::lstm: {
      tr.cells = Mat<T>::Zero(h, len + 1);
      for (Eigen::Index k = 0; k < len; ++k) {
        const Eigen::Index t = reverse ? len - 1 - k : k;
        gh.noalias() = w.w_hh * tr.states.col(k);
        gh += w.b_hh;
        auto g = tr.gates.col(k);
        for (Eigen::Index i = 0; i < h; ++i) {
          const T ig = sigmoid(gi(i, t) + gh(i));
          const T fg = sigmoid(gi(h + i, t) + gh(h + i));
          const T gg = std::tanh(gi(2 * h + i, t) + gh(2 * h + i));
          const T og = sigmoid(gi(3 * h + i, t) + gh(3 * h + i));
          g(i) = ig;
          g(h + i) = fg;
          g(2 * h + i) = gg;
          g(3 * h + i) = og;
          const T c = fg * tr.cells(i, k) + ig * gg;
          tr.cells(i, k + 1) = c;
          tr.states(i, k + 1) = og * std::tanh(c);
        }
      }
      break;
    }
    case RnnType::rnn: {
      for (Eigen::Index k = 0; k < len; ++k) {
        const Eigen::Index t = reverse ? len - 1 - k : k;
        gh.noalias() = w.w_hh * tr.states.col(k);
        gh += w.b_hh;
        for (Eigen::Index i = 0; i < h; ++i) {
          const T a = std::tanh(gi(i, t) + gh(i));
          tr.gates(i, k) = a;
          tr.states(i, k + 1) = a;
        }
      }
      break;
    }
  }
  return tr;
}

/// Backpropagates one direction. d_out is H x len, the loss gradient w.r.t. the
/// state emitted at each position. Returns the gradient w.r.t. the layer input.
template <typename T>
Mat<T> backward_direction(const ModelConfig& cfg, const RecurrentWeights<T>& w, RecurrentWeights<T>& grad,
                          const DirectionTrace<T>& tr, const Mat<T>& x, const Mat<T>& d_out, bool reverse) {
  const Eigen::Index len = x.cols();
  const Eigen::Index h = cfg.hidden_dim;
  Mat<T> d_gi(w.w_ih.rows(), len);
  Vec<T> dh = Vec<T>::Zero(h);
  Vec<T> dc = Vec<T>::Zero(h);
  Vec<T> dgh(w.w_hh.rows());
  for (Eigen::Index k = len - 1; k >= 0; --k) {
    const Eigen::Index t = reverse ? len - 1 - k : k;
    dh += d_out.col(t);
    const auto h_prev = tr.states.col(k);
    const auto g = tr.gates.col(k);
    switch (cfg.rnn_type) {
      case RnnType::gru: {
        for (Eigen::Index i = 0; i < h; ++i) {
          const T r = g(i), z = g(h + i), n = g(2 * h + i);
          const T dn = dh(i) * (T(1) - z);
          const T dz = dh(i) * (h_prev(i) - n);
          const T dan = dn * (T(1) - n * n);
          const T dar = dan * tr.hn(i, k) * r * (T(1) - r);
          const T daz = dz * z * (T(1) - z);
          d_gi(i, t) = dar;
          d_gi(h + i, t) = daz;
          d_gi(2 * h + i, t) = dan;
          dgh(i) = dar;
          dgh(h + i) = daz;
          dgh(2 * h + i) = dan * r;
          dh(i) *= z;  // direct path through z * h_prev
        }
        break;
      }
      case RnnType::lstm: {
        for (Eigen::Index i = 0; i < h; ++i) {
          const T ig = g(i), fg = g(h + i), gg = g(2 * h + i), og = g(3 * h + i);
          const T tc = std::tanh(tr.cells(i, k + 1));
          const T d_og = dh(i) * tc;
          const T d_c = dc(i) + dh(i) * og * (T(1) - tc * tc);
          const T d_ig = d_c * gg;
          const T d_gg = d_c * ig;
          const T d_fg = d_c * tr.cells(i, k);
          dc(i) = d_c * fg;
          dgh(i) = d_ig * ig * (T(1) - ig);
          dgh(h + i) = d_fg * fg * (T(1) - fg);
          dgh(2 * h + i) = d_gg * (T(1) - gg * gg);
          dgh(3 * h + i) = d_og * og * (T(1) - og);
          dh(i) = T(0);
        }
        d_gi.col(t) = dgh;
        break;
      }
      case RnnType::rnn: {
        for (Eigen::Index i = 0; i < h; ++i) {
          dgh(i) = dh(i) * (T(1) - g(i) * g(i));
          dh(i) = T(0);
        }
        d_gi.col(t) = dgh;
        break;
      }
    }
    grad.w_hh.noalias() += dgh * h_prev.transpose();
    grad.b_hh += dgh;
    dh.noalias() += w.w_hh.transpose() * dgh;
  }
  grad.w_ih.noalias() += d_gi * x.transpose();
  grad.b_ih += d_gi.rowwise().sum();
  return w.w_ih.transpose() * d_gi;
}

inline std::string layer_name(int layer) { return "recurrent layer " + std::to_string(layer); }

}  // namespace detail

/// Runs the encoder over the first true_length positions and keeps every
/// activation needed by the backward pass. rng == nullptr means eval mode.
template <typename T>
StringTrace<T> encode_traced(const Model<T>& model, std::span<const std::int32_t> tokens, Rng* rng) {
  const ModelConfig& cfg = model.config;
  const auto& p = model.params;
  if (tokens.empty()) throw InputError("cannot encode an empty token sequence");
  const Eigen::Index len = static_cast<Eigen::Index>(tokens.size());
  const bool dropout = rng != nullptr && cfg.dropout_p > 0.0;
  const Eigen::Index h = cfg.hidden_dim;
  const int dirs = cfg.directions();

  StringTrace<T> tr;
  tr.tokens.assign(tokens.begin(), tokens.end());
  Mat<T> x(cfg.embedding_dim, len);
  for (Eigen::Index t = 0; t < len; ++t) {
    const auto tok = tokens[static_cast<std::size_t>(t)];
    if (tok < 0 || tok >= p.embedding.rows()) throw InputError("token index outside the vocabulary");
    x.col(t) = p.embedding.row(tok).transpose();
  }

  for (int layer = 0; layer < cfg.num_layers; ++layer) {
    LayerTrace<T> lt;
    if (dropout) {
      lt.mask = detail::dropout_mask<T>(x.rows(), x.cols(), cfg.dropout_p, *rng);
      lt.input = x.cwiseProduct(lt.mask);
    } else {
      lt.input = std::move(x);
    }
    Mat<T> out(dirs * h, len);
    for (int dir = 0; dir < dirs; ++dir) {
      const auto& w = p.recurrent[static_cast<std::size_t>(layer * dirs + dir)];
      lt.dirs.push_back(detail::run_direction(cfg, w, lt.input, dir == 1));
      const auto& states = lt.dirs.back().states;
      for (Eigen::Index t = 0; t < len; ++t) {
        out.block(dir * h, t, h, 1) = states.col(dir == 0 ? t + 1 : len - t);
      }
    }
    if (!detail::all_finite(out)) throw NumericError("non-finite activation in " + detail::layer_name(layer));
    tr.layers.push_back(std::move(lt));
    x = std::move(out);
  }

  const auto& top = tr.layers.back();
  tr.output.resize(dirs * h);
  tr.output.head(h) = top.dirs[0].states.col(len);
  if (dirs == 2) tr.output.tail(h) = top.dirs[1].states.col(len);
  return tr;
}

/// Per-string vector: [forward final state ; backward final state] of the top layer.
template <typename T>
Vec<T> encode_string(const Model<T>& model, const EncodedString& enc, Rng* rng = nullptr) {
  return encode_traced(model, enc.tokens(), rng).output;
}

/// Accumulates parameter gradients for one encoded string given dL/d(output).
template <typename T>
void backward_string(const Model<T>& model, ModelParameters<T>& grad, const StringTrace<T>& tr, const Vec<T>& d_output) {
  const ModelConfig& cfg = model.config;
  const auto& p = model.params;
  const Eigen::Index h = cfg.hidden_dim;
  const int dirs = cfg.directions();
  const Eigen::Index len = static_cast<Eigen::Index>(tr.tokens.size());

  Mat<T> d_layer_out = Mat<T>::Zero(dirs * h, len);
  d_layer_out.block(0, len - 1, h, 1) = d_output.head(h);
  if (dirs == 2) d_layer_out.block(h, 0, h, 1) = d_output.tail(h);

  for (int layer = cfg.num_layers - 1; layer >= 0; --layer) {
    const auto& lt = tr.layers[static_cast<std::size_t>(layer)];
    Mat<T> d_input = Mat<T>::Zero(lt.input.rows(), len);
    for (int dir = 0; dir < dirs; ++dir) {
      const auto idx = static_cast<std::size_t>(layer * dirs + dir);
      const Mat<T> d_out = d_layer_out.block(dir * h, 0, h, len);
      d_input += detail::backward_direction(cfg, p.recurrent[idx], grad.recurrent[idx],
                                            lt.dirs[static_cast<std::size_t>(dir)], lt.input, d_out, dir == 1);
    }
    if (lt.mask.size() != 0) d_input = d_input.cwiseProduct(lt.mask);
    d_layer_out = std::move(d_input);
  }
  for (Eigen::Index t = 0; t < len; ++t) {
    grad.embedding.row(tr.tokens[static_cast<std::size_t>(t)]) += d_layer_out.col(t).transpose();
  }
}

/// c_i = 1 - (h1_i - h2_i)^2.
template <typename T>
Vec<T> combine(const Vec<T>& h1, const Vec<T>& h2) {
  if (h1.size() != h2.size()) throw ConsistencyError("combine: dimension mismatch");
  return (Vec<T>::Ones(h1.size()).array() - (h1 - h2).array().square()).matrix();
}

inline constexpr double kProbClamp = 1e-7;

/// Binary cross entropy on a probability clamped to [1e-7, 1 - 1e-7].
inline double loss_bce(double p, bool label) {
  const double q = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  return label ? -std::log(q) : -std::log(1.0 - q);
}

/// Forward state of the pair head, kept for backprop.
template <typename T>
struct PairTrace {
  StringTrace<T> first;
  StringTrace<T> second;
  Vec<T> combined;
  Mat<T> head_mask;  // D x 1 or empty
  Vec<T> head_input;
  Vec<T> hidden_pre;
  Vec<T> hidden;
  T logit{};
  T probability{};
};

template <typename T>
PairTrace<T> forward_pair(const Model<T>& model, std::span<const std::int32_t> a, std::span<const std::int32_t> b,
                          Rng* rng) {
  const auto& p = model.params;
  PairTrace<T> tr;
  tr.first = encode_traced(model, a, rng);
  tr.second = encode_traced(model, b, rng);
  tr.combined = combine(tr.first.output, tr.second.output);
  if (rng != nullptr && model.config.dropout_p > 0.0) {
    tr.head_mask = detail::dropout_mask<T>(tr.combined.size(), 1, model.config.dropout_p, *rng);
    tr.head_input = tr.combined.cwiseProduct(tr.head_mask.col(0));
  } else {
    tr.head_input = tr.combined;
  }
  tr.hidden_pre = p.ff_w * tr.head_input + p.ff_b;
  tr.hidden = tr.hidden_pre.cwiseMax(T(0));
  tr.logit = p.out_w.row(0).dot(tr.hidden) + p.out_b(0);
  tr.probability = detail::sigmoid(tr.logit);
  if (!std::isfinite(static_cast<double>(tr.logit))) throw NumericError("non-finite activation in classifier head");
  return tr;
}

/// Match probability for a pair. rng == nullptr means eval mode.
template <typename T>
T classify_pair(const Model<T>& model, const EncodedString& a, const EncodedString& b, Rng* rng = nullptr) {
  return forward_pair(model, a.tokens(), b.tokens(), rng).probability;
}

/// Adds scale * dLoss/dparams for one labeled pair into grad; returns the pair's loss.
///
/// The loss value uses the clamped probability; the gradient is the exact
/// derivative of the unclamped cross entropy (p - y at the logit), which equals
/// the clamped loss's derivative everywhere except in the saturated tails.
template <typename T>
double accumulate_pair_gradient(const Model<T>& model, ModelParameters<T>& grad, std::span<const std::int32_t> a,
                                std::span<const std::int32_t> b, bool label, T scale, Rng* rng,
                                T* probability = nullptr) {
  const auto& p = model.params;
  const PairTrace<T> tr = forward_pair(model, a, b, rng);
  if (probability) *probability = tr.probability;
  const double loss = loss_bce(static_cast<double>(tr.probability), label);

  const T d_logit = scale * (tr.probability - (label ? T(1) : T(0)));
  grad.out_w.row(0) += d_logit * tr.hidden.transpose();
  grad.out_b(0) += d_logit;
  Vec<T> d_hidden_pre = (p.out_w.row(0).transpose() * d_logit).eval();
  for (Eigen::Index i = 0; i < d_hidden_pre.size(); ++i) {
    if (tr.hidden_pre(i) <= T(0)) d_hidden_pre(i) = T(0);
  }
  grad.ff_w.noalias() += d_hidden_pre * tr.head_input.transpose();
  grad.ff_b += d_hidden_pre;
  Vec<T> d_combined = p.ff_w.transpose() * d_hidden_pre;
  if (tr.head_mask.size() != 0) d_combined = d_combined.cwiseProduct(tr.head_mask.col(0));

  const Vec<T> diff = tr.first.output - tr.second.output;
  const Vec<T> d_first = (T(-2) * diff.array() * d_combined.array()).matrix();
  const Vec<T> d_second = -d_first;
  backward_string(model, grad, tr.first, d_first);
  backward_string(model, grad, tr.second, d_second);
  return loss;
}

template <typename T>
struct AdamState {
  ModelParameters<T> m;
  ModelParameters<T> v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_model(const Model<T>& model) {
    AdamState s;
    s.m = ModelParameters<T>::zeros(model.config, static_cast<std::size_t>(model.params.embedding.rows()));
    s.v = s.m;
    return s;
  }

  /// One bias-corrected Adam update of params with gradient grad.
  void apply(ModelParameters<T>& params, const ModelParameters<T>& grad, double lr) {
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    std::vector<T*> p_data, m_data, v_data;
    std::vector<const T*> g_data;
    std::vector<Eigen::Index> sizes;
    params.for_each([&](const std::string&, auto& t) { p_data.push_back(t.data()); sizes.push_back(t.size()); });
    grad.for_each([&](const std::string&, const auto& t) { g_data.push_back(t.data()); });
    m.for_each([&](const std::string&, auto& t) { m_data.push_back(t.data()); });
    v.for_each([&](const std::string&, auto& t) { v_data.push_back(t.data()); });
    const T b1 = static_cast<T>(beta1), b2 = static_cast<T>(beta2);
    const T step_size = static_cast<T>(lr / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T e = static_cast<T>(eps);
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      T* pk = p_data[k];
      const T* gk = g_data[k];
      T* mk = m_data[k];
      T* vk = v_data[k];
      for (Eigen::Index i = 0; i < sizes[k]; ++i) {
        mk[i] = b1 * mk[i] + (T(1) - b1) * gk[i];
        vk[i] = b2 * vk[i] + (T(1) - b2) * gk[i] * gk[i];
        pk[i] -= step_size * mk[i] / (std::sqrt(vk[i] * inv_c2) + e);
      }
    }
  }
};

struct EncodedPair {
  EncodedString first;
  EncodedString second;
  bool label = false;
};

/// Mean-loss gradient over the batch followed by one Adam step.
/// rng drives dropout; pass nullptr to train without dropout. When
/// `probabilities` is given, the training-mode probability of each pair is appended.
template <typename T>
double backward_and_step(Model<T>& model, AdamState<T>& adam, std::span<const EncodedPair> batch, double lr,
                         Rng* rng, std::vector<T>* probabilities = nullptr) {
  if (batch.empty()) return 0.0;
  auto grad = ModelParameters<T>::zeros(model.config, static_cast<std::size_t>(model.params.embedding.rows()));
  const T scale = static_cast<T>(1.0 / static_cast<double>(batch.size()));
  double total = 0.0;
  for (const auto& pair : batch) {
    T prob{};
    total += accumulate_pair_gradient(model, grad, pair.first.tokens(), pair.second.tokens(), pair.label, scale, rng,
                                      &prob);
    if (probabilities) probabilities->push_back(prob);
  }
  grad.for_each([](const std::string& name, const auto& t) {
    if (!t.allFinite()) throw NumericError("non-finite gradient in " + name);
  });
  adam.apply(model.params, grad, lr);
  return total / static_cast<double>(batch.size());
}

}  // namespace topomatch
