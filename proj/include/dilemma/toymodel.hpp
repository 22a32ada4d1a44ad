#pragma once

#include <Eigen/Dense>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dilemma/rng.hpp"

namespace dilemma::toy {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct DropoutSpec {
  double rate = 0.0;             // Bernoulli drop probability, [0,1)
  std::uint64_t noise_seed = 0;  // stream seed for the keep masks
  enum class Scaling { inverted, none } scaling = Scaling::inverted;

  void check() const {
    if (!(rate >= 0.0 && rate < 1.0))
      throw std::invalid_argument("DropoutSpec: rate outside [0,1)");
  }
};

inline MatrixXd softmax_rows(const MatrixXd& scores) {
  MatrixXd out(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    double m = scores.row(i).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      double e = std::exp(scores(i, j) - m);
      out(i, j) = e;
      sum += e;
    }
    out.row(i) /= sum;
  }
  return out;
}

// Additive causal mask: 0 on and below the diagonal, -inf above.
inline MatrixXd causal_mask(Eigen::Index n) {
  MatrixXd m = MatrixXd::Zero(n, n);
  double neg_inf = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) m(i, j) = neg_inf;
  return m;
}

// 0/1 keep mask; one uniform draw per element in row-major order so the
// stream layout is independent of the matrix content.
inline MatrixXd bernoulli_keep_mask(Eigen::Index rows, Eigen::Index cols,
                                    double rate, SplitMix64& rng) {
  MatrixXd keep(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      keep(i, j) = rng.uniform01() < 1.0 - rate ? 1.0 : 0.0;
  return keep;
}

// dropout(softmax(Q K^T / sqrt(d_k) + M), r) V with an explicit keep mask.
inline MatrixXd attention_with_keep_mask(const MatrixXd& q, const MatrixXd& k,
                                         const MatrixXd& v, const MatrixXd& mask,
                                         const MatrixXd& keep, double rate,
                                         DropoutSpec::Scaling scaling) {
  if (q.cols() != k.cols() || k.rows() != v.rows() || q.rows() != mask.rows() ||
      k.rows() != mask.cols())
    throw std::invalid_argument("attention: shape mismatch");
  if (keep.rows() != q.rows() || keep.cols() != k.rows())
    throw std::invalid_argument("attention: keep-mask shape mismatch");
  double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  MatrixXd scores = q * k.transpose() * scale + mask;
  MatrixXd weights = softmax_rows(scores);
  weights = weights.cwiseProduct(keep);
  if (scaling == DropoutSpec::Scaling::inverted && rate > 0.0)
    weights /= (1.0 - rate);
  return weights * v;
}

inline MatrixXd attention_with_dropout(const MatrixXd& q, const MatrixXd& k,
                                       const MatrixXd& v, const MatrixXd& mask,
                                       const DropoutSpec& spec) {
  spec.check();
  if (q.cols() != k.cols() || k.rows() != v.rows() || q.rows() != mask.rows() ||
      k.rows() != mask.cols())
    throw std::invalid_argument("attention: shape mismatch");
  if (spec.rate == 0.0) {
    // No mask sampling at all: bit-identical to plain attention.
    double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    return softmax_rows(q * k.transpose() * scale + mask) * v;
  }
  SplitMix64 rng(spec.noise_seed);
  MatrixXd keep = bernoulli_keep_mask(q.rows(), k.rows(), spec.rate, rng);
  return attention_with_keep_mask(q, k, v, mask, keep, spec.rate, spec.scaling);
}

struct ToyConfig {
  int d_model = 64;
  int heads = 4;
  int layers = 2;
  int vocab = 512;
  std::uint64_t init_seed = 0x5eed;

  int d_k() const { return d_model / heads; }

  void check() const {
    if (d_model <= 0 || heads <= 0 || layers <= 0 || vocab <= 8)
      throw std::invalid_argument("ToyConfig: non-positive dimension");
    if (d_model % heads != 0)
      throw std::invalid_argument("ToyConfig: d_model not divisible by heads");
  }
};

// A small seeded decoder-only transformer. Weights are random, never
// trained: the point is a deterministic logit source whose attention layer
// carries inference-time dropout.
class ToyTransformer {
 public:
  static constexpr int kBosId = 0;
  static constexpr std::uint32_t kMagic = 0x44544f59;  // "DTOY"
  static constexpr std::uint32_t kSnapshotVersion = 1;

  explicit ToyTransformer(ToyConfig config) : cfg_(config) {
    cfg_.check();
    embed_ = init_matrix(cfg_.vocab, cfg_.d_model, 1.0, "embed");
    unembed_ = init_matrix(cfg_.d_model, cfg_.vocab,
                           1.0 / std::sqrt(cfg_.d_model), "unembed");
    for (int l = 0; l < cfg_.layers; ++l) {
      Layer layer;
      double s = 1.0 / std::sqrt(cfg_.d_model);
      layer.wq = init_matrix(cfg_.d_model, cfg_.d_model, s, tensor_tag("wq", l));
      layer.wk = init_matrix(cfg_.d_model, cfg_.d_model, s, tensor_tag("wk", l));
      layer.wv = init_matrix(cfg_.d_model, cfg_.d_model, s, tensor_tag("wv", l));
      layer.wo = init_matrix(cfg_.d_model, cfg_.d_model, s, tensor_tag("wo", l));
      layer.w1 = init_matrix(cfg_.d_model, 4 * cfg_.d_model, s,
                             tensor_tag("w1", l));
      layer.w2 = init_matrix(4 * cfg_.d_model, cfg_.d_model,
                             1.0 / std::sqrt(4.0 * cfg_.d_model),
                             tensor_tag("w2", l));
      layers_.push_back(std::move(layer));
    }
  }

  const ToyConfig& config() const { return cfg_; }

  // Reserved ids ensure the choice tokens always exist in the vocabulary;
  // everything else is hashed. There is no training, so collisions are
  // harmless.
  int token_id(std::string_view word) const {
    if (word == "1") return 1;
    if (word == "2") return 2;
    if (word == "A") return 3;
    if (word == "B") return 4;
    return 5 + static_cast<int>(fnv1a64(word) % (cfg_.vocab - 5));
  }

  std::vector<int> tokenize(std::string_view text) const {
    std::vector<int> ids = {kBosId};
    std::size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i])))
        ++i;
      std::size_t start = i;
      while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])))
        ++i;
      if (i > start) ids.push_back(token_id(text.substr(start, i - start)));
    }
    return ids;
  }

  // Hidden states for all positions; dropout (when active) applies in every
  // attention layer with a per-(layer, head) noise substream.
  MatrixXd forward_hidden(std::span<const int> ids, const DropoutSpec& spec) const {
    spec.check();
    if (ids.empty()) throw std::invalid_argument("forward: empty input");
    for (int id : ids)
      if (id < 0 || id >= cfg_.vocab)
        throw std::invalid_argument("forward: unknown token id " +
                                    std::to_string(id));
    Eigen::Index n = static_cast<Eigen::Index>(ids.size());
    int dk = cfg_.d_k();
    MatrixXd x(n, cfg_.d_model);
    for (Eigen::Index t = 0; t < n; ++t)
      x.row(t) = embed_.row(ids[static_cast<std::size_t>(t)]) +
                 positional_encoding(t).transpose();
    MatrixXd mask = causal_mask(n);
    for (int l = 0; l < cfg_.layers; ++l) {
      const Layer& layer = layers_[static_cast<std::size_t>(l)];
      MatrixXd xn = layer_norm(x);
      MatrixXd q = xn * layer.wq;
      MatrixXd k = xn * layer.wk;
      MatrixXd v = xn * layer.wv;
      MatrixXd heads_out(n, cfg_.d_model);
      for (int h = 0; h < cfg_.heads; ++h) {
        DropoutSpec head_spec = spec;
        head_spec.noise_seed = derive_seed(
            spec.noise_seed, "attn", static_cast<std::uint64_t>(l) * 64 + h);
        heads_out.middleCols(h * dk, dk) = attention_with_dropout(
            q.middleCols(h * dk, dk), k.middleCols(h * dk, dk),
            v.middleCols(h * dk, dk), mask, head_spec);
      }
      x += heads_out * layer.wo;
      MatrixXd xm = layer_norm(x);
      x += gelu(xm * layer.w1) * layer.w2;
    }
    return layer_norm(x);
  }

  // Logits over the vocabulary at the last position.
  VectorXd forward_logits(std::span<const int> ids, const DropoutSpec& spec) const {
    MatrixXd h = forward_hidden(ids, spec);
    return (h.row(h.rows() - 1) * unembed_).transpose();
  }

  // Logits at every position (test and inspection path).
  MatrixXd forward_all_logits(std::span<const int> ids,
                              const DropoutSpec& spec) const {
    return forward_hidden(ids, spec) * unembed_;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write weight snapshot: " + path);
    write_u32(out, kMagic);
    write_u32(out, kSnapshotVersion);
    write_u32(out, static_cast<std::uint32_t>(cfg_.d_model));
    write_u32(out, static_cast<std::uint32_t>(cfg_.heads));
    write_u32(out, static_cast<std::uint32_t>(cfg_.layers));
    write_u32(out, static_cast<std::uint32_t>(cfg_.vocab));
    write_u64(out, cfg_.init_seed);
    write_matrix(out, embed_);
    write_matrix(out, unembed_);
    for (const Layer& l : layers_) {
      write_matrix(out, l.wq);
      write_matrix(out, l.wk);
      write_matrix(out, l.wv);
      write_matrix(out, l.wo);
      write_matrix(out, l.w1);
      write_matrix(out, l.w2);
    }
  }

  static ToyTransformer load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read weight snapshot: " + path);
    if (read_u32(in) != kMagic)
      throw std::runtime_error("weight snapshot: bad magic");
    if (read_u32(in) != kSnapshotVersion)
      throw std::runtime_error("weight snapshot: unsupported version");
    ToyConfig cfg;
    cfg.d_model = static_cast<int>(read_u32(in));
    cfg.heads = static_cast<int>(read_u32(in));
    cfg.layers = static_cast<int>(read_u32(in));
    cfg.vocab = static_cast<int>(read_u32(in));
    cfg.init_seed = read_u64(in);
    ToyTransformer model(cfg);
    read_matrix(in, model.embed_);
    read_matrix(in, model.unembed_);
    for (Layer& l : model.layers_) {
      read_matrix(in, l.wq);
      read_matrix(in, l.wk);
      read_matrix(in, l.wv);
      read_matrix(in, l.wo);
      read_matrix(in, l.w1);
      read_matrix(in, l.w2);
    }
    if (!in) throw std::runtime_error("weight snapshot: truncated file");
    return model;
  }

 private:
  struct Layer {
    MatrixXd wq, wk, wv, wo, w1, w2;
  };

  static std::string tensor_tag(const char* name, int layer) {
    return std::string(name) + "/" + std::to_string(layer);
  }

  MatrixXd init_matrix(Eigen::Index rows, Eigen::Index cols, double stddev,
                       const std::string& tag) const {
    SplitMix64 rng(derive_seed(cfg_.init_seed, tag));
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal(0.0, stddev);
    return m;
  }

  VectorXd positional_encoding(Eigen::Index t) const {
    VectorXd pe(cfg_.d_model);
    for (int i = 0; i < cfg_.d_model; i += 2) {
      double freq = std::pow(10000.0, -static_cast<double>(i) / cfg_.d_model);
      pe(i) = std::sin(t * freq);
      if (i + 1 < cfg_.d_model) pe(i + 1) = std::cos(t * freq);
    }
    return pe;
  }

  static MatrixXd layer_norm(const MatrixXd& x) {
    MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      double mean = x.row(i).mean();
      double var = (x.row(i).array() - mean).square().mean();
      out.row(i) = (x.row(i).array() - mean) / std::sqrt(var + 1e-5);
    }
    return out;
  }

  static MatrixXd gelu(const MatrixXd& x) {
    constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
    return x.unaryExpr([](double v) {
      return 0.5 * v * (1.0 + std::tanh(c * (v + 0.044715 * v * v * v)));
    });
  }

  static void write_u32(std::ostream& out, std::uint32_t v) {
    char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(buf, 4);
  }

  static void write_u64(std::ostream& out, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(buf, 8);
  }

  static std::uint32_t read_u32(std::istream& in) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
    return v;
  }

  static std::uint64_t read_u64(std::istream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
  }

  static void write_matrix(std::ostream& out, const MatrixXd& m) {
    write_u32(out, static_cast<std::uint32_t>(m.rows()));
    write_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        double v = m(i, j);
        char buf[8];
        std::memcpy(buf, &v, 8);
        out.write(buf, 8);
      }
  }

  static void read_matrix(std::istream& in, MatrixXd& m) {
    Eigen::Index rows = static_cast<Eigen::Index>(read_u32(in));
    Eigen::Index cols = static_cast<Eigen::Index>(read_u32(in));
    if (rows != m.rows() || cols != m.cols())
      throw std::runtime_error("weight snapshot: tensor shape mismatch");
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) {
        char buf[8];
        in.read(buf, 8);
        double v;
        std::memcpy(&v, buf, 8);
        m(i, j) = v;
      }
  }

  ToyConfig cfg_;
  MatrixXd embed_;    // vocab x d_model
  MatrixXd unembed_;  // d_model x vocab
  std::vector<Layer> layers_;
};

}  // namespace dilemma::toy
