#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bepa/corpus.hpp"
#include "bepa/rng.hpp"
#include "bepa/tape.hpp"
#include "bepa/tokenize.hpp"

namespace bepa::encoder {

using numerics::Matrix;
using numerics::Tape;

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kInitStd = 0.02;

struct EncoderConfig {
  int vocab_size = 0;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 128;
  int max_len = 32;
  double dropout = 0.1;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

struct LayerParams {
  Matrix wq, bq, wk, bk, wv, bv, wo, bo;
  Matrix ln1_gamma, ln1_beta;
  Matrix w1, b1, w2, b2;
  Matrix ln2_gamma, ln2_beta;
};

// Post-LN transformer encoder with learned token/position/segment embeddings
// and a tied MLM head (hidden -> layer norm -> token_embedding^T + bias).
struct ModelParams {
  EncoderConfig config;
  Matrix token_embedding;     // vocab_size x d_model
  Matrix position_embedding;  // max_len x d_model
  Matrix segment_embedding;   // 2 x d_model
  std::vector<LayerParams> layers;
  Matrix mlm_ln_gamma, mlm_ln_beta;  // 1 x d_model
  Matrix mlm_bias;                   // 1 x vocab_size

  // All matrices allocated at their configured shapes, zero filled.
  static ModelParams allocate(const EncoderConfig& config);

  // Weights draw from N(0, 0.02^2); biases and LN shifts start at zero, LN
  // gains at one. Draw order is the fixed parameter traversal order.
  static ModelParams init(const EncoderConfig& config, Rng& rng);

  // Zero-filled parameter set with the same shapes; gradient container.
  static ModelParams zeros_like(const ModelParams& other);

  // Fixed traversal: embeddings, then each layer's weights, then the MLM
  // head. The single source of parameter naming and ordering.
  void for_each(const std::function<void(const std::string&, Matrix&)>& fn);
  void for_each(
      const std::function<void(const std::string&, const Matrix&)>& fn) const;
};

// Tape bindings of every parameter, in for_each order.
struct LayerNodes {
  Tape::NodeId wq, bq, wk, bk, wv, bv, wo, bo;
  Tape::NodeId ln1_gamma, ln1_beta;
  Tape::NodeId w1, b1, w2, b2;
  Tape::NodeId ln2_gamma, ln2_beta;
};

struct ParamNodes {
  Tape::NodeId token_embedding, position_embedding, segment_embedding;
  std::vector<LayerNodes> layers;
  Tape::NodeId mlm_ln_gamma, mlm_ln_beta, mlm_bias;
};

ParamNodes bind(Tape& tape, const ModelParams& params);

// Tape gradients accumulated into a parameter-shaped container. Parameters
// untouched by the backward sweep contribute zero.
void collect_grads(const Tape& tape, const ParamNodes& nodes,
                   ModelParams& grads);

struct ForwardOptions {
  bool training = false;   // enables dropout when config.dropout > 0
  Rng* dropout_rng = nullptr;
};

// Encoder forward over the attendable subsequence only. Occluded positions
// are dropped before embedding: attention is the sole cross-position op, so
// every attendable output is identical to a full-width masked forward, and
// occluded content can influence nothing, bit for bit.
struct VisibleForward {
  Tape::NodeId hidden;         // n_visible x d_model
  std::vector<int> positions;  // original position of each row, ascending
  int row_of(int position) const;  // -1 when the position is occluded
};

VisibleForward forward_graph(Tape& tape, const ParamNodes& nodes,
                             const EncoderConfig& config,
                             const std::vector<int>& ids,
                             const std::vector<int>& segment_ids,
                             const std::vector<std::uint8_t>& attendable,
                             const ForwardOptions& opt = {});

// Tied MLM head over a hidden-state node.
Tape::NodeId mlm_logits_graph(Tape& tape, const ParamNodes& nodes,
                              Tape::NodeId hidden);

// Evaluation-mode forward; rows at non-attendable positions are zero.
Matrix forward(const ModelParams& params, const std::vector<int>& ids,
               const std::vector<int>& segment_ids,
               const std::vector<std::uint8_t>& attendable);

// Tied MLM head over a full hidden matrix: layer_norm(h) * E^T + bias.
Matrix mlm_logits(const ModelParams& params, const Matrix& hidden);

Eigen::VectorXd cls_embedding(const Matrix& hidden, int cls_pos);

// Maps a [CLS] embedding into prediction space. The alignment objective
// scores predictor outputs; swapping in a non-trivial predictor is the
// extension point.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual Tape::NodeId apply(Tape& tape, Tape::NodeId z) const = 0;
  virtual Eigen::VectorXd apply(const Eigen::VectorXd& z) const = 0;
};

class IdentityPredictor : public Predictor {
 public:
  Tape::NodeId apply(Tape&, Tape::NodeId z) const override { return z; }
  Eigen::VectorXd apply(const Eigen::VectorXd& z) const override { return z; }
};

// Occluded [CLS] embeddings for one pair, evaluation mode, after the
// predictor: the sentence-representation path diagnostics and alignment use.
struct PairEmbeddings {
  Eigen::VectorXd z_a, z_b;
};

PairEmbeddings embed_pair(const ModelParams& params, const tokenize::Vocab& vocab,
                          const corpus::ParallelPair& pair,
                          const Predictor& predictor);

// Order-sensitive digest of every parameter's name, shape and raw bytes.
// Equal fingerprints on equal-config models mean bit-identical parameters.
std::uint64_t params_fingerprint(const ModelParams& params);

}  // namespace bepa::encoder
