#include "bepa/encoder.hpp"

#include <utility>

#include "bepa/errors.hpp"

namespace bepa::encoder {
namespace {

void fill_normal(Matrix& m, Rng& rng) {
  double* data = m.data();
  for (Eigen::Index i = 0; i < m.size(); ++i) data[i] = rng.normal() * kInitStd;
}

// Inverted-dropout keep/scale mask; entries drawn in storage order.
Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  const double inv_keep = 1.0 / (1.0 - p);
  Matrix m(rows, cols);
  double* data = m.data();
  for (Eigen::Index i = 0; i < m.size(); ++i)
    data[i] = rng.uniform() < p ? 0.0 : inv_keep;
  return m;
}

}  // namespace

void EncoderConfig::validate() const {
  if (vocab_size <= tokenize::kNumSpecials)
    throw ConfigError("vocab_size must exceed the special token count");
  if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || d_ff <= 0)
    throw ConfigError("encoder dimensions must be positive");
  if (d_model % n_heads != 0)
    throw ConfigError("d_model must be divisible by n_heads");
  if (max_len < 4)
    throw ConfigError("max_len must be at least 4 to fit one packed pair");
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw ConfigError("dropout must lie in [0, 1)");
}

ModelParams ModelParams::allocate(const EncoderConfig& config) {
  config.validate();
  ModelParams p;
  p.config = config;
  const int d = config.d_model;

  p.token_embedding = Matrix::Zero(config.vocab_size, d);
  p.position_embedding = Matrix::Zero(config.max_len, d);
  p.segment_embedding = Matrix::Zero(2, d);
  p.layers.resize(config.n_layers);
  for (auto& layer : p.layers) {
    layer.wq = layer.wk = layer.wv = layer.wo = Matrix::Zero(d, d);
    layer.bq = layer.bk = layer.bv = layer.bo = Matrix::Zero(1, d);
    layer.ln1_gamma = layer.ln1_beta = Matrix::Zero(1, d);
    layer.w1 = Matrix::Zero(d, config.d_ff);
    layer.b1 = Matrix::Zero(1, config.d_ff);
    layer.w2 = Matrix::Zero(config.d_ff, d);
    layer.b2 = Matrix::Zero(1, d);
    layer.ln2_gamma = layer.ln2_beta = Matrix::Zero(1, d);
  }
  p.mlm_ln_gamma = Matrix::Zero(1, d);
  p.mlm_ln_beta = Matrix::Zero(1, d);
  p.mlm_bias = Matrix::Zero(1, config.vocab_size);
  return p;
}

ModelParams ModelParams::init(const EncoderConfig& config, Rng& rng) {
  ModelParams p = allocate(config);

  fill_normal(p.token_embedding, rng);
  fill_normal(p.position_embedding, rng);
  fill_normal(p.segment_embedding, rng);
  for (auto& layer : p.layers) {
    fill_normal(layer.wq, rng);
    fill_normal(layer.wk, rng);
    fill_normal(layer.wv, rng);
    fill_normal(layer.wo, rng);
    layer.ln1_gamma.setOnes();
    fill_normal(layer.w1, rng);
    fill_normal(layer.w2, rng);
    layer.ln2_gamma.setOnes();
  }
  p.mlm_ln_gamma.setOnes();
  return p;
}

ModelParams ModelParams::zeros_like(const ModelParams& other) {
  ModelParams z = other;
  z.for_each([](const std::string&, Matrix& m) { m.setZero(); });
  return z;
}

void ModelParams::for_each(
    const std::function<void(const std::string&, Matrix&)>& fn) {
  fn("token_embedding", token_embedding);
  fn("position_embedding", position_embedding);
  fn("segment_embedding", segment_embedding);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string prefix = "layer" + std::to_string(i) + ".";
    LayerParams& l = layers[i];
    fn(prefix + "wq", l.wq);
    fn(prefix + "bq", l.bq);
    fn(prefix + "wk", l.wk);
    fn(prefix + "bk", l.bk);
    fn(prefix + "wv", l.wv);
    fn(prefix + "bv", l.bv);
    fn(prefix + "wo", l.wo);
    fn(prefix + "bo", l.bo);
    fn(prefix + "ln1_gamma", l.ln1_gamma);
    fn(prefix + "ln1_beta", l.ln1_beta);
    fn(prefix + "w1", l.w1);
    fn(prefix + "b1", l.b1);
    fn(prefix + "w2", l.w2);
    fn(prefix + "b2", l.b2);
    fn(prefix + "ln2_gamma", l.ln2_gamma);
    fn(prefix + "ln2_beta", l.ln2_beta);
  }
  fn("mlm_ln_gamma", mlm_ln_gamma);
  fn("mlm_ln_beta", mlm_ln_beta);
  fn("mlm_bias", mlm_bias);
}

void ModelParams::for_each(
    const std::function<void(const std::string&, const Matrix&)>& fn) const {
  const_cast<ModelParams*>(this)->for_each(
      [&fn](const std::string& name, Matrix& m) { fn(name, m); });
}

ParamNodes bind(Tape& tape, const ModelParams& params) {
  ParamNodes n;
  n.token_embedding = tape.leaf(params.token_embedding);
  n.position_embedding = tape.leaf(params.position_embedding);
  n.segment_embedding = tape.leaf(params.segment_embedding);
  n.layers.reserve(params.layers.size());
  for (const LayerParams& l : params.layers) {
    LayerNodes ln;
    ln.wq = tape.leaf(l.wq);
    ln.bq = tape.leaf(l.bq);
    ln.wk = tape.leaf(l.wk);
    ln.bk = tape.leaf(l.bk);
    ln.wv = tape.leaf(l.wv);
    ln.bv = tape.leaf(l.bv);
    ln.wo = tape.leaf(l.wo);
    ln.bo = tape.leaf(l.bo);
    ln.ln1_gamma = tape.leaf(l.ln1_gamma);
    ln.ln1_beta = tape.leaf(l.ln1_beta);
    ln.w1 = tape.leaf(l.w1);
    ln.b1 = tape.leaf(l.b1);
    ln.w2 = tape.leaf(l.w2);
    ln.b2 = tape.leaf(l.b2);
    ln.ln2_gamma = tape.leaf(l.ln2_gamma);
    ln.ln2_beta = tape.leaf(l.ln2_beta);
    n.layers.push_back(ln);
  }
  n.mlm_ln_gamma = tape.leaf(params.mlm_ln_gamma);
  n.mlm_ln_beta = tape.leaf(params.mlm_ln_beta);
  n.mlm_bias = tape.leaf(params.mlm_bias);
  return n;
}

void collect_grads(const Tape& tape, const ParamNodes& nodes,
                   ModelParams& grads) {
  auto take = [&tape](Tape::NodeId id, Matrix& dst) {
    if (tape.has_grad(id))
      dst = tape.grad(id);
    else
      dst.setZero();
  };
  take(nodes.token_embedding, grads.token_embedding);
  take(nodes.position_embedding, grads.position_embedding);
  take(nodes.segment_embedding, grads.segment_embedding);
  if (nodes.layers.size() != grads.layers.size())
    throw InvalidArgument("parameter/node layer count mismatch");
  for (std::size_t i = 0; i < nodes.layers.size(); ++i) {
    const LayerNodes& ln = nodes.layers[i];
    LayerParams& gl = grads.layers[i];
    take(ln.wq, gl.wq);
    take(ln.bq, gl.bq);
    take(ln.wk, gl.wk);
    take(ln.bk, gl.bk);
    take(ln.wv, gl.wv);
    take(ln.bv, gl.bv);
    take(ln.wo, gl.wo);
    take(ln.bo, gl.bo);
    take(ln.ln1_gamma, gl.ln1_gamma);
    take(ln.ln1_beta, gl.ln1_beta);
    take(ln.w1, gl.w1);
    take(ln.b1, gl.b1);
    take(ln.w2, gl.w2);
    take(ln.b2, gl.b2);
    take(ln.ln2_gamma, gl.ln2_gamma);
    take(ln.ln2_beta, gl.ln2_beta);
  }
  take(nodes.mlm_ln_gamma, grads.mlm_ln_gamma);
  take(nodes.mlm_ln_beta, grads.mlm_ln_beta);
  take(nodes.mlm_bias, grads.mlm_bias);
}

int VisibleForward::row_of(int position) const {
  for (std::size_t i = 0; i < positions.size(); ++i)
    if (positions[i] == position) return static_cast<int>(i);
  return -1;
}

VisibleForward forward_graph(Tape& tape, const ParamNodes& nodes,
                             const EncoderConfig& config,
                             const std::vector<int>& ids,
                             const std::vector<int>& segment_ids,
                             const std::vector<std::uint8_t>& attendable,
                             const ForwardOptions& opt) {
  const std::size_t n = ids.size();
  if (n == 0 || n > static_cast<std::size_t>(config.max_len))
    throw InvalidArgument("sequence length out of range");
  if (segment_ids.size() != n || attendable.size() != n)
    throw InvalidArgument("ids, segment_ids and attendable must align");
  for (std::size_t i = 0; i < n; ++i) {
    if (ids[i] < 0 || ids[i] >= config.vocab_size)
      throw InvalidArgument("token id out of vocab range");
    if (segment_ids[i] != 0 && segment_ids[i] != 1)
      throw InvalidArgument("segment id must be 0 or 1");
  }

  VisibleForward out;
  std::vector<int> vis_ids, vis_segs;
  for (std::size_t i = 0; i < n; ++i) {
    if (!attendable[i]) continue;
    out.positions.push_back(static_cast<int>(i));
    vis_ids.push_back(ids[i]);
    vis_segs.push_back(segment_ids[i]);
  }
  if (out.positions.empty())
    throw InvalidArgument("at least one position must be attendable");

  const bool drop = opt.training && config.dropout > 0.0;
  if (drop && opt.dropout_rng == nullptr)
    throw InvalidArgument("training forward with dropout needs an rng");
  const Eigen::Index nv = static_cast<Eigen::Index>(out.positions.size());
  const Eigen::Index d = config.d_model;
  Rng* rng = opt.dropout_rng;

  Tape::NodeId h = tape.embed_gather(nodes.token_embedding,
                                     nodes.position_embedding,
                                     nodes.segment_embedding, vis_ids,
                                     out.positions, vis_segs);
  if (drop) h = tape.dropout(h, dropout_mask(nv, d, config.dropout, *rng));

  for (const LayerNodes& l : nodes.layers) {
    Tape::NodeId q = tape.linear(h, l.wq, l.bq);
    Tape::NodeId k = tape.linear(h, l.wk, l.bk);
    Tape::NodeId v = tape.linear(h, l.wv, l.bv);
    Tape::NodeId att;
    if (drop) {
      std::vector<Matrix> prob_masks;
      prob_masks.reserve(config.n_heads);
      for (int head = 0; head < config.n_heads; ++head)
        prob_masks.push_back(dropout_mask(nv, nv, config.dropout, *rng));
      att = tape.multi_head_attention(q, k, v, config.n_heads, &prob_masks);
    } else {
      att = tape.multi_head_attention(q, k, v, config.n_heads);
    }
    att = tape.linear(att, l.wo, l.bo);
    if (drop) att = tape.dropout(att, dropout_mask(nv, d, config.dropout, *rng));
    h = tape.layer_norm(tape.add(h, att), l.ln1_gamma, l.ln1_beta,
                        kLayerNormEps);

    Tape::NodeId ff = tape.linear(tape.gelu(tape.linear(h, l.w1, l.b1)), l.w2,
                                  l.b2);
    if (drop) ff = tape.dropout(ff, dropout_mask(nv, d, config.dropout, *rng));
    h = tape.layer_norm(tape.add(h, ff), l.ln2_gamma, l.ln2_beta,
                        kLayerNormEps);
  }

  out.hidden = h;
  return out;
}

Tape::NodeId mlm_logits_graph(Tape& tape, const ParamNodes& nodes,
                              Tape::NodeId hidden) {
  Tape::NodeId normed = tape.layer_norm(hidden, nodes.mlm_ln_gamma,
                                        nodes.mlm_ln_beta, kLayerNormEps);
  Tape::NodeId scores = tape.matmul_nt(normed, nodes.token_embedding);
  return tape.add_row(scores, nodes.mlm_bias);
}

Matrix forward(const ModelParams& params, const std::vector<int>& ids,
               const std::vector<int>& segment_ids,
               const std::vector<std::uint8_t>& attendable) {
  Tape tape;
  ParamNodes nodes = bind(tape, params);
  VisibleForward vf = forward_graph(tape, nodes, params.config, ids,
                                    segment_ids, attendable);
  const Matrix& visible = tape.value(vf.hidden);
  Matrix full = Matrix::Zero(static_cast<Eigen::Index>(ids.size()),
                             params.config.d_model);
  for (std::size_t row = 0; row < vf.positions.size(); ++row)
    full.row(vf.positions[row]) = visible.row(static_cast<Eigen::Index>(row));
  return full;
}

Matrix mlm_logits(const ModelParams& params, const Matrix& hidden) {
  if (hidden.cols() != params.config.d_model)
    throw InvalidArgument("hidden width must match d_model");
  Tape tape;
  ParamNodes nodes = bind(tape, params);
  Tape::NodeId h = tape.leaf(hidden);
  return tape.value(mlm_logits_graph(tape, nodes, h));
}

Eigen::VectorXd cls_embedding(const Matrix& hidden, int cls_pos) {
  if (cls_pos < 0 || cls_pos >= hidden.rows())
    throw InvalidArgument("cls position outside hidden matrix");
  return hidden.row(cls_pos).transpose();
}

PairEmbeddings embed_pair(const ModelParams& params,
                          const tokenize::Vocab& vocab,
                          const corpus::ParallelPair& pair,
                          const Predictor& predictor) {
  tokenize::PackedExample packed = tokenize::pack_pair(
      vocab.encode(pair.text_a), vocab.encode(pair.text_b),
      params.config.max_len);
  tokenize::AlignmentMasks masks = tokenize::build_alignment_masks(packed);

  Matrix hidden_a = forward(params, packed.ids, packed.segment_ids,
                            masks.mask_a);
  Matrix hidden_b = forward(params, packed.ids, packed.segment_ids,
                            masks.mask_b);
  PairEmbeddings out;
  out.z_a = predictor.apply(cls_embedding(hidden_a, packed.cls_a_pos));
  out.z_b = predictor.apply(cls_embedding(hidden_b, packed.cls_b_pos));
  return out;
}

std::uint64_t params_fingerprint(const ModelParams& params) {
  std::uint64_t h = fnv1a64("bepa-params");
  params.for_each([&h](const std::string& name, const Matrix& m) {
    h = splitmix64(h ^ fnv1a64(name));
    h = splitmix64(h ^ (static_cast<std::uint64_t>(m.rows()) << 32 |
                        static_cast<std::uint64_t>(m.cols())));
    h = splitmix64(
        h ^ fnv1a64(m.data(), sizeof(double) * static_cast<std::size_t>(m.size())));
  });
  return h;
}

}  // namespace bepa::encoder
