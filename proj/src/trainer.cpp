#include "bepa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "bepa/diagnostics.hpp"
#include "bepa/errors.hpp"

namespace bepa::trainer {

using nlohmann::json;
using nlohmann::ordered_json;

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (warmup_steps < 0) throw ConfigError("warmup_steps must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw ConfigError("adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (!(mask_prob >= 0.0 && mask_prob <= 1.0))
    throw ConfigError("mask_prob must lie in [0, 1]");
  if (lambda < 0.0) throw ConfigError("lambda must be non-negative");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
}

namespace {

void reject_unknown_keys(const json& j, const std::set<std::string>& known,
                         const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " section must be an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!known.count(key))
      throw ConfigError("unknown key in " + where + " config: " + key);
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& out,
                const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("bad value type for ") + where + "." + key);
  }
}

}  // namespace

TrainConfig train_config_from_json(const json& j) {
  static const std::set<std::string> known = {
      "learning_rate", "weight_decay", "warmup_steps", "batch_size",
      "epochs",        "adam_beta1",   "adam_beta2",   "adam_eps",
      "mask_prob",     "lambda",       "alignment_loss", "temperature",
      "mode",          "seed"};
  reject_unknown_keys(j, known, "train");

  TrainConfig c;
  read_field(j, "learning_rate", c.learning_rate, "train");
  read_field(j, "weight_decay", c.weight_decay, "train");
  read_field(j, "warmup_steps", c.warmup_steps, "train");
  read_field(j, "batch_size", c.batch_size, "train");
  read_field(j, "epochs", c.epochs, "train");
  read_field(j, "adam_beta1", c.adam_beta1, "train");
  read_field(j, "adam_beta2", c.adam_beta2, "train");
  read_field(j, "adam_eps", c.adam_eps, "train");
  read_field(j, "mask_prob", c.mask_prob, "train");
  read_field(j, "lambda", c.lambda, "train");
  read_field(j, "temperature", c.temperature, "train");
  read_field(j, "seed", c.seed, "train");
  if (j.contains("alignment_loss")) {
    std::string name;
    read_field(j, "alignment_loss", name, "train");
    c.alignment_loss = objective::alignment_loss_from_string(name);
  }
  if (j.contains("mode")) {
    std::string mode;
    read_field(j, "mode", mode, "train");
    if (mode == "bilingual")
      c.mode = corpus::PackingMode::kBilingual;
    else if (mode == "monolingual")
      c.mode = corpus::PackingMode::kMonolingual;
    else
      throw ConfigError("unknown packing mode: " + mode);
  }
  c.validate();
  return c;
}

encoder::EncoderConfig encoder_config_from_json(const json& j) {
  static const std::set<std::string> known = {"d_model", "n_layers", "n_heads",
                                              "d_ff",    "max_len",  "dropout"};
  if (j.contains("vocab_size"))
    throw ConfigError("vocab_size is derived from the corpus, not configured");
  reject_unknown_keys(j, known, "encoder");

  encoder::EncoderConfig c;
  read_field(j, "d_model", c.d_model, "encoder");
  read_field(j, "n_layers", c.n_layers, "encoder");
  read_field(j, "n_heads", c.n_heads, "encoder");
  read_field(j, "d_ff", c.d_ff, "encoder");
  read_field(j, "max_len", c.max_len, "encoder");
  read_field(j, "dropout", c.dropout, "encoder");
  return c;
}

ordered_json to_json(const TrainConfig& c) {
  return ordered_json{{"learning_rate", c.learning_rate},
                      {"weight_decay", c.weight_decay},
                      {"warmup_steps", c.warmup_steps},
                      {"batch_size", c.batch_size},
                      {"epochs", c.epochs},
                      {"adam_beta1", c.adam_beta1},
                      {"adam_beta2", c.adam_beta2},
                      {"adam_eps", c.adam_eps},
                      {"mask_prob", c.mask_prob},
                      {"lambda", c.lambda},
                      {"alignment_loss", objective::to_string(c.alignment_loss)},
                      {"temperature", c.temperature},
                      {"mode", c.mode == corpus::PackingMode::kBilingual
                                   ? "bilingual"
                                   : "monolingual"},
                      {"seed", c.seed}};
}

ordered_json to_json(const encoder::EncoderConfig& c) {
  return ordered_json{{"d_model", c.d_model}, {"n_layers", c.n_layers},
                      {"n_heads", c.n_heads}, {"d_ff", c.d_ff},
                      {"max_len", c.max_len}, {"dropout", c.dropout}};
}

RunConfig run_config_from_json(const json& j) {
  reject_unknown_keys(j, {"encoder", "train"}, "run");
  RunConfig rc;
  if (j.contains("encoder"))
    rc.enc = encoder_config_from_json(j.at("encoder"));
  if (j.contains("train")) rc.train = train_config_from_json(j.at("train"));
  return rc;
}

double lr_at_step(const TrainConfig& c, long step) {
  if (step < 1) throw InvalidArgument("steps count from 1");
  if (c.warmup_steps > 0 && step <= c.warmup_steps)
    return c.learning_rate * static_cast<double>(step) /
           static_cast<double>(c.warmup_steps);
  return c.learning_rate;
}

AdamState AdamState::init(const encoder::ModelParams& params) {
  AdamState s;
  s.m = encoder::ModelParams::zeros_like(params);
  s.v = encoder::ModelParams::zeros_like(params);
  s.step = 0;
  return s;
}

namespace {

std::vector<Matrix*> matrix_ptrs(encoder::ModelParams& p) {
  std::vector<Matrix*> out;
  p.for_each([&out](const std::string&, Matrix& m) { out.push_back(&m); });
  return out;
}

std::vector<const Matrix*> matrix_ptrs(const encoder::ModelParams& p) {
  std::vector<const Matrix*> out;
  p.for_each([&out](const std::string&, const Matrix& m) { out.push_back(&m); });
  return out;
}

}  // namespace

void adamw_step(encoder::ModelParams& params, const encoder::ModelParams& grads,
                AdamState& state, const TrainConfig& config) {
  std::vector<Matrix*> p = matrix_ptrs(params);
  std::vector<const Matrix*> g = matrix_ptrs(grads);
  std::vector<Matrix*> m = matrix_ptrs(state.m);
  std::vector<Matrix*> v = matrix_ptrs(state.v);
  if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size())
    throw InvalidArgument("optimizer state does not match the parameters");

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double lr = lr_at_step(config, state.step);
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, t);
  const double bc2 = 1.0 - std::pow(b2, t);

  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i]->rows() != g[i]->rows() || p[i]->cols() != g[i]->cols())
      throw InvalidArgument("gradient shape does not match its parameter");
    m[i]->array() = b1 * m[i]->array() + (1.0 - b1) * g[i]->array();
    v[i]->array() =
        b2 * v[i]->array() + (1.0 - b2) * g[i]->array() * g[i]->array();
    p[i]->array() -= lr * (m[i]->array() / bc1) /
                         ((v[i]->array() / bc2).sqrt() + config.adam_eps) +
                     lr * config.weight_decay * p[i]->array();
  }
}

Split split_pairs(std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [](std::size_t a, std::size_t b) {
    const std::uint64_t ha = splitmix64(a);
    const std::uint64_t hb = splitmix64(b);
    return ha != hb ? ha < hb : a < b;
  });
  Split s;
  const std::size_t n_val = n / 10;
  s.validation.assign(order.begin(),
                      order.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val),
                 order.end());
  std::sort(s.validation.begin(), s.validation.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

CorpusSplit split_corpus(const std::vector<corpus::ParallelPair>& pairs,
                         corpus::PackingMode mode) {
  const Split split = split_pairs(pairs.size());
  auto take_eligible = [&](const std::vector<std::size_t>& idx) {
    std::vector<corpus::ParallelPair> subset;
    subset.reserve(idx.size());
    for (std::size_t i : idx) subset.push_back(pairs[i]);
    std::vector<corpus::ParallelPair> out;
    for (std::size_t e : corpus::eligible_indices(subset, mode))
      out.push_back(subset[e]);
    return out;
  };
  CorpusSplit cs;
  cs.train = take_eligible(split.train);
  cs.validation = take_eligible(split.validation);
  return cs;
}

std::vector<std::pair<std::size_t, std::size_t>> chunk_ranges(
    std::size_t n, std::size_t batch_size) {
  if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t begin = 0; begin < n; begin += batch_size)
    out.emplace_back(begin, std::min(begin + batch_size, n));
  if (out.size() >= 2 && out.back().second - out.back().first == 1) {
    out.pop_back();
    out.back().second += 1;
  }
  return out;
}

PackedBatch pack_batch(const std::vector<corpus::ParallelPair>& batch,
                       const tokenize::Vocab& vocab, int max_len,
                       double mask_prob, Rng& corrupt_rng) {
  if (batch.empty()) throw InvalidArgument("empty batch");
  PackedBatch pb;
  pb.examples.reserve(batch.size());
  pb.targets.reserve(batch.size());
  pb.masks.reserve(batch.size());
  for (const corpus::ParallelPair& pair : batch) {
    tokenize::PackedExample packed = tokenize::pack_pair(
        vocab.encode(pair.text_a), vocab.encode(pair.text_b), max_len);
    tokenize::MlmTarget target = tokenize::apply_mlm_corruption(
        packed, mask_prob, vocab.size(), corrupt_rng);
    pb.label_count += target.label_positions.size();
    pb.masks.push_back(tokenize::build_alignment_masks(packed));
    pb.examples.push_back(std::move(packed));
    pb.targets.push_back(std::move(target));
  }
  return pb;
}

StepGraph build_step_graph(Tape& tape, const encoder::ParamNodes& nodes,
                           const encoder::EncoderConfig& enc,
                           const TrainConfig& config, const PackedBatch& batch,
                           const encoder::Predictor& predictor, bool training,
                           Rng* dropout_rng) {
  const std::size_t n = batch.examples.size();
  if (n == 0 || batch.targets.size() != n || batch.masks.size() != n)
    throw InvalidArgument("malformed batch");

  StepGraph g;
  encoder::ForwardOptions mlm_opt;
  mlm_opt.training = training;
  mlm_opt.dropout_rng = dropout_rng;

  std::vector<Tape::NodeId> ce_sums;
  ce_sums.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const tokenize::PackedExample& ex = batch.examples[i];
    const tokenize::MlmTarget& target = batch.targets[i];
    encoder::VisibleForward vf = encoder::forward_graph(
        tape, nodes, enc, target.corrupted_ids, ex.segment_ids,
        ex.padding_mask, mlm_opt);
    if (target.label_positions.empty()) continue;
    Tape::NodeId logits = encoder::mlm_logits_graph(tape, nodes, vf.hidden);
    std::vector<int> rows;
    rows.reserve(target.label_positions.size());
    for (int pos : target.label_positions) rows.push_back(vf.row_of(pos));
    ce_sums.push_back(tape.ce_sum(logits, rows, target.labels));
  }
  // A batch can select nothing when mask_prob is 0; the MLM term is then a
  // constant zero outside the gradient graph.
  g.mlm = ce_sums.empty() ? tape.leaf(Matrix::Zero(1, 1))
                          : objective::mlm_loss(tape, ce_sums, batch.label_count);

  const bool align_active = !config.mlm_only && config.lambda != 0.0;
  if (!align_active) {
    g.total = g.mlm;
    return g;
  }

  std::vector<Tape::NodeId> z_a, z_b;
  z_a.reserve(n);
  z_b.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const tokenize::PackedExample& ex = batch.examples[i];
    const tokenize::AlignmentMasks& masks = batch.masks[i];
    // Alignment passes see clean tokens and never apply dropout.
    encoder::VisibleForward va = encoder::forward_graph(
        tape, nodes, enc, ex.ids, ex.segment_ids, masks.mask_a);
    encoder::VisibleForward vb = encoder::forward_graph(
        tape, nodes, enc, ex.ids, ex.segment_ids, masks.mask_b);
    z_a.push_back(predictor.apply(
        tape, tape.select_row(va.hidden, va.row_of(ex.cls_a_pos))));
    z_b.push_back(predictor.apply(
        tape, tape.select_row(vb.hidden, vb.row_of(ex.cls_b_pos))));
  }
  g.alignment = objective::alignment(tape, config.alignment_loss,
                                     tape.concat_rows(z_a),
                                     tape.concat_rows(z_b), config.temperature);
  g.has_alignment = true;
  g.total = tape.add(g.mlm, tape.scale(g.alignment, config.lambda));
  return g;
}

std::string epoch_record_json_line(const EpochRecord& r) {
  auto put = [](ordered_json& j, const char* key, double v) {
    if (std::isfinite(v))
      j[key] = v;
    else
      j[key] = nullptr;
  };
  ordered_json j;
  j["epoch"] = r.epoch;
  put(j, "train_mlm", r.train_mlm);
  put(j, "train_alignment", r.train_alignment);
  put(j, "train_total", r.train_total);
  put(j, "val_mlm", r.val_mlm);
  put(j, "val_alignment", r.val_alignment);
  put(j, "val_total", r.val_total);
  put(j, "rankme", r.rankme);
  put(j, "mean_pos_cosine", r.mean_pos_cosine);
  put(j, "mean_neg_cosine", r.mean_neg_cosine);
  return j.dump();
}

void write_metrics_jsonl(const std::vector<EpochRecord>& records,
                         const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open metrics log: " + path);
  for (const EpochRecord& r : records) out << epoch_record_json_line(r) << '\n';
  if (!out) throw IoError("metrics log write failed: " + path);
}

ValReport evaluate_validation(const encoder::ModelParams& params,
                              const tokenize::Vocab& vocab,
                              const std::vector<corpus::ParallelPair>& val_pairs,
                              const TrainConfig& config,
                              const encoder::Predictor& predictor) {
  ValReport report;
  if (val_pairs.empty()) {
    report.mlm = std::nan("");
    report.alignment = std::nan("");
    return report;
  }
  const encoder::EncoderConfig& enc = params.config;

  // MLM: fresh corruption stream per evaluation, so every epoch sees the
  // same corrupted validation set.
  Rng eval_corrupt = Rng::stream(config.seed, "eval-corrupt");
  double ce_total = 0.0;
  std::size_t label_total = 0;
  const auto chunks = chunk_ranges(val_pairs.size(),
                                   static_cast<std::size_t>(config.batch_size));
  for (const auto& [begin, end] : chunks) {
    const std::vector<corpus::ParallelPair> chunk(
        val_pairs.begin() + static_cast<std::ptrdiff_t>(begin),
        val_pairs.begin() + static_cast<std::ptrdiff_t>(end));
    PackedBatch pb = pack_batch(chunk, vocab, enc.max_len, config.mask_prob,
                                eval_corrupt);
    Tape tape;
    encoder::ParamNodes nodes = encoder::bind(tape, params);
    for (std::size_t i = 0; i < pb.examples.size(); ++i) {
      const tokenize::PackedExample& ex = pb.examples[i];
      const tokenize::MlmTarget& target = pb.targets[i];
      if (target.label_positions.empty()) continue;
      encoder::VisibleForward vf = encoder::forward_graph(
          tape, nodes, enc, target.corrupted_ids, ex.segment_ids,
          ex.padding_mask);
      Tape::NodeId logits = encoder::mlm_logits_graph(tape, nodes, vf.hidden);
      std::vector<int> rows;
      rows.reserve(target.label_positions.size());
      for (int pos : target.label_positions) rows.push_back(vf.row_of(pos));
      ce_total += tape.value(tape.ce_sum(logits, rows, target.labels))(0, 0);
      label_total += target.label_positions.size();
    }
  }
  report.mlm = label_total > 0
                   ? ce_total / static_cast<double>(label_total)
                   : std::nan("");

  report.embeddings = diagnostics::embed_pairs(params, vocab, val_pairs,
                                               predictor);
  if (config.mlm_only) {
    report.alignment = 0.0;
    return report;
  }

  // Size-weighted mean of per-chunk alignment values, so in-batch negative
  // counts match the training batch size wherever possible.
  const Eigen::Index d = enc.d_model;
  double align_weighted = 0.0;
  std::size_t align_count = 0;
  for (const auto& [begin, end] : chunks) {
    const std::size_t size = end - begin;
    Matrix za(static_cast<Eigen::Index>(size), d);
    Matrix zb(static_cast<Eigen::Index>(size), d);
    for (std::size_t i = 0; i < size; ++i) {
      za.row(static_cast<Eigen::Index>(i)) =
          report.embeddings[begin + i].z_a.transpose();
      zb.row(static_cast<Eigen::Index>(i)) =
          report.embeddings[begin + i].z_b.transpose();
    }
    align_weighted += objective::alignment_value(config.alignment_loss, za, zb,
                                                 config.temperature) *
                      static_cast<double>(size);
    align_count += size;
  }
  report.alignment = align_weighted / static_cast<double>(align_count);
  return report;
}

TrainResult train(const std::vector<corpus::ParallelPair>& pairs,
                  encoder::EncoderConfig enc, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (pairs.empty()) throw InvalidArgument("empty corpus");

  TrainResult result;
  result.vocab = tokenize::Vocab::build(pairs);
  enc.vocab_size = result.vocab.size();
  enc.validate();

  CorpusSplit split = split_corpus(pairs, config.mode);
  result.train_pairs = std::move(split.train);
  result.validation_pairs = std::move(split.validation);
  if (result.train_pairs.empty())
    throw ConfigError("no eligible training pairs for this packing mode");
  if (result.train_pairs.size() < static_cast<std::size_t>(config.batch_size))
    throw ConfigError("batch_size exceeds the eligible training pool");

  Rng init_rng = Rng::stream(config.seed, "init");
  Rng batch_rng = Rng::stream(config.seed, "batch");
  Rng corrupt_rng = Rng::stream(config.seed, "corrupt");
  Rng dropout_rng = Rng::stream(config.seed, "dropout");

  result.params = encoder::ModelParams::init(enc, init_rng);
  AdamState adam = AdamState::init(result.params);
  encoder::ModelParams grads = encoder::ModelParams::zeros_like(result.params);
  encoder::IdentityPredictor predictor;

  const std::size_t steps_per_epoch =
      (result.train_pairs.size() + config.batch_size - 1) /
      static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    double mlm_sum = 0.0, align_sum = 0.0;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      try {
        std::vector<corpus::ParallelPair> batch_pairs =
            corpus::sample_training_batch(result.train_pairs, config.mode,
                                          static_cast<std::size_t>(config.batch_size),
                                          batch_rng);
        PackedBatch pb = pack_batch(batch_pairs, result.vocab, enc.max_len,
                                    config.mask_prob, corrupt_rng);

        Tape tape;
        encoder::ParamNodes nodes = encoder::bind(tape, result.params);
        StepGraph g = build_step_graph(tape, nodes, enc, config, pb, predictor,
                                       /*training=*/true, &dropout_rng);

        StepLosses losses;
        losses.mlm = tape.value(g.mlm)(0, 0);
        if (g.has_alignment) {
          losses.alignment = tape.value(g.alignment)(0, 0);
        } else if (!config.mlm_only) {
          // lambda = 0: alignment is reported but stays outside the graph.
          std::vector<encoder::PairEmbeddings> es;
          es.reserve(batch_pairs.size());
          for (const corpus::ParallelPair& pair : batch_pairs)
            es.push_back(encoder::embed_pair(result.params, result.vocab, pair,
                                             predictor));
          Matrix za(static_cast<Eigen::Index>(es.size()), enc.d_model);
          Matrix zb(static_cast<Eigen::Index>(es.size()), enc.d_model);
          for (std::size_t i = 0; i < es.size(); ++i) {
            za.row(static_cast<Eigen::Index>(i)) = es[i].z_a.transpose();
            zb.row(static_cast<Eigen::Index>(i)) = es[i].z_b.transpose();
          }
          losses.alignment = objective::alignment_value(
              config.alignment_loss, za, zb, config.temperature);
        }
        losses.total = losses.mlm + config.lambda * losses.alignment;

        tape.backward(g.total);
        encoder::collect_grads(tape, nodes, grads);
        adamw_step(result.params, grads, adam, config);

        mlm_sum += losses.mlm;
        align_sum += losses.alignment;
      } catch (const NumericalError& e) {
        throw NumericalError("epoch " + std::to_string(epoch) + " step " +
                             std::to_string(step + 1) + ": " + e.what());
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_mlm = mlm_sum / static_cast<double>(steps_per_epoch);
    rec.train_alignment = align_sum / static_cast<double>(steps_per_epoch);
    // Derived from the epoch means so the logged identity
    // total = mlm + lambda * alignment holds bit for bit.
    rec.train_total = rec.train_mlm + config.lambda * rec.train_alignment;

    ValReport val = evaluate_validation(result.params, result.vocab,
                                        result.validation_pairs, config,
                                        predictor);
    rec.val_mlm = val.mlm;
    rec.val_alignment = val.alignment;
    rec.val_total = val.mlm + config.lambda * val.alignment;
    if (!val.embeddings.empty()) {
      rec.rankme = diagnostics::rankme(diagnostics::pool_embeddings(val.embeddings));
      rec.mean_pos_cosine = diagnostics::mean_pos_cosine(val.embeddings);
      if (val.embeddings.size() >= 2) {
        Rng neg_rng = Rng::stream(config.seed, "eval-neg");
        rec.mean_neg_cosine = diagnostics::mean_neg_cosine(
            val.embeddings, diagnostics::kNegSamplesPerSide, neg_rng);
      } else {
        rec.mean_neg_cosine = std::nan("");
      }
    } else {
      rec.rankme = std::nan("");
      rec.mean_pos_cosine = std::nan("");
      rec.mean_neg_cosine = std::nan("");
    }

    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  result.total_steps = adam.step;
  return result;
}

}  // namespace bepa::trainer
