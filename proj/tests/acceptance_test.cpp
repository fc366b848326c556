// Acceptance suite: eight end-to-end checks over the full pipeline, each
// printing one verdict line. Exits nonzero if any criterion fails.
//
// The heavyweight criteria (5 through 8) share two training runs, plus one
// repeat run for the determinism check, so the whole suite performs three
// trainings of the desk-scale configuration.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "bepa/corpus.hpp"
#include "bepa/diagnostics.hpp"
#include "bepa/encoder.hpp"
#include "bepa/errors.hpp"
#include "bepa/numerics.hpp"
#include "bepa/objective.hpp"
#include "bepa/rng.hpp"
#include "bepa/tokenize.hpp"
#include "bepa/trainer.hpp"

using namespace bepa;
using numerics::Matrix;
using numerics::Tape;

namespace {

// -- pinned tolerances and budgets -------------------------------------------
constexpr double kGradTolerance = 1e-4;       // criterion 1
constexpr double kGradBudgetSeconds = 30.0;   // criterion 1
constexpr double kMlmAnalyticTol = 1e-6;      // criterion 2
constexpr double kInfoNceAnalyticTol = 1e-9;  // criterion 2
constexpr double kOrthoPairLoss = 0.31326168751822286;  // ln(1 + exp(-1))
constexpr long kAnnihilationMinSteps = 100;   // criterion 3
constexpr int kOcclusionTrials = 1000;        // criterion 4
constexpr double kRelatedFloor = 0.8;         // criterion 5
constexpr double kUnrelatedCeiling = 0.6;     // criterion 5
constexpr double kGapFloor = 0.25;            // criterion 5
constexpr double kTrainBudgetSeconds = 900.0;  // criterion 5
constexpr double kSpectrumMargin = 0.05;      // criterion 6
constexpr double kCurveBand = 1.02;           // criterion 7
constexpr int kCurveEpochs = 5;               // criterion 7

int g_failures = 0;

void verdict(int index, bool pass, const std::string& name,
             const std::string& detail) {
  std::printf("[%d/8] %s  %s: %s\n", index, pass ? "PASS" : "FAIL",
              name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(4);
  out << v;
  return out.str();
}

// -- criterion 1: finite-difference oracle over the full objective -----------
void criterion_gradient_oracle() {
  const auto t0 = std::chrono::steady_clock::now();

  // Two languages over an 8-token base vocabulary: 4 specials + 16 surface
  // forms gives exactly 20 vocabulary entries.
  const auto base = corpus::default_base_vocab(8);
  std::vector<corpus::LanguageSpec> langs = {
      corpus::generate_language(0, base, false),
      corpus::generate_language(1, base, true)};
  const auto pairs = corpus::generate_parallel_corpus(langs, 8, 2, 4, 21);
  const tokenize::Vocab vocab = tokenize::Vocab::build(pairs);

  encoder::EncoderConfig enc;
  enc.vocab_size = vocab.size();
  enc.d_model = 8;
  enc.n_layers = 2;
  enc.n_heads = 2;
  enc.d_ff = 16;
  enc.max_len = 12;
  enc.dropout = 0.0;

  trainer::TrainConfig cfg;
  cfg.lambda = 1.0;
  cfg.temperature = 0.1;
  cfg.mask_prob = 0.3;

  std::vector<corpus::ParallelPair> batch(pairs.begin(), pairs.begin() + 2);
  Rng corrupt = Rng::stream(4, "corrupt");
  const trainer::PackedBatch pb =
      trainer::pack_batch(batch, vocab, enc.max_len, cfg.mask_prob, corrupt);

  Rng init = Rng::stream(4, "init");
  const encoder::ModelParams p0 = encoder::ModelParams::init(enc, init);
  encoder::IdentityPredictor predictor;

  auto to_vec = [](const encoder::ModelParams& p) {
    numerics::Params v;
    p.for_each(
        [&v](const std::string&, const Matrix& m) { v.push_back(m); });
    return v;
  };
  auto from_vec = [&](const numerics::Params& v) {
    encoder::ModelParams p = encoder::ModelParams::allocate(enc);
    std::size_t i = 0;
    p.for_each([&](const std::string&, Matrix& m) { m = v.at(i++); });
    return p;
  };
  auto loss_of = [&](const numerics::Params& v) {
    encoder::ModelParams p = from_vec(v);
    Tape t;
    encoder::ParamNodes nodes = encoder::bind(t, p);
    trainer::StepGraph g = trainer::build_step_graph(
        t, nodes, enc, cfg, pb, predictor, false, nullptr);
    return t.value(g.total)(0, 0);
  };
  auto grad_of = [&](const numerics::Params& v) {
    encoder::ModelParams p = from_vec(v);
    Tape t;
    encoder::ParamNodes nodes = encoder::bind(t, p);
    trainer::StepGraph g = trainer::build_step_graph(
        t, nodes, enc, cfg, pb, predictor, false, nullptr);
    t.backward(g.total);
    encoder::ModelParams grads = encoder::ModelParams::zeros_like(p);
    encoder::collect_grads(t, nodes, grads);
    return to_vec(grads);
  };

  const bool sized = vocab.size() == 20 && pb.label_count > 0;
  const double err = numerics::grad_check(loss_of, grad_of, to_vec(p0));
  const double secs = seconds_since(t0);
  const bool pass =
      sized && err < kGradTolerance && secs < kGradBudgetSeconds;
  verdict(1, pass, "gradient oracle",
          "max rel err " + fmt(err) + " (tol " + fmt(kGradTolerance) +
              "), vocab " + std::to_string(vocab.size()) + ", " + fmt(secs) +
              " s");
}

// -- criterion 2: analytic loss anchors --------------------------------------
void criterion_analytic_losses() {
  // Uniform logits: cross entropy equals ln(vocab) regardless of the label.
  const int v = 33;
  Tape t;
  Tape::NodeId logits = t.leaf(Matrix::Zero(6, v));
  Tape::NodeId ce =
      t.ce_sum(logits, {0, 1, 2, 3, 4, 5}, {5, 12, 0, 31, 7, 19});
  const double mlm = t.value(objective::mlm_loss(t, {ce}, 6))(0, 0);
  const double mlm_err = std::abs(mlm - std::log(double(v)));

  // Collapsed batch: every embedding identical, softmax uniform, loss ln B.
  Rng rng(9);
  Matrix row(1, 16);
  for (int i = 0; i < 16; ++i) row(0, i) = rng.normal();
  const Matrix z = Matrix::Ones(4, 1) * row;
  const double nce = objective::info_nce_value(z, z, 0.1);
  const double nce_err = std::abs(nce - std::log(4.0));

  // Orthonormal aligned pairs, B = 2, tau = 1: ln(1 + exp(-1)) exactly.
  const Matrix eye = Matrix::Identity(2, 2);
  const double ortho = objective::info_nce_value(eye, eye, 1.0);
  const double ortho_err = std::abs(ortho - kOrthoPairLoss);

  const bool pass = mlm_err < kMlmAnalyticTol &&
                    nce_err < kInfoNceAnalyticTol &&
                    ortho_err < kInfoNceAnalyticTol;
  verdict(2, pass, "analytic losses",
          "uniform-mlm err " + fmt(mlm_err) + ", collapsed-infonce err " +
              fmt(nce_err) + ", orthonormal err " + fmt(ortho_err));
}

// -- criterion 3: lambda annihilation over a real training run ---------------
void criterion_lambda_annihilation() {
  const auto base = corpus::default_base_vocab(16);
  std::vector<corpus::LanguageSpec> langs = {
      corpus::generate_language(0, base, false),
      corpus::generate_language(1, base, true)};
  const auto pairs = corpus::generate_parallel_corpus(langs, 200, 2, 6, 3);

  encoder::EncoderConfig enc;
  enc.d_model = 16;
  enc.n_layers = 1;
  enc.n_heads = 2;
  enc.d_ff = 32;
  enc.max_len = 16;
  enc.dropout = 0.1;

  trainer::TrainConfig zero;
  zero.learning_rate = 1e-3;
  zero.warmup_steps = 10;
  zero.batch_size = 16;
  zero.epochs = 9;
  zero.lambda = 0.0;
  zero.seed = 11;
  trainer::TrainConfig only = zero;
  only.lambda = 1.0;
  only.mlm_only = true;

  const trainer::TrainResult rz = trainer::train(pairs, enc, zero);
  const trainer::TrainResult ro = trainer::train(pairs, enc, only);

  bool series_equal = rz.log.size() == ro.log.size();
  if (series_equal) {
    for (std::size_t i = 0; i < rz.log.size(); ++i) {
      series_equal = series_equal &&
                     rz.log[i].train_mlm == ro.log[i].train_mlm &&
                     rz.log[i].val_mlm == ro.log[i].val_mlm;
    }
  }
  const bool params_equal = encoder::params_fingerprint(rz.params) ==
                            encoder::params_fingerprint(ro.params);
  const bool pass = rz.total_steps >= kAnnihilationMinSteps && series_equal &&
                    params_equal;
  verdict(3, pass, "lambda annihilation",
          std::to_string(rz.total_steps) + " steps, params " +
              (params_equal ? "bit-identical" : "DIVERGED") +
              ", per-epoch mlm series " +
              (series_equal ? "bit-identical" : "DIVERGED"));
}

// -- criterion 4: occlusion invariance on randomized examples ----------------
void criterion_occlusion() {
  const auto base = corpus::default_base_vocab(20);
  std::vector<corpus::LanguageSpec> langs = {
      corpus::generate_language(0, base, false),
      corpus::generate_language(1, base, true),
      corpus::generate_language(2, base, false)};
  const auto pairs =
      corpus::generate_parallel_corpus(langs, kOcclusionTrials, 2, 8, 5);
  const tokenize::Vocab vocab = tokenize::Vocab::build(pairs);

  encoder::EncoderConfig enc;
  enc.vocab_size = vocab.size();
  enc.d_model = 16;
  enc.n_layers = 1;
  enc.n_heads = 2;
  enc.d_ff = 32;
  enc.max_len = 20;
  enc.dropout = 0.0;
  Rng init = Rng::stream(6, "init");
  const encoder::ModelParams params = encoder::ModelParams::init(enc, init);

  Rng mutate_rng(17);
  int cls_mismatches = 0;
  int grad_violations = 0;
  for (const corpus::ParallelPair& pair : pairs) {
    const tokenize::PackedExample packed =
        tokenize::pack_pair(vocab.encode(pair.text_a), vocab.encode(pair.text_b),
                            enc.max_len);
    const tokenize::AlignmentMasks masks = tokenize::build_alignment_masks(packed);

    // Replace segment-B content with arbitrary surface tokens, lengths fixed.
    std::vector<int> mutated = packed.ids;
    for (int p = packed.cls_b_pos + 1; p <= packed.cls_b_pos + packed.len_b;
         ++p) {
      mutated[static_cast<std::size_t>(p)] =
          tokenize::kNumSpecials +
          static_cast<int>(mutate_rng.uniform_int(
              static_cast<std::uint64_t>(enc.vocab_size - tokenize::kNumSpecials)));
    }

    const Matrix h1 =
        encoder::forward(params, packed.ids, packed.segment_ids, masks.mask_a);
    const Matrix h2 =
        encoder::forward(params, mutated, packed.segment_ids, masks.mask_a);
    bool identical = true;
    for (int c = 0; c < enc.d_model && identical; ++c)
      identical = h1(0, c) == h2(0, c);
    if (!identical) ++cls_mismatches;

    // Pass-A gradients: everything unique to segment B stays exactly zero.
    Tape t;
    encoder::ParamNodes nodes = encoder::bind(t, params);
    encoder::VisibleForward vf = encoder::forward_graph(
        t, nodes, enc, packed.ids, packed.segment_ids, masks.mask_a);
    Tape::NodeId cls = t.select_row(vf.hidden, vf.row_of(0));
    Tape::NodeId loss = t.mse(cls, t.leaf(Matrix::Zero(1, enc.d_model)));
    t.backward(loss);
    encoder::ModelParams grads = encoder::ModelParams::zeros_like(params);
    encoder::collect_grads(t, nodes, grads);

    double leak = 0.0;
    for (int p = packed.cls_b_pos + 1; p <= packed.cls_b_pos + packed.len_b;
         ++p) {
      const int id = packed.ids[static_cast<std::size_t>(p)];
      leak = std::max(leak, grads.token_embedding.row(id).cwiseAbs().maxCoeff());
    }
    for (int p = packed.cls_b_pos; p < enc.max_len; ++p)
      leak = std::max(leak,
                      grads.position_embedding.row(p).cwiseAbs().maxCoeff());
    leak = std::max(leak, grads.segment_embedding.row(1).cwiseAbs().maxCoeff());
    if (leak != 0.0) ++grad_violations;
  }

  const bool pass = cls_mismatches == 0 && grad_violations == 0;
  verdict(4, pass, "occlusion invariance",
          std::to_string(kOcclusionTrials) + " trials, " +
              std::to_string(cls_mismatches) + " [CLS] mismatches, " +
              std::to_string(grad_violations) + " nonzero occluded grads");
}

// -- criteria 5 through 8 share the desk-scale runs --------------------------
struct DeskRun {
  trainer::TrainResult result;
  std::string metrics;  // serialized jsonl, byte-exact
  double seconds = 0.0;
};

struct CategoryMeans {
  double related = 0.0;
  double same_unrelated = 0.0;
  double diff_unrelated = 0.0;
  double gap() const {
    return related - std::max(same_unrelated, diff_unrelated);
  }
};

std::vector<corpus::ParallelPair> desk_corpus() {
  const auto base = corpus::default_base_vocab(40);
  std::vector<corpus::LanguageSpec> langs = {
      corpus::generate_language(0, base, false),
      corpus::generate_language(1, base, true),
      corpus::generate_language(2, base, false)};
  return corpus::generate_parallel_corpus(langs, 2000, 4, 10, 13);
}

encoder::EncoderConfig desk_encoder() {
  encoder::EncoderConfig enc;
  enc.d_model = 64;
  enc.n_layers = 2;
  enc.n_heads = 4;
  enc.d_ff = 256;
  enc.max_len = 24;
  enc.dropout = 0.1;
  return enc;
}

trainer::TrainConfig desk_train(double lambda) {
  trainer::TrainConfig cfg;
  cfg.learning_rate = 3e-4;
  cfg.warmup_steps = 100;
  cfg.batch_size = 32;
  cfg.epochs = 30;
  cfg.lambda = lambda;
  cfg.temperature = 0.1;
  cfg.seed = 0;
  return cfg;
}

DeskRun run_desk(const std::vector<corpus::ParallelPair>& pairs, double lambda,
                 const char* label) {
  const auto t0 = std::chrono::steady_clock::now();
  DeskRun run;
  std::ostringstream metrics;
  run.result = trainer::train(
      pairs, desk_encoder(), desk_train(lambda),
      [&](const trainer::EpochRecord& r) {
        metrics << trainer::epoch_record_json_line(r) << "\n";
        std::fprintf(stderr, "  [%s] epoch %d/30 val_total %.4f\n", label,
                     r.epoch, r.val_total);
      });
  run.metrics = metrics.str();
  run.seconds = seconds_since(t0);
  std::fprintf(stderr, "  [%s] finished in %.1f s\n", label, run.seconds);
  return run;
}

CategoryMeans category_means(const trainer::TrainResult& r) {
  encoder::IdentityPredictor predictor;
  const auto embeddings = diagnostics::embed_pairs(
      r.params, r.vocab, r.validation_pairs, predictor);
  CategoryMeans m;
  m.related = diagnostics::mean_pos_cosine(embeddings);

  Rng rng = Rng::stream(0, "acceptance-categories");
  const auto rows = diagnostics::cosine_category_report(
      r.validation_pairs, embeddings, diagnostics::kNegSamplesPerSide, rng);
  double same_sum = 0.0, diff_sum = 0.0, weight = 0.0;
  for (const auto& row : rows) {
    if (row.count < 2) continue;
    same_sum += row.same_lang_unrelated * static_cast<double>(row.count);
    diff_sum += row.diff_lang_unrelated * static_cast<double>(row.count);
    weight += static_cast<double>(row.count);
  }
  m.same_unrelated = same_sum / weight;
  m.diff_unrelated = diff_sum / weight;
  return m;
}

void criterion_collapse_reversal(const DeskRun& bepa, const DeskRun& mlm,
                                 const CategoryMeans& cb,
                                 const CategoryMeans& cm) {
  const bool pass = cb.related >= kRelatedFloor &&
                    cb.same_unrelated <= kUnrelatedCeiling &&
                    cb.diff_unrelated <= kUnrelatedCeiling &&
                    cb.gap() >= kGapFloor && cm.gap() < cb.gap() &&
                    bepa.seconds < kTrainBudgetSeconds;
  verdict(5, pass, "collapse reversal",
          "related " + fmt(cb.related) + ", unrelated same/diff " +
              fmt(cb.same_unrelated) + "/" + fmt(cb.diff_unrelated) +
              ", gap " + fmt(cb.gap()) + " vs baseline gap " + fmt(cm.gap()) +
              ", " + fmt(bepa.seconds) + " s (mlm-only " + fmt(mlm.seconds) +
              " s)");
}

void criterion_spectrum_shift(const DeskRun& bepa, const DeskRun& mlm) {
  encoder::IdentityPredictor predictor;
  auto pooled = [&](const trainer::TrainResult& r) {
    return diagnostics::pool_embeddings(diagnostics::embed_pairs(
        r.params, r.vocab, r.validation_pairs, predictor));
  };
  const Matrix pb = pooled(bepa.result);
  const Matrix pm = pooled(mlm.result);
  const double share_bepa = diagnostics::pca_spectrum(pb).ratios(0);
  const double share_mlm = diagnostics::pca_spectrum(pm).ratios(0);
  const double rank_bepa = diagnostics::rankme(pb);
  const double rank_mlm = diagnostics::rankme(pm);

  const bool pass = share_bepa <= (1.0 - kSpectrumMargin) * share_mlm &&
                    rank_bepa >= (1.0 + kSpectrumMargin) * rank_mlm;
  verdict(6, pass, "spectrum shift",
          "first-pc share " + fmt(share_bepa) + " vs " + fmt(share_mlm) +
              ", rankme " + fmt(rank_bepa) + " vs " + fmt(rank_mlm) +
              " (margin " + fmt(kSpectrumMargin) + ")");
}

void criterion_curve_shape(const DeskRun& bepa) {
  const auto& log = bepa.result.log;
  bool monotone = log.size() >= static_cast<std::size_t>(kCurveEpochs);
  for (int e = 1; e < kCurveEpochs && monotone; ++e) {
    monotone = log[static_cast<std::size_t>(e)].val_alignment <=
               log[static_cast<std::size_t>(e - 1)].val_alignment * kCurveBand;
  }
  const double neg_first = log.front().mean_neg_cosine;
  const double neg_last = log.back().mean_neg_cosine;
  const bool pass = monotone && neg_last < neg_first;
  verdict(7, pass, "validation curve shape",
          std::string("first-5-epoch alignment ") +
              (monotone ? "non-increasing (2% band)" : "NOT monotone") +
              ", neg cosine " + fmt(neg_first) + " -> " + fmt(neg_last));
}

void criterion_determinism(const std::vector<corpus::ParallelPair>& pairs,
                           const DeskRun& first) {
  const DeskRun repeat = run_desk(pairs, 1.0, "bepa-repeat");
  const bool pass = !first.metrics.empty() && repeat.metrics == first.metrics;
  verdict(8, pass, "determinism",
          pass ? "metrics logs byte-identical across reruns"
               : "metrics logs DIFFER across reruns");
}

}  // namespace

int main() {
  try {
    criterion_gradient_oracle();
    criterion_analytic_losses();
    criterion_lambda_annihilation();
    criterion_occlusion();

    const auto pairs = desk_corpus();
    const DeskRun bepa = run_desk(pairs, 1.0, "bepa");
    const DeskRun mlm = run_desk(pairs, 0.0, "mlm-only");
    const CategoryMeans cb = category_means(bepa.result);
    const CategoryMeans cm = category_means(mlm.result);
    criterion_collapse_reversal(bepa, mlm, cb, cm);
    criterion_spectrum_shift(bepa, mlm);
    criterion_curve_shape(bepa);
    criterion_determinism(pairs, bepa);
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 1;
  }

  std::printf("acceptance: %d/8 criteria passed\n", 8 - g_failures);
  return g_failures == 0 ? 0 : 1;
}
