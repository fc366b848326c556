#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "bepa/corpus.hpp"
#include "bepa/encoder.hpp"
#include "bepa/rng.hpp"

namespace bepa::diagnostics {

using numerics::Matrix;

inline constexpr int kNegSamplesPerSide = 5;

// Occluded eval-mode embeddings for each pair, after the predictor.
std::vector<encoder::PairEmbeddings> embed_pairs(
    const encoder::ModelParams& params, const tokenize::Vocab& vocab,
    const std::vector<corpus::ParallelPair>& pairs,
    const encoder::Predictor& predictor);

// All A-side and B-side embeddings stacked into one [2n x d] matrix.
Matrix pool_embeddings(const std::vector<encoder::PairEmbeddings>& embeddings);

// Effective rank of an embedding matrix: exp of the entropy of its
// normalized singular values. Collapsed representations score near 1,
// isotropic ones near the full dimension.
double rankme(const Matrix& embeddings, double eps = 1e-12);

// Eigen-spectrum of the sample covariance (rows centered, 1/(n-1)).
// variances descend; ratios are fractions of total variance.
struct PcaSpectrum {
  Eigen::VectorXd variances;
  Eigen::VectorXd ratios;
};
PcaSpectrum pca_spectrum(const Matrix& embeddings);

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Mean cosine between the two sides of each pair.
double mean_pos_cosine(const std::vector<encoder::PairEmbeddings>& embeddings);

// Mean cosine between A-side embeddings and B-side embeddings of other,
// uniformly sampled pairs (k draws per pair).
double mean_neg_cosine(const std::vector<encoder::PairEmbeddings>& embeddings,
                       int k, Rng& rng);

// Per language pair: mean cosine of related cross-language pairs, of
// unrelated cross-language samples, and of unrelated same-language samples.
// Partners are drawn only from pairs with the same language pair, k per side.
// count is the number of related pairs in the row.
struct CosineCategoryRow {
  std::string language_pair;
  double same_lang_unrelated = 0.0;
  double diff_lang_related = 0.0;
  double diff_lang_unrelated = 0.0;
  std::size_t count = 0;
};

std::vector<CosineCategoryRow> cosine_category_report(
    const std::vector<corpus::ParallelPair>& pairs,
    const std::vector<encoder::PairEmbeddings>& embeddings, int k, Rng& rng);

// TSV with header: language_pair, same_lang_unrelated, diff_lang_related,
// diff_lang_unrelated, counts.
std::string cosine_report_tsv(const std::vector<CosineCategoryRow>& rows);

// JSONL export, one object per sentence:
// {"pair_index", "side" (a|b), "language", "vector"}. A-side first.
void export_embeddings(const std::vector<corpus::ParallelPair>& pairs,
                       const std::vector<encoder::PairEmbeddings>& embeddings,
                       const std::string& path);

// Per-epoch positive/negative cosine series extracted from a metrics log
// written by the trainer. Nulls decode as NaN.
struct PosNegCurves {
  std::vector<long> epochs;
  std::vector<double> mean_pos_cosine;
  std::vector<double> mean_neg_cosine;
};
PosNegCurves pos_neg_curves_from_jsonl(const std::string& path);

}  // namespace bepa::diagnostics
