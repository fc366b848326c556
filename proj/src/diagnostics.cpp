#include "bepa/diagnostics.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

#include "bepa/errors.hpp"

namespace bepa::diagnostics {

std::vector<encoder::PairEmbeddings> embed_pairs(
    const encoder::ModelParams& params, const tokenize::Vocab& vocab,
    const std::vector<corpus::ParallelPair>& pairs,
    const encoder::Predictor& predictor) {
  std::vector<encoder::PairEmbeddings> out;
  out.reserve(pairs.size());
  for (const corpus::ParallelPair& pair : pairs)
    out.push_back(encoder::embed_pair(params, vocab, pair, predictor));
  return out;
}

Matrix pool_embeddings(const std::vector<encoder::PairEmbeddings>& embeddings) {
  if (embeddings.empty()) throw InvalidArgument("no embeddings to pool");
  const Eigen::Index d = embeddings[0].z_a.size();
  Matrix pooled(2 * static_cast<Eigen::Index>(embeddings.size()), d);
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    pooled.row(2 * static_cast<Eigen::Index>(i)) = embeddings[i].z_a.transpose();
    pooled.row(2 * static_cast<Eigen::Index>(i) + 1) =
        embeddings[i].z_b.transpose();
  }
  return pooled;
}

double rankme(const Matrix& embeddings, double eps) {
  if (embeddings.rows() < 1 || embeddings.cols() < 1)
    throw InvalidArgument("rankme needs a non-empty matrix");
  Eigen::BDCSVD<Matrix> svd(embeddings);
  const Eigen::VectorXd sigma = svd.singularValues();
  const double total = sigma.sum();
  if (total <= 0.0) return 1.0;  // all-zero matrix: one flat direction
  double entropy = 0.0;
  for (Eigen::Index k = 0; k < sigma.size(); ++k) {
    const double p = sigma(k) / total + eps;
    entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

PcaSpectrum pca_spectrum(const Matrix& embeddings) {
  if (embeddings.rows() < 2)
    throw InvalidArgument("pca needs at least two rows");
  Matrix centered = embeddings.rowwise() - embeddings.colwise().mean();
  Matrix cov = centered.transpose() * centered /
               static_cast<double>(embeddings.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
  if (solver.info() != Eigen::Success)
    throw NumericalError("pca eigendecomposition failed");

  Eigen::VectorXd vals = solver.eigenvalues().reverse();
  for (Eigen::Index i = 0; i < vals.size(); ++i)
    if (vals(i) < 0.0) vals(i) = 0.0;  // clip eigensolver noise
  PcaSpectrum out;
  out.variances = vals;
  const double total = vals.sum();
  out.ratios = total > 0.0 ? (vals / total).eval()
                           : Eigen::VectorXd::Zero(vals.size()).eval();
  return out;
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na < 1e-12 || nb < 1e-12)
    throw NumericalError("cosine of a near-zero vector");
  return a.dot(b) / (na * nb);
}

double mean_pos_cosine(const std::vector<encoder::PairEmbeddings>& embeddings) {
  if (embeddings.empty()) throw InvalidArgument("no embeddings");
  double sum = 0.0;
  for (const auto& e : embeddings) sum += cosine(e.z_a, e.z_b);
  return sum / static_cast<double>(embeddings.size());
}

double mean_neg_cosine(const std::vector<encoder::PairEmbeddings>& embeddings,
                       int k, Rng& rng) {
  if (embeddings.size() < 2)
    throw InvalidArgument("negative sampling needs at least two pairs");
  if (k < 1) throw InvalidArgument("k must be positive");
  const std::size_t n = embeddings.size();
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (int draw = 0; draw < k; ++draw) {
      std::size_t j = rng.uniform_int(n - 1);
      if (j >= i) ++j;
      sum += cosine(embeddings[i].z_a, embeddings[j].z_b);
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

namespace {

std::string pair_key(const corpus::ParallelPair& p) {
  return p.lang_a <= p.lang_b ? p.lang_a + "-" + p.lang_b
                              : p.lang_b + "-" + p.lang_a;
}

}  // namespace

std::vector<CosineCategoryRow> cosine_category_report(
    const std::vector<corpus::ParallelPair>& pairs,
    const std::vector<encoder::PairEmbeddings>& embeddings, int k, Rng& rng) {
  if (pairs.size() != embeddings.size())
    throw InvalidArgument("pairs and embeddings must align");
  if (k < 1) throw InvalidArgument("k must be positive");

  // Group pair indices by unordered language pair; map iteration gives a
  // deterministic row order and a deterministic rng draw order.
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    if (pairs[i].related) groups[pair_key(pairs[i])].push_back(i);

  std::vector<CosineCategoryRow> rows;
  for (const auto& [key, members] : groups) {
    CosineCategoryRow row;
    row.language_pair = key;
    row.count = members.size();

    double related_sum = 0.0;
    for (std::size_t i : members)
      related_sum += cosine(embeddings[i].z_a, embeddings[i].z_b);
    row.diff_lang_related = related_sum / static_cast<double>(members.size());

    if (members.size() < 2) {
      // No in-group partners to sample; unrelated categories are undefined.
      row.same_lang_unrelated = std::nan("");
      row.diff_lang_unrelated = std::nan("");
      rows.push_back(row);
      continue;
    }

    double cross_sum = 0.0, same_sum = 0.0;
    std::size_t samples = 0;
    for (std::size_t idx = 0; idx < members.size(); ++idx) {
      for (int draw = 0; draw < 2 * k; ++draw) {
        std::size_t pick = rng.uniform_int(members.size() - 1);
        if (pick >= idx) ++pick;
        const std::size_t i = members[idx];
        const std::size_t j = members[pick];
        // First k draws partner the A side, the rest the B side.
        if (draw < k) {
          cross_sum += cosine(embeddings[i].z_a, embeddings[j].z_b);
          same_sum += cosine(embeddings[i].z_a, embeddings[j].z_a);
        } else {
          cross_sum += cosine(embeddings[i].z_b, embeddings[j].z_a);
          same_sum += cosine(embeddings[i].z_b, embeddings[j].z_b);
        }
        ++samples;
      }
    }
    row.diff_lang_unrelated = cross_sum / static_cast<double>(samples);
    row.same_lang_unrelated = same_sum / static_cast<double>(samples);
    rows.push_back(row);
  }
  return rows;
}

std::string cosine_report_tsv(const std::vector<CosineCategoryRow>& rows) {
  std::ostringstream out;
  out << "language_pair\tsame_lang_unrelated\tdiff_lang_related\t"
         "diff_lang_unrelated\tcounts\n";
  out.precision(17);
  for (const CosineCategoryRow& row : rows) {
    out << row.language_pair << '\t' << row.same_lang_unrelated << '\t'
        << row.diff_lang_related << '\t' << row.diff_lang_unrelated << '\t'
        << row.count << '\n';
  }
  return out.str();
}

void export_embeddings(const std::vector<corpus::ParallelPair>& pairs,
                       const std::vector<encoder::PairEmbeddings>& embeddings,
                       const std::string& path) {
  if (pairs.size() != embeddings.size())
    throw InvalidArgument("pairs and embeddings must align");
  if (pairs.empty()) throw InvalidArgument("nothing to export");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open embedding export: " + path);
  auto write_side = [&](std::size_t i, const char* side,
                        const std::string& language, const Eigen::VectorXd& z) {
    nlohmann::ordered_json line;
    line["pair_index"] = i;
    line["side"] = side;
    line["language"] = language;
    line["vector"] = std::vector<double>(z.data(), z.data() + z.size());
    out << line.dump() << '\n';
  };
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    write_side(i, "a", pairs[i].lang_a, embeddings[i].z_a);
    write_side(i, "b", pairs[i].lang_b, embeddings[i].z_b);
  }
  if (!out) throw IoError("embedding export failed: " + path);
}

PosNegCurves pos_neg_curves_from_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics log: " + path);
  PosNegCurves curves;
  std::string line;
  auto number_or_nan = [](const nlohmann::json& v) {
    return v.is_number() ? v.get<double>() : std::nan("");
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
      curves.epochs.push_back(rec.at("epoch").get<long>());
      curves.mean_pos_cosine.push_back(number_or_nan(rec.at("mean_pos_cosine")));
      curves.mean_neg_cosine.push_back(number_or_nan(rec.at("mean_neg_cosine")));
    } catch (const nlohmann::json::exception&) {
      throw IoError("malformed metrics log line in " + path);
    }
  }
  if (curves.epochs.empty()) throw IoError("metrics log is empty: " + path);
  return curves;
}

}  // namespace bepa::diagnostics
