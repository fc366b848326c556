// bepa command line: corpus generation, training, evaluation, diagnostics,
// and embedding export over the library pipeline.
//
// Exit codes: 0 success, 2 usage or configuration error, 1 runtime error.
#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "bepa/checkpoint.hpp"
#include "bepa/corpus.hpp"
#include "bepa/diagnostics.hpp"
#include "bepa/encoder.hpp"
#include "bepa/errors.hpp"
#include "bepa/rng.hpp"
#include "bepa/tokenize.hpp"
#include "bepa/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw bepa::IoError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw bepa::IoError("cannot open for writing: " + path);
  out << text;
  if (!out) throw bepa::IoError("write failed: " + path);
}

std::string fnv1a64_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

ordered_json finite_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

// Everything eval-side commands need, reconstructed from a checkpoint and a
// corpus file. The split is the same one training held out.
struct EvalContext {
  bepa::trainer::TrainConfig config;
  bepa::encoder::ModelParams params;
  bepa::tokenize::Vocab vocab;
  bepa::trainer::CorpusSplit split;
  std::vector<bepa::corpus::ParallelPair> all_pairs;
};

EvalContext load_eval_context(const std::string& checkpoint_path,
                              const std::string& corpus_path) {
  bepa::checkpoint::Checkpoint ckpt = bepa::checkpoint::load(checkpoint_path);
  if (ckpt.train_config.is_null()) {
    throw bepa::ConfigError("checkpoint stores no training config: " +
                            checkpoint_path);
  }
  EvalContext ctx{bepa::trainer::train_config_from_json(ckpt.train_config),
                  std::move(ckpt.params),
                  {},
                  {},
                  bepa::corpus::load_parallel_tsv(corpus_path)};
  ctx.vocab = bepa::tokenize::Vocab::build(ctx.all_pairs);
  if (ctx.vocab.size() != ctx.params.config.vocab_size) {
    throw bepa::ConfigError(
        "corpus vocabulary (" + std::to_string(ctx.vocab.size()) +
        " tokens) does not match the checkpoint (" +
        std::to_string(ctx.params.config.vocab_size) + ")");
  }
  ctx.split = bepa::trainer::split_corpus(ctx.all_pairs, ctx.config.mode);
  return ctx;
}

const std::vector<bepa::corpus::ParallelPair>& select_split(
    const EvalContext& ctx, const std::string& split) {
  if (split == "train") return ctx.split.train;
  if (split == "all") return ctx.all_pairs;
  return ctx.split.validation;
}

int cmd_gen_corpus(int languages, int pairs, int min_len, int max_len,
                   int base_vocab, std::uint64_t seed, bool paraphrase,
                   const std::string& out) {
  if (languages < 1) throw bepa::InvalidArgument("--languages must be >= 1");
  if (pairs < 1) throw bepa::InvalidArgument("--pairs must be >= 1");
  if (base_vocab < 1) throw bepa::InvalidArgument("--base-vocab must be >= 1");
  if (min_len < 1 || max_len < min_len)
    throw bepa::InvalidArgument("need 1 <= --min-len <= --max-len");

  const auto base =
      bepa::corpus::default_base_vocab(static_cast<std::size_t>(base_vocab));
  std::vector<bepa::corpus::LanguageSpec> langs;
  langs.reserve(static_cast<std::size_t>(languages));
  // Language identities are fixed by index, independent of --seed: a0, a1, ...
  // with every odd-indexed language using reversed word order.
  for (int i = 0; i < languages; ++i) {
    langs.push_back(bepa::corpus::generate_language(
        static_cast<std::uint64_t>(i), base, i % 2 == 1));
  }

  const auto corpus =
      paraphrase
          ? bepa::corpus::generate_paraphrase_corpus(
                langs, static_cast<std::size_t>(pairs),
                static_cast<std::size_t>(min_len),
                static_cast<std::size_t>(max_len), seed)
          : bepa::corpus::generate_parallel_corpus(
                langs, static_cast<std::size_t>(pairs),
                static_cast<std::size_t>(min_len),
                static_cast<std::size_t>(max_len), seed);
  bepa::corpus::save_parallel_tsv(corpus, out);
  std::cout << "wrote " << corpus.size() << " pairs (" << languages
            << " languages) to " << out << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& corpus_path,
              const std::string& run_dir) {
  json config_json;
  try {
    config_json = json::parse(read_file_bytes(config_path));
  } catch (const json::exception& e) {
    throw bepa::ConfigError("config file " + config_path + ": " + e.what());
  }
  bepa::trainer::RunConfig rc = bepa::trainer::run_config_from_json(config_json);
  rc.train.validate();

  const std::string corpus_bytes = read_file_bytes(corpus_path);
  const auto pairs = bepa::corpus::load_parallel_tsv(corpus_path);
  const bepa::tokenize::Vocab vocab = bepa::tokenize::Vocab::build(pairs);

  fs::create_directories(run_dir);
  const std::string manifest_path = (fs::path(run_dir) / "manifest.json").string();
  const std::string metrics_path = (fs::path(run_dir) / "metrics.jsonl").string();
  const std::string checkpoint_path =
      (fs::path(run_dir) / "checkpoint.bin").string();
  const std::string vocab_path = (fs::path(run_dir) / "vocab.tsv").string();

  ordered_json manifest;
  manifest["version"] = kVersion;
  manifest["config"] = ordered_json{{"encoder", bepa::trainer::to_json(rc.enc)},
                                    {"train", bepa::trainer::to_json(rc.train)}};
  manifest["corpus"] = ordered_json{{"path", corpus_path},
                                    {"hash", fnv1a64_hex(corpus_bytes)},
                                    {"pairs", pairs.size()},
                                    {"vocab_size", vocab.size()}};
  manifest["seeds"] = ordered_json{{"train", rc.train.seed}};
  manifest["timestamps"] = ordered_json{{"started_utc", utc_timestamp()}};
  write_text_file(manifest_path, manifest.dump(2) + "\n");

  std::ofstream metrics(metrics_path, std::ios::trunc);
  if (!metrics) throw bepa::IoError("cannot open for writing: " + metrics_path);
  bepa::trainer::TrainResult result = bepa::trainer::train(
      pairs, rc.enc, rc.train, [&](const bepa::trainer::EpochRecord& r) {
        metrics << bepa::trainer::epoch_record_json_line(r) << "\n";
        metrics.flush();
        std::cout << "epoch " << r.epoch << "/" << rc.train.epochs
                  << "  train_total " << r.train_total << "  val_total "
                  << r.val_total << "\n";
      });
  if (!metrics) throw bepa::IoError("write failed: " + metrics_path);
  metrics.close();

  bepa::checkpoint::save(checkpoint_path, result.params,
                         bepa::trainer::to_json(rc.train));
  result.vocab.save(vocab_path);

  manifest["timestamps"]["finished_utc"] = utc_timestamp();
  write_text_file(manifest_path, manifest.dump(2) + "\n");
  std::cout << "run complete: " << result.total_steps << " steps, artifacts in "
            << run_dir << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint_path,
             const std::string& corpus_path) {
  EvalContext ctx = load_eval_context(checkpoint_path, corpus_path);
  bepa::encoder::IdentityPredictor predictor;
  bepa::trainer::ValReport report = bepa::trainer::evaluate_validation(
      ctx.params, ctx.vocab, ctx.split.validation, ctx.config, predictor);
  ordered_json out;
  out["mlm"] = finite_or_null(report.mlm);
  out["alignment"] = finite_or_null(report.alignment);
  out["total"] = finite_or_null(report.mlm + ctx.config.lambda * report.alignment);
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_diagnose(const std::string& checkpoint_path,
                 const std::string& corpus_path, const std::string& out_dir,
                 const std::string& split, std::string metrics_path,
                 std::uint64_t seed) {
  EvalContext ctx = load_eval_context(checkpoint_path, corpus_path);
  const auto& sel = select_split(ctx, split);
  if (sel.empty())
    throw bepa::ConfigError("the " + split + " split has no pairs to diagnose");

  bepa::encoder::IdentityPredictor predictor;
  const auto embeddings =
      bepa::diagnostics::embed_pairs(ctx.params, ctx.vocab, sel, predictor);
  const bepa::numerics::Matrix pooled =
      bepa::diagnostics::pool_embeddings(embeddings);

  fs::create_directories(out_dir);

  bepa::diagnostics::PcaSpectrum spectrum =
      bepa::diagnostics::pca_spectrum(pooled);
  ordered_json spectrum_json;
  spectrum_json["variance_ratios"] = std::vector<double>(
      spectrum.ratios.data(), spectrum.ratios.data() + spectrum.ratios.size());
  spectrum_json["first_component_share"] = spectrum.ratios(0);
  spectrum_json["rankme"] = bepa::diagnostics::rankme(pooled);
  write_text_file((fs::path(out_dir) / "spectrum.json").string(),
                  spectrum_json.dump(2) + "\n");

  bepa::Rng rng = bepa::Rng::stream(seed, "diagnose");
  const auto rows = bepa::diagnostics::cosine_category_report(
      sel, embeddings, bepa::diagnostics::kNegSamplesPerSide, rng);
  write_text_file((fs::path(out_dir) / "cosine_categories.tsv").string(),
                  bepa::diagnostics::cosine_report_tsv(rows));

  if (metrics_path.empty()) {
    metrics_path =
        (fs::path(checkpoint_path).parent_path() / "metrics.jsonl").string();
  }
  bepa::diagnostics::PosNegCurves curves =
      bepa::diagnostics::pos_neg_curves_from_jsonl(metrics_path);
  ordered_json curves_json;
  curves_json["epochs"] = curves.epochs;
  auto null_safe = [](const std::vector<double>& v) {
    ordered_json arr = ordered_json::array();
    for (double x : v) arr.push_back(finite_or_null(x));
    return arr;
  };
  curves_json["mean_pos_cosine"] = null_safe(curves.mean_pos_cosine);
  curves_json["mean_neg_cosine"] = null_safe(curves.mean_neg_cosine);
  write_text_file((fs::path(out_dir) / "curves.json").string(),
                  curves_json.dump(2) + "\n");

  bepa::diagnostics::export_embeddings(
      sel, embeddings, (fs::path(out_dir) / "embeddings.jsonl").string());

  std::cout << "wrote cosine_categories.tsv, spectrum.json, curves.json, "
               "embeddings.jsonl to "
            << out_dir << "\n";
  return 0;
}

int cmd_export_embeddings(const std::string& checkpoint_path,
                          const std::string& corpus_path,
                          const std::string& out, const std::string& split) {
  EvalContext ctx = load_eval_context(checkpoint_path, corpus_path);
  const auto& sel = select_split(ctx, split);
  if (sel.empty())
    throw bepa::ConfigError("the " + split + " split has no pairs to export");
  bepa::encoder::IdentityPredictor predictor;
  const auto embeddings =
      bepa::diagnostics::embed_pairs(ctx.params, ctx.vocab, sel, predictor);
  bepa::diagnostics::export_embeddings(sel, embeddings, out);
  std::cout << "wrote " << 2 * sel.size() << " records to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BEPA sentence-pair pretraining toolkit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-corpus",
                                 "Generate a synthetic parallel corpus TSV");
  int gen_languages = 2, gen_pairs = 1000, gen_min_len = 4, gen_max_len = 10;
  int gen_base_vocab = 40;
  std::uint64_t gen_seed = 0;
  bool gen_paraphrase = false;
  std::string gen_out;
  gen->add_option("--languages", gen_languages, "Number of synthetic languages");
  gen->add_option("--pairs", gen_pairs, "Number of sentence pairs");
  gen->add_option("--min-len", gen_min_len, "Minimum sentence length in tokens");
  gen->add_option("--max-len", gen_max_len, "Maximum sentence length in tokens");
  gen->add_option("--base-vocab", gen_base_vocab, "Base vocabulary size");
  gen->add_option("--seed", gen_seed, "Corpus sampling seed");
  gen->add_flag("--paraphrase", gen_paraphrase,
                "Same-language paraphrase pairs instead of translations");
  gen->add_option("--out", gen_out, "Output TSV path")->required();

  auto* train = app.add_subcommand("train", "Train a model into a run directory");
  std::string train_config, train_corpus, train_run_dir;
  train->add_option("--config", train_config, "JSON config file")->required();
  train->add_option("--corpus", train_corpus, "Corpus TSV")->required();
  train->add_option("--run-dir", train_run_dir,
                    "Output directory for manifest, metrics, checkpoint")
      ->required();

  auto* eval = app.add_subcommand(
      "eval", "Print validation losses for a checkpoint as JSON");
  std::string eval_checkpoint, eval_corpus;
  eval->add_option("--checkpoint", eval_checkpoint, "Checkpoint file")
      ->required();
  eval->add_option("--corpus", eval_corpus, "Corpus TSV")->required();

  auto* diagnose = app.add_subcommand(
      "diagnose", "Write collapse-diagnostic reports for a checkpoint");
  std::string diag_checkpoint, diag_corpus, diag_out_dir, diag_metrics;
  std::string diag_split = "validation";
  std::uint64_t diag_seed = 0;
  diagnose->add_option("--checkpoint", diag_checkpoint, "Checkpoint file")
      ->required();
  diagnose->add_option("--corpus", diag_corpus, "Corpus TSV")->required();
  diagnose->add_option("--out-dir", diag_out_dir, "Report output directory")
      ->required();
  diagnose
      ->add_option("--split", diag_split, "Which pairs to diagnose")
      ->check(CLI::IsMember({"validation", "train", "all"}));
  diagnose->add_option(
      "--metrics", diag_metrics,
      "Metrics log for the cosine curves (default: next to the checkpoint)");
  diagnose->add_option("--seed", diag_seed, "Unrelated-pair sampling seed");

  auto* export_cmd = app.add_subcommand(
      "export-embeddings", "Export occluded [CLS] embeddings as JSONL");
  std::string exp_checkpoint, exp_corpus, exp_out;
  std::string exp_split = "validation";
  export_cmd->add_option("--checkpoint", exp_checkpoint, "Checkpoint file")
      ->required();
  export_cmd->add_option("--corpus", exp_corpus, "Corpus TSV")->required();
  export_cmd->add_option("--out", exp_out, "Output JSONL path")->required();
  export_cmd->add_option("--split", exp_split, "Which pairs to export")
      ->check(CLI::IsMember({"validation", "train", "all"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) {
      return cmd_gen_corpus(gen_languages, gen_pairs, gen_min_len, gen_max_len,
                            gen_base_vocab, gen_seed, gen_paraphrase, gen_out);
    }
    if (train->parsed()) {
      return cmd_train(train_config, train_corpus, train_run_dir);
    }
    if (eval->parsed()) {
      return cmd_eval(eval_checkpoint, eval_corpus);
    }
    if (diagnose->parsed()) {
      return cmd_diagnose(diag_checkpoint, diag_corpus, diag_out_dir,
                          diag_split, diag_metrics, diag_seed);
    }
    if (export_cmd->parsed()) {
      return cmd_export_embeddings(exp_checkpoint, exp_corpus, exp_out,
                                   exp_split);
    }
  } catch (const bepa::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const bepa::InvalidArgument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
