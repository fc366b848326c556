#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bepa/rng.hpp"

namespace bepa::corpus {

// Fixed reordering applied to token positions when a sentence is realized.
enum class Permutation { kIdentity, kReverse };

// A synthetic cipher language: a bijection from base-vocabulary tokens to
// this language's surface tokens, plus an optional word-order rule.
struct LanguageSpec {
  std::string id;
  std::map<std::string, std::string> token_map;  // base token -> surface token
  Permutation permutation = Permutation::kIdentity;

  const std::string& surface(const std::string& base_token) const;
};

struct ParallelPair {
  std::string text_a;
  std::string text_b;
  std::string lang_a;
  std::string lang_b;
  bool related = true;
};

enum class PackingMode { kMonolingual, kBilingual };

// Whitespace tokenization; runs of whitespace collapse, empty text -> no tokens.
std::vector<std::string> split_tokens(const std::string& text);

// "w0".."w{n-1}".
std::vector<std::string> default_base_vocab(std::size_t n);

// Deterministic language with id "a<seed>" and surface forms
// "<id>_<basetoken>". Distinct seeds give disjoint surface vocabularies.
LanguageSpec generate_language(std::uint64_t seed,
                               const std::vector<std::string>& base_vocab,
                               bool use_permutation);

// Apply the language's permutation and token_map to a base-token sentence.
std::string realize(const LanguageSpec& lang,
                    const std::vector<std::string>& base_tokens);

// Related cross-language pairs: for each pair an ordered language pair is
// drawn uniformly, a base sentence of length in [min_len, max_len] is drawn
// uniformly with replacement from the base vocabulary, and both sides realize
// it through their own token_map and permutation.
std::vector<ParallelPair> generate_parallel_corpus(
    const std::vector<LanguageSpec>& languages, std::size_t n_pairs,
    std::size_t min_len, std::size_t max_len, std::uint64_t seed);

// Related same-language pairs for monolingual training: each meaning is
// realized twice in one language, once in base order and once reversed.
std::vector<ParallelPair> generate_paraphrase_corpus(
    const std::vector<LanguageSpec>& languages, std::size_t n_pairs,
    std::size_t min_len, std::size_t max_len, std::uint64_t seed);

// TSV with columns text_a, text_b, lang_a, lang_b. UTF-8, newline-delimited.
std::vector<ParallelPair> load_parallel_tsv(const std::string& path);
void save_parallel_tsv(const std::vector<ParallelPair>& pairs,
                       const std::string& path);

// Indices of pairs eligible for a packing mode: monolingual wants related
// pairs with lang_a == lang_b, bilingual takes related pairs as-is.
std::vector<std::size_t> eligible_indices(const std::vector<ParallelPair>& pairs,
                                          PackingMode mode);

// batch_size distinct eligible indices, uniform without replacement.
std::vector<std::size_t> sample_training_batch_indices(
    const std::vector<ParallelPair>& pairs, PackingMode mode,
    std::size_t batch_size, Rng& rng);

std::vector<ParallelPair> sample_training_batch(
    const std::vector<ParallelPair>& pairs, PackingMode mode,
    std::size_t batch_size, Rng& rng);

}  // namespace bepa::corpus
