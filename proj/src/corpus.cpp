#include "bepa/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "bepa/errors.hpp"

namespace bepa::corpus {

const std::string& LanguageSpec::surface(const std::string& base_token) const {
  auto it = token_map.find(base_token);
  if (it == token_map.end()) {
    throw InvalidArgument("language " + id + " has no mapping for token '" +
                          base_token + "'");
  }
  return it->second;
}

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<std::string> default_base_vocab(std::size_t n) {
  std::vector<std::string> v;
  v.reserve(n);
  for (std::size_t i = 0; i < n; ++i) v.push_back("w" + std::to_string(i));
  return v;
}

LanguageSpec generate_language(std::uint64_t seed,
                               const std::vector<std::string>& base_vocab,
                               bool use_permutation) {
  if (base_vocab.empty()) {
    throw InvalidArgument("generate_language: base vocabulary is empty");
  }
  LanguageSpec lang;
  lang.id = "a" + std::to_string(seed);
  for (const auto& base : base_vocab) {
    auto [it, inserted] = lang.token_map.emplace(base, lang.id + "_" + base);
    if (!inserted) {
      throw InvalidArgument("generate_language: duplicate base token '" + base +
                            "'");
    }
  }
  lang.permutation =
      use_permutation ? Permutation::kReverse : Permutation::kIdentity;
  return lang;
}

namespace {

std::vector<std::string> permute(const std::vector<std::string>& tokens,
                                 Permutation p) {
  if (p == Permutation::kIdentity) return tokens;
  return {tokens.rbegin(), tokens.rend()};
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::vector<std::string> sample_base_sentence(
    const std::vector<std::string>& base_vocab, std::size_t min_len,
    std::size_t max_len, Rng& rng) {
  const std::size_t len = min_len + rng.uniform_int(max_len - min_len + 1);
  std::vector<std::string> tokens;
  tokens.reserve(len);
  for (std::size_t i = 0; i < len; ++i) {
    tokens.push_back(base_vocab[rng.uniform_int(base_vocab.size())]);
  }
  return tokens;
}

std::vector<std::string> shared_base_vocab(
    const std::vector<LanguageSpec>& languages) {
  const auto& first = languages.front().token_map;
  std::vector<std::string> base;
  base.reserve(first.size());
  for (const auto& [b, _] : first) base.push_back(b);
  for (const auto& lang : languages) {
    if (lang.token_map.size() != base.size()) {
      throw InvalidArgument("languages do not share a base vocabulary");
    }
    for (const auto& b : base) {
      if (!lang.token_map.count(b)) {
        throw InvalidArgument("language " + lang.id +
                              " is missing base token '" + b + "'");
      }
    }
  }
  return base;
}

void check_length_range(std::size_t min_len, std::size_t max_len) {
  if (min_len == 0 || min_len > max_len) {
    throw InvalidArgument("invalid sentence length range [" +
                          std::to_string(min_len) + ", " +
                          std::to_string(max_len) + "]");
  }
}

}  // namespace

std::string realize(const LanguageSpec& lang,
                    const std::vector<std::string>& base_tokens) {
  std::vector<std::string> surface;
  surface.reserve(base_tokens.size());
  for (const auto& t : permute(base_tokens, lang.permutation)) {
    surface.push_back(lang.surface(t));
  }
  return join(surface);
}

std::vector<ParallelPair> generate_parallel_corpus(
    const std::vector<LanguageSpec>& languages, std::size_t n_pairs,
    std::size_t min_len, std::size_t max_len, std::uint64_t seed) {
  if (languages.size() < 2) {
    throw InvalidArgument("parallel corpus needs at least two languages");
  }
  check_length_range(min_len, max_len);
  const auto base = shared_base_vocab(languages);
  const std::size_t n_langs = languages.size();

  Rng rng(splitmix64(seed));
  std::vector<ParallelPair> pairs;
  pairs.reserve(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    // Ordered language pair, uniform over the n*(n-1) possibilities.
    const std::uint64_t code = rng.uniform_int(n_langs * (n_langs - 1));
    const std::size_t ia = code / (n_langs - 1);
    std::size_t ib = code % (n_langs - 1);
    if (ib >= ia) ++ib;
    const auto sentence = sample_base_sentence(base, min_len, max_len, rng);
    pairs.push_back({realize(languages[ia], sentence),
                     realize(languages[ib], sentence), languages[ia].id,
                     languages[ib].id, true});
  }
  return pairs;
}

std::vector<ParallelPair> generate_paraphrase_corpus(
    const std::vector<LanguageSpec>& languages, std::size_t n_pairs,
    std::size_t min_len, std::size_t max_len, std::uint64_t seed) {
  if (languages.empty()) {
    throw InvalidArgument("paraphrase corpus needs at least one language");
  }
  check_length_range(min_len, max_len);
  const auto base = shared_base_vocab(languages);

  Rng rng(splitmix64(seed));
  std::vector<ParallelPair> pairs;
  pairs.reserve(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const auto& lang = languages[rng.uniform_int(languages.size())];
    const auto sentence = sample_base_sentence(base, min_len, max_len, rng);
    // Two surface realizations of one meaning: base order and reversed order,
    // through the same token map.
    LanguageSpec forward = lang;
    forward.permutation = Permutation::kIdentity;
    LanguageSpec backward = lang;
    backward.permutation = Permutation::kReverse;
    pairs.push_back({realize(forward, sentence), realize(backward, sentence),
                     lang.id, lang.id, true});
  }
  return pairs;
}

std::vector<ParallelPair> load_parallel_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file: " + path);

  std::vector<ParallelPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      throw ParseError("empty line in corpus", line_no);
    }
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 4) {
      throw ParseError("expected 4 tab-separated fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    }
    if (fields[2].empty() || fields[3].empty()) {
      throw ParseError("empty language field", line_no);
    }
    pairs.push_back({fields[0], fields[1], fields[2], fields[3], true});
  }
  return pairs;
}

void save_parallel_tsv(const std::vector<ParallelPair>& pairs,
                       const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write corpus file: " + path);
  for (const auto& p : pairs) {
    for (const std::string* f : {&p.text_a, &p.text_b, &p.lang_a, &p.lang_b}) {
      if (f->find('\t') != std::string::npos ||
          f->find('\n') != std::string::npos) {
        throw InvalidArgument("corpus field contains a tab or newline");
      }
    }
    out << p.text_a << '\t' << p.text_b << '\t' << p.lang_a << '\t' << p.lang_b
        << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<std::size_t> eligible_indices(const std::vector<ParallelPair>& pairs,
                                          PackingMode mode) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    if (!p.related) continue;
    if (mode == PackingMode::kMonolingual && p.lang_a != p.lang_b) continue;
    idx.push_back(i);
  }
  return idx;
}

std::vector<std::size_t> sample_training_batch_indices(
    const std::vector<ParallelPair>& pairs, PackingMode mode,
    std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
  auto idx = eligible_indices(pairs, mode);
  if (idx.empty() && mode == PackingMode::kMonolingual) {
    throw ConfigError(
        "monolingual mode requires same-language related pairs and the corpus "
        "has none");
  }
  if (batch_size > idx.size()) {
    throw InvalidArgument("batch_size " + std::to_string(batch_size) +
                          " exceeds eligible pair count " +
                          std::to_string(idx.size()));
  }
  // Partial Fisher-Yates: first batch_size slots end up a uniform sample
  // without replacement.
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t j = i + rng.uniform_int(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(batch_size);
  return idx;
}

std::vector<ParallelPair> sample_training_batch(
    const std::vector<ParallelPair>& pairs, PackingMode mode,
    std::size_t batch_size, Rng& rng) {
  std::vector<ParallelPair> batch;
  batch.reserve(batch_size);
  for (auto i : sample_training_batch_indices(pairs, mode, batch_size, rng)) {
    batch.push_back(pairs[i]);
  }
  return batch;
}

}  // namespace bepa::corpus
