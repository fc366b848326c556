#include "bepa/tokenize.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>

#include "bepa/errors.hpp"

namespace bepa::tokenize {

namespace {
constexpr std::array<const char*, kNumSpecials> kSpecialTokens = {
    "[CLS]", "[SEP]", "[PAD]", "[MASK]"};
}

void Vocab::index_tokens() {
  token_to_id_.clear();
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
    token_to_id_[id_to_token_[i]] = static_cast<int>(i);
  }
}

Vocab Vocab::build(const std::vector<corpus::ParallelPair>& pairs) {
  std::set<std::string> tokens;
  for (const auto& p : pairs) {
    for (const auto* text : {&p.text_a, &p.text_b}) {
      for (auto& t : corpus::split_tokens(*text)) tokens.insert(std::move(t));
    }
  }
  Vocab v;
  for (const char* s : kSpecialTokens) {
    if (tokens.count(s)) {
      throw InvalidArgument(std::string("corpus contains reserved token ") + s);
    }
    v.id_to_token_.emplace_back(s);
  }
  // std::set iteration is already lexicographic by byte order.
  for (const auto& t : tokens) v.id_to_token_.push_back(t);
  v.index_tokens();
  return v;
}

int Vocab::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  if (it == token_to_id_.end()) {
    throw InvalidArgument("unknown token '" + token + "'");
  }
  return it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) {
    throw InvalidArgument("token id " + std::to_string(id) + " out of range");
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(const std::string& text) const {
  std::vector<int> ids;
  for (const auto& t : corpus::split_tokens(text)) ids.push_back(id(t));
  return ids;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocab file: " + path);
  for (int i = 0; i < size(); ++i) {
    out << id_to_token_[static_cast<std::size_t>(i)] << '\t' << i << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocab file: " + path);
  Vocab v;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ParseError("expected 'token TAB id'", line_no);
    }
    const std::string token = line.substr(0, tab);
    int id = 0;
    try {
      id = std::stoi(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw ParseError("bad id field", line_no);
    }
    if (id != static_cast<int>(line_no) - 1) {
      throw ParseError("ids must be contiguous from 0", line_no);
    }
    v.id_to_token_.push_back(token);
  }
  if (v.id_to_token_.size() < kNumSpecials) {
    throw ParseError("vocab is missing special tokens", line_no);
  }
  for (int i = 0; i < kNumSpecials; ++i) {
    if (v.id_to_token_[static_cast<std::size_t>(i)] != kSpecialTokens[i]) {
      throw ParseError("special tokens out of order", static_cast<std::size_t>(i) + 1);
    }
  }
  v.index_tokens();
  return v;
}

PackedExample pack_pair(const std::vector<int>& ids_a,
                        const std::vector<int>& ids_b, int max_len) {
  const std::size_t need = ids_a.size() + ids_b.size() + 4;
  if (max_len < 0 || need > static_cast<std::size_t>(max_len)) {
    throw InvalidArgument("packed pair needs " + std::to_string(need) +
                          " positions but max_len is " +
                          std::to_string(max_len));
  }
  PackedExample ex;
  ex.len_a = static_cast<int>(ids_a.size());
  ex.len_b = static_cast<int>(ids_b.size());
  ex.cls_a_pos = 0;
  ex.cls_b_pos = ex.len_a + 2;

  ex.ids.reserve(static_cast<std::size_t>(max_len));
  ex.ids.push_back(kClsId);
  ex.ids.insert(ex.ids.end(), ids_a.begin(), ids_a.end());
  ex.ids.push_back(kSepId);
  ex.ids.push_back(kClsId);
  ex.ids.insert(ex.ids.end(), ids_b.begin(), ids_b.end());
  ex.ids.push_back(kSepId);
  ex.ids.resize(static_cast<std::size_t>(max_len), kPadId);

  ex.segment_ids.assign(static_cast<std::size_t>(max_len), 0);
  for (int p = ex.cls_b_pos; p < ex.len_a + ex.len_b + 4; ++p) {
    ex.segment_ids[static_cast<std::size_t>(p)] = 1;
  }
  ex.padding_mask.assign(static_cast<std::size_t>(max_len), 0);
  for (int p = 0; p < ex.len_a + ex.len_b + 4; ++p) {
    ex.padding_mask[static_cast<std::size_t>(p)] = 1;
  }
  return ex;
}

MlmTarget apply_mlm_corruption(const PackedExample& packed, double mask_prob,
                               int vocab_size, Rng& rng) {
  if (mask_prob < 0.0 || mask_prob > 1.0) {
    throw InvalidArgument("mask_prob must be in [0, 1]");
  }
  if (vocab_size < kNumSpecials) {
    throw InvalidArgument("vocab_size smaller than the special token set");
  }
  MlmTarget t;
  t.corrupted_ids = packed.ids;

  // Content positions: segment A body, then segment B body.
  std::vector<int> eligible;
  for (int p = 1; p <= packed.len_a; ++p) eligible.push_back(p);
  for (int p = packed.cls_b_pos + 1; p <= packed.cls_b_pos + packed.len_b; ++p) {
    eligible.push_back(p);
  }

  for (int p : eligible) {
    if (rng.uniform() >= mask_prob) continue;
    t.label_positions.push_back(p);
    t.labels.push_back(packed.ids[static_cast<std::size_t>(p)]);
    const double action = rng.uniform();
    if (action < 0.8) {
      t.corrupted_ids[static_cast<std::size_t>(p)] = kMaskId;
    } else if (action < 0.9) {
      t.corrupted_ids[static_cast<std::size_t>(p)] =
          static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(vocab_size)));
    }
    // else: keep the original id, label it anyway
  }
  return t;
}

AlignmentMasks build_alignment_masks(const PackedExample& packed) {
  const std::size_t n = packed.ids.size();
  AlignmentMasks m;
  m.mask_a.assign(n, 0);
  m.mask_b.assign(n, 0);
  for (int p = 0; p <= packed.len_a + 1; ++p) {
    m.mask_a[static_cast<std::size_t>(p)] = 1;
  }
  for (int p = packed.cls_b_pos; p <= packed.cls_b_pos + packed.len_b + 1; ++p) {
    m.mask_b[static_cast<std::size_t>(p)] = 1;
  }
  return m;
}

}  // namespace bepa::tokenize
