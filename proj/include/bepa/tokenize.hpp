#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "bepa/corpus.hpp"
#include "bepa/rng.hpp"

namespace bepa::tokenize {

// Special token ids are fixed; corpus tokens follow lexicographically.
inline constexpr int kClsId = 0;
inline constexpr int kSepId = 1;
inline constexpr int kPadId = 2;
inline constexpr int kMaskId = 3;
inline constexpr int kNumSpecials = 4;

class Vocab {
 public:
  static Vocab build(const std::vector<corpus::ParallelPair>& pairs);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int id(const std::string& token) const;
  const std::string& token(int id) const;
  std::vector<int> encode(const std::string& text) const;

  // Newline-delimited "token TAB id", specials first.
  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
  void index_tokens();
};

// [CLS_A] a1..an [SEP] [CLS_B] b1..bm [SEP] [PAD]...
struct PackedExample {
  std::vector<int> ids;
  std::vector<int> segment_ids;            // 0 through first SEP, 1 through second
  std::vector<std::uint8_t> padding_mask;  // true at non-PAD positions
  int cls_a_pos = 0;
  int cls_b_pos = 0;
  int len_a = 0;
  int len_b = 0;
};

// Throws InvalidArgument if the pair does not fit max_len; never truncates.
PackedExample pack_pair(const std::vector<int>& ids_a,
                        const std::vector<int>& ids_b, int max_len);

struct MlmTarget {
  std::vector<int> corrupted_ids;
  std::vector<int> label_positions;  // ascending
  std::vector<int> labels;           // original ids, parallel to positions
};

// 80/10/10 corruption over content positions. CLS/SEP/PAD are never eligible.
// Selected positions are always labeled, whichever corruption applies.
MlmTarget apply_mlm_corruption(const PackedExample& packed, double mask_prob,
                               int vocab_size, Rng& rng);

struct AlignmentMasks {
  std::vector<std::uint8_t> mask_a;  // true at CLS_A .. first SEP
  std::vector<std::uint8_t> mask_b;  // true at CLS_B .. second SEP
};

// Occlusion masks for the two alignment passes. Disjoint; their union is
// exactly the padding mask.
AlignmentMasks build_alignment_masks(const PackedExample& packed);

}  // namespace bepa::tokenize
