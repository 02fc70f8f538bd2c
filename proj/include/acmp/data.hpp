// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace acmp {

struct TokenStream {
  std::vector<uint16_t> ids;
  int64_t vocab_size = 256;
  std::string source;  // provenance
  uint64_t byte_count = 0;
  std::string split_label = "all";  // train | validation | all

  int64_t size() const { return static_cast<int64_t>(ids.size()); }
};

// Identity byte -> id mapping, vocab 256. Round-trips losslessly.
TokenStream tokenize_bytes(const std::vector<uint8_t>& bytes,
                           std::string source = "");
TokenStream tokenize_file(const std::string& path);
std::vector<uint8_t> detokenize(const TokenStream& stream);

// Contiguous tail becomes validation; no shuffling across the boundary.
std::pair<TokenStream, TokenStream> split_stream(const TokenStream& stream,
                                                 double validation_fraction,
                                                 int64_t sequence_length = 1);

// Seeded epoch-cycling iteration over every valid window offset.
class BatchPlan {
 public:
  BatchPlan(int64_t sequence_length, uint64_t seed, bool cycle = true)
      : sequence_length_(sequence_length), seed_(seed), cycle_(cycle) {}

  // Fills inputs with stream[o .. o+L) and targets with the next token at
  // each position. Returns false when a non-cycling plan is exhausted.
  bool next_batch(const TokenStream& stream, std::vector<int>& inputs,
                  std::vector<int>& targets);

  int64_t sequence_length() const { return sequence_length_; }

 private:
  void start_epoch(int64_t n_offsets);

  int64_t sequence_length_;
  uint64_t seed_;
  bool cycle_;
  std::vector<int64_t> offsets_;
  size_t cursor_ = 0;
  uint64_t epoch_ = 0;
};

// Binary sidecar: "ACTK" magic, vocab_size u32, token count u64, u16 ids.
void save_token_cache(const TokenStream& stream, const std::string& path);
TokenStream load_token_cache(const std::string& path);

}  // namespace acmp
