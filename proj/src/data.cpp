// SPDX-License-Identifier: Apache-2.0
#include "acmp/data.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace acmp {

TokenStream tokenize_bytes(const std::vector<uint8_t>& bytes,
                           std::string source) {
  TokenStream s;
  s.vocab_size = 256;
  s.source = std::move(source);
  s.byte_count = bytes.size();
  s.ids.reserve(bytes.size());
  for (uint8_t b : bytes) s.ids.push_back(b);
  return s;
}

TokenStream tokenize_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open corpus file '" + path + "'");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                             std::istreambuf_iterator<char>());
  return tokenize_bytes(bytes, path);
}

std::vector<uint8_t> detokenize(const TokenStream& stream) {
  std::vector<uint8_t> out;
  out.reserve(stream.ids.size());
  for (uint16_t id : stream.ids) {
    if (id > 255)
      throw std::invalid_argument("token id " + std::to_string(id) +
                                  " is not a byte");
    out.push_back(static_cast<uint8_t>(id));
  }
  return out;
}

std::pair<TokenStream, TokenStream> split_stream(const TokenStream& stream,
                                                 double validation_fraction,
                                                 int64_t sequence_length) {
  if (validation_fraction <= 0.0 || validation_fraction >= 1.0) {
    throw std::invalid_argument("validation_fraction must be in (0, 1)");
  }
  int64_t n = stream.size();
  if (n < 2 * (sequence_length + 1)) {
    throw std::invalid_argument(
        "stream of " + std::to_string(n) +
        " tokens is too short to split into two sequences of length " +
        std::to_string(sequence_length));
  }
  int64_t n_val = static_cast<int64_t>(
      static_cast<double>(n) * validation_fraction + 0.5);
  n_val = std::clamp<int64_t>(n_val, sequence_length + 1,
                              n - (sequence_length + 1));
  int64_t n_train = n - n_val;

  TokenStream train, val;
  train.vocab_size = val.vocab_size = stream.vocab_size;
  train.source = val.source = stream.source;
  train.byte_count = static_cast<uint64_t>(n_train);
  val.byte_count = static_cast<uint64_t>(n_val);
  train.split_label = "train";
  val.split_label = "validation";
  train.ids.assign(stream.ids.begin(), stream.ids.begin() + n_train);
  val.ids.assign(stream.ids.begin() + n_train, stream.ids.end());
  return {std::move(train), std::move(val)};
}

void BatchPlan::start_epoch(int64_t n_offsets) {
  offsets_.resize(static_cast<size_t>(n_offsets));
  std::iota(offsets_.begin(), offsets_.end(), 0);
  std::mt19937_64 rng(seed_ + epoch_);
  std::shuffle(offsets_.begin(), offsets_.end(), rng);
  cursor_ = 0;
}

bool BatchPlan::next_batch(const TokenStream& stream, std::vector<int>& inputs,
                           std::vector<int>& targets) {
  int64_t l = sequence_length_;
  int64_t n_offsets = stream.size() - l;  // window plus one target token
  if (n_offsets <= 0) {
    throw std::invalid_argument("stream of " + std::to_string(stream.size()) +
                                " tokens has no window of length " +
                                std::to_string(l));
  }
  if (offsets_.size() != static_cast<size_t>(n_offsets)) {
    start_epoch(n_offsets);
  } else if (cursor_ >= offsets_.size()) {
    if (!cycle_) return false;
    ++epoch_;
    start_epoch(n_offsets);
  }
  int64_t o = offsets_[cursor_++];
  inputs.resize(static_cast<size_t>(l));
  targets.resize(static_cast<size_t>(l));
  for (int64_t i = 0; i < l; ++i) {
    inputs[static_cast<size_t>(i)] = stream.ids[static_cast<size_t>(o + i)];
    targets[static_cast<size_t>(i)] =
        stream.ids[static_cast<size_t>(o + i + 1)];
  }
  return true;
}

namespace {
constexpr char kCacheMagic[4] = {'A', 'C', 'T', 'K'};
}

void save_token_cache(const TokenStream& stream, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os.write(kCacheMagic, 4);
  uint32_t vocab = static_cast<uint32_t>(stream.vocab_size);
  os.write(reinterpret_cast<const char*>(&vocab), sizeof(vocab));
  uint64_t count = static_cast<uint64_t>(stream.ids.size());
  os.write(reinterpret_cast<const char*>(&count), sizeof(count));
  os.write(reinterpret_cast<const char*>(stream.ids.data()),
           static_cast<std::streamsize>(count * sizeof(uint16_t)));
  if (!os) throw std::runtime_error("write to '" + path + "' failed");
}

TokenStream load_token_cache(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open token cache '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCacheMagic, 4) != 0)
    throw std::runtime_error("'" + path + "' is not an ACTK token cache");
  uint32_t vocab = 0;
  uint64_t count = 0;
  is.read(reinterpret_cast<char*>(&vocab), sizeof(vocab));
  is.read(reinterpret_cast<char*>(&count), sizeof(count));
  TokenStream s;
  s.vocab_size = vocab;
  s.source = path;
  s.ids.resize(count);
  is.read(reinterpret_cast<char*>(s.ids.data()),
          static_cast<std::streamsize>(count * sizeof(uint16_t)));
  if (!is) throw std::runtime_error("truncated token cache '" + path + "'");
  for (uint16_t id : s.ids) {
    if (id >= vocab)
      throw std::runtime_error("token cache '" + path +
                               "' contains id outside its vocabulary");
  }
  return s;
}

}  // namespace acmp
