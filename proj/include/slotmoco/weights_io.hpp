#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slotmoco/common.hpp"

namespace slotmoco {

struct EncoderConfig {
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 128;
  int max_len = 64;
  int vocab_size = 0;
  int n_segments = 2;
  double dropout_prob = 0.3;

  void validate() const;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

// Binary container: magic "SLOTMOCO", u32 version, the encoder config as
// fixed-order 64-bit integers (dropout_prob stored as its IEEE-754 bit
// pattern), then named arrays. Everything little-endian; array payloads are
// 64-bit floats.
struct NamedArray {
  std::string name;
  std::vector<std::int64_t> dims;  // rank = dims.size()
  std::vector<double> data;
};

void write_weights_file(const std::string& path, const EncoderConfig& config,
                        const std::vector<NamedArray>& arrays);

struct WeightsFile {
  EncoderConfig config;
  std::vector<NamedArray> arrays;

  const NamedArray& get(const std::string& name) const;
  const NamedArray* find(const std::string& name) const;
};

WeightsFile read_weights_file(const std::string& path);

// Flat view over one parameter tensor, used by the optimizer, the momentum
// update, serialization, and the gradient checker.
struct ParamRef {
  std::string name;
  double* data = nullptr;
  std::int64_t rows = 0;
  std::int64_t cols = 0;  // 1 for vectors
  int rank = 2;
  bool decay = true;  // weight decay applies (matrices yes, vectors no)

  std::int64_t size() const { return rows * cols; }
};

NamedArray to_named_array(const ParamRef& ref);
void load_into(const NamedArray& arr, const ParamRef& ref);

}  // namespace slotmoco
