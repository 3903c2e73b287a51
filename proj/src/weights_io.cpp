#include "slotmoco/weights_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace slotmoco {

void EncoderConfig::validate() const {
  if (d_model < 1 || n_layers < 1 || n_heads < 1 || d_ff < 1 || max_len < 1 || vocab_size < 1 || n_segments < 1) {
    throw DataError("encoder config: all dimensions must be >= 1");
  }
  if (d_model % n_heads != 0) {
    throw DataError("encoder config: d_model must be divisible by n_heads");
  }
  if (!(dropout_prob >= 0.0 && dropout_prob < 1.0)) {
    throw DataError("encoder config: dropout_prob must be in [0, 1)");
  }
}

namespace {

constexpr char kMagic[8] = {'S', 'L', 'O', 'T', 'M', 'O', 'C', 'O'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_i64(std::ostream& out, std::int64_t v) {
  std::uint64_t u = static_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& out, double v) { put_i64(out, std::bit_cast<std::int64_t>(v)); }

bool get_bytes(std::istream& in, unsigned char* b, std::size_t n) {
  in.read(reinterpret_cast<char*>(b), static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(in.gcount()) == n;
}

std::uint32_t get_u32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  if (!get_bytes(in, b, 4)) throw DataError("weights file truncated while reading " + what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::int64_t get_i64(std::istream& in, const std::string& what) {
  unsigned char b[8];
  if (!get_bytes(in, b, 8)) throw DataError("weights file truncated while reading " + what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return static_cast<std::int64_t>(v);
}

double get_f64(std::istream& in, const std::string& what) {
  return std::bit_cast<double>(get_i64(in, what));
}

}  // namespace

void write_weights_file(const std::string& path, const EncoderConfig& config,
                        const std::vector<NamedArray>& arrays) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write weights file: " + path);
  out.write(kMagic, 8);
  put_u32(out, kVersion);
  put_i64(out, config.d_model);
  put_i64(out, config.n_layers);
  put_i64(out, config.n_heads);
  put_i64(out, config.d_ff);
  put_i64(out, config.max_len);
  put_i64(out, config.vocab_size);
  put_i64(out, config.n_segments);
  put_i64(out, std::bit_cast<std::int64_t>(config.dropout_prob));
  for (const NamedArray& arr : arrays) {
    put_u32(out, static_cast<std::uint32_t>(arr.name.size()));
    out.write(arr.name.data(), static_cast<std::streamsize>(arr.name.size()));
    put_u32(out, static_cast<std::uint32_t>(arr.dims.size()));
    std::int64_t expect = 1;
    for (std::int64_t d : arr.dims) {
      put_i64(out, d);
      expect *= d;
    }
    if (expect != static_cast<std::int64_t>(arr.data.size())) {
      throw DataError("array " + arr.name + ": dims do not match data size");
    }
    for (double v : arr.data) put_f64(out, v);
  }
  if (!out) throw DataError("write failed: " + path);
}

WeightsFile read_weights_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open weights file: " + path);
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kMagic, 8) != 0) {
    throw DataError(path + ": not a SLOTMOCO weights file");
  }
  std::uint32_t version = get_u32(in, "version");
  if (version != kVersion) {
    throw DataError(path + ": unsupported weights version " + std::to_string(version));
  }
  WeightsFile wf;
  wf.config.d_model = static_cast<int>(get_i64(in, "d_model"));
  wf.config.n_layers = static_cast<int>(get_i64(in, "n_layers"));
  wf.config.n_heads = static_cast<int>(get_i64(in, "n_heads"));
  wf.config.d_ff = static_cast<int>(get_i64(in, "d_ff"));
  wf.config.max_len = static_cast<int>(get_i64(in, "max_len"));
  wf.config.vocab_size = static_cast<int>(get_i64(in, "vocab_size"));
  wf.config.n_segments = static_cast<int>(get_i64(in, "n_segments"));
  wf.config.dropout_prob = get_f64(in, "dropout_prob");
  wf.config.validate();

  while (true) {
    unsigned char probe;
    if (!get_bytes(in, &probe, 1)) break;  // clean EOF at an array boundary
    unsigned char rest[3];
    if (!get_bytes(in, rest, 3)) throw DataError(path + ": truncated array header");
    std::uint32_t name_len = probe | (static_cast<std::uint32_t>(rest[0]) << 8) |
                             (static_cast<std::uint32_t>(rest[1]) << 16) |
                             (static_cast<std::uint32_t>(rest[2]) << 24);
    if (name_len == 0 || name_len > 4096) throw DataError(path + ": bad array name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (static_cast<std::uint32_t>(in.gcount()) != name_len) {
      throw DataError(path + ": truncated array name");
    }
    NamedArray arr;
    arr.name = name;
    std::uint32_t rank = get_u32(in, "rank of " + name);
    if (rank == 0 || rank > 8) throw DataError(path + ": bad rank for array " + name);
    std::int64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      std::int64_t d = get_i64(in, "dims of " + name);
      if (d <= 0) throw DataError(path + ": bad dimension for array " + name);
      arr.dims.push_back(d);
      count *= d;
    }
    arr.data.resize(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) {
      arr.data[static_cast<std::size_t>(i)] = get_f64(in, "data of " + name);
    }
    wf.arrays.push_back(std::move(arr));
  }
  return wf;
}

const NamedArray* WeightsFile::find(const std::string& name) const {
  for (const NamedArray& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

const NamedArray& WeightsFile::get(const std::string& name) const {
  const NamedArray* a = find(name);
  if (!a) throw DataError("weights file missing array: " + name);
  return *a;
}

NamedArray to_named_array(const ParamRef& ref) {
  NamedArray arr;
  arr.name = ref.name;
  if (ref.rank == 1) {
    arr.dims = {ref.rows};
  } else {
    arr.dims = {ref.rows, ref.cols};
  }
  arr.data.assign(ref.data, ref.data + ref.size());
  return arr;
}

void load_into(const NamedArray& arr, const ParamRef& ref) {
  std::vector<std::int64_t> expect = ref.rank == 1 ? std::vector<std::int64_t>{ref.rows}
                                                   : std::vector<std::int64_t>{ref.rows, ref.cols};
  if (arr.dims != expect) {
    throw DataError("array " + arr.name + ": shape mismatch against header config");
  }
  std::copy(arr.data.begin(), arr.data.end(), ref.data);
}

}  // namespace slotmoco
