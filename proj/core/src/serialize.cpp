#include "selfens/serialize.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace selfens {

namespace {

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(U)> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    throw FormatError(std::string("truncated file while reading ") + what);
  }
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

void put_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }
double get_f64(std::istream& in, const char* what) { return std::bit_cast<double>(get_le<std::uint64_t>(in, what)); }

void put_f32_block(std::ostream& out, std::span<const float> values) {
  std::vector<char> buf(values.size() * 4);
  for (std::size_t k = 0; k < values.size(); ++k) {
    const std::uint32_t u = std::bit_cast<std::uint32_t>(values[k]);
    for (std::size_t i = 0; i < 4; ++i) buf[4 * k + i] = static_cast<char>((u >> (8 * i)) & 0xFF);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

void get_f32_block(std::istream& in, std::span<float> values, const char* what) {
  std::vector<unsigned char> buf(values.size() * 4);
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
    throw FormatError(std::string("truncated payload in ") + what);
  }
  for (std::size_t k = 0; k < values.size(); ++k) {
    std::uint32_t u = 0;
    for (std::size_t i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(buf[4 * k + i]) << (8 * i);
    values[k] = std::bit_cast<float>(u);
  }
}

void check_magic(std::istream& in, const char (&magic)[8], const char* kind) {
  char got[8] = {};
  if (!in.read(got, 8)) throw FormatError(std::string("truncated ") + kind + " header");
  if (std::memcmp(got, magic, 8) != 0) throw FormatError(std::string("not a ") + kind + " file (bad magic)");
  const auto version = get_le<std::uint32_t>(in, "version");
  if (version != kFormatVersion) {
    throw FormatError(std::string(kind) + " format version " + std::to_string(version) + " is not supported");
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

// Guards against absurd allocations from corrupted headers.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 36;

}  // namespace

void write_tensor_container(std::ostream& out, const TensorRecords& records) {
  out.write(kTensorMagic, 8);
  put_le<std::uint32_t>(out, kFormatVersion);
  put_le<std::uint64_t>(out, records.size());
  for (const auto& [name, tensor] : records) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t e : tensor.shape()) put_le<std::uint64_t>(out, e);
    put_f32_block(out, tensor.data());
  }
  if (!out) throw DataError("write failed for tensor container");
}

TensorRecords read_tensor_container(std::istream& in) {
  check_magic(in, kTensorMagic, "tensor container");
  const auto count = get_le<std::uint64_t>(in, "record count");
  TensorRecords records;
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto name_len = get_le<std::uint32_t>(in, "name length");
    if (name_len > 4096) throw FormatError("implausible tensor name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw FormatError("truncated tensor name");
    const auto rank = get_le<std::uint32_t>(in, "rank");
    if (rank > 16) throw FormatError("implausible tensor rank in record '" + name + "'");
    Shape shape(rank);
    std::uint64_t elements = 1;
    for (auto& e : shape) {
      e = get_le<std::uint64_t>(in, "extent");
      elements *= e;
      if (elements > kMaxElements) throw FormatError("implausible tensor size in record '" + name + "'");
    }
    Tensor<float> t(shape);
    get_f32_block(in, t.data(), name.c_str());
    records.emplace_back(std::move(name), std::move(t));
  }
  return records;
}

void save_tensors(const std::filesystem::path& path, const TensorRecords& records) {
  auto out = open_out(path);
  write_tensor_container(out, records);
}

TensorRecords load_tensors(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_tensor_container(in);
}

const Tensor<float>& require_record(const TensorRecords& records, const std::string& name) {
  for (const auto& [n, t] : records) {
    if (n == name) return t;
  }
  throw FormatError("record '" + name + "' missing from tensor container");
}

template <typename T>
TensorRecords checkpoint_records(const NetworkParams<T>& params, const AdamState<T>* adam) {
  TensorRecords records;
  for (const auto& p : params.tensors) records.emplace_back(p.name, p.value.template cast<float>());
  if (adam != nullptr) {
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (!params.tensors[k].trainable) continue;
      records.emplace_back("adam.m/" + params.tensors[k].name, adam->m[k].template cast<float>());
      records.emplace_back("adam.v/" + params.tensors[k].name, adam->v[k].template cast<float>());
    }
    records.emplace_back("adam.step", Tensor<float>(Shape{1}, {static_cast<float>(adam->step)}));
  }
  return records;
}

template <typename T>
void restore_checkpoint(const TensorRecords& records, NetworkParams<T>& params, AdamState<T>* adam) {
  const auto load_into = [&](const std::string& name, Tensor<T>& dst) {
    const Tensor<float>& src = require_record(records, name);
    if (src.shape() != dst.shape()) {
      throw FormatError("record '" + name + "' has shape " + shape_string(src.shape()) + ", expected " +
                        shape_string(dst.shape()));
    }
    dst = src.template cast<T>();
  };
  for (auto& p : params.tensors) load_into(p.name, p.value);
  if (adam != nullptr) {
    if (adam->m.size() != params.size()) *adam = AdamState<T>::for_params(params, adam->beta2, adam->epsilon);
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (!params.tensors[k].trainable) continue;
      load_into("adam.m/" + params.tensors[k].name, adam->m[k]);
      load_into("adam.v/" + params.tensors[k].name, adam->v[k]);
    }
    adam->step = static_cast<std::uint64_t>(require_record(records, "adam.step")[0]);
  }
}

template <typename T>
void write_ensemble(std::ostream& out, const EnsembleState<T>& state) {
  out.write(kEnsembleMagic, 8);
  put_le<std::uint32_t>(out, kFormatVersion);
  put_le<std::uint64_t>(out, state.rows());
  put_le<std::uint64_t>(out, state.classes());
  put_f64(out, state.alpha());
  put_le<std::uint64_t>(out, state.epoch());
  for (std::uint64_t c : state.counters()) put_le<std::uint64_t>(out, c);
  const Tensor<float> z = state.z().template cast<float>();
  put_f32_block(out, z.data());
  if (!out) throw DataError("write failed for ensemble file");
}

template <typename T>
EnsembleState<T> read_ensemble(std::istream& in) {
  check_magic(in, kEnsembleMagic, "ensemble");
  const auto rows = get_le<std::uint64_t>(in, "rows");
  const auto classes = get_le<std::uint64_t>(in, "classes");
  if (classes == 0 || rows > kMaxElements || rows * classes > kMaxElements) {
    throw FormatError("implausible ensemble dimensions");
  }
  const double alpha = get_f64(in, "alpha");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw FormatError("ensemble alpha outside [0,1)");
  const auto epoch = get_le<std::uint64_t>(in, "epoch");
  std::vector<std::uint64_t> counters(rows);
  for (auto& c : counters) c = get_le<std::uint64_t>(in, "counter");
  Tensor<float> z(Shape{rows, classes});
  get_f32_block(in, z.data(), "ensemble matrix");
  return EnsembleState<T>::from_parts(z.template cast<T>(), alpha, std::move(counters), epoch);
}

template <typename T>
void save_ensemble(const std::filesystem::path& path, const EnsembleState<T>& state) {
  auto out = open_out(path);
  write_ensemble(out, state);
}

template <typename T>
EnsembleState<T> load_ensemble(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_ensemble<T>(in);
}

#define SELFENS_INSTANTIATE(T)                                                                  \
  template TensorRecords checkpoint_records(const NetworkParams<T>&, const AdamState<T>*);     \
  template void restore_checkpoint(const TensorRecords&, NetworkParams<T>&, AdamState<T>*);    \
  template void write_ensemble(std::ostream&, const EnsembleState<T>&);                        \
  template EnsembleState<T> read_ensemble<T>(std::istream&);                                   \
  template void save_ensemble(const std::filesystem::path&, const EnsembleState<T>&);         \
  template EnsembleState<T> load_ensemble<T>(const std::filesystem::path&);

SELFENS_INSTANTIATE(float)
SELFENS_INSTANTIATE(double)
#undef SELFENS_INSTANTIATE

}  // namespace selfens
