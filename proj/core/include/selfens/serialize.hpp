#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "selfens/adam.hpp"
#include "selfens/consistency.hpp"
#include "selfens/network.hpp"

namespace selfens {

// Tensor container (checkpoints, raw_tensor datasets, ZCA transforms):
//   "SETENSOR" | u32 version=1 | u64 count |
//   count x { u32 name_len | name bytes | u32 rank | rank x u64 extent | f32 payload }
// All integers and reals are little-endian; reals are IEEE-754 binary32.
//
// Ensemble (Z) file:
//   "SEENSEMB" | u32 version=1 | u64 rows | u64 classes | f64 alpha | u64 epoch |
//   rows x u64 counter | rows*classes f32 (row-major)
// The Z payload sits at a fixed offset so the file can be memory-mapped.

inline constexpr char kTensorMagic[8] = {'S', 'E', 'T', 'E', 'N', 'S', 'O', 'R'};
inline constexpr char kEnsembleMagic[8] = {'S', 'E', 'E', 'N', 'S', 'E', 'M', 'B'};
inline constexpr std::uint32_t kFormatVersion = 1;

using TensorRecords = std::vector<std::pair<std::string, Tensor<float>>>;

void write_tensor_container(std::ostream& out, const TensorRecords& records);
TensorRecords read_tensor_container(std::istream& in);

void save_tensors(const std::filesystem::path& path, const TensorRecords& records);
TensorRecords load_tensors(const std::filesystem::path& path);

/// Finds a record by name; throws FormatError naming it when absent.
const Tensor<float>& require_record(const TensorRecords& records, const std::string& name);

/// Parameters (by name) and, when given, Adam moments as "adam.m/<name>",
/// "adam.v/<name>" plus the scalar "adam.step".
template <typename T>
TensorRecords checkpoint_records(const NetworkParams<T>& params, const AdamState<T>* adam = nullptr);

/// Restores into `params` (whose layout fixes the expected names and shapes)
/// and, when `adam` is non-null, the optimizer moments and step.
template <typename T>
void restore_checkpoint(const TensorRecords& records, NetworkParams<T>& params, AdamState<T>* adam = nullptr);

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const NetworkParams<T>& params,
                     const AdamState<T>* adam = nullptr) {
  save_tensors(path, checkpoint_records(params, adam));
}

template <typename T>
void load_checkpoint(const std::filesystem::path& path, NetworkParams<T>& params, AdamState<T>* adam = nullptr) {
  restore_checkpoint(load_tensors(path), params, adam);
}

template <typename T>
void write_ensemble(std::ostream& out, const EnsembleState<T>& state);
template <typename T>
EnsembleState<T> read_ensemble(std::istream& in);

template <typename T>
void save_ensemble(const std::filesystem::path& path, const EnsembleState<T>& state);
template <typename T>
EnsembleState<T> load_ensemble(const std::filesystem::path& path);

}  // namespace selfens
