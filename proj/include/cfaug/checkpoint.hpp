#pragma once

// Binary checkpoint container:
//   magic "CFAUGCK1" | u64 header length | JSON header | raw tensor data | u64 FNV-1a
// The header carries the model config, the vocabulary, the scalar type and the
// ordered tensor index (name, rows, cols). Tensor data is column-major.

#include <filesystem>
#include <stdexcept>
#include <string>

#include "cfaug/corpus.hpp"
#include "cfaug/disae.hpp"

namespace cfaug {

class CheckpointError : public std::runtime_error {
 public:
  explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

template <typename Scalar>
struct Checkpoint {
  DisAEModel<Scalar> model;
  Vocabulary vocab;
};

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const DisAEModel<Scalar>& model,
                     const Vocabulary& vocab);

/// Either returns a complete model or throws CheckpointError.
template <typename Scalar>
Checkpoint<Scalar> load_checkpoint(const std::filesystem::path& path);

}  // namespace cfaug
