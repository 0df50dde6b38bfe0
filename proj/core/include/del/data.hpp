#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "del/tensor.hpp"

namespace del {

enum class Split { kTrain, kTest };

struct Dataset {
  Tensor images;            // [count, C, N, N], pixel bytes / 255
  std::vector<int> labels;  // class indices in [0, 10)
  Split split = Split::kTrain;

  std::int64_t count() const { return images.dim(0); }
};

/// Raw IDX container. Kept as bytes plus dimensions so that
/// serialize(parse(bytes)) reproduces the input byte-for-byte.
struct IdxFile {
  std::uint8_t dtype = 0x08;  // unsigned-byte payloads only
  std::vector<std::int64_t> dims;
  std::vector<std::uint8_t> payload;
};

IdxFile parse_idx(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> serialize_idx(const IdxFile& file);

/// Whole-file read; a gzip stream (0x1f 0x8b leader) is inflated.
std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path);

/// Four-file IDX layout, raw or .gz, searched in `dir` then `dir/mnist`.
/// Returns {train, test}.
std::pair<Dataset, Dataset> load_mnist(const std::filesystem::path& dir);

/// data_batch_1..5.bin + test_batch.bin (3073-byte records), raw or .gz,
/// searched in `dir` then `dir/cifar-10-batches-bin`. Returns {train, test}.
std::pair<Dataset, Dataset> load_cifar10(const std::filesystem::path& dir);

/// Index batches covering [0, count) in order, or in a Fisher-Yates
/// permutation drawn from Rng(seed) when shuffle is set. The final short
/// batch is kept.
std::vector<std::vector<std::int64_t>> batches(std::int64_t count, std::int64_t batch_size,
                                               std::uint64_t seed, bool shuffle);

}  // namespace del
