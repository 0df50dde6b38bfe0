#include "del/data.hpp"

#include <cstring>
#include <fstream>
#include <string>

#include <zlib.h>

#include "del/common.hpp"
#include "del/rng.hpp"

namespace del {
namespace {

namespace fs = std::filesystem;

std::vector<std::uint8_t> read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& bytes,
                                 const std::string& origin) {
  z_stream zs{};
  // 15 + 32: max window, auto-detect zlib vs gzip framing.
  if (inflateInit2(&zs, 15 + 32) != Z_OK) throw IoError("zlib init failed");
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  zs.next_in = const_cast<Bytef*>(bytes.data());
  zs.avail_in = static_cast<uInt>(bytes.size());
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = buf;
    zs.avail_out = sizeof buf;
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw IoError("gzip decompression failed for '" + origin + "'");
    }
    out.insert(out.end(), buf, buf + (sizeof buf - zs.avail_out));
  }
  inflateEnd(&zs);
  return out;
}

/// First existing candidate among name and name.gz under each base dir.
fs::path locate(const std::vector<fs::path>& bases, const std::string& name) {
  for (const auto& base : bases) {
    for (const auto& candidate : {base / name, base / (name + ".gz")}) {
      if (fs::exists(candidate)) return candidate;
    }
  }
  std::string hint = "missing dataset file '" + name + "'; looked in";
  for (const auto& base : bases) hint += " '" + base.string() + "'";
  throw IoError(hint);
}

std::uint32_t read_be32(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

void check_labels(const std::vector<int>& labels, const std::string& origin) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= 10)
      throw IoError("label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                    " in '" + origin + "' is outside [0, 10)");
  }
}

Dataset mnist_split(const fs::path& image_path, const fs::path& label_path, Split split) {
  const IdxFile images = parse_idx(read_maybe_gzip(image_path));
  const IdxFile labels = parse_idx(read_maybe_gzip(label_path));
  if (images.dims.size() != 3)
    throw IoError("'" + image_path.string() + "' is not a rank-3 IDX image file");
  if (labels.dims.size() != 1)
    throw IoError("'" + label_path.string() + "' is not a rank-1 IDX label file");
  if (images.dims[0] != labels.dims[0])
    throw IoError("count mismatch: " + std::to_string(images.dims[0]) + " images vs " +
                  std::to_string(labels.dims[0]) + " labels");

  const std::int64_t count = images.dims[0];
  const std::int64_t rows = images.dims[1];
  const std::int64_t cols = images.dims[2];
  Dataset ds;
  ds.split = split;
  ds.images = Tensor({count, 1, rows, cols});
  double* px = ds.images.data();
  for (std::int64_t i = 0; i < ds.images.size(); ++i)
    px[i] = static_cast<double>(images.payload[static_cast<std::size_t>(i)]) / 255.0;
  ds.labels.assign(labels.payload.begin(), labels.payload.end());
  check_labels(ds.labels, label_path.string());
  return ds;
}

constexpr std::int64_t kCifarSide = 32;
constexpr std::int64_t kCifarRecord = 1 + 3 * kCifarSide * kCifarSide;

void append_cifar_batch(const fs::path& path, std::vector<double>& pixels,
                        std::vector<int>& labels) {
  const std::vector<std::uint8_t> bytes = read_maybe_gzip(path);
  if (bytes.empty() || bytes.size() % kCifarRecord != 0)
    throw IoError("'" + path.string() + "' is not a whole number of " +
                  std::to_string(kCifarRecord) + "-byte records");
  const std::size_t records = bytes.size() / kCifarRecord;
  pixels.reserve(pixels.size() + records * (kCifarRecord - 1));
  for (std::size_t r = 0; r < records; ++r) {
    const std::uint8_t* rec = bytes.data() + r * kCifarRecord;
    labels.push_back(rec[0]);
    for (std::int64_t j = 1; j < kCifarRecord; ++j)
      pixels.push_back(static_cast<double>(rec[j]) / 255.0);
  }
}

Dataset cifar_split(const std::vector<fs::path>& parts, Split split) {
  std::vector<double> pixels;
  std::vector<int> labels;
  for (const auto& part : parts) append_cifar_batch(part, pixels, labels);
  check_labels(labels, parts.front().string());
  const auto count = static_cast<std::int64_t>(labels.size());
  Dataset ds;
  ds.split = split;
  ds.images = Tensor({count, 3, kCifarSide, kCifarSide}, std::move(pixels));
  ds.labels = std::move(labels);
  return ds;
}

}  // namespace

IdxFile parse_idx(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4) throw IoError("IDX data shorter than its magic");
  if (bytes[0] != 0 || bytes[1] != 0)
    throw IoError("bad IDX magic: first two bytes must be zero");
  if (bytes[2] != 0x08)
    throw IoError("unsupported IDX element type " + std::to_string(bytes[2]) +
                  " (only unsigned byte, type 8)");
  const std::size_t ndims = bytes[3];
  if (ndims == 0) throw IoError("IDX header declares zero dimensions");
  if (bytes.size() < 4 + 4 * ndims) throw IoError("truncated IDX dimension list");

  IdxFile file;
  file.dtype = bytes[2];
  std::int64_t total = 1;
  for (std::size_t d = 0; d < ndims; ++d) {
    const auto extent = static_cast<std::int64_t>(read_be32(bytes.data() + 4 + 4 * d));
    file.dims.push_back(extent);
    total *= extent;
  }
  const std::size_t offset = 4 + 4 * ndims;
  if (bytes.size() - offset != static_cast<std::size_t>(total))
    throw IoError("IDX payload holds " + std::to_string(bytes.size() - offset) +
                  " bytes, header promises " + std::to_string(total));
  file.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end());
  return file;
}

std::vector<std::uint8_t> serialize_idx(const IdxFile& file) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(4 + 4 * file.dims.size() + file.payload.size());
  bytes.push_back(0);
  bytes.push_back(0);
  bytes.push_back(file.dtype);
  bytes.push_back(static_cast<std::uint8_t>(file.dims.size()));
  for (const std::int64_t dim : file.dims) {
    const auto v = static_cast<std::uint32_t>(dim);
    bytes.push_back(static_cast<std::uint8_t>(v >> 24));
    bytes.push_back(static_cast<std::uint8_t>(v >> 16));
    bytes.push_back(static_cast<std::uint8_t>(v >> 8));
    bytes.push_back(static_cast<std::uint8_t>(v));
  }
  bytes.insert(bytes.end(), file.payload.begin(), file.payload.end());
  return bytes;
}

std::vector<std::uint8_t> read_maybe_gzip(const fs::path& path) {
  std::vector<std::uint8_t> bytes = read_all(path);
  if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b)
    return gunzip(bytes, path.string());
  return bytes;
}

std::pair<Dataset, Dataset> load_mnist(const fs::path& dir) {
  const std::vector<fs::path> bases = {dir, dir / "mnist"};
  // Sequenced lookups so a missing-file report always names the first
  // absent file regardless of argument evaluation order.
  const fs::path train_images = locate(bases, "train-images-idx3-ubyte");
  const fs::path train_labels = locate(bases, "train-labels-idx1-ubyte");
  const fs::path test_images = locate(bases, "t10k-images-idx3-ubyte");
  const fs::path test_labels = locate(bases, "t10k-labels-idx1-ubyte");
  Dataset train = mnist_split(train_images, train_labels, Split::kTrain);
  Dataset test = mnist_split(test_images, test_labels, Split::kTest);
  return {std::move(train), std::move(test)};
}

std::pair<Dataset, Dataset> load_cifar10(const fs::path& dir) {
  const std::vector<fs::path> bases = {dir, dir / "cifar-10-batches-bin"};
  std::vector<fs::path> train_parts;
  for (int i = 1; i <= 5; ++i)
    train_parts.push_back(locate(bases, "data_batch_" + std::to_string(i) + ".bin"));
  Dataset train = cifar_split(train_parts, Split::kTrain);
  Dataset test = cifar_split({locate(bases, "test_batch.bin")}, Split::kTest);
  return {std::move(train), std::move(test)};
}

std::vector<std::vector<std::int64_t>> batches(std::int64_t count, std::int64_t batch_size,
                                               std::uint64_t seed, bool shuffle) {
  if (batch_size < 1) throw ParamError("batch_size must be >= 1");
  if (count < 0) throw ParamError("count must be >= 0");
  std::vector<std::int64_t> order(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) order[static_cast<std::size_t>(i)] = i;
  if (shuffle) {
    Rng rng(seed);
    rng.shuffle(std::span<std::int64_t>(order));
  }
  std::vector<std::vector<std::int64_t>> out;
  for (std::int64_t start = 0; start < count; start += batch_size) {
    const std::int64_t stop = std::min(count, start + batch_size);
    out.emplace_back(order.begin() + start, order.begin() + stop);
  }
  return out;
}

}  // namespace del
