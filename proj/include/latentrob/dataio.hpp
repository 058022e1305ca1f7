#pragma once

#include "latentrob/numerics.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace latentrob {

/// Malformed input; `offset` is the byte position where parsing failed.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " at byte " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

struct ImageDataset {
  Matrix images;            // n x (width*height), values in [0,1]
  std::vector<int> labels;  // empty for unlabeled data
  int width = 0;
  int height = 0;

  Index size() const { return images.rows(); }
};

/// IDX image payload (magic 0x00000803), pixels scaled by 1/255.
ImageDataset read_idx_images(std::span<const std::uint8_t> bytes);
/// IDX label payload (magic 0x00000801).
std::vector<int> read_idx_labels(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> write_idx_images(const ImageDataset& data);
std::vector<std::uint8_t> write_idx_labels(const std::vector<int>& labels);

/// Reads a whole file, inflating it when it carries the gzip magic.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

/// Loads an image file and its label file into one labeled dataset.
ImageDataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Rows whose label is in `keep`, original order preserved.
ImageDataset filter_by_label(const ImageDataset& data, const std::vector<int>& keep);

/// Deterministic shuffle, then the first floor(fraction*n) rows go to `first`.
struct DatasetSplit {
  ImageDataset first;
  ImageDataset second;
};
DatasetSplit split(const ImageDataset& data, double fraction, Rng& rng);

/// Binary PGM (P5, maxval 255) grid of the rows of `images`, `cols` per row;
/// pixel values are clamped to [0,1] first.
void write_image_grid(const Matrix& images, int width, int height, int cols, const std::filesystem::path& path);

}  // namespace latentrob
