#include "latentrob/dataio.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

namespace latentrob {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset, const char* what) {
  if (bytes.size() < offset + 4) throw ParseError(std::string("truncated ") + what, bytes.size());
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>((v >> shift) & 0xFF));
}

std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& in) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw std::runtime_error("gunzip: inflateInit2 failed");
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> buf(1 << 16);
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = buf.data();
    zs.avail_out = static_cast<uInt>(buf.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      const auto consumed = zs.total_in;
      inflateEnd(&zs);
      throw ParseError("gzip stream is corrupt", consumed);
    }
    out.insert(out.end(), buf.data(), buf.data() + (buf.size() - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      const auto consumed = zs.total_in;
      inflateEnd(&zs);
      throw ParseError("gzip stream is truncated", consumed);
    }
  }
  inflateEnd(&zs);
  return out;
}

ImageDataset take_rows(const ImageDataset& data, const std::vector<Index>& rows) {
  ImageDataset out;
  out.width = data.width;
  out.height = data.height;
  out.images.resize(static_cast<Index>(rows.size()), data.images.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.images.row(static_cast<Index>(i)) = data.images.row(rows[i]);
    if (!data.labels.empty()) out.labels.push_back(data.labels[static_cast<std::size_t>(rows[i])]);
  }
  return out;
}

}  // namespace

ImageDataset read_idx_images(std::span<const std::uint8_t> bytes) {
  const auto magic = read_be32(bytes, 0, "image header");
  if (magic != kImageMagic) throw ParseError("bad IDX image magic", 0);
  const auto n = read_be32(bytes, 4, "image header");
  const auto rows = read_be32(bytes, 8, "image header");
  const auto cols = read_be32(bytes, 12, "image header");
  const std::size_t pixels = std::size_t{rows} * cols;
  const std::size_t need = 16 + std::size_t{n} * pixels;
  if (bytes.size() < need) throw ParseError("truncated IDX image payload", bytes.size());
  ImageDataset out;
  out.width = static_cast<int>(cols);
  out.height = static_cast<int>(rows);
  out.images.resize(n, static_cast<Index>(pixels));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < pixels; ++j) {
      out.images(static_cast<Index>(i), static_cast<Index>(j)) = bytes[16 + i * pixels + j] / 255.0;
    }
  }
  return out;
}

std::vector<int> read_idx_labels(std::span<const std::uint8_t> bytes) {
  const auto magic = read_be32(bytes, 0, "label header");
  if (magic != kLabelMagic) throw ParseError("bad IDX label magic", 0);
  const auto n = read_be32(bytes, 4, "label header");
  if (bytes.size() < 8 + std::size_t{n}) throw ParseError("truncated IDX label payload", bytes.size());
  return std::vector<int>(bytes.begin() + 8, bytes.begin() + 8 + n);
}

std::vector<std::uint8_t> write_idx_images(const ImageDataset& data) {
  if (static_cast<Index>(data.width) * data.height != data.images.cols()) {
    throw std::invalid_argument("write_idx_images: width*height does not match image size");
  }
  std::vector<std::uint8_t> out;
  put_be32(out, kImageMagic);
  put_be32(out, static_cast<std::uint32_t>(data.images.rows()));
  put_be32(out, static_cast<std::uint32_t>(data.height));
  put_be32(out, static_cast<std::uint32_t>(data.width));
  for (Index i = 0; i < data.images.rows(); ++i) {
    for (Index j = 0; j < data.images.cols(); ++j) {
      out.push_back(static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(data.images(i, j), 0.0, 1.0))));
    }
  }
  return out;
}

std::vector<std::uint8_t> write_idx_labels(const std::vector<int>& labels) {
  std::vector<std::uint8_t> out;
  put_be32(out, kLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) {
    if (l < 0 || l > 255) throw std::invalid_argument("write_idx_labels: label out of byte range");
    out.push_back(static_cast<std::uint8_t>(l));
  }
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) return gunzip(bytes);
  return bytes;
}

ImageDataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels) {
  auto data = read_idx_images(read_file_bytes(images));
  data.labels = read_idx_labels(read_file_bytes(labels));
  if (static_cast<Index>(data.labels.size()) != data.size()) {
    throw std::runtime_error("load_idx_dataset: image and label counts differ");
  }
  return data;
}

ImageDataset filter_by_label(const ImageDataset& data, const std::vector<int>& keep) {
  if (data.labels.size() != static_cast<std::size_t>(data.size())) {
    throw std::invalid_argument("filter_by_label: dataset has no labels");
  }
  std::vector<Index> rows;
  for (Index i = 0; i < data.size(); ++i) {
    if (std::find(keep.begin(), keep.end(), data.labels[static_cast<std::size_t>(i)]) != keep.end()) rows.push_back(i);
  }
  return take_rows(data, rows);
}

DatasetSplit split(const ImageDataset& data, double fraction, Rng& rng) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("split: fraction must be in [0,1]");
  const Index n = data.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  // Fisher-Yates with an explicit draw so the permutation is library independent
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  const auto cut = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
  return {take_rows(data, std::vector<Index>(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut))),
          take_rows(data, std::vector<Index>(order.begin() + static_cast<std::ptrdiff_t>(cut), order.end()))};
}

void write_image_grid(const Matrix& images, int width, int height, int cols, const std::filesystem::path& path) {
  if (width <= 0 || height <= 0 || cols <= 0) throw std::invalid_argument("write_image_grid: bad geometry");
  if (images.cols() != static_cast<Index>(width) * height) {
    throw std::invalid_argument("write_image_grid: image size does not match width*height");
  }
  const Index n = images.rows();
  const int grid_cols = static_cast<int>(std::min<Index>(cols, std::max<Index>(n, 1)));
  const int grid_rows = static_cast<int>((n + cols - 1) / cols);
  const int canvas_w = grid_cols * width;
  const int canvas_h = std::max(grid_rows, n == 0 ? 0 : 1) * height;
  std::vector<std::uint8_t> canvas(static_cast<std::size_t>(canvas_w) * static_cast<std::size_t>(canvas_h), 0);
  for (Index i = 0; i < n; ++i) {
    const int gr = static_cast<int>(i / cols);
    const int gc = static_cast<int>(i % cols);
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        const double v = std::clamp(images(i, static_cast<Index>(r) * width + c), 0.0, 1.0);
        const std::size_t y = static_cast<std::size_t>(gr * height + r);
        const std::size_t x = static_cast<std::size_t>(gc * width + c);
        canvas[y * static_cast<std::size_t>(canvas_w) + x] = static_cast<std::uint8_t>(std::lround(255.0 * v));
      }
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_image_grid: cannot open " + path.string());
  out << "P5\n" << canvas_w << ' ' << canvas_h << "\n255\n";
  out.write(reinterpret_cast<const char*>(canvas.data()), static_cast<std::streamsize>(canvas.size()));
  if (!out) throw std::runtime_error("write_image_grid: write failed for " + path.string());
}

}  // namespace latentrob
