#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "tie/rng.hpp"
#include "tie/tensor.hpp"

namespace tie {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// label value used for OOD samples; never a trainable class index
constexpr int kOodLabel = -1;

// Immutable sample container. samples is [M x D] in [0,1]; labels hold class
// indices in [0,n) for ID data or kOodLabel for OOD data. height/width are 0
// for non-image data.
struct Dataset {
  Tensor samples;
  std::vector<int> labels;
  std::string name;
  std::size_t height = 0, width = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return samples.defined() ? samples.dim(1) : 0; }
};

// ------------------------------------------------------------------- idx --

namespace detail {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

inline std::uint32_t read_be32(std::ifstream& is, std::size_t offset,
                               const std::string& what,
                               const std::string& path) {
  unsigned char buf[4];
  is.read(reinterpret_cast<char*>(buf), 4);
  if (is.gcount() != 4)
    throw DataError("idx: " + path + ": truncated while reading " + what +
                    " at byte offset " + std::to_string(offset));
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

inline void write_be32(std::ofstream& os, std::uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<char*>(buf), 4);
}

}  // namespace detail

// Reads an IDX ubyte image file: big-endian magic 0x00000803, counts M, H, W,
// then M*H*W pixel bytes. Pixels are scaled to [0,1] as p/255.
inline Tensor read_idx_images(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("idx: cannot open " + path);
  const std::uint32_t magic = detail::read_be32(is, 0, "magic", path);
  if (magic != detail::kIdxImagesMagic)
    throw DataError("idx: " + path + ": bad image magic 0x" +
                    [&] {
                      char b[16];
                      std::snprintf(b, sizeof b, "%08x", magic);
                      return std::string(b);
                    }() +
                    " at byte offset 0, expected 0x00000803");
  const std::uint32_t m = detail::read_be32(is, 4, "image count", path);
  const std::uint32_t h = detail::read_be32(is, 8, "row count", path);
  const std::uint32_t w = detail::read_be32(is, 12, "column count", path);
  const std::size_t payload = std::size_t(m) * h * w;
  std::vector<unsigned char> bytes(payload);
  is.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(payload));
  if (static_cast<std::size_t>(is.gcount()) != payload)
    throw DataError("idx: " + path + ": truncated payload at byte offset " +
                    std::to_string(16 + is.gcount()) + ", expected " +
                    std::to_string(payload) + " pixel bytes");
  Tensor out(Shape{m, h, w});
  for (std::size_t i = 0; i < payload; ++i)
    out.at(i) = static_cast<double>(bytes[i]) / 255.0;
  return out;
}

// magic 0x00000801, big-endian count, byte labels
inline std::vector<int> read_idx_labels(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("idx: cannot open " + path);
  const std::uint32_t magic = detail::read_be32(is, 0, "magic", path);
  if (magic != detail::kIdxLabelsMagic)
    throw DataError("idx: " + path + ": bad label magic at byte offset 0," +
                    " expected 0x00000801");
  const std::uint32_t m = detail::read_be32(is, 4, "label count", path);
  std::vector<unsigned char> bytes(m);
  is.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(m));
  if (static_cast<std::size_t>(is.gcount()) != m)
    throw DataError("idx: " + path + ": truncated labels at byte offset " +
                    std::to_string(8 + is.gcount()) + ", expected " +
                    std::to_string(m) + " label bytes");
  return std::vector<int>(bytes.begin(), bytes.end());
}

// Writes images as IDX ubyte, quantizing each value in [0,1] to
// round(255*v) half-up. Reading the file back reproduces the quantized
// pixels bitwise.
inline void write_idx_images(const std::string& path, const Tensor& images) {
  if (images.ndim() != 3)
    throw DataError("idx: write_idx_images expects [MxHxW], got " +
                    shape_str(images.shape()));
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("idx: cannot open " + path + " for writing");
  detail::write_be32(os, detail::kIdxImagesMagic);
  detail::write_be32(os, static_cast<std::uint32_t>(images.dim(0)));
  detail::write_be32(os, static_cast<std::uint32_t>(images.dim(1)));
  detail::write_be32(os, static_cast<std::uint32_t>(images.dim(2)));
  std::vector<unsigned char> bytes(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const double v = std::floor(images.at(i) * 255.0 + 0.5);
    bytes[i] = static_cast<unsigned char>(std::min(255.0, std::max(0.0, v)));
  }
  os.write(reinterpret_cast<char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw DataError("idx: write to " + path + " failed");
}

inline void write_idx_labels(const std::string& path,
                             const std::vector<int>& labels) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("idx: cannot open " + path + " for writing");
  detail::write_be32(os, detail::kIdxLabelsMagic);
  detail::write_be32(os, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) {
    const unsigned char b = static_cast<unsigned char>(l);
    os.write(reinterpret_cast<const char*>(&b), 1);
  }
  if (!os) throw DataError("idx: write to " + path + " failed");
}

// ------------------------------------------------------------ downsample --

// 2x2 mean pooling of [MxHxW] images; H and W must be even
inline Tensor downsample(const Tensor& images, std::size_t factor = 2) {
  if (images.ndim() != 3)
    throw DataError("downsample: expected [MxHxW], got " +
                    shape_str(images.shape()));
  if (factor != 2) throw DataError("downsample: only factor 2 is supported");
  const std::size_t m = images.dim(0), h = images.dim(1), w = images.dim(2);
  if (h % 2 != 0 || w % 2 != 0)
    throw DataError("downsample: dimensions must be even, got " +
                    shape_str(images.shape()));
  Tensor out(Shape{m, h / 2, w / 2});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t r = 0; r < h / 2; ++r)
      for (std::size_t c = 0; c < w / 2; ++c) {
        const std::size_t base = i * h * w;
        const double s = images.at(base + (2 * r) * w + 2 * c) +
                         images.at(base + (2 * r) * w + 2 * c + 1) +
                         images.at(base + (2 * r + 1) * w + 2 * c) +
                         images.at(base + (2 * r + 1) * w + 2 * c + 1);
        out.at(i * (h / 2) * (w / 2) + r * (w / 2) + c) = s / 4.0;
      }
  return out;
}

inline Tensor flatten_images(const Tensor& images) {
  if (images.ndim() != 3)
    throw DataError("flatten_images: expected [MxHxW], got " +
                    shape_str(images.shape()));
  return Tensor::from_data({images.dim(0), images.dim(1) * images.dim(2)},
                           images.data());
}

// ----------------------------------------------------------------- synth --

struct OodGeometry {
  enum class Kind { ring, box };
  Kind kind = Kind::ring;
  double radius = 20.0;      // ring center radius
  double width = 1.0;        // ring radial extent
  double half_extent = 0.0;  // box half side (box mode)
  std::size_t count = 1000;
};

// 2-d Gaussian blobs plus an OOD shell. All emitted coordinates are mapped
// from raw space into [0,1]^2 by x -> (x + S) / (2S) with S = scale().
struct SynthSpec {
  std::size_t n_classes = 3;
  std::vector<std::array<double, 2>> means;
  std::vector<double> stds;
  std::size_t train_per_class = 2000;
  std::size_t test_per_class = 500;
  OodGeometry ood;

  double scale() const {
    if (ood.kind == OodGeometry::Kind::ring) return ood.radius + ood.width;
    return ood.half_extent + 1.0;
  }

  void validate() const {
    if (n_classes < 2) throw DataError("synth: need at least 2 classes");
    if (means.size() != n_classes || stds.size() != n_classes)
      throw DataError("synth: means/stds must list one entry per class");
    double max_spread = 0.0;
    for (std::size_t c = 0; c < n_classes; ++c) {
      if (!(stds[c] > 0.0)) throw DataError("synth: stds must be positive");
      const double r = std::hypot(means[c][0], means[c][1]) + 3.0 * stds[c];
      max_spread = std::max(max_spread, r);
    }
    if (ood.kind == OodGeometry::Kind::ring &&
        ood.radius - ood.width / 2.0 <= max_spread)
      throw DataError(
          "synth: ring must lie outside the blobs (inner radius " +
          std::to_string(ood.radius - ood.width / 2.0) + " <= blob spread " +
          std::to_string(max_spread) + ")");
  }
};

struct SynthResult {
  Dataset train, test, ood;
};

inline SynthResult synth_blobs(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(derive_seed(seed, stream::synth_data));
  const double s = spec.scale();
  auto norm = [s](double v) { return (v + s) / (2.0 * s); };

  auto make_id = [&](std::size_t per_class, const std::string& name) {
    Dataset d;
    d.name = name;
    const std::size_t m = per_class * spec.n_classes;
    d.samples = Tensor(Shape{m, 2});
    d.labels.resize(m);
    std::size_t row = 0;
    for (std::size_t c = 0; c < spec.n_classes; ++c)
      for (std::size_t i = 0; i < per_class; ++i, ++row) {
        d.samples.at(row * 2) =
            norm(rng.normal(spec.means[c][0], spec.stds[c]));
        d.samples.at(row * 2 + 1) =
            norm(rng.normal(spec.means[c][1], spec.stds[c]));
        d.labels[row] = static_cast<int>(c);
      }
    return d;
  };

  SynthResult out;
  out.train = make_id(spec.train_per_class, "synth_train");
  out.test = make_id(spec.test_per_class, "synth_test");

  out.ood.name = "synth_ood";
  out.ood.samples = Tensor(Shape{spec.ood.count, 2});
  out.ood.labels.assign(spec.ood.count, kOodLabel);
  for (std::size_t i = 0; i < spec.ood.count; ++i) {
    double x, y;
    if (spec.ood.kind == OodGeometry::Kind::ring) {
      const double r = rng.uniform(spec.ood.radius - spec.ood.width / 2.0,
                                   spec.ood.radius + spec.ood.width / 2.0);
      const double a = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
      x = r * std::cos(a);
      y = r * std::sin(a);
    } else {
      x = rng.uniform(-spec.ood.half_extent, spec.ood.half_extent);
      y = rng.uniform(-spec.ood.half_extent, spec.ood.half_extent);
    }
    out.ood.samples.at(i * 2) = norm(x);
    out.ood.samples.at(i * 2 + 1) = norm(y);
  }
  return out;
}

}  // namespace tie
