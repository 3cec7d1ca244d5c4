#include "fedinv/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fedinv/errors.hpp"
#include "fedinv/rng.hpp"

namespace fedinv {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

std::uint32_t read_u32_be(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw FormatError("load_idx: " + path + " is truncated inside the header");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
         (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

void fill_blobs(Tensor& images, const std::vector<std::size_t>& labels, std::size_t h,
                std::size_t w, Rng& rng) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t c = labels[i];
    const double cy = (c % 2 == 0) ? h * 0.25 : h * 0.75;
    const double cx = (c / 2 % 2 == 0) ? w * 0.25 : w * 0.75;
    const double s = (0.18 + 0.03 * static_cast<double>(c / 4 % 3)) * h + 0.6;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        const double v = std::exp(-d2 / (2.0 * s * s)) + 0.08 * rng.uniform();
        images.values()[(i * h + y) * w + x] = std::clamp(v, 0.0, 1.0);
      }
  }
}

void fill_stripes(Tensor& images, const std::vector<std::size_t>& labels, std::size_t h,
                  std::size_t w, Rng& rng) {
  const double two_pi = 6.283185307179586;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t c = labels[i];
    const double freq = 1.0 + static_cast<double>(c / 2);
    const bool vertical = (c % 2 != 0);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double coord = vertical ? static_cast<double>(x) / w
                                      : static_cast<double>(y) / h;
        const double v =
            0.5 + 0.4 * std::cos(two_pi * freq * coord) + 0.05 * rng.uniform();
        images.values()[(i * h + y) * w + x] = std::clamp(v, 0.0, 1.0);
      }
  }
}

}  // namespace

Dataset synth_dataset(SynthKind kind, std::size_t n, std::size_t h, std::size_t w,
                      std::size_t classes, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("synth_dataset: need at least one sample");
  if (h == 0 || w == 0) throw std::invalid_argument("synth_dataset: empty image shape");
  if (classes == 0) throw std::invalid_argument("synth_dataset: need at least one class");

  Rng rng(seed);
  Dataset d;
  d.images = Tensor({n, 1, h, w});
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) d.labels[i] = rng.below(classes);

  switch (kind) {
    case SynthKind::GaussianBlobs:
      fill_blobs(d.images, d.labels, h, w, rng);
      d.provenance = "synthetic(gaussian-blobs, seed=" + std::to_string(seed) + ")";
      break;
    case SynthKind::StripedPatterns:
      fill_stripes(d.images, d.labels, h, w, rng);
      d.provenance = "synthetic(striped-patterns, seed=" + std::to_string(seed) + ")";
      break;
  }
  return d;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::size_t take, bool normalize) {
  if (take == 0) throw std::invalid_argument("load_idx: take must be at least 1");

  std::ifstream fi(images_path, std::ios::binary);
  if (!fi) throw FormatError("load_idx: cannot open " + images_path);
  const std::uint32_t image_magic = read_u32_be(fi, images_path);
  if (image_magic != kImageMagic)
    throw FormatError("load_idx: " + images_path + " has magic " + hex32(image_magic) +
                      ", expected " + hex32(kImageMagic));
  const std::uint32_t image_count = read_u32_be(fi, images_path);
  const std::uint32_t rows = read_u32_be(fi, images_path);
  const std::uint32_t cols = read_u32_be(fi, images_path);

  std::ifstream fl(labels_path, std::ios::binary);
  if (!fl) throw FormatError("load_idx: cannot open " + labels_path);
  const std::uint32_t label_magic = read_u32_be(fl, labels_path);
  if (label_magic != kLabelMagic)
    throw FormatError("load_idx: " + labels_path + " has magic " + hex32(label_magic) +
                      ", expected " + hex32(kLabelMagic));
  const std::uint32_t label_count = read_u32_be(fl, labels_path);

  if (image_count != label_count)
    throw FormatError("load_idx: " + std::to_string(image_count) + " images in " +
                      images_path + " but " + std::to_string(label_count) +
                      " labels in " + labels_path);
  if (take > image_count)
    throw std::invalid_argument("load_idx: asked for " + std::to_string(take) +
                                " samples but the files hold only " +
                                std::to_string(image_count));
  if (rows == 0 || cols == 0)
    throw FormatError("load_idx: " + images_path + " declares an empty image shape");

  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  std::vector<unsigned char> raw(take * pixels);
  if (!fi.read(reinterpret_cast<char*>(raw.data()),
               static_cast<std::streamsize>(raw.size())))
    throw FormatError("load_idx: " + images_path + " is truncated; expected " +
                      std::to_string(raw.size()) + " pixel bytes");
  std::vector<unsigned char> raw_labels(take);
  if (!fl.read(reinterpret_cast<char*>(raw_labels.data()),
               static_cast<std::streamsize>(raw_labels.size())))
    throw FormatError("load_idx: " + labels_path + " is truncated; expected " +
                      std::to_string(take) + " label bytes");

  Dataset d;
  d.images = Tensor({take, 1, rows, cols});
  const double scale = normalize ? 1.0 / 255.0 : 1.0;
  for (std::size_t i = 0; i < raw.size(); ++i)
    d.images.values()[i] = scale * static_cast<double>(raw[i]);
  d.labels.assign(raw_labels.begin(), raw_labels.end());
  d.provenance = "idx(" + images_path + ", " + labels_path +
                 ", take=" + std::to_string(take) + ")";
  return d;
}

std::vector<std::string> dump_images(const Tensor& batch, const std::string& dir,
                                     const std::string& prefix) {
  if (batch.ndim() != 4)
    throw ShapeError("dump_images: batch must be (N,C,H,W), got " +
                     Tensor::shape_string(batch.shape()));
  const std::size_t n = batch.dim(0);
  const std::size_t c = batch.dim(1);
  const std::size_t h = batch.dim(2);
  const std::size_t w = batch.dim(3);
  if (c != 1 && c != 3)
    throw ShapeError("dump_images: supports 1 or 3 channels, got " + std::to_string(c));
  for (std::size_t i = 0; i < batch.numel(); ++i)
    if (!(batch[i] >= 0.0 && batch[i] <= 1.0))
      throw std::invalid_argument("dump_images: pixels must lie in [0,1]");

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    throw std::runtime_error("dump_images: cannot create directory " + dir + ": " +
                             ec.message());

  std::vector<std::string> paths;
  paths.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%04zu.%s", i, c == 1 ? "pgm" : "ppm");
    const std::string path = (std::filesystem::path(dir) / (prefix + name)).string();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("dump_images: cannot write " + path);
    out << (c == 1 ? "P5" : "P6") << "\n" << w << " " << h << "\n255\n";
    // PNM interleaves channels per pixel; the batch stores planes
    std::vector<unsigned char> body(c * h * w);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double v = batch[((i * c + ch) * h + y) * w + x];
          body[(y * w + x) * c + ch] =
              static_cast<unsigned char>(std::floor(v * 255.0 + 0.5));
        }
    out.write(reinterpret_cast<const char*>(body.data()),
              static_cast<std::streamsize>(body.size()));
    if (!out) throw std::runtime_error("dump_images: short write on " + path);
    paths.push_back(path);
  }
  return paths;
}

Tensor load_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("load_pnm: cannot open " + path);
  std::string magic;
  in >> magic;
  std::size_t channels;
  if (magic == "P5")
    channels = 1;
  else if (magic == "P6")
    channels = 3;
  else
    throw FormatError("load_pnm: " + path + " starts with '" + magic +
                      "', expected P5 or P6");
  std::size_t w = 0, h = 0, maxval = 0;
  in >> w >> h >> maxval;
  if (!in || w == 0 || h == 0)
    throw FormatError("load_pnm: " + path + " has a malformed size header");
  if (maxval != 255)
    throw FormatError("load_pnm: " + path + " uses maxval " + std::to_string(maxval) +
                      "; only 255 is supported");
  in.get();  // the single whitespace byte after the header

  std::vector<unsigned char> body(channels * h * w);
  if (!in.read(reinterpret_cast<char*>(body.data()),
               static_cast<std::streamsize>(body.size())))
    throw FormatError("load_pnm: " + path + " is truncated");

  Tensor out({channels, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < channels; ++ch)
        out.values()[(ch * h + y) * w + x] =
            static_cast<double>(body[(y * w + x) * channels + ch]) / 255.0;
  return out;
}

std::string csv_line(const std::vector<std::string>& cells) {
  std::string line;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) line += ',';
    const std::string& cell = cells[i];
    if (cell.find_first_of(",\"\r\n") != std::string::npos) {
      line += '"';
      for (char ch : cell) {
        line += ch;
        if (ch == '"') line += '"';
      }
      line += '"';
    } else {
      line += cell;
    }
  }
  line += '\n';
  return line;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  if (header.empty())
    throw std::invalid_argument("write_csv: the header row is mandatory");
  for (const auto& row : rows)
    if (row.size() != header.size())
      throw std::invalid_argument("write_csv: row with " + std::to_string(row.size()) +
                                  " cells under a " + std::to_string(header.size()) +
                                  "-column header");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("write_csv: cannot write " + path);
  out << csv_line(header);
  for (const auto& row : rows) out << csv_line(row);
  if (!out) throw std::runtime_error("write_csv: short write on " + path);
}

}  // namespace fedinv
