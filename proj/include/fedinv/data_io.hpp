#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedinv/dataset.hpp"
#include "fedinv/tensor.hpp"

namespace fedinv {

enum class SynthKind { GaussianBlobs, StripedPatterns };

// Seeded synthetic images with class-dependent structure, so that gradients
// carry label signal: per-class gaussian bumps, or per-class stripe
// frequency and orientation. Pixels clipped to [0,1]; pure in its arguments.
Dataset synth_dataset(SynthKind kind, std::size_t n, std::size_t h, std::size_t w,
                      std::size_t classes, std::uint64_t seed);

// IDX-format reader (big-endian, image magic 0x00000803, label magic
// 0x00000801): the first `take` samples; bytes scaled by 1/255 when
// normalize is set.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::size_t take, bool normalize = true);

// One file per image: PGM (P5) for 1-channel batches, PPM (P6) for
// 3-channel, bytes = round-half-up of pixel*255. Returns the paths written.
std::vector<std::string> dump_images(const Tensor& batch, const std::string& dir,
                                     const std::string& prefix);

// Reads back a dumped PGM/PPM into a (C,H,W) tensor scaled to [0,1].
Tensor load_pnm(const std::string& path);

// RFC-4180-style CSV: cells holding commas, quotes, or line breaks are
// quoted with doubled inner quotes; the header row is mandatory and every
// row must match its width. Lines end with \n.
std::string csv_line(const std::vector<std::string>& cells);
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

}  // namespace fedinv
