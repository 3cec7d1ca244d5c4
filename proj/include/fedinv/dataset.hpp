#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fedinv/tensor.hpp"

namespace fedinv {

// An image classification dataset: images (N,C,H,W) in [0,1], one label per
// image. `provenance` records where the data came from (generator kind and
// seed, or source file paths) for reports.
struct Dataset {
  Tensor images;
  std::vector<std::size_t> labels;
  std::string provenance;

  std::size_t size() const { return labels.size(); }
};

}  // namespace fedinv
