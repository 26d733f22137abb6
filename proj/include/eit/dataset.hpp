#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "eit/tensor.hpp"

namespace eit {

// Images [N, 3, H, W] with values in [0, 1] and integer labels.
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  std::size_t classes = 0;
  std::string split = "train";

  std::size_t size() const { return labels.size(); }
  std::size_t height() const { return images.dim(2); }
  std::size_t width() const { return images.dim(3); }

  // Copies images and labels at the given indices, in order.
  Dataset subset(const std::vector<std::size_t>& indices) const;
  // Throws ContractViolation when shapes, value range or labels are off.
  void validate() const;
};

struct SyntheticOptions {
  std::size_t count = 64;
  std::size_t height = 16;
  std::size_t width = 16;
  // Radial cutoff, as a fraction of the Nyquist radius, of the low-pass mask.
  double cutoff = 0.25;
  std::uint64_t seed = 0;
};

// Two balanced classes separable by spectrum. Class 0 is low-pass filtered
// noise; class 1 is low-pass noise modulated by the (-1)^(x+y) checkerboard,
// which moves its energy next to the Nyquist corner. Each image is rescaled to
// 0.5 + 0.5 * v / max|v| per channel.
Dataset generate_synthetic(const SyntheticOptions& options);

// Directory format:
//   dataset.json   {"height": H, "width": W, "channels": 3, "classes": K}
//   labels.csv     header "filename,label", one row per image
//   <filename>     3*H*W bytes, planar RGB, value / 255
Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const std::filesystem::path& dir, const Dataset& data);

// Horizontally mirrored copy of images [N, 3, H, W].
Tensor hflip(const Tensor& images);

}  // namespace eit
