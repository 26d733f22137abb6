#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "eit/config.hpp"
#include "eit/model.hpp"
#include "eit/tensor.hpp"

namespace eit {
struct Dataset;
}

namespace eit::probe {

// Diagnostics input for one layer of one image.
struct ProbeRecord {
  std::size_t layer = 0;      // 1-based
  Tensor attention;           // [heads, T, T], rows sum to 1
  Tensor layer_input;         // [T, C]
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  double pixel_spacing = 1.0; // input pixels per token step

  std::size_t tokens() const { return 1 + grid_h * grid_w; }
  // Throws ContractViolation when shapes or row sums are off.
  void validate() const;
};

// Per-head attention-weighted mean distance in pixels. Queries and keys are
// patch tokens only; each query's attention is renormalised over the patch
// keys before weighting the Euclidean grid distance.
std::vector<double> attention_distance(const ProbeRecord& record);

// Population variance of per-head distances.
double head_diversity(std::span<const double> distances);

using Complex = std::complex<double>;

// Direct O(N^2) 2D DFT of a row-major h x w grid.
std::vector<Complex> dft2(std::span<const Complex> grid, std::size_t h, std::size_t w,
                          bool inverse = false);

// Radial frequency of DFT bin (u, v) mapped so the Nyquist frequency on each
// axis sits at pi: pi * sqrt((fu / (h/2))^2 + (fv / (w/2))^2), with fu, fv the
// centred (signed) frequencies.
double normalized_radius(std::size_t u, std::size_t v, std::size_t h, std::size_t w);
// Uniform bins over [0, pi]; radii beyond pi land in the last bin.
std::size_t frequency_bin(double omega, std::size_t bins);

struct SpectrumHistogram {
  std::vector<double> mass;    // summed |F| per bin
  std::vector<double> shares;  // mass / total
  double total = 0.0;

  std::size_t bins() const { return mass.size(); }
  double lower_edge(std::size_t bin) const;
  double upper_edge(std::size_t bin) const;
  // Builds shares from mass; shares stay zero when total is zero.
  static SpectrumHistogram from_mass(std::vector<double> mass);
};

// Raw per-bin |F| mass of the patch tokens of layer_input [T, C] summed over
// channels.
std::vector<double> spectrum_mass(const Tensor& layer_input, std::size_t grid_h,
                                  std::size_t grid_w, std::size_t bins);
SpectrumHistogram frequency_share(const ProbeRecord& record, std::size_t bins = 10);

struct AttentionMap {
  Tensor map;               // [grid_h, grid_w], head-averaged patch attention
  double class_mass = 0.0;  // head-averaged attention on the class token
};

// query is a token index in [1, T).
AttentionMap attention_map(const ProbeRecord& record, std::size_t query);

// Splits batch traces into one record per (image, layer).
std::vector<std::vector<ProbeRecord>> records_from_traces(const ModelConfig& config,
                                                          const std::vector<LayerTrace>& traces);

// Running aggregate over images: distances averaged per head, spectral mass
// summed, and the attention map of the first image kept.
class ProbeAccumulator {
 public:
  ProbeAccumulator(std::size_t layers, std::size_t bins, std::size_t query);

  void add_image(const std::vector<ProbeRecord>& layers);

  std::size_t images() const { return images_; }
  std::size_t layers() const { return distance_sum_.size(); }
  std::vector<double> mean_distances(std::size_t layer) const;  // 0-based layer
  double diversity(std::size_t layer) const;
  SpectrumHistogram spectrum(std::size_t layer) const;
  const AttentionMap& map(std::size_t layer) const;
  std::size_t query() const { return query_; }

 private:
  std::size_t bins_;
  std::size_t query_;
  std::size_t images_ = 0;
  std::vector<std::vector<double>> distance_sum_;
  std::vector<std::vector<double>> mass_sum_;
  std::vector<AttentionMap> maps_;
};

struct ProbeOptions {
  std::size_t bins = 10;
  std::size_t samples = 2000;  // capped at the dataset size
  std::size_t query = 0;       // 0 selects the centre patch token
  std::size_t threads = 1;
  std::size_t batch = 16;
};

// Runs the model over the first min(samples, N) images.
ProbeAccumulator run_probe(const ModelConfig& config, const ModelParams& params,
                           const Dataset& data, const ProbeOptions& options);

// Centre patch token of a grid, as a token index.
std::size_t centre_query(std::size_t grid_h, std::size_t grid_w);

// distances.csv, diversity.csv, spectrum.csv and maps/layer_<i>.pgm.
void write_probe_outputs(const ProbeAccumulator& acc, const std::filesystem::path& dir);

// Binary PGM (P5), values scaled so the map maximum becomes 255.
void write_pgm(const std::filesystem::path& path, const Tensor& map);

}  // namespace eit::probe
