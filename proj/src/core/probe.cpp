#include "eit/probe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <thread>

#include "eit/dataset.hpp"
#include "eit/errors.hpp"

namespace eit::probe {

namespace {

constexpr double kPi = std::numbers::pi;

double grid_distance(std::size_t a, std::size_t b, std::size_t w) {
  const double dy = static_cast<double>(a / w) - static_cast<double>(b / w);
  const double dx = static_cast<double>(a % w) - static_cast<double>(b % w);
  return std::sqrt(dy * dy + dx * dx);
}

std::size_t head_count(const ProbeRecord& record) { return record.attention.dim(0); }

}  // namespace

void ProbeRecord::validate() const {
  const std::size_t t = tokens();
  if (attention.rank() != 3 || attention.dim(1) != t || attention.dim(2) != t) {
    throw ContractViolation("probe record: attention " + shape_str(attention.shape()) +
                            " does not match " + std::to_string(t) + " tokens");
  }
  if (layer_input.rank() != 2 || layer_input.dim(0) != t) {
    throw ContractViolation("probe record: layer input " + shape_str(layer_input.shape()) +
                            " does not match " + std::to_string(t) + " tokens");
  }
  const auto a = attention.data();
  for (std::size_t row = 0; row < attention.numel() / t; ++row) {
    double sum = 0.0;
    for (std::size_t k = 0; k < t; ++k) sum += a[row * t + k];
    if (!(std::fabs(sum - 1.0) <= 1e-6)) {
      throw ContractViolation("probe record: attention row " + std::to_string(row) +
                              " sums to " + std::to_string(sum));
    }
  }
}

std::vector<double> attention_distance(const ProbeRecord& record) {
  record.validate();
  const std::size_t patches = record.grid_h * record.grid_w;
  if (patches < 2) throw DiagnosticError("attention distance needs at least 2 patch tokens");
  const std::size_t t = record.tokens();
  const std::size_t heads = head_count(record);
  const auto a = record.attention.data();

  std::vector<double> out(heads, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    double total = 0.0;
    for (std::size_t m = 0; m < patches; ++m) {
      const double* row = &a[(h * t + m + 1) * t + 1];
      double mass = 0.0;
      double weighted = 0.0;
      for (std::size_t n = 0; n < patches; ++n) {
        mass += row[n];
        weighted += row[n] * grid_distance(m, n, record.grid_w);
      }
      if (mass > 0.0) total += weighted / mass;
    }
    out[h] = total / static_cast<double>(patches) * record.pixel_spacing;
  }
  return out;
}

double head_diversity(std::span<const double> distances) {
  if (distances.size() < 2) throw DiagnosticError("head diversity needs at least 2 heads");
  double mean = 0.0;
  for (double d : distances) mean += d;
  mean /= static_cast<double>(distances.size());
  double var = 0.0;
  for (double d : distances) var += (d - mean) * (d - mean);
  return var / static_cast<double>(distances.size());
}

std::vector<Complex> dft2(std::span<const Complex> grid, std::size_t h, std::size_t w,
                          bool inverse) {
  if (grid.size() != h * w) throw ContractViolation("dft2: grid size does not match h*w");
  const double sign = inverse ? 1.0 : -1.0;
  // Separable: rows, then columns.
  std::vector<Complex> rows(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t v = 0; v < w; ++v) {
      Complex acc = 0.0;
      for (std::size_t x = 0; x < w; ++x) {
        const double angle = sign * 2.0 * kPi * static_cast<double>((v * x) % w) / w;
        acc += grid[y * w + x] * std::polar(1.0, angle);
      }
      rows[y * w + v] = acc;
    }
  }
  std::vector<Complex> out(h * w);
  for (std::size_t u = 0; u < h; ++u) {
    for (std::size_t v = 0; v < w; ++v) {
      Complex acc = 0.0;
      for (std::size_t y = 0; y < h; ++y) {
        const double angle = sign * 2.0 * kPi * static_cast<double>((u * y) % h) / h;
        acc += rows[y * w + v] * std::polar(1.0, angle);
      }
      out[u * w + v] = inverse ? acc / static_cast<double>(h * w) : acc;
    }
  }
  return out;
}

double normalized_radius(std::size_t u, std::size_t v, std::size_t h, std::size_t w) {
  const auto centred = [](std::size_t f, std::size_t n) {
    return 2 * f <= n ? static_cast<double>(f) : static_cast<double>(f) - static_cast<double>(n);
  };
  const double fy = centred(u, h) / (static_cast<double>(h) / 2.0);
  const double fx = centred(v, w) / (static_cast<double>(w) / 2.0);
  return kPi * std::sqrt(fy * fy + fx * fx);
}

std::size_t frequency_bin(double omega, std::size_t bins) {
  if (bins == 0) throw ContractViolation("frequency binning needs at least one bin");
  if (omega >= kPi) return bins - 1;
  const auto b = static_cast<std::size_t>(omega / kPi * static_cast<double>(bins));
  return std::min(b, bins - 1);
}

double SpectrumHistogram::lower_edge(std::size_t bin) const {
  return kPi * static_cast<double>(bin) / static_cast<double>(bins());
}

double SpectrumHistogram::upper_edge(std::size_t bin) const {
  return kPi * static_cast<double>(bin + 1) / static_cast<double>(bins());
}

SpectrumHistogram SpectrumHistogram::from_mass(std::vector<double> mass) {
  SpectrumHistogram hist;
  hist.mass = std::move(mass);
  hist.shares.assign(hist.mass.size(), 0.0);
  for (double m : hist.mass) hist.total += m;
  if (hist.total > 0.0) {
    for (std::size_t b = 0; b < hist.mass.size(); ++b) hist.shares[b] = hist.mass[b] / hist.total;
  }
  return hist;
}

std::vector<double> spectrum_mass(const Tensor& layer_input, std::size_t grid_h,
                                  std::size_t grid_w, std::size_t bins) {
  const std::size_t patches = grid_h * grid_w;
  if (layer_input.rank() != 2 || layer_input.dim(0) != patches + 1) {
    throw ContractViolation("frequency share: layer input " + shape_str(layer_input.shape()) +
                            " does not reshape to a " + std::to_string(grid_h) + "x" +
                            std::to_string(grid_w) + " grid plus class token");
  }
  const std::size_t c = layer_input.dim(1);
  const auto x = layer_input.data();

  std::vector<std::size_t> bin_of(patches);
  for (std::size_t u = 0; u < grid_h; ++u) {
    for (std::size_t v = 0; v < grid_w; ++v) {
      bin_of[u * grid_w + v] = frequency_bin(normalized_radius(u, v, grid_h, grid_w), bins);
    }
  }

  std::vector<double> mass(bins, 0.0);
  std::vector<Complex> slab(patches);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t p = 0; p < patches; ++p) slab[p] = x[(p + 1) * c + ch];
    const std::vector<Complex> f = dft2(slab, grid_h, grid_w);
    for (std::size_t p = 0; p < patches; ++p) mass[bin_of[p]] += std::abs(f[p]);
  }
  return mass;
}

SpectrumHistogram frequency_share(const ProbeRecord& record, std::size_t bins) {
  return SpectrumHistogram::from_mass(
      spectrum_mass(record.layer_input, record.grid_h, record.grid_w, bins));
}

AttentionMap attention_map(const ProbeRecord& record, std::size_t query) {
  record.validate();
  const std::size_t t = record.tokens();
  if (query == 0 || query >= t) {
    throw ContractViolation("attention map: query " + std::to_string(query) +
                            " is not a patch token in [1, " + std::to_string(t) + ")");
  }
  const std::size_t heads = head_count(record);
  const auto a = record.attention.data();
  AttentionMap out{Tensor({record.grid_h, record.grid_w}), 0.0};
  auto map = out.map.data();
  for (std::size_t h = 0; h < heads; ++h) {
    const double* row = &a[(h * t + query) * t];
    out.class_mass += row[0];
    for (std::size_t n = 1; n < t; ++n) map[n - 1] += row[n];
  }
  const double inv = 1.0 / static_cast<double>(heads);
  out.class_mass *= inv;
  for (double& v : map) v *= inv;
  return out;
}

std::size_t centre_query(std::size_t grid_h, std::size_t grid_w) {
  return 1 + (grid_h / 2) * grid_w + grid_w / 2;
}

std::vector<std::vector<ProbeRecord>> records_from_traces(const ModelConfig& config,
                                                          const std::vector<LayerTrace>& traces) {
  const TokenGeometry g = config.geometry();
  const double spacing = static_cast<double>(config.eitp_stride * config.eitp_pool);
  std::vector<std::vector<ProbeRecord>> out;
  if (traces.empty()) return out;
  const std::size_t n = traces.front().input.dim(0);
  out.resize(n);
  for (std::size_t l = 0; l < traces.size(); ++l) {
    const Tensor& in = traces[l].input;
    const Tensor& att = traces[l].attention;
    const std::size_t t = in.dim(1);
    const std::size_t c = in.dim(2);
    const std::size_t heads = att.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
      ProbeRecord rec;
      rec.layer = l + 1;
      rec.grid_h = g.grid_h;
      rec.grid_w = g.grid_w;
      rec.pixel_spacing = spacing;
      const auto in_begin = in.data().begin() + static_cast<std::ptrdiff_t>(i * t * c);
      rec.layer_input = Tensor({t, c}, std::vector<double>(in_begin, in_begin + t * c));
      const std::size_t block = heads * t * t;
      const auto att_begin = att.data().begin() + static_cast<std::ptrdiff_t>(i * block);
      rec.attention = Tensor({heads, t, t}, std::vector<double>(att_begin, att_begin + block));
      out[i].push_back(std::move(rec));
    }
  }
  return out;
}

ProbeAccumulator::ProbeAccumulator(std::size_t layers, std::size_t bins, std::size_t query)
    : bins_(bins),
      query_(query),
      distance_sum_(layers),
      mass_sum_(layers, std::vector<double>(bins, 0.0)),
      maps_(layers) {
  if (bins == 0) throw ContractViolation("probe needs at least one frequency bin");
}

void ProbeAccumulator::add_image(const std::vector<ProbeRecord>& records) {
  if (records.size() != distance_sum_.size()) {
    throw ContractViolation("probe accumulator: expected " +
                            std::to_string(distance_sum_.size()) + " layers, got " +
                            std::to_string(records.size()));
  }
  for (std::size_t l = 0; l < records.size(); ++l) {
    const ProbeRecord& rec = records[l];
    const std::vector<double> d = attention_distance(rec);
    auto& sum = distance_sum_[l];
    if (sum.empty()) sum.assign(d.size(), 0.0);
    if (sum.size() != d.size()) throw ContractViolation("probe accumulator: head count changed");
    for (std::size_t h = 0; h < d.size(); ++h) sum[h] += d[h];

    const std::vector<double> m = spectrum_mass(rec.layer_input, rec.grid_h, rec.grid_w, bins_);
    for (std::size_t b = 0; b < bins_; ++b) mass_sum_[l][b] += m[b];

    if (images_ == 0) {
      const std::size_t q = query_ == 0 ? centre_query(rec.grid_h, rec.grid_w) : query_;
      maps_[l] = attention_map(rec, q);
    }
  }
  if (images_ == 0 && query_ == 0 && !records.empty()) {
    query_ = centre_query(records.front().grid_h, records.front().grid_w);
  }
  ++images_;
}

std::vector<double> ProbeAccumulator::mean_distances(std::size_t layer) const {
  std::vector<double> out = distance_sum_.at(layer);
  for (double& d : out) d /= static_cast<double>(std::max<std::size_t>(images_, 1));
  return out;
}

double ProbeAccumulator::diversity(std::size_t layer) const {
  const std::vector<double> d = mean_distances(layer);
  return head_diversity(d);
}

SpectrumHistogram ProbeAccumulator::spectrum(std::size_t layer) const {
  return SpectrumHistogram::from_mass(mass_sum_.at(layer));
}

const AttentionMap& ProbeAccumulator::map(std::size_t layer) const { return maps_.at(layer); }

ProbeAccumulator run_probe(const ModelConfig& config, const ModelParams& params,
                           const Dataset& data, const ProbeOptions& options) {
  config.validate();
  check_params(config, params);
  const std::size_t count = std::min(options.samples, data.size());
  if (count == 0) throw DiagnosticError("probe needs at least one image");
  const TokenGeometry g = config.geometry();
  if (options.query >= g.tokens()) {
    throw ContractViolation("probe query " + std::to_string(options.query) +
                            " is out of range for " + std::to_string(g.tokens()) + " tokens");
  }

  // Chunk boundaries depend only on `batch`, so thread count cannot change results.
  const std::size_t batch = std::max<std::size_t>(options.batch, 1);
  const std::size_t chunks = (count + batch - 1) / batch;
  const std::size_t c = data.images.dim(1);
  const std::size_t hw = data.height() * data.width();
  std::vector<std::vector<std::vector<ProbeRecord>>> results(chunks);

  const auto run_chunk = [&](std::size_t k) {
    const std::size_t begin = k * batch;
    const std::size_t n = std::min(batch, count - begin);
    const auto first = data.images.data().begin() + static_cast<std::ptrdiff_t>(begin * c * hw);
    Tensor images({n, c, data.height(), data.width()},
                  std::vector<double>(first, first + static_cast<std::ptrdiff_t>(n * c * hw)));
    Tape tape(Tape::inference());
    const BoundParams bound = BoundParams::bind(tape, params, false);
    ForwardOptions fwd;
    fwd.trace = true;
    ForwardResult r = forward(config, bound, tape.constant(std::move(images)), fwd);
    results[k] = records_from_traces(config, r.traces);
  };

  const std::size_t threads = std::clamp<std::size_t>(options.threads, 1, chunks);
  if (threads == 1) {
    for (std::size_t k = 0; k < chunks; ++k) run_chunk(k);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t k = w; k < chunks; k += threads) run_chunk(k);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  ProbeAccumulator acc(config.layers, options.bins, options.query);
  for (const auto& chunk : results) {
    for (const auto& image : chunk) acc.add_image(image);
  }
  return acc;
}

void write_pgm(const std::filesystem::path& path, const Tensor& map) {
  if (map.rank() != 2) throw ContractViolation("pgm map must be 2-D");
  const std::size_t h = map.dim(0);
  const std::size_t w = map.dim(1);
  double peak = 0.0;
  for (double v : map.data()) peak = std::max(peak, v);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << w << " " << h << "\n255\n";
  for (double v : map.data()) {
    const double scaled = peak > 0.0 ? std::clamp(v / peak, 0.0, 1.0) * 255.0 : 0.0;
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(scaled))));
  }
  if (!out) throw IoError("short write to " + path.string());
}

void write_probe_outputs(const ProbeAccumulator& acc, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "maps");
  const auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::trunc);
    if (!f) throw IoError("cannot write " + (dir / name).string());
    f.precision(17);
    return f;
  };

  std::ofstream distances = open("distances.csv");
  std::ofstream diversity = open("diversity.csv");
  std::ofstream spectrum = open("spectrum.csv");
  distances << "layer,head,distance\n";
  diversity << "layer,diversity\n";
  spectrum << "layer,bin,omega_lo,omega_hi,share\n";
  for (std::size_t l = 0; l < acc.layers(); ++l) {
    const std::vector<double> d = acc.mean_distances(l);
    for (std::size_t h = 0; h < d.size(); ++h) {
      distances << l + 1 << "," << h << "," << d[h] << "\n";
    }
    if (d.size() >= 2) diversity << l + 1 << "," << acc.diversity(l) << "\n";
    const SpectrumHistogram hist = acc.spectrum(l);
    for (std::size_t b = 0; b < hist.bins(); ++b) {
      spectrum << l + 1 << "," << b << "," << hist.lower_edge(b) << "," << hist.upper_edge(b)
               << "," << hist.shares[b] << "\n";
    }
    write_pgm(dir / "maps" / ("layer_" + std::to_string(l + 1) + ".pgm"), acc.map(l).map);
  }
  for (auto* f : {&distances, &diversity, &spectrum}) {
    f->flush();
    if (!*f) throw IoError("short write under " + dir.string());
  }
}

}  // namespace eit::probe
