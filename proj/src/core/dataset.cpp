#include "eit/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "eit/errors.hpp"
#include "eit/probe.hpp"
#include "eit/rng.hpp"

namespace eit {

namespace fs = std::filesystem;

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  if (indices.empty()) throw ContractViolation("dataset subset needs at least one index");
  const std::size_t c = images.dim(1);
  const std::size_t per = c * height() * width();
  Dataset out;
  out.classes = classes;
  out.split = split;
  out.images = Tensor({indices.size(), c, height(), width()});
  const auto src = images.data();
  auto dst = out.images.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw ContractViolation("dataset subset index out of range");
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(indices[i] * per), per,
                dst.begin() + static_cast<std::ptrdiff_t>(i * per));
    out.labels.push_back(labels[indices[i]]);
  }
  return out;
}

void Dataset::validate() const {
  if (images.rank() != 4 || images.dim(1) != 3) {
    throw ContractViolation("dataset images must be [N, 3, H, W], got " + shape_str(images.shape()));
  }
  if (labels.empty() || images.dim(0) != labels.size()) {
    throw ContractViolation("dataset has " + std::to_string(images.dim(0)) + " images and " +
                            std::to_string(labels.size()) + " labels");
  }
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw ContractViolation("dataset label " + std::to_string(label) + " outside [0, " +
                              std::to_string(classes) + ")");
    }
  }
  for (double v : images.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ContractViolation("dataset pixel outside [0, 1]");
  }
}

namespace {

// Real part of a low-pass filtered white-noise field.
std::vector<double> lowpass_noise(Rng& rng, std::size_t h, std::size_t w, double cutoff) {
  std::vector<probe::Complex> field(h * w);
  for (auto& v : field) v = rng.normal();
  std::vector<probe::Complex> spectrum = probe::dft2(field, h, w);
  for (std::size_t u = 0; u < h; ++u) {
    for (std::size_t v = 0; v < w; ++v) {
      if (probe::normalized_radius(u, v, h, w) > cutoff * std::numbers::pi) spectrum[u * w + v] = 0.0;
    }
  }
  const std::vector<probe::Complex> back = probe::dft2(spectrum, h, w, true);
  std::vector<double> out(h * w);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = back[i].real();
  return out;
}

}  // namespace

Dataset generate_synthetic(const SyntheticOptions& o) {
  if (o.count < 2 || o.height < 2 || o.width < 2) {
    throw ConfigError("synthetic dataset needs count >= 2 and images at least 2x2");
  }
  if (!(o.cutoff > 0.0 && o.cutoff <= 1.0)) throw ConfigError("cutoff: must be in (0, 1]");

  Rng rng(o.seed);
  Dataset data;
  data.classes = 2;
  data.split = "synthetic";
  data.labels.resize(o.count);
  for (std::size_t i = 0; i < o.count; ++i) data.labels[i] = i < o.count / 2 ? 0 : 1;
  for (std::size_t i = o.count; i > 1; --i) {
    std::swap(data.labels[i - 1], data.labels[rng.below(i)]);
  }

  const std::size_t h = o.height;
  const std::size_t w = o.width;
  data.images = Tensor({o.count, 3, h, w});
  auto px = data.images.data();
  for (std::size_t n = 0; n < o.count; ++n) {
    for (std::size_t c = 0; c < 3; ++c) {
      std::vector<double> v = lowpass_noise(rng, h, w, o.cutoff);
      if (data.labels[n] == 1) {
        for (std::size_t y = 0; y < h; ++y) {
          for (std::size_t x = 0; x < w; ++x) {
            if ((x + y) % 2 == 1) v[y * w + x] = -v[y * w + x];
          }
        }
      }
      double peak = 0.0;
      for (double e : v) peak = std::max(peak, std::fabs(e));
      const std::size_t base = (n * 3 + c) * h * w;
      for (std::size_t i = 0; i < h * w; ++i) {
        px[base + i] = peak > 0.0 ? 0.5 + 0.5 * v[i] / peak : 0.5;
      }
    }
  }
  return data;
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace

Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());

  const fs::path meta_path = dir / "dataset.json";
  std::size_t h = 0;
  std::size_t w = 0;
  Dataset data;
  try {
    const auto meta = nlohmann::json::parse(read_file(meta_path));
    h = meta.at("height").get<std::size_t>();
    w = meta.at("width").get<std::size_t>();
    data.classes = meta.at("classes").get<std::size_t>();
    if (meta.value("channels", std::size_t{3}) != 3) {
      throw IoError(meta_path.string() + ": channels must be 3");
    }
    data.split = meta.value("split", std::string("train"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(meta_path.string() + ": " + e.what());
  }
  if (h == 0 || w == 0 || data.classes == 0) {
    throw IoError(meta_path.string() + ": height, width and classes must be positive");
  }

  const fs::path labels_path = dir / "labels.csv";
  std::istringstream csv(read_file(labels_path));
  std::string line;
  if (!std::getline(csv, line) || trim(line) != "filename,label") {
    throw IoError(labels_path.string() + ": expected header 'filename,label'");
  }
  std::vector<std::string> files;
  std::size_t row = 1;
  while (std::getline(csv, line)) {
    ++row;
    line = trim(line);
    if (line.empty()) continue;
    const auto comma = line.find(',');
    const std::string where = labels_path.string() + " row " + std::to_string(row);
    if (comma == std::string::npos) throw IoError(where + ": expected 'filename,label'");
    files.push_back(trim(line.substr(0, comma)));
    const std::string label_text = trim(line.substr(comma + 1));
    std::size_t used = 0;
    int label = -1;
    try {
      label = std::stoi(label_text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != label_text.size() || label < 0 || static_cast<std::size_t>(label) >= data.classes) {
      throw IoError(where + ": bad label '" + label_text + "'");
    }
    data.labels.push_back(label);
  }
  if (files.empty()) throw IoError(labels_path.string() + ": no images listed");

  std::size_t raw_count = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".raw") ++raw_count;
  }
  if (raw_count != files.size()) {
    throw IoError(labels_path.string() + ": lists " + std::to_string(files.size()) +
                  " images but the directory holds " + std::to_string(raw_count) + " .raw files");
  }

  const std::size_t per = 3 * h * w;
  data.images = Tensor({files.size(), 3, h, w});
  auto px = data.images.data();
  for (std::size_t n = 0; n < files.size(); ++n) {
    const fs::path path = dir / files[n];
    const std::string bytes = read_file(path);
    if (bytes.size() != per) {
      throw IoError(path.string() + ": expected " + std::to_string(per) + " bytes, found " +
                    std::to_string(bytes.size()));
    }
    for (std::size_t i = 0; i < per; ++i) {
      px[n * per + i] = static_cast<double>(static_cast<unsigned char>(bytes[i])) / 255.0;
    }
  }
  return data;
}

void save_dataset(const fs::path& dir, const Dataset& data) {
  data.validate();
  fs::create_directories(dir);
  const std::size_t h = data.height();
  const std::size_t w = data.width();
  const std::size_t per = 3 * h * w;

  nlohmann::ordered_json meta = {
      {"height", h}, {"width", w}, {"channels", 3}, {"classes", data.classes}, {"split", data.split}};
  std::ofstream meta_out(dir / "dataset.json", std::ios::trunc);
  meta_out << meta.dump(2) << "\n";
  if (!meta_out) throw IoError("cannot write " + (dir / "dataset.json").string());

  std::ofstream labels(dir / "labels.csv", std::ios::trunc);
  if (!labels) throw IoError("cannot write " + (dir / "labels.csv").string());
  labels << "filename,label\n";
  const auto px = data.images.data();
  std::string bytes(per, '\0');
  for (std::size_t n = 0; n < data.size(); ++n) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%06zu.raw", n);
    for (std::size_t i = 0; i < per; ++i) {
      bytes[i] = static_cast<char>(static_cast<unsigned char>(std::lround(px[n * per + i] * 255.0)));
    }
    std::ofstream img(dir / name, std::ios::binary | std::ios::trunc);
    img.write(bytes.data(), static_cast<std::streamsize>(per));
    if (!img) throw IoError("cannot write " + (dir / name).string());
    labels << name << "," << data.labels[n] << "\n";
  }
  if (!labels) throw IoError("short write to " + (dir / "labels.csv").string());
}

Tensor hflip(const Tensor& images) {
  if (images.rank() != 4) throw ContractViolation("hflip expects [N, C, H, W]");
  const std::size_t w = images.dim(3);
  const std::size_t rows = images.numel() / w;
  Tensor out(images.shape());
  const auto src = images.data();
  auto dst = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t x = 0; x < w; ++x) dst[r * w + x] = src[r * w + (w - 1 - x)];
  }
  return out;
}

}  // namespace eit
