#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include "panrestore/pipeline.hpp"
#include "panrestore/rng.hpp"

namespace panrestore {

std::optional<Split> parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  if (name == "all") return Split::kAll;
  return std::nullopt;
}

bool in_holdout(std::string_view filename) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (unsigned char ch : filename) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h % 10 == 0;
}

namespace {

Tensor<float> centre_crop(const Tensor<float>& img, int size) {
  const Shape s = img.shape();
  if (s.h == size && s.w == size) return img;
  const int y0 = (s.h - size) / 2, x0 = (s.w - size) / 2;
  Tensor<float> out({s.n, s.c, size, size});
  for (int c = 0; c < s.c; ++c) {
    for (int y = 0; y < size; ++y) {
      std::copy_n(img.data().data() + s.index(0, c, y0 + y, x0), size,
                  out.data().data() + out.shape().index(0, c, y, 0));
    }
  }
  return out;
}

}  // namespace

Sample make_sample(std::string id, const Tensor<float>& rgb, Task task,
                   const std::optional<Tensor<float>>& pan) {
  const TaskSpec spec = task_spec(task);
  const Tensor<float> pan_full = pan ? *pan : rgb_to_pan(rgb);
  const int size = rgb.shape().h;
  if (size % spec.sr_factor != 0) {
    throw ConfigError("tile size " + std::to_string(size) + " not divisible by task factor " +
                      std::to_string(spec.sr_factor));
  }
  Sample s;
  s.id = std::move(id);
  s.input = bicubic_resize(pan_full, size / spec.sr_factor);
  s.target = spec.out_channels == 3 ? rgb.clone() : pan_full.clone();
  return s;
}

std::vector<Sample> ingest(const DatasetSpec& spec) {
  const auto rgb_dir = spec.root / "rgb";
  const auto pan_dir = spec.root / "pan";
  if (!std::filesystem::is_directory(rgb_dir)) {
    throw ConfigError("dataset root has no rgb/ directory: " + spec.root.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(rgb_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.filename() < b.filename(); });

  std::vector<Sample> samples;
  for (const auto& file : files) {
    const std::string name = file.filename().string();
    const bool holdout = in_holdout(name);
    if ((spec.split == Split::kTrain && holdout) ||
        ((spec.split == Split::kVal || spec.split == Split::kTest) && !holdout)) {
      continue;
    }
    try {
      Tensor<float> rgb = read_image(file, 3);
      const Shape s = rgb.shape();
      const int want = spec.tile_size > 0 ? spec.tile_size : s.h;
      if (s.h != s.w && spec.tile_size == 0) {
        std::cerr << "warning: skipping non-square tile " << name << " (" << s.h << "x" << s.w
                  << ")\n";
        continue;
      }
      if (want < 64 || s.h < want || s.w < want) {
        std::cerr << "warning: skipping " << name << ": tiles must be square and at least 64\n";
        continue;
      }
      rgb = centre_crop(rgb, want);
      std::optional<Tensor<float>> pan;
      if (std::filesystem::exists(pan_dir / name)) pan = centre_crop(read_image(pan_dir / name, 1), want);
      samples.push_back(make_sample(file.stem().string(), rgb, spec.task, pan));
    } catch (const RuntimeFailure& e) {
      std::cerr << "warning: skipping " << name << ": " << e.what() << "\n";
    }
  }
  if (samples.empty()) {
    throw RuntimeFailure("no usable tiles for the requested split under " + spec.root.string());
  }
  return samples;
}

std::vector<Tensor<float>> make_toy_tiles(int count, int size, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor<float>> tiles;
  for (int k = 0; k < count; ++k) {
    Tensor<float> t({1, 3, size, size});
    // Per channel: a few low-frequency sinusoids plus a colour offset.
    for (int c = 0; c < 3; ++c) {
      const double base = rng.uniform(0.25, 0.75);
      double fx[3], fy[3], ph[3], amp[3];
      for (int q = 0; q < 3; ++q) {
        fx[q] = rng.uniform(0.5, 3.0);
        fy[q] = rng.uniform(0.5, 3.0);
        ph[q] = rng.uniform(0.0, 6.283185307179586);
        amp[q] = rng.uniform(0.05, 0.15);
      }
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          double v = base;
          for (int q = 0; q < 3; ++q) {
            v += amp[q] * std::sin(6.283185307179586 * (fx[q] * x + fy[q] * y) / size + ph[q]);
          }
          t[t.shape().index(0, c, y, x)] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
    tiles.push_back(std::move(t));
  }
  return tiles;
}

void write_toy_corpus(const std::filesystem::path& root, int count, int size, std::uint64_t seed) {
  std::filesystem::create_directories(root / "rgb");
  const auto tiles = make_toy_tiles(count, size, seed);
  for (std::size_t k = 0; k < tiles.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "tile_%03zu.png", k);
    write_image(root / "rgb" / name, tiles[k]);
  }
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<std::pair<std::string, std::string>> read_key_values(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string_view body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    out.emplace_back(std::string(trim(body.substr(0, eq))), std::string(trim(body.substr(eq + 1))));
  }
  return out;
}

}  // namespace panrestore
