#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>
#include <numbers>

#include "unseg/data.hpp"
#include "unseg/error.hpp"

namespace unseg {

std::string to_string(Texture t) {
  switch (t) {
    case Texture::kNoise:
      return "noise";
    case Texture::kMarbleVeins:
      return "marble_veins";
    case Texture::kPlain:
      return "plain";
  }
  return "plain";
}

Texture parse_texture(std::string_view name) {
  if (name == "noise") return Texture::kNoise;
  if (name == "marble_veins") return Texture::kMarbleVeins;
  if (name == "plain") return Texture::kPlain;
  throw Error(ErrorCode::kInvalidArgument, "unknown texture '" + std::string(name) + "'");
}

void SynthSpec::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::kInvalidArgument, what);
  };
  require(n_samples >= 1, "n_samples must be positive");
  require(size.height >= 8 && size.width >= 8, "synthetic images must be at least 8x8");
  require(cracks_min >= 0 && cracks_min <= cracks_max, "bad crack count range");
  require(width_min >= 1.0 && width_min <= width_max, "crack width must be >= 1 px");
  require(steps_min >= 1 && steps_min <= steps_max, "bad step count range");
  require(step_min > 0 && step_min <= step_max, "bad step length range");
  require(darken_min >= 0 && darken_min <= darken_max && darken_max <= 1, "bad darkening range");
  require(!textures.empty(), "no textures");
  require(min_crack_fraction <= max_crack_fraction, "bad crack fraction band");
}

std::array<std::size_t, 3> SynthSpec::split_sizes() const {
  const auto held = static_cast<std::size_t>(std::lround(0.15 * static_cast<double>(n_samples)));
  const std::size_t v = std::min(held, n_samples / 3);
  return {n_samples - 2 * v, v, v};
}

double distance_to_polyline(const Polyline& line, double x, double y) {
  const auto& p = line.points;
  if (p.empty()) return std::numeric_limits<double>::infinity();
  if (p.size() == 1) return std::hypot(x - p[0][0], y - p[0][1]);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    const double ax = p[i][0], ay = p[i][1];
    const double dx = p[i + 1][0] - ax, dy = p[i + 1][1] - ay;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((x - ax) * dx + (y - ay) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    best = std::min(best, std::hypot(x - (ax + t * dx), y - (ay + t * dy)));
  }
  return best;
}

namespace {

// Bilinearly interpolated lattice noise in [0, 1).
class ValueNoise {
 public:
  ValueNoise(int height, int width, int cell, Rng& rng) : cell_(cell) {
    gh_ = height / cell + 2;
    gw_ = width / cell + 2;
    grid_.resize(static_cast<std::size_t>(gh_ * gw_));
    for (auto& v : grid_) v = rng.uniform();
  }
  double operator()(double y, double x) const {
    const double gy = y / cell_, gx = x / cell_;
    const int y0 = static_cast<int>(gy), x0 = static_cast<int>(gx);
    const double fy = gy - y0, fx = gx - x0;
    auto g = [&](int yy, int xx) { return grid_[static_cast<std::size_t>(yy * gw_ + xx)]; };
    return (1 - fy) * ((1 - fx) * g(y0, x0) + fx * g(y0, x0 + 1)) +
           fy * ((1 - fx) * g(y0 + 1, x0) + fx * g(y0 + 1, x0 + 1));
  }

 private:
  int cell_, gh_, gw_;
  std::vector<double> grid_;
};

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

Image render_background(Texture texture, int h, int w, Rng& rng) {
  Image img(h, w, 3);
  const double base = rng.uniform(110.0, 200.0);
  std::array<double, 3> tint{};
  for (auto& t : tint) t = rng.uniform(-12.0, 12.0);

  switch (texture) {
    case Texture::kPlain: {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double n = rng.uniform(-3.0, 3.0);
          for (int c = 0; c < 3; ++c) img.at(y, x, c) = to_byte(base + tint[c] + n);
        }
      }
      break;
    }
    case Texture::kNoise: {
      ValueNoise coarse(h, w, 16, rng);
      ValueNoise fine(h, w, 4, rng);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double n = 30.0 * (coarse(y, x) - 0.5) + 14.0 * (fine(y, x) - 0.5) + rng.uniform(-8.0, 8.0);
          for (int c = 0; c < 3; ++c) img.at(y, x, c) = to_byte(base + tint[c] + n);
        }
      }
      break;
    }
    case Texture::kMarbleVeins: {
      ValueNoise turb(h, w, 12, rng);
      const double angle = rng.uniform(0.0, std::numbers::pi);
      const double fx = std::cos(angle), fy = std::sin(angle);
      const double period = rng.uniform(10.0, 20.0);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double phase = (x * fx + y * fy) / period + 4.0 * turb(y, x);
          // Soft, wide veins: a low-contrast distractor for thin dark cracks.
          const double vein = std::pow(std::abs(std::sin(phase * std::numbers::pi)), 0.3);
          const double n = -35.0 * (1.0 - vein) + rng.uniform(-4.0, 4.0);
          for (int c = 0; c < 3; ++c) img.at(y, x, c) = to_byte(base + 20.0 + tint[c] + n);
        }
      }
      break;
    }
  }
  return img;
}

Polyline random_walk(const SynthSpec& spec, int h, int w, Rng& rng) {
  Polyline line;
  line.width = rng.uniform(spec.width_min, spec.width_max);
  double x = rng.uniform(0.0, w - 1.0), y = rng.uniform(0.0, h - 1.0);
  double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double max_turn = spec.max_turn_deg * std::numbers::pi / 180.0;
  const int steps = rng.uniform_int(spec.steps_min, spec.steps_max);
  line.points.push_back({x, y});
  for (int i = 0; i < steps; ++i) {
    heading += rng.uniform(-max_turn, max_turn);
    const double len = rng.uniform(spec.step_min, spec.step_max);
    x += len * std::cos(heading);
    y += len * std::sin(heading);
    line.points.push_back({x, y});
  }
  return line;
}

}  // namespace

SynthImage synthesize_image(const SynthSpec& spec, std::size_t index) {
  spec.validate();
  const int h = static_cast<int>(spec.size.height), w = static_cast<int>(spec.size.width);
  Rng rng(derive_seed(spec.seed, {0x53594E54ULL, index}));

  SynthImage out;
  out.texture = spec.textures[rng.below(spec.textures.size())];
  const Image background = render_background(out.texture, h, w, rng);

  constexpr int kMaxAttempts = 64;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const int n_cracks = rng.uniform_int(spec.cracks_min, spec.cracks_max);
    std::vector<Polyline> cracks;
    std::vector<double> darken;
    for (int k = 0; k < n_cracks; ++k) {
      cracks.push_back(random_walk(spec, h, w, rng));
      darken.push_back(rng.uniform(spec.darken_min, spec.darken_max));
    }

    Image image = background;
    Image mask(h, w, 1);
    std::size_t crack_pixels = 0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double keep = 1.0;
        for (std::size_t k = 0; k < cracks.size(); ++k) {
          if (distance_to_polyline(cracks[k], x, y) <= 0.5 * cracks[k].width) keep = std::min(keep, 1.0 - darken[k]);
        }
        if (keep < 1.0) {
          mask.at(y, x) = 1;
          ++crack_pixels;
          for (int c = 0; c < 3; ++c) image.at(y, x, c) = to_byte(image.at(y, x, c) * keep);
        }
      }
    }

    const double fraction = static_cast<double>(crack_pixels) / (static_cast<double>(h) * w);
    const bool in_band = fraction >= spec.min_crack_fraction && fraction <= spec.max_crack_fraction;
    if (n_cracks == 0 || in_band || attempt + 1 == kMaxAttempts) {
      out.sample = Sample{std::move(image), std::move(mask), ""};
      out.cracks = std::move(cracks);
      return out;
    }
  }
  return out;
}

DatasetManifest generate_synthetic(const SynthSpec& spec, const std::filesystem::path& root) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(root / "images", ec);
  if (!ec) std::filesystem::create_directories(root / "masks", ec);
  if (ec) throw Error(ErrorCode::kIoError, root.string() + ": " + ec.message());

  DatasetManifest m;
  m.root = root;
  const auto sizes = spec.split_sizes();
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "synth_%04zu", i);
    SynthImage s = synthesize_image(spec, i);
    write_png(m.image_path(stem), s.sample.image);
    write_mask_png(m.mask_path(stem), s.sample.mask);
    if (i < sizes[0]) {
      m.train.emplace_back(stem);
    } else if (i < sizes[0] + sizes[1]) {
      m.valid.emplace_back(stem);
    } else {
      m.test.emplace_back(stem);
    }
  }
  m.write_splits();
  return m;
}

}  // namespace unseg
