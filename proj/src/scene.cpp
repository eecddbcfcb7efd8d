#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "bfg/errors.hpp"
#include "bfg/pointcloud.hpp"

namespace bfg {

namespace {

constexpr double kPi = std::numbers::pi;

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// A sampled surface: total area plus a function drawing one uniform point.
struct Surface {
  double area = 0.0;
  std::function<Point3(Rng&)> draw;
};

// Several faces sampled in proportion to their areas.
Surface union_of(std::vector<Surface> faces) {
  double total = 0.0;
  for (const auto& f : faces) total += f.area;
  return Surface{total, [faces = std::move(faces), total](Rng& rng) {
                   double u = uniform(rng, 0.0, total);
                   for (const auto& f : faces) {
                     if (u < f.area) return f.draw(rng);
                     u -= f.area;
                   }
                   return faces.back().draw(rng);
                 }};
}

// Axis-aligned rectangle spanned from `origin` by edge vectors a and b.
Surface parallelogram(Point3 origin, Point3 a, Point3 b) {
  const Point3 n{a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
  const double area = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
  return Surface{area, [=](Rng& rng) {
                   const double s = uniform(rng, 0.0, 1.0), t = uniform(rng, 0.0, 1.0);
                   return Point3{origin[0] + s * a[0] + t * b[0], origin[1] + s * a[1] + t * b[1],
                                 origin[2] + s * a[2] + t * b[2]};
                 }};
}

Surface triangle(Point3 p0, Point3 p1, Point3 p2) {
  const Point3 a{p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]};
  const Point3 b{p2[0] - p0[0], p2[1] - p0[1], p2[2] - p0[2]};
  const Point3 n{a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
  const double area = 0.5 * std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
  return Surface{area, [=](Rng& rng) {
                   double s = uniform(rng, 0.0, 1.0), t = uniform(rng, 0.0, 1.0);
                   if (s + t > 1.0) {
                     s = 1.0 - s;
                     t = 1.0 - t;
                   }
                   return Point3{p0[0] + s * a[0] + t * b[0], p0[1] + s * a[1] + t * b[1], p0[2] + s * a[2] + t * b[2]};
                 }};
}

// Instance geometry in a local frame: base centered at the origin on z = 0.
struct Instance {
  int label = 0;
  Point3 color{};
  Surface surface;
  double height = 1.0;
  double taper = 0.0;     // horizontal shrink at the top, fraction
  double squash = 0.0;    // vertical compression, fraction
  int quarter_turns = 0;  // rotation about z by multiples of 90 degrees
  Point3 offset{};
};

Point3 place(const Instance& inst, Point3 p) {
  const double t = inst.height > 0.0 ? std::clamp(p[2] / inst.height, 0.0, 1.0) : 0.0;
  const double shrink = 1.0 - inst.taper * t;
  double x = p[0] * shrink, y = p[1] * shrink;
  for (int q = 0; q < inst.quarter_turns; ++q) {
    const double nx = -y;
    y = x;
    x = nx;
  }
  return Point3{x + inst.offset[0], y + inst.offset[1], p[2] * (1.0 - inst.squash) + inst.offset[2]};
}

Surface box_surface(double ex, double ey, double ez) {
  const double hx = ex / 2, hy = ey / 2;
  return union_of({
      parallelogram({-hx, -hy, ez}, {ex, 0, 0}, {0, ey, 0}),
      parallelogram({-hx, -hy, 0}, {ex, 0, 0}, {0, 0, ez}),
      parallelogram({-hx, hy, 0}, {ex, 0, 0}, {0, 0, ez}),
      parallelogram({-hx, -hy, 0}, {0, ey, 0}, {0, 0, ez}),
      parallelogram({hx, -hy, 0}, {0, ey, 0}, {0, 0, ez}),
  });
}

Surface cylinder_surface(double radius, double height) {
  Surface side{2 * kPi * radius * height, [=](Rng& rng) {
                 const double a = uniform(rng, 0.0, 2 * kPi);
                 return Point3{radius * std::cos(a), radius * std::sin(a), uniform(rng, 0.0, height)};
               }};
  Surface top{kPi * radius * radius, [=](Rng& rng) {
                const double a = uniform(rng, 0.0, 2 * kPi);
                const double r = radius * std::sqrt(uniform(rng, 0.0, 1.0));
                return Point3{r * std::cos(a), r * std::sin(a), height};
              }};
  return union_of({side, top});
}

// Triangular prism: full height at x = -ex/2 sloping to the floor at x = +ex/2.
Surface wedge_surface(double ex, double ey, double ez) {
  const double hx = ex / 2, hy = ey / 2;
  return union_of({
      parallelogram({-hx, -hy, ez}, {ex, 0, -ez}, {0, ey, 0}),
      parallelogram({-hx, -hy, 0}, {0, ey, 0}, {0, 0, ez}),
      triangle({-hx, -hy, 0}, {hx, -hy, 0}, {-hx, -hy, ez}),
      triangle({-hx, hy, 0}, {hx, hy, 0}, {-hx, hy, ez}),
  });
}

Surface sphere_surface(double radius) {
  return Surface{4 * kPi * radius * radius, [=](Rng& rng) {
                   const double z = uniform(rng, -1.0, 1.0);
                   const double a = uniform(rng, 0.0, 2 * kPi);
                   const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
                   return Point3{radius * r * std::cos(a), radius * r * std::sin(a), radius * (z + 1.0)};
                 }};
}

std::vector<Instance> make_instances(const ClassGenerator& gen, const SceneSpec& spec, Rng& rng) {
  const double room = spec.room_size;
  std::vector<Instance> out;
  auto scale = [&] { return uniform(rng, gen.scale_min, gen.scale_max); };
  const int count = std::uniform_int_distribution<int>(gen.min_instances, gen.max_instances)(rng);

  if (gen.kind == PrimitiveKind::FloorPlane) {
    Instance inst;
    inst.surface = parallelogram({0, 0, 0}, {room, 0, 0}, {0, room, 0});
    out.push_back(std::move(inst));
  } else if (gen.kind == PrimitiveKind::WallPlane) {
    // Distinct sides of the room, chosen at random.
    std::vector<int> sides{0, 1, 2, 3};
    std::shuffle(sides.begin(), sides.end(), rng);
    for (int i = 0; i < std::min(count, 4); ++i) {
      const double h = scale();
      Instance inst;
      switch (sides[i]) {
        case 0: inst.surface = parallelogram({0, 0, 0}, {room, 0, 0}, {0, 0, h}); break;
        case 1: inst.surface = parallelogram({0, room, 0}, {room, 0, 0}, {0, 0, h}); break;
        case 2: inst.surface = parallelogram({0, 0, 0}, {0, room, 0}, {0, 0, h}); break;
        default: inst.surface = parallelogram({room, 0, 0}, {0, room, 0}, {0, 0, h}); break;
      }
      out.push_back(std::move(inst));
    }
  } else {
    for (int i = 0; i < count; ++i) {
      Instance inst;
      double ex = scale(), ey = scale(), ez = scale();
      switch (gen.kind) {
        case PrimitiveKind::Box: inst.surface = box_surface(ex, ey, ez); break;
        case PrimitiveKind::Cylinder:
          ey = ex;
          inst.surface = cylinder_surface(ex / 2, ez);
          break;
        case PrimitiveKind::Wedge: inst.surface = wedge_surface(ex, ey, ez); break;
        default:
          ey = ex;
          ez = ex;
          inst.surface = sphere_surface(ex / 2);
          break;
      }
      inst.height = ez;
      const double amount = uniform(rng, 0.0, spec.deformation);
      if (gen.kind == PrimitiveKind::Sphere) {
        inst.squash = amount;
      } else {
        inst.taper = amount;
      }
      inst.quarter_turns = std::uniform_int_distribution<int>(0, 3)(rng);
      const double half = std::max(ex, ey) / 2;
      const double lo = std::min(half, room / 2), hi = std::max(room - half, room / 2);
      inst.offset = {uniform(rng, lo, hi), uniform(rng, lo, hi), 0.0};
      out.push_back(std::move(inst));
    }
  }
  for (auto& inst : out) {
    inst.label = gen.label;
    for (int c = 0; c < 3; ++c) inst.color[c] = std::clamp(gen.color[c] + uniform(rng, -0.08, 0.08), 0.0, 1.0);
  }
  return out;
}

}  // namespace

std::vector<ClassGenerator> SceneSpec::default_universe() {
  return {
      {"box", 1, PrimitiveKind::Box, 0.4, 0.9, 1, 3, {0.85, 0.25, 0.20}},
      {"cylinder", 2, PrimitiveKind::Cylinder, 0.35, 0.8, 1, 3, {0.20, 0.70, 0.30}},
      {"floor", 3, PrimitiveKind::FloorPlane, 1.0, 1.0, 1, 1, {0.55, 0.45, 0.35}},
      {"sphere", 4, PrimitiveKind::Sphere, 0.45, 0.9, 1, 3, {0.25, 0.35, 0.85}},
      {"wall", 5, PrimitiveKind::WallPlane, 1.0, 2.0, 2, 4, {0.85, 0.85, 0.80}},
      {"wedge", 6, PrimitiveKind::Wedge, 0.4, 0.9, 1, 3, {0.90, 0.75, 0.15}},
  };
}

void SceneSpec::validate() const {
  if (classes.empty()) throw ConfigError("scene spec: empty class universe");
  if (!(room_size > 0.0)) throw ConfigError("scene spec: room_size must be positive");
  if (deformation < 0.0 || deformation >= 1.0) throw ConfigError("scene spec: deformation must lie in [0, 1)");
  if (clutter_fraction < 0.0 || clutter_fraction >= 1.0) throw ConfigError("scene spec: clutter_fraction must lie in [0, 1)");
  if (color_noise < 0.0) throw ConfigError("scene spec: color_noise must be >= 0");
  if (points_per_scene < block_sample_size || points_per_scene == 0) {
    throw ConfigError("scene spec: points_per_scene must be >= the block sample size");
  }
  for (const auto& c : classes) {
    if (c.label <= 0) throw ConfigError("scene spec: class '" + c.name + "' must have a label >= 1");
    if (!(c.scale_min > 0.0) || c.scale_max < c.scale_min) {
      throw ConfigError("scene spec: class '" + c.name + "' needs a positive scale range");
    }
    if (c.min_instances < 1 || c.max_instances < c.min_instances) {
      throw ConfigError("scene spec: class '" + c.name + "' has an invalid instance count range");
    }
  }
}

LabeledCloud generate_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  std::vector<Instance> instances;
  for (const auto& gen : spec.classes) {
    auto more = make_instances(gen, spec, rng);
    for (auto& inst : more) instances.push_back(std::move(inst));
  }

  const auto clutter = static_cast<std::size_t>(std::round(spec.clutter_fraction * static_cast<double>(spec.points_per_scene)));
  const std::size_t budget = spec.points_per_scene - clutter;

  // Area-proportional allocation, largest remainder so the counts sum to budget.
  double total_area = 0.0;
  for (const auto& inst : instances) total_area += inst.surface.area;
  std::vector<std::size_t> counts(instances.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const double exact = static_cast<double>(budget) * instances[i].surface.area / total_area;
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[i];
    remainders.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < budget; ++r, ++assigned) ++counts[remainders[r % remainders.size()].second];

  LabeledCloud cloud;
  std::normal_distribution<double> color_jitter(0.0, spec.color_noise > 0.0 ? spec.color_noise : 1.0);
  auto noisy = [&](const Point3& base) {
    Point3 c = base;
    if (spec.color_noise > 0.0)
      for (double& v : c) v = std::clamp(v + color_jitter(rng), 0.0, 1.0);
    return c;
  };
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    for (std::size_t p = 0; p < counts[i]; ++p) {
      cloud.push_back(place(inst, inst.surface.draw(rng)), noisy(inst.color), inst.label);
    }
  }

  // Clutter: small Gaussian blobs of background points inside the room.
  if (clutter > 0) {
    const int blobs = std::uniform_int_distribution<int>(4, 8)(rng);
    std::vector<Point3> centers;
    for (int b = 0; b < blobs; ++b) {
      centers.push_back({uniform(rng, 0.0, spec.room_size), uniform(rng, 0.0, spec.room_size), uniform(rng, 0.05, 1.0)});
    }
    std::normal_distribution<double> spread(0.0, 0.06);
    for (std::size_t p = 0; p < clutter; ++p) {
      const auto& c = centers[p % centers.size()];
      Point3 xyz{std::clamp(c[0] + spread(rng), 0.0, spec.room_size), std::clamp(c[1] + spread(rng), 0.0, spec.room_size),
                 std::max(0.0, c[2] + spread(rng))};
      cloud.push_back(xyz, noisy({0.45, 0.45, 0.45}), 0);
    }
  }
  return cloud;
}

}  // namespace bfg
