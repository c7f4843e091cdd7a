#include "support/synthetic.hpp"

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "mist/dataset.hpp"
#include "mist/nifti.hpp"
#include "mist/volume_ops.hpp"

namespace fs = std::filesystem;

namespace mist::testing {

namespace {

double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

Mat3 random_signed_permutation(std::mt19937_64& rng) {
  std::array<int, 3> perm{0, 1, 2};
  for (int i = 2; i > 0; --i)
    std::swap(perm[static_cast<std::size_t>(i)],
              perm[rng() % static_cast<std::uint64_t>(i + 1)]);
  Mat3 m;
  for (int col = 0; col < 3; ++col) {
    Vec3 c{0.0, 0.0, 0.0};
    c[static_cast<std::size_t>(perm[static_cast<std::size_t>(col)])] =
        (rng() & 1) ? 1.0 : -1.0;
    m.col[static_cast<std::size_t>(col)] = c;
  }
  return m;
}

}  // namespace

Volume random_volume(std::mt19937_64& rng, std::int64_t max_extent,
                     std::int64_t channels, VoxelKind kind) {
  std::uniform_int_distribution<std::int64_t> extent(2, max_extent);
  const Index3 shape{extent(rng), extent(rng), extent(rng)};
  Volume v(shape, channels, kind);

  std::uniform_real_distribution<double> spacing_dist(0.4, 3.5);
  std::uniform_real_distribution<double> origin_dist(-100.0, 100.0);
  v.set_spacing({f32(spacing_dist(rng)), f32(spacing_dist(rng)),
                 f32(spacing_dist(rng))});
  v.set_origin({f32(origin_dist(rng)), f32(origin_dist(rng)),
                f32(origin_dist(rng))});
  v.set_direction(random_signed_permutation(rng));

  if (kind == VoxelKind::labels) {
    std::uniform_int_distribution<int> label(0, 4);
    for (auto& x : v.data()) x = static_cast<float>(label(rng));
  } else {
    std::uniform_real_distribution<double> value(-500.0, 1500.0);
    for (auto& x : v.data()) x = static_cast<float>(value(rng));
  }
  return v;
}

SyntheticPatient make_patient(std::uint64_t seed, std::int64_t channels,
                              const std::vector<std::int64_t>& labels,
                              const Vec3& spacing,
                              const std::string& orientation) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int64_t> jitter(0, 4);
  const Index3 shape{34 + jitter(rng), 34 + jitter(rng), 18 + jitter(rng)};

  Volume mask(shape, 1, VoxelKind::labels);
  mask.set_spacing(spacing);
  std::uniform_real_distribution<double> origin_dist(-40.0, 40.0);
  mask.set_origin({f32(origin_dist(rng)), f32(origin_dist(rng)),
                   f32(origin_dist(rng))});

  // Head block with a margin, labeled sub-blocks strictly inside it.
  const Index3 head_lo{4, 4, 3};
  const Index3 head_hi{shape[0] - 4, shape[1] - 4, shape[2] - 3};
  std::vector<std::int64_t> fg_labels;
  for (std::int64_t l : labels) {
    if (l != 0) fg_labels.push_back(l);
  }
  const std::int64_t span = (head_hi[0] - head_lo[0]) /
                            static_cast<std::int64_t>(fg_labels.size());
  for (std::size_t li = 0; li < fg_labels.size(); ++li) {
    const std::int64_t x0 = head_lo[0] + static_cast<std::int64_t>(li) * span + 1;
    const std::int64_t x1 = x0 + std::max<std::int64_t>(2, span - 2);
    for (std::int64_t k = head_lo[2] + 2; k < head_hi[2] - 2; ++k) {
      for (std::int64_t j = head_lo[1] + 3; j < head_hi[1] - 3; ++j) {
        for (std::int64_t i = x0; i < std::min(x1, head_hi[0] - 1); ++i) {
          mask.at(0, i, j, k) = static_cast<float>(fg_labels[li]);
        }
      }
    }
  }

  Volume image(shape, channels, VoxelKind::continuous);
  image.copy_geometry_from(mask);
  std::uniform_real_distribution<double> noise(0.0, 10.0);
  for (std::int64_t c = 0; c < channels; ++c) {
    for (std::int64_t k = 0; k < shape[2]; ++k) {
      for (std::int64_t j = 0; j < shape[1]; ++j) {
        for (std::int64_t i = 0; i < shape[0]; ++i) {
          const bool in_head = i >= head_lo[0] && i < head_hi[0] &&
                               j >= head_lo[1] && j < head_hi[1] &&
                               k >= head_lo[2] && k < head_hi[2];
          if (!in_head) continue;
          const double label = mask.at(0, i, j, k);
          image.at(c, i, j, k) = static_cast<float>(
              100.0 + 25.0 * label + 10.0 * static_cast<double>(c) +
              noise(rng));
        }
      }
    }
  }

  SyntheticPatient out{std::move(image), std::move(mask)};
  const OrientationCode code = OrientationCode::from_string(orientation);
  out.image = reorient(out.image, code);
  out.mask = reorient(out.mask, code);
  return out;
}

fs::path write_synthetic_dataset(const fs::path& root,
                                 const SyntheticDatasetOptions& options) {
  static const std::array<const char*, 5> kOrientations{"RAI", "LPS", "ASL",
                                                        "RSP", "IRA"};
  const fs::path train = root / "train";
  fs::create_directories(train);

  std::mt19937_64 rng(options.seed);
  for (int p = 0; p < options.n_patients; ++p) {
    char id[16];
    std::snprintf(id, sizeof(id), "case_%03d", p);
    Vec3 spacing = options.spacing;
    if (options.vary_spacing) {
      for (int a = 0; a < 3; ++a) {
        spacing[static_cast<std::size_t>(a)] = static_cast<double>(
            static_cast<float>(spacing[static_cast<std::size_t>(a)] *
                               (0.85 + 0.05 * static_cast<double>(p % 7))));
      }
    }
    const std::string orientation =
        options.vary_orientation
            ? kOrientations[static_cast<std::size_t>(p) % kOrientations.size()]
            : "RAI";
    const SyntheticPatient patient =
        make_patient(options.seed * 1000 + static_cast<std::uint64_t>(p),
                     options.channels, options.labels, spacing, orientation);

    const fs::path dir = train / id;
    fs::create_directories(dir);
    for (std::int64_t c = 0; c < options.channels; ++c) {
      nifti::write_nifti(patient.image.channel(c),
                         dir / (std::string(id) + "_mod" + std::to_string(c) +
                                ".nii.gz"));
    }
    nifti::write_nifti(patient.mask, dir / (std::string(id) + "_seg.nii.gz"));
  }

  data::DatasetDescription desc;
  desc.task_name = "synthetic";
  desc.modality = data::Modality::mr;
  desc.train_dir = train;
  desc.mask_patterns = {"_seg."};
  for (std::int64_t c = 0; c < options.channels; ++c)
    desc.image_patterns.emplace_back(
        "mod" + std::to_string(c),
        std::vector<std::string>{"_mod" + std::to_string(c) + "."});
  desc.labels = options.labels;
  for (std::int64_t l : options.labels) {
    if (l != 0)
      desc.final_classes.emplace_back("c" + std::to_string(l),
                                      std::vector<std::int64_t>{l});
  }
  std::vector<std::int64_t> whole;
  for (std::int64_t l : options.labels) {
    if (l != 0) whole.push_back(l);
  }
  desc.final_classes.emplace_back("whole", whole);

  const fs::path json_path = root / "dataset.json";
  std::ofstream out(json_path);
  out << data::description_to_json(desc);
  return json_path;
}

fs::path make_temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const fs::path dir = fs::temp_directory_path() /
                       ("mist_test_" + tag + "_" +
                        std::to_string(counter.fetch_add(1)) + "_" +
                        std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

bool volumes_close(const Volume& a, const Volume& b, double value_tol,
                   double geometry_tol) {
  if (a.shape() != b.shape() || a.channels() != b.channels()) return false;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    if (std::abs(static_cast<double>(a.data()[i]) -
                 static_cast<double>(b.data()[i])) > value_tol)
      return false;
  }
  for (int axis = 0; axis < 3; ++axis) {
    const auto ia = static_cast<std::size_t>(axis);
    if (std::abs(a.spacing()[ia] - b.spacing()[ia]) > geometry_tol)
      return false;
    if (std::abs(a.origin()[ia] - b.origin()[ia]) > geometry_tol) return false;
    for (int row = 0; row < 3; ++row) {
      if (std::abs(a.direction().col[ia][static_cast<std::size_t>(row)] -
                   b.direction().col[ia][static_cast<std::size_t>(row)]) >
          geometry_tol)
        return false;
    }
  }
  return true;
}

}  // namespace mist::testing
