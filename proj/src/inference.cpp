#include "mist/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mist/log.hpp"
#include "mist/nifti.hpp"
#include "mist/resample.hpp"
#include "mist/volume_ops.hpp"
#include "mist/worker_pool.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace mist::infer {

void ConstantPredictor::predict(const std::vector<float>& patch,
                                const Index3& patch_shape,
                                const PatchContext& ctx,
                                std::vector<float>& probs_out) const {
  (void)patch;
  (void)ctx;
  const std::int64_t nvox =
      patch_shape[0] * patch_shape[1] * patch_shape[2];
  probs_out.assign(static_cast<std::size_t>(n_labels_ * nvox),
                   static_cast<float>(1.0 / static_cast<double>(n_labels_)));
}

ThresholdPredictor::ThresholdPredictor(std::int64_t channels,
                                       const std::vector<std::int64_t>& labels,
                                       double threshold)
    : channels_(channels),
      n_labels_(static_cast<std::int64_t>(labels.size())),
      threshold_(threshold) {
  const auto it = std::find(labels.begin(), labels.end(), std::int64_t{1});
  if (it == labels.end())
    throw Error(ErrorCode::InvalidArgument,
                "threshold predictor needs label 1 in the label list");
  positive_channel_ = static_cast<std::size_t>(it - labels.begin());
}

void ThresholdPredictor::predict(const std::vector<float>& patch,
                                 const Index3& patch_shape,
                                 const PatchContext& ctx,
                                 std::vector<float>& probs_out) const {
  (void)ctx;
  const std::int64_t nvox =
      patch_shape[0] * patch_shape[1] * patch_shape[2];
  probs_out.assign(static_cast<std::size_t>(n_labels_ * nvox), 0.0f);
  for (std::int64_t v = 0; v < nvox; ++v) {
    const bool positive = patch[static_cast<std::size_t>(v)] >
                          static_cast<float>(threshold_);
    const std::size_t channel = positive ? positive_channel_ : 0;
    probs_out[channel * static_cast<std::size_t>(nvox) +
              static_cast<std::size_t>(v)] = 1.0f;
  }
}

OraclePredictor::OraclePredictor(Volume truth,
                                 std::vector<std::int64_t> labels,
                                 std::int64_t channels)
    : truth_(std::move(truth)), labels_(std::move(labels)),
      channels_(channels) {
  if (truth_.channels() != 1 || truth_.kind() != VoxelKind::labels)
    throw Error(ErrorCode::InvalidArgument,
                "oracle needs a single-channel label mask");
}

void OraclePredictor::predict(const std::vector<float>& patch,
                              const Index3& patch_shape,
                              const PatchContext& ctx,
                              std::vector<float>& probs_out) const {
  (void)patch;
  const std::int64_t nvox =
      patch_shape[0] * patch_shape[1] * patch_shape[2];
  probs_out.assign(
      static_cast<std::size_t>(nvox) * labels_.size(), 0.0f);
  for (std::int64_t pk = 0; pk < patch_shape[2]; ++pk) {
    for (std::int64_t pj = 0; pj < patch_shape[1]; ++pj) {
      for (std::int64_t pi = 0; pi < patch_shape[0]; ++pi) {
        const std::int64_t p =
            pi + patch_shape[0] * (pj + patch_shape[1] * pk);
        const std::int64_t padded[3] = {ctx.origin[0] + pi,
                                        ctx.origin[1] + pj,
                                        ctx.origin[2] + pk};
        float label = 0.0f;
        bool in_range = true;
        std::int64_t coord[3];
        for (int a = 0; a < 3; ++a) {
          const auto ia = static_cast<std::size_t>(a);
          std::int64_t u = padded[a] - ctx.pad_lo[ia];
          if (u < 0 || u >= ctx.image_shape[ia]) {
            in_range = false;
            break;
          }
          coord[a] = ctx.flipped[ia] ? ctx.image_shape[ia] - 1 - u : u;
        }
        if (in_range) label = truth_.at(0, coord[0], coord[1], coord[2]);

        std::size_t channel = 0;
        for (std::size_t l = 0; l < labels_.size(); ++l) {
          if (label == static_cast<float>(labels_[l])) {
            channel = l;
            break;
          }
        }
        probs_out[channel * static_cast<std::size_t>(nvox) +
                  static_cast<std::size_t>(p)] = 1.0f;
      }
    }
  }
}

std::vector<double> gaussian_importance(const Index3& patch_size,
                                        double sigma_scale) {
  std::array<std::vector<double>, 3> axis;
  for (int a = 0; a < 3; ++a) {
    const auto ia = static_cast<std::size_t>(a);
    const std::int64_t n = patch_size[ia];
    if (n < 1)
      throw Error(ErrorCode::InvalidArgument, "patch size must be >= 1");
    const double center = static_cast<double>(n - 1) / 2.0;
    const double sigma = sigma_scale * static_cast<double>(n);
    axis[ia].resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
      const double d = (static_cast<double>(i) - center) / sigma;
      axis[ia][static_cast<std::size_t>(i)] = std::exp(-0.5 * d * d);
    }
    const double max_w =
        *std::max_element(axis[ia].begin(), axis[ia].end());
    for (double& w : axis[ia]) w /= max_w;
  }

  std::vector<double> out(static_cast<std::size_t>(
      patch_size[0] * patch_size[1] * patch_size[2]));
  std::size_t idx = 0;
  for (std::int64_t k = 0; k < patch_size[2]; ++k) {
    for (std::int64_t j = 0; j < patch_size[1]; ++j) {
      for (std::int64_t i = 0; i < patch_size[0]; ++i) {
        out[idx++] = std::max(
            1e-6, axis[0][static_cast<std::size_t>(i)] *
                      axis[1][static_cast<std::size_t>(j)] *
                      axis[2][static_cast<std::size_t>(k)]);
      }
    }
  }
  return out;
}

std::vector<std::int64_t> window_origins_axis(std::int64_t extent,
                                              std::int64_t patch,
                                              double overlap) {
  if (extent < patch)
    throw Error(ErrorCode::InvalidArgument,
                "volume must be padded to at least the patch size");
  const std::int64_t stride = std::max<std::int64_t>(
      1, static_cast<std::int64_t>(
             std::ceil(static_cast<double>(patch) * (1.0 - overlap))));
  std::vector<std::int64_t> out;
  for (std::int64_t o = 0;; o += stride) {
    if (o + patch >= extent) {
      out.push_back(std::min(o, extent - patch));
      break;
    }
    out.push_back(o);
  }
  return out;
}

std::vector<Index3> window_origins(const Index3& volume_shape,
                                   const Index3& patch_size, double overlap) {
  std::array<std::vector<std::int64_t>, 3> per_axis;
  for (int a = 0; a < 3; ++a) {
    const auto ia = static_cast<std::size_t>(a);
    per_axis[ia] =
        window_origins_axis(volume_shape[ia], patch_size[ia], overlap);
  }
  std::vector<Index3> out;
  for (std::int64_t ok : per_axis[2]) {
    for (std::int64_t oj : per_axis[1]) {
      for (std::int64_t oi : per_axis[0]) out.push_back(Index3{oi, oj, ok});
    }
  }
  return out;
}

namespace {

// Shared by the plain pass and the TTA passes; flips are applied to the
// image, recorded in the context, and undone on the returned probabilities.
Volume sliding_window_impl(const Volume& image,
                           const PatchPredictor& predictor,
                           const BlendSpec& spec,
                           const std::array<bool, 3>& flips) {
  if (image.channels() != predictor.input_channels())
    throw Error(ErrorCode::PredictorShapeError,
                "image channels do not match the predictor");
  if (spec.overlap < 0.0 || spec.overlap >= 1.0)
    throw Error(ErrorCode::InvalidArgument, "overlap must be in [0, 1)");

  Volume flipped = image;
  for (int a = 0; a < 3; ++a) {
    if (flips[static_cast<std::size_t>(a)]) flipped = flip_axis(flipped, a);
  }

  const Index3 patch = spec.patch_size;
  const Volume padded = pad_to(flipped, patch, 0.0f);
  Index3 pad_lo{0, 0, 0};
  for (int a = 0; a < 3; ++a) {
    const auto ia = static_cast<std::size_t>(a);
    pad_lo[ia] =
        std::max<std::int64_t>(0, patch[ia] - flipped.shape()[ia]) / 2;
  }

  const Index3 grid = padded.shape();
  const std::int64_t grid_vox = grid[0] * grid[1] * grid[2];
  const std::int64_t patch_vox = patch[0] * patch[1] * patch[2];
  const std::int64_t n_labels = predictor.output_labels();

  const std::vector<double> weight =
      gaussian_importance(patch, spec.sigma_scale);
  const std::vector<Index3> origins =
      window_origins(grid, patch, spec.overlap);

  std::vector<double> acc(static_cast<std::size_t>(n_labels * grid_vox), 0.0);
  std::vector<double> acc_weight(static_cast<std::size_t>(grid_vox), 0.0);
  std::vector<float> patch_data(
      static_cast<std::size_t>(flipped.channels() * patch_vox));
  std::vector<float> probs;

  for (const Index3& origin : origins) {
    for (std::int64_t c = 0; c < flipped.channels(); ++c) {
      const float* src = padded.channel_data(c);
      std::size_t dst = static_cast<std::size_t>(c * patch_vox);
      for (std::int64_t pk = 0; pk < patch[2]; ++pk) {
        for (std::int64_t pj = 0; pj < patch[1]; ++pj) {
          const std::int64_t base =
              padded.index(origin[0], origin[1] + pj, origin[2] + pk);
          for (std::int64_t pi = 0; pi < patch[0]; ++pi)
            patch_data[dst++] = src[base + pi];
        }
      }
    }

    PatchContext ctx{origin, pad_lo, flipped.shape(), flips};
    predictor.predict(patch_data, patch, ctx, probs);
    if (probs.size() != static_cast<std::size_t>(n_labels * patch_vox))
      throw Error(ErrorCode::PredictorShapeError,
                  "predictor returned the wrong number of probabilities");

    for (std::int64_t l = 0; l < n_labels; ++l) {
      const float* p = probs.data() + l * patch_vox;
      double* a = acc.data() + l * grid_vox;
      for (std::int64_t pk = 0; pk < patch[2]; ++pk) {
        for (std::int64_t pj = 0; pj < patch[1]; ++pj) {
          const std::int64_t base =
              padded.index(origin[0], origin[1] + pj, origin[2] + pk);
          const std::int64_t pbase = patch[0] * (pj + patch[1] * pk);
          for (std::int64_t pi = 0; pi < patch[0]; ++pi)
            a[base + pi] += weight[static_cast<std::size_t>(pbase + pi)] *
                            static_cast<double>(p[pbase + pi]);
        }
      }
    }
    for (std::int64_t pk = 0; pk < patch[2]; ++pk) {
      for (std::int64_t pj = 0; pj < patch[1]; ++pj) {
        const std::int64_t base =
            padded.index(origin[0], origin[1] + pj, origin[2] + pk);
        const std::int64_t pbase = patch[0] * (pj + patch[1] * pk);
        for (std::int64_t pi = 0; pi < patch[0]; ++pi)
          acc_weight[static_cast<std::size_t>(base + pi)] +=
              weight[static_cast<std::size_t>(pbase + pi)];
      }
    }
  }

  Volume blended(grid, n_labels, VoxelKind::continuous);
  blended.copy_geometry_from(padded);
  for (std::int64_t l = 0; l < n_labels; ++l) {
    float* dst = blended.channel_data(l);
    const double* a = acc.data() + l * grid_vox;
    for (std::int64_t v = 0; v < grid_vox; ++v)
      dst[v] =
          static_cast<float>(a[v] / acc_weight[static_cast<std::size_t>(v)]);
  }

  const BoundingBox box{pad_lo,
                        {pad_lo[0] + flipped.shape()[0],
                         pad_lo[1] + flipped.shape()[1],
                         pad_lo[2] + flipped.shape()[2]}};
  Volume out = crop(blended, box);
  out.copy_geometry_from(image);

  for (int a = 2; a >= 0; --a) {
    if (flips[static_cast<std::size_t>(a)]) out = flip_axis(out, a);
  }
  return out;
}

}  // namespace

Volume sliding_window_predict(const Volume& image,
                              const PatchPredictor& predictor,
                              const BlendSpec& spec) {
  return sliding_window_impl(image, predictor, spec,
                             {false, false, false});
}

Volume tta_predict(const Volume& image, const PatchPredictor& predictor,
                   const BlendSpec& spec, bool all_flip_combinations) {
  std::vector<std::array<bool, 3>> passes;
  if (all_flip_combinations) {
    for (int bits = 0; bits < 8; ++bits)
      passes.push_back({(bits & 1) != 0, (bits & 2) != 0, (bits & 4) != 0});
  } else {
    passes.push_back({false, false, false});
    passes.push_back({true, false, false});
    passes.push_back({false, true, false});
    passes.push_back({false, false, true});
  }

  std::vector<Volume> results;
  results.reserve(passes.size());
  for (const auto& flips : passes)
    results.push_back(sliding_window_impl(image, predictor, spec, flips));
  return ensemble(results);
}

Volume ensemble(const std::vector<Volume>& probs) {
  if (probs.empty())
    throw Error(ErrorCode::EmptyList, "nothing to ensemble");
  const Volume& first = probs.front();
  for (const Volume& p : probs) {
    if (p.shape() != first.shape() || p.channels() != first.channels())
      throw Error(ErrorCode::ShapeMismatch, "ensemble shapes differ");
  }
  Volume out(first.shape(), first.channels(), VoxelKind::continuous);
  out.copy_geometry_from(first);
  const double n = static_cast<double>(probs.size());
  for (std::size_t v = 0; v < out.data().size(); ++v) {
    double sum = 0.0;
    for (const Volume& p : probs) sum += p.data()[v];
    out.data()[v] = static_cast<float>(sum / n);
  }
  return out;
}

Volume finalize(const Volume& prob, const preprocess::Provenance& prov,
                const std::vector<std::int64_t>& labels) {
  if (prob.channels() != static_cast<std::int64_t>(labels.size()))
    throw Error(ErrorCode::ProvenanceMissing,
                "probability channels do not match the label list");

  Volume arg(prob.shape(), 1, VoxelKind::labels);
  arg.copy_geometry_from(prob);
  const std::int64_t nvox = prob.voxels_per_channel();
  for (std::int64_t v = 0; v < nvox; ++v) {
    std::size_t best = 0;
    float best_value = prob.channel_data(0)[v];
    for (std::size_t l = 1; l < labels.size(); ++l) {
      const float value = prob.channel_data(static_cast<std::int64_t>(l))[v];
      if (value > best_value) {  // ties keep the smaller label
        best_value = value;
        best = l;
      }
    }
    arg.data()[static_cast<std::size_t>(v)] =
        static_cast<float>(labels[best]);
  }

  if (prov.skipped) {
    Volume out = arg;
    out.set_spacing(prov.original_spacing);
    out.set_origin(prov.original_origin);
    out.set_direction(prov.original_direction);
    return out;
  }

  // Back onto the pre-resampling grid.
  Volume restored = preprocess::resample_labels_nearest(
      arg, prov.pre_resample_shape, prov.pre_resample_spacing);
  restored.set_origin(prov.pre_resample_origin);
  restored.set_direction(prov.pre_resample_direction);

  // Undo the RAI reorientation.
  restored = reorient(restored,
                      OrientationCode::from_string(prov.original_orientation));

  const Index3 extent = prov.crop_box.extent();
  if (restored.shape() != extent)
    throw Error(ErrorCode::ProvenanceMissing,
                "restored shape does not match the recorded crop box");

  Volume out(prov.original_shape, 1, VoxelKind::labels);
  for (std::int64_t k = 0; k < extent[2]; ++k) {
    for (std::int64_t j = 0; j < extent[1]; ++j) {
      for (std::int64_t i = 0; i < extent[0]; ++i) {
        out.at(0, prov.crop_box.lo[0] + i, prov.crop_box.lo[1] + j,
               prov.crop_box.lo[2] + k) = restored.at(0, i, j, k);
      }
    }
  }
  out.set_spacing(prov.original_spacing);
  out.set_origin(prov.original_origin);
  out.set_direction(prov.original_direction);
  return out;
}

std::vector<InferenceCase> load_inference_listing(const fs::path& path) {
  std::vector<InferenceCase> cases;
  const fs::path base = path.parent_path();
  auto resolve = [&base](const std::string& cell) {
    fs::path p(cell);
    return p.is_relative() ? base / p : p;
  };

  if (path.extension() == ".json") {
    std::ifstream in(path);
    if (!in)
      throw Error(ErrorCode::IoError, "cannot open " + path.string());
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::SchemaError,
                  std::string("listing: invalid JSON: ") + e.what());
    }
    if (!j.is_array())
      throw Error(ErrorCode::SchemaError, "listing must be a JSON array");
    for (const auto& entry : j) {
      InferenceCase c;
      c.id = entry.at("id").get<std::string>();
      for (const auto& p : entry.at("images"))
        c.image_paths.push_back(resolve(p.get<std::string>()));
      if (entry.contains("mask") && !entry["mask"].is_null())
        c.mask_path = resolve(entry["mask"].get<std::string>());
      cases.push_back(std::move(c));
    }
    return cases;
  }

  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::SchemaError, "listing CSV is empty");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' '))
        cell.pop_back();
      header.push_back(cell);
    }
  }
  if (header.size() < 2 || header[0] != "id")
    throw Error(ErrorCode::SchemaError,
                "listing CSV header must be id,<channel>...[,mask]");
  const bool has_mask = header.back() == "mask";
  const std::size_t n_channels = header.size() - 1 - (has_mask ? 1 : 0);
  if (n_channels < 1)
    throw Error(ErrorCode::SchemaError, "listing CSV names no channels");

  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n'))
      line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != header.size())
      throw Error(ErrorCode::SchemaError,
                  "listing row has the wrong number of cells: " + line);
    InferenceCase c;
    c.id = cells[0];
    for (std::size_t i = 0; i < n_channels; ++i)
      c.image_paths.push_back(resolve(cells[1 + i]));
    if (has_mask && !cells.back().empty())
      c.mask_path = resolve(cells.back());
    cases.push_back(std::move(c));
  }
  return cases;
}

PredictorSpec PredictorSpec::parse(const std::string& text) {
  PredictorSpec spec;
  if (text == "oracle") {
    spec.kind = Kind::oracle;
  } else if (text == "constant") {
    spec.kind = Kind::constant;
  } else if (text.rfind("threshold", 0) == 0) {
    spec.kind = Kind::threshold;
    const auto colon = text.find(':');
    if (colon != std::string::npos)
      spec.threshold = std::stod(text.substr(colon + 1));
  } else {
    throw Error(ErrorCode::InvalidArgument,
                "unknown predictor '" + text +
                    "' (expected oracle|constant|threshold[:t])");
  }
  return spec;
}

namespace {

std::unique_ptr<PatchPredictor> make_predictor(
    const PredictorSpec& spec, const analysis::PipelineConfig& config,
    std::int64_t channels, const preprocess::PreprocessedExample& ex) {
  const auto n_labels = static_cast<std::int64_t>(config.labels.size());
  switch (spec.kind) {
    case PredictorSpec::Kind::constant:
      return std::make_unique<ConstantPredictor>(channels, n_labels);
    case PredictorSpec::Kind::threshold:
      return std::make_unique<ThresholdPredictor>(channels, config.labels,
                                                  spec.threshold);
    case PredictorSpec::Kind::oracle:
      if (!ex.mask)
        throw Error(ErrorCode::InvalidArgument,
                    "oracle predictor needs a mask for every case");
      return std::make_unique<OraclePredictor>(*ex.mask, config.labels,
                                               channels);
  }
  throw Error(ErrorCode::InvalidArgument, "unreachable predictor kind");
}

}  // namespace

std::vector<std::string> run_inference(const std::vector<InferenceCase>& cases,
                                       const analysis::PipelineConfig& config,
                                       const fs::path& out_dir,
                                       const RunInferenceOptions& options) {
  if (options.predictors.empty())
    throw Error(ErrorCode::InvalidArgument, "at least one predictor required");
  fs::create_directories(out_dir);

  BlendSpec spec;
  spec.patch_size = config.patch_size;
  spec.overlap = options.overlap;
  spec.sigma_scale = options.sigma_scale;

  std::vector<std::string> failed(cases.size());
  parallel_for(cases.size(), options.workers, [&](std::size_t i) {
    const InferenceCase& c = cases[i];
    try {
      data::PatientRecord rec;
      rec.id = c.id;
      rec.image_paths = c.image_paths;
      rec.mask_path = c.mask_path;
      const preprocess::PreprocessedExample ex =
          preprocess::preprocess_patient(rec, config, {});

      std::vector<Volume> model_probs;
      for (const PredictorSpec& pspec : options.predictors) {
        const auto predictor =
            make_predictor(pspec, config, ex.image.channels(), ex);
        model_probs.push_back(
            options.tta
                ? tta_predict(ex.image, *predictor, spec,
                              options.all_flip_combinations)
                : sliding_window_predict(ex.image, *predictor, spec));
      }
      const Volume prob = ensemble(model_probs);
      const Volume final_mask = finalize(prob, ex.provenance, config.labels);
      nifti::write_nifti(final_mask, out_dir / (c.id + ".nii.gz"));
    } catch (const std::exception& e) {
      log::warn("predict", c.id, std::string("failed: ") + e.what());
      failed[i] = c.id;
    }
  });

  std::vector<std::string> failures;
  for (const auto& id : failed) {
    if (!id.empty()) failures.push_back(id);
  }
  return failures;
}

}  // namespace mist::infer
