#include "mist/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "mist/distance.hpp"
#include "mist/log.hpp"
#include "mist/nifti.hpp"
#include "mist/resample.hpp"
#include "mist/stats.hpp"
#include "mist/tensor_io.hpp"
#include "mist/worker_pool.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace mist::preprocess {

namespace {

void normalize_channel(float* data, std::int64_t n, bool use_nonzero_mask,
                       const std::string& patient) {
  std::vector<bool> indicator;
  std::vector<double> values;
  if (use_nonzero_mask) {
    indicator.resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
      indicator[static_cast<std::size_t>(i)] = data[i] != 0.0f;
      if (data[i] != 0.0f) values.push_back(data[i]);
    }
    if (values.empty()) {
      log::warn("preprocess", patient,
                "channel has no nonzero voxels; left as zeros");
      return;
    }
  } else {
    values.assign(data, data + n);
  }

  std::sort(values.begin(), values.end());
  const double lo = stats::percentile_sorted(values, 0.5);
  const double hi = stats::percentile_sorted(values, 99.5);

  double sum = 0.0;
  std::int64_t count = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    if (use_nonzero_mask && !indicator[static_cast<std::size_t>(i)]) continue;
    sum += std::clamp(static_cast<double>(data[i]), lo, hi);
    ++count;
  }
  const double mean = sum / static_cast<double>(count);
  double var = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    if (use_nonzero_mask && !indicator[static_cast<std::size_t>(i)]) continue;
    const double d = std::clamp(static_cast<double>(data[i]), lo, hi) - mean;
    var += d * d;
  }
  double std_dev = std::sqrt(var / static_cast<double>(count));
  if (std_dev < 1e-8) {
    log::warn("preprocess", patient, "zero standard deviation in channel");
    std_dev = 1e-8;
  }

  for (std::int64_t i = 0; i < n; ++i) {
    if (use_nonzero_mask && !indicator[static_cast<std::size_t>(i)]) {
      data[i] = 0.0f;  // preserve the zero-valued voxels
      continue;
    }
    const double clipped = std::clamp(static_cast<double>(data[i]), lo, hi);
    data[i] = static_cast<float>((clipped - mean) / std_dev);
  }
}

}  // namespace

Volume window_normalize(const Volume& image,
                        const analysis::PipelineConfig& config) {
  if (image.kind() != VoxelKind::continuous)
    throw Error(ErrorCode::InvalidArgument,
                "window_normalize expects a continuous image");
  Volume out = image;

  if (config.modality == data::Modality::ct) {
    if (!config.window_lo || !config.window_hi || !config.global_mean ||
        !config.global_std)
      throw Error(ErrorCode::InvalidArgument,
                  "CT normalization parameters missing from config");
    const double lo = *config.window_lo;
    const double hi = *config.window_hi;
    const double mean = *config.global_mean;
    double std_dev = *config.global_std;
    if (std_dev < 1e-8) {
      log::warn("preprocess", "", "zero global standard deviation");
      std_dev = 1e-8;
    }
    for (auto& v : out.data()) {
      const double clipped = std::clamp(static_cast<double>(v), lo, hi);
      v = static_cast<float>((clipped - mean) / std_dev);
    }
    return out;
  }

  for (std::int64_t c = 0; c < out.channels(); ++c) {
    normalize_channel(out.channel_data(c), out.voxels_per_channel(),
                      config.use_nonzero_mask, "");
  }
  return out;
}

PreprocessedExample preprocess_patient(const data::PatientRecord& rec,
                                       const analysis::PipelineConfig& config,
                                       const PreprocessOptions& options) {
  std::vector<Volume> channels;
  channels.reserve(rec.image_paths.size());
  for (const auto& path : rec.image_paths)
    channels.push_back(nifti::read_nifti(path));
  Volume image = stack_channels(channels);
  channels.clear();

  std::optional<Volume> mask;
  if (rec.mask_path) {
    Volume m = nifti::read_nifti(*rec.mask_path);
    if (m.channels() != 1)
      throw Error(ErrorCode::DimensionUnsupported,
                  rec.id + ": mask must be single channel");
    m.set_kind(VoxelKind::labels);
    m.require_labels();
    for (float v : m.data()) {
      if (!std::binary_search(config.labels.begin(), config.labels.end(),
                              static_cast<std::int64_t>(v)))
        throw Error(ErrorCode::UnknownLabel,
                    rec.id + ": mask value " + std::to_string(v) +
                        " is not a declared label");
    }
    mask = std::move(m);
  }

  PreprocessedExample out;
  Provenance& prov = out.provenance;
  prov.original_shape = image.shape();
  prov.original_spacing = image.spacing();
  prov.original_origin = image.origin();
  prov.original_direction = image.direction();
  prov.original_orientation = orientation_of(image.direction()).str();
  prov.crop_box = BoundingBox{{0, 0, 0}, image.shape()};

  if (options.skip) {
    prov.skipped = true;
    prov.pre_resample_shape = image.shape();
    prov.pre_resample_spacing = image.spacing();
    prov.pre_resample_origin = image.origin();
    prov.pre_resample_direction = image.direction();
    if (options.compute_dtms && mask)
      out.dtm = compute_dtm(*mask, config.labels, options.normalize_dtms);
    out.image = std::move(image);
    out.mask = std::move(mask);
    return out;
  }

  if (config.crop_to_foreground) {
    const Volume fg = analysis::foreground_union(image);
    const BoundingBox box = tight_bbox(fg);
    image = crop(image, box);
    if (mask) mask = crop(*mask, box);
    prov.cropped = true;
    prov.crop_box = box;
  }

  if (options.bias_correction) {
    if (config.modality == data::Modality::mr)
      log::warn("preprocess", rec.id,
                "bias correction requested: pass-through hook, image "
                "unchanged");
    else
      log::warn("preprocess", rec.id,
                "bias correction is only defined for MR; ignored");
  }

  image = reorient(image, OrientationCode::rai());
  if (mask) mask = reorient(*mask, OrientationCode::rai());

  prov.pre_resample_shape = image.shape();
  prov.pre_resample_spacing = image.spacing();
  prov.pre_resample_origin = image.origin();
  prov.pre_resample_direction = image.direction();

  image = resample_image(image, config.target_spacing);
  if (mask) mask = resample_mask(*mask, config.labels, config.target_spacing);

  image = window_normalize(image, config);

  if (options.compute_dtms) {
    if (mask) {
      out.dtm = compute_dtm(*mask, config.labels, options.normalize_dtms);
    } else {
      log::warn("preprocess", rec.id, "no mask; DTMs not computed");
    }
  }

  out.image = std::move(image);
  out.mask = std::move(mask);
  return out;
}

std::string provenance_to_json(const Provenance& p) {
  json j;
  j["original_shape"] = p.original_shape;
  j["original_spacing"] = p.original_spacing;
  j["original_origin"] = p.original_origin;
  json dir = json::array();
  for (int col = 0; col < 3; ++col)
    for (int row = 0; row < 3; ++row)
      dir.push_back(p.original_direction.col[col][row]);
  j["original_direction"] = dir;
  j["original_orientation"] = p.original_orientation;
  j["cropped"] = p.cropped;
  j["crop_lo"] = p.crop_box.lo;
  j["crop_hi"] = p.crop_box.hi;
  j["pre_resample_shape"] = p.pre_resample_shape;
  j["pre_resample_spacing"] = p.pre_resample_spacing;
  j["pre_resample_origin"] = p.pre_resample_origin;
  json pdir = json::array();
  for (int col = 0; col < 3; ++col)
    for (int row = 0; row < 3; ++row)
      pdir.push_back(p.pre_resample_direction.col[col][row]);
  j["pre_resample_direction"] = pdir;
  j["skipped"] = p.skipped;
  return j.dump(2) + "\n";
}

Provenance provenance_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError,
                std::string("provenance: invalid JSON: ") + e.what());
  }
  Provenance p;
  try {
    for (int a = 0; a < 3; ++a) {
      p.original_shape[a] = j.at("original_shape").at(a).get<std::int64_t>();
      p.original_spacing[a] = j.at("original_spacing").at(a).get<double>();
      p.original_origin[a] = j.at("original_origin").at(a).get<double>();
      p.crop_box.lo[a] = j.at("crop_lo").at(a).get<std::int64_t>();
      p.crop_box.hi[a] = j.at("crop_hi").at(a).get<std::int64_t>();
      p.pre_resample_shape[a] =
          j.at("pre_resample_shape").at(a).get<std::int64_t>();
      p.pre_resample_spacing[a] =
          j.at("pre_resample_spacing").at(a).get<double>();
      p.pre_resample_origin[a] =
          j.at("pre_resample_origin").at(a).get<double>();
    }
    for (int col = 0; col < 3; ++col) {
      for (int row = 0; row < 3; ++row) {
        p.original_direction.col[col][row] =
            j.at("original_direction").at(col * 3 + row).get<double>();
        p.pre_resample_direction.col[col][row] =
            j.at("pre_resample_direction").at(col * 3 + row).get<double>();
      }
    }
    p.original_orientation = j.at("original_orientation").get<std::string>();
    p.cropped = j.at("cropped").get<bool>();
    p.skipped = j.at("skipped").get<bool>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("provenance: ") + e.what());
  }
  return p;
}

std::vector<std::string> preprocess_dataset(
    const data::DatasetDescription& desc,
    const analysis::PipelineConfig& config, const fs::path& results_dir,
    const PreprocessOptions& options, int workers) {
  const std::vector<data::PatientRecord> all =
      data::discover_patients(desc, data::Split::train);
  const std::set<std::string> excluded(config.excluded_ids.begin(),
                                       config.excluded_ids.end());
  std::vector<data::PatientRecord> patients;
  for (const auto& rec : all) {
    if (excluded.count(rec.id))
      log::info("preprocess", rec.id, "skipped (excluded by analysis)");
    else
      patients.push_back(rec);
  }

  const fs::path out_dir = results_dir / "preprocessed";
  fs::create_directories(out_dir);

  std::vector<std::string> failed(patients.size());
  parallel_for(patients.size(), workers, [&](std::size_t i) {
    const data::PatientRecord& rec = patients[i];
    try {
      const PreprocessedExample ex =
          preprocess_patient(rec, config, options);
      write_tensor(ex.image, out_dir / (rec.id + "_image.mvt"));
      if (ex.mask) write_tensor(*ex.mask, out_dir / (rec.id + "_mask.mvt"));
      if (ex.dtm) write_tensor(*ex.dtm, out_dir / (rec.id + "_dtm.mvt"));
      std::ofstream prov(out_dir / (rec.id + "_prov.json"), std::ios::trunc);
      prov << provenance_to_json(ex.provenance);
      if (!prov)
        throw Error(ErrorCode::IoError, "cannot write provenance");
    } catch (const std::exception& e) {
      log::warn("preprocess", rec.id, std::string("failed: ") + e.what());
      failed[i] = rec.id;
    }
  });

  std::vector<std::string> failures;
  for (const auto& id : failed) {
    if (!id.empty()) failures.push_back(id);
  }
  return failures;
}

}  // namespace mist::preprocess
