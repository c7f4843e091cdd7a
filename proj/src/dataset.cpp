#include "mist/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mist/errors.hpp"
#include "mist/log.hpp"
#include "mist/nifti.hpp"
#include "mist/rng.hpp"
#include "mist/volume_ops.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace mist::data {

namespace {

[[noreturn]] void schema_error(const std::string& field,
                               const std::string& reason) {
  throw Error(ErrorCode::SchemaError, field + ": " + reason);
}

std::string sanitize_name(std::string name) {
  for (char& c : name) {
    if (std::isalnum(static_cast<unsigned char>(c)))
      c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    else
      c = '_';
  }
  if (name.empty()) name = "x";
  return name;
}

void link_or_copy(const fs::path& src, const fs::path& dst) {
  std::error_code ec;
  fs::create_hard_link(src, dst, ec);
  if (ec) {
    fs::copy_file(src, dst, fs::copy_options::overwrite_existing, ec);
    if (ec)
      throw Error(ErrorCode::IoError,
                  "cannot place " + src.string() + " at " + dst.string() +
                      ": " + ec.message());
  }
}

std::string strip_nifti_suffix(const std::string& name) {
  std::string out = name;
  for (const char* suffix : {".nii.gz", ".nii"}) {
    const std::size_t len = std::string(suffix).size();
    if (out.size() > len && out.compare(out.size() - len, len, suffix) == 0)
      return out.substr(0, out.size() - len);
  }
  return out;
}

std::string nifti_suffix(const std::string& name) {
  if (name.size() > 7 && name.compare(name.size() - 7, 7, ".nii.gz") == 0)
    return ".nii.gz";
  if (name.size() > 4 && name.compare(name.size() - 4, 4, ".nii") == 0)
    return ".nii";
  return "";
}

std::vector<std::string> sorted_subdirectories(const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) out.push_back(entry.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> sorted_files(const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file())
      out.push_back(entry.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> match_patterns(
    const std::vector<std::string>& files,
    const std::vector<std::string>& patterns) {
  std::vector<std::string> hits;
  for (const auto& f : files) {
    for (const auto& p : patterns) {
      if (f.find(p) != std::string::npos) {
        hits.push_back(f);
        break;
      }
    }
  }
  return hits;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto begin = cell.find_first_not_of(" \t\r");
    const auto end = cell.find_last_not_of(" \t\r");
    cells.push_back(begin == std::string::npos
                        ? std::string()
                        : cell.substr(begin, end - begin + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

std::string modality_name(Modality m) {
  switch (m) {
    case Modality::ct: return "ct";
    case Modality::mr: return "mr";
    case Modality::other: return "other";
  }
  return "other";
}

Modality modality_from_name(const std::string& name) {
  if (name == "ct") return Modality::ct;
  if (name == "mr") return Modality::mr;
  if (name == "other") return Modality::other;
  schema_error("modality", "expected one of ct|mr|other, got '" + name + "'");
}

DatasetDescription parse_description(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    schema_error("<root>", std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) schema_error("<root>", "top level must be an object");

  static const std::set<std::string> known{
      "task_name", "modality",       "train_dir", "test_dir",
      "mask_patterns", "image_patterns", "labels",    "final_classes"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) schema_error(key, "unknown key");
  }

  DatasetDescription d;
  if (!j.contains("task_name") || !j["task_name"].is_string())
    schema_error("task_name", "required string");
  d.task_name = j["task_name"].get<std::string>();

  if (!j.contains("modality") || !j["modality"].is_string())
    schema_error("modality", "required string");
  d.modality = modality_from_name(j["modality"].get<std::string>());

  if (!j.contains("train_dir") || !j["train_dir"].is_string())
    schema_error("train_dir", "required string");
  d.train_dir = j["train_dir"].get<std::string>();
  if (j.contains("test_dir")) {
    if (!j["test_dir"].is_string()) schema_error("test_dir", "must be string");
    d.test_dir = fs::path(j["test_dir"].get<std::string>());
  }

  if (!j.contains("mask_patterns") || !j["mask_patterns"].is_array() ||
      j["mask_patterns"].empty())
    schema_error("mask_patterns", "required nonempty array of strings");
  for (const auto& p : j["mask_patterns"]) {
    if (!p.is_string()) schema_error("mask_patterns", "entries must be strings");
    d.mask_patterns.push_back(p.get<std::string>());
  }

  if (!j.contains("image_patterns") || !j["image_patterns"].is_object() ||
      j["image_patterns"].empty())
    schema_error("image_patterns", "required nonempty object");
  for (const auto& [channel, patterns] : j["image_patterns"].items()) {
    if (!patterns.is_array() || patterns.empty())
      schema_error("image_patterns." + channel,
                   "must be a nonempty array of strings");
    std::vector<std::string> subs;
    for (const auto& p : patterns) {
      if (!p.is_string())
        schema_error("image_patterns." + channel, "entries must be strings");
      subs.push_back(p.get<std::string>());
    }
    d.image_patterns.emplace_back(channel, std::move(subs));
  }

  if (!j.contains("labels") || !j["labels"].is_array() || j["labels"].empty())
    schema_error("labels", "required nonempty array of integers");
  for (const auto& v : j["labels"]) {
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
      schema_error("labels", "entries must be nonnegative integers");
    d.labels.push_back(v.get<std::int64_t>());
  }
  std::sort(d.labels.begin(), d.labels.end());
  if (std::adjacent_find(d.labels.begin(), d.labels.end()) != d.labels.end())
    schema_error("labels", "duplicate label value");
  if (d.labels.front() != 0) schema_error("labels", "must contain 0");

  if (!j.contains("final_classes") || !j["final_classes"].is_object() ||
      j["final_classes"].empty())
    schema_error("final_classes", "required nonempty object");
  for (const auto& [cls, members] : j["final_classes"].items()) {
    if (cls.empty()) schema_error("final_classes", "empty class name");
    if (!members.is_array() || members.empty())
      schema_error("final_classes." + cls,
                   "must be a nonempty array of labels");
    std::vector<std::int64_t> labels;
    for (const auto& v : members) {
      if (!v.is_number_integer())
        schema_error("final_classes." + cls, "labels must be integers");
      const std::int64_t lab = v.get<std::int64_t>();
      if (!std::binary_search(d.labels.begin(), d.labels.end(), lab))
        schema_error("final_classes." + cls,
                     "label " + std::to_string(lab) + " not in labels");
      labels.push_back(lab);
    }
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    d.final_classes.emplace_back(cls, std::move(labels));
  }
  return d;
}

DatasetDescription load_description(const fs::path& path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  DatasetDescription d = parse_description(ss.str());
  // Relative data directories are resolved against the description file.
  const fs::path base = path.parent_path();
  if (d.train_dir.is_relative()) d.train_dir = base / d.train_dir;
  if (d.test_dir && d.test_dir->is_relative()) d.test_dir = base / *d.test_dir;
  return d;
}

std::string description_to_json(const DatasetDescription& d) {
  json j;
  j["task_name"] = d.task_name;
  j["modality"] = modality_name(d.modality);
  j["train_dir"] = d.train_dir.string();
  if (d.test_dir) j["test_dir"] = d.test_dir->string();
  j["mask_patterns"] = d.mask_patterns;
  json images = json::object();
  for (const auto& [channel, patterns] : d.image_patterns)
    images[channel] = patterns;
  j["image_patterns"] = images;
  j["labels"] = d.labels;
  json classes = json::object();
  for (const auto& [cls, labels] : d.final_classes) classes[cls] = labels;
  j["final_classes"] = classes;
  return j.dump(2) + "\n";
}

std::vector<PatientRecord> discover_patients(const DatasetDescription& desc,
                                             Split split) {
  fs::path dir;
  if (split == Split::train) {
    dir = desc.train_dir;
  } else {
    if (!desc.test_dir)
      throw Error(ErrorCode::InvalidArgument,
                  "dataset has no test_dir but the test split was requested");
    dir = *desc.test_dir;
  }
  if (!fs::is_directory(dir))
    throw Error(ErrorCode::IoError,
                "data directory does not exist: " + dir.string());

  std::vector<PatientRecord> out;
  for (const std::string& id : sorted_subdirectories(dir)) {
    const fs::path patient_dir = dir / id;
    const std::vector<std::string> files = sorted_files(patient_dir);

    PatientRecord rec;
    rec.id = id;
    for (const auto& [channel, patterns] : desc.image_patterns) {
      const auto hits = match_patterns(files, patterns);
      if (hits.empty())
        throw Error(ErrorCode::MissingChannel,
                    "patient " + id + " has no file for channel " + channel);
      if (hits.size() > 1)
        throw Error(ErrorCode::AmbiguousMatch,
                    "patient " + id + " channel " + channel + " matches " +
                        std::to_string(hits.size()) + " files");
      rec.image_paths.push_back(patient_dir / hits.front());
    }

    const auto mask_hits = match_patterns(files, desc.mask_patterns);
    if (mask_hits.size() > 1)
      throw Error(ErrorCode::AmbiguousMatch,
                  "patient " + id + " mask matches " +
                      std::to_string(mask_hits.size()) + " files");
    if (!mask_hits.empty()) {
      rec.mask_path = patient_dir / mask_hits.front();
    } else if (split == Split::train) {
      throw Error(ErrorCode::MissingMask, "patient " + id + " has no mask");
    }
    out.push_back(std::move(rec));
  }
  return out;
}

namespace {

DatasetDescription finalize_converted(
    const fs::path& out_root, const std::string& task, Modality modality,
    const std::vector<std::string>& channel_names,
    const std::vector<std::int64_t>& labels,
    const std::vector<std::pair<std::string, std::vector<std::int64_t>>>&
        classes,
    bool has_test) {
  DatasetDescription d;
  d.task_name = task;
  d.modality = modality;
  d.train_dir = out_root / "train";
  if (has_test) d.test_dir = out_root / "test";
  d.mask_patterns = {"_seg."};
  for (const auto& ch : channel_names)
    d.image_patterns.emplace_back(ch,
                                  std::vector<std::string>{"_" + ch + "."});
  d.labels = labels;
  d.final_classes = classes;

  const std::string text = description_to_json(d);
  DatasetDescription validated = parse_description(text);
  validated.train_dir = d.train_dir;
  validated.test_dir = d.test_dir;
  std::ofstream out(out_root / "dataset.json");
  out << text;
  if (!out)
    throw Error(ErrorCode::IoError,
                "cannot write " + (out_root / "dataset.json").string());
  return validated;
}

}  // namespace

DatasetDescription convert_msd(const fs::path& msd_root,
                               const fs::path& out_root) {
  const fs::path meta_path = msd_root / "dataset.json";
  std::ifstream meta_in(meta_path);
  if (!meta_in)
    throw Error(ErrorCode::IoError, "cannot open " + meta_path.string());
  json meta;
  try {
    meta = json::parse(meta_in);
  } catch (const json::exception& e) {
    schema_error("dataset.json", std::string("invalid JSON: ") + e.what());
  }

  std::string task = meta.value("name", msd_root.filename().string());

  // MSD names channels in "modality" (older) or "channel_names" (newer).
  std::vector<std::string> channel_names;
  const char* channel_key = meta.contains("modality") ? "modality"
                            : meta.contains("channel_names") ? "channel_names"
                                                             : nullptr;
  bool any_ct = false;
  if (channel_key) {
    std::vector<std::pair<int, std::string>> entries;
    for (const auto& [k, v] : meta[channel_key].items()) {
      const std::string name = v.is_string() ? v.get<std::string>() : k;
      std::string lower = name;
      std::transform(lower.begin(), lower.end(), lower.begin(), ::tolower);
      if (lower.find("ct") != std::string::npos) any_ct = true;
      entries.emplace_back(std::stoi(k), sanitize_name(name));
    }
    std::sort(entries.begin(), entries.end());
    for (auto& [_, name] : entries) channel_names.push_back(name);
  }

  std::vector<std::int64_t> labels;
  std::vector<std::pair<std::string, std::vector<std::int64_t>>> classes;
  if (!meta.contains("labels") || !meta["labels"].is_object())
    schema_error("labels", "MSD dataset.json must map label values to names");
  for (const auto& [k, v] : meta["labels"].items()) {
    const std::int64_t value = std::stoll(k);
    labels.push_back(value);
    if (value != 0)
      classes.emplace_back(
          sanitize_name(v.is_string() ? v.get<std::string>() : ("label" + k)),
          std::vector<std::int64_t>{value});
  }
  std::sort(labels.begin(), labels.end());
  std::sort(classes.begin(), classes.end());
  if (labels.empty() || labels.front() != 0)
    schema_error("labels", "MSD labels must include background 0");

  const fs::path images_tr = msd_root / "imagesTr";
  const fs::path labels_tr = msd_root / "labelsTr";
  if (!fs::is_directory(images_tr) || !fs::is_directory(labels_tr))
    throw Error(ErrorCode::IoError,
                "MSD root must contain imagesTr and labelsTr");

  struct Case {
    std::string id;
    fs::path image;
    fs::path mask;
  };
  std::vector<Case> cases;
  for (const std::string& name : sorted_files(images_tr)) {
    if (name.rfind("._", 0) == 0) continue;  // MSD tarball cruft
    if (nifti_suffix(name).empty()) continue;
    const fs::path mask = labels_tr / name;
    if (!fs::exists(mask))
      throw Error(ErrorCode::IoError, "missing MSD label file " +
                                          mask.string());
    cases.push_back(Case{strip_nifti_suffix(name), images_tr / name, mask});
  }
  if (cases.empty())
    throw Error(ErrorCode::IoError, "no cases found under imagesTr");

  fs::create_directories(out_root / "train");

  std::int64_t channels_seen = 0;
  for (const Case& c : cases) {
    const fs::path patient_dir = out_root / "train" / c.id;
    fs::create_directories(patient_dir);
    const std::string suffix = nifti_suffix(c.image.filename().string());

    const Volume image = nifti::read_nifti(c.image);
    channels_seen = image.channels();
    if (channel_names.size() <
        static_cast<std::size_t>(image.channels())) {
      for (std::size_t ch = channel_names.size();
           ch < static_cast<std::size_t>(image.channels()); ++ch)
        channel_names.push_back("mod" + std::to_string(ch));
    }
    if (image.channels() == 1) {
      link_or_copy(c.image,
                   patient_dir / (c.id + "_" + channel_names[0] + suffix));
    } else {
      for (std::int64_t ch = 0; ch < image.channels(); ++ch) {
        nifti::write_nifti(
            image.channel(ch),
            patient_dir /
                (c.id + "_" + channel_names[static_cast<std::size_t>(ch)] +
                 ".nii.gz"));
      }
    }
    link_or_copy(c.mask, patient_dir / (c.id + "_seg" + suffix));
  }
  channel_names.resize(static_cast<std::size_t>(
      std::max<std::int64_t>(channels_seen, 1)));

  bool has_test = false;
  const fs::path images_ts = msd_root / "imagesTs";
  if (fs::is_directory(images_ts)) {
    for (const std::string& name : sorted_files(images_ts)) {
      if (name.rfind("._", 0) == 0) continue;
      if (nifti_suffix(name).empty()) continue;
      const std::string id = strip_nifti_suffix(name);
      const fs::path patient_dir = out_root / "test" / id;
      fs::create_directories(patient_dir);
      const std::string suffix = nifti_suffix(name);
      const Volume image = nifti::read_nifti(images_ts / name);
      if (image.channels() == 1) {
        link_or_copy(images_ts / name,
                     patient_dir / (id + "_" + channel_names[0] + suffix));
      } else {
        for (std::int64_t ch = 0; ch < image.channels(); ++ch)
          nifti::write_nifti(
              image.channel(ch),
              patient_dir /
                  (id + "_" + channel_names[static_cast<std::size_t>(ch)] +
                   ".nii.gz"));
      }
      has_test = true;
    }
  }

  return finalize_converted(out_root, task,
                            any_ct ? Modality::ct : Modality::mr,
                            channel_names, labels, classes, has_test);
}

DatasetDescription convert_csv(const fs::path& csv_path,
                               const fs::path& out_root, Modality modality) {
  std::ifstream in(csv_path);
  if (!in)
    throw Error(ErrorCode::IoError, "cannot open " + csv_path.string());

  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::SchemaError, "CSV is empty");
  const std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "id" || header[1] != "mask")
    schema_error("csv header", "expected: id,mask,<channel>[,<channel>...]");
  std::vector<std::string> channel_names(header.begin() + 2, header.end());
  for (auto& ch : channel_names) ch = sanitize_name(ch);

  const fs::path base = csv_path.parent_path();
  auto resolve = [&base](const std::string& cell) {
    fs::path p(cell);
    return p.is_relative() ? base / p : p;
  };

  fs::create_directories(out_root / "train");
  std::set<std::int64_t> label_set{0};
  int row_number = 1;
  bool any_rows = false;
  while (std::getline(in, line)) {
    ++row_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size())
      schema_error("csv row " + std::to_string(row_number),
                   "expected " + std::to_string(header.size()) + " cells");
    const std::string& id = cells[0];
    const fs::path patient_dir = out_root / "train" / id;

    const fs::path mask_src = resolve(cells[1]);
    std::vector<fs::path> channel_srcs;
    for (std::size_t c = 0; c < channel_names.size(); ++c)
      channel_srcs.push_back(resolve(cells[c + 2]));

    if (!fs::exists(mask_src))
      throw Error(ErrorCode::IoError, "csv row " + std::to_string(row_number) +
                                          " (" + id + "): missing file " +
                                          mask_src.string());
    for (const auto& src : channel_srcs) {
      if (!fs::exists(src))
        throw Error(ErrorCode::IoError,
                    "csv row " + std::to_string(row_number) + " (" + id +
                        "): missing file " + src.string());
    }

    fs::create_directories(patient_dir);
    for (std::size_t c = 0; c < channel_names.size(); ++c) {
      const std::string suffix =
          nifti_suffix(channel_srcs[c].filename().string());
      link_or_copy(channel_srcs[c],
                   patient_dir / (id + "_" + channel_names[c] + suffix));
    }
    const std::string mask_suffix = nifti_suffix(mask_src.filename().string());
    link_or_copy(mask_src, patient_dir / (id + "_seg" + mask_suffix));

    Volume mask = nifti::read_nifti(mask_src);
    mask.set_kind(VoxelKind::labels);
    mask.require_labels();
    for (float v : mask.data())
      label_set.insert(static_cast<std::int64_t>(v));
    any_rows = true;
  }
  if (!any_rows) throw Error(ErrorCode::SchemaError, "CSV has no data rows");

  std::vector<std::int64_t> labels(label_set.begin(), label_set.end());
  std::vector<std::pair<std::string, std::vector<std::int64_t>>> classes;
  for (std::int64_t v : labels) {
    if (v != 0)
      classes.emplace_back("label_" + std::to_string(v),
                           std::vector<std::int64_t>{v});
  }
  return finalize_converted(out_root, csv_path.stem().string(), modality,
                            channel_names, labels, classes, false);
}

std::vector<std::string> FoldAssignment::validation_ids(int fold) const {
  std::vector<std::string> out;
  for (const auto& [id, f] : assignment) {
    if (f == fold) out.push_back(id);
  }
  return out;
}

FoldAssignment make_folds(
    const std::vector<std::string>& ids, int n_folds, std::uint64_t seed,
    const std::optional<std::map<std::string, int>>& custom) {
  if (ids.empty())
    throw Error(ErrorCode::InvalidArgument, "no patient ids to fold");
  if (n_folds < 2)
    throw Error(ErrorCode::InvalidArgument, "n_folds must be at least 2");

  std::vector<std::string> sorted_ids = ids;
  std::sort(sorted_ids.begin(), sorted_ids.end());
  if (std::adjacent_find(sorted_ids.begin(), sorted_ids.end()) !=
      sorted_ids.end())
    throw Error(ErrorCode::InvalidArgument, "duplicate patient id");

  FoldAssignment out;
  out.n_folds = n_folds;

  if (custom) {
    for (const auto& id : sorted_ids) {
      const auto it = custom->find(id);
      if (it == custom->end())
        throw Error(ErrorCode::BadCustomFolds, "id " + id + " missing");
      if (it->second < 0 || it->second >= n_folds)
        throw Error(ErrorCode::BadCustomFolds,
                    "id " + id + " assigned to fold " +
                        std::to_string(it->second) + " outside [0, " +
                        std::to_string(n_folds) + ")");
    }
    for (const auto& [id, fold] : *custom) {
      if (!std::binary_search(sorted_ids.begin(), sorted_ids.end(), id))
        throw Error(ErrorCode::BadCustomFolds, "unknown id " + id);
    }
    out.assignment = *custom;
    return out;
  }

  rng::shuffle(sorted_ids, seed);
  for (std::size_t i = 0; i < sorted_ids.size(); ++i)
    out.assignment[sorted_ids[i]] = static_cast<int>(i % n_folds);
  return out;
}

}  // namespace mist::data
