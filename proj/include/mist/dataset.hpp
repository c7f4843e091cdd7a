#ifndef MIST_DATASET_HPP
#define MIST_DATASET_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mist::data {

enum class Modality { ct, mr, other };

std::string modality_name(Modality m);
Modality modality_from_name(const std::string& name);

// Parsed dataset-description JSON. image_patterns and final_classes keep the
// order they appear in the file; that order fixes channel and class order
// everywhere downstream.
struct DatasetDescription {
  std::string task_name;
  Modality modality = Modality::other;
  std::filesystem::path train_dir;
  std::optional<std::filesystem::path> test_dir;
  std::vector<std::string> mask_patterns;
  std::vector<std::pair<std::string, std::vector<std::string>>> image_patterns;
  std::vector<std::int64_t> labels;  // sorted, contains 0
  std::vector<std::pair<std::string, std::vector<std::int64_t>>> final_classes;

  std::int64_t channel_count() const {
    return static_cast<std::int64_t>(image_patterns.size());
  }
};

struct PatientRecord {
  std::string id;
  std::vector<std::filesystem::path> image_paths;  // one per channel, in order
  std::optional<std::filesystem::path> mask_path;
};

struct FoldAssignment {
  int n_folds = 5;
  std::map<std::string, int> assignment;

  std::vector<std::string> validation_ids(int fold) const;
};

enum class Split { train, test };

DatasetDescription parse_description(const std::string& json_text);
DatasetDescription load_description(const std::filesystem::path& path);
std::string description_to_json(const DatasetDescription& desc);

std::vector<PatientRecord> discover_patients(const DatasetDescription& desc,
                                             Split split);

// Converts an MSD-format dataset (dataset.json + imagesTr/labelsTr) into the
// BraTS-style layout under out_root and returns the emitted description
// (also written to out_root/dataset.json). 4D images are split into one 3D
// file per channel.
DatasetDescription convert_msd(const std::filesystem::path& msd_root,
                               const std::filesystem::path& out_root);

// Converts a CSV listing (header: id,mask,<channel>...) the same way. Labels
// are discovered by scanning the masks.
DatasetDescription convert_csv(const std::filesystem::path& csv_path,
                               const std::filesystem::path& out_root,
                               Modality modality = Modality::other);

FoldAssignment make_folds(
    const std::vector<std::string>& ids, int n_folds, std::uint64_t seed,
    const std::optional<std::map<std::string, int>>& custom = std::nullopt);

}  // namespace mist::data

#endif
