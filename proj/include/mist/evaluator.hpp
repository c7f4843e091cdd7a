#ifndef MIST_EVALUATOR_HPP
#define MIST_EVALUATOR_HPP

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mist/dataset.hpp"
#include "mist/metrics.hpp"

namespace mist::eval {

struct MetricsTable {
  std::vector<std::pair<std::string, metrics::Metric>> columns;
  std::vector<std::string> ids;  // patient rows, sorted
  std::map<std::string, std::vector<double>> rows;
  std::vector<std::string> flagged;  // rows excluded from the summary
  std::vector<std::string> missing;  // ids scored with worst-case values

  static constexpr std::array<const char*, 5> kSummaryLabels{
      "mean", "std", "median", "p25", "p75"};

  std::string column_name(std::size_t c) const;
  std::optional<std::size_t> column_index(const std::string& name) const;

  // Five rows, in kSummaryLabels order, over the non-flagged patient rows.
  std::array<std::vector<double>, 5> summary() const;
};

// Ground truth either from a dataset description (train masks) or a flat
// directory of <id>.nii[.gz] masks.
struct TruthSource {
  std::optional<data::DatasetDescription> description;
  std::optional<std::filesystem::path> directory;

  static TruthSource from_description(data::DatasetDescription desc);
  static TruthSource from_directory(std::filesystem::path dir);
  std::vector<std::pair<std::string, std::filesystem::path>> resolve() const;
};

struct EvaluateOptions {
  std::vector<metrics::Metric> metric_list{metrics::Metric::dice,
                                           metrics::Metric::hd95};
  double surface_dice_tolerance_mm = 1.0;
  int workers = 1;
};

MetricsTable evaluate_run(const std::filesystem::path& pred_dir,
                          const TruthSource& truth,
                          const std::vector<metrics::ClassSpec>& specs,
                          const EvaluateOptions& options = {});

void write_results_csv(const MetricsTable& table,
                       const std::filesystem::path& path);
MetricsTable read_results_csv(const std::filesystem::path& path);

}  // namespace mist::eval

#endif
