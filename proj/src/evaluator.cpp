#include "mist/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "mist/log.hpp"
#include "mist/nifti.hpp"
#include "mist/stats.hpp"
#include "mist/worker_pool.hpp"

namespace fs = std::filesystem;

namespace mist::eval {

std::string MetricsTable::column_name(std::size_t c) const {
  return columns[c].first + "_" + metrics::metric_name(columns[c].second);
}

std::optional<std::size_t> MetricsTable::column_index(
    const std::string& name) const {
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (column_name(c) == name) return c;
  }
  return std::nullopt;
}

std::array<std::vector<double>, 5> MetricsTable::summary() const {
  std::array<std::vector<double>, 5> out;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    std::vector<double> values;
    for (const auto& id : ids) {
      if (std::find(flagged.begin(), flagged.end(), id) != flagged.end())
        continue;
      values.push_back(rows.at(id)[c]);
    }
    if (values.empty()) {
      for (auto& row : out) row.push_back(std::nan(""));
      continue;
    }
    out[0].push_back(stats::mean(values));
    out[1].push_back(stats::stddev_sample(values));
    out[2].push_back(stats::median(values));
    out[3].push_back(stats::percentile(values, 25.0));
    out[4].push_back(stats::percentile(values, 75.0));
  }
  return out;
}

TruthSource TruthSource::from_description(data::DatasetDescription desc) {
  TruthSource t;
  t.description = std::move(desc);
  return t;
}

TruthSource TruthSource::from_directory(fs::path dir) {
  TruthSource t;
  t.directory = std::move(dir);
  return t;
}

namespace {

std::string strip_nifti(const std::string& name) {
  if (name.size() > 7 && name.compare(name.size() - 7, 7, ".nii.gz") == 0)
    return name.substr(0, name.size() - 7);
  if (name.size() > 4 && name.compare(name.size() - 4, 4, ".nii") == 0)
    return name.substr(0, name.size() - 4);
  return "";
}

}  // namespace

std::vector<std::pair<std::string, fs::path>> TruthSource::resolve() const {
  std::vector<std::pair<std::string, fs::path>> out;
  if (description) {
    for (const auto& rec :
         data::discover_patients(*description, data::Split::train)) {
      if (!rec.mask_path)
        throw Error(ErrorCode::MissingMask,
                    "patient " + rec.id + " has no ground-truth mask");
      out.emplace_back(rec.id, *rec.mask_path);
    }
  } else if (directory) {
    if (!fs::is_directory(*directory))
      throw Error(ErrorCode::IoError,
                  "truth directory does not exist: " + directory->string());
    for (const auto& entry : fs::directory_iterator(*directory)) {
      if (!entry.is_regular_file()) continue;
      const std::string id = strip_nifti(entry.path().filename().string());
      if (!id.empty()) out.emplace_back(id, entry.path());
    }
    std::sort(out.begin(), out.end());
  } else {
    throw Error(ErrorCode::InvalidArgument, "empty truth source");
  }
  return out;
}

namespace {

std::optional<fs::path> find_prediction(const fs::path& pred_dir,
                                        const std::string& id) {
  for (const char* suffix : {".nii.gz", ".nii"}) {
    const fs::path p = pred_dir / (id + suffix);
    if (fs::exists(p)) return p;
  }
  return std::nullopt;
}

}  // namespace

MetricsTable evaluate_run(const fs::path& pred_dir, const TruthSource& truth,
                          const std::vector<metrics::ClassSpec>& specs,
                          const EvaluateOptions& options) {
  if (specs.empty())
    throw Error(ErrorCode::InvalidArgument, "no classes to evaluate");
  for (const auto& spec : specs) {
    if (spec.name.empty() || spec.labels.empty())
      throw Error(ErrorCode::InvalidArgument,
                  "class specs need a name and at least one label");
  }
  const auto cohort = truth.resolve();
  if (cohort.empty())
    throw Error(ErrorCode::InvalidArgument, "truth source lists no patients");

  MetricsTable table;
  for (const auto& spec : specs) {
    for (const auto m : options.metric_list)
      table.columns.emplace_back(spec.name, m);
  }

  bool any_prediction = false;
  for (const auto& [id, _] : cohort) {
    if (find_prediction(pred_dir, id)) {
      any_prediction = true;
      break;
    }
  }
  if (!any_prediction)
    throw Error(ErrorCode::NoPredictionsFound,
                "no prediction files under " + pred_dir.string());

  struct RowResult {
    std::vector<double> values;
    bool flagged = false;
    bool missing = false;
  };
  std::vector<RowResult> results(cohort.size());

  metrics::EvaluatePairOptions pair_options;
  pair_options.surface_dice_tolerance_mm = options.surface_dice_tolerance_mm;

  parallel_for(cohort.size(), options.workers, [&](std::size_t i) {
    const auto& [id, truth_path] = cohort[i];
    RowResult& row = results[i];
    Volume truth_mask = nifti::read_nifti(truth_path);
    truth_mask.set_kind(VoxelKind::labels);

    const auto pred_path = find_prediction(pred_dir, id);
    if (!pred_path) {
      log::warn("evaluate", id, "missing prediction; worst-case row");
      row.missing = true;
      const double diagonal = truth_mask.physical_diagonal();
      for (const auto& [_, m] : table.columns)
        row.values.push_back(metrics::metric_sign(m) > 0 ? 0.0 : diagonal);
      return;
    }

    try {
      Volume pred_mask = nifti::read_nifti(*pred_path);
      pred_mask.set_kind(VoxelKind::labels);
      const auto values = metrics::evaluate_pair(
          pred_mask, truth_mask, specs, options.metric_list, pair_options);
      for (const auto& col : table.columns) row.values.push_back(values.at(col));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::GeometryMismatch) throw;
      log::warn("evaluate", id,
                "geometry mismatch; row flagged and excluded from summary");
      row.flagged = true;
      row.values.assign(table.columns.size(),
                        std::numeric_limits<double>::quiet_NaN());
    }
  });

  for (std::size_t i = 0; i < cohort.size(); ++i) {
    table.ids.push_back(cohort[i].first);
    table.rows[cohort[i].first] = results[i].values;
    if (results[i].flagged) table.flagged.push_back(cohort[i].first);
    if (results[i].missing) table.missing.push_back(cohort[i].first);
  }
  return table;
}

namespace {

std::string format_cell(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

void write_results_csv(const MetricsTable& table, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw Error(ErrorCode::IoError, "cannot open " + path.string());

  out << "id";
  for (std::size_t c = 0; c < table.columns.size(); ++c)
    out << "," << table.column_name(c);
  out << "\n";

  for (const auto& id : table.ids) {
    out << id;
    for (double v : table.rows.at(id)) out << "," << format_cell(v);
    out << "\n";
  }

  const auto summary = table.summary();
  for (std::size_t s = 0; s < summary.size(); ++s) {
    out << MetricsTable::kSummaryLabels[s];
    for (double v : summary[s]) out << "," << format_cell(v);
    out << "\n";
  }
  if (!out)
    throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

MetricsTable read_results_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::IoError, "cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::SchemaError, "results csv is empty");
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n'))
    line.pop_back();

  MetricsTable table;
  std::stringstream header(line);
  std::string cell;
  std::getline(header, cell, ',');
  if (cell != "id")
    throw Error(ErrorCode::SchemaError, "results csv must start with 'id'");
  while (std::getline(header, cell, ',')) {
    // Column = <class>_<metric>; match the metric by suffix since class
    // names may themselves contain underscores.
    static const std::array<const char*, 4> names{"surf_dice", "dice", "hd95",
                                                  "asd"};
    bool matched = false;
    for (const char* name : names) {
      const std::string suffix = std::string("_") + name;
      if (cell.size() > suffix.size() &&
          cell.compare(cell.size() - suffix.size(), suffix.size(), suffix) ==
              0) {
        table.columns.emplace_back(cell.substr(0, cell.size() - suffix.size()),
                                   metrics::metric_from_name(name));
        matched = true;
        break;
      }
    }
    if (!matched)
      throw Error(ErrorCode::SchemaError,
                  "unrecognized results column '" + cell + "'");
  }

  static const std::array<const char*, 5>& labels =
      MetricsTable::kSummaryLabels;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n'))
      line.pop_back();
    if (line.empty()) continue;
    std::stringstream row(line);
    std::getline(row, cell, ',');
    const std::string id = cell;
    std::vector<double> values;
    while (std::getline(row, cell, ','))
      values.push_back(cell == "nan"
                           ? std::numeric_limits<double>::quiet_NaN()
                           : std::stod(cell));
    if (values.size() != table.columns.size())
      throw Error(ErrorCode::SchemaError,
                  "row '" + id + "' has the wrong number of cells");
    const bool is_summary =
        std::find(labels.begin(), labels.end(), id) != labels.end();
    if (!is_summary) {
      table.ids.push_back(id);
      table.rows[id] = values;
      if (std::any_of(values.begin(), values.end(),
                      [](double v) { return std::isnan(v); }))
        table.flagged.push_back(id);
    }
  }
  return table;
}

}  // namespace mist::eval
