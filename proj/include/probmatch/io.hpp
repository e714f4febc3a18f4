#pragma once

#include <iosfwd>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "probmatch/dataset.hpp"

namespace probmatch {

enum class DataFormat { csv, json };

DataFormat parse_format(std::string_view name);
/// Picks the format from a file extension (".csv" or ".json").
DataFormat format_from_path(const std::string& path);

/// Reads and validates a dataset.
///
/// CSV: header row, one row per unit, point values only. The treatment column
/// is named `x` or `treatment`; an optional outcome column `y` or `outcome`;
/// optional ground-truth columns `truth_x` and `truth_<confounder>`; every other
/// column is a confounder, in header order.
///
/// JSON: `{"treatment": [cell...], "confounders": [[cell...], ...],
/// "outcome": [...]?, "confounder_names": [...]?, "truth": {...}?}` where a cell
/// is a number, `{"support": [...], "probs": [...]}` or `{"samples": [...]}`.
///
/// Failures raise Error(ErrorCode::schema) with the offending cell location.
StudyDataset load_dataset(std::istream& in, DataFormat format);
StudyDataset load_dataset_file(const std::string& path);
StudyDataset dataset_from_json(const nlohmann::json& doc);

/// Attaches ground truth from a sidecar document `{"truth": {"treatment": [...],
/// "confounders": [[...], ...]}, ...}`.
StudyDataset attach_truth(const StudyDataset& dataset, const nlohmann::json& sidecar);

nlohmann::json cell_to_json(const StochasticScalar& s);
StochasticScalar cell_from_json(const nlohmann::json& cell, const std::string& where);

/// Serializes observations and outcome (and truth when `include_truth`).
nlohmann::json dataset_to_json(const StudyDataset& dataset, bool include_truth = true);
nlohmann::json truth_to_json(const GroundTruth& truth);

/// Writes point-mass datasets as CSV; fails on stochastic cells.
void save_dataset_csv(const StudyDataset& dataset, std::ostream& out);

/// Writes "treated,control" followed by one row per pair, in stored order.
void save_pairs(const MatchedPairSet& pairs, std::ostream& out);

/// Formats a double so that parsing it back yields the same bits.
std::string format_double(double v);

}  // namespace probmatch
