#include "probmatch/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "probmatch/error.hpp"

namespace probmatch {

using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& text, const std::string& where) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (!text.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || text.empty())
    fail(ErrorCode::schema, where + ": malformed number '" + text + "'");
  if (!std::isfinite(v)) fail(ErrorCode::schema, where + ": NaN or infinite value");
  return v;
}

double json_number(const json& v, const std::string& where) {
  if (!v.is_number()) fail(ErrorCode::schema, where + ": expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) fail(ErrorCode::schema, where + ": NaN or infinite value");
  return d;
}

std::vector<double> json_numbers(const json& v, const std::string& where) {
  if (!v.is_array()) fail(ErrorCode::schema, where + ": expected an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    out.push_back(json_number(v[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

bool is_treatment_column(const std::string& name) { return name == "x" || name == "treatment"; }
bool is_outcome_column(const std::string& name) { return name == "y" || name == "outcome"; }

}  // namespace

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) fail(ErrorCode::internal, "cannot format number");
  return std::string(buf, ptr);
}

DataFormat parse_format(std::string_view name) {
  if (name == "csv") return DataFormat::csv;
  if (name == "json") return DataFormat::json;
  fail(ErrorCode::invalid_argument, "unknown format '" + std::string(name) + "'");
}

DataFormat format_from_path(const std::string& path) {
  const auto dot = path.rfind('.');
  if (dot != std::string::npos && path.substr(dot) == ".csv") return DataFormat::csv;
  return DataFormat::json;
}

StochasticScalar cell_from_json(const json& cell, const std::string& where) {
  if (cell.is_number()) return StochasticScalar::point(json_number(cell, where));
  if (!cell.is_object()) fail(ErrorCode::schema, where + ": cell must be a number or an object");
  try {
    if (cell.contains("support") || cell.contains("probs")) {
      if (!cell.contains("support") || !cell.contains("probs"))
        fail(ErrorCode::schema, where + ": distribution cell needs both support and probs");
      auto support = json_numbers(cell.at("support"), where + ".support");
      auto probs = json_numbers(cell.at("probs"), where + ".probs");
      if (support.size() == 1 && probs.size() == 1 && std::abs(probs[0] - 1.0) <= 1e-9)
        return StochasticScalar::point(support[0]);
      return StochasticScalar::discrete(std::move(support), std::move(probs));
    }
    if (cell.contains("samples"))
      return StochasticScalar::empirical(json_numbers(cell.at("samples"), where + ".samples"));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::schema) throw;
    fail(ErrorCode::schema, where + ": " + e.what());
  }
  fail(ErrorCode::schema, where + ": unrecognized cell object");
}

json cell_to_json(const StochasticScalar& s) {
  switch (s.kind()) {
    case StochasticScalar::Kind::point_mass:
      return s.value();
    case StochasticScalar::Kind::discrete:
      return json{{"support", std::vector<double>(s.values().begin(), s.values().end())},
                  {"probs", std::vector<double>(s.probs().begin(), s.probs().end())}};
    case StochasticScalar::Kind::empirical:
      return json{{"samples", std::vector<double>(s.values().begin(), s.values().end())}};
  }
  return nullptr;
}

namespace {

GroundTruth truth_from_json(const json& t, std::size_t n, std::size_t p) {
  GroundTruth truth;
  if (!t.is_object() || !t.contains("treatment") || !t.contains("confounders"))
    fail(ErrorCode::schema, "truth: needs treatment and confounders");
  truth.treatment = json_numbers(t.at("treatment"), "truth.treatment");
  const auto& rows = t.at("confounders");
  if (!rows.is_array()) fail(ErrorCode::schema, "truth.confounders: expected an array");
  for (std::size_t i = 0; i < rows.size(); ++i)
    truth.confounders.push_back(json_numbers(rows[i], "truth.confounders[" + std::to_string(i) + "]"));
  if (truth.treatment.size() != n || truth.confounders.size() != p)
    fail(ErrorCode::schema, "truth: shape does not match dataset");
  return truth;
}

}  // namespace

StudyDataset dataset_from_json(const json& doc) {
  if (!doc.is_object()) fail(ErrorCode::schema, "dataset document must be an object");
  if (!doc.contains("treatment")) fail(ErrorCode::schema, "missing treatment column");
  if (!doc.contains("confounders")) fail(ErrorCode::schema, "missing confounders");
  const auto& xs = doc.at("treatment");
  if (!xs.is_array()) fail(ErrorCode::schema, "treatment: expected an array");
  if (xs.empty()) fail(ErrorCode::schema, "empty dataset");
  std::vector<StochasticScalar> treatment;
  treatment.reserve(xs.size());
  for (std::size_t u = 0; u < xs.size(); ++u)
    treatment.push_back(cell_from_json(xs[u], "treatment[" + std::to_string(u) + "]"));

  const auto& zs = doc.at("confounders");
  if (!zs.is_array()) fail(ErrorCode::schema, "confounders: expected an array of rows");
  std::vector<std::vector<StochasticScalar>> confounders;
  for (std::size_t p = 0; p < zs.size(); ++p) {
    const auto& row = zs[p];
    const std::string where = "confounders[" + std::to_string(p) + "]";
    if (!row.is_array()) fail(ErrorCode::schema, where + ": expected an array");
    if (row.size() != xs.size())
      fail(ErrorCode::schema, where + ": inconsistent column length " + std::to_string(row.size()) +
                                  " (expected " + std::to_string(xs.size()) + ")");
    auto& out = confounders.emplace_back();
    out.reserve(row.size());
    for (std::size_t u = 0; u < row.size(); ++u)
      out.push_back(cell_from_json(row[u], where + "[" + std::to_string(u) + "]"));
  }

  std::vector<std::string> names;
  if (doc.contains("confounder_names")) names = doc.at("confounder_names").get<std::vector<std::string>>();

  std::optional<std::vector<double>> outcome;
  if (doc.contains("outcome") && !doc.at("outcome").is_null()) {
    outcome = json_numbers(doc.at("outcome"), "outcome");
    if (outcome->size() != xs.size()) fail(ErrorCode::schema, "outcome: inconsistent column length");
  }

  Observations obs(std::move(treatment), std::move(confounders), std::move(names));
  std::optional<GroundTruth> truth;
  if (doc.contains("truth") && !doc.at("truth").is_null())
    truth = truth_from_json(doc.at("truth"), obs.n_units(), obs.n_confounders());
  return StudyDataset(std::move(obs), std::move(outcome), std::move(truth));
}

StudyDataset attach_truth(const StudyDataset& dataset, const json& sidecar) {
  const json& t = sidecar.contains("truth") ? sidecar.at("truth") : sidecar;
  return StudyDataset(dataset.observed(), dataset.outcome(),
                      truth_from_json(t, dataset.n_units(), dataset.n_confounders()));
}

namespace {

StudyDataset load_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_csv_line(line);
      break;
    }
  }
  if (header.empty()) fail(ErrorCode::schema, "empty file");

  std::optional<std::size_t> x_col, y_col, truth_x_col;
  std::vector<std::size_t> z_cols;
  std::vector<std::string> z_names;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto& name = header[c];
    if (is_treatment_column(name)) {
      x_col = c;
    } else if (is_outcome_column(name)) {
      y_col = c;
    } else if (name == "truth_x" || name == "truth_treatment") {
      truth_x_col = c;
    } else if (name.rfind("truth_", 0) != 0) {
      z_cols.push_back(c);
      z_names.push_back(name);
    }
  }
  if (!x_col) fail(ErrorCode::schema, "missing treatment column (expected 'x' or 'treatment')");
  if (z_cols.empty()) fail(ErrorCode::schema, "no confounder columns");
  std::vector<std::optional<std::size_t>> truth_z_cols(z_cols.size());
  bool any_truth_z = false;
  for (std::size_t p = 0; p < z_names.size(); ++p) {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == "truth_" + z_names[p]) {
        truth_z_cols[p] = c;
        any_truth_z = true;
      }
  }

  std::vector<std::vector<double>> columns(header.size());
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      fail(ErrorCode::schema, "line " + std::to_string(line_no) + ": malformed row (" +
                                  std::to_string(fields.size()) + " fields, expected " +
                                  std::to_string(header.size()) + ")");
    for (std::size_t c = 0; c < fields.size(); ++c)
      columns[c].push_back(
          parse_number(fields[c], "line " + std::to_string(line_no) + ", column '" + header[c] + "'"));
  }
  const std::size_t n = columns[*x_col].size();
  if (n == 0) fail(ErrorCode::schema, "empty dataset (no rows)");

  std::vector<StochasticScalar> x;
  for (const double v : columns[*x_col]) x.push_back(StochasticScalar::point(v));
  std::vector<std::vector<StochasticScalar>> z;
  for (const auto c : z_cols) {
    auto& row = z.emplace_back();
    for (const double v : columns[c]) row.push_back(StochasticScalar::point(v));
  }
  std::optional<std::vector<double>> outcome;
  if (y_col) outcome = columns[*y_col];

  std::optional<GroundTruth> truth;
  if (truth_x_col || any_truth_z) {
    GroundTruth t;
    t.treatment = truth_x_col ? columns[*truth_x_col] : columns[*x_col];
    for (std::size_t p = 0; p < z_cols.size(); ++p)
      t.confounders.push_back(truth_z_cols[p] ? columns[*truth_z_cols[p]] : columns[z_cols[p]]);
    truth = std::move(t);
  }
  return StudyDataset(Observations(std::move(x), std::move(z), std::move(z_names)), std::move(outcome),
                      std::move(truth));
}

}  // namespace

StudyDataset load_dataset(std::istream& in, DataFormat format) {
  if (format == DataFormat::csv) return load_csv(in);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  if (trim(text).empty()) fail(ErrorCode::schema, "empty file");
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::schema, std::string("malformed JSON: ") + e.what());
  }
  return dataset_from_json(doc);
}

StudyDataset load_dataset_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open '" + path + "'");
  return load_dataset(in, format_from_path(path));
}

json truth_to_json(const GroundTruth& truth) {
  return json{{"treatment", truth.treatment}, {"confounders", truth.confounders}};
}

json dataset_to_json(const StudyDataset& dataset, bool include_truth) {
  const auto& obs = dataset.observed();
  json x = json::array();
  for (const auto& s : obs.treatment()) x.push_back(cell_to_json(s));
  json z = json::array();
  for (std::size_t p = 0; p < obs.n_confounders(); ++p) {
    json row = json::array();
    for (const auto& s : obs.confounder_row(p)) row.push_back(cell_to_json(s));
    z.push_back(std::move(row));
  }
  json doc{{"treatment", std::move(x)}, {"confounders", std::move(z)},
           {"confounder_names", obs.confounder_names()}};
  if (dataset.outcome()) doc["outcome"] = *dataset.outcome();
  if (include_truth && dataset.truth()) doc["truth"] = truth_to_json(*dataset.truth());
  return doc;
}

void save_dataset_csv(const StudyDataset& dataset, std::ostream& out) {
  const auto& obs = dataset.observed();
  if (!obs.all_point_mass()) fail(ErrorCode::invalid_argument, "CSV output supports point-mass cells only");
  out << "x";
  for (const auto& name : obs.confounder_names()) out << ',' << name;
  if (dataset.outcome()) out << ",y";
  if (dataset.truth()) {
    out << ",truth_x";
    for (const auto& name : obs.confounder_names()) out << ",truth_" << name;
  }
  out << '\n';
  for (std::size_t u = 0; u < obs.n_units(); ++u) {
    out << format_double(obs.treatment(u).value());
    for (std::size_t p = 0; p < obs.n_confounders(); ++p) out << ',' << format_double(obs.confounder(p, u).value());
    if (dataset.outcome()) out << ',' << format_double((*dataset.outcome())[u]);
    if (const auto& t = dataset.truth()) {
      out << ',' << format_double(t->treatment[u]);
      for (const auto& row : t->confounders) out << ',' << format_double(row[u]);
    }
    out << '\n';
  }
  if (!out) fail(ErrorCode::io, "failed writing dataset");
}

void save_pairs(const MatchedPairSet& pairs, std::ostream& out) {
  out << "treated,control\n";
  for (const auto& p : pairs) out << p.treated << ',' << p.control << '\n';
  if (!out) fail(ErrorCode::io, "failed writing pairs");
}

}  // namespace probmatch
