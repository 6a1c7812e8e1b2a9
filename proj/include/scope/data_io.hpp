#pragma once

// CSV ingestion, level dictionaries and the model file.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scope/fit.hpp"

namespace scope {

enum class ColumnKind { categorical, continuous, response };

struct ColumnSchema {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
};

// Raw RFC-4180 table. `missing` marks empty and NA fields.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;  // throws when absent
  static bool missing(const std::string& field);
};

CsvTable parse_csv(std::istream& in);
void write_csv_row(std::ostream& os, const std::vector<std::string>& fields);

struct SchemaHints {
  std::string response = "y";
  std::map<std::string, ColumnKind> kinds;  // overrides inference
  std::vector<std::string> drop;            // columns to ignore
};

struct Dataset {
  std::vector<ColumnSchema> schema;  // in file order, ignored columns removed
  Design design;                     // categorical and continuous columns in schema order
  std::vector<double> y;
  std::size_t dropped_rows = 0;      // rows with a missing value
  // Categorical columns having some level observed exactly once.
  std::vector<std::string> single_observation;
};

Dataset read_csv(std::istream& in, const SchemaHints& hints = {});
Dataset read_csv(const std::string& path, const SchemaHints& hints = {});
// Writes the columns in schema order; floats with 17 significant digits.
void write_csv(std::ostream& os, const Dataset& ds);

std::string format_double(double x);

struct ModelFile {
  static constexpr int kVersion = 1;
  int version = kVersion;
  std::string fingerprint;  // filled by make_model and checked on load
  Family family = Family::linear;
  std::string response = "y";
  double gamma = 0.0;
  double lambda = 0.0;
  std::vector<std::string> categorical_names;
  std::vector<std::vector<std::string>> levels;
  std::vector<std::string> continuous_names;
  std::optional<Hierarchy> hierarchy;
  Coefficients coef;
  std::vector<std::vector<int>> clusters;
  std::size_t sweeps = 0;
  bool converged = false;
  double objective = 0.0;

  std::string schema_fingerprint() const;
};

ModelFile make_model(const Design& d, const std::string& response, Family family, double gamma, double lambda,
                     const FitResult& fit);

std::string serialize_model(const ModelFile& m);
ModelFile deserialize_model(const std::string& text);
void save_model(const std::string& path, const ModelFile& m);
ModelFile load_model(const std::string& path);

// New data encoded against a saved model. Unknown labels get code -1 and a note;
// rows with missing inputs are skipped.
struct Encoded {
  Design design;
  std::vector<std::size_t> rows;  // source row of each encoded row
  std::optional<std::vector<double>> y;  // when the response column is present
  std::vector<std::string> notes;
};

Encoded encode_for_model(const CsvTable& table, const ModelFile& m);

}  // namespace scope
