#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "latmix/fit.hpp"

namespace latmix {

using json = nlohmann::json;

/// CSV with a header row; "", "NA", "NaN" and "." are missing.
DataTable parse_csv(std::istream& in);
DataTable read_csv(const std::string& path);
void write_csv(std::ostream& out, const DataTable& t);

/// 17 significant digits; "NA" for NaN.
std::string format_double(double x);

/// Writes rows of already formatted cells.
void write_rows(std::ostream& out, const std::vector<std::string>& header,
                const std::vector<std::vector<std::string>>& rows);

ModelSpec spec_from_json(const json& j);
json spec_to_json(const ModelSpec& s);
ModelSpec read_spec(const std::string& path);

/// Subject/observation counts, column names and a content hash of the
/// canonical (sorted, retained) data.
json data_fingerprint(const ValidatedModel& m, const DataTable& data);

json archive_to_json(const FittedModel& fm, const DataTable& data, const Vec& class_proportions);
/// Restores a fit; the dataset must rebuild the same model.
FittedModel fitted_from_archive(const json& a, std::shared_ptr<const ValidatedModel> m);
json read_json(const std::string& path);
void write_json(const std::string& path, const json& j);

/// Warns (returns false) when the archive was fitted on different data.
bool fingerprint_matches(const json& archive, const ValidatedModel& m, const DataTable& data);

}  // namespace latmix
