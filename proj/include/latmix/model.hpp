#pragma once

#include <memory>
#include <string>
#include <vector>

#include "latmix/layout.hpp"

namespace latmix {

/// Column-oriented table; numeric cells are NaN when missing or non-numeric.
struct DataTable {
  std::vector<std::string> names;
  std::vector<std::vector<double>> numeric;
  std::vector<std::vector<std::string>> text;

  int rows() const { return numeric.empty() ? 0 : static_cast<int>(numeric[0].size()); }
  int cols() const { return static_cast<int>(names.size()); }
  int column(const std::string& name) const;  // -1 when absent
};

struct Observation {
  int marker;
  int visit;
};

struct SubjectData {
  std::string id;
  std::vector<double> times;      // per retained visit
  std::vector<double> cor_times;  // per visit, for the BM/AR process
  Mat x_fixed;                    // visits x p
  Mat z;                          // visits x q
  Mat x_contrast;                 // visits x n_contrast
  Mat y;                          // visits x K, NaN when missing
  std::vector<Observation> obs;   // stacked marker-major
  Vec x_class;                    // 1 + classmb covariates
  bool has_survival = false;
  bool has_entry = false;
  double entry = 0.0;
  double event_time = 0.0;
  int event = 0;
  Vec x_surv;                     // one value per survival effect term

  int n_obs() const { return static_cast<int>(obs.size()); }
};

struct DatasetCounts {
  int subjects = 0;
  int observations = 0;
  int deleted_observations = 0;
  int dropped_subjects = 0;
  std::vector<int> events;  // per cause
};

struct ValidatedModel {
  ModelSpec spec;
  ModelStructure st;
  ParameterLayout layout;
  std::vector<SubjectData> subjects;
  DatasetCounts counts;
  std::vector<std::vector<double>> marker_values;  // retained values per marker
};

/// Sorts rows (stable) by subject then time, applies listwise deletion,
/// resolves links and hazards, and builds the layout.
std::shared_ptr<const ValidatedModel> validate_and_build(const ModelSpec& spec,
                                                         const DataTable& data);

/// Subjects of new data under a fitted structure. Outcome and survival
/// columns are optional; subjects without observations are kept.
std::vector<SubjectData> subjects_for_prediction(const ValidatedModel& m, const DataTable& data);

/// Sorted row order: subject (numeric order when all ids are numeric), then time.
std::vector<int> subject_time_order(const DataTable& data, const std::string& subject,
                                    const std::string& time);

/// Evaluates a term on one row of the table (NaN when any factor is missing).
double term_value(const DataTable& data, const Term& t, int row);

}  // namespace latmix
