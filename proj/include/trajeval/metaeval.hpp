#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "trajeval/classifier.hpp"
#include "trajeval/core.hpp"
#include "trajeval/dtw.hpp"

namespace trajeval {

// Per-policy evaluation: meta-accuracy, per-class / macro meta-F1 and,
// when attached, per-class DTW. macro_mf1 averages only the classes present
// in truth or prediction; the excluded ones are listed in absent_classes.
struct EvalReport {
  std::string policy_name;
  double ma = 0.0;
  std::map<BehaviorLabel, double> per_class_ma;   // recall per true class
  std::map<BehaviorLabel, double> per_class_mf1;
  double macro_mf1 = 0.0;
  std::vector<BehaviorLabel> absent_classes;
  std::map<BehaviorLabel, double> per_class_dtw;  // empty until attached
  double mean_dtw = std::numeric_limits<double>::quiet_NaN();
  long window_count = 0;
};

// Windows every predicted trajectory (majority labels from the carried
// reference annotations), classifies each window with the model and reduces
// the confusion matrix to an EvalReport. The classification path is exactly
// classifier::evaluate.
EvalReport meta_evaluate(const EvaluatorModel& model,
                         const std::vector<JointTrajectory>& predicted, int window_len,
                         int stride, int threads = 1);

EvalReport report_from_classification(const ClassificationReport& report);

void attach_dtw(EvalReport& report, const PerClassDtw& dtw);

enum class CriterionKind { val_loss, dtw, mf1, success_rate };

CriterionKind parse_criterion(std::string_view token);
std::string_view to_string(CriterionKind kind);

// Lower is better for val_loss and dtw, higher for mf1 and success_rate.
bool criterion_maximizes(CriterionKind kind);

struct SelectionCriterion {
  CriterionKind kind = CriterionKind::mf1;
  Vec series;  // per-epoch values, index 0 = epoch 1
};

// 1-based epoch optimizing the criterion; ties go to the earliest epoch.
int select_epoch(const SelectionCriterion& criterion);

// Reads a CSV of `epoch,value` rows (header optional); epochs must be
// 1..N in order.
Vec read_series_csv(const std::string& path);

// Descending macro meta-F1; ties broken by ascending mean DTW, then name.
// The result is a permutation of the input, independent of input order.
std::vector<EvalReport> compare_policies(std::vector<EvalReport> reports);

// Spearman rank correlation with average ranks on ties. Throws on length
// mismatch, length < 2, or zero rank variance in either series.
double spearman(const Vec& a, const Vec& b);

// CSV: class,mA,mF1,dtw rows plus a final `average` row. Cells without a
// value stay empty.
std::string report_csv(const EvalReport& report);
std::string report_to_json(const EvalReport& report);
EvalReport report_from_json_text(const std::string& text);
EvalReport load_report(const std::string& path);

// One row per policy in rank order with per-class mA/mF1/DTW columns and
// the averages.
std::string comparison_csv(const std::vector<EvalReport>& ranked);

}  // namespace trajeval
