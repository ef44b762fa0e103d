#include "trajeval/metaeval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace trajeval {

using nlohmann::json;

EvalReport report_from_classification(const ClassificationReport& report) {
  EvalReport out;
  out.ma = report.accuracy;
  out.window_count = report.total;
  const int k = static_cast<int>(report.confusion.size());
  double f1_sum = 0.0;
  int present = 0;
  for (int c = 0; c < k; ++c) {
    const BehaviorLabel label = static_cast<BehaviorLabel>(c);
    long true_count = 0, pred_count = 0;
    for (int j = 0; j < k; ++j) {
      true_count += report.confusion[c][j];
      pred_count += report.confusion[j][c];
    }
    if (true_count == 0 && pred_count == 0) {
      out.absent_classes.push_back(label);
      continue;
    }
    out.per_class_mf1[label] = report.f1[c];
    if (true_count > 0) out.per_class_ma[label] = report.recall[c];
    f1_sum += report.f1[c];
    ++present;
  }
  out.macro_mf1 = present > 0 ? f1_sum / present : 0.0;
  return out;
}

EvalReport meta_evaluate(const EvaluatorModel& model,
                         const std::vector<JointTrajectory>& predicted, int window_len,
                         int stride, int threads) {
  if (predicted.empty()) throw std::invalid_argument("meta_evaluate: no trajectories");
  if (predicted.front().dim() != model.input_dim) {
    throw std::invalid_argument("meta_evaluate: data dimension " +
                                std::to_string(predicted.front().dim()) +
                                " does not match model input dimension " +
                                std::to_string(model.input_dim));
  }
  const std::vector<LabeledWindow> windows = window_all(predicted, window_len, stride);
  if (windows.empty()) {
    throw std::invalid_argument("meta_evaluate: no windows (trajectories shorter than L?)");
  }
  return report_from_classification(evaluate(model, windows, threads));
}

void attach_dtw(EvalReport& report, const PerClassDtw& dtw) {
  report.per_class_dtw.clear();
  for (const auto& [label, entry] : dtw.per_class) {
    report.per_class_dtw[label] = entry.mean_normalized;
  }
  report.mean_dtw = dtw.total_chunks > 0 ? dtw.grand_mean_normalized
                                         : std::numeric_limits<double>::quiet_NaN();
}

CriterionKind parse_criterion(std::string_view token) {
  if (token == "val_loss") return CriterionKind::val_loss;
  if (token == "dtw") return CriterionKind::dtw;
  if (token == "mf1") return CriterionKind::mf1;
  if (token == "success_rate") return CriterionKind::success_rate;
  throw std::invalid_argument("unknown criterion '" + std::string(token) +
                              "' (expected val_loss, dtw, mf1 or success_rate)");
}

std::string_view to_string(CriterionKind kind) {
  switch (kind) {
    case CriterionKind::val_loss: return "val_loss";
    case CriterionKind::dtw: return "dtw";
    case CriterionKind::mf1: return "mf1";
    case CriterionKind::success_rate: return "success_rate";
  }
  return "?";
}

bool criterion_maximizes(CriterionKind kind) {
  return kind == CriterionKind::mf1 || kind == CriterionKind::success_rate;
}

int select_epoch(const SelectionCriterion& criterion) {
  if (criterion.series.empty()) throw std::invalid_argument("select_epoch: empty series");
  for (double v : criterion.series) {
    if (!std::isfinite(v)) throw std::invalid_argument("select_epoch: non-finite value");
  }
  const bool maximize = criterion_maximizes(criterion.kind);
  std::size_t best = 0;
  for (std::size_t i = 1; i < criterion.series.size(); ++i) {
    const double v = criterion.series[i];
    // Strict comparison keeps the earliest epoch on ties.
    if (maximize ? v > criterion.series[best] : v < criterion.series[best]) best = i;
  }
  return static_cast<int>(best) + 1;
}

Vec read_series_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open series file '" + path + "'");
  Vec values;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("epoch", 0) == 0) continue;  // header
    std::istringstream row(line);
    std::string epoch_str, value_str;
    if (!std::getline(row, epoch_str, ',') || !std::getline(row, value_str)) {
      throw std::invalid_argument(path + " line " + std::to_string(line_no) +
                                  ": expected 'epoch,value'");
    }
    try {
      const long epoch = std::stol(epoch_str);
      if (epoch != static_cast<long>(values.size()) + 1) {
        throw std::invalid_argument("epochs must run 1..N in order");
      }
      values.push_back(std::stod(value_str));
    } catch (const std::exception& e) {
      throw std::invalid_argument(path + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (values.empty()) throw std::invalid_argument("series file '" + path + "' has no rows");
  return values;
}

std::vector<EvalReport> compare_policies(std::vector<EvalReport> reports) {
  if (reports.size() < 2) {
    throw std::invalid_argument("compare_policies needs at least 2 reports");
  }
  auto key_dtw = [](const EvalReport& r) {
    return std::isnan(r.mean_dtw) ? std::numeric_limits<double>::infinity() : r.mean_dtw;
  };
  std::sort(reports.begin(), reports.end(), [&](const EvalReport& a, const EvalReport& b) {
    if (a.macro_mf1 != b.macro_mf1) return a.macro_mf1 > b.macro_mf1;
    if (key_dtw(a) != key_dtw(b)) return key_dtw(a) < key_dtw(b);
    return a.policy_name < b.policy_name;
  });
  return reports;
}

namespace {

Vec average_ranks(const Vec& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  Vec ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;  // average of 1-based ranks
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("spearman: length mismatch");
  if (a.size() < 2) throw std::invalid_argument("spearman: need at least 2 values");
  const Vec ra = average_ranks(a);
  const Vec rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  double mean_a = 0.0, mean_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    mean_a += ra[i];
    mean_b += rb[i];
  }
  mean_a /= n;
  mean_b /= n;
  double cov = 0.0, var_a = 0.0, var_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = ra[i] - mean_a;
    const double db = rb[i] - mean_b;
    cov += da * db;
    var_a += da * da;
    var_b += db * db;
  }
  if (var_a == 0.0 || var_b == 0.0) {
    throw std::invalid_argument("spearman: zero rank variance (constant series)");
  }
  return cov / std::sqrt(var_a * var_b);
}

std::string report_csv(const EvalReport& report) {
  std::string out = "class,mA,mF1,dtw\n";
  for (BehaviorLabel b : all_behaviors()) {
    const bool absent =
        std::find(report.absent_classes.begin(), report.absent_classes.end(), b) !=
        report.absent_classes.end();
    if (absent) continue;
    out += std::string(to_string(b)) + ',';
    auto ma = report.per_class_ma.find(b);
    if (ma != report.per_class_ma.end()) out += format_double(ma->second);
    out += ',';
    auto f1 = report.per_class_mf1.find(b);
    if (f1 != report.per_class_mf1.end()) out += format_double(f1->second);
    out += ',';
    auto d = report.per_class_dtw.find(b);
    if (d != report.per_class_dtw.end()) out += format_double(d->second);
    out += '\n';
  }
  out += "average," + format_double(report.ma) + ',' + format_double(report.macro_mf1) + ',';
  out += std::isnan(report.mean_dtw) ? "" : format_double(report.mean_dtw);
  out += '\n';
  return out;
}

namespace {

json label_map_to_json(const std::map<BehaviorLabel, double>& m) {
  json j = json::object();
  for (const auto& [label, value] : m) j[std::string(to_string(label))] = value;
  return j;
}

std::map<BehaviorLabel, double> label_map_from_json(const json& j) {
  std::map<BehaviorLabel, double> m;
  for (const auto& [key, value] : j.items()) m[parse_behavior(key)] = value.get<double>();
  return m;
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
  json j;
  j["policy_name"] = report.policy_name;
  j["ma"] = report.ma;
  j["macro_mf1"] = report.macro_mf1;
  j["window_count"] = report.window_count;
  j["per_class_ma"] = label_map_to_json(report.per_class_ma);
  j["per_class_mf1"] = label_map_to_json(report.per_class_mf1);
  j["per_class_dtw"] = label_map_to_json(report.per_class_dtw);
  if (!std::isnan(report.mean_dtw)) j["mean_dtw"] = report.mean_dtw;
  json absent = json::array();
  for (BehaviorLabel b : report.absent_classes) absent.push_back(std::string(to_string(b)));
  j["absent_classes"] = std::move(absent);
  return j.dump(2);
}

EvalReport report_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("report: ") + e.what());
  }
  EvalReport report;
  try {
    report.policy_name = j.value("policy_name", "");
    report.ma = j.value("ma", 0.0);
    report.macro_mf1 = j.at("macro_mf1").get<double>();
    report.window_count = j.value("window_count", 0L);
    if (j.contains("per_class_ma")) report.per_class_ma = label_map_from_json(j["per_class_ma"]);
    if (j.contains("per_class_mf1")) {
      report.per_class_mf1 = label_map_from_json(j["per_class_mf1"]);
    }
    if (j.contains("per_class_dtw")) {
      report.per_class_dtw = label_map_from_json(j["per_class_dtw"]);
    }
    if (j.contains("mean_dtw")) report.mean_dtw = j["mean_dtw"].get<double>();
    if (j.contains("absent_classes")) {
      for (const json& s : j["absent_classes"]) {
        report.absent_classes.push_back(parse_behavior(s.get<std::string>()));
      }
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("report: ") + e.what());
  }
  return report;
}

EvalReport load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open report file '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return report_from_json_text(text);
}

std::string comparison_csv(const std::vector<EvalReport>& ranked) {
  std::string out = "policy";
  for (BehaviorLabel b : all_behaviors()) {
    const std::string name(to_string(b));
    out += ',' + name + "_mA," + name + "_mF1," + name + "_dtw";
  }
  out += ",avg_mA,avg_mF1,avg_dtw\n";
  for (const EvalReport& r : ranked) {
    out += r.policy_name;
    for (BehaviorLabel b : all_behaviors()) {
      auto ma = r.per_class_ma.find(b);
      auto f1 = r.per_class_mf1.find(b);
      auto d = r.per_class_dtw.find(b);
      out += ',';
      if (ma != r.per_class_ma.end()) out += format_double(ma->second);
      out += ',';
      if (f1 != r.per_class_mf1.end()) out += format_double(f1->second);
      out += ',';
      if (d != r.per_class_dtw.end()) out += format_double(d->second);
    }
    out += ',' + format_double(r.ma) + ',' + format_double(r.macro_mf1) + ',';
    out += std::isnan(r.mean_dtw) ? "" : format_double(r.mean_dtw);
    out += '\n';
  }
  return out;
}

}  // namespace trajeval
