#pragma once

// Misclassification triage: attribute every wrong test window with
// KernelSHAP and sort it into a transitional-data or model-limitation bucket.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trafficguard/dataset.hpp"
#include "trafficguard/simnet.hpp"
#include "trafficguard/xai.hpp"

namespace trafficguard::triage {

enum class Category { kTransitionalData, kModelLimitation, kUncategorized };
std::string_view category_name(Category c);
Category parse_category(std::string_view name);

struct Thresholds {
  double recover_window = 120.0;        // seconds after an attack ends
  double low_traffic_percentile = 25.0;  // of control window mean F9
};

struct CaseContext {
  bool timeline_known = false;
  // Seconds from the end of the latest attack that ended at or before the
  // window start; empty when none has.
  std::optional<double> seconds_since_attack_end;
  double mean_vehicle_number = 0.0;   // raw F9 averaged over the window
  double low_traffic_threshold = 0.0;  // control percentile of the same
};

struct ErrorCase {
  std::size_t sample_index = 0;
  int window_begin = 0;
  int window_end = 0;
  int true_label = dataset::kLabelNormal;
  int predicted_label = dataset::kLabelNormal;
  double probability = 0.0;  // P(normal)
  xai::Attribution shap;
  CaseContext context;
  Category category = Category::kUncategorized;
};

std::optional<double> seconds_since_attack_end(std::span<const simnet::AttackEvent> timeline,
                                               int window_begin);

// Pure rule:
//  TRANSITIONAL_DATA: normal predicted hacked, starting within the recovery
//    window after an attack ended.
//  MODEL_LIMITATION: hacked predicted normal while window traffic is below
//    the control low-traffic threshold.
//  UNCATEGORIZED otherwise.
// Throws DataError when the case carries no timeline.
Category categorize(const ErrorCase& error, const Thresholds& thresholds = {});

struct CollectOptions {
  Thresholds thresholds;
  xai::ShapOptions shap;
  double decision_threshold = 0.5;
};

// Every misclassified window becomes a case with SHAP computed against
// `baseline` and its category filled in. `timeline` must be present.
std::vector<ErrorCase> collect_errors(const xai::ModelFn& model, const dataset::Dataset& test,
                                      const std::optional<std::vector<simnet::AttackEvent>>& timeline,
                                      const Tensor& baseline,
                                      std::span<const double> control_vehicle_means,
                                      const CollectOptions& options = {});

struct TriageReport {
  static constexpr int kSchemaVersion = 1;
  std::vector<ErrorCase> cases;  // ordered by window time
  std::array<std::size_t, 3> counts{};  // indexed by Category
  Thresholds thresholds;
  std::string narrative;

  std::size_t count(Category c) const { return counts[static_cast<std::size_t>(c)]; }
  std::string to_json() const;
  static TriageReport from_json(std::string_view text);
  std::string to_text() const;
};

TriageReport report(std::vector<ErrorCase> cases, const Thresholds& thresholds = {});

}  // namespace trafficguard::triage
