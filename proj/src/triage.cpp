#include "trafficguard/triage.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>
#include <sstream>

namespace trafficguard::triage {

std::string_view category_name(Category c) {
  switch (c) {
    case Category::kTransitionalData: return "TRANSITIONAL_DATA";
    case Category::kModelLimitation: return "MODEL_LIMITATION";
    case Category::kUncategorized: return "UNCATEGORIZED";
  }
  return "?";
}

Category parse_category(std::string_view name) {
  for (Category c : {Category::kTransitionalData, Category::kModelLimitation, Category::kUncategorized}) {
    if (category_name(c) == name) return c;
  }
  throw DataError("unknown triage category '" + std::string(name) + "'");
}

std::optional<double> seconds_since_attack_end(std::span<const simnet::AttackEvent> timeline,
                                               int window_begin) {
  std::optional<int> latest;
  for (const auto& ev : timeline) {
    if (ev.end <= window_begin && (!latest || ev.end > *latest)) latest = ev.end;
  }
  if (!latest) return std::nullopt;
  return static_cast<double>(window_begin - *latest);
}

Category categorize(const ErrorCase& error, const Thresholds& thresholds) {
  if (!error.context.timeline_known) throw DataError("categorize: case has no scenario timeline");
  const auto& ctx = error.context;
  if (error.true_label == dataset::kLabelNormal && error.predicted_label == dataset::kLabelHacked) {
    if (ctx.seconds_since_attack_end && *ctx.seconds_since_attack_end <= thresholds.recover_window) {
      return Category::kTransitionalData;
    }
  } else if (error.true_label == dataset::kLabelHacked &&
             error.predicted_label == dataset::kLabelNormal) {
    if (ctx.mean_vehicle_number < ctx.low_traffic_threshold) return Category::kModelLimitation;
  }
  return Category::kUncategorized;
}

std::vector<ErrorCase> collect_errors(const xai::ModelFn& model, const dataset::Dataset& test,
                                      const std::optional<std::vector<simnet::AttackEvent>>& timeline,
                                      const Tensor& baseline,
                                      std::span<const double> control_vehicle_means,
                                      const CollectOptions& options) {
  if (!timeline) throw DataError("collect_errors: scenario timeline is required");
  if (control_vehicle_means.empty()) throw DataError("collect_errors: control traffic levels are empty");
  const double low = dataset::percentile(
      std::vector<double>(control_vehicle_means.begin(), control_vehicle_means.end()),
      options.thresholds.low_traffic_percentile);

  std::vector<ErrorCase> cases;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const double p = model(test.inputs[i]);
    const int predicted = p >= options.decision_threshold ? dataset::kLabelNormal : dataset::kLabelHacked;
    if (predicted == test.labels[i]) continue;
    ErrorCase c;
    c.sample_index = i;
    c.window_begin = test.info[i].begin;
    c.window_end = test.info[i].end;
    c.true_label = test.labels[i];
    c.predicted_label = predicted;
    c.probability = p;
    c.context.timeline_known = true;
    c.context.seconds_since_attack_end = seconds_since_attack_end(*timeline, c.window_begin);
    c.context.mean_vehicle_number = test.info[i].mean_vehicle_number;
    c.context.low_traffic_threshold = low;
    c.shap = xai::kernel_shap(model, test.inputs[i], baseline, options.shap);
    c.category = categorize(c, options.thresholds);
    cases.push_back(std::move(c));
  }
  return cases;
}

TriageReport report(std::vector<ErrorCase> cases, const Thresholds& thresholds) {
  std::stable_sort(cases.begin(), cases.end(), [](const ErrorCase& a, const ErrorCase& b) {
    if (a.window_begin != b.window_begin) return a.window_begin < b.window_begin;
    return a.sample_index < b.sample_index;
  });
  TriageReport r;
  r.thresholds = thresholds;
  for (const auto& c : cases) ++r.counts[static_cast<std::size_t>(c.category)];
  r.cases = std::move(cases);

  std::ostringstream os;
  os << r.cases.size() << " misclassified window(s): " << r.count(Category::kTransitionalData)
     << " transitional-data (normal label during post-attack recovery), "
     << r.count(Category::kModelLimitation) << " model-limitation (attack under low traffic without a "
     << "congestion signature), " << r.count(Category::kUncategorized) << " uncategorized.";
  r.narrative = os.str();
  return r;
}

namespace {

const char* label_name(int label) { return label == dataset::kLabelNormal ? "NORMAL" : "HACKED"; }

int parse_label(const std::string& s) {
  if (s == "NORMAL") return dataset::kLabelNormal;
  if (s == "HACKED") return dataset::kLabelHacked;
  throw DataError("unknown label '" + s + "' in triage report");
}

std::vector<std::pair<std::string, double>> top_features(const xai::Attribution& a, std::size_t k) {
  std::vector<std::pair<std::string, double>> out;
  const std::vector<std::size_t> input_shape = {1, 1, a.scores.size()};
  for (std::size_t i : a.ranked()) {
    if (out.size() == k) break;
    out.emplace_back(xai::index_name(a, i, input_shape), a.scores[i]);
  }
  return out;
}

}  // namespace

std::string TriageReport::to_json() const {
  nlohmann::ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["thresholds"] = {{"recover_window_s", thresholds.recover_window},
                     {"low_traffic_percentile", thresholds.low_traffic_percentile}};
  j["counts"] = {{"TRANSITIONAL_DATA", count(Category::kTransitionalData)},
                 {"MODEL_LIMITATION", count(Category::kModelLimitation)},
                 {"UNCATEGORIZED", count(Category::kUncategorized)},
                 {"total", cases.size()}};
  j["narrative"] = narrative;
  auto& list = j["cases"] = nlohmann::ordered_json::array();
  for (const auto& c : cases) {
    nlohmann::ordered_json cj;
    cj["sample_index"] = c.sample_index;
    cj["window_begin"] = c.window_begin;
    cj["window_end"] = c.window_end;
    cj["true_label"] = label_name(c.true_label);
    cj["predicted_label"] = label_name(c.predicted_label);
    cj["probability_normal"] = c.probability;
    cj["category"] = category_name(c.category);
    cj["context"] = {{"seconds_since_attack_end", c.context.seconds_since_attack_end
                                                      ? nlohmann::ordered_json(*c.context.seconds_since_attack_end)
                                                      : nlohmann::ordered_json(nullptr)},
                     {"mean_vehicle_number", c.context.mean_vehicle_number},
                     {"low_traffic_threshold", c.context.low_traffic_threshold}};
    cj["shap"] = {{"base_value", c.shap.base_value},
                  {"prediction", c.shap.prediction},
                  {"exact", c.shap.meta.exact},
                  {"seed", c.shap.meta.seed},
                  {"phi", c.shap.scores}};
    auto& top = cj["shap_top5"] = nlohmann::ordered_json::array();
    for (const auto& [name, score] : top_features(c.shap, 5)) {
      top.push_back({{"feature", name}, {"score", score}, {"direction", score > 0 ? "NORMAL" : (score < 0 ? "HACKED" : "NONE")}});
    }
    list.push_back(std::move(cj));
  }
  return j.dump(2) + "\n";
}

TriageReport TriageReport::from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("schema_version").get<int>() != kSchemaVersion) {
      throw DataError("unsupported triage report schema version");
    }
    TriageReport r;
    r.thresholds.recover_window = j.at("thresholds").at("recover_window_s").get<double>();
    r.thresholds.low_traffic_percentile = j.at("thresholds").at("low_traffic_percentile").get<double>();
    r.narrative = j.at("narrative").get<std::string>();
    for (const auto& cj : j.at("cases")) {
      ErrorCase c;
      c.sample_index = cj.at("sample_index").get<std::size_t>();
      c.window_begin = cj.at("window_begin").get<int>();
      c.window_end = cj.at("window_end").get<int>();
      c.true_label = parse_label(cj.at("true_label").get<std::string>());
      c.predicted_label = parse_label(cj.at("predicted_label").get<std::string>());
      c.probability = cj.at("probability_normal").get<double>();
      c.category = parse_category(cj.at("category").get<std::string>());
      const auto& ctx = cj.at("context");
      c.context.timeline_known = true;
      if (!ctx.at("seconds_since_attack_end").is_null()) {
        c.context.seconds_since_attack_end = ctx.at("seconds_since_attack_end").get<double>();
      }
      c.context.mean_vehicle_number = ctx.at("mean_vehicle_number").get<double>();
      c.context.low_traffic_threshold = ctx.at("low_traffic_threshold").get<double>();
      const auto& sj = cj.at("shap");
      c.shap.method = xai::Method::kShap;
      c.shap.granularity = xai::Granularity::kColumn;
      c.shap.scores = sj.at("phi").get<std::vector<double>>();
      c.shap.shape = {c.shap.scores.size()};
      c.shap.base_value = sj.at("base_value").get<double>();
      c.shap.prediction = sj.at("prediction").get<double>();
      c.shap.meta.exact = sj.at("exact").get<bool>();
      c.shap.meta.seed = sj.at("seed").get<std::uint64_t>();
      c.shap.meta.baseline_policy = "CONTROL_MEAN";
      ++r.counts[static_cast<std::size_t>(c.category)];
      r.cases.push_back(std::move(c));
    }
    const auto& counts = j.at("counts");
    if (counts.at("total").get<std::size_t>() != r.cases.size() ||
        counts.at("TRANSITIONAL_DATA").get<std::size_t>() != r.count(Category::kTransitionalData) ||
        counts.at("MODEL_LIMITATION").get<std::size_t>() != r.count(Category::kModelLimitation) ||
        counts.at("UNCATEGORIZED").get<std::size_t>() != r.count(Category::kUncategorized)) {
      throw DataError("triage report counts disagree with its cases");
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed triage report: ") + e.what());
  }
}

std::string TriageReport::to_text() const {
  std::ostringstream os;
  os << "Misclassification triage\n========================\n" << narrative << "\n";
  for (const auto& c : cases) {
    os << "\n[" << category_name(c.category) << "] window " << c.window_begin << "-" << c.window_end
       << " s: true " << label_name(c.true_label) << ", predicted " << label_name(c.predicted_label)
       << " (P(normal) = " << c.probability << ")\n";
    os << "  since last attack end: ";
    if (c.context.seconds_since_attack_end) {
      os << *c.context.seconds_since_attack_end << " s";
    } else {
      os << "n/a";
    }
    os << "; mean vehicles " << c.context.mean_vehicle_number << " (low-traffic threshold "
       << c.context.low_traffic_threshold << ")\n";
    os << "  SHAP top features:";
    for (const auto& [name, score] : top_features(c.shap, 5)) os << " " << name << "=" << score;
    os << "\n";
  }
  return os.str();
}

}  // namespace trafficguard::triage
