#include "trafficguard/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <ostream>

#include "text_util.hpp"

namespace trafficguard::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

Context make_context(const fs::path& config_path, std::optional<std::uint64_t> seed, const fs::path& out) {
  Context ctx;
  ctx.config = config::load_run_config(config_path);
  if (seed) config::apply_seed(ctx.config, *seed);
  ctx.out = out;
  return ctx;
}

namespace paths {
fs::path records(const Context& ctx) { return ctx.out / "records.csv"; }
fs::path control(const Context& ctx) { return ctx.out / "control.csv"; }
fs::path dataset_dir(const Context& ctx) { return ctx.out / "dataset"; }
fs::path model(const Context& ctx) { return ctx.out / "model.bin"; }
fs::path metrics(const Context& ctx) { return ctx.out / "metrics.json"; }
fs::path explain_dir(const Context& ctx) { return ctx.out / "explain"; }
fs::path triage(const Context& ctx) { return ctx.out / "triage.json"; }
fs::path pca(const Context& ctx) { return ctx.out / "pca.csv"; }
fs::path run_manifest(const Context& ctx) { return ctx.out / "run_manifest.json"; }
}  // namespace paths

namespace {

fs::path manifest_of(const fs::path& csv) {
  auto p = csv;
  p.replace_extension(".manifest.json");
  return p;
}

void require_file(const fs::path& p, const char* producer) {
  if (!fs::exists(p)) {
    throw IoError(p, std::string("missing artifact; run `trafficguard ") + producer + "` first");
  }
}

std::string rel(const Context& ctx, const fs::path& p) { return p.lexically_relative(ctx.out).generic_string(); }

void record_command(const Context& ctx, const std::string& command, const std::vector<fs::path>& inputs,
                    const std::vector<fs::path>& outputs) {
  ojson m = ojson::object();
  const auto path = paths::run_manifest(ctx);
  if (fs::exists(path)) {
    try {
      m = ojson::parse(read_file(path));
    } catch (const nlohmann::json::exception&) {
      m = ojson::object();
    }
  }
  m["seed"] = ctx.config.seed;
  ojson entry;
  entry["seed"] = ctx.config.seed;
  auto digests = [&](const std::vector<fs::path>& files) {
    ojson d = ojson::object();
    for (const auto& f : files) d[rel(ctx, f)] = sha256_file(f);
    return d;
  };
  entry["inputs"] = digests(inputs);
  entry["outputs"] = digests(outputs);
  m["commands"][command] = std::move(entry);
  write_file(path, m.dump(2) + "\n");
}

std::string config_label(int rows, dataset::TensorMode mode, int batch_rows) {
  std::ostringstream os;
  os << "R=" << rows << " (" << rows * simnet::kSampleInterval / batch_rows << " s"
     << (mode == dataset::TensorMode::kThreeLayer ? ", 3-layer" : "") << ")";
  return os.str();
}

// ---------------------------------------------------------------------------
// Dataset artifacts

struct DatasetArtifacts {
  ojson manifest;
  dataset::Dataset train;
  dataset::Dataset test;
  dataset::NormalizationStats stats;
  dataset::ControlStatistics control;
  dataset::TensorMode mode = dataset::TensorMode::kSingle;
  Tensor baseline;
  std::vector<double> control_vehicle_means;
  std::vector<simnet::AttackEvent> timeline;
  int monitored = 0;
  std::string train_sha;
  std::string test_sha;
};

constexpr const char* kDatasetFiles[] = {"train.bin", "test.bin", "stats.json", "control.json"};

std::string control_to_json(const dataset::ControlStatistics& c, const std::vector<double>& vehicle_means) {
  ojson j;
  j["rows"] = c.rows;
  j["batch_rows"] = c.batch_rows;
  j["batches"] = c.batches;
  j["mean"] = c.mean;
  j["std"] = c.std;
  j["control_vehicle_means"] = vehicle_means;
  return j.dump() + "\n";
}

DatasetArtifacts load_dataset_artifacts(const Context& ctx) {
  const fs::path dir = paths::dataset_dir(ctx);
  const fs::path mpath = dir / "manifest.json";
  require_file(mpath, "dataset");
  DatasetArtifacts a;
  try {
    a.manifest = ojson::parse(read_file(mpath));
    for (const char* name : kDatasetFiles) {
      const fs::path f = dir / name;
      require_file(f, "dataset");
      const std::string want = a.manifest.at("files").at(name).get<std::string>();
      if (sha256_file(f) != want) {
        throw DataError(f.string() + ": digest mismatch with dataset manifest (file was modified or mixed "
                                     "from another run); rebuild with `trafficguard dataset`");
      }
    }
    a.train_sha = a.manifest["files"]["train.bin"].get<std::string>();
    a.test_sha = a.manifest["files"]["test.bin"].get<std::string>();
    a.train = dataset::load_dataset(dir / "train.bin");
    a.test = dataset::load_dataset(dir / "test.bin");
    a.stats = dataset::NormalizationStats::from_json(read_file(dir / "stats.json"));
    if (a.stats.digest() != a.manifest.at("stats_digest").get<std::string>()) {
      throw DataError("normalization statistics do not match the dataset manifest");
    }
    const auto cj = nlohmann::json::parse(read_file(dir / "control.json"));
    a.control.rows = cj.at("rows").get<int>();
    a.control.batch_rows = cj.at("batch_rows").get<int>();
    a.control.batches = cj.at("batches").get<int>();
    a.control.mean = cj.at("mean").get<std::vector<double>>();
    a.control.std = cj.at("std").get<std::vector<double>>();
    a.control_vehicle_means = cj.at("control_vehicle_means").get<std::vector<double>>();
    a.mode = dataset::parse_tensor_mode(a.manifest.at("mode").get<std::string>());
    a.baseline = dataset::control_baseline(a.control, a.mode);
    a.monitored = a.manifest.at("monitored_intersection").get<int>();
    for (const auto& e : a.manifest.at("attack_timeline")) {
      a.timeline.push_back({e.at("start").get<int>(), e.at("end").get<int>(), e.at("target").get<int>(),
                            simnet::parse_attack_mode(e.at("mode").get<std::string>())});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(mpath.string() + ": malformed dataset artifact: " + e.what());
  }
  return a;
}

nn::CnnModel load_checked_model(const Context& ctx, const DatasetArtifacts& ds) {
  require_file(paths::model(ctx), "train");
  nn::CnnModel model = nn::load_model(paths::model(ctx));
  if (model.dataset_digest != ds.train_sha) {
    throw DataError(paths::model(ctx).string() +
                    ": model was trained on a different dataset than the one in " +
                    paths::dataset_dir(ctx).string() + "; retrain with `trafficguard train`");
  }
  if (auto w = nn::digest_warning(model, ds.stats.digest())) throw DataError(*w);
  const std::vector<std::size_t> want = {static_cast<std::size_t>(model.input.channels),
                                         static_cast<std::size_t>(model.input.rows),
                                         static_cast<std::size_t>(model.input.cols)};
  if (ds.test.input_shape != want) throw DataError("model input shape does not match the dataset");
  return model;
}

std::vector<int> predictions(const xai::ModelFn& fn, const dataset::Dataset& data) {
  std::vector<int> out;
  out.reserve(data.size());
  for (const auto& x : data.inputs) out.push_back(fn(x) >= 0.5 ? dataset::kLabelNormal : dataset::kLabelHacked);
  return out;
}

std::vector<std::size_t> select_samples(std::string_view selector, const dataset::Dataset& test,
                                        const std::vector<int>& predicted) {
  std::vector<std::size_t> out;
  if (selector == "all" || selector == "misclassified" || selector == "normal" || selector == "hacked") {
    for (std::size_t i = 0; i < test.size(); ++i) {
      const bool keep = selector == "all" || (selector == "misclassified" && predicted[i] != test.labels[i]) ||
                        (selector == "normal" && test.labels[i] == dataset::kLabelNormal) ||
                        (selector == "hacked" && test.labels[i] == dataset::kLabelHacked);
      if (keep) out.push_back(i);
    }
    return out;
  }
  for (const auto& tok : detail::split(selector, ',')) {
    std::size_t idx = 0;
    const auto* end = tok.data() + tok.size();
    const auto [p, ec] = std::from_chars(tok.data(), end, idx);
    if (tok.empty() || ec != std::errc() || p != end) {
      throw ConfigError("unknown sample selector '" + std::string(selector) +
                        "' (expected indices, all, misclassified, normal or hacked)");
    }
    if (idx >= test.size()) {
      throw ConfigError("sample index " + std::to_string(idx) + " is out of range (test set has " +
                        std::to_string(test.size()) + " samples)");
    }
    out.push_back(idx);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

void cmd_simulate(const Context& ctx, std::ostream& log) {
  const auto& sc = ctx.config.scenario;
  if (sc.duration < simnet::kSampleInterval || sc.control_duration < simnet::kSampleInterval) {
    throw ConfigError("scenario durations must cover at least one 10 s interval");
  }
  const simnet::RecordLog run = simnet::run_scenario(sc.network, sc.attacks, sc.duration, sc.monitored);
  simnet::NetworkConfig control_net = sc.network;
  control_net.seed = config::control_seed(ctx.config.seed);
  const simnet::RecordLog control = simnet::run_scenario(control_net, {}, sc.control_duration, run.monitored_intersection);

  simnet::save_record_log(run, paths::records(ctx));
  simnet::save_record_log(control, paths::control(ctx));

  ojson tl = ojson::array();
  for (const auto& e : sc.attacks) {
    tl.push_back({{"start", e.start}, {"end", e.end}, {"target", e.target}, {"mode", simnet::attack_mode_name(e.mode)}});
  }
  const fs::path timeline = ctx.out / "timeline.json";
  write_file(timeline, ojson{{"monitored_intersection", run.monitored_intersection}, {"attacks", tl}}.dump(2) + "\n");

  std::size_t hacked = 0;
  for (const auto& r : run.records) hacked += r.label == simnet::Label::kHacked;
  const simnet::Network net(sc.network);
  log << "simulated " << sc.duration << " s on a " << sc.network.grid_rows << "x" << sc.network.grid_cols
      << " grid (seed " << ctx.config.seed << ")\n"
      << "busiest intersection: " << net.busiest() << ", monitored: " << run.monitored_intersection << "\n"
      << "records: " << run.records.size() << " (" << run.detectors_per_batch << " detectors per 10 s batch, "
      << hacked << " hacked)\n"
      << "attack intervals:";
  if (sc.attacks.empty()) log << " none";
  for (const auto& e : sc.attacks) {
    log << " [" << e.start << ", " << e.end << ") @" << e.target << " " << simnet::attack_mode_name(e.mode);
  }
  log << "\ncontrol records: " << control.records.size() << " (" << sc.control_duration << " s, attack-free)\n";
  record_command(ctx, "simulate", {},
                 {paths::records(ctx), manifest_of(paths::records(ctx)), paths::control(ctx),
                  manifest_of(paths::control(ctx)), timeline});
}

void cmd_dataset(const Context& ctx, std::ostream& log, bool export_csv) {
  require_file(paths::records(ctx), "simulate");
  require_file(paths::control(ctx), "simulate");
  const simnet::RecordLog run = simnet::load_record_log(paths::records(ctx));
  const simnet::RecordLog control = simnet::load_record_log(paths::control(ctx));
  if (run.monitored_intersection != control.monitored_intersection ||
      run.detectors_per_batch != control.detectors_per_batch) {
    throw DataError("records and control logs come from different intersections");
  }
  dataset::BuildOptions opts = ctx.config.dataset;
  opts.batch_rows = run.detectors_per_batch;
  const dataset::PreparedData prepared = dataset::prepare(run.records, control.records, opts);

  const fs::path dir = paths::dataset_dir(ctx);
  dataset::save_dataset(prepared.split.train, dir / "train.bin");
  dataset::save_dataset(prepared.split.test, dir / "test.bin");
  write_file(dir / "stats.json", prepared.stats.to_json());
  write_file(dir / "control.json", control_to_json(prepared.control, prepared.control_vehicle_means));

  ojson m;
  m["seed"] = ctx.config.seed;
  m["rows"] = opts.rows;
  m["mode"] = dataset::tensor_mode_name(opts.mode);
  m["split_ratio"] = opts.split_ratio;
  m["smote"] = opts.apply_smote;
  m["smote_k"] = opts.smote_k;
  m["batch_rows"] = opts.batch_rows;
  m["input_shape"] = prepared.split.train.input_shape;
  m["records_sha256"] = sha256_file(paths::records(ctx));
  m["control_sha256"] = sha256_file(paths::control(ctx));
  m["stats_digest"] = prepared.stats.digest();
  m["monitored_intersection"] = run.monitored_intersection;
  auto& tl = m["attack_timeline"] = ojson::array();
  for (const auto& e : run.timeline) {
    tl.push_back({{"start", e.start}, {"end", e.end}, {"target", e.target}, {"mode", simnet::attack_mode_name(e.mode)}});
  }
  m["counts"] = {{"train_normal", prepared.split.train.count(dataset::kLabelNormal)},
                 {"train_hacked", prepared.split.train.count(dataset::kLabelHacked)},
                 {"test_normal", prepared.split.test.count(dataset::kLabelNormal)},
                 {"test_hacked", prepared.split.test.count(dataset::kLabelHacked)}};
  for (const char* name : kDatasetFiles) m["files"][name] = sha256_file(dir / name);
  write_file(dir / "manifest.json", m.dump(2) + "\n");

  std::vector<fs::path> outputs = {dir / "train.bin", dir / "test.bin", dir / "stats.json",
                                   dir / "control.json", dir / "manifest.json"};
  if (export_csv) {
    write_file(dir / "train.csv", dataset::export_csv(prepared.split.train));
    write_file(dir / "test.csv", dataset::export_csv(prepared.split.test));
    outputs.push_back(dir / "train.csv");
    outputs.push_back(dir / "test.csv");
  }
  log << "dataset " << config_label(opts.rows, opts.mode, opts.batch_rows) << ": train "
      << prepared.split.train.size() << " (" << prepared.split.train.count(dataset::kLabelNormal) << " normal, "
      << prepared.split.train.count(dataset::kLabelHacked) << " hacked"
      << (opts.apply_smote ? ", after SMOTE" : "") << "), test " << prepared.split.test.size() << " ("
      << prepared.split.test.count(dataset::kLabelNormal) << " normal, "
      << prepared.split.test.count(dataset::kLabelHacked) << " hacked)\n";
  if (const auto deg = prepared.stats.degenerate_features(); !deg.empty()) {
    log << "note: " << deg.size() << " feature(s) constant in training data, normalized to 0\n";
  }
  record_command(ctx, "dataset", {paths::records(ctx), paths::control(ctx)}, outputs);
}

void cmd_train(const Context& ctx, std::ostream& log) {
  const DatasetArtifacts ds = load_dataset_artifacts(ctx);
  const auto& shape = ds.train.input_shape;
  if (shape.size() != 3) throw DataError("training set has no input shape");
  nn::CnnModel model = nn::make_model(
      {static_cast<int>(shape[0]), static_cast<int>(shape[1]), static_cast<int>(shape[2])}, ctx.config.seed);
  model.stats_digest = ds.stats.digest();
  model.dataset_digest = ds.train_sha;

  nn::TrainOptions opts;
  opts.epochs = ctx.config.train.epochs;
  opts.batch_size = ctx.config.train.batch_size;
  opts.lr = ctx.config.train.lr;
  opts.seed = ctx.config.seed;
  opts.on_epoch = [&](int epoch, double loss) {
    log << "epoch " << epoch + 1 << "/" << opts.epochs << "  loss " << std::fixed << std::setprecision(6) << loss
        << std::defaultfloat << "\n";
  };
  const nn::TrainResult result = nn::train(model, ds.train, opts);
  nn::save_model(model, paths::model(ctx));

  ojson h;
  h["seed"] = ctx.config.seed;
  h["epochs"] = opts.epochs;
  h["batch_size"] = opts.batch_size;
  h["lr"] = opts.lr;
  h["steps"] = result.steps;
  h["loss_history"] = result.loss_history;
  h["model_sha256"] = sha256_file(paths::model(ctx));
  const fs::path history = ctx.out / "train_history.json";
  write_file(history, h.dump(2) + "\n");
  log << "model: " << model.parameter_count() << " parameters, saved to " << paths::model(ctx).string() << "\n";
  record_command(ctx, "train", {paths::dataset_dir(ctx) / "train.bin", paths::dataset_dir(ctx) / "manifest.json"},
                 {paths::model(ctx), history});
}

void cmd_eval(const Context& ctx, std::ostream& log) {
  const DatasetArtifacts ds = load_dataset_artifacts(ctx);
  const nn::CnnModel model = load_checked_model(ctx, ds);
  const nn::Metrics m = nn::evaluate(model, ds.test);
  const int rows = ds.manifest.at("rows").get<int>();
  const std::string label = config_label(rows, ds.mode, ds.manifest.at("batch_rows").get<int>());

  ojson j;
  j["configuration"] = label;
  j["rows"] = rows;
  j["mode"] = dataset::tensor_mode_name(ds.mode);
  j["seed"] = ctx.config.seed;
  j["model_sha256"] = sha256_file(paths::model(ctx));
  j["test_sha256"] = ds.test_sha;
  j["metrics"] = ojson::parse(m.to_json());
  write_file(paths::metrics(ctx), j.dump(2) + "\n");
  const std::string table = nn::metrics_table({{label, m}});
  const fs::path txt = ctx.out / "metrics.txt";
  write_file(txt, table);
  log << table;
  record_command(ctx, "eval", {paths::model(ctx), paths::dataset_dir(ctx) / "test.bin"}, {paths::metrics(ctx), txt});
}

void cmd_explain(const Context& ctx, std::ostream& log, std::string_view method, std::string_view selector) {
  if (method != "occlusion" && method != "lime" && method != "shap") {
    throw ConfigError("unknown explanation method '" + std::string(method) + "' (expected occlusion, lime or shap)");
  }
  const DatasetArtifacts ds = load_dataset_artifacts(ctx);
  const nn::CnnModel model = load_checked_model(ctx, ds);
  const xai::ModelFn fn = xai::wrap(model);
  const auto predicted = predictions(fn, ds.test);
  const auto chosen = select_samples(selector, ds.test, predicted);
  const auto& xc = ctx.config.xai;

  const fs::path dir = paths::explain_dir(ctx);
  std::vector<fs::path> outputs;
  for (std::size_t idx : chosen) {
    const Tensor& x = ds.test.inputs[idx];
    const std::string stem = std::string(method) + "_" + std::to_string(idx);
    ojson sample = {{"sample_index", idx},
                    {"window_begin", ds.test.info[idx].begin},
                    {"window_end", ds.test.info[idx].end},
                    {"true_label", ds.test.labels[idx] == dataset::kLabelNormal ? "NORMAL" : "HACKED"},
                    {"predicted_label", predicted[idx] == dataset::kLabelNormal ? "NORMAL" : "HACKED"}};
    xai::Attribution a;
    if (method == "occlusion") {
      a = xai::occlusion_map(fn, x, xc.occlusion, &ds.baseline);
      write_file(dir / (stem + ".csv"), xai::heatmap_csv(a));
      outputs.push_back(dir / (stem + ".csv"));
      ojson meta = ojson::parse(xai::to_json(a, ds.test.input_shape, 10));
      meta["sample"] = sample;
      meta["patch"] = {{"h", xc.occlusion.patch_h}, {"w", xc.occlusion.patch_w}, {"stride", xc.occlusion.stride}};
      write_file(dir / (stem + ".json"), meta.dump(2) + "\n");
    } else {
      if (method == "lime") {
        a = xai::lime_explain(fn, x, xc.lime);
      } else {
        a = xai::kernel_shap(fn, x, ds.baseline, xc.shap);
      }
      ojson j = ojson::parse(xai::to_json(a, ds.test.input_shape));
      j["sample"] = sample;
      write_file(dir / (stem + ".json"), j.dump(2) + "\n");
    }
    outputs.push_back(dir / (stem + ".json"));
  }
  log << method << ": explained " << chosen.size() << " sample(s) into " << dir.string() << "\n";
  record_command(ctx, "explain", {paths::model(ctx), paths::dataset_dir(ctx) / "test.bin"}, outputs);
}

void cmd_triage(const Context& ctx, std::ostream& log) {
  const DatasetArtifacts ds = load_dataset_artifacts(ctx);
  const nn::CnnModel model = load_checked_model(ctx, ds);
  triage::CollectOptions opts;
  opts.thresholds = ctx.config.triage;
  opts.shap = ctx.config.xai.shap;
  auto cases = triage::collect_errors(xai::wrap(model), ds.test, ds.timeline, ds.baseline,
                                      ds.control_vehicle_means, opts);
  const triage::TriageReport rep = triage::report(std::move(cases), opts.thresholds);
  write_file(paths::triage(ctx), rep.to_json());
  const fs::path txt = ctx.out / "triage.txt";
  write_file(txt, rep.to_text());
  log << rep.narrative << "\n";
  record_command(ctx, "triage", {paths::model(ctx), paths::dataset_dir(ctx) / "test.bin"}, {paths::triage(ctx), txt});
}

void cmd_pca(const Context& ctx, std::ostream& log) {
  const DatasetArtifacts ds = load_dataset_artifacts(ctx);
  std::vector<double> rows;
  std::vector<int> labels;
  for (const dataset::Dataset* part : {&ds.train, &ds.test}) {
    for (std::size_t i = 0; i < part->size(); ++i) {
      if (part->info[i].synthetic) continue;
      const Tensor& x = part->inputs[i];
      const std::size_t r = x.dim(1), w = x.dim(2);
      const auto v = x.values();
      rows.insert(rows.end(), v.begin(), v.begin() + static_cast<std::ptrdiff_t>(r * w));  // data layer
      labels.insert(labels.end(), r, part->labels[i]);
    }
  }
  const std::size_t width = ds.test.input_shape.at(2);
  Tensor data({labels.size(), width});
  std::copy(rows.begin(), rows.end(), data.data());
  const xai::PcaModel pca = xai::pca_fit(data);
  const std::size_t k = xai::components_for_variance(pca, ctx.config.xai.pca_variance_target);
  const Tensor coords = xai::pca_project(pca, data, std::min<std::size_t>(2, pca.n_components()));

  std::string csv = "pc1,pc2,label\n";
  const std::size_t cols = coords.dim(1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    csv += detail::format_double(coords[i * cols]) + "," +
           detail::format_double(cols > 1 ? coords[i * cols + 1] : 0.0) + "," +
           (labels[i] == dataset::kLabelNormal ? "NORMAL" : "HACKED") + "\n";
  }
  write_file(paths::pca(ctx), csv);
  ojson j;
  j["points"] = labels.size();
  j["n_features"] = pca.n_features;
  j["explained_variance_ratio"] = pca.explained_variance_ratio;
  j["variance_target"] = ctx.config.xai.pca_variance_target;
  j["components_for_target"] = k;
  double two = 0.0;
  for (std::size_t c = 0; c < std::min<std::size_t>(2, pca.n_components()); ++c) two += pca.explained_variance_ratio[c];
  j["plot_variance_ratio"] = two;
  const fs::path meta = ctx.out / "pca.json";
  write_file(meta, j.dump(2) + "\n");
  log << "pca: " << labels.size() << " rows, " << k << " component(s) reach "
      << ctx.config.xai.pca_variance_target * 100.0 << "% variance; 2-D plot keeps " << two * 100.0 << "%\n";
  record_command(ctx, "pca", {paths::dataset_dir(ctx) / "train.bin", paths::dataset_dir(ctx) / "test.bin"},
                 {paths::pca(ctx), meta});
}

// ---------------------------------------------------------------------------

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Traffic-signal attack detection: simulate, train, explain"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  app.add_option("--config", config_path, "YAML run configuration")->required();
  app.add_option("--seed", seed, "override the configured seed");
  app.add_option("--out", out_dir, "artifact directory");

  auto* simulate = app.add_subcommand("simulate", "run the attack scenario and the control run");
  auto* dataset_cmd = app.add_subcommand("dataset", "window, split, normalize and rebalance");
  bool export_csv = false;
  dataset_cmd->add_flag("--csv", export_csv, "also export train/test CSV");
  auto* train = app.add_subcommand("train", "train the CNN");
  auto* eval = app.add_subcommand("eval", "evaluate on the test split");
  auto* explain = app.add_subcommand("explain", "attribute test samples");
  std::string method;
  std::string selector = "misclassified";
  explain->add_option("method", method, "occlusion | lime | shap")->required();
  explain->add_option("--samples", selector, "indices (comma separated) | all | misclassified | normal | hacked");
  auto* triage_cmd = app.add_subcommand("triage", "categorize misclassified windows");
  auto* pca = app.add_subcommand("pca", "2-D PCA plot data of the dataset");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    const Context ctx = make_context(config_path, seed, out_dir);
    if (simulate->parsed()) cmd_simulate(ctx, out);
    if (dataset_cmd->parsed()) cmd_dataset(ctx, out, export_csv);
    if (train->parsed()) cmd_train(ctx, out);
    if (eval->parsed()) cmd_eval(ctx, out);
    if (explain->parsed()) cmd_explain(ctx, out, method, selector);
    if (triage_cmd->parsed()) cmd_triage(ctx, out);
    if (pca->parsed()) cmd_pca(ctx, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace trafficguard::cli
