// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "trafficguard/cli.hpp"
#include "trafficguard/common.hpp"
#include "trafficguard/dataset.hpp"
#include "trafficguard/neuralnet.hpp"
#include "trafficguard/triage.hpp"
#include "trafficguard/xai.hpp"

using namespace trafficguard;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

const fs::path kSource = TRAFFICGUARD_SOURCE_DIR;
const fs::path kWork = fs::temp_directory_path() / "trafficguard_acceptance";

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  const nn::CnnModel model = nn::make_model({1, 9, 23}, 2024);
  std::mt19937_64 rng(17);
  std::vector<Tensor> xs;
  for (int i = 0; i < 4; ++i) xs.push_back(oracle::random_tensor({1, 9, 23}, rng, 0.0, 1.0));
  const std::vector<int> ys = {1, 0, 1, 0};
  const double h = 1e-5;
  const auto gc = oracle::gradient_check(model, xs, ys, h, 6000, 99);
  const double secs = seconds_since(t0);
  std::size_t checked = 0;
  for (std::size_t n : gc.checked) checked += n;
  std::ostringstream d;
  d << "central-difference max rel error " << fmt(gc.worst(), 3) << " over " << gc.checked.size()
    << " tensors (" << checked << " entries; tensors above 6000 entries sampled), " << fmt(secs, 3) << " s";
  if (!gc.over.empty()) {
    // Explain every entry above the limit.
    std::size_t kinks = 0;
    double one_sided_worst = 0.0;
    for (const auto& e : gc.over) {
      const auto k = oracle::diagnose_entry(model, xs, ys, e.tensor, e.index, h);
      if (k.crosses && k.side_found) {
        ++kinks;
        one_sided_worst = std::max(one_sided_worst, oracle::rel_error(e.analytic, k.one_sided));
      }
    }
    d << "; " << gc.over.size() << " entries above 1e-4, " << kinks
      << " of them straddle a ReLU/max-pool boundary within +-h (in-region one-sided difference agrees to "
      << fmt(one_sided_worst, 3) << ")";
  }
  return {gc.worst() < 1e-4 && secs < 60.0, d.str()};
}

Outcome shape_oracle() {
  const std::map<int, std::size_t> expect = {{9, 1280}, {18, 2560}, {36, 5760}};
  bool ok = true;
  std::ostringstream d;
  for (int C : {1, 3}) {
    for (int R : {9, 18, 36}) {
      const nn::CnnModel m = nn::make_model({C, R, 23}, 3);
      const std::size_t flat = m.flatten_dim();
      Tensor x({static_cast<std::size_t>(C), static_cast<std::size_t>(R), 23}, 0.5);
      const double p = nn::forward(m, x);
      const std::vector<Tensor> xs = {x};
      const std::vector<int> ys = {1};
      const auto g = nn::backward(m, xs, ys);
      bool finite = std::isfinite(g.loss) && p > 0.0 && p < 1.0;
      for (const auto& t : g.grads) finite = finite && t.all_finite();
      const bool good = finite && flat == expect.at(R) && g.grads.size() == 8;
      ok = ok && good;
      d << "(" << C << "," << R << ")=" << flat << (good ? "" : "!") << " ";
    }
  }
  return {ok, "flatten dims " + d.str()};
}

Outcome convolution_oracle() {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> dim(1, 9);
  double worst = 0.0;
  for (int c = 0; c < 50; ++c) {
    const std::size_t C = static_cast<std::size_t>(dim(rng) % 4 + 1), H = static_cast<std::size_t>(dim(rng) + 1),
                      W = static_cast<std::size_t>(dim(rng) + 2), F = static_cast<std::size_t>(dim(rng));
    const Tensor x = oracle::random_tensor({C, H, W}, rng);
    const Tensor w = oracle::random_tensor({F, C, 3, 3}, rng);
    const Tensor b = oracle::random_tensor({F}, rng);
    const Tensor y = nn::conv2d(x, w, b), ref = oracle::naive_conv2d(x, w, b);
    if (y.shape() != ref.shape()) return {false, "shape mismatch in case " + std::to_string(c)};
    for (std::size_t i = 0; i < y.size(); ++i) worst = std::max(worst, std::abs(y[i] - ref[i]));
  }
  return {worst <= 1e-12, "50 cases, max abs diff " + fmt(worst, 3)};
}

// ---------------------------------------------------------------------------
// Full pipeline through the command layer.

std::vector<std::string> kPipeline[] = {{"simulate"}, {"dataset"},        {"train"}, {"eval"},
                                        {"explain", "shap"}, {"triage"}, {"pca"}};

void run_pipeline(const fs::path& out) {
  fs::remove_all(out);
  const std::string config = (kSource / "configs" / "scenario.yaml").string();
  for (const auto& cmd : kPipeline) {
    std::vector<std::string> args = {"trafficguard", "--config", config, "--out", out.string()};
    args.insert(args.end(), cmd.begin(), cmd.end());
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream log, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), log, err);
    if (code != 0) throw std::runtime_error(cmd.front() + " failed (" + std::to_string(code) + "): " + err.str());
  }
}

double accuracy_with_rows(const fs::path& from, int rows) {
  cli::Context ctx = cli::make_context(kSource / "configs" / "scenario.yaml", std::nullopt, kWork / ("rows" + std::to_string(rows)));
  ctx.config.dataset.rows = rows;
  fs::remove_all(ctx.out);
  fs::create_directories(ctx.out);
  for (const char* f : {"records.csv", "records.manifest.json", "control.csv", "control.manifest.json"}) {
    fs::copy_file(from / f, ctx.out / f);
  }
  std::ostringstream log;
  cli::cmd_dataset(ctx, log);
  cli::cmd_train(ctx, log);
  cli::cmd_eval(ctx, log);
  return nlohmann::json::parse(read_file(cli::paths::metrics(ctx)))["metrics"]["accuracy"].get<double>();
}

Outcome end_to_end(double& pipeline_seconds) {
  const auto t0 = Clock::now();
  run_pipeline(kWork / "run_a");
  pipeline_seconds = seconds_since(t0);
  const auto metrics = nlohmann::json::parse(read_file(kWork / "run_a" / "metrics.json"));
  const double acc18 = metrics["metrics"]["accuracy"].get<double>();
  const double acc9 = accuracy_with_rows(kWork / "run_a", 9);
  std::ostringstream d;
  d << "R=18 accuracy " << fmt(acc18 * 100.0, 4) << "%, R=9 accuracy " << fmt(acc9 * 100.0, 4)
    << "%, pipeline " << fmt(pipeline_seconds, 3) << " s";
  return {acc18 >= 0.75 && acc18 >= acc9 && pipeline_seconds < 600.0, d.str()};
}

Outcome determinism() {
  run_pipeline(kWork / "run_b");
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(kWork / "run_a")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), kWork / "run_a");
    const fs::path other = kWork / "run_b" / rel;
    if (!fs::exists(other) || read_file(e.path()) != read_file(other)) {
      return {false, rel.string() + " differs between runs"};
    }
    ++files;
  }
  std::size_t files_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(kWork / "run_b")) files_b += e.is_regular_file();
  return {files == files_b && files > 0,
          std::to_string(files) + " artifacts byte-identical (dataset, model, metrics, explanations, triage, pca)"};
}

// ---------------------------------------------------------------------------

Outcome smote_criterion() {
  dataset::Dataset d;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 30; ++i) {
    const int label = i < 22 ? dataset::kLabelNormal : dataset::kLabelHacked;
    d.push_back(Tensor({1, 1, 3}, std::vector<double>{u(rng), u(rng), u(rng) + (label ? 0.0 : 2.0)}), label, {});
  }
  const auto out = dataset::smote(d, 5, 31);
  const bool balanced = out.count(dataset::kLabelNormal) == out.count(dataset::kLabelHacked);
  std::vector<const Tensor*> minority;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.labels[i] == dataset::kLabelHacked) minority.push_back(&d.inputs[i]);
  }
  std::size_t synthetic = 0, on_segment = 0;
  for (std::size_t s = 0; s < out.size(); ++s) {
    if (!out.info[s].synthetic) continue;
    ++synthetic;
    const Tensor& x = out.inputs[s];
    bool found = false;
    for (const Tensor* a : minority) {
      for (const Tensor* b : minority) {
        if (a == b || found) continue;
        // x = a + t (b - a) for one t in [0, 1] across all coordinates.
        double num = 0.0, den = 0.0;
        for (std::size_t e = 0; e < x.size(); ++e) {
          num += (x[e] - (*a)[e]) * ((*b)[e] - (*a)[e]);
          den += ((*b)[e] - (*a)[e]) * ((*b)[e] - (*a)[e]);
        }
        const double t = num / den;
        if (t < -1e-12 || t > 1.0 + 1e-12) continue;
        double resid = 0.0;
        for (std::size_t e = 0; e < x.size(); ++e) resid = std::max(resid, std::abs((*a)[e] + t * ((*b)[e] - (*a)[e]) - x[e]));
        found = resid < 1e-12;
      }
    }
    on_segment += found;
  }
  std::ostringstream d2;
  d2 << "counts " << out.count(dataset::kLabelNormal) << "/" << out.count(dataset::kLabelHacked) << ", "
     << on_segment << "/" << synthetic << " synthetic samples on minority segments";
  return {balanced && synthetic == 14 && on_segment == synthetic, d2.str()};
}

Outcome shap_criterion() {
  // Additive model over 4 columns.
  const std::vector<double> w = {0.4, -0.25, 0.1, 0.3};
  const xai::ModelFn additive = [&](const Tensor& t) {
    double s = 0.05;
    for (std::size_t r = 0; r < t.dim(1); ++r) {
      for (std::size_t j = 0; j < 4; ++j) s += w[j] * t.at(0, r, j);
    }
    return s;
  };
  const Tensor x({1, 2, 4}, std::vector<double>{0.9, 0.2, 0.5, 0.7, 0.3, 0.8, 0.1, 0.6});
  const Tensor base({1, 2, 4}, 0.1);
  const auto masked_value = [&](const xai::ModelFn& f, unsigned mask) {
    Tensor m = base;
    for (std::size_t r = 0; r < 2; ++r) {
      for (std::size_t j = 0; j < 4; ++j) {
        if (mask & (1u << j)) m.at(0, r, j) = x.at(0, r, j);
      }
    }
    return f(m);
  };
  const auto exact = xai::kernel_shap(additive, x, base, {});
  const auto bf = oracle::brute_force_shapley([&](unsigned s) { return masked_value(additive, s); }, 4);
  double err = 0.0;
  for (std::size_t j = 0; j < 4; ++j) err = std::max(err, std::abs(exact.scores[j] - bf[j]));
  const double eff_exact =
      std::abs(std::accumulate(exact.scores.begin(), exact.scores.end(), 0.0) + exact.base_value - additive(x));

  // Sampled: 23 columns with interactions.
  std::mt19937_64 rng(4);
  const Tensor x23 = oracle::random_tensor({1, 3, 23}, rng, 0.0, 1.0);
  const Tensor b23({1, 3, 23}, 0.2);
  const xai::ModelFn inter = [](const Tensor& t) {
    double s = 0.0;
    for (std::size_t j = 0; j < 23; ++j) s += std::sin(static_cast<double>(j)) * t.at(0, 1, j);
    return 1.0 / (1.0 + std::exp(-(s + 2.0 * t.at(0, 0, 3) * t.at(0, 2, 7))));
  };
  xai::ShapOptions sopt;
  sopt.n_coalitions = 2048;
  sopt.seed = 12;
  const auto sampled = xai::kernel_shap(inter, x23, b23, sopt);
  const double eff_sampled =
      std::abs(std::accumulate(sampled.scores.begin(), sampled.scores.end(), 0.0) + sampled.base_value - inter(x23));

  // Dummy (column 2) and symmetry (columns 0 and 1).
  const xai::ModelFn sym = [](const Tensor& t) {
    const double a = t.at(0, 0, 0), b = t.at(0, 0, 1), d = t.at(0, 0, 3);
    return 0.5 * a * b + 0.2 * (a + b) + 0.3 * d * d;
  };
  const Tensor xs({1, 1, 4}, std::vector<double>{0.8, 0.8, 0.4, 0.6});
  const Tensor bs({1, 1, 4}, std::vector<double>{0.1, 0.1, 0.0, 0.2});
  const auto ds = xai::kernel_shap(sym, xs, bs, {});
  const double dummy = std::abs(ds.scores[2]);
  const double symmetry = std::abs(ds.scores[0] - ds.scores[1]);

  std::ostringstream d;
  d << "exact vs brute force " << fmt(err, 3) << ", efficiency exact " << fmt(eff_exact, 3) << " / sampled "
    << fmt(eff_sampled, 3) << ", dummy " << fmt(dummy, 3) << ", symmetry " << fmt(symmetry, 3);
  return {exact.meta.exact && !sampled.meta.exact && err <= 1e-6 && eff_exact <= 1e-6 && eff_sampled <= 1e-3 &&
              dummy <= 1e-6 && symmetry <= 1e-6,
          d.str()};
}

Outcome lime_criterion() {
  const std::size_t R = 4, W = 23, M = R * W;
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.2, 1.0), small(-0.04, 0.04);
  Tensor x({1, R, W});
  std::vector<double> w(M);
  for (std::size_t k = 0; k < M; ++k) {
    x[k] = u(rng);
    w[k] = small(rng);
  }
  const std::vector<std::size_t> strong = {5, 17, 40, 63, 88};
  const std::vector<double> strong_w = {1.5, -1.25, 1.0, -0.75, 0.5};
  for (std::size_t i = 0; i < strong.size(); ++i) {
    w[strong[i]] = strong_w[i];
    x[strong[i]] = 0.8;
  }
  const Tensor base({1, R, W}, 0.1);
  const xai::ModelFn logistic = [&](const Tensor& t) {
    double z = -1.0;
    for (std::size_t k = 0; k < M; ++k) z += w[k] * t[k];
    return 1.0 / (1.0 + std::exp(-z));
  };
  xai::LimeOptions opt;
  opt.n_samples = 1000;
  opt.seed = 77;
  opt.top_k = 5;
  const auto a = xai::lime_explain(logistic, x, opt, &base);
  const auto b = xai::lime_explain(logistic, x, opt, &base);

  std::vector<std::size_t> truth(M);
  std::iota(truth.begin(), truth.end(), 0);
  std::stable_sort(truth.begin(), truth.end(), [&](std::size_t i, std::size_t j) {
    return std::abs(w[i] * (x[i] - base[i])) > std::abs(w[j] * (x[j] - base[j]));
  });
  truth.resize(5);
  const bool ranking = a.top == truth;
  const bool deterministic = a.scores == b.scores && a.top == b.top;
  std::ostringstream d;
  d << "top-5 ranking " << (ranking ? "matches" : "differs") << ", weighted R^2 " << fmt(a.meta.r2, 4) << ", "
    << (deterministic ? "deterministic" : "not deterministic") << " under seed 77";
  return {ranking && a.meta.r2 >= 0.8 && deterministic, d.str()};
}

Outcome occlusion_criterion() {
  const nn::CnnModel model = nn::make_model({1, 18, 23}, 8);
  const std::size_t ignored = 11;
  const xai::ModelFn blind = [&](const Tensor& t) {
    Tensor c = t;
    for (std::size_t i = 0; i < 18; ++i) c.at(0, i, ignored) = 0.0;
    return nn::forward(model, c);
  };
  std::mt19937_64 rng(2);
  const Tensor x = oracle::random_tensor({1, 18, 23}, rng, 0.0, 1.0);
  const auto a = xai::occlusion_map(blind, x, {});
  bool column_zero = true, in_range = true;
  double column_max = 0.0;
  for (std::size_t i = 0; i < 18; ++i) {
    for (std::size_t j = 0; j < 23; ++j) {
      const double s = a.scores[i * 23 + j];
      in_range = in_range && s >= 0.0 && s <= 1.0;
      if (j == ignored) {
        column_zero = column_zero && s == 0.0;
        column_max = std::max(column_max, s);
      }
    }
  }
  const double overall = *std::max_element(a.scores.begin(), a.scores.end());
  std::ostringstream d;
  d << "ignored column max score " << column_max << ", overall max " << fmt(overall, 3) << ", all scores in [0,1]: "
    << (in_range ? "yes" : "no");
  return {column_zero && in_range && overall > 0.0, d.str()};
}

Outcome pca_criterion() {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g(0.0, 1.0);
  const std::size_t N = 300, F = 23;
  std::vector<double> u1(F), u2(F);
  for (std::size_t f = 0; f < F; ++f) {
    u1[f] = g(rng);
    u2[f] = g(rng);
  }
  Tensor data({N, F});
  for (std::size_t r = 0; r < N; ++r) {
    const double a = 3.0 * g(rng), b = 1.0 * g(rng);
    for (std::size_t f = 0; f < F; ++f) data[r * F + f] = 0.5 + a * u1[f] + b * u2[f];
  }
  const auto m = xai::pca_fit(data);
  const double two = m.explained_variance_ratio[0] + m.explained_variance_ratio[1];
  double ortho = 0.0;
  for (std::size_t a = 0; a < m.n_components(); ++a) {
    for (std::size_t b = 0; b < m.n_components(); ++b) {
      double dot = 0.0;
      for (std::size_t f = 0; f < F; ++f) dot += m.component(a, f) * m.component(b, f);
      ortho = std::max(ortho, std::abs(dot - (a == b ? 1.0 : 0.0)));
    }
  }
  // Minimal k by scan against the selector for a range of targets.
  bool minimal = true;
  for (double target : {0.1, 0.5, 0.7, 0.85, 0.95, 0.999}) {
    double cum = 0.0;
    std::size_t k = 0;
    while (cum < target && k < m.n_components()) cum += m.explained_variance_ratio[k++];
    minimal = minimal && xai::components_for_variance(m, target) == k;
  }
  std::ostringstream d;
  d << "2 components explain " << fmt(two * 100.0, 6) << "%, orthonormality error " << fmt(ortho, 3)
    << ", minimal-k selection " << (minimal ? "correct" : "wrong");
  return {two >= 0.999 && ortho <= 1e-8 && minimal, d.str()};
}

Outcome triage_criterion() {
  // Attack on [1800, 3600); windows of 20 s. A detector model that flags
  // high jam levels (column 22) as hacked.
  const int T = 3600;
  const std::vector<simnet::AttackEvent> timeline = {{1800, T, 4, simnet::AttackMode::kRandomEachUpdate}};
  const xai::ModelFn model = [](const Tensor& t) {
    double jam = 0.0;
    for (std::size_t i = 0; i < t.dim(1); ++i) jam += t.at(0, i, 22);
    return 1.0 / (1.0 + std::exp(8.0 * (jam / static_cast<double>(t.dim(1)) - 0.5)));
  };
  dataset::Dataset test;
  auto window = [&](int begin, int label, double jam, double vehicles) {
    Tensor x({1, 2, 23}, 0.3);
    for (std::size_t i = 0; i < 2; ++i) x.at(0, i, 22) = jam;
    test.push_back(std::move(x), label, {begin, begin + 20, vehicles, false});
  };
  std::vector<triage::Category> expected;
  // Heavy attack traffic: detected.
  for (int b = 1800; b < 2400; b += 20) window(b, dataset::kLabelHacked, 0.9, 12.0);
  // Low-volume attack segment: no congestion signature, missed.
  for (int b = 2400; b < 3000; b += 20) {
    window(b, dataset::kLabelHacked, 0.1, 1.5);
    expected.push_back(triage::Category::kModelLimitation);
  }
  for (int b = 3000; b < T; b += 20) window(b, dataset::kLabelHacked, 0.9, 12.0);
  // Recovery: labeled normal in (T, T+120] while queues drain.
  for (int b = T + 20; b <= T + 120; b += 20) {
    window(b, dataset::kLabelNormal, 0.8, 12.0);
    expected.push_back(triage::Category::kTransitionalData);
  }
  for (int b = T + 140; b < 5400; b += 20) window(b, dataset::kLabelNormal, 0.2, 8.0);
  const std::vector<double> control_levels = {4.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0};
  triage::CollectOptions opts;
  opts.shap.n_coalitions = 256;
  const auto cases = triage::collect_errors(model, test, timeline, Tensor({1, 2, 23}, 0.3), control_levels, opts);
  const auto rep = triage::report(cases);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < rep.cases.size() && i < expected.size(); ++i) correct += rep.cases[i].category == expected[i];
  std::ostringstream d;
  d << correct << "/" << expected.size() << " constructed cases categorized as expected ("
    << rep.count(triage::Category::kTransitionalData) << " TRANSITIONAL_DATA, "
    << rep.count(triage::Category::kModelLimitation) << " MODEL_LIMITATION, "
    << rep.count(triage::Category::kUncategorized) << " UNCATEGORIZED)";
  return {rep.cases.size() == expected.size() && correct == expected.size(), d.str()};
}

}  // namespace

int main() {
  fs::create_directories(kWork);
  double pipeline_seconds = 0.0;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradient_correctness},
      {"shape oracle", shape_oracle},
      {"convolution oracle", convolution_oracle},
      {"end-to-end experiment", [&] { return end_to_end(pipeline_seconds); }},
      {"SMOTE", smote_criterion},
      {"KernelSHAP", shap_criterion},
      {"LIME", lime_criterion},
      {"occlusion", occlusion_criterion},
      {"PCA", pca_criterion},
      {"triage", triage_criterion},
      {"determinism", determinism},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size()
            << " criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
