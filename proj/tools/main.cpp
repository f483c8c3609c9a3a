#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <new>
#include <numeric>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "diffrank/losses.hpp"
#include "diffrank/oracle.hpp"
#include "diffrank/random.hpp"
#include "diffrank/ranking.hpp"
#include "diffrank/synth.hpp"
#include "diffrank/verification.hpp"
#include "output.hpp"

namespace {

using diffrank::tools::Output;
using diffrank::tools::OutputFormat;
using diffrank::tools::parse_format;
using nlohmann::json;

constexpr int kExitSuccess = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct CommonOptions {
  std::uint64_t seed = 0;
  std::string out;
  std::string format = "csv";
  std::string config_path;
};

// Bad flags or a bad config file; mapped to the usage exit code.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void add_common_options(CLI::App* cmd, CommonOptions* common) {
  cmd->add_option("--seed", common->seed, "Random seed");
  cmd->add_option("--out", common->out,
                  "Output file (stdout when omitted)");
  cmd->add_option("--format", common->format, "Output format")
      ->check(CLI::IsMember({"csv", "json"}));
  cmd->add_option("--config", common->config_path,
                  "Config file with one key = value per line, # comments; "
                  "flags override file values");
}

std::string trim(std::string s) {
  const auto from = s.find_first_not_of(" \t\r");
  const auto to = s.find_last_not_of(" \t\r");
  if (from == std::string::npos) return {};
  return s.substr(from, to - from + 1);
}

// Applies `key = value` lines to the options a subcommand did not already
// receive on the command line. Unknown keys are rejected.
void apply_config_file(CLI::App* cmd, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto where = path + ":" + std::to_string(lineno);
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw UsageError(where + ": empty key");
    CLI::Option* option = cmd->get_option_no_throw("--" + key);
    if (option == nullptr)
      throw UsageError(where + ": unknown config key '" + key + "'");
    if (option->count() > 0) continue;  // command-line value wins
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    std::size_t added = 0;
    std::size_t pos = 0;
    while (pos < value.size()) {
      const auto next = value.find_first_of(" \t", pos);
      const std::string token = value.substr(
          pos, next == std::string::npos ? std::string::npos : next - pos);
      if (!token.empty()) {
        option->add_result(token);
        ++added;
      }
      if (next == std::string::npos) break;
      pos = next + 1;
    }
    if (added == 0) option->add_result("true");  // bare flag
    try {
      option->run_callback();
    } catch (const CLI::Error& e) {
      throw UsageError(where + ": " + e.what());
    }
  }
}

std::string format_double(double v) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.12g", v);
  return buffer;
}

// ---------------------------------------------------------------- verify --

struct VerifyOptions {
  CommonOptions common;
  std::vector<std::string> suites;
  int trials = 0;
};

int run_verify(const VerifyOptions& opt) {
  std::vector<std::string> names =
      opt.suites.empty() ? diffrank::verify::suite_names() : opt.suites;
  std::vector<diffrank::verify::SuiteResult> results;
  bool all_passed = true;
  for (const auto& name : names) {
    const auto result =
        diffrank::verify::run_suite(name, opt.common.seed, opt.trials);
    all_passed = all_passed && result.passed();
    std::printf("%s %-20s trials=%-6d failures=%-4d max_err=%.3e (%.2fs)\n",
                result.passed() ? "PASS" : "FAIL", result.name.c_str(),
                result.trials, result.failures, result.max_error,
                result.elapsed_seconds);
    results.push_back(result);
  }
  if (!opt.common.out.empty()) {
    if (parse_format(opt.common.format) == OutputFormat::Json) {
      json doc = json::array();
      for (const auto& r : results)
        doc.push_back({{"suite", r.name},
                       {"trials", r.trials},
                       {"failures", r.failures},
                       {"max_error", r.max_error},
                       {"elapsed_seconds", r.elapsed_seconds},
                       {"status", r.passed() ? "pass" : "fail"}});
      diffrank::tools::write_json(opt.common.out, doc);
    } else {
      Output out(opt.common.out);
      out.stream() << "suite,trials,failures,max_error,status\n";
      for (const auto& r : results)
        out.stream() << r.name << ',' << r.trials << ',' << r.failures << ','
                     << format_double(r.max_error) << ','
                     << (r.passed() ? "pass" : "fail") << '\n';
    }
  }
  return all_passed ? kExitSuccess : kExitFailure;
}

// ----------------------------------------------------------------- bench --

struct BenchOptions {
  CommonOptions common;
  std::vector<std::size_t> lengths{100000, 1000000, 10000000, 100000000};
  int repeats = 5;
  double positives_fraction = 0.01;
  double alpha = 0.05;
  double lambda = 1.0;
  bool no_margin = false;
};

struct BenchRow {
  std::size_t length;
  double median_ms, p10_ms, p90_ms;
};

double quantile(std::vector<double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

int run_bench(const BenchOptions& opt) {
  const diffrank::MarginConfig margin{opt.no_margin ? 0.0 : opt.alpha};
  const diffrank::LambdaConfig lambda{opt.lambda};
  std::vector<BenchRow> rows;
  for (const std::size_t length : opt.lengths) {
    if (length == 0) continue;
    try {
      diffrank::Rng rng(opt.common.seed ^ length);
      std::vector<double> scores(length);
      for (auto& s : scores) s = rng.next_uniform(0.0, 1.0);
      std::vector<std::uint8_t> labels(length, 0);
      const auto positives = std::max<std::size_t>(
          1, static_cast<std::size_t>(opt.positives_fraction *
                                      static_cast<double>(length)));
      for (std::size_t k = 0; k < positives; ++k)
        labels[rng.next_below(length)] = 1;
      if (std::find(labels.begin(), labels.end(), 1) == labels.end())
        labels[0] = 1;

      std::vector<double> times_ms;
      for (int r = 0; r < std::max(1, opt.repeats); ++r) {
        const auto start = std::chrono::steady_clock::now();
        const auto result = diffrank::ap_loss(scores, labels, margin, lambda);
        const auto elapsed = std::chrono::duration<double, std::milli>(
                                 std::chrono::steady_clock::now() - start)
                                 .count();
        if (result.grad.size() != length)
          throw std::runtime_error("bench: unexpected gradient size");
        times_ms.push_back(elapsed);
      }
      std::sort(times_ms.begin(), times_ms.end());
      rows.push_back(BenchRow{length, quantile(times_ms, 0.5),
                              quantile(times_ms, 0.1), quantile(times_ms, 0.9)});
      std::printf("length=%zu median=%.2fms p10=%.2fms p90=%.2fms\n", length,
                  rows.back().median_ms, rows.back().p10_ms,
                  rows.back().p90_ms);
    } catch (const std::bad_alloc&) {
      std::fprintf(stderr, "length=%zu skipped: out of memory\n", length);
    }
  }
  if (parse_format(opt.common.format) == OutputFormat::Json) {
    json doc = json::array();
    for (const auto& r : rows)
      doc.push_back({{"length", r.length},
                     {"median_ms", r.median_ms},
                     {"p10_ms", r.p10_ms},
                     {"p90_ms", r.p90_ms}});
    if (!opt.common.out.empty()) diffrank::tools::write_json(opt.common.out, doc);
  } else if (!opt.common.out.empty()) {
    Output out(opt.common.out);
    out.stream() << "length,median_ms,p10_ms,p90_ms\n";
    for (const auto& r : rows)
      out.stream() << r.length << ',' << format_double(r.median_ms) << ','
                   << format_double(r.p10_ms) << ',' << format_double(r.p90_ms)
                   << '\n';
  }
  return kExitSuccess;
}

// ------------------------------------------------------------- landscape --

struct LandscapeOptions {
  CommonOptions common;
  std::size_t dims = 20;
  std::vector<double> lambdas{0.2, 0.5, 1.0, 2.0};
  std::size_t grid = 61;
  double extent = 3.0;
};

std::string landscape_path(const std::string& base, double lambda,
                           OutputFormat format) {
  std::string stem = base.empty() ? std::string("landscape") : base;
  std::string ext = format == OutputFormat::Json ? ".json" : ".csv";
  const auto dot = stem.rfind('.');
  if (dot != std::string::npos && dot > stem.rfind('/') + 1) {
    ext = stem.substr(dot);
    stem = stem.substr(0, dot);
  }
  char suffix[32];
  std::snprintf(suffix, sizeof(suffix), "_lambda%g", lambda);
  return stem + suffix + ext;
}

int run_landscape(const LandscapeOptions& opt) {
  if (opt.dims < 2 || opt.grid < 2)
    throw CLI::ValidationError("landscape", "dims and grid must be >= 2");
  diffrank::Rng rng(opt.common.seed);
  std::vector<double> base(opt.dims), loss_coeff(opt.dims);
  for (auto& v : base) v = rng.next_gaussian();
  for (auto& v : loss_coeff) v = rng.next_gaussian();
  // Random orthonormal section plane.
  std::vector<double> u(opt.dims), v(opt.dims);
  for (auto& x : u) x = rng.next_gaussian();
  for (auto& x : v) x = rng.next_gaussian();
  const auto normalize = [](std::vector<double>& w) {
    double n = 0.0;
    for (double x : w) n += x * x;
    n = std::sqrt(n);
    for (double& x : w) x /= n;
  };
  normalize(u);
  double proj = 0.0;
  for (std::size_t i = 0; i < opt.dims; ++i) proj += u[i] * v[i];
  for (std::size_t i = 0; i < opt.dims; ++i) v[i] -= proj * u[i];
  normalize(v);

  const OutputFormat format = parse_format(opt.common.format);
  std::vector<double> point(opt.dims);
  for (const double lambda : opt.lambdas) {
    const std::string path = landscape_path(opt.common.out, lambda, format);
    json cells = json::array();
    Output* csv = nullptr;
    Output csv_out(format == OutputFormat::Csv ? path : std::string{});
    if (format == OutputFormat::Csv) {
      csv = &csv_out;
      csv->stream() << "u,v,true_loss,surrogate_loss\n";
    }
    for (std::size_t row = 0; row < opt.grid; ++row) {
      const double s =
          -opt.extent + 2.0 * opt.extent * static_cast<double>(row) /
                            static_cast<double>(opt.grid - 1);
      for (std::size_t col = 0; col < opt.grid; ++col) {
        const double t =
            -opt.extent + 2.0 * opt.extent * static_cast<double>(col) /
                              static_cast<double>(opt.grid - 1);
        for (std::size_t i = 0; i < opt.dims; ++i)
          point[i] = base[i] + s * u[i] + t * v[i];
        const auto ranks = diffrank::rank(point);
        double true_loss = 0.0;
        for (std::size_t i = 0; i < opt.dims; ++i)
          true_loss += loss_coeff[i] * ranks[i];
        const double surrogate = diffrank::surrogate_value(
            point, loss_coeff, diffrank::LambdaConfig{lambda});
        if (format == OutputFormat::Csv)
          csv->stream() << format_double(s) << ',' << format_double(t) << ','
                        << format_double(true_loss) << ','
                        << format_double(surrogate) << '\n';
        else
          cells.push_back({{"u", s},
                           {"v", t},
                           {"true_loss", true_loss},
                           {"surrogate_loss", surrogate}});
      }
    }
    if (format == OutputFormat::Json)
      diffrank::tools::write_json(path, {{"lambda", lambda}, {"cells", cells}});
    std::printf("lambda=%g -> %s\n", lambda, path.c_str());
  }
  return kExitSuccess;
}

// ------------------------------------------------------------------ bias --

struct BiasOptions {
  CommonOptions common;
  std::size_t items = 1000;
  std::size_t classes = 10;
  double separation = 1.2;
  std::vector<std::size_t> batch_sizes{8, 16, 32, 64, 128, 256, 512, 1000};
  int trials = 200;
};

int run_bias(const BiasOptions& opt) {
  const auto [scores, labels] = diffrank::oracle::make_bias_dataset(
      opt.items, opt.classes, opt.separation, opt.common.seed);
  const auto curve = diffrank::oracle::batch_bias_experiment(
      scores, labels, opt.batch_sizes, opt.trials, opt.common.seed);
  std::printf("dataset mAP = %.6f\n", curve.dataset_map);
  for (std::size_t i = 0; i < curve.batch_sizes.size(); ++i)
    std::printf("batch=%-5zu mean mAP=%.6f std=%.6f\n", curve.batch_sizes[i],
                curve.mean_map[i], curve.std_map[i]);
  if (parse_format(opt.common.format) == OutputFormat::Json) {
    json rows = json::array();
    for (std::size_t i = 0; i < curve.batch_sizes.size(); ++i)
      rows.push_back({{"batch_size", curve.batch_sizes[i]},
                      {"mean_map", curve.mean_map[i]},
                      {"std_map", curve.std_map[i]}});
    if (!opt.common.out.empty())
      diffrank::tools::write_json(opt.common.out,
                                  {{"dataset_map", curve.dataset_map},
                                   {"curve", rows}});
  } else if (!opt.common.out.empty()) {
    Output out(opt.common.out);
    out.stream() << "# dataset_map," << format_double(curve.dataset_map)
                 << '\n';
    out.stream() << "batch_size,mean_map,std_map\n";
    for (std::size_t i = 0; i < curve.batch_sizes.size(); ++i)
      out.stream() << curve.batch_sizes[i] << ','
                   << format_double(curve.mean_map[i]) << ','
                   << format_double(curve.std_map[i]) << '\n';
  }
  return kExitSuccess;
}

// ----------------------------------------------------------------- train --

struct TrainOptions {
  CommonOptions common;
  diffrank::synth::DatasetParams dataset;
  diffrank::synth::TrainConfig config;
  std::string loss = "recall-log";
};

diffrank::synth::LossKind parse_loss(const std::string& name) {
  using diffrank::synth::LossKind;
  if (name == "recall-log") return LossKind::RecallLog;
  if (name == "recall-loglog") return LossKind::RecallLogLog;
  if (name == "ap") return LossKind::Ap;
  if (name == "map-apc") return LossKind::MapPlusApc;
  throw std::invalid_argument("unknown loss kind: " + name);
}

int run_train(TrainOptions& opt) {
  opt.dataset.seed = opt.common.seed;
  opt.config.seed = opt.common.seed;
  opt.config.loss = parse_loss(opt.loss);
  const auto data = diffrank::synth::generate(opt.dataset);
  const auto result = diffrank::synth::train(opt.config, data);
  const auto& last = result.history.back();
  std::printf("final: step=%zu loss=%.6f R@1=%.4f R@4=%.4f mAP=%.4f\n",
              last.step, last.loss, last.r_at_1, last.r_at_4, last.map);
  std::printf("best:  step=%zu R@1=%.4f\n", result.best.step,
              result.best.r_at_1);
  if (parse_format(opt.common.format) == OutputFormat::Json) {
    json rows = json::array();
    for (const auto& row : result.history)
      rows.push_back({{"step", row.step},
                      {"loss", row.loss},
                      {"r_at_1", row.r_at_1},
                      {"r_at_4", row.r_at_4},
                      {"map", row.map}});
    if (!opt.common.out.empty())
      diffrank::tools::write_json(opt.common.out, rows);
  } else if (!opt.common.out.empty()) {
    Output out(opt.common.out);
    out.stream() << "step,loss,r_at_1,r_at_4,map\n";
    for (const auto& row : result.history)
      out.stream() << row.step << ',' << format_double(row.loss) << ','
                   << format_double(row.r_at_1) << ','
                   << format_double(row.r_at_4) << ','
                   << format_double(row.map) << '\n';
  }
  return kExitSuccess;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Blackbox-differentiable ranking: rank-based losses, oracles, "
      "benchmarks, and a synthetic training harness"};
  app.require_subcommand(1);

  VerifyOptions verify_opt;
  auto* verify = app.add_subcommand(
      "verify", "Run the brute-force and finite-difference oracle suites");
  add_common_options(verify, &verify_opt.common);
  verify->add_option("--suite", verify_opt.suites,
                     "Suite filter (repeatable; default all)")
      ->check(CLI::IsMember(diffrank::verify::suite_names()));
  verify->add_option("--trials", verify_opt.trials,
                     "Trials per suite (default 1000)");

  BenchOptions bench_opt;
  auto* bench = app.add_subcommand(
      "bench", "Time forward+backward AP loss over synthetic scores");
  add_common_options(bench, &bench_opt.common);
  bench->add_option("--lengths", bench_opt.lengths, "Sequence lengths");
  bench->add_option("--repeats", bench_opt.repeats, "Timed repeats per length");
  bench->add_option("--positives-fraction", bench_opt.positives_fraction,
                    "Fraction of relevant items")
      ->check(CLI::Range(0.0, 1.0));
  bench->add_option("--alpha", bench_opt.alpha, "Margin width");
  bench->add_option("--lambda", bench_opt.lambda, "Interpolation strength");
  bench->add_flag("--no-margin", bench_opt.no_margin,
                  "Time the unshifted (alpha = 0) variant instead");

  LandscapeOptions landscape_opt;
  auto* landscape = app.add_subcommand(
      "landscape",
      "Sample a 2D section of the piecewise-constant rank loss and its "
      "interpolation, one file per lambda");
  add_common_options(landscape, &landscape_opt.common);
  landscape->add_option("--dims", landscape_opt.dims, "Score dimensions");
  landscape->add_option("--lambdas", landscape_opt.lambdas,
                        "Interpolation strengths");
  landscape->add_option("--grid", landscape_opt.grid, "Grid points per axis");
  landscape->add_option("--extent", landscape_opt.extent,
                        "Section half-width");

  BiasOptions bias_opt;
  auto* bias = app.add_subcommand(
      "bias", "Mini-batch mAP bias experiment on a synthetic dataset");
  add_common_options(bias, &bias_opt.common);
  bias->add_option("--items", bias_opt.items, "Dataset size");
  bias->add_option("--classes", bias_opt.classes, "Number of classes");
  bias->add_option("--separation", bias_opt.separation,
                   "Score boost on the true class");
  bias->add_option("--batch-sizes", bias_opt.batch_sizes, "Batch sizes");
  bias->add_option("--trials", bias_opt.trials, "Sampled batches per size");

  TrainOptions train_opt;
  auto* train = app.add_subcommand(
      "train", "Train the linear embedding harness on synthetic clusters");
  add_common_options(train, &train_opt.common);
  train->add_option("--classes", train_opt.dataset.num_classes, "Classes");
  train->add_option("--per-class", train_opt.dataset.per_class,
                    "Items per class");
  train->add_option("--input-dim", train_opt.dataset.input_dim,
                    "Input dimension");
  train->add_option("--spread", train_opt.dataset.cluster_spread,
                    "Cluster noise scale");
  train->add_option("--loss", train_opt.loss, "Loss kind")
      ->check(CLI::IsMember({"recall-log", "recall-loglog", "ap", "map-apc"}));
  train->add_option("--alpha", train_opt.config.alpha, "Margin width");
  train->add_option("--lambda", train_opt.config.lambda,
                    "Interpolation strength");
  train->add_option("--tau", train_opt.config.memory_batches,
                    "Score-memory batches");
  train->add_option("--batch-size", train_opt.config.batch_size, "Batch size");
  train->add_option("--samples-per-class", train_opt.config.samples_per_class,
                    "Items sampled per class in a batch");
  train->add_option("--embed-dim", train_opt.config.embed_dim,
                    "Embedding dimension");
  train->add_option("--steps", train_opt.config.steps, "Training steps");
  train->add_option("--eval-every", train_opt.config.eval_every,
                    "Evaluation cadence");
  train->add_option("--lr", train_opt.config.adam.learning_rate,
                    "Adam learning rate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  const struct {
    CLI::App* cmd;
    CommonOptions* common;
  } commands[] = {{verify, &verify_opt.common},
                  {bench, &bench_opt.common},
                  {landscape, &landscape_opt.common},
                  {bias, &bias_opt.common},
                  {train, &train_opt.common}};
  try {
    for (const auto& entry : commands)
      if (entry.cmd->parsed() && !entry.common->config_path.empty())
        apply_config_file(entry.cmd, entry.common->config_path);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }

  try {
    if (verify->parsed()) return run_verify(verify_opt);
    if (bench->parsed()) return run_bench(bench_opt);
    if (landscape->parsed()) return run_landscape(landscape_opt);
    if (bias->parsed()) return run_bias(bias_opt);
    if (train->parsed()) return run_train(train_opt);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitUsage;
}
