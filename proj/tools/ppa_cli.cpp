// Command-line front end: data generation, training, τ sweeps, theory
// certificates and minority-identification reports.
//
// Exit codes: 0 success, 1 invalid input, 2 runtime failure or divergence,
// 3 a verification check failed.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ppa/certify.hpp"
#include "ppa/dataset.hpp"
#include "ppa/error.hpp"
#include "ppa/eval.hpp"
#include "ppa/pipeline.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitVerification = 3;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ppa::Error("cannot write " + path.string());
  out << text;
  if (!out) throw ppa::Error("write failed for " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string file_digest(const fs::path& path) {
  const auto bytes = ppa::detail::read_file(path);
  return ppa::hex64(ppa::fnv1a(std::string_view(bytes.data(), bytes.size())));
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ppa::ValidationError("tau grid entry '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw ppa::ValidationError("tau grid is empty");
  for (double t : out)
    if (!(t >= 0.0)) throw ppa::ValidationError("tau grid entries must be >= 0");
  return out;
}

std::size_t worker_count(std::size_t jobs) {
  std::size_t n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("PPA_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v < 1) throw std::invalid_argument(env);
      n = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw ppa::ValidationError(std::string("PPA_THREADS must be a positive integer, got '") + env + "'");
    }
  }
  return std::min(n, jobs);
}

// ---------------------------------------------------------------------------
// Shared run flags

struct RunFlags {
  std::string features;
  std::string proxies;
  std::string method = "ppa";
  double tau = 1.0;
  std::string tau_grid = "0.8,0.9,1.0,1.1,1.2";
  std::uint64_t seed = 0;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<std::size_t> batch;
  std::string normalize = "auto";
  double noise = 0.0;
  double lambda = 50.0;
  std::string recipe = "auto";
  std::string out = "runs";
};

void add_data_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--features", f.features, "Feature container (.ppaf)")->required();
  cmd->add_option("--proxies", f.proxies, "Class-proxy container (.ppaz)")->required();
  cmd->add_option("--seed", f.seed, "Training seed");
  cmd->add_option("--epochs", f.epochs, "Epochs per training stage");
  cmd->add_option("--lr", f.lr, "Peak learning rate");
  cmd->add_option("--batch", f.batch, "Mini-batch size");
  cmd->add_option("--normalize", f.normalize, "L2-normalize features")->check(CLI::IsMember({"on", "off", "auto"}));
  cmd->add_option("--recipe", f.recipe, "Base hyper-parameters")->check(CLI::IsMember({"auto", "embedding", "synthetic"}));
  cmd->add_option("--out", f.out, "Output root; each run gets a subdirectory named by its config hash");
}

struct LoadedData {
  ppa::FeatureDataset dataset;
  ppa::ClassProxyMatrix proxies;
  std::optional<ppa::DatasetMeta> meta;
};

LoadedData load_inputs(const RunFlags& f) {
  LoadedData d{ppa::load(f.features), ppa::load_proxies(f.proxies), ppa::load_meta(f.features)};
  ppa::check_compatible(d.dataset, d.proxies);
  return d;
}

ppa::PipelineOptions resolve_options(const RunFlags& f, const LoadedData& d) {
  std::string recipe = f.recipe;
  if (recipe == "auto")
    recipe = d.meta && d.meta->provenance.rfind("synthetic", 0) == 0 ? "synthetic" : "embedding";
  ppa::PipelineOptions o = recipe == "synthetic" ? ppa::synthetic_recipe() : ppa::embedding_recipe();
  o.train.seed = f.seed;
  if (f.epochs) o.train.epochs = *f.epochs;
  if (f.lr) o.train.learning_rate = *f.lr;
  if (f.batch) o.train.batch_size = *f.batch;
  if (f.normalize != "auto") o.normalize = f.normalize == "on";
  if (!(f.tau >= 0.0)) throw ppa::ValidationError("tau must be >= 0");
  o.tau = f.tau;
  if (!(f.noise >= 0.0 && f.noise <= 1.0)) throw ppa::ValidationError("noise must lie in [0, 1]");
  o.pseudo_label_noise = f.noise;
  o.train.validate();
  return o;
}

json run_config_json(const RunFlags& f, const ppa::PipelineOptions& o, std::string_view method, double tau) {
  json j;
  j["method"] = method;
  j["features_digest"] = file_digest(f.features);
  j["proxies_digest"] = file_digest(f.proxies);
  j["tau"] = tau;
  j["normalize"] = o.normalize;
  j["pseudo_label_noise"] = o.pseudo_label_noise;
  if (method == "jtt") j["lambda"] = f.lambda;
  j["train"] = o.train.to_json();
  return j;
}

struct RunOutput {
  fs::path dir;
  ppa::eval::EvalReport report;
};

// Trains one method end to end and writes model, manifest and test report.
RunOutput run_method(const RunFlags& f, const LoadedData& d, ppa::PipelineOptions o, const std::string& method,
                     double tau) {
  o.tau = tau;
  const json config = run_config_json(f, o, method, tau);
  const std::string hash = ppa::hex64(ppa::fnv1a(config.dump()));
  const fs::path dir = fs::path(f.out) / (method + "-" + hash);
  fs::create_directories(dir);

  ppa::ModelProvenance prov;
  prov.method = method;
  prov.seed = o.train.seed;
  prov.config_hash = hash;
  json manifest;
  manifest["config"] = config;
  manifest["config_hash"] = hash;
  manifest["features_path"] = f.features;
  manifest["proxies_path"] = f.proxies;

  std::optional<ppa::LinearScorer> model;
  if (method == "erm") {
    auto r = ppa::train_erm(d.dataset, d.proxies, o);
    prov.loss_kind = "ce";
    prov.selected_epoch = r.selected_epoch;
    model = std::move(r.scorer);
  } else if (method == "jtt") {
    const auto first = ppa::train_erm(d.dataset, d.proxies, o);
    auto r = ppa::train_jtt(d.dataset, d.proxies, first.scorer, f.lambda, o);
    prov.loss_kind = "ce";
    prov.selected_epoch = r.selected_epoch;
    manifest["first_stage_selected_epoch"] =
        first.selected_epoch ? json(*first.selected_epoch) : json(nullptr);
    model = std::move(r.scorer);
  } else if (method == "ppa") {
    auto r = ppa::run_ppa(d.dataset, d.proxies, o);
    prov.loss_kind = "gla";
    prov.tau = tau;
    prov.selected_epoch = r.classifier.selected_epoch;
    manifest["pipeline"] = r.manifest;
    write_json(dir / "group_head.json", ppa::model_to_json(r.classifier.group_head, prov));
    write_json(dir / "biased.json", ppa::model_to_json(r.biased, prov));
    model = std::move(r.classifier.scorer);
  } else if (method == "gt-gla") {
    auto r = ppa::train_gt_gla(d.dataset, d.proxies, tau, o);
    prov.loss_kind = "gla";
    prov.tau = tau;
    prov.selected_epoch = r.selected_epoch;
    manifest["group_counts"] = r.group_counts;
    write_json(dir / "group_head.json", ppa::model_to_json(r.group_head, prov));
    model = std::move(r.scorer);
  } else {
    throw ppa::ValidationError("unknown method '" + method + "'");
  }
  manifest["selected_epoch"] = prov.selected_epoch ? json(*prov.selected_epoch) : json(nullptr);

  const auto prepared = ppa::prepare_features(d.dataset, o.normalize);
  const ppa::Split split = prepared.count(ppa::Split::kTest) > 0 ? ppa::Split::kTest : ppa::Split::kVal;
  auto report = ppa::eval::evaluate(*model, prepared, split, /*require_groups=*/false);
  manifest["report_split"] = ppa::to_string(split);

  write_json(dir / "model.json", ppa::model_to_json(*model, prov));
  write_json(dir / "manifest.json", manifest);
  json rj = report.to_json();
  rj["split"] = ppa::to_string(split);
  write_json(dir / "report.json", rj);
  write_text(dir / "report.csv", report.to_csv());
  return {dir, std::move(report)};
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_gen(const std::string& preset, std::uint64_t seed, const std::string& out, std::string stem) {
  const auto spec = ppa::synthetic_preset(preset, seed);
  if (stem.empty()) stem = preset;
  const auto data = ppa::generate_synthetic(spec);
  fs::create_directories(out);
  const fs::path features = fs::path(out) / (stem + ".features.ppaf");
  const fs::path proxies = fs::path(out) / (stem + ".proxies.ppaz");
  ppa::save(data.dataset, features);
  ppa::save_proxies(data.proxies, proxies);
  ppa::DatasetMeta meta;
  meta.class_names = data.proxies.class_names;
  meta.attribute_names = {"attr0", "attr1"};
  meta.provenance = "synthetic:" + preset + ":seed=" + std::to_string(seed);
  meta.normalized = false;
  ppa::save_meta(meta, features);
  std::cout << features.string() << "\n" << proxies.string() << "\n";
  return kExitOk;
}

void print_report_line(const std::string& label, const ppa::eval::EvalReport& r) {
  if (r.has_groups)
    std::printf("%s wga=%.4f avg=%.4f bge=%.4f\n", label.c_str(), r.worst_group_accuracy, r.average_accuracy, r.bge);
  else
    std::printf("%s avg=%.4f\n", label.c_str(), r.average_accuracy);
}

int cmd_train(const RunFlags& f) {
  const auto data = load_inputs(f);
  if (f.method == "gt-gla" && !data.dataset.has_attributes())
    throw ppa::ValidationError("gt-gla needs ground-truth attributes in the feature container");
  const auto opt = resolve_options(f, data);
  const auto r = run_method(f, data, opt, f.method, f.tau);
  std::cout << r.dir.string() << "\n";
  print_report_line(f.method, r.report);
  return kExitOk;
}

int cmd_sweep_tau(const RunFlags& f) {
  const auto data = load_inputs(f);
  const auto opt = resolve_options(f, data);
  const auto grid = parse_grid(f.tau_grid);
  std::vector<std::optional<RunOutput>> results(grid.size());
  std::vector<std::exception_ptr> errors(grid.size());
  const std::size_t workers = worker_count(grid.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < grid.size(); i += workers) {
        try {
          results[i] = run_method(f, data, opt, "ppa", grid[i]);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::string csv = "tau,worst_group_accuracy,average_accuracy,bge,run_dir\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto& r = results[i]->report;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%.6g,%.6f,%.6f,%.6f,", grid[i], r.worst_group_accuracy, r.average_accuracy, r.bge);
    csv += buf + results[i]->dir.string() + "\n";
  }
  fs::create_directories(f.out);
  const fs::path csv_path = fs::path(f.out) / "sweep_tau.csv";
  write_text(csv_path, csv);
  write_text(fs::path(f.out) / "sweep_tau.gp",
             "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'tau'\nset ylabel 'accuracy'\n"
             "plot 'sweep_tau.csv' using 1:2 with linespoints title 'worst-group', \\\n"
             "     'sweep_tau.csv' using 1:3 with linespoints title 'average'\n");
  std::cout << csv;
  return kExitOk;
}

int cmd_verify(const std::string& which, std::uint64_t seed, std::optional<std::size_t> trials, std::size_t worlds,
               const std::string& rule, bool as_json) {
  using namespace ppa::certify;
  std::vector<CheckResult> results;
  auto want = [&](std::string_view name) { return which == "all" || which == name; };
  if (want("projection")) {
    ProjectionOptions o;
    o.seed = seed;
    if (trials) o.trials = *trials;
    results.push_back(projection(o));
  }
  if (want("prop1")) {
    Prop1Options o;
    o.seed = seed;
    if (trials) o.scenarios = *trials;
    results.push_back(prop1_exact(o));
    results.push_back(prop1_noisy(o));
  }
  if (want("lemma1")) {
    WorldOptions o;
    o.seed = seed;
    if (trials) o.worlds = *trials;
    results.push_back(lemma1(o));
  }
  if (want("prop2")) {
    Prop2Options o;
    o.seed = seed;
    o.worlds = worlds;
    o.rule = rule == "ratio-sum" ? ppa::theory::AggregationRule::kRatioSum : ppa::theory::AggregationRule::kLogitSum;
    results.push_back(prop2(o));
  }
  if (want("gradients")) {
    GradientOptions o;
    o.seed = seed;
    if (trials) o.instances = *trials;
    results.push_back(gradients(o));
  }
  if (want("aggregation")) {
    AggregationOptions o;
    o.seed = seed;
    results.push_back(aggregation(o));
  }
  bool all_passed = true;
  json arr = json::array();
  for (const auto& r : results) {
    all_passed = all_passed && r.passed;
    if (as_json)
      arr.push_back({{"check", r.name}, {"passed", r.passed}, {"detail", r.detail}, {"metrics", r.metrics}});
    else
      std::printf("%-12s %s  %s\n", r.name.c_str(), r.passed ? "PASS" : "FAIL", r.detail.c_str());
  }
  if (as_json) std::cout << arr.dump(2) << "\n";
  return all_passed ? kExitOk : kExitVerification;
}

int cmd_identify(const RunFlags& f) {
  const auto data = load_inputs(f);
  if (!data.dataset.has_attributes()) throw ppa::ValidationError("identify needs ground-truth attributes");
  const auto opt = resolve_options(f, data);
  const auto prepared = ppa::prepare_features(data.dataset, opt.normalize);

  const auto erm = ppa::train_erm(data.dataset, data.proxies, opt);
  const auto reference = ppa::eval::evaluate(erm.scorer, prepared, ppa::Split::kVal);

  json out;
  out["reference_worst_group"] = {{"attribute", ppa::eval::worst_group(reference).first},
                                  {"class", ppa::eval::worst_group(reference).second}};
  // Both biased models are taken at their final epoch; selecting on
  // validation WGA would pick the least biased snapshot.
  auto unselected = opt;
  unselected.select_on_val = false;
  const auto erm_biased = ppa::train_erm(data.dataset, data.proxies, unselected).scorer;
  const auto projected = ppa::train_biased(data.dataset, data.proxies, opt, /*project=*/true);
  for (const auto& [name, model] : {std::pair{"erm", &erm_biased}, std::pair{"projected", &projected}}) {
    const auto flags = ppa::error_set(*model, data.dataset, opt.normalize);
    out[name] = ppa::eval::identification_quality(flags, data.dataset, reference).to_json();
  }
  fs::create_directories(f.out);
  write_json(fs::path(f.out) / "identification.json", out);
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Project, probe and aggregate: group-robust linear probes on frozen embeddings"};
  app.require_subcommand(1);

  std::string preset = "synthetic-waterbirds", gen_out = ".", stem;
  std::uint64_t gen_seed = 0;
  auto* gen = app.add_subcommand("gen", "Write a synthetic feature/proxy container pair");
  gen->add_option("--preset", preset, "Generator preset")->check(CLI::IsMember(ppa::synthetic_preset_names()));
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--out", gen_out, "Output directory");
  gen->add_option("--stem", stem, "File stem (defaults to the preset name)");

  RunFlags train_flags;
  auto* train = app.add_subcommand("train", "Train one method and report test metrics");
  add_data_flags(train, train_flags);
  train->add_option("--method", train_flags.method, "Method")->check(CLI::IsMember({"erm", "jtt", "ppa", "gt-gla"}));
  train->add_option("--tau", train_flags.tau, "Group-prior scale");
  train->add_option("--noise", train_flags.noise, "Fraction of pseudo-groups to resample (ppa)");
  train->add_option("--lambda", train_flags.lambda, "Error-set upweight (jtt)");

  RunFlags sweep_flags;
  auto* sweep = app.add_subcommand("sweep-tau", "Train PPA for each tau in a grid");
  add_data_flags(sweep, sweep_flags);
  sweep->add_option("--tau-grid", sweep_flags.tau_grid, "Comma-separated tau values");
  sweep->add_option("--noise", sweep_flags.noise, "Fraction of pseudo-groups to resample");

  std::string which = "all", rule = "logit-sum";
  std::uint64_t verify_seed = 0;
  std::optional<std::size_t> trials;
  std::size_t worlds = 0;
  bool as_json = false;
  auto* verify = app.add_subcommand("verify", "Run theory and operator certificates");
  verify->add_option("which", which, "Suite")
      ->check(CLI::IsMember({"all", "prop1", "lemma1", "prop2", "aggregation", "gradients", "projection"}));
  verify->add_option("--seed", verify_seed, "Base seed");
  verify->add_option("--trials", trials, "Random instances for the selected suite");
  verify->add_option("--worlds", worlds, "Random 4-point worlds checked in addition to the default one (prop2)");
  verify->add_option("--rule", rule, "Class aggregation for prop2")->check(CLI::IsMember({"logit-sum", "ratio-sum"}));
  verify->add_flag("--json", as_json, "Emit JSON instead of a table");

  RunFlags id_flags;
  auto* identify = app.add_subcommand("identify", "Minority identification of plain and projected biased models");
  add_data_flags(identify, id_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (gen->parsed()) return cmd_gen(preset, gen_seed, gen_out, stem);
    if (train->parsed()) return cmd_train(train_flags);
    if (sweep->parsed()) return cmd_sweep_tau(sweep_flags);
    if (verify->parsed()) return cmd_verify(which, verify_seed, trials, worlds, rule, as_json);
    if (identify->parsed()) return cmd_identify(id_flags);
  } catch (const ppa::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ppa::VerificationError& e) {
    std::cerr << "verification failed: " << e.what() << "\n";
    return kExitVerification;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}
