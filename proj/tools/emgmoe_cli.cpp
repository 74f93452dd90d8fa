// emgmoe command-line tool: data synthesis, contamination, training,
// evaluation and the experiment drivers.

#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "emgmoe/bench.hpp"
#include "emgmoe/config.hpp"
#include "emgmoe/data_io.hpp"
#include "emgmoe/error.hpp"
#include "emgmoe/moe.hpp"

namespace fs = std::filesystem;
using namespace emgmoe;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  std::string variant = "full7";
  std::vector<std::string> pools;
  std::vector<double> snr_range;
  std::string data;
};

RunConfig load_run_config(const Common& c) {
  if (c.config.empty()) fail(ErrorKind::InvalidInput, "--config is required");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(c.config));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::InvalidInput, "config '" + c.config + "': " + e.what());
  }
  if (c.seed) j["seed"] = *c.seed;
  if (c.snr_range.size() == 2) j["data"]["snr_range"] = c.snr_range;
  return parse_config(j);
}

SnrRange snr_range_of(const Common& c) {
  if (c.snr_range.empty()) return {};
  return {c.snr_range[0], c.snr_range[1]};
}

void require(const std::string& v, const char* flag) {
  if (v.empty()) fail(ErrorKind::InvalidInput, std::string(flag) + " is required");
}

void save_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  write_file(p.string(), text);
}

struct LoadedData {
  DatasetManifest manifest;
  std::vector<ContaminatedSample> train;
  std::vector<ContaminatedSample> test;
};

LoadedData load_data(const std::string& dir) {
  require(dir, "--data");
  LoadedData d;
  d.manifest = read_manifest(dir);
  d.train = load_split(dir, d.manifest, "train");
  if (d.manifest.files.count("test")) d.test = load_split(dir, d.manifest, "test");
  return d;
}

void write_histories(const fs::path& dir, const BuildLog& log) {
  if (log.type_history) save_text(dir / "history_router_type.csv", nn::history_csv(*log.type_history));
  if (log.snr_history) save_text(dir / "history_router_snr.csv", nn::history_csv(*log.snr_history));
  for (const auto& [slot, h] : log.expert_history) save_text(dir / ("history_expert_" + slot.name() + ".csv"), nn::history_csv(h));
  for (const auto& [slot, h] : log.rescale_history) save_text(dir / ("history_rescale_" + slot.name() + ".csv"), nn::history_csv(h));
}

// --- subcommands ----------------------------------------------------------------

int cmd_synth(const Common& c, std::size_t n_clean, std::size_t n_emg, std::size_t length, double rate) {
  require(c.out, "--out");
  const std::uint64_t seed = c.seed.value_or(7);
  const auto eeg = synth_surrogate_eeg(n_clean, length, derive_seed(seed, "data/eeg"), rate);
  const auto emg = synth_surrogate_emg(n_emg, length, derive_seed(seed, "data/emg"), rate);
  fs::create_directories(c.out);
  write_pool(eeg, (fs::path(c.out) / "clean_eeg.csv").string());
  write_pool(emg, (fs::path(c.out) / "emg_artifact.csv").string());
  std::cout << "wrote " << n_clean << " clean and " << n_emg << " artifact segments to " << c.out << "\n";
  return 0;
}

int cmd_contaminate(const Common& c, std::size_t n, double ratio, std::string config_hash) {
  require(c.out, "--out");
  if (c.pools.size() != 2) fail(ErrorKind::InvalidInput, "--pools takes <clean.csv> <emg.csv>");
  const auto eeg = load_pool(c.pools[0], PoolRole::CleanEEG);
  const auto emg = load_pool(c.pools[1], PoolRole::EmgArtifact);
  const std::uint64_t seed = c.seed.value_or(7);
  const auto range = snr_range_of(c);
  const auto th = compute_terciles(segment_variances(emg.segments));
  const auto all = build_dataset(eeg.segments, emg.segments, range, n, derive_seed(seed, "data/mix"), &th);
  const auto split = split_dataset(all, ratio, derive_seed(seed, "data/split"));
  DatasetManifest m;
  m.seed = seed;
  m.snr_range = range;
  m.thresholds = th;
  m.config_hash = std::move(config_hash);
  write_dataset(c.out, m, {{"train", split.train}, {"test", split.test}});
  std::cout << "wrote " << split.train.size() << " train and " << split.test.size() << " test samples to " << c.out << "\n";
  return 0;
}

int cmd_train_router(const Common& c) {
  const auto cfg = load_run_config(c);
  require(c.out, "--out");
  const auto d = load_data(c.data);
  const auto v = parse_variant(c.variant);
  const auto r = train_router(v, d.train, cfg);
  save_router(c.out, r.bundle, cfg.hash);
  const fs::path out(c.out);
  if (r.type_history) save_text(out / "history_type.csv", nn::history_csv(*r.type_history));
  if (r.snr_history) save_text(out / "history_snr.csv", nn::history_csv(*r.snr_history));
  if (!d.test.empty()) {
    if (r.bundle.type_classifier) {
      const auto cm = confusion(*r.bundle.type_classifier, d.test, RouterTarget::EmgType);
      save_text(out / "confusion_type.csv", confusion_csv(cm, RouterTarget::EmgType));
      std::cout << "type accuracy " << fx(cm.accuracy()) << " (published reference " << fx(kReferenceTypeAccuracy) << ")\n";
    }
    if (r.bundle.snr_classifier) {
      const auto cm = confusion(*r.bundle.snr_classifier, d.test, RouterTarget::SnrTier);
      save_text(out / "confusion_snr.csv", confusion_csv(cm, RouterTarget::SnrTier));
      std::cout << "SNR accuracy  " << fx(cm.accuracy()) << " (published reference " << fx(kReferenceSnrAccuracy) << ")\n";
    }
  }
  std::cout << "router checksum " << hex64(router_checksum(r.bundle)) << "\n";
  return 0;
}

int cmd_train_experts(const Common& c, const std::vector<std::string>& only, const std::string& router_dir) {
  const auto cfg = load_run_config(c);
  require(c.out, "--out");
  const auto d = load_data(c.data);
  const auto v = parse_variant(c.variant);
  const auto subsets = partition_samples(v, d.train);
  std::set<ExpertSlot> wanted;
  for (const auto& s : only) {
    const auto slot = ExpertSlot::parse(s);
    if (!subsets.count(slot)) fail(ErrorKind::InvalidInput, "partition '" + s + "' is not part of variant " + c.variant);
    wanted.insert(slot);
  }
  const fs::path out(c.out);
  ExpertCache cache;
  for (const auto& [slot, subset] : subsets) {
    if (!wanted.empty() && !wanted.count(slot)) continue;
    const auto& te = cache.emplace(slot, train_expert(slot, subset, cfg)).first->second;
    save_expert((out / "experts" / slot.name()).string(), te.expert, {cfg.hash, expert_seeds(cfg.seed, slot).train});
    save_text(out / ("history_expert_" + slot.name() + ".csv"), nn::history_csv(te.history));
    if (te.rescale_history) save_text(out / ("history_rescale_" + slot.name() + ".csv"), nn::history_csv(*te.rescale_history));
    std::cout << slot.name() << ": " << subset.size() << " samples, validation CC " << fx(te.validation.mean_cc)
              << ", TRRMSE " << fx(te.validation.mean_trrmse) << "\n";
  }
  if (!router_dir.empty()) {
    if (!wanted.empty()) fail(ErrorKind::InvalidInput, "--router assembles a full system and cannot be combined with --only");
    const auto router = load_router(router_dir);
    const auto sys = build_moe(v, d.train, cfg, &router, nullptr, &cache);
    save_system((out / "system").string(), sys);
    std::cout << "system checksum " << hex64(system_checksum(sys)) << "\n";
  }
  return 0;
}

int cmd_build(const Common& c) {
  const auto cfg = load_run_config(c);
  require(c.out, "--out");
  const auto v = parse_variant(c.variant);
  const auto d = load_data(c.data);
  BuildLog log;
  const auto sys = build_moe(v, d.train, cfg, nullptr, &log);
  save_system(c.out, sys);
  write_histories(fs::path(c.out) / "histories", log);
  std::cout << to_string(v) << ": " << sys.experts.size() << " experts, " << classifier_count(sys) << " classifier(s), checksum "
            << hex64(system_checksum(sys)) << "\n";
  return 0;
}

int cmd_evaluate(const Common& c, const std::string& system_dir, const std::string& split, bool oracle) {
  require(system_dir, "--system");
  require(c.out, "--out");
  const auto sys = load_system(system_dir);
  require(c.data, "--data");
  const auto m = read_manifest(c.data);
  const auto test = load_split(c.data, m, split);
  const auto ev = evaluate_system(sys, test, oracle);
  const fs::path out(c.out);
  save_text(out / "binned.csv", binned_csv(ev.report));
  save_text(out / "records.csv", records_csv(ev.report, ev.audit));
  save_text(out / "routing.csv", routing_csv(sys.variant, ev.audit));
  const std::string title = split + " split, " + (oracle ? "ground-truth" : "learned") + " routing";
  const nlohmann::json summary{{"config_hash", sys.config_hash},
                               {"system_checksum", hex64(system_checksum(sys))},
                               {"variant", to_string(sys.variant)},
                               {"split", split},
                               {"oracle", oracle},
                               {"samples", ev.report.total()},
                               {"cc_mean", ev.report.overall.cc.mean},
                               {"cc_median", ev.report.overall.cc.median},
                               {"trrmse_mean", ev.report.overall.trrmse.mean},
                               {"srrmse_mean", ev.report.overall.srrmse.mean},
                               {"routing_accuracy", ev.routing_accuracy()},
                               {"validation_cc_oracle", aggregate_validation_cc(sys)},
                               {"expert_forwards", ev.expert_forwards}};
  save_text(out / "summary.json", summary.dump(2) + "\n");
  const std::string text = summary_text(title, ev.report);
  save_text(out / "summary.txt", text);
  std::cout << text;
  return 0;
}

int cmd_ablate(const Common& c) {
  const auto cfg = load_run_config(c);
  require(c.out, "--out");
  const auto d = load_data(c.data);
  if (d.test.empty()) fail(ErrorKind::InvalidInput, "ablation needs a test split");
  const auto rows = ablation_run(d.train, d.test, cfg);
  const std::string csv = ablation_csv(rows);
  save_text(fs::path(c.out) / "ablation.csv", csv);
  std::cout << csv;
  return 0;
}

int cmd_learnability(const Common& c) {
  const auto cfg = load_run_config(c);
  require(c.out, "--out");
  const auto d = load_data(c.data);
  const auto r = learnability_experiment(d.train, cfg);
  const fs::path out(c.out);
  save_text(out / "learnability.csv", learnability_csv(r));
  for (std::size_t t = 0; t < 3; ++t) save_text(out / ("history_" + to_string(kEmgTypes[t]) + ".csv"), nn::history_csv(r.histories[t]));
  std::cout << learnability_csv(r);
  return 0;
}

int cmd_convergence(const Common& c, std::optional<double> decades) {
  const auto cfg = load_run_config(c);
  require(c.out, "--out");
  const auto r = convergence_experiment(cfg, decades);
  const fs::path out(c.out);
  save_text(out / "convergence.csv", convergence_csv(r));
  save_text(out / "convergence.txt", convergence_text(r));
  save_text(out / "history_correlation.csv", nn::history_csv(r.corr_history));
  save_text(out / "history_mse.csv", nn::history_csv(r.mse_history));
  std::cout << convergence_text(r);
  return 0;
}

int cmd_latency(const Common& c, const std::string& system_dir, std::size_t trials) {
  require(system_dir, "--system");
  require(c.out, "--out");
  const auto sys = load_system(system_dir);
  const auto r = latency_bench(sys, trials, c.seed.value_or(1));
  const fs::path out(c.out);
  save_text(out / "latency.csv", latency_csv(r));
  save_text(out / "latency.json", latency_json(r).dump(2) + "\n");
  std::cout << "trials " << r.trials << ", mean " << format_fixed(r.mean_s, 6) << " s, std " << format_fixed(r.std_s, 6)
            << " s (published reference " << kReferenceLatencyMeanS << " +- " << kReferenceLatencyStdS << " s)\n";
  return latency_consistent(r) ? 0 : 1;
}

int cmd_report(const std::string& in) {
  require(in, "--in");
  const fs::path dir(in);
  if (!fs::is_directory(dir)) fail(ErrorKind::Io, "not a directory: " + in);
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto name = e.path().filename().string();
    if (name == "summary.txt" || name == "binned.csv" || name == "test_binned.csv" || name == "ablation.csv" ||
        name == "learnability.csv" || name == "convergence.txt" || name == "latency.json" || name == "routing.csv" ||
        name.rfind("confusion_", 0) == 0) {
      files.push_back(e.path());
    }
  }
  if (files.empty()) fail(ErrorKind::InvalidInput, "no report artifacts under " + in);
  std::sort(files.begin(), files.end());
  for (const auto& f : files) std::cout << "== " << fs::relative(f, dir).string() << "\n" << read_file(f.string()) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixture-of-experts EMG artifact removal for single-channel EEG"};
  app.require_subcommand(1);
  Common c;
  auto common = [&](CLI::App* sub, bool with_config) {
    sub->add_option("--seed", c.seed, "Base seed");
    sub->add_option("--out", c.out, "Output directory");
    if (with_config) sub->add_option("--config", c.config, "Run configuration (JSON)");
  };
  auto data_opt = [&](CLI::App* sub) { sub->add_option("--data", c.data, "Dataset directory (manifest.json + splits)"); };
  auto variant_opt = [&](CLI::App* sub) {
    sub->add_option("--variant", c.variant, "MoE variant: emg3, snr3, full9, full7");
  };

  std::size_t n_clean = 400, n_emg = 400, length = kDefaultSegmentLength, n = 2000, trials = 1000;
  double rate = kDefaultSampleRateHz, ratio = 0.9;
  std::string system_dir, split = "test", router_dir, report_in, config_hash;
  std::vector<std::string> only;
  bool oracle = false;
  std::optional<double> decades;

  auto* synth = app.add_subcommand("synth-data", "Write surrogate clean-EEG and EMG segment pools");
  common(synth, false);
  synth->add_option("--n-clean", n_clean, "Clean segments");
  synth->add_option("--n-emg", n_emg, "Artifact segments");
  synth->add_option("--length", length, "Samples per segment");
  synth->add_option("--rate", rate, "Sample rate in Hz");

  auto* cont = app.add_subcommand("contaminate", "Mix pools into a labeled train/test dataset");
  common(cont, false);
  cont->add_option("--pools", c.pools, "<clean.csv> <emg.csv>")->expected(2);
  cont->add_option("--snr-range", c.snr_range, "lo hi (dB)")->expected(2);
  cont->add_option("--n", n, "Samples to draw");
  cont->add_option("--train-ratio", ratio, "Train fraction");
  cont->add_option("--config-hash", config_hash, "Hash to stamp into the manifest");

  auto* tr = app.add_subcommand("train-router", "Train and freeze the routing classifiers");
  common(tr, true);
  data_opt(tr);
  variant_opt(tr);

  auto* te = app.add_subcommand("train-experts", "Train local experts on ground-truth partitions");
  common(te, true);
  data_opt(te);
  variant_opt(te);
  te->add_option("--only", only, "Train only these partitions");
  te->add_option("--router", router_dir, "Frozen router directory; assembles a full system");

  auto* build = app.add_subcommand("build-moe", "Train router and experts into a system directory");
  common(build, true);
  data_opt(build);
  variant_opt(build);

  auto* eval = app.add_subcommand("evaluate", "Binned evaluation of a system on a dataset split");
  common(eval, false);
  data_opt(eval);
  eval->add_option("--system", system_dir, "System directory");
  eval->add_option("--split", split, "Split name");
  eval->add_flag("--oracle", oracle, "Route by ground-truth labels");

  auto* abl = app.add_subcommand("ablate", "Build and evaluate all four variants");
  common(abl, true);
  data_opt(abl);

  auto* learn = app.add_subcommand("learnability", "Per-EMG-type learnability experiment");
  common(learn, true);
  data_opt(learn);

  auto* conv = app.add_subcommand("convergence", "Correlation vs MSE loss convergence experiment");
  common(conv, true);
  conv->add_option("--amplitude-decades", decades, "Override the target amplitude spread");

  auto* lat = app.add_subcommand("bench-latency", "End-to-end denoise latency");
  common(lat, false);
  lat->add_option("--system", system_dir, "System directory");
  lat->add_option("--trials", trials, "Number of trials");

  auto* rep = app.add_subcommand("report", "Print report artifacts found under a directory");
  rep->add_option("--in", report_in, "Directory holding reports");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_code(ErrorKind::InvalidInput);
  }

  try {
    if (synth->parsed()) return cmd_synth(c, n_clean, n_emg, length, rate);
    if (cont->parsed()) return cmd_contaminate(c, n, ratio, config_hash);
    if (tr->parsed()) return cmd_train_router(c);
    if (te->parsed()) return cmd_train_experts(c, only, router_dir);
    if (build->parsed()) return cmd_build(c);
    if (eval->parsed()) return cmd_evaluate(c, system_dir, split, oracle);
    if (abl->parsed()) return cmd_ablate(c);
    if (learn->parsed()) return cmd_learnability(c);
    if (conv->parsed()) return cmd_convergence(c, decades);
    if (lat->parsed()) return cmd_latency(c, system_dir, trials);
    if (rep->parsed()) return cmd_report(report_in);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
