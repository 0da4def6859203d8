// advcausal: adversarial-robustness laboratory pipeline.
//
// Verbs: gen-data, train, attack, estimate-theta, report, ablate.
// Stages communicate only through files in the output directory, so every
// intermediate artifact is inspectable and every command is idempotent for
// a fixed config and seed.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "advcausal/checkpoint.hpp"
#include "advcausal/common.hpp"
#include "advcausal/config.hpp"
#include "advcausal/svg.hpp"

using namespace advcausal;

namespace {

struct CliOptions {
  std::string verb;
  std::filesystem::path config_path;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::optional<std::filesystem::path> out;
  std::map<std::string, std::string> extra;  // verb-specific flags
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void print_usage(std::ostream& os) {
  os << "usage: advcausal VERB --config PATH [--seed N] [--threads N] [--out DIR]\n"
     << "verbs:\n"
     << "  gen-data                         write train.ds/test.ds dataset caches\n"
     << "  train --defense at|trades|adml   train and checkpoint a model\n"
     << "  attack --checkpoint P --attack NAME\n"
     << "                                   emit adversarial inputs and flip stats\n"
     << "  estimate-theta --checkpoint P    estimate the causal parameter (JSON)\n"
     << "  report --checkpoints A[,B]       robustness report(s), rho block with two\n"
     << "  ablate                           split/cross-fit x treatment-set grid\n"
     << "environment: ADVCAUSAL_OUT overrides --out\n";
}

CliOptions parse_args(int argc, char** argv) {
  CliOptions opts;
  if (argc < 2) throw UsageError("missing verb");
  opts.verb = argv[1];
  const std::vector<std::string> verbs = {"gen-data",       "train",  "attack",
                                          "estimate-theta", "report", "ablate"};
  bool known = false;
  for (const auto& v : verbs) known = known || v == opts.verb;
  if (!known) throw UsageError("unknown verb '" + opts.verb + "'");

  for (int i = 2; i < argc; ++i) {
    const std::string flag = argv[i];
    auto value = [&]() -> std::string {
      if (i + 1 >= argc) throw UsageError("flag " + flag + " needs a value");
      return argv[++i];
    };
    if (flag == "--config") {
      opts.config_path = value();
    } else if (flag == "--seed") {
      opts.seed = std::stoull(value());
    } else if (flag == "--threads") {
      opts.threads = std::stoi(value());
      if (opts.threads < 1) throw UsageError("--threads must be >= 1");
    } else if (flag == "--out") {
      opts.out = value();
    } else if (flag == "--defense" || flag == "--checkpoint" || flag == "--attack" ||
               flag == "--checkpoints") {
      opts.extra[flag] = value();
    } else {
      throw UsageError("unknown flag '" + flag + "'");
    }
  }
  if (opts.config_path.empty()) throw UsageError("--config PATH is required");
  return opts;
}

struct Context {
  ExperimentConfig config;
  std::filesystem::path out_dir;
  int threads = 1;
};

Context make_context(const CliOptions& opts) {
  Context ctx;
  ctx.config = load_experiment_config(opts.config_path, opts.seed);
  ctx.threads = opts.threads;
  std::filesystem::path out = ctx.config.out_dir;
  if (opts.out.has_value()) out = *opts.out;
  if (const char* env = std::getenv("ADVCAUSAL_OUT"); env != nullptr && *env != '\0') {
    out = env;
  }
  ctx.out_dir = out;
  std::error_code ec;
  std::filesystem::create_directories(ctx.out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + ctx.out_dir.string());
  return ctx;
}

std::filesystem::path train_cache(const Context& ctx) { return ctx.out_dir / "train.ds"; }
std::filesystem::path test_cache(const Context& ctx) { return ctx.out_dir / "test.ds"; }

DatasetPair load_cached_datasets(const Context& ctx) {
  if (!std::filesystem::exists(train_cache(ctx)) || !std::filesystem::exists(test_cache(ctx))) {
    throw IoError("dataset caches not found in " + ctx.out_dir.string() +
                  " (run `advcausal gen-data` first)");
  }
  return DatasetPair{load_dataset(train_cache(ctx)), load_dataset(test_cache(ctx))};
}

ClassifierSpec model_spec_for(const Context& ctx, const LabeledDataset& train) {
  ClassifierSpec spec = ctx.config.model;
  spec.input_dim = train.input_dim();
  spec.num_classes = train.class_count;
  spec.validate();
  return spec;
}

int cmd_gen_data(const Context& ctx) {
  DatasetPair data;
  if (ctx.config.synthetic.has_value()) {
    data = gen_synthetic(*ctx.config.synthetic);
  } else {
    const DatasetFiles& files = *ctx.config.files;
    if (files.kind == "idx") {
      data.train = load_idx(files.train_images, files.train_labels);
      data.test = load_idx(files.test_images, files.test_labels);
      data.test.split = SplitTag::test;
    } else {
      auto [train, norm] = load_csv(files.train_path, files.label_column);
      data.train = std::move(train);
      data.test = load_csv(files.test_path, norm, data.train.class_count, SplitTag::test);
    }
  }
  save_dataset(train_cache(ctx), data.train);
  save_dataset(test_cache(ctx), data.test);
  std::cout << "wrote " << train_cache(ctx).string() << " (" << data.train.size()
            << " samples) and " << test_cache(ctx).string() << " (" << data.test.size()
            << " samples), " << data.train.class_count << " classes, input_dim "
            << data.train.input_dim() << "\n";
  return 0;
}

std::string defense_suffix(DefenseKind kind) {
  switch (kind) {
    case DefenseKind::at:
      return "at";
    case DefenseKind::trades:
      return "trades";
    default:
      return "adml";
  }
}

int cmd_train(const Context& ctx, const CliOptions& opts) {
  std::string which = defense_suffix(ctx.config.defense.kind);
  if (auto it = opts.extra.find("--defense"); it != opts.extra.end()) {
    which = it->second;
  }
  if (which != "at" && which != "trades" && which != "adml") {
    throw UsageError("--defense must be at, trades or adml");
  }
  DatasetPair data = load_cached_datasets(ctx);

  DefenseConfig defense = ctx.config.defense;
  TrainHistory history;
  Classifier model;
  if (which == "adml") {
    if (!defense.is_adml()) defense.kind = DefenseKind::adml_over_at;
    std::filesystem::path base = ctx.config.base_checkpoint;
    if (base.empty()) {
      base = ctx.out_dir / ("checkpoint_" + defense_suffix(defense.base_kind()) + ".bin");
    }
    if (!std::filesystem::exists(base)) {
      throw ContractError("adml fine-tuning needs an adversarially trained checkpoint; " +
                          base.string() + " does not exist (run `advcausal train --defense " +
                          defense_suffix(defense.base_kind()) + "` first)");
    }
    model = load_classifier(base);
    history = train_adml(model, data.train, data.test, ctx.config.train, defense, ctx.threads);
  } else {
    defense.kind = which == "at" ? DefenseKind::at : DefenseKind::trades;
    model = init_classifier(model_spec_for(ctx, data.train));
    history = train_standard(model, data.train, data.test, ctx.config.train, defense,
                             ctx.threads);
  }

  const auto ckpt = ctx.out_dir / ("checkpoint_" + which + ".bin");
  const auto hist = ctx.out_dir / ("history_" + which + ".csv");
  save_classifier(ckpt, model);
  write_history_csv(hist, history);
  std::cout << "wrote " << ckpt.string() << " and " << hist.string();
  if (!history.empty()) {
    std::cout << " (final clean " << history.back().clean_acc << ", pgd "
              << history.back().pgd_acc << ")";
  }
  std::cout << "\n";
  return 0;
}

int cmd_attack(const Context& ctx, const CliOptions& opts) {
  auto ckpt_it = opts.extra.find("--checkpoint");
  if (ckpt_it == opts.extra.end()) throw UsageError("attack needs --checkpoint PATH");
  auto name_it = opts.extra.find("--attack");
  if (name_it == opts.extra.end()) throw UsageError("attack needs --attack NAME");

  const Classifier model = load_classifier(ckpt_it->second);
  DatasetPair data = load_cached_datasets(ctx);
  const NamedAttack& attack = ctx.config.attack_named(name_it->second);

  const Tensor x_adv =
      run_attack(model, data.test.inputs, data.test.labels, attack, ctx.threads);
  const WorstBatch worst = select_worst(model, data.test.inputs, data.test.labels, x_adv);

  LabeledDataset adv = data.test;
  adv.inputs = x_adv;
  const auto adv_path = ctx.out_dir / ("adv_" + attack.name + ".ds");
  save_dataset(adv_path, adv);

  std::vector<std::size_t> per_class_flips(data.test.class_count, 0);
  double conf_total = 0.0;
  for (std::size_t i = 0; i < worst.size(); ++i) {
    per_class_flips[static_cast<std::size_t>(worst.y[i])] += 1;
    conf_total += worst.attacked_confidence[i];
  }
  nlohmann::json stats{
      {"schema_version", 1},
      {"attack", attack.name},
      {"gamma", attack.config.gamma},
      {"steps", attack.config.steps},
      {"seed", attack.config.seed},
      {"samples", data.test.size()},
      {"flipped", worst.size()},
      {"flip_rate",
       data.test.size() ? static_cast<double>(worst.size()) / data.test.size() : 0.0},
      {"mean_attacked_confidence", worst.size() ? conf_total / worst.size() : 0.0},
      {"per_class_flips", per_class_flips}};
  const auto stats_path = ctx.out_dir / ("flips_" + attack.name + ".json");
  std::ofstream out(stats_path);
  if (!out) throw IoError("cannot open " + stats_path.string() + " for writing");
  out << stats.dump(2) << '\n';

  std::cout << "wrote " << adv_path.string() << " and " << stats_path.string() << " ("
            << worst.size() << "/" << data.test.size() << " flipped)\n";
  return 0;
}

// Worst selection + multi-restart propensity + theta on the test split
// (held out from all training).
CausalEstimate estimate_for_checkpoint(const Context& ctx,
                                       const std::filesystem::path& checkpoint,
                                       const LabeledDataset& test) {
  const Classifier model = load_classifier(checkpoint);
  NamedAttack attack = ctx.config.attack_named(ctx.config.causal.attack);
  const Tensor x_adv = run_attack(model, test.inputs, test.labels, attack, ctx.threads);
  const WorstBatch worst = select_worst(model, test.inputs, test.labels, x_adv);
  if (worst.size() == 0) {
    throw ContractError("no worst examples under attack '" + attack.name +
                        "'; cannot estimate the causal parameter");
  }
  AttackConfig restart = attack.config;
  restart.random_start = true;  // the sharpened propensity needs random starts
  restart.seed = derive_seed(attack.config.seed, std::string_view("propensity"));
  const PropensityEstimate propensity = approx_propensity(
      model, worst.x, worst.y, restart, ctx.config.causal.restarts, ctx.threads);

  CausalMeta meta;
  meta.model_id = checkpoint.stem().string();
  meta.dataset_id = ctx.config.dataset_id;
  meta.attack = restart;
  meta.norm = ctx.config.causal.norm;
  meta.restarts = ctx.config.causal.restarts;
  meta.seed = ctx.config.seed;
  return estimate_theta(worst, model, propensity, ctx.config.causal.norm, meta);
}

int cmd_estimate_theta(const Context& ctx, const CliOptions& opts) {
  auto ckpt_it = opts.extra.find("--checkpoint");
  if (ckpt_it == opts.extra.end()) throw UsageError("estimate-theta needs --checkpoint PATH");
  DatasetPair data = load_cached_datasets(ctx);
  const std::filesystem::path checkpoint = ckpt_it->second;
  const CausalEstimate est = estimate_for_checkpoint(ctx, checkpoint, data.test);
  const auto path = ctx.out_dir / ("theta_" + checkpoint.stem().string() + ".json");
  save_causal_json(path, est);
  std::cout << "wrote " << path.string() << " (overall |theta| " << est.overall << " over "
            << est.per_sample.size() << " worst samples)\n";
  return 0;
}

RobustnessReport evaluate_checkpoint(const Context& ctx,
                                     const std::filesystem::path& checkpoint,
                                     const LabeledDataset& test) {
  const Classifier model = load_classifier(checkpoint);
  RobustnessReport report;
  report.model_id = checkpoint.stem().string();
  report.dataset_id = ctx.config.dataset_id;
  report.seed = ctx.config.seed;
  report.clean = clean_accuracy(model, test, ctx.threads);
  for (const std::string& name : ctx.config.report.attacks) {
    AttackReport ar;
    const NamedAttack& attack = ctx.config.attack_named(name);
    ar.name = name;
    ar.method = attack.method;
    ar.config = attack.config;
    ar.accuracy = robust_accuracy(model, test, attack, ctx.threads);
    for (int k : ctx.config.report.bottom_k) {
      ar.bottom_k[k] = bottom_k_cumulative(ar.accuracy.per_class, k);
    }
    report.attacks.push_back(std::move(ar));
  }
  return report;
}

void emit_report_files(const Context& ctx, const RobustnessReport& report) {
  const std::string stem = "report_" + report.model_id;
  for (const std::string& format : ctx.config.report.formats) {
    if (format == "json") emit_report_json(ctx.out_dir / (stem + ".json"), report);
    if (format == "csv") emit_report_csv(ctx.out_dir / (stem + ".csv"), report);
  }
}

int cmd_report(const Context& ctx, const CliOptions& opts) {
  auto list_it = opts.extra.find("--checkpoints");
  if (list_it == opts.extra.end()) throw UsageError("report needs --checkpoints A[,B]");
  std::vector<std::filesystem::path> checkpoints;
  std::string item;
  std::istringstream is(list_it->second);
  while (std::getline(is, item, ',')) {
    if (!item.empty()) checkpoints.emplace_back(item);
  }
  if (checkpoints.empty() || checkpoints.size() > 2) {
    throw UsageError("report takes one or two comma-separated checkpoints");
  }

  DatasetPair data = load_cached_datasets(ctx);
  std::vector<RobustnessReport> reports;
  for (const auto& ckpt : checkpoints) {
    reports.push_back(evaluate_checkpoint(ctx, ckpt, data.test));
  }

  // With a baseline/treated pair: relative causal-parameter ratios, bottom-k
  // classes chosen by the baseline's per-class robust accuracy.
  if (checkpoints.size() == 2) {
    const CausalEstimate theta_base = estimate_for_checkpoint(ctx, checkpoints[0], data.test);
    const CausalEstimate theta_treated = estimate_for_checkpoint(ctx, checkpoints[1], data.test);
    const std::string causal_attack = ctx.config.causal.attack;
    const AttackReport* baseline_attack = nullptr;
    for (const AttackReport& ar : reports[0].attacks) {
      if (ar.name == causal_attack) baseline_attack = &ar;
    }
    const std::vector<double>& ranking = baseline_attack != nullptr
                                             ? baseline_attack->accuracy.per_class
                                             : reports[0].clean.per_class;
    RhoBlock rho;
    rho.baseline_id = reports[0].model_id;
    rho.treated_id = reports[1].model_id;
    rho.norm = ctx.config.causal.norm;
    for (int k : ctx.config.report.bottom_k) {
      rho.rho_k[k] = relative_ratio(theta_treated, theta_base,
                                    bottom_k_classes(ranking, k));
    }
    rho.rho_avg = relative_ratio_avg(theta_treated, theta_base);
    reports[1].rho = rho;
    std::cout << "rho_avg " << rho.rho_avg << " (baseline " << rho.baseline_id << ", treated "
              << rho.treated_id << ")\n";
  }

  for (const RobustnessReport& report : reports) emit_report_files(ctx, report);

  // SVGs: per-class robustness and bottom-k aggregates per attack, one
  // series per checkpoint (plus clean bars).
  const bool want_svg =
      std::find(ctx.config.report.formats.begin(), ctx.config.report.formats.end(),
                "svg") != ctx.config.report.formats.end();
  if (want_svg) {
    std::vector<std::string> class_labels;
    for (std::size_t c = 0; c < data.test.class_count; ++c) {
      class_labels.push_back("class " + std::to_string(c));
    }
    for (std::size_t a = 0; a < ctx.config.report.attacks.size(); ++a) {
      const std::string& name = ctx.config.report.attacks[a];
      std::vector<PlotSeries> per_class;
      std::vector<PlotSeries> bottoms;
      std::vector<std::string> bottom_labels;
      for (int k : ctx.config.report.bottom_k) {
        bottom_labels.push_back("bottom " + std::to_string(k) + "%");
      }
      for (const RobustnessReport& report : reports) {
        const AttackReport& ar = report.attacks[a];
        per_class.push_back(PlotSeries{report.model_id, ar.accuracy.per_class});
        std::vector<double> vals;
        for (int k : ctx.config.report.bottom_k) vals.push_back(ar.bottom_k.at(k));
        bottoms.push_back(PlotSeries{report.model_id, vals});
      }
      emit_plot_svg(per_class, class_labels, ctx.out_dir / ("per_class_" + name + ".svg"),
                    "per-class robust accuracy (" + name + ")");
      emit_plot_svg(bottoms, bottom_labels, ctx.out_dir / ("bottom_k_" + name + ".svg"),
                    "bottom-k robust accuracy (" + name + ")");
    }
  }

  for (const RobustnessReport& report : reports) {
    std::cout << report.model_id << ": clean " << report.clean.overall;
    for (const AttackReport& ar : report.attacks) {
      std::cout << ", " << ar.name << " " << ar.accuracy.overall;
    }
    std::cout << "\n";
  }
  return 0;
}

int cmd_ablate(const Context& ctx) {
  DatasetPair data = load_cached_datasets(ctx);

  DefenseConfig defense = ctx.config.defense;
  if (!defense.is_adml()) defense.kind = DefenseKind::adml_over_at;

  // Fresh adversarially trained base for the grid.
  Classifier base = init_classifier(model_spec_for(ctx, data.train));
  DefenseConfig base_defense = ctx.config.defense;
  base_defense.kind = defense.base_kind();
  train_standard(base, data.train, data.test, ctx.config.train, base_defense, ctx.threads);
  save_classifier(ctx.out_dir / "ablate_base.bin", base);

  const NamedAttack& eval_attack = ctx.config.attack_named(ctx.config.causal.attack);
  const ClassAccuracy base_acc = robust_accuracy(base, data.test, eval_attack, ctx.threads);

  nlohmann::json rows = nlohmann::json::array();
  const auto csv_path = ctx.out_dir / "ablation.csv";
  std::ofstream csv(csv_path);
  if (!csv) throw IoError("cannot open " + csv_path.string() + " for writing");
  csv << "split_crossfit,treatment_set,clean_acc,robust_acc\n";

  const std::pair<const char*, TreatmentSet> treatments[] = {
      {"worst", TreatmentSet::worst},
      {"non_worst", TreatmentSet::non_worst},
      {"all", TreatmentSet::all},
  };
  for (bool sscf : {true, false}) {
    for (const auto& [tname, tset] : treatments) {
      DefenseConfig variant = defense;
      variant.use_split_crossfit = sscf;
      variant.treatment_set = tset;
      Classifier model = base.clone();
      train_adml(model, data.train, data.test, ctx.config.train, variant, ctx.threads);
      const double clean = clean_accuracy(model, data.test, ctx.threads).overall;
      const double robust = robust_accuracy(model, data.test, eval_attack, ctx.threads).overall;
      csv << (sscf ? "true" : "false") << ',' << tname << ',' << clean << ',' << robust << '\n';
      rows.push_back(nlohmann::json{{"split_crossfit", sscf},
                                    {"treatment_set", tname},
                                    {"clean_acc", clean},
                                    {"robust_acc", robust}});
      std::cout << "ablate sscf=" << (sscf ? "on" : "off") << " treatment=" << tname
                << " clean " << clean << " robust " << robust << "\n";
    }
  }
  nlohmann::json doc{{"schema_version", 1},
                     {"eval_attack", eval_attack.name},
                     {"base_clean", clean_accuracy(base, data.test, ctx.threads).overall},
                     {"base_robust", base_acc.overall},
                     {"rows", rows}};
  const auto json_path = ctx.out_dir / "ablation.json";
  std::ofstream js(json_path);
  if (!js) throw IoError("cannot open " + json_path.string() + " for writing");
  js << doc.dump(2) << '\n';
  std::cout << "wrote " << csv_path.string() << " and " << json_path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    const CliOptions opts = parse_args(argc, argv);
    const Context ctx = make_context(opts);
    if (opts.verb == "gen-data") return cmd_gen_data(ctx);
    if (opts.verb == "train") return cmd_train(ctx, opts);
    if (opts.verb == "attack") return cmd_attack(ctx, opts);
    if (opts.verb == "estimate-theta") return cmd_estimate_theta(ctx, opts);
    if (opts.verb == "report") return cmd_report(ctx, opts);
    if (opts.verb == "ablate") return cmd_ablate(ctx);
    throw UsageError("unhandled verb");
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    print_usage(std::cerr);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "contract error: " << e.what() << "\n";
    return 3;
  } catch (const FormatError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 4;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
