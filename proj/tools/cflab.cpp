#include "cflab/dataset.hpp"
#include "cflab/loss.hpp"
#include "cflab/metrics.hpp"
#include "cflab/relations.hpp"
#include "cflab/synthetic.hpp"
#include "cflab/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cflab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitVerification = 3;

// Output paths resolve under $CFLAB_OUT when set and the path is relative.
fs::path resolve_out(const std::string& out) {
  fs::path p(out);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("CFLAB_OUT")) return fs::path(root) / p;
  return p;
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Flat experiment config; CLI flags override file keys.
struct ExperimentConfig {
  std::string dataset;
  std::string synthetic;
  std::string input;
  std::int64_t kcore = 1;
  std::string out = "out";
  std::vector<std::uint64_t> seeds = {1};
  std::uint64_t split_seed = 1;
  TrainConfig train;
};

void apply_json(ExperimentConfig& cfg, const json& j) {
  if (j.contains("dataset")) cfg.dataset = j["dataset"].get<std::string>();
  if (j.contains("synthetic")) cfg.synthetic = j["synthetic"].get<std::string>();
  if (j.contains("input")) cfg.input = j["input"].get<std::string>();
  if (j.contains("kcore")) cfg.kcore = j["kcore"].get<std::int64_t>();
  if (j.contains("out")) cfg.out = j["out"].get<std::string>();
  if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  if (j.contains("split_seed")) cfg.split_seed = j["split_seed"].get<std::uint64_t>();

  TrainConfig& t = cfg.train;
  if (j.contains("dim")) t.dim = j["dim"].get<Index>();
  if (j.contains("lr")) t.lr = j["lr"].get<double>();
  if (j.contains("batch_size")) t.batch_size = j["batch_size"].get<Index>();
  if (j.contains("num_negatives")) t.num_negatives = j["num_negatives"].get<int>();
  if (j.contains("max_epochs")) t.max_epochs = j["max_epochs"].get<int>();
  if (j.contains("patience")) t.patience = j["patience"].get<int>();
  if (j.contains("weight_decay")) t.weight_decay = j["weight_decay"].get<double>();
  if (j.contains("encoder")) t.encoder = encoder_kind_from_name(j["encoder"].get<std::string>());
  if (j.contains("layers")) t.layers = j["layers"].get<int>();
  if (j.contains("negative_mode"))
    t.negative_mode = j["negative_mode"].get<std::string>() == "in_batch" ? NegativeMode::in_batch
                                                                          : NegativeMode::uniform;
  if (j.contains("lazy_adam")) t.lazy_adam = j["lazy_adam"].get<bool>();

  LossConfig& l = t.loss;
  if (j.contains("kind")) l.kind = loss_kind_from_name(j["kind"].get<std::string>());
  if (j.contains("tau")) l.tau = j["tau"].get<double>();
  if (j.contains("margin_const")) l.margin_const = j["margin_const"].get<double>();
  if (j.contains("ccl_weight")) l.ccl_weight = j["ccl_weight"].get<double>();
  if (j.contains("mcl_params")) {
    const auto& p = j["mcl_params"];
    l.mcl_params = {p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>(), p.at(3).get<double>()};
  }
  if (j.contains("uib_alpha")) l.uib_alpha = j["uib_alpha"].get<double>();
  if (j.contains("gamma")) l.gamma = j["gamma"].get<double>();
  if (j.contains("gamma1")) l.gamma1 = j["gamma1"].get<double>();
  if (j.contains("gamma2")) l.gamma2 = j["gamma2"].get<double>();
  if (j.contains("sml_lambda")) l.sml_lambda = j["sml_lambda"].get<double>();
  if (j.contains("margin_mode")) l.margin_mode = margin_mode_from_name(j["margin_mode"].get<std::string>());
}

// effective flat config, echoed into output directories for reproducibility
json config_json(const ExperimentConfig& cfg) {
  const TrainConfig& t = cfg.train;
  const LossConfig& l = t.loss;
  return json{{"dataset", cfg.dataset},
              {"kcore", cfg.kcore},
              {"out", cfg.out},
              {"seeds", cfg.seeds},
              {"split_seed", cfg.split_seed},
              {"dim", t.dim},
              {"lr", t.lr},
              {"batch_size", t.batch_size},
              {"num_negatives", t.num_negatives},
              {"max_epochs", t.max_epochs},
              {"patience", t.patience},
              {"weight_decay", t.weight_decay},
              {"encoder", encoder_kind_name(t.encoder)},
              {"layers", t.layers},
              {"negative_mode", t.negative_mode == NegativeMode::in_batch ? "in_batch" : "uniform"},
              {"lazy_adam", t.lazy_adam},
              {"kind", loss_kind_name(l.kind)},
              {"tau", l.tau},
              {"margin_const", l.margin_const},
              {"ccl_weight", l.ccl_weight},
              {"mcl_params", {l.mcl_params.alpha, l.mcl_params.beta, l.mcl_params.lambda_p, l.mcl_params.lambda_n}},
              {"uib_alpha", l.uib_alpha},
              {"gamma", l.gamma},
              {"gamma1", l.gamma1},
              {"gamma2", l.gamma2},
              {"sml_lambda", l.sml_lambda},
              {"margin_mode", margin_mode_name(l.margin_mode)}};
}

json summary_json(const MetricsSummary& s) {
  json j;
  for (const auto& [n, v] : s.recall) j["recall"][std::to_string(n)] = v;
  for (const auto& [n, v] : s.ndcg) j["ndcg"][std::to_string(n)] = v;
  j["users_evaluated"] = s.users_evaluated;
  return j;
}

json stats_json(const DatasetStats& st) {
  return json{{"num_users", st.num_users},   {"num_items", st.num_items},
              {"num_interactions", st.num_interactions}, {"density", st.density},
              {"gini_user", st.gini_user},   {"gini_item", st.gini_item},
              {"gini_ratio", st.gini_ratio}};
}

// Full evaluation of a trained state on the test split.
json test_report_json(const InteractionDataset& ds, const TrainConfig& cfg, const ModelState& state) {
  const auto encoder = make_encoder(ds, cfg.encoder, cfg.layers);
  Matrix users_out, items_out;
  encoder->forward(state, users_out, items_out);
  Index skipped = 0;
  const std::vector<int> cutoffs = {10, 20, 50};
  const auto per_user = evaluate_split(ds, users_out, items_out, SplitLabel::test, cutoffs, &skipped);
  const MetricsReport report = group_report(ds, per_user, cutoffs);
  json j;
  j["test"] = summary_json(report.overall);
  j["test"]["users_skipped"] = skipped;
  j["pop_group"] = summary_json(report.popular_group);
  j["unpop_group"] = summary_json(report.unpopular_group);
  return j;
}

std::string history_jsonl(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  for (const auto& rec : history) {
    json j{{"epoch", rec.epoch},
           {"train_loss", rec.train_loss},
           {"valid_ndcg20", rec.valid_ndcg20},
           {"elapsed_ms", rec.elapsed_ms}};
    out << j.dump() << '\n';
  }
  return out.str();
}

InteractionDataset load_dataset(const std::string& path) {
  if (path.empty()) throw ConfigError("no dataset given (use --dataset or the config file)");
  return dataset_from_json(read_file(path));
}

int cmd_prepare(const ExperimentConfig& cfg) {
  InteractionDataset ds;
  if (!cfg.synthetic.empty())
    ds = generate_synthetic(parse_synthetic_spec(cfg.synthetic));
  else if (!cfg.input.empty())
    ds = ingest_tsv(cfg.input);
  else
    throw ConfigError("prepare needs --input or --synthetic");

  ds = kcore_filter(ds, cfg.kcore);
  const fs::path out = resolve_out(cfg.out);
  if (ds.num_interactions() == 0) {
    std::cerr << "warning: dataset is empty after " << cfg.kcore << "-core filtering\n";
    write_file(out / "dataset.json", dataset_to_json(ds));
    write_file(out / "stats.json",
               json{{"num_users", 0}, {"num_items", 0}, {"num_interactions", 0},      {"density", 0.0},
                    {"gini_user", 0.0}, {"gini_item", 0.0}, {"gini_ratio", 0.0}}.dump(2) + "\n");
    return kExitOk;
  }
  chronological_split(ds, {7, 1, 2}, cfg.split_seed);

  write_file(out / "dataset.json", dataset_to_json(ds));
  write_file(out / "stats.json", stats_json(dataset_stats(ds)).dump(2) + "\n");
  std::cout << "prepared " << ds.num_users << " users, " << ds.num_items << " items, " << ds.num_interactions()
            << " interactions -> " << (out / "dataset.json").string() << "\n";
  return kExitOk;
}

int cmd_train(const ExperimentConfig& cfg, const std::string& resume_path) {
  if (cfg.seeds.empty()) throw ConfigError("train needs a non-empty seed list");
  const InteractionDataset ds = load_dataset(cfg.dataset);
  const fs::path out = resolve_out(cfg.out);
  write_file(out / "config_echo.json", config_json(cfg).dump(2) + "\n");

  std::optional<Checkpoint> resume;
  if (!resume_path.empty()) resume = checkpoint_from_json(read_file(resume_path));

  json mean_report;
  std::vector<json> seed_reports;
  std::map<std::string, std::map<std::string, std::vector<double>>> collect;  // section -> metric -> values

  int succeeded = 0;
  for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seeds[si];
    TrainResult result;
    try {
      result = train(ds, tc, si == 0 && resume ? &*resume : nullptr);
    } catch (const std::exception& e) {
      std::cerr << "seed " << tc.seed << " failed: " << e.what() << "\n";
      seed_reports.push_back(json{{"seed", tc.seed}, {"error", e.what()}});
      continue;
    }
    ++succeeded;
    if (result.diverged) std::cerr << "seed " << tc.seed << " diverged; keeping last finite state\n";

    json report = test_report_json(ds, tc, result.best_state);
    report["seed"] = tc.seed;
    report["best_epoch"] = result.best_epoch;
    report["best_valid_ndcg20"] = result.best_metric;
    report["diverged"] = result.diverged;

    const std::string tag = std::to_string(tc.seed);
    write_file(out / ("history_seed" + tag + ".jsonl"), history_jsonl(result.history));
    write_file(out / ("report_seed" + tag + ".json"), report.dump(2) + "\n");
    write_file(out / ("checkpoint_seed" + tag + ".json"), checkpoint_to_json(result.final_checkpoint));

    if (!result.diverged) {
      for (const char* section : {"test", "pop_group", "unpop_group"})
        for (const char* metric : {"recall", "ndcg"})
          for (const auto& [n, v] : report[section][metric].items())
            collect[section][std::string(metric) + "@" + n].push_back(v.get<double>());
      collect["valid"]["ndcg@20"].push_back(result.best_metric);
    }
    seed_reports.push_back(std::move(report));
  }

  mean_report["seeds"] = cfg.seeds;
  mean_report["per_seed"] = seed_reports;
  for (const auto& [section, metrics] : collect)
    for (const auto& [name, values] : metrics) mean_report["mean"][section][name] = pairwise_mean(values);
  write_file(out / "report_mean.json", mean_report.dump(2) + "\n");
  std::cout << "wrote " << (out / "report_mean.json").string() << "\n";
  return succeeded > 0 ? kExitOk : kExitData;
}

int cmd_grid(const ExperimentConfig& cfg, const std::vector<double>& gamma1_list,
             const std::vector<double>& gamma2_list) {
  if (gamma1_list.empty() || gamma2_list.empty()) throw ConfigError("grid needs --gamma1 and --gamma2 lists");
  for (double g : gamma1_list)
    if (g < 0.1 || g > 5.0) throw ConfigError("grid: gamma1 values must lie in [0.1, 5]");
  for (double g : gamma2_list)
    if (g < 0.1 || g > 5.0) throw ConfigError("grid: gamma2 values must lie in [0.1, 5]");

  const InteractionDataset ds = load_dataset(cfg.dataset);
  const fs::path out = resolve_out(cfg.out);
  write_file(out / "config_echo.json", config_json(cfg).dump(2) + "\n");

  std::ostringstream csv;
  csv << "gamma1,gamma2,ndcg20\n";
  csv.precision(17);

  double best = -1.0;
  std::pair<double, double> best_cell{0.0, 0.0};
  json failures = json::array();
  for (double g1 : gamma1_list) {
    for (double g2 : gamma2_list) {
      TrainConfig tc = cfg.train;
      tc.loss.kind = LossKind::MAWU;
      tc.loss.gamma1 = g1;
      tc.loss.gamma2 = g2;
      std::vector<double> cell_scores;
      try {
        for (std::uint64_t seed : cfg.seeds) {
          tc.seed = seed;
          const TrainResult result = train(ds, tc);
          const auto encoder = make_encoder(ds, tc.encoder, tc.layers);
          Matrix users_out, items_out;
          encoder->forward(result.best_state, users_out, items_out);
          const auto per_user = evaluate_split(ds, users_out, items_out, SplitLabel::test, {20});
          cell_scores.push_back(mean_ndcg(per_user, 20));
        }
      } catch (const std::exception& e) {
        failures.push_back(json{{"gamma1", g1}, {"gamma2", g2}, {"error", e.what()}});
        continue;
      }
      const double score = pairwise_mean(cell_scores);
      csv << g1 << ',' << g2 << ',' << score << '\n';
      // argmax; ties broken by (gamma1, gamma2) lexicographic order
      if (score > best) {
        best = score;
        best_cell = {g1, g2};
      }
    }
  }

  write_file(out / "grid.csv", csv.str());
  json summary{{"best_gamma1", best_cell.first}, {"best_gamma2", best_cell.second}, {"best_ndcg20", best},
               {"failures", failures}};
  write_file(out / "grid_summary.json", summary.dump(2) + "\n");
  std::cout << "best cell: gamma1=" << best_cell.first << " gamma2=" << best_cell.second << " ndcg20=" << best
            << "\n";
  return kExitOk;
}

int cmd_verify(const std::string& only, std::uint64_t seed, const std::string& out_dir) {
  std::vector<std::string> names;
  if (!only.empty()) {
    std::size_t pos = 0;
    while (pos < only.size()) {
      std::size_t comma = only.find(',', pos);
      if (comma == std::string::npos) comma = only.size();
      names.push_back(only.substr(pos, comma - pos));
      pos = comma + 1;
    }
  }
  const auto reports = run_relations(names, seed);
  const fs::path out = resolve_out(out_dir);
  write_file(out / "relations.json", relations_to_json(reports) + "\n");
  write_file(out / "relations.csv", relations_to_csv(reports));

  bool all_passed = true;
  for (const auto& r : reports) {
    std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << r.relation << "  " << r.note << "\n";
    all_passed = all_passed && r.passed;
  }
  return all_passed ? kExitOk : kExitVerification;
}

int cmd_report(const ExperimentConfig& cfg, const std::string& checkpoint_path) {
  const InteractionDataset ds = load_dataset(cfg.dataset);
  const Checkpoint ckpt = checkpoint_from_json(read_file(checkpoint_path));
  const fs::path out = resolve_out(cfg.out);

  json report = test_report_json(ds, cfg.train, ckpt.best_state);
  report["best_epoch"] = ckpt.best_epoch;
  report["best_valid_ndcg20"] = ckpt.best_metric;
  report["stats"] = stats_json(dataset_stats(ds));
  write_file(out / "report.json", report.dump(2) + "\n");

  const MarginProfile profile = margin_popularity_profile(ckpt.best_state, ds);
  write_file(out / "margin_profile.csv", margin_profile_to_csv(profile));
  json corr{{"user_correlation", profile.user_correlation}, {"item_correlation", profile.item_correlation}};
  write_file(out / "margin_correlation.json", corr.dump(2) + "\n");
  std::cout << "wrote " << (out / "report.json").string() << "\n";
  return kExitOk;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    out.push_back(std::stod(text.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"collaborative-filtering loss laboratory"};
  app.require_subcommand(1);

  std::string config_path, input, synthetic, dataset, resume, checkpoint, only, seeds_csv;
  std::string gamma1_csv, gamma2_csv, out_dir, loss_kind, margin_mode, encoder_name, negative_mode;
  std::int64_t kcore = -1;
  std::uint64_t verify_seed = 1;
  double lr = -1, weight_decay = -1, tau = -1, gamma = -1, gamma1 = -1, gamma2 = -1;
  std::int64_t dim = -1, batch_size = -1, num_negatives = -1, max_epochs = -1, patience = -1, layers = -1;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "flat JSON config; flags override keys");
    cmd->add_option("--dataset", dataset, "prepared dataset artifact (JSON)");
    cmd->add_option("--out", out_dir, "output directory (relative paths resolve under $CFLAB_OUT)");
    cmd->add_option("--seeds", seeds_csv, "comma-separated seed list");
    cmd->add_option("--loss", loss_kind, "loss kind (BCE MCL UIB BPR CML SML CCL SSM BC DirectAU MAWU)");
    cmd->add_option("--encoder", encoder_name, "MF or LightGCN");
    cmd->add_option("--layers", layers, "LightGCN layers");
    cmd->add_option("--dim", dim);
    cmd->add_option("--lr", lr);
    cmd->add_option("--batch-size", batch_size);
    cmd->add_option("--num-negatives", num_negatives);
    cmd->add_option("--negative-mode", negative_mode, "uniform or in_batch");
    cmd->add_option("--max-epochs", max_epochs);
    cmd->add_option("--patience", patience);
    cmd->add_option("--weight-decay", weight_decay);
    cmd->add_option("--tau", tau);
    cmd->add_option("--gamma", gamma);
    cmd->add_option("--gamma1", gamma1);
    cmd->add_option("--gamma2", gamma2);
    cmd->add_option("--margin-mode", margin_mode, "zero inverse_popularity uib_fashion bc_fashion learned");
  };

  CLI::App* prepare = app.add_subcommand("prepare", "ingest/generate, k-core filter, split, emit stats");
  prepare->add_option("--input", input, "TSV interaction log (user\\titem[\\ttimestamp])");
  prepare->add_option("--synthetic", synthetic, "synthetic spec, e.g. zipf:1.0,users=1000,items=1500");
  prepare->add_option("--kcore", kcore, "k-core threshold");
  prepare->add_option("--split-seed", verify_seed, "seed for timestamp tie-breaking");
  add_common(prepare);

  CLI::App* train_cmd = app.add_subcommand("train", "train per seed, emit history/report/checkpoint");
  train_cmd->add_option("--resume", resume, "checkpoint to continue from (first seed)");
  add_common(train_cmd);

  CLI::App* grid = app.add_subcommand("grid", "gamma1 x gamma2 grid search for MAWU");
  grid->add_option("--grid-gamma1", gamma1_csv, "comma-separated gamma1 values")->required();
  grid->add_option("--grid-gamma2", gamma2_csv, "comma-separated gamma2 values")->required();
  add_common(grid);

  CLI::App* verify = app.add_subcommand("verify", "run the relation checks");
  verify->add_option("--only", only, "comma-separated subset of relations");
  verify->add_option("--seed", verify_seed, "master seed");
  verify->add_option("--out", out_dir, "output directory");

  CLI::App* report_cmd = app.add_subcommand("report", "metrics + margin profile from a checkpoint");
  report_cmd->add_option("--checkpoint", checkpoint, "checkpoint JSON")->required();
  add_common(report_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    ExperimentConfig cfg;
    if (!config_path.empty()) apply_json(cfg, json::parse(read_file(config_path)));

    // flags override config keys
    if (!dataset.empty()) cfg.dataset = dataset;
    if (!input.empty()) cfg.input = input;
    if (!synthetic.empty()) cfg.synthetic = synthetic;
    if (kcore >= 0) cfg.kcore = kcore;
    if (!out_dir.empty()) cfg.out = out_dir;
    if (!seeds_csv.empty()) {
      cfg.seeds.clear();
      for (double v : parse_double_list(seeds_csv)) cfg.seeds.push_back(static_cast<std::uint64_t>(v));
    }
    if (!loss_kind.empty()) cfg.train.loss.kind = loss_kind_from_name(loss_kind);
    if (!encoder_name.empty()) cfg.train.encoder = encoder_kind_from_name(encoder_name);
    if (!negative_mode.empty())
      cfg.train.negative_mode = negative_mode == "in_batch" ? NegativeMode::in_batch : NegativeMode::uniform;
    if (!margin_mode.empty()) cfg.train.loss.margin_mode = margin_mode_from_name(margin_mode);
    if (dim > 0) cfg.train.dim = dim;
    if (lr > 0) cfg.train.lr = lr;
    if (batch_size > 0) cfg.train.batch_size = batch_size;
    if (num_negatives > 0) cfg.train.num_negatives = static_cast<int>(num_negatives);
    if (max_epochs > 0) cfg.train.max_epochs = static_cast<int>(max_epochs);
    if (patience > 0) cfg.train.patience = static_cast<int>(patience);
    if (layers >= 0) cfg.train.layers = static_cast<int>(layers);
    if (weight_decay >= 0) cfg.train.weight_decay = weight_decay;
    if (tau > 0) cfg.train.loss.tau = tau;
    if (gamma >= 0) cfg.train.loss.gamma = gamma;
    if (gamma1 >= 0) cfg.train.loss.gamma1 = gamma1;
    if (gamma2 >= 0) cfg.train.loss.gamma2 = gamma2;

    if (prepare->parsed()) {
      cfg.split_seed = verify_seed;
      return cmd_prepare(cfg);
    }
    if (train_cmd->parsed()) return cmd_train(cfg, resume);
    if (grid->parsed()) return cmd_grid(cfg, parse_double_list(gamma1_csv), parse_double_list(gamma2_csv));
    if (verify->parsed()) return cmd_verify(only, verify_seed, out_dir.empty() ? cfg.out : out_dir);
    if (report_cmd->parsed()) return cmd_report(cfg, checkpoint);
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}
