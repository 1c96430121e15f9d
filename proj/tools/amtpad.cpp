#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "amtpad/data/preprocess.hpp"
#include "amtpad/data/protocols.hpp"
#include "amtpad/data/synthetic.hpp"
#include "amtpad/metrics.hpp"
#include "amtpad/pipeline/config.hpp"
#include "amtpad/pipeline/evaluate.hpp"
#include "amtpad/pipeline/model.hpp"
#include "amtpad/pipeline/scores.hpp"
#include "amtpad/pipeline/trainer.hpp"

namespace fs = std::filesystem;
using namespace amtpad;

namespace {

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) out.push_back(std::stod(item));
  return out;
}

/// "source=1,target=0" style flags.
void apply_modality_flags(ModalityInConfig& cfg, const std::string& spec) {
  for (const auto& item : split_list(spec)) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("modality flag '" + item + "' is not name=0|1");
    const std::string name = item.substr(0, eq), value = item.substr(eq + 1);
    if (value != "0" && value != "1") throw std::invalid_argument("modality flag value must be 0 or 1");
    if (name == "source") cfg.source_plgf = value == "1";
    else if (name == "target") cfg.target_plgf = value == "1";
    else throw std::invalid_argument("unknown modality '" + name + "' (expected source or target)");
  }
}

pipeline::TrainConfig build_config(const std::string& path, const std::vector<std::string>& overrides) {
  pipeline::TrainConfig cfg = path.empty() ? pipeline::TrainConfig{} : pipeline::load_config(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw pipeline::ConfigError("--set expects key=value, got '" + kv + "'");
    pipeline::set_value(cfg, pipeline::detail::trim(kv.substr(0, eq)), pipeline::detail::trim(kv.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

data::DatasetIndex open_index(const fs::path& root) {
  auto [index, report] = data::load_dataset_index(root);
  for (const auto& issue : report.skipped)
    std::cerr << "warning: skipped " << issue.sample_id << ": " << issue.message << '\n';
  return index;
}

std::vector<std::string> subset_ids(const data::ProtocolSplit& split) {
  std::vector<std::string> ids = split.train_ids;
  ids.insert(ids.end(), split.dev_ids.begin(), split.dev_ids.end());
  ids.insert(ids.end(), split.test_ids.begin(), split.test_ids.end());
  return ids;
}

void print_table(std::ostream& os, const MetricReport& r) {
  char line[128];
  os << "metric        value\n";
  const std::pair<const char*, double> rows[] = {{"threshold", r.threshold}, {"APCER", r.apcer}, {"BPCER", r.bpcer},
                                                 {"ACER", r.acer},           {"EER", r.eer},     {"AUC", r.auc},
                                                 {"TDR@FDR=1%", r.tdr_at_fdr1}};
  for (const auto& [name, v] : rows) {
    std::snprintf(line, sizeof line, "%-12s  %.6f\n", name, v);
    os << line;
  }
  os << "genuine/attack  " << r.n_genuine << "/" << r.n_attack << '\n';
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bi-modality presentation attack detection by asymmetric modality translation"};
  app.require_subcommand(1);

  // generate-synthetic
  data::SyntheticConfig syn;
  std::string syn_out, syn_types, syn_levels;
  auto* gen = app.add_subcommand("generate-synthetic", "Write a seeded synthetic bi-modality dataset");
  gen->add_option("--out", syn_out, "Output dataset root")->required();
  gen->add_option("--seed", syn.seed, "Generator seed");
  gen->add_option("--n-genuine", syn.n_genuine, "Number of genuine pairs");
  gen->add_option("--n-attacks-per-type", syn.n_attacks_per_type, "Attack pairs per attack type");
  gen->add_option("--attack-types", syn_types, "Comma-separated attack types (print,replay,mask,gamma,blur,shift,noise)");
  gen->add_option("--illumination-levels", syn_levels, "Comma-separated illumination multipliers");
  gen->add_option("--no-genuine-illumination", syn.no_genuine_illumination,
                  "0-based illumination level without genuine samples (-1 = none)");
  gen->add_option("--noise-sigma", syn.noise_sigma, "Target sensor noise");
  gen->add_option("--gamma", syn.gamma, "Genuine transform exponent");

  // preprocess
  std::string pre_in, pre_out, pre_flags = "source=1,target=1";
  ModalityInConfig pre_cfg;
  auto* pre = app.add_subcommand("preprocess", "Apply PLGF illumination normalisation to a dataset");
  pre->add_option("--in", pre_in, "Input dataset root")->required();
  pre->add_option("--out", pre_out, "Output dataset root")->required();
  pre->add_option("--modality-flags", pre_flags, "Which modalities get PLGF, e.g. source=1,target=0");
  pre->add_option("--epsilon", pre_cfg.epsilon, "Division guard");

  // train
  std::string tr_config, tr_data, tr_out, tr_protocol;
  std::vector<std::string> tr_set;
  int tr_epochs = 0;
  auto* tr = app.add_subcommand("train", "Train translator and discriminator");
  tr->add_option("--config", tr_config, "key=value config file");
  tr->add_option("--data", tr_data, "Dataset root (manifest.csv)")->required();
  tr->add_option("--out", tr_out, "Output directory for checkpoints and history")->required();
  tr->add_option("--protocol", tr_protocol, "grand-test | loo-<type> | lto-<a>-<b>-<c> | illum-<tag>");
  tr->add_option("--epochs", tr_epochs, "Override max_epochs");
  tr->add_option("--set", tr_set, "Override a config key (key=value), repeatable");

  // evaluate
  std::string ev_ckpt, ev_data, ev_out, ev_protocol, ev_config;
  auto* ev = app.add_subcommand("evaluate", "Score dev/test with a checkpoint and report metrics");
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required();
  ev->add_option("--data", ev_data, "Dataset root")->required();
  ev->add_option("--out", ev_out, "Output directory for score CSVs and report.json")->required();
  ev->add_option("--protocol", ev_protocol, "Protocol (defaults to the one recorded in the checkpoint)");
  ev->add_option("--config", ev_config, "Config the checkpoint must agree with");

  // report
  std::string rp_scores, rp_dev, rp_json, rp_roc;
  double rp_bpcer = 0.01;
  auto* rp = app.add_subcommand("report", "Metrics of a test score CSV, threshold calibrated on dev");
  rp->add_option("scores", rp_scores, "Test score CSV")->required();
  rp->add_option("--dev", rp_dev, "Dev score CSV for threshold calibration")->required();
  rp->add_option("--json", rp_json, "Write the MetricReport here instead of stdout");
  rp->add_option("--roc", rp_roc, "Write the ROC polyline (fdr,tdr) as CSV");
  rp->add_option("--target-bpcer", rp_bpcer, "Dev BPCER at the operating threshold");

  // fuse-scores
  std::vector<std::string> fs_inputs;
  std::string fs_out;
  auto* fu = app.add_subcommand("fuse-scores", "Mean-fuse the scores of several models per sample_id");
  fu->add_option("inputs", fs_inputs, "Score CSVs")->required()->expected(1, -1);
  fu->add_option("--out", fs_out, "Fused score CSV (stdout if omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      if (!syn_types.empty()) syn.attack_types = split_list(syn_types);
      if (!syn_levels.empty()) syn.illumination_levels = parse_doubles(syn_levels);
      const auto index = data::generate_synthetic_dataset(syn, syn_out);
      std::cout << "wrote " << index.records.size() << " samples to " << syn_out << '\n';
    } else if (*pre) {
      apply_modality_flags(pre_cfg, pre_flags);
      const auto n = data::preprocess_dataset(pre_in, pre_out, pre_cfg);
      std::cout << "preprocessed " << n << " samples into " << pre_out << '\n';
    } else if (*tr) {
      if (tr_epochs > 0) tr_set.push_back("max_epochs=" + std::to_string(tr_epochs));
      if (!tr_protocol.empty()) tr_set.push_back("protocol=" + tr_protocol);
      const auto cfg = build_config(tr_config, tr_set);
      const auto index = open_index(tr_data);
      const auto split = data::make_split(index, cfg.protocol);
      fs::create_directories(tr_out);
      write_json(fs::path(tr_out) / "split.json", data::split_to_json(split));
      std::ofstream(fs::path(tr_out) / "config.cfg") << pipeline::to_text(cfg);
      const auto samples = pipeline::prepare_ids(index, subset_ids(split), cfg.modality_in);
      pipeline::TrainOptions opts;
      opts.out_dir = tr_out;
      opts.on_epoch = [](const pipeline::EpochRecord& r) {
        std::printf("epoch %3d  lr %.3g  loss %.5f (trans %.5f lat %.4f dis %.5f)  dev AUC %.4f  %.1fs\n", r.epoch,
                    r.lr, r.total, r.translation, r.latent, r.discrimination, r.dev_auc, r.wall_seconds);
        std::fflush(stdout);
      };
      const auto result = pipeline::train(cfg, split, index, samples, opts);
      std::cout << "best dev AUC " << result.history.best_dev_auc << " at epoch " << result.history.best_epoch
                << "; checkpoints in " << tr_out << '\n';
    } else if (*ev) {
      int epoch = 0;
      const auto model = pipeline::load_checkpoint<float>(ev_ckpt, &epoch);
      if (!ev_config.empty()) {
        const auto expected = pipeline::load_config(ev_config);
        const auto diff = pipeline::model_mismatches(model.config(), expected);
        if (!diff.empty()) {
          std::string msg = "checkpoint does not match the given config:";
          for (const auto& d : diff) msg += "\n  " + d;
          throw pipeline::ConfigError(msg);
        }
      }
      const auto index = open_index(ev_data);
      const auto split = data::make_split(index, ev_protocol.empty() ? model.config().protocol : ev_protocol);
      std::vector<std::string> ids = split.dev_ids;
      ids.insert(ids.end(), split.test_ids.begin(), split.test_ids.end());
      const auto samples = pipeline::prepare_ids(index, ids, model.config().modality_in);
      const auto result = pipeline::evaluate_model(model, samples, split, model.config().target_bpcer);
      const fs::path out(ev_out);
      pipeline::write_score_csv(out / "dev_scores.csv", result.dev);
      pipeline::write_score_csv(out / "test_scores.csv", result.test);
      nlohmann::json j = result.report;
      j["protocol"] = split.name;
      j["checkpoint_epoch"] = epoch;
      j["reconstruction_error"] = {{"genuine", result.test_reconstruction.genuine},
                                   {"attack", result.test_reconstruction.attack}};
      write_json(out / "report.json", j);
      print_table(std::cout, result.report);
    } else if (*rp) {
      const auto test = pipeline::to_score_set(pipeline::read_score_csv(rp_scores));
      const auto dev = pipeline::to_score_set(pipeline::read_score_csv(rp_dev));
      const auto report = evaluate_scores(dev, test, rp_bpcer);
      const nlohmann::json j = report;
      if (rp_json.empty()) std::cout << j.dump(2) << '\n';
      else {
        write_json(rp_json, j);
        print_table(std::cout, report);
      }
      if (!rp_roc.empty()) {
        std::ofstream roc(rp_roc);
        roc << "fdr,tdr\n";
        char line[64];
        for (const auto& [fdr, tdr] : roc_polyline(test)) {
          std::snprintf(line, sizeof line, "%.17g,%.17g\n", fdr, tdr);
          roc << line;
        }
      }
    } else if (*fu) {
      std::vector<std::vector<pipeline::ScoreRow>> models;
      for (const auto& p : fs_inputs) models.push_back(pipeline::read_score_csv(p));
      const auto fused = pipeline::fuse_score_rows(models);
      if (fs_out.empty()) pipeline::write_score_csv(std::cout, fused);
      else pipeline::write_score_csv(fs::path(fs_out), fused);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
