#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "amtpad/data/synthetic.hpp"
#include "amtpad/pipeline/config.hpp"
#include "amtpad/pipeline/evaluate.hpp"
#include "amtpad/pipeline/model.hpp"
#include "amtpad/pipeline/samples.hpp"
#include "amtpad/pipeline/scores.hpp"
#include "amtpad/pipeline/trainer.hpp"
#include "temp_dir.hpp"

using namespace amtpad;
using namespace amtpad::pipeline;
using testing_support::TempDir;

namespace {

const char* kTinyConfig = R"(
base_width = 2
latent_channels = 4
n_translation_blocks = 1
projector_width = 2
embedding_dim = 8
disc_init_features = 4
disc_growth_rate = 2
disc_bn_size = 2
disc_block1_layers = 1
disc_block2_layers = 1
batch_size = 8
genuine_upsampling = 2
max_epochs = 1
)";

TrainConfig tiny_config() { return parse_config(kTinyConfig); }

struct InMemoryData {
  data::DatasetIndex index;
  std::map<std::string, PreparedSample> samples;
};

/// Synthetic samples kept in memory; subsets as generated.
InMemoryData synthetic_data(int n_genuine, int n_per_type, const ModalityInConfig& in_cfg) {
  data::SyntheticConfig syn;
  syn.n_genuine = n_genuine;
  syn.n_attacks_per_type = n_per_type;
  syn.seed = 11;
  InMemoryData d;
  for (const auto& s : data::generate_synthetic_samples(syn)) {
    d.index.records.push_back(data::record_of(s));
    d.samples.emplace(s.sample_id, prepare(s, in_cfg));
  }
  return d;
}

std::vector<ScoreRow> random_rows(std::mt19937_64& rng, int n, const std::string& prefix) {
  std::uniform_real_distribution<double> u;
  std::vector<ScoreRow> rows;
  for (int i = 0; i < n; ++i) {
    const int y = i % 3 == 0 ? 0 : 1;
    rows.push_back({prefix + std::to_string(i), u(rng) * 0.7 + 0.3 * y, y, y ? "print" : "", "illum2"});
  }
  return rows;
}

int run_cli(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = std::string("\"") + AMTPAD_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  return std::system(cmd.c_str());
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Config, ParsesKeysAndRejectsUnknown) {
  const auto cfg = tiny_config();
  EXPECT_EQ(cfg.translator.base_width, 2);
  EXPECT_EQ(cfg.batch_size, 8);
  EXPECT_EQ(cfg.lr, 1e-4);
  EXPECT_THROW(parse_config("learning_rate = 0.1"), ConfigError);
  EXPECT_THROW(parse_config("batch_size = eight"), ConfigError);
  EXPECT_THROW(parse_config("batch_size = 2"), ConfigError);
  EXPECT_THROW(parse_config("supervision = v3"), ConfigError);
  EXPECT_THROW(parse_config("just a line"), ConfigError);
}

TEST(Config, TextRoundTrip) {
  auto cfg = tiny_config();
  cfg.loss.tau = 0.07;
  cfg.supervision = Supervision::V2;
  cfg.fusion_op = FusionOp::Subtract;
  cfg.seed = 123456789012345ull;
  const auto back = parse_config(to_text(cfg));
  EXPECT_EQ(to_text(back), to_text(cfg));
  EXPECT_EQ(back.loss.tau, 0.07);
  EXPECT_TRUE(model_mismatches(back, cfg).empty());
}

TEST(Config, ModelMismatchesOnlyCoverArchitecture) {
  auto a = tiny_config(), b = tiny_config();
  b.lr = 0.5;
  b.max_epochs = 9;
  EXPECT_TRUE(model_mismatches(a, b).empty());
  b.translator.base_width = 3;
  b.modality_in.target_plgf = false;
  const auto diff = model_mismatches(a, b);
  ASSERT_EQ(diff.size(), 2u);
  EXPECT_EQ(diff[0].rfind("base_width", 0), 0u);
}

TEST(Config, ShippedSyntheticConfigParses) {
  const auto cfg = load_config(std::filesystem::path(AMTPAD_SOURCE_DIR) / "configs/synthetic.cfg");
  EXPECT_EQ(cfg.supervision, Supervision::V0);
  EXPECT_EQ(cfg.loss.lambda1, 0.5);
  EXPECT_EQ(cfg.loss.lambda2, 0.001);
  EXPECT_EQ(cfg.loss.lambda3, 1.0);
  EXPECT_EQ(cfg.loss.tau, 0.1);
  EXPECT_EQ(cfg.loss.c_trunc, -10.0);
}

TEST(Checkpoint, RoundTripRestoresEveryTensor) {
  TempDir dir;
  Model<float> m(tiny_config());
  m.reset_parameters(5);
  save_checkpoint(dir / "m.ckpt", m, 3);
  int epoch = 0;
  auto back = load_checkpoint<float>(dir / "m.ckpt", &epoch);
  EXPECT_EQ(epoch, 3);
  EXPECT_EQ(to_text(back.config()), to_text(m.config()));
  const auto a = m.state(), b = back.state();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].name, b[k].name);
    EXPECT_EQ(*a[k].value, *b[k].value) << a[k].name;
  }
  EXPECT_EQ(read_checkpoint_info(dir / "m.ckpt").epoch, 3);
  std::ofstream(dir / "bad.ckpt") << "not a checkpoint";
  EXPECT_THROW(load_checkpoint<float>(dir / "bad.ckpt"), CheckpointError);
}

TEST(Sampler, BatchesHoldBothClassesAndAreDeterministic) {
  std::vector<std::string> g, a;
  for (int i = 0; i < 13; ++i) g.push_back("g" + std::to_string(i));
  for (int i = 0; i < 70; ++i) a.push_back("a" + std::to_string(i));
  StratifiedBatchSampler s(g, a, 8, 4);
  EXPECT_EQ(s.genuine_per_batch(), 2);
  EXPECT_EQ(s.batches_per_epoch(), 12);
  const auto e1 = s.epoch(1);
  ASSERT_EQ(e1.size(), 12u);
  std::set<std::string> seen;
  for (const auto& b : e1) {
    ASSERT_EQ(b.size(), 8u);
    int ng = 0;
    for (const auto& id : b) {
      ng += id[0] == 'g';
      seen.insert(id);
    }
    EXPECT_GE(ng, 2);
    EXPECT_LE(ng, 7);
  }
  EXPECT_EQ(seen.size(), 83u);
  EXPECT_EQ(s.epoch(1), e1);
  EXPECT_NE(s.epoch(2), e1);
  EXPECT_EQ(StratifiedBatchSampler(g, a, 8, 4).epoch(3), s.epoch(3));
  EXPECT_THROW(StratifiedBatchSampler({}, a, 8, 4), TrainingError);
  EXPECT_THROW(StratifiedBatchSampler(g, a, 3, 4), TrainingError);
}

TEST(Schedule, HalvesEveryTenEpochs) {
  EXPECT_DOUBLE_EQ(nn::step_decay_lr(1e-4, 1, 10, 0.5), 1e-4);
  EXPECT_DOUBLE_EQ(nn::step_decay_lr(1e-4, 10, 10, 0.5), 1e-4);
  EXPECT_DOUBLE_EQ(nn::step_decay_lr(1e-4, 11, 10, 0.5), 5e-5);
  EXPECT_DOUBLE_EQ(nn::step_decay_lr(1e-4, 25, 10, 0.5), 2.5e-5);
}

TEST(Samples, NetworkRangeAndSizeContract) {
  BiModalSample s;
  s.sample_id = "x";
  s.source = GrayImage(kImageSize, kImageSize, 0.25);
  s.target = GrayImage(kImageSize, kImageSize, 1.0);
  ModalityInConfig raw;
  raw.source_plgf = raw.target_plgf = false;
  const auto p = prepare(s, raw);
  EXPECT_FLOAT_EQ(p.source[0], -0.5f);
  EXPECT_FLOAT_EQ(p.target[0], 1.0f);
  s.source = GrayImage(64, 64);
  EXPECT_THROW(prepare(s, raw), ContractError);
}

class SmokeTraining : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { data_ = new InMemoryData(synthetic_data(16, 12, tiny_config().modality_in)); }
  static void TearDownTestSuite() { delete data_; }
  static InMemoryData* data_;
};
InMemoryData* SmokeTraining::data_ = nullptr;

TEST_F(SmokeTraining, OneEpochWritesLoadableCheckpoint) {
  TempDir dir;
  const auto cfg = tiny_config();
  const auto split = data::make_grand_test_split(data_->index);
  TrainOptions opts;
  opts.out_dir = dir.path();
  const auto result = train(cfg, split, data_->index, data_->samples, opts);
  ASSERT_EQ(result.history.epochs.size(), 1u);
  const auto& rec = result.history.epochs[0];
  EXPECT_GT(rec.steps, 0);
  EXPECT_TRUE(std::isfinite(rec.total));
  EXPECT_DOUBLE_EQ(rec.lr, 1e-4);
  EXPECT_TRUE(std::filesystem::exists(dir / "history.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "best.ckpt"));
  auto loaded = load_checkpoint<float>(dir / "final.ckpt");
  auto st = loaded.state(), orig = result.final_model->state();
  for (std::size_t k = 0; k < st.size(); ++k) EXPECT_EQ(*st[k].value, *orig[k].value) << st[k].name;
  const auto ev1 = evaluate_model(loaded, data_->samples, split);
  const auto ev2 = evaluate_model(*result.final_model, data_->samples, split);
  ASSERT_EQ(ev1.test.size(), ev2.test.size());
  for (std::size_t k = 0; k < ev1.test.size(); ++k) EXPECT_EQ(ev1.test[k].score, ev2.test[k].score);
}

TEST_F(SmokeTraining, SameSeedSameLoss) {
  const auto cfg = tiny_config();
  const auto split = data::make_grand_test_split(data_->index);
  const auto a = train(cfg, split, data_->index, data_->samples);
  const auto b = train(cfg, split, data_->index, data_->samples);
  EXPECT_EQ(a.history.epochs[0].total, b.history.epochs[0].total);
  EXPECT_EQ(a.history.epochs[0].dev_auc, b.history.epochs[0].dev_auc);
}

TEST_F(SmokeTraining, ScoreCsvRoundTripReproducesReport) {
  TempDir dir;
  Model<float> m(tiny_config());
  m.reset_parameters(2);
  const auto split = data::make_grand_test_split(data_->index);
  const auto ev = evaluate_model(m, data_->samples, split);
  write_score_csv(dir / "dev.csv", ev.dev);
  write_score_csv(dir / "test.csv", ev.test);
  const auto dev = read_score_csv(dir / "dev.csv"), test = read_score_csv(dir / "test.csv");
  ASSERT_EQ(test.size(), ev.test.size());
  for (std::size_t k = 0; k < test.size(); ++k) {
    EXPECT_EQ(test[k].score, ev.test[k].score);
    EXPECT_EQ(test[k].sample_id, ev.test[k].sample_id);
    EXPECT_EQ(test[k].attack_type, ev.test[k].attack_type);
  }
  const auto again = evaluate_scores(to_score_set(dev), to_score_set(test));
  EXPECT_EQ(again.auc, ev.report.auc);
  EXPECT_EQ(again.acer, ev.report.acer);
  EXPECT_EQ(again.threshold, ev.report.threshold);
  EXPECT_EQ(again.eer, ev.report.eer);
}

TEST_F(SmokeTraining, ConstantScoreModelIsChance) {
  Model<float> m(tiny_config());
  std::vector<nn::StateEntry<float>> st;
  m.discriminator().collect_state("", st);
  for (auto& e : st) e.value->zero();
  const auto ev = evaluate_model(m, data_->samples, data::make_grand_test_split(data_->index));
  for (const auto& r : ev.test) EXPECT_FLOAT_EQ(static_cast<float>(r.score), 0.5f);
  EXPECT_EQ(ev.report.auc, 0.5);
  EXPECT_NEAR(ev.report.eer, 0.5, 1e-12);
}

TEST(ScoreCsv, RejectsMalformedFiles) {
  TempDir dir;
  std::ofstream(dir / "a.csv") << "id,score\n";
  EXPECT_THROW(read_score_csv(dir / "a.csv"), std::runtime_error);
  std::ofstream(dir / "b.csv") << kScoreHeader << "\nx,abc,0,,\n";
  EXPECT_THROW(read_score_csv(dir / "b.csv"), std::runtime_error);
  std::ofstream(dir / "c.csv") << kScoreHeader << "\nx,0.5,2,,\n";
  EXPECT_THROW(read_score_csv(dir / "c.csv"), std::runtime_error);
}

TEST(ScoreFusion, InnerJoinMean) {
  std::vector<ScoreRow> a{{"s1", 0.2, 0, "", ""}, {"s2", 0.8, 1, "print", ""}, {"s3", 0.4, 1, "mask", ""}};
  std::vector<ScoreRow> b{{"s2", 0.6, 1, "print", ""}, {"s1", 0.4, 0, "", ""}};
  const auto f = fuse_score_rows({a, b});
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(f[0].sample_id, "s1");
  EXPECT_NEAR(f[0].score, 0.3, 1e-15);
  EXPECT_NEAR(f[1].score, 0.7, 1e-15);
  b[0].label = 0;
  EXPECT_THROW(fuse_score_rows({a, b}), std::invalid_argument);
  EXPECT_THROW(fuse_score_rows({a, {a[0], a[0]}}), std::invalid_argument);
}

TEST(Cli, GenerateReportAndFuse) {
  TempDir dir;
  ASSERT_EQ(run_cli("generate-synthetic --out \"" + (dir / "ds").string() +
                        "\" --n-genuine 5 --n-attacks-per-type 2 --attack-types print,shift",
                    dir / "gen.log"),
            0)
      << slurp(dir / "gen.log");
  const auto [index, report] = data::load_dataset_index(dir / "ds");
  EXPECT_EQ(index.records.size(), 9u);

  std::mt19937_64 rng(8);
  const auto dev = random_rows(rng, 30, "d"), t1 = random_rows(rng, 30, "t"), t2 = random_rows(rng, 30, "t");
  write_score_csv(dir / "dev.csv", dev);
  write_score_csv(dir / "t1.csv", t1);
  write_score_csv(dir / "t2.csv", t2);
  ASSERT_EQ(run_cli("report \"" + (dir / "t1.csv").string() + "\" --dev \"" + (dir / "dev.csv").string() +
                        "\" --json \"" + (dir / "r.json").string() + "\"",
                    dir / "rep.log"),
            0)
      << slurp(dir / "rep.log");
  const auto j = nlohmann::json::parse(slurp(dir / "r.json"));
  const auto expect = evaluate_scores(to_score_set(dev), to_score_set(t1));
  EXPECT_EQ(j.at("auc").get<double>(), expect.auc);
  EXPECT_EQ(j.at("acer").get<double>(), expect.acer);

  ASSERT_EQ(run_cli("fuse-scores \"" + (dir / "t1.csv").string() + "\" \"" + (dir / "t2.csv").string() +
                        "\" --out \"" + (dir / "f.csv").string() + "\"",
                    dir / "fuse.log"),
            0)
      << slurp(dir / "fuse.log");
  const auto fused = read_score_csv(dir / "f.csv");
  ASSERT_EQ(fused.size(), 30u);
  for (std::size_t k = 0; k < fused.size(); ++k) EXPECT_NEAR(fused[k].score, (t1[k].score + t2[k].score) / 2, 1e-15);

  EXPECT_NE(run_cli("report \"" + (dir / "missing.csv").string() + "\" --dev \"" + (dir / "dev.csv").string() + "\"",
                    dir / "bad.log"),
            0);
  EXPECT_NE(run_cli("no-such-command", dir / "bad.log"), 0);
}

TEST(Cli, TrainEvaluateAndConfigMismatch) {
  TempDir dir;
  std::ofstream(dir / "tiny.cfg") << kTinyConfig;
  ASSERT_EQ(run_cli("generate-synthetic --out \"" + (dir / "ds").string() + "\" --n-genuine 12 --n-attacks-per-type 6",
                    dir / "gen.log"),
            0);
  ASSERT_EQ(run_cli("train --config \"" + (dir / "tiny.cfg").string() + "\" --data \"" + (dir / "ds").string() +
                        "\" --out \"" + (dir / "run").string() + "\" --protocol loo-mask",
                    dir / "train.log"),
            0)
      << slurp(dir / "train.log");
  EXPECT_EQ(read_checkpoint_info(dir / "run/final.ckpt").config.protocol, "loo-mask");
  ASSERT_EQ(run_cli("evaluate --checkpoint \"" + (dir / "run/best.ckpt").string() + "\" --data \"" +
                        (dir / "ds").string() + "\" --out \"" + (dir / "eval").string() + "\" --config \"" +
                        (dir / "tiny.cfg").string() + "\"",
                    dir / "eval.log"),
            0)
      << slurp(dir / "eval.log");
  const auto test = read_score_csv(dir / "eval/test_scores.csv");
  for (const auto& r : test) EXPECT_TRUE(r.label == 0 || r.attack_type == "mask") << r.sample_id;
  const auto j = nlohmann::json::parse(slurp(dir / "eval/report.json"));
  EXPECT_EQ(j.at("protocol").get<std::string>(), "loo-mask");

  std::ofstream(dir / "other.cfg") << kTinyConfig << "base_width = 3\n";
  EXPECT_NE(run_cli("evaluate --checkpoint \"" + (dir / "run/best.ckpt").string() + "\" --data \"" +
                        (dir / "ds").string() + "\" --out \"" + (dir / "eval2").string() + "\" --config \"" +
                        (dir / "other.cfg").string() + "\"",
                    dir / "eval2.log"),
            0);
  EXPECT_NE(slurp(dir / "eval2.log").find("base_width"), std::string::npos);
}
