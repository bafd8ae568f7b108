#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "imagine/app/cli.hpp"
#include "test_util.hpp"

using namespace imagine;
using namespace imagine::app;
using imagine::testing::kDataDir;
using imagine::testing::kFixtureDir;
using imagine::testing::TempDir;

namespace {

struct CliResult {
  int code = -1;
  std::string out, err;
};

CliResult cli(std::vector<std::string> args, const std::string& input = {}) {
  args.insert(args.begin(), "imagine");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::istringstream in(input);
  std::ostringstream out, err;
  CliResult r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), in, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::vector<std::string> out;
  std::ifstream in(p);
  for (std::string l; std::getline(in, l);)
    if (!l.empty()) out.push_back(l);
  return out;
}

// The shipped fixture config with absolute data paths, a private output
// directory and optional training overrides.
fs::path write_config(const TempDir& dir, const std::string& name, const json& train_overrides = json::object(),
                      const json& top_overrides = json::object()) {
  auto cfg = json::parse(slurp(kFixtureDir / "config.json"));
  for (auto& [k, v] : cfg["corpus"].items()) v = (kFixtureDir / v.get<std::string>()).string();
  for (const char* k : {"labels", "knowledge"}) cfg[k] = (kFixtureDir / cfg[k].get<std::string>()).string();
  cfg["lexicon"] = (kDataDir / "lexicon.txt").string();
  cfg["output_dir"] = (dir / (name + "_run")).string();
  for (auto& [k, v] : train_overrides.items()) cfg["train"][k] = v;
  for (auto& [k, v] : top_overrides.items()) cfg[k] = v;
  const auto path = dir / (name + ".json");
  std::ofstream(path) << cfg.dump(2);
  return path;
}

// One trained checkpoint shared by the eval, generate and chat tests.
class Trained : public ::testing::Test {
protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli_trained");
    const auto cfg = write_config(*dir_, "shared", {{"max_epochs", 1}});
    const auto r = cli({"train", "--config", cfg.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    ckpt_ = (*dir_ / "shared_run" / "checkpoint").string();
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static TempDir* dir_;
  static std::string ckpt_;
};
TempDir* Trained::dir_ = nullptr;
std::string Trained::ckpt_;

const char* kDialogue =
    R"({"id":"%ID%","context":[{"speaker":0,"text":"I finally passed my exam"}],"response":"that is great news","emotion":"proud"})";

std::string dialogue_line(int i) {
  std::string s = kDialogue;
  s.replace(s.find("%ID%"), 4, "d" + std::to_string(i));
  return s;
}

} // namespace

// -------------------------------------------------------------- preprocess

TEST(Preprocess, TenLineFixtureListsTenDialogues) {
  TempDir dir("pre");
  {
    std::ofstream out(dir / "c.jsonl");
    for (int i = 0; i < 10; ++i) out << dialogue_line(i) << '\n';
  }
  auto r = cli({"preprocess", "--corpus", (dir / "c.jsonl").string(), "--out", (dir / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("train: 10 dialogues"), std::string::npos) << r.out;
  auto summary = json::parse(slurp(dir / "out" / "summary.json"));
  EXPECT_EQ(summary["splits"]["train"]["dialogues"], 10);
  EXPECT_TRUE(fs::exists(dir / "out" / "vocab.txt"));
  EXPECT_TRUE(fs::exists(dir / "out" / "freq.tsv"));
}

TEST(Preprocess, CorruptLineFourIsValidationExit) {
  TempDir dir("pre");
  {
    std::ofstream out(dir / "c.jsonl");
    for (int i = 0; i < 10; ++i) out << (i == 3 ? std::string("{\"id\": \"broken\", ") : dialogue_line(i)) << '\n';
  }
  auto r = cli({"preprocess", "--corpus", (dir / "c.jsonl").string(), "--out", (dir / "out").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("line 4"), std::string::npos) << r.err;
}

TEST(Preprocess, SchemaErrorNamesField) {
  TempDir dir("pre");
  std::ofstream(dir / "c.jsonl") << dialogue_line(0) << "\n"
                                 << R"({"id":"x","context":[{"speaker":0,"text":"hi"}],"emotion":"proud"})" << "\n";
  auto r = cli({"preprocess", "--corpus", (dir / "c.jsonl").string(), "--out", (dir / "out").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("response"), std::string::npos) << r.err;
}

TEST(Preprocess, RerunIsByteIdentical) {
  TempDir dir("pre");
  for (const char* out : {"a", "b"}) {
    auto r = cli({"preprocess", "--corpus", kFixtureDir.string(), "--out", (dir / out).string(), "--labels",
                  (kFixtureDir / "labels.txt").string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (const char* f : {"vocab.txt", "freq.tsv", "summary.json"})
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  auto summary = json::parse(slurp(dir / "a" / "summary.json"));
  for (const char* split : {"train", "valid", "test"}) EXPECT_TRUE(summary["splits"].contains(split)) << split;
  EXPECT_EQ(summary["splits"]["train"]["dialogues"], 8);
}

TEST(Preprocess, MissingCorpusIsDataExit) {
  TempDir dir("pre");
  EXPECT_EQ(cli({"preprocess", "--corpus", "/nonexistent/c.jsonl", "--out", (dir / "o").string()}).code, 2);
}

TEST(Preprocess, MissingRequiredFlagIsUsageExit) { EXPECT_EQ(cli({"preprocess", "--out", "x"}).code, 1); }

// ------------------------------------------------------------------- train

TEST(Train, OneEpochWritesCheckpointAndCsv) {
  TempDir dir("train");
  auto r = cli({"train", "--config", write_config(dir, "one", {{"max_epochs", 1}}).string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("epoch 1 "), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("valid_ppl"), std::string::npos);
  const auto run = dir / "one_run";
  for (const char* f : {"manifest.json", "weights.bin", "vocab.txt"})
    EXPECT_TRUE(fs::exists(run / "checkpoint" / f)) << f;
  auto csv = lines_of(run / "loss.csv");
  ASSERT_EQ(csv.size(), 9u);  // header + 8 single-example steps
  EXPECT_EQ(csv[0], kLossCsvHeader);
}

TEST(Train, FixedSeedReproducesCsv) {
  TempDir dir("train");
  auto cfg = write_config(dir, "seeded", {{"max_steps", 6}});
  auto run = [&](std::vector<std::string> extra) {
    std::vector<std::string> args{"train", "--config", cfg.string()};
    args.insert(args.end(), extra.begin(), extra.end());
    auto r = cli(args);
    EXPECT_EQ(r.code, 0) << r.err;
    return slurp(dir / "seeded_run" / "loss.csv");
  };
  const auto a = run({"--seed", "99"});
  const auto b = run({"--seed", "99"});
  const auto c = run({"--seed", "100"});
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  ::setenv("IMAGINE_SEED", "99", 1);
  const auto env = run({});
  const auto flag_wins = run({"--seed", "100"});
  ::unsetenv("IMAGINE_SEED");
  EXPECT_EQ(env, a);
  EXPECT_EQ(flag_wins, c);
}

TEST(Train, NonPositiveLearningRateRejectedBeforeTraining) {
  TempDir dir("train");
  for (double lr : {0.0, -1e-3}) {
    auto r = cli({"train", "--config", write_config(dir, "bad", {{"learning_rate", lr}}).string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("learning_rate"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(dir / "bad_run" / "loss.csv"));
  }
}

TEST(Train, MissingReferencedFileRejected) {
  TempDir dir("train");
  auto r = cli({"train", "--config",
                write_config(dir, "nolex", {}, {{"knowledge", (dir / "absent.jsonl").string()}}).string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("absent.jsonl"), std::string::npos) << r.err;
}

// -------------------------------------------------------------------- eval

TEST_F(Trained, EvalReportHasAllMetricFields) {
  const auto report = dir_->path() / "report.json";
  auto r = cli({"eval", "--ckpt", ckpt_, "--split", (kFixtureDir / "test.jsonl").string(), "--report",
                report.string(), "--responses", (dir_->path() / "resp.jsonl").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("n=3 "), std::string::npos) << r.out;
  auto j = json::parse(slurp(report));
  for (const char* k : {"ppl", "bleu2", "distinct1", "distinct2", "emotion_acc"}) {
    ASSERT_TRUE(j.contains(k)) << k;
    EXPECT_TRUE(j[k].is_number()) << k;
  }
  EXPECT_EQ(j["n_examples"], 3);
  EXPECT_GE(j["ppl"].get<double>(), 1.0);
  EXPECT_EQ(lines_of(dir_->path() / "resp.jsonl").size(), 3u);
}

TEST_F(Trained, EvalSameCheckpointTwiceIsIdentical) {
  const auto a = dir_->path() / "a.json", b = dir_->path() / "b.json";
  ASSERT_EQ(cli({"eval", "--ckpt", ckpt_, "--split", "test", "--report", a.string()}).code, 0);
  ASSERT_EQ(cli({"eval", "--ckpt", ckpt_, "--split", "test", "--report", b.string()}).code, 0);
  EXPECT_EQ(slurp(a), slurp(b));
}

TEST_F(Trained, EvalRefusesMismatchedVocab) {
  const auto other = dir_->path() / "other_vocab.txt";
  corpus::Vocab::from_tokens({"just", "some", "words"}).save(other.string());
  const auto stored = model::read_manifest(ckpt_).vocab_hash;
  const auto supplied = corpus::Vocab::load(other.string()).hash();
  auto r = cli({"eval", "--ckpt", ckpt_, "--split", "test", "--report", (dir_->path() / "x.json").string(),
                "--vocab", other.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find(stored), std::string::npos) << r.err;
  EXPECT_NE(r.err.find(supplied), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir_->path() / "x.json"));
}

TEST_F(Trained, EvalUnknownSplitIsDataExit) {
  auto r = cli({"eval", "--ckpt", ckpt_, "--split", "nosuchsplit", "--report", (dir_->path() / "y.json").string()});
  EXPECT_EQ(r.code, 2);
}

// ---------------------------------------------------------------- generate

TEST_F(Trained, GenerateOneResponsePerContextWithinLimit) {
  const auto input = dir_->path() / "contexts.jsonl";
  std::ofstream(input) << R"({"id":"g1","context":[{"speaker":0,"text":"I lost my keys again"}]})" << "\n"
                       << R"({"id":"g2","context":[{"speaker":0,"text":"My sister got married"},{"speaker":1,"text":"How lovely"}]})"
                       << "\n"
                       << R"({"id":"g3","context":[{"speaker":0,"text":"There was a storm last night"}]})" << "\n";
  const auto a = dir_->path() / "gen_a.jsonl", b = dir_->path() / "gen_b.jsonl";
  for (const auto& out : {a, b}) {
    auto r = cli({"generate", "--ckpt", ckpt_, "--input", input.string(), "--out", out.string(), "--cause-mode",
                  "heuristic"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  auto lines = lines_of(a);
  ASSERT_EQ(lines.size(), 3u);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto j = json::parse(lines[i]);
    EXPECT_EQ(j["id"], "g" + std::to_string(i + 1));
    EXPECT_LE(corpus::tokenize(j["generated"].get<std::string>()).size(), 30u);
    EXPECT_TRUE(j.contains("pred_emotion"));
  }
  EXPECT_EQ(slurp(a), slurp(b));
}

TEST_F(Trained, GenerateOracleModeWithoutAnnotationsFails) {
  const auto input = dir_->path() / "bare.jsonl";
  std::ofstream(input) << R"({"id":"g1","context":[{"speaker":0,"text":"hello"}]})" << "\n";
  auto r = cli({"generate", "--ckpt", ckpt_, "--input", input.string(), "--out", (dir_->path() / "o.jsonl").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("heuristic"), std::string::npos) << r.err;
}

// -------------------------------------------------------------------- chat

TEST_F(Trained, ChatQuitExitsCleanly) {
  auto r = cli({"chat", "--ckpt", ckpt_}, "/quit\nI won the lottery\n");
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.find("response:"), std::string::npos);
}

TEST_F(Trained, ChatTurnNamesExactlyOneEmotion) {
  auto r = cli({"chat", "--ckpt", ckpt_}, "I won the lottery today\n");
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t count = 0;
  std::string emotion;
  std::istringstream lines(r.out);
  for (std::string l; std::getline(lines, l);)
    if (l.rfind("  emotion: ", 0) == 0) {
      ++count;
      emotion = l.substr(11);
    }
  EXPECT_EQ(count, 1u) << r.out;
  auto labels = corpus::load_labels((kFixtureDir / "labels.txt").string());
  EXPECT_TRUE(labels.contains(emotion)) << emotion;
  for (const char* key : {"response:", "causes:", "cm_yes:", "knowledge:", "XReact:", "stub:"})
    EXPECT_NE(r.out.find(key), std::string::npos) << key;
}

TEST_F(Trained, ChatResetClearsContext) {
  auto r = cli({"chat", "--ckpt", ckpt_}, "first thing\nsecond thing\n/reset\nthird thing\n");
  ASSERT_EQ(r.code, 0) << r.err;
  std::vector<std::string> counts;
  std::istringstream lines(r.out);
  for (std::string l; std::getline(lines, l);)
    if (l.rfind("  context_utterances: ", 0) == 0) counts.push_back(l.substr(22));
  ASSERT_EQ(counts.size(), 3u) << r.out;
  EXPECT_EQ(counts[0], "1");
  EXPECT_NE(counts[1], "1");  // second turn sees the first turn and any reply
  EXPECT_EQ(counts[2], "1");
  EXPECT_NE(r.out.find("context cleared"), std::string::npos);
}

// ------------------------------------------------------------------ binary

TEST(Binary, HelpAndUsageExitCodes) {
  const std::string bin = IMAGINE_CLI_PATH;
  EXPECT_EQ(std::system((bin + " --help > /dev/null 2>&1").c_str()), 0);
  const int usage = std::system((bin + " train > /dev/null 2>&1").c_str());
  ASSERT_TRUE(WIFEXITED(usage));
  EXPECT_EQ(WEXITSTATUS(usage), 1);
  const int bogus = std::system((bin + " frobnicate > /dev/null 2>&1").c_str());
  ASSERT_TRUE(WIFEXITED(bogus));
  EXPECT_EQ(WEXITSTATUS(bogus), 1);
}
