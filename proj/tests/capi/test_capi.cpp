#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "convdial/convdial.h"

namespace fs = std::filesystem;

namespace {

std::string config_path(const std::string& name) { return std::string(CONVDIAL_CONFIG_DIR) + "/" + name; }

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("convdial_capi_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Loads `config`, points it at `out` and runs synth + train.
convdial_config* trained_config(const std::string& config, const fs::path& out) {
  convdial_config* cfg = nullptr;
  EXPECT_EQ(convdial_config_load(config_path(config).c_str(), &cfg), CONVDIAL_OK) << convdial_last_error();
  EXPECT_EQ(convdial_config_set_output_dir(cfg, out.string().c_str()), CONVDIAL_OK);
  EXPECT_EQ(convdial_synth(cfg), CONVDIAL_OK) << convdial_last_error();
  EXPECT_EQ(convdial_train(cfg), CONVDIAL_OK) << convdial_last_error();
  return cfg;
}

}  // namespace

TEST(CApi, VersionAndStatusNames) {
  EXPECT_STRNE(convdial_version(), "");
  EXPECT_STREQ(convdial_status_name(CONVDIAL_OK), "ok");
  EXPECT_STREQ(convdial_status_name(CONVDIAL_ERR_CONFIG), "config_error");
  EXPECT_STREQ(convdial_status_name(static_cast<convdial_status>(99)), "unknown_status");
}

TEST(CApi, ErrorsCarryMessages) {
  convdial_config* cfg = nullptr;
  EXPECT_EQ(convdial_config_load("/nonexistent/run.json", &cfg), CONVDIAL_ERR_IO);
  EXPECT_EQ(cfg, nullptr);
  EXPECT_NE(std::string(convdial_last_error()).find("nonexistent"), std::string::npos);
  EXPECT_EQ(convdial_config_load(nullptr, &cfg), CONVDIAL_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(convdial_synth(nullptr), CONVDIAL_ERR_INVALID_ARGUMENT);

  ASSERT_EQ(convdial_config_load(config_path("tiny.json").c_str(), &cfg), CONVDIAL_OK);
  EXPECT_EQ(convdial_config_set_mode(cfg, "sideways"), CONVDIAL_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(convdial_config_set_score(cfg, "bleu"), CONVDIAL_ERR_INVALID_ARGUMENT);
  char small[2];
  std::size_t needed = 0;
  EXPECT_EQ(convdial_config_output_dir(cfg, small, sizeof small, &needed), CONVDIAL_ERR_INVALID_ARGUMENT);
  EXPECT_GT(needed, sizeof small);
  convdial_config_free(cfg);
}

TEST(CApi, MalformedConfigIsAParseError) {
  const fs::path dir = fresh_dir("badcfg");
  fs::create_directories(dir);
  {
    std::ofstream(dir / "bad.json") << "{\"format\": \"convdial-run\", ";
  }
  convdial_config* cfg = nullptr;
  EXPECT_EQ(convdial_config_load((dir / "bad.json").string().c_str(), &cfg), CONVDIAL_ERR_PARSE);
  {
    std::ofstream(dir / "unknown.json") << "{\"format\": \"convdial-run\", \"version\": 1, \"colour\": 3}";
  }
  EXPECT_EQ(convdial_config_load((dir / "unknown.json").string().c_str(), &cfg), CONVDIAL_ERR_CONFIG);
}

TEST(CApi, EvaluateBeforeTrainingIsAnIoError) {
  convdial_config* cfg = nullptr;
  ASSERT_EQ(convdial_config_load(config_path("tiny.json").c_str(), &cfg), CONVDIAL_OK);
  ASSERT_EQ(convdial_config_set_output_dir(cfg, fresh_dir("untrained").string().c_str()), CONVDIAL_OK);
  ASSERT_EQ(convdial_synth(cfg), CONVDIAL_OK);
  EXPECT_EQ(convdial_eval(cfg, nullptr), CONVDIAL_ERR_IO);
  EXPECT_NE(std::string(convdial_last_error()).find("checkpoint"), std::string::npos);
  convdial_config_free(cfg);
}

TEST(CApi, EndToEndModelA) {
  const fs::path out = fresh_dir("a");
  convdial_config* cfg = trained_config("tiny.json", out);
  EXPECT_TRUE(fs::exists(out / "model.ckpt"));
  EXPECT_TRUE(fs::exists(out / "train_log.jsonl"));

  convdial_report* report = nullptr;
  ASSERT_EQ(convdial_eval(cfg, &report), CONVDIAL_OK) << convdial_last_error();
  double mr = 0.0, ce = 0.0, sim = 0.0;
  EXPECT_EQ(convdial_report_metric(report, "mr", &mr), CONVDIAL_OK);
  EXPECT_GE(mr, 1.0);
  EXPECT_LE(mr, 6.0);
  EXPECT_EQ(convdial_report_metric(report, "ce", &ce), CONVDIAL_OK);
  EXPECT_GT(ce, 0.0);
  EXPECT_EQ(convdial_report_metric(report, "sim_cq", &sim), CONVDIAL_ERR_STATE);
  EXPECT_EQ(convdial_report_metric(report, "bogus", &sim), CONVDIAL_ERR_INVALID_ARGUMENT);
  char* text = nullptr;
  ASSERT_EQ(convdial_report_text(report, &text), CONVDIAL_OK);
  EXPECT_NE(std::string(text).find("model\tA"), std::string::npos);
  convdial_string_free(text);
  convdial_report_free(report);
  EXPECT_TRUE(fs::exists(out / "report-block-w2v.json"));

  EXPECT_EQ(convdial_generate(cfg), CONVDIAL_OK) << convdial_last_error();
  EXPECT_TRUE(fs::exists(out / "generated-block.txt"));

  // Model A is evaluated in block mode only.
  ASSERT_EQ(convdial_config_set_mode(cfg, "d-qa"), CONVDIAL_OK);
  EXPECT_EQ(convdial_eval(cfg, nullptr), CONVDIAL_ERR_CONFIG);

  convdial_model* model = nullptr;
  ASSERT_EQ(convdial_model_load((out / "model.ckpt").string().c_str(), &model), CONVDIAL_OK);
  EXPECT_STREQ(convdial_model_kind(model), "A");
  EXPECT_GT(convdial_model_vocab_size(model), 2u);
  EXPECT_GT(convdial_model_parameter_count(model), 0u);
  convdial_model_free(model);
  convdial_config_free(cfg);
}

TEST(CApi, BlockModelAndReportTable) {
  const fs::path out_a = fresh_dir("table_a"), out_b = fresh_dir("table_b");
  convdial_config* a = trained_config("tiny.json", out_a);
  convdial_config* b = trained_config("tiny_b.json", out_b);
  ASSERT_EQ(convdial_eval(a, nullptr), CONVDIAL_OK) << convdial_last_error();
  ASSERT_EQ(convdial_eval(b, nullptr), CONVDIAL_OK) << convdial_last_error();
  ASSERT_EQ(convdial_config_set_score(b, "elbo"), CONVDIAL_OK);
  EXPECT_EQ(convdial_eval(b, nullptr), CONVDIAL_ERR_CONFIG);

  const std::string ra = (out_a / "report-block-w2v.json").string(), rb = (out_b / "report-d-qa-w2v.json").string();
  convdial_report* report = nullptr;
  ASSERT_EQ(convdial_report_load(rb.c_str(), &report), CONVDIAL_OK);
  double sim = -1.0;
  EXPECT_EQ(convdial_report_metric(report, "sim_dispersion", &sim), CONVDIAL_OK);
  EXPECT_GE(sim, 0.0);
  convdial_report_free(report);

  const char* paths[] = {ra.c_str(), rb.c_str()};
  char* table = nullptr;
  const std::string table_file = (out_b / "table.md").string();
  ASSERT_EQ(convdial_render_report_table(paths, 2, table_file.c_str(), &table), CONVDIAL_OK);
  const std::string t = table;
  convdial_string_free(table);
  EXPECT_EQ(std::count(t.begin(), t.end(), '\n'), 4);
  EXPECT_NE(t.find("| A "), std::string::npos);
  EXPECT_NE(t.find("| B "), std::string::npos);
  EXPECT_EQ(slurp(table_file), t);
  EXPECT_EQ(convdial_render_report_table(paths, 0, nullptr, &table), CONVDIAL_ERR_INVALID_ARGUMENT);
  convdial_config_free(a);
  convdial_config_free(b);
}

TEST(CApi, RunsAreByteReproducible) {
  std::string reports[2];
  for (int i = 0; i < 2; ++i) {
    const fs::path out = fresh_dir("repro" + std::to_string(i));
    convdial_config* cfg = trained_config("tiny_b.json", out);
    ASSERT_EQ(convdial_eval(cfg, nullptr), CONVDIAL_OK) << convdial_last_error();
    reports[i] = slurp(out / "report-d-qa-w2v.json");
    convdial_config_free(cfg);
  }
  EXPECT_FALSE(reports[0].empty());
  EXPECT_EQ(reports[0], reports[1]);
}

TEST(CApi, SeedOverrideChangesTheRun) {
  const fs::path o1 = fresh_dir("seed1"), o2 = fresh_dir("seed2");
  convdial_config* c1 = trained_config("tiny.json", o1);
  convdial_config* c2 = nullptr;
  ASSERT_EQ(convdial_config_load(config_path("tiny.json").c_str(), &c2), CONVDIAL_OK);
  ASSERT_EQ(convdial_config_set_seed(c2, 8), CONVDIAL_OK);
  ASSERT_EQ(convdial_config_set_output_dir(c2, o2.string().c_str()), CONVDIAL_OK);
  ASSERT_EQ(convdial_synth(c2), CONVDIAL_OK);
  ASSERT_EQ(convdial_train(c2), CONVDIAL_OK);
  EXPECT_NE(slurp(o1 / "train_log.jsonl"), slurp(o2 / "train_log.jsonl"));
  convdial_config_free(c1);
  convdial_config_free(c2);
}

TEST(CApi, LoggerReceivesMessages) {
  struct Sink {
    int count = 0;
  } sink;
  convdial_set_logger([](convdial_log_level, const char*, void* user) { ++static_cast<Sink*>(user)->count; }, &sink,
                      CONVDIAL_LOG_DEBUG);
  convdial_config* cfg = trained_config("tiny.json", fresh_dir("log"));
  convdial_set_logger(nullptr, nullptr, CONVDIAL_LOG_ERROR);
  EXPECT_GT(sink.count, 0);
  const int seen = sink.count;
  ASSERT_EQ(convdial_synth(cfg), CONVDIAL_OK);
  EXPECT_EQ(sink.count, seen);
  convdial_config_free(cfg);
}
