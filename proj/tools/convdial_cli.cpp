#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "convdial/convdial.h"

namespace fs = std::filesystem;

namespace {

struct LogFile {
  std::ofstream out;
};

void write_log(convdial_log_level level, const char* message, void* user) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  auto* log = static_cast<LogFile*>(user);
  if (log->out) log->out << names[level] << " " << message << "\n" << std::flush;
}

convdial_log_level level_from_env() {
  const char* v = std::getenv("CONVDIAL_LOG_LEVEL");
  if (!v) return CONVDIAL_LOG_INFO;
  const std::string s = v;
  if (s == "error") return CONVDIAL_LOG_ERROR;
  if (s == "warn") return CONVDIAL_LOG_WARN;
  if (s == "debug") return CONVDIAL_LOG_DEBUG;
  return CONVDIAL_LOG_INFO;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out;
}

class Failure {
 public:
  Failure(convdial_status status, std::string message) : status(status), message(std::move(message)) {}
  convdial_status status;
  std::string message;
};

void check(convdial_status s) {
  if (s != CONVDIAL_OK) throw Failure(s, convdial_last_error());
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string mode;
  std::string score;
  std::string out;
  std::vector<std::string> reports;
};

std::string config_output_dir(const convdial_config* cfg) {
  std::size_t needed = 0;
  convdial_config_output_dir(cfg, nullptr, 0, &needed);
  std::string buf(needed, '\0');
  check(convdial_config_output_dir(cfg, buf.data(), buf.size(), &needed));
  buf.resize(needed - 1);
  return buf;
}

// Opens <dir>/<command>.log, falling back to the temp directory when the
// output directory is unknown or unwritable.
std::string open_log(LogFile& log, const std::string& dir, const std::string& command) {
  std::error_code ec;
  fs::path path;
  if (!dir.empty() && (fs::create_directories(dir, ec), !ec)) path = fs::path(dir) / (command + ".log");
  if (!path.empty()) log.out.open(path, std::ios::trunc);
  if (!log.out) {
    path = fs::temp_directory_path() / "convdial.log";
    log.out.open(path, std::ios::app);
  }
  convdial_set_logger(write_log, &log, level_from_env());
  return path.string();
}

int run_pipeline(const std::string& command, const Options& opt, LogFile& log, std::string& log_path) {
  convdial_config* cfg = nullptr;
  try {
    check(convdial_config_load(opt.config.c_str(), &cfg));
    if (opt.seed) check(convdial_config_set_seed(cfg, *opt.seed));
    if (!opt.mode.empty()) check(convdial_config_set_mode(cfg, opt.mode.c_str()));
    if (!opt.score.empty()) check(convdial_config_set_score(cfg, opt.score.c_str()));
    if (!opt.out.empty()) check(convdial_config_set_output_dir(cfg, opt.out.c_str()));
    log_path = open_log(log, config_output_dir(cfg), command);
    log.out << "info command " << command << " config " << opt.config << "\n";

    if (command == "synth") {
      check(convdial_synth(cfg));
    } else if (command == "train") {
      check(convdial_train(cfg));
    } else if (command == "eval") {
      convdial_report* report = nullptr;
      check(convdial_eval(cfg, &report));
      char* text = nullptr;
      const convdial_status s = convdial_report_text(report, &text);
      convdial_report_free(report);
      check(s);
      std::cout << text;
      convdial_string_free(text);
    } else if (command == "generate") {
      check(convdial_generate(cfg));
    }
  } catch (...) {
    convdial_config_free(cfg);
    throw;
  }
  convdial_config_free(cfg);
  return 0;
}

int run_report(const Options& opt, LogFile& log, std::string& log_path) {
  log_path = open_log(log, opt.out.empty() ? std::string() : fs::path(opt.out).parent_path().string(), "report");
  std::vector<const char*> paths;
  for (const auto& p : opt.reports) paths.push_back(p.c_str());
  char* table = nullptr;
  check(convdial_render_report_table(paths.data(), paths.size(), opt.out.empty() ? nullptr : opt.out.c_str(),
                                     opt.out.empty() ? &table : nullptr));
  if (table) {
    std::cout << table;
    convdial_string_free(table);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional-VAE visual dialogue: synthetic data, training, evaluation and reports"};
  app.require_subcommand(1);
  Options opt;

  auto add_pipeline = [&](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config, "Run configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "Override the configuration seed");
    sub->add_option("--mode", opt.mode, "Evaluation mode")
        ->check(CLI::IsMember({"block", "d-qa", "d-qhat-a", "d-qhat-ahat"}));
    sub->add_option("--score", opt.score, "Candidate score function")->check(CLI::IsMember({"elbo", "lw", "w2v"}));
    sub->add_option("--out", opt.out, "Output directory (overrides the configuration)");
    return sub;
  };
  add_pipeline("synth", "Generate the synthetic corpus and fixed word vectors");
  add_pipeline("train", "Train the configured model");
  add_pipeline("eval", "Evaluate a trained model on the held-out split");
  add_pipeline("generate", "Write generated dialogues for the held-out split");
  CLI::App* report = app.add_subcommand("report", "Render evaluation reports as one comparison table");
  report->add_option("reports", opt.reports, "Report JSON files")->required()->check(CLI::ExistingFile);
  report->add_option("--out", opt.out, "Write the table to this file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "convdial: error code=usage message=\"" << escape(e.what()) << "\"\n";
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  LogFile log;
  std::string log_path;
  try {
    return command == "report" ? run_report(opt, log, log_path) : run_pipeline(command, opt, log, log_path);
  } catch (const Failure& f) {
    if (log_path.empty()) log_path = open_log(log, std::string(), command);
    log.out << "error command " << command << " status " << convdial_status_name(f.status) << ": " << f.message
            << "\n";
    convdial_set_logger(nullptr, nullptr, CONVDIAL_LOG_ERROR);
    std::cerr << "convdial: error code=" << convdial_status_name(f.status) << " command=" << command << " message=\""
              << escape(f.message) << "\" log=\"" << escape(log_path) << "\"\n";
    return static_cast<int>(f.status);
  }
}
