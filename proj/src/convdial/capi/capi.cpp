#include "convdial/convdial.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <fstream>
#include <new>
#include <optional>
#include <string>
#include <vector>

#include "convdial/app/commands.hpp"
#include "convdial/util/error.hpp"
#include "convdial/util/log.hpp"

struct convdial_config {
  convdial::RunConfig run;
};

struct convdial_model {
  convdial::LoadedModel loaded;
  std::string kind;
};

struct convdial_report {
  convdial::EvalReport report;
};

namespace {

thread_local std::string g_last_error;

convdial_status status_for(convdial::ErrorKind kind) {
  switch (kind) {
    case convdial::ErrorKind::kInvalidArgument:
      return CONVDIAL_ERR_INVALID_ARGUMENT;
    case convdial::ErrorKind::kShape:
      return CONVDIAL_ERR_SHAPE;
    case convdial::ErrorKind::kNumeric:
      return CONVDIAL_ERR_NUMERIC;
    case convdial::ErrorKind::kState:
      return CONVDIAL_ERR_STATE;
    case convdial::ErrorKind::kIo:
      return CONVDIAL_ERR_IO;
    case convdial::ErrorKind::kParse:
      return CONVDIAL_ERR_PARSE;
    case convdial::ErrorKind::kConfig:
      return CONVDIAL_ERR_CONFIG;
  }
  return CONVDIAL_ERR_INTERNAL;
}

// Runs `body`, turning exceptions into status codes and the thread's last error.
template <typename F>
convdial_status guarded(F&& body) {
  g_last_error.clear();
  try {
    body();
    return CONVDIAL_OK;
  } catch (const convdial::Error& e) {
    g_last_error = e.what();
    return status_for(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return CONVDIAL_ERR_INTERNAL;
}

void require(const void* p, const char* what) {
  if (!p) throw convdial::InvalidArgument(std::string(what) + " is null");
}

char* duplicate(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* convdial_version(void) { return "0.1.0"; }

const char* convdial_status_name(convdial_status status) {
  switch (status) {
    case CONVDIAL_OK:
      return "ok";
    case CONVDIAL_ERR_INVALID_ARGUMENT:
      return "invalid_argument";
    case CONVDIAL_ERR_SHAPE:
      return "shape_error";
    case CONVDIAL_ERR_NUMERIC:
      return "numeric_error";
    case CONVDIAL_ERR_STATE:
      return "state_error";
    case CONVDIAL_ERR_IO:
      return "io_error";
    case CONVDIAL_ERR_PARSE:
      return "parse_error";
    case CONVDIAL_ERR_CONFIG:
      return "config_error";
    case CONVDIAL_ERR_INTERNAL:
      return "internal_error";
  }
  return "unknown_status";
}

const char* convdial_last_error(void) { return g_last_error.c_str(); }

void convdial_set_logger(convdial_log_fn fn, void* user, convdial_log_level max_level) {
  if (!fn) {
    convdial::set_log_sink({});
    return;
  }
  convdial::set_log_sink(
      [fn, user](convdial::LogLevel level, const std::string& msg) {
        fn(static_cast<convdial_log_level>(level), msg.c_str(), user);
      },
      static_cast<convdial::LogLevel>(max_level));
}

convdial_status convdial_config_load(const char* path, convdial_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    auto* c = new convdial_config{convdial::RunConfig::load(path)};
    *out = c;
  });
}

void convdial_config_free(convdial_config* config) { delete config; }

convdial_status convdial_config_set_seed(convdial_config* config, uint64_t seed) {
  return guarded([&] {
    require(config, "config");
    config->run.set_seed(seed);
  });
}

convdial_status convdial_config_set_mode(convdial_config* config, const char* mode) {
  return guarded([&] {
    require(config, "config");
    require(mode, "mode");
    config->run.eval.mode = convdial::parse_eval_mode(mode);
  });
}

convdial_status convdial_config_set_score(convdial_config* config, const char* score) {
  return guarded([&] {
    require(config, "config");
    require(score, "score");
    config->run.eval.score = convdial::parse_score_method(score);
  });
}

convdial_status convdial_config_set_output_dir(convdial_config* config, const char* dir) {
  return guarded([&] {
    require(config, "config");
    require(dir, "dir");
    if (!*dir) throw convdial::InvalidArgument("output directory is empty");
    config->run.output_dir = dir;
  });
}

convdial_status convdial_config_output_dir(const convdial_config* config, char* buf, size_t size, size_t* needed) {
  return guarded([&] {
    require(config, "config");
    const std::string& dir = config->run.output_dir;
    if (needed) *needed = dir.size() + 1;
    if (!buf || size < dir.size() + 1) throw convdial::InvalidArgument("buffer too small for output directory");
    std::memcpy(buf, dir.c_str(), dir.size() + 1);
  });
}

convdial_status convdial_synth(const convdial_config* config) {
  return guarded([&] {
    require(config, "config");
    convdial::cmd_synth(config->run);
  });
}

convdial_status convdial_train(const convdial_config* config) {
  return guarded([&] {
    require(config, "config");
    convdial::cmd_train(config->run);
  });
}

convdial_status convdial_eval(const convdial_config* config, convdial_report** out) {
  return guarded([&] {
    require(config, "config");
    if (out) *out = nullptr;
    convdial::EvalReport r = convdial::cmd_eval(config->run);
    if (out) *out = new convdial_report{std::move(r)};
  });
}

convdial_status convdial_generate(const convdial_config* config) {
  return guarded([&] {
    require(config, "config");
    convdial::cmd_generate(config->run);
  });
}

convdial_status convdial_render_report_table(const char* const* report_paths, size_t count, const char* out_path,
                                             char** table_text) {
  return guarded([&] {
    require(report_paths, "report_paths");
    if (table_text) *table_text = nullptr;
    std::vector<std::string> paths;
    for (size_t i = 0; i < count; ++i) {
      require(report_paths[i], "report path");
      paths.emplace_back(report_paths[i]);
    }
    const std::string table = convdial::cmd_report(paths);
    if (out_path) convdial::write_text_file(out_path, table);
    if (table_text) *table_text = duplicate(table);
  });
}

void convdial_string_free(char* text) { std::free(text); }

convdial_status convdial_report_load(const char* path, convdial_report** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    std::ifstream in(path);
    if (!in) throw convdial::IoError(std::string("cannot open report '") + path + "'");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw convdial::ParseError(std::string("report '") + path + "': " + e.what());
    }
    *out = new convdial_report{convdial::EvalReport::from_json(j)};
  });
}

void convdial_report_free(convdial_report* report) { delete report; }

convdial_status convdial_report_metric(const convdial_report* report, const char* name, double* value) {
  return guarded([&] {
    require(report, "report");
    require(name, "name");
    require(value, "value");
    const convdial::EvalReport& r = report->report;
    const std::string n = name;
    auto ranking = [&](double convdial::RankingMetrics::*field) {
      if (!r.ranking) throw convdial::StateError("report has no ranking metrics");
      return (*r.ranking).*field;
    };
    auto optional = [&](const std::optional<double>& v) {
      if (!v) throw convdial::StateError("report has no " + n);
      return *v;
    };
    if (n == "ce") *value = r.ce;
    else if (n == "kld") *value = r.kld;
    else if (n == "mr") *value = ranking(&convdial::RankingMetrics::mr);
    else if (n == "mrr") *value = ranking(&convdial::RankingMetrics::mrr);
    else if (n == "r1") *value = ranking(&convdial::RankingMetrics::r1);
    else if (n == "r5") *value = ranking(&convdial::RankingMetrics::r5);
    else if (n == "r10") *value = ranking(&convdial::RankingMetrics::r10);
    else if (n == "sim_cq") *value = optional(r.sim_cq);
    else if (n == "sim_dispersion") *value = optional(r.sim_dispersion);
    else throw convdial::InvalidArgument("unknown metric '" + n + "'");
  });
}

convdial_status convdial_report_text(const convdial_report* report, char** text) {
  return guarded([&] {
    require(report, "report");
    require(text, "text");
    *text = duplicate(report->report.to_text());
  });
}

convdial_status convdial_model_load(const char* checkpoint_path, convdial_model** out) {
  return guarded([&] {
    require(checkpoint_path, "checkpoint_path");
    require(out, "out");
    *out = nullptr;
    auto* m = new convdial_model{convdial::load_trained_model(checkpoint_path), {}};
    m->kind = convdial::to_string(m->loaded.model->spec().kind);
    *out = m;
  });
}

void convdial_model_free(convdial_model* model) { delete model; }

const char* convdial_model_kind(const convdial_model* model) { return model ? model->kind.c_str() : ""; }

size_t convdial_model_vocab_size(const convdial_model* model) {
  return model ? model->loaded.model->spec().vocab : 0;
}

size_t convdial_model_parameter_count(const convdial_model* model) {
  return model ? model->loaded.model->parameters().parameter_count() : 0;
}

}  // extern "C"
