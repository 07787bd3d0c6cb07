#include "convdial/inference/evaluator.hpp"

#include <algorithm>
#include <sstream>

#include "convdial/train/batching.hpp"
#include "convdial/util/error.hpp"
#include "convdial/util/format.hpp"

namespace convdial {

EvalMode parse_eval_mode(const std::string& text) {
  if (text == "block") return EvalMode{};
  try {
    return EvalMode{false, parse_iterative_mode(text)};
  } catch (const InvalidArgument&) {
    throw InvalidArgument("unknown evaluation mode '" + text + "' (expected block, d-qa, d-qhat-a or d-qhat-ahat)");
  }
}

std::string to_string(const EvalMode& mode) { return mode.block ? "block" : to_string(mode.iterative); }

void EvalConfig::validate() const {
  if (batch_size < 1) throw ConfigError("eval batch_size must be at least 1");
  if (score == ScoreMethod::kLikelihoodWeighting && lw_samples < 1) {
    throw ConfigError("lw_samples must be at least 1");
  }
}

void EvalConfig::check_model(const ModelSpec& spec) const {
  if (spec.kind == ModelKind::kA) {
    if (!mode.block) {
      throw ConfigError("mode " + to_string(mode) + " applies to block models; model A is evaluated in block mode");
    }
  } else if (score != ScoreMethod::kWord2Vec) {
    throw ConfigError("score " + to_string(score) + " needs model A; block models rank with w2v");
  }
}

nlohmann::json EvalConfig::to_json() const {
  return {{"mode", to_string(mode)},   {"score", to_string(score)},         {"lw_samples", lw_samples},
          {"sample", sample},          {"batch_size", batch_size},          {"seed", seed}};
}

EvalConfig EvalConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("eval section must be an object");
  EvalConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "mode") c.mode = parse_eval_mode(value.get<std::string>());
    else if (key == "score") c.score = parse_score_method(value.get<std::string>());
    else if (key == "lw_samples") c.lw_samples = value.get<std::size_t>();
    else if (key == "sample") c.sample = value.get<bool>();
    else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else throw ConfigError("unknown eval key '" + key + "'");
  }
  c.validate();
  return c;
}

namespace {

nlohmann::json optional_number(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

std::optional<double> read_optional(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

std::string model_label(const ModelSpec& spec) {
  std::string s = to_string(spec.kind);
  if (spec.kind == ModelKind::kBAR) s += "(" + std::to_string(spec.ar_layers) + ")";
  if (spec.dirac) s += "-dirac";
  return s;
}

std::string join(const WordList& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::vector<TokenSequence> encode_all(const std::vector<WordList>& sentences, const Vocabulary& vocab,
                                      std::size_t length) {
  std::vector<TokenSequence> out;
  for (const auto& s : sentences) out.push_back(vocab.encode(s, length));
  return out;
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j = {{"model", model},     {"mode", mode}, {"score", score}, {"seed", seed},
                      {"records", records}, {"ranked", ranked}, {"ce", ce}, {"kld", kld}};
  j["mr"] = ranking ? nlohmann::json(ranking->mr) : nlohmann::json();
  j["mrr"] = ranking ? nlohmann::json(ranking->mrr) : nlohmann::json();
  j["r1"] = ranking ? nlohmann::json(ranking->r1) : nlohmann::json();
  j["r5"] = ranking ? nlohmann::json(ranking->r5) : nlohmann::json();
  j["r10"] = ranking ? nlohmann::json(ranking->r10) : nlohmann::json();
  j["sim_cq"] = optional_number(sim_cq);
  j["sim_dispersion"] = optional_number(sim_dispersion);
  return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.model = j.at("model").get<std::string>();
    r.mode = j.at("mode").get<std::string>();
    r.score = j.at("score").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.records = j.at("records").get<std::size_t>();
    r.ranked = j.at("ranked").get<std::size_t>();
    r.ce = j.at("ce").get<double>();
    r.kld = j.at("kld").get<double>();
    if (auto mr = read_optional(j, "mr")) {
      r.ranking = RankingMetrics{*mr, j.at("mrr").get<double>(), j.at("r1").get<double>(), j.at("r5").get<double>(),
                                 j.at("r10").get<double>()};
    }
    r.sim_cq = read_optional(j, "sim_cq");
    r.sim_dispersion = read_optional(j, "sim_dispersion");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed report: ") + e.what());
  }
  return r;
}

std::string EvalReport::to_text() const {
  std::ostringstream out;
  auto num = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("n/a"); };
  auto rank = [&](double RankingMetrics::*field) {
    return ranking ? format_double((*ranking).*field) : std::string("n/a");
  };
  out << "model\t" << model << "\n";
  out << "mode\t" << mode << "\n";
  out << "score\t" << score << "\n";
  out << "seed\t" << seed << "\n";
  out << "records\t" << records << "\n";
  out << "ranked\t" << ranked << "\n";
  out << "CE\t" << format_double(ce) << "\n";
  out << "KLD\t" << format_double(kld) << "\n";
  out << "MR\t" << rank(&RankingMetrics::mr) << "\n";
  out << "MRR\t" << rank(&RankingMetrics::mrr) << "\n";
  out << "R@1\t" << rank(&RankingMetrics::r1) << "\n";
  out << "R@5\t" << rank(&RankingMetrics::r5) << "\n";
  out << "R@10\t" << rank(&RankingMetrics::r10) << "\n";
  out << "sim_cq\t" << num(sim_cq) << "\n";
  out << "sim_dispersion\t" << num(sim_dispersion) << "\n";
  return out.str();
}

std::string render_transcripts(const std::vector<Transcript>& transcripts) {
  std::ostringstream out;
  for (const Transcript& tr : transcripts) {
    out << "image " << tr.image_id << "\n";
    out << "caption: " << join(tr.caption) << "\n";
    for (std::size_t t = 0; t < tr.answers.size(); ++t) {
      out << "Q" << t + 1 << ": " << join(tr.questions.at(t)) << "\n";
      out << "A" << t + 1 << ": " << join(tr.answers[t]) << "\n";
      if (tr.truth_questions.at(t) != tr.questions[t]) {
        out << "  true Q" << t + 1 << ": " << join(tr.truth_questions[t]) << "\n";
      }
      out << "  true A" << t + 1 << ": " << join(tr.truth_answers.at(t));
      if (t < tr.ranks.size()) out << "  (rank " << tr.ranks[t] << ")";
      out << "\n";
    }
    out << "\n";
  }
  return out.str();
}

EvalOutput evaluate(Model& model, const Dataset& data, std::span<const std::size_t> records, const Vocabulary& vocab,
                    const FixedEmbeddingTable& table, const EvalConfig& cfg) {
  cfg.validate();
  const ModelSpec& spec = model.spec();
  cfg.check_model(spec);
  check_compatible(data, spec);
  if (records.empty()) throw InvalidArgument("no records to evaluate");
  for (std::size_t r : records) {
    if (r >= data.records.size()) throw InvalidArgument("record index out of range");
  }

  Rng gen_rng(Rng::derive(cfg.seed, 0));
  Rng score_rng(Rng::derive(cfg.seed, 1));
  Rng* gen = cfg.sample ? &gen_rng : nullptr;
  const std::size_t T = data.turns, L = data.length;

  EvalOutput out;
  EvalReport& rep = out.report;
  rep.model = model_label(spec);
  rep.mode = to_string(cfg.mode);
  rep.score = score_tag(cfg.score);
  rep.seed = cfg.seed;
  rep.records = records.size();

  std::vector<std::size_t> ranks;
  double ce_sum = 0.0, kld_sum = 0.0, cq_sum = 0.0, disp_sum = 0.0;
  std::size_t ce_count = 0;

  // Fills the transcript for one record and ranks its predicted answers.
  auto record_transcript = [&](const PreparedRecord& rec, const std::vector<WordList>& questions,
                               const std::vector<WordList>& answers,
                               const std::vector<std::vector<double>>* model_scores) {
    Transcript tr;
    tr.image_id = rec.image_id;
    tr.caption = rec.caption_words;
    tr.questions = questions;
    tr.answers = answers;
    for (std::size_t t = 0; t < T; ++t) {
      tr.truth_questions.push_back(rec.question_words.at(t));
      tr.truth_answers.push_back(rec.answer_words.at(t));
    }
    if (!rec.candidates.empty()) {
      for (std::size_t t = 0; t < T; ++t) {
        const std::vector<double> scores = model_scores ? (*model_scores)[t]
                                                        : score_candidates_w2v(answers[t], rec.candidates[t], table);
        tr.ranks.push_back(ground_truth_rank(scores, rec.gt_index.at(t)));
        ranks.push_back(tr.ranks.back());
      }
    }
    out.transcripts.push_back(std::move(tr));
  };

  if (spec.kind == ModelKind::kA) {
    for (std::size_t start = 0; start < records.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(records.size(), start + cfg.batch_size);
      std::vector<SampleRef> samples;
      for (std::size_t i = start; i < end; ++i) {
        for (std::size_t t = 0; t < T; ++t) samples.push_back({records[i], t});
      }
      {
        NoGradGuard no_grad;
        ElboResult er = elbo(model, make_batch(data, spec, samples), Tensor(), 1.0, Mode::kEval);
        for (double v : er.ce_per_example) ce_sum += v;
        for (double v : er.kld_per_example) kld_sum += v;
        ce_count += er.ce_per_example.size();
      }
      const std::vector<TokenSequence> predicted = generate_answers(model, data, samples, gen);
      for (std::size_t i = start; i < end; ++i) {
        const PreparedRecord& rec = data.records[records[i]];
        std::vector<WordList> answers;
        for (std::size_t t = 0; t < T; ++t) answers.push_back(vocab.decode(predicted[(i - start) * T + t]));
        std::vector<std::vector<double>> scores;
        const bool by_model = cfg.score != ScoreMethod::kWord2Vec && !rec.candidates.empty();
        if (by_model) {
          for (std::size_t t = 0; t < T; ++t) {
            scores.push_back(score_candidates_model(model, rec, t, encode_all(rec.candidates[t], vocab, L), cfg.score,
                                                    cfg.lw_samples, score_rng));
          }
        }
        record_transcript(rec, rec.question_words, answers, by_model ? &scores : nullptr);
      }
    }
  } else {
    for (std::size_t start = 0; start < records.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(records.size(), start + cfg.batch_size);
      std::vector<const PreparedRecord*> chunk;
      std::vector<const DialogueBlock*> truths;
      std::vector<DialogueBlock> truth_blocks;
      for (std::size_t i = start; i < end; ++i) {
        chunk.push_back(&data.records[records[i]]);
        truths.push_back(&chunk.back()->dialogue);
        truth_blocks.push_back(chunk.back()->dialogue);
      }

      std::vector<DialogueBlock> dialogues;
      if (cfg.mode.block) {
        std::vector<SampleRef> samples;
        for (std::size_t i = start; i < end; ++i) samples.push_back({records[i], 0});
        NoGradGuard no_grad;
        ElboResult er = elbo(model, make_batch(data, spec, samples), Tensor(), 1.0, Mode::kEval);
        for (double v : er.ce_per_example) ce_sum += v;
        for (double v : er.kld_per_example) kld_sum += v;
        ce_count += er.ce_per_example.size();
        dialogues = generate_blocks(model, chunk, gen);
      } else {
        std::vector<IterativeResult> results = generate_iterative(model, chunk, cfg.mode.iterative, truths);
        for (IterativeResult& r : results) {
          for (const IterativeStep& s : r.steps) {
            ce_sum += s.ce;
            kld_sum += s.kld;
            ++ce_count;
          }
          dialogues.push_back(std::move(r.dialogue));
        }
      }

      const std::vector<double> disp = sim_dispersion(model, chunk, dialogues, truth_blocks);
      for (std::size_t i = 0; i < chunk.size(); ++i) {
        std::vector<WordList> questions, answers;
        for (std::size_t t = 0; t < T; ++t) {
          questions.push_back(vocab.decode(dialogues[i].question(t)));
          answers.push_back(vocab.decode(dialogues[i].answer(t)));
        }
        cq_sum += sim_cq(questions, chunk[i]->caption_words, table);
        disp_sum += disp[i];
        record_transcript(*chunk[i], questions, answers, nullptr);
      }
    }
    rep.sim_cq = cq_sum / static_cast<double>(records.size());
    rep.sim_dispersion = disp_sum / static_cast<double>(records.size());
  }

  rep.ce = ce_sum / static_cast<double>(ce_count);
  rep.kld = kld_sum / static_cast<double>(ce_count);
  rep.ranked = ranks.size();
  if (!ranks.empty()) rep.ranking = ranking_metrics(ranks);
  return out;
}

std::string render_report_table(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  out << "| model | mode | score | CE | KLD | MR | MRR | R@1 | R@5 | R@10 | sim_cq | sim_dispersion |\n";
  out << "|---|---|---|---|---|---|---|---|---|---|---|---|\n";
  auto fixed = [](const std::optional<double>& v, int digits) {
    return v ? format_fixed(*v, digits) : std::string("-");
  };
  for (const EvalReport& r : reports) {
    std::optional<double> mr, mrr, r1, r5, r10;
    if (r.ranking) {
      mr = r.ranking->mr;
      mrr = r.ranking->mrr;
      r1 = r.ranking->r1;
      r5 = r.ranking->r5;
      r10 = r.ranking->r10;
    }
    out << "| " << r.model << " | " << r.mode << " | " << r.score << " | " << format_fixed(r.ce, 3) << " | "
        << format_fixed(r.kld, 3) << " | " << fixed(mr, 2) << " | " << fixed(mrr, 4) << " | " << fixed(r1, 4)
        << " | " << fixed(r5, 4) << " | " << fixed(r10, 4) << " | " << fixed(r.sim_cq, 4) << " | "
        << fixed(r.sim_dispersion, 3) << " |\n";
  }
  return out.str();
}

}  // namespace convdial
