#include "convdial/inference/generation.hpp"

#include <cmath>
#include <limits>

#include "convdial/util/error.hpp"

namespace convdial {

namespace {

void require_block_model(const ModelSpec& spec, const char* what) {
  if (spec.kind == ModelKind::kA) throw InvalidArgument(std::string(what) + " needs a block model (B or B_AR)");
}

ModelBatch condition_batch(std::span<const PreparedRecord* const> records) {
  ModelBatch b;
  for (const PreparedRecord* r : records) {
    if (!r) throw InvalidArgument("null record");
    append_condition(b, *r);
  }
  return b;
}

Tensor draw_latent(const GaussianParams& g, std::size_t n, std::size_t z, Rng* rng) {
  if (!rng) return g.mu;
  return sample_latent(g, Tensor({n, z}, rng->normal_vector(n * z)));
}

DialogueBlock unpack(const std::vector<TokenId>& ids, std::size_t index, std::size_t turns, std::size_t length) {
  DialogueBlock d = DialogueBlock::padded(turns, length);
  const std::size_t base = index * 2 * turns * length;
  for (std::size_t c = 0; c < 2 * turns; ++c) {
    for (std::size_t l = 0; l < length; ++l) d.entries[c][l] = ids[base + c * length + l];
  }
  return d;
}

}  // namespace

std::vector<DialogueBlock> generate_blocks(Model& model, std::span<const PreparedRecord* const> records, Rng* rng) {
  const ModelSpec& spec = model.spec();
  require_block_model(spec, "block generation");
  if (records.empty()) return {};
  ModelBatch b = condition_batch(records);
  b.validate(spec, false);

  NoGradGuard no_grad;
  const std::size_t n = b.size, rows = spec.channels() * spec.length;
  PriorOutput p = model.prior_forward(b, Mode::kEval);
  Tensor z = draw_latent(p.prior, n, spec.latent, rng);
  Tensor inter = model.decoder_forward(z, p.condition, Mode::kEval);
  std::vector<TokenId> ids = model.decode_argmax(inter, std::vector<TokenId>(n * rows, kPadId),
                                                 std::vector<std::uint8_t>(n * rows, 0));
  std::vector<DialogueBlock> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(unpack(ids, i, spec.turns, spec.length));
  return out;
}

DialogueBlock generate_block(Model& model, const PreparedRecord& record, Rng* rng) {
  const PreparedRecord* one[] = {&record};
  return generate_blocks(model, one, rng).front();
}

std::vector<TokenSequence> generate_answers(Model& model, const Dataset& data, std::span<const SampleRef> samples,
                                            Rng* rng) {
  const ModelSpec& spec = model.spec();
  if (spec.kind != ModelKind::kA) throw InvalidArgument("answer generation needs model A");
  if (samples.empty()) return {};
  ModelBatch b;
  for (const SampleRef& s : samples) {
    const PreparedRecord& rec = data.records.at(s.record);
    append_condition(b, rec);
    append_context(b, ground_truth_context(rec, s.turn));
  }
  b.validate(spec, false);

  NoGradGuard no_grad;
  const std::size_t n = b.size, len = spec.length;
  PriorOutput p = model.prior_forward(b, Mode::kEval);
  Tensor z = draw_latent(p.prior, n, spec.latent, rng);
  Tensor inter = model.decoder_forward(z, p.condition, Mode::kEval);
  std::vector<TokenId> ids =
      model.decode_argmax(inter, std::vector<TokenId>(n * len, kPadId), std::vector<std::uint8_t>(n * len, 0));
  std::vector<TokenSequence> out;
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(ids.begin() + i * len, ids.begin() + (i + 1) * len);
  return out;
}

std::vector<IterativeResult> generate_iterative(Model& model, std::span<const PreparedRecord* const> records,
                                                IterativeMode mode,
                                                std::span<const DialogueBlock* const> ground_truth) {
  const ModelSpec& spec = model.spec();
  require_block_model(spec, "iterative generation");
  const std::size_t n = records.size(), T = spec.turns, L = spec.length, V = spec.vocab;
  const std::size_t rows = spec.channels() * L;
  if (!ground_truth.empty() && ground_truth.size() != n) {
    throw InvalidArgument("ground truth must be empty or given for every record");
  }
  if (n == 0) return {};
  auto truth = [&](std::size_t i) -> const DialogueBlock* { return ground_truth.empty() ? nullptr : ground_truth[i]; };

  ModelBatch b = condition_batch(records);
  b.validate(spec, false);

  NoGradGuard no_grad;
  PriorOutput p = model.prior_forward(b, Mode::kEval);
  std::vector<IterativeResult> results(n);
  const std::vector<Phase> phases = mode == IterativeMode::kQhatAhat ? std::vector<Phase>{Phase::kQuestion, Phase::kAnswer}
                                                                     : std::vector<Phase>{Phase::kAnswer};

  for (std::size_t t = 0; t < T; ++t) {
    for (Phase phase : phases) {
      const std::size_t channel = 2 * t + (phase == Phase::kQuestion ? 0 : 1);
      std::vector<DialogueBlock> inputs;
      std::vector<TokenId> ids;
      for (std::size_t i = 0; i < n; ++i) {
        const DialogueBlock* gt = mode == IterativeMode::kQhatAhat ? nullptr : truth(i);
        inputs.push_back(pad_future(gt, results[i].history, t + 1, mode, phase, T, L));
        std::vector<TokenId> flat = inputs.back().flat();
        ids.insert(ids.end(), flat.begin(), flat.end());
      }

      GaussianParams q = model.encoder_forward(ids, n, p.condition, Mode::kEval);
      Tensor inter = model.decoder_forward(q.mu, p.condition, Mode::kEval);
      std::vector<std::uint8_t> fixed(n * rows, 1);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t l = 0; l < L; ++l) fixed[i * rows + channel * L + l] = 0;
      }
      std::vector<TokenId> decoded = model.decode_argmax(inter, ids, fixed);

      // Score the ground-truth item with the same input, teacher-forcing it
      // into the target channel for B_AR.
      bool any_truth = false;
      std::vector<TokenId> teacher = ids;
      for (std::size_t i = 0; i < n; ++i) {
        if (const DialogueBlock* gt = truth(i)) {
          any_truth = true;
          const TokenSequence& item = gt->entries.at(channel);
          std::copy(item.begin(), item.end(), teacher.begin() + static_cast<std::ptrdiff_t>(i * rows + channel * L));
        }
      }
      std::vector<double> logp;
      std::vector<double> kld(n, std::numeric_limits<double>::quiet_NaN());
      if (any_truth) {
        Tensor lg = model.logits(inter, teacher, Mode::kEval);
        logp = log_softmax_rows(lg.values(), V);
        if (!spec.dirac) {
          Tensor kl = latent_kl(q, p.prior);
          for (std::size_t i = 0; i < n; ++i) kld[i] = kl.at(i);
        } else {
          std::fill(kld.begin(), kld.end(), 0.0);
        }
      }

      for (std::size_t i = 0; i < n; ++i) {
        IterativeStep step;
        step.turn = t;
        step.phase = phase;
        step.input = std::move(inputs[i]);
        step.predicted.assign(decoded.begin() + static_cast<std::ptrdiff_t>(i * rows + channel * L),
                              decoded.begin() + static_cast<std::ptrdiff_t>(i * rows + (channel + 1) * L));
        step.ce = std::numeric_limits<double>::quiet_NaN();
        step.kld = std::numeric_limits<double>::quiet_NaN();
        if (const DialogueBlock* gt = truth(i)) {
          const TokenSequence& item = gt->entries.at(channel);
          const std::vector<double> w = model.ce_weights(item);
          double ce = 0.0;
          for (std::size_t l = 0; l < L; ++l) {
            const double weight = w.empty() ? 1.0 : w[l];
            ce -= weight * logp[(i * rows + channel * L + l) * V + static_cast<std::size_t>(item[l])];
          }
          step.ce = ce;
          step.kld = kld[i];
        }
        DialogueHistory& h = results[i].history;
        (phase == Phase::kQuestion ? h.questions : h.answers).push_back(step.predicted);
        results[i].steps.push_back(std::move(step));
      }
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    IterativeResult& r = results[i];
    r.dialogue = DialogueBlock::padded(T, L);
    for (std::size_t t = 0; t < T; ++t) {
      if (mode == IterativeMode::kQhatAhat) {
        r.dialogue.question(t) = r.history.questions[t];
      } else if (const DialogueBlock* gt = truth(i)) {
        r.dialogue.question(t) = gt->question(t);
      }
      r.dialogue.answer(t) = r.history.answers[t];
    }
  }
  return results;
}

IterativeResult generate_iterative(Model& model, const PreparedRecord& record, IterativeMode mode,
                                   const DialogueBlock* ground_truth) {
  const PreparedRecord* one[] = {&record};
  const DialogueBlock* gt[] = {ground_truth};
  return std::move(generate_iterative(model, one, mode, gt).front());
}

}  // namespace convdial
