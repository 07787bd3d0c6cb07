#pragma once

#include <span>
#include <vector>

#include "convdial/colouring/colouring.hpp"
#include "convdial/cvae/model.hpp"
#include "convdial/data/dataset.hpp"
#include "convdial/train/batching.hpp"
#include "convdial/util/rng.hpp"

namespace convdial {

/// Whole dialogues from the prior of a block model (B or B_AR), one per
/// record. With `rng` null z is the prior mean; otherwise z is drawn from the
/// prior. Only the records' image and caption are read.
std::vector<DialogueBlock> generate_blocks(Model& model, std::span<const PreparedRecord* const> records,
                                           Rng* rng = nullptr);
DialogueBlock generate_block(Model& model, const PreparedRecord& record, Rng* rng = nullptr);

/// Model A's answer for each (record, turn), decoded from the prior given the
/// ground-truth context.
std::vector<TokenSequence> generate_answers(Model& model, const Dataset& data, std::span<const SampleRef> samples,
                                            Rng* rng = nullptr);

/// One extraction of iterative generation.
struct IterativeStep {
  std::size_t turn = 0;  // zero-based
  Phase phase = Phase::kAnswer;
  DialogueBlock input;
  TokenSequence predicted;
  /// CE of the ground-truth item at this step and KL(q || p) of the encoded
  /// input. NaN when no ground truth was supplied.
  double ce = 0.0;
  double kld = 0.0;
};

struct IterativeResult {
  /// Ground-truth questions (or predicted ones for D-q̂â) with predicted answers.
  DialogueBlock dialogue;
  DialogueHistory history;
  std::vector<IterativeStep> steps;
};

/// Turn-by-turn generation with the reconstruction pipeline: every step
/// encodes the pad_future block, decodes at the posterior mean and extracts
/// the current item. T steps for D-qa and D-qâ, 2T for D-q̂â.
///
/// `ground_truth` is empty or holds one (possibly null) block per record. It
/// feeds the inputs of D-qa and D-qâ; under D-q̂â it is only used to score the
/// steps. The records' own dialogues are never read.
std::vector<IterativeResult> generate_iterative(Model& model, std::span<const PreparedRecord* const> records,
                                                IterativeMode mode,
                                                std::span<const DialogueBlock* const> ground_truth);
IterativeResult generate_iterative(Model& model, const PreparedRecord& record, IterativeMode mode,
                                   const DialogueBlock* ground_truth);

}  // namespace convdial
