#pragma once

// Shared fixtures for the unit and acceptance suites.

#include <string>
#include <vector>

#include "nqac/decoder.hpp"
#include "nqac/lm_model.hpp"
#include "nqac/lm_train.hpp"

namespace nqac::fixtures {

// Tiny model used by the gradient oracle: |V| = 12, H = 8.
struct TinySetup {
  lm::LmModel model;
  features::WordEmbeddingTable words;
  std::vector<std::string> queries;
  std::vector<lm::LmContext> contexts;
};
TinySetup tiny_setup(lm::Activation act, std::uint64_t seed);

lm::Batch batch_for(const lm::LmModel& model, const features::WordEmbeddingTable* words,
                    const std::vector<std::string>& queries, const std::vector<lm::LmContext>& contexts);

// Central finite differences of loss(...).per_query for every parameter entry.
lm::Gradients finite_difference_gradients(lm::LmModel model, const lm::Batch& batch, lm::Mode mode,
                                          const lm::DropoutSpec& dropout, double eps);

// Worst relative error |a - b| / max(|a|, |b|) over all entries; entries where
// both magnitudes are below `floor` are compared absolutely against `floor`.
struct GradientAgreement {
  double worst_relative = 0;
  std::size_t entries = 0;
  std::string worst_tensor;
};
GradientAgreement compare_gradients(const lm::LmModel& model, const lm::Gradients& analytic,
                                    const lm::Gradients& numeric, double floor = 1e-6);

// 50 queries whose first words are pairwise distinct.
std::vector<std::string> toy_queries_50();

// log P(suffix [+ end] | prefix) through one batched infer-mode forward pass.
double sequence_log_prob(const decoder::ConditionedLm& lm, std::string_view prefix, std::string_view suffix,
                         bool finished);

// Mean pairwise normalized edit distance of a suggestion list.
double mean_pairwise_distance(const std::vector<std::string>& texts);

std::string temp_path(const std::string& name);

}  // namespace nqac::fixtures
