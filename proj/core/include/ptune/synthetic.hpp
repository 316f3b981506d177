// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ptune/corpus.hpp"

// Templated doctor-patient dialogues with slot-copying note sections, used as
// the desk-scale stand-in corpus for pretraining, fixtures and sweeps.
namespace ptune::synthetic {

// The 20 section labels, in generator order.
const std::vector<std::string>& section_headers();

// `count` examples with ids "<prefix><n>". Headers are drawn with a fixed
// non-uniform weighting so header frequencies differ.
std::vector<corpus::Example> generate(std::size_t count, std::uint64_t seed,
                                      const std::string& id_prefix = "ex");

corpus::SplitSet generate_splits(std::size_t train, std::size_t validation, std::size_t test,
                                 std::uint64_t seed);

// Plain-text rendering used for language-model pretraining. It pairs the
// dialogue and the note under a different frame than the prompt template.
std::string lm_document(const corpus::Example& example);

std::vector<std::string> lm_corpus(std::size_t documents, std::uint64_t seed);

}  // namespace ptune::synthetic
