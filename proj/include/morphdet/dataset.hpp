#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "morphdet/types.hpp"

namespace morphdet {

using WarnSink = std::function<void(const std::string&)>;

// Subject-disjoint, gender-stratified split. Male, female and unknown-gender
// subjects are split independently at the same fraction; the validation set
// is carved out of the training subjects, again per stratum.
// Throws ValidationError when a present gender has fewer than 2 subjects.
SplitSpec make_split(const Manifest& manifest, double train_fraction,
                     double val_fraction_of_train, uint64_t seed);

// Enumerates every legal pair for one side of the split:
//   genuine:  two distinct bona fide images of one subject (y_g = 0)
//   imposter: a bona fide image of subject S with a morph listing S (y_g = 1)
// Order is deterministic given (manifest, split, which). Morphs whose
// contributors straddle splits are dropped with a warning.
std::vector<PairSample> build_pairs(const Manifest& manifest, const SplitSpec& split,
                                    const std::string& which, WarnSink warn = nullptr);

// Hard-pair variant used for the pretraining stage: genuine pairs as above,
// imposter pairs join images of a subject with images of its look-alike
// sibling (both bona fide). Sibling pairs straddling the split are dropped.
std::vector<PairSample> build_hard_pairs(const Manifest& manifest, const SplitSpec& split,
                                         const std::string& which, WarnSink warn = nullptr);

}  // namespace morphdet
