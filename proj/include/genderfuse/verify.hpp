#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "genderfuse/model.hpp"
#include "genderfuse/tensor.hpp"
#include "genderfuse/textpipe.hpp"

namespace genderfuse {

// Embedding dims 8/4/3, char and word filters 4, dense 8, dropout off.
ArchConfig tiny_arch(Variant variant = Variant::kCnnCharPos);

struct TinyProblem {
  Corpus corpus;
  Vocab vocab;
  std::vector<TokenizedDoc> docs;
  std::vector<int> labels;
};

// Random short documents (at most max_len tokens) with alternating labels.
TinyProblem tiny_problem(std::uint64_t seed, std::size_t docs = 4, std::size_t max_len = 12);

// Cross-entropy plus penalty without touching gradients. Train-mode batch
// statistics are used but the running averages are left unchanged.
template <typename T>
double model_loss(ModelParams<T>& params, const Batch& batch, Mode mode);

// Finite-difference check of every parameter tensor of a 64-bit model built
// from `arch` on tiny_problem(seed). Dropout is forced off.
GradCheckReport model_grad_check(ArchConfig arch, std::uint64_t seed, Mode bn_mode = Mode::kEval,
                                 const GradCheckOptions& options = {});

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Invariant suites over kernels, model, protocol, statistics and text.
std::vector<SuiteResult> run_selftest(std::uint64_t seed);

}  // namespace genderfuse
