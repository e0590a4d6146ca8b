#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "forge/corpus/corpus.hpp"
#include "forge/mlm/model.hpp"
#include "forge/mlm/relevance.hpp"

namespace forge::mlm {

/// One pretraining example: a DKE pair (token + segment view, mixed by
/// alpha) or a single token-masked view of ICP/RCD text.
struct PretrainUnit {
  MaskedExample token;
  std::optional<MaskedExample> segment;
};

double unit_loss(const TrainableMlm& model, const PretrainUnit& unit, const MixedLossConfig& cfg);
double unit_loss_and_grad(const TrainableMlm& model, const PretrainUnit& unit,
                          const MixedLossConfig& cfg, double weight, Gradients& grads);

struct SgdConfig {
  double lr = 0.1;
  MixedLossConfig mix;
};

struct StepResult {
  double loss = 0.0;
  bool applied = false;
  std::string error;
};

/// Mean unit loss over the batch, analytic gradient, one SGD update. A
/// non-finite gradient aborts the step and leaves the model untouched.
StepResult sgd_step(TrainableMlm& model, std::span<const PretrainUnit> batch,
                    const SgdConfig& cfg, Gradients& scratch);

enum class OptimizerKind { sgd, adam };
std::string_view to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(std::string_view s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// Plain SGD or Adam. Adam state is lazy: moments of a row advance only on
/// steps that touch it, bias correction uses the global step count.
class Optimizer {
 public:
  Optimizer(const TrainableMlm& model, OptimizerConfig cfg);
  void apply(TrainableMlm& model, const Gradients& grads);
  std::size_t steps() const { return steps_; }

 private:
  OptimizerConfig cfg_;
  std::size_t steps_ = 0;
  std::array<std::vector<double>, 4> m_, v_;
};

/// Like sgd_step but updates through `opt`.
StepResult train_step(TrainableMlm& model, std::span<const PretrainUnit> batch,
                      const MixedLossConfig& mix, Optimizer& opt, Gradients& scratch);

struct GradCheckConfig {
  double epsilon = 1e-4;
  std::size_t num_params = 50;
  std::uint64_t seed = 7;
  /// Multiplies the analytic gradient; 1.0 except when exercising the checker.
  double analytic_scale = 1.0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
};

/// Loss whose analytic gradient is accumulated into grads when non-null.
using LossFn = std::function<double(const TrainableMlm&, Gradients*)>;

/// Central finite differences on randomly chosen parameters from rows the
/// loss can reach (plus all of W and b) versus the analytic gradient.
/// Relative error = |ga - gfd| / max(1e-8, |ga| + |gfd|).
GradCheckResult grad_check(const TrainableMlm& model, const LossFn& loss,
                           std::span<const TokenId> reachable_tokens,
                           std::span<const int> reachable_segments, const GradCheckConfig& cfg = {});
GradCheckResult grad_check(const TrainableMlm& model, const MaskedExample& ex,
                           const GradCheckConfig& cfg = {});
GradCheckResult grad_check(const TrainableMlm& model, const PretrainUnit& unit,
                           const MixedLossConfig& mix, const GradCheckConfig& cfg = {});

struct PretrainConfig {
  MixedLossConfig mix;
  OptimizerConfig optimizer;
  std::size_t batch_size = 16;
  std::size_t epochs = 1;
  std::size_t max_steps = 0;  // 0: run full epochs
  std::uint64_t seed = 42;
};

struct TrainReport {
  std::size_t steps = 0;
  std::size_t aborted_steps = 0;
  std::vector<double> epoch_loss;
};

TrainReport pretrain(TrainableMlm& model, std::span<const PretrainUnit> units,
                     const PretrainConfig& cfg);

struct SftExample {
  MaskedExample prompt;
  int label = 0;
};

struct SftStepResult {
  double loss = 0.0;
  std::size_t used = 0;
  std::size_t skipped = 0;
  bool applied = false;
};

/// Renders each triple through the prompt; unknown item ids are skipped and
/// counted.
std::vector<SftExample> render_sft_examples(std::span<const corpus::LabeledTriple> triples,
                                            const corpus::Catalog& catalog,
                                            const dke::Vocab& vocab, const RelevancePrompt& prompt,
                                            std::size_t* skipped = nullptr);

/// Mean verbalizer cross-entropy over the batch followed by one SGD update.
SftStepResult sft_step(TrainableMlm& model, std::span<const corpus::LabeledTriple> triples,
                       const corpus::Catalog& catalog, const dke::Vocab& vocab,
                       const RelevancePrompt& prompt, double lr, Gradients& scratch);
SftStepResult sft_step(TrainableMlm& model, std::span<const SftExample> batch, Verbalizers v,
                       double lr, Gradients& scratch);

struct SftConfig {
  OptimizerConfig optimizer{OptimizerKind::adam, 0.03};
  std::size_t batch_size = 16;
  std::size_t epochs = 10;
  std::uint64_t seed = 42;
};

TrainReport train_sft(TrainableMlm& model, std::span<const SftExample> examples, Verbalizers v,
                      const SftConfig& cfg);

}  // namespace forge::mlm
