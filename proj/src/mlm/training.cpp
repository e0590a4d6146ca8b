#include "forge/mlm/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "forge/util/rng.hpp"

namespace forge::mlm {

double unit_loss(const TrainableMlm& model, const PretrainUnit& unit, const MixedLossConfig& cfg) {
  if (unit.segment) return mixed_loss(model, unit.token, *unit.segment, cfg);
  return masked_ce_loss(model, unit.token);
}

double unit_loss_and_grad(const TrainableMlm& model, const PretrainUnit& unit,
                          const MixedLossConfig& cfg, double weight, Gradients& grads) {
  if (unit.segment) return mixed_loss_and_grad(model, unit.token, *unit.segment, cfg, weight, grads);
  return masked_ce_loss_and_grad(model, unit.token, weight, grads);
}

StepResult sgd_step(TrainableMlm& model, std::span<const PretrainUnit> batch,
                    const SgdConfig& cfg, Gradients& scratch) {
  if (!(cfg.lr >= 0.0)) throw std::invalid_argument("learning rate must be non-negative");
  StepResult result;
  if (batch.empty()) return result;
  scratch.clear();
  const double weight = 1.0 / static_cast<double>(batch.size());
  for (const auto& unit : batch) {
    result.loss += weight * unit_loss_and_grad(model, unit, cfg.mix, weight, scratch);
  }
  if (!std::isfinite(result.loss) || !scratch.all_finite()) {
    result.error = "non-finite gradient; step aborted";
    return result;
  }
  scratch.apply(model, cfg.lr);
  result.applied = true;
  return result;
}

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_string(std::string_view s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw std::invalid_argument("unknown optimizer '" + std::string(s) + "' (expected sgd or adam)");
}

void OptimizerConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("adam betas must be in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("adam epsilon must be positive");
}

Optimizer::Optimizer(const TrainableMlm& model, OptimizerConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.kind == OptimizerKind::adam) {
    for (auto blk : kAllBlocks) {
      const auto i = static_cast<std::size_t>(blk);
      m_[i].assign(model.block(blk).size(), 0.0);
      v_[i].assign(model.block(blk).size(), 0.0);
    }
  }
}

void Optimizer::apply(TrainableMlm& model, const Gradients& grads) {
  ++steps_;
  if (cfg_.kind == OptimizerKind::sgd) {
    grads.apply(model, cfg_.lr);
    return;
  }
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t);
  const double step = cfg_.lr * std::sqrt(c2) / c1;
  grads.for_each_row([&](Block blk, std::size_t off, std::span<const double> g) {
    const auto i = static_cast<std::size_t>(blk);
    auto params = model.block(blk);
    for (std::size_t k = 0; k < g.size(); ++k) {
      double& m = m_[i][off + k];
      double& v = v_[i][off + k];
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g[k];
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g[k] * g[k];
      params[off + k] -= step * m / (std::sqrt(v) + cfg_.epsilon);
    }
  });
}

StepResult train_step(TrainableMlm& model, std::span<const PretrainUnit> batch,
                      const MixedLossConfig& mix, Optimizer& opt, Gradients& scratch) {
  StepResult result;
  if (batch.empty()) return result;
  scratch.clear();
  const double weight = 1.0 / static_cast<double>(batch.size());
  for (const auto& unit : batch) {
    result.loss += weight * unit_loss_and_grad(model, unit, mix, weight, scratch);
  }
  if (!std::isfinite(result.loss) || !scratch.all_finite()) {
    result.error = "non-finite gradient; step aborted";
    return result;
  }
  opt.apply(model, scratch);
  result.applied = true;
  return result;
}

GradCheckResult grad_check(const TrainableMlm& model, const LossFn& loss,
                           std::span<const TokenId> reachable_tokens,
                           std::span<const int> reachable_segments, const GradCheckConfig& cfg) {
  TrainableMlm work = model;
  Gradients grads(work);
  loss(work, &grads);

  const std::size_t d = work.dim();
  std::vector<std::pair<Block, std::size_t>> candidates;
  for (TokenId t : std::set<TokenId>(reachable_tokens.begin(), reachable_tokens.end())) {
    for (std::size_t k = 0; k < d; ++k) {
      candidates.emplace_back(Block::embedding, static_cast<std::size_t>(t) * d + k);
    }
  }
  std::set<std::size_t> rows;
  for (int s : reachable_segments) rows.insert(work.segment_row(s));
  for (std::size_t r : rows) {
    for (std::size_t k = 0; k < d; ++k) candidates.emplace_back(Block::segment, r * d + k);
  }
  for (std::size_t i = 0; i < work.block(Block::output).size(); ++i) {
    candidates.emplace_back(Block::output, i);
  }
  for (std::size_t i = 0; i < work.vocab_size(); ++i) candidates.emplace_back(Block::bias, i);

  Rng rng(cfg.seed);
  GradCheckResult result;
  for (std::size_t n = 0; n < cfg.num_params && !candidates.empty(); ++n) {
    const auto [blk, idx] = candidates[rng.index(candidates.size())];
    double& param = work.block(blk)[idx];
    const double orig = param;
    param = orig + cfg.epsilon;
    const double lp = loss(work, nullptr);
    param = orig - cfg.epsilon;
    const double lm = loss(work, nullptr);
    param = orig;
    const double g_fd = (lp - lm) / (2.0 * cfg.epsilon);
    const double g_a = grads.value(blk, idx) * cfg.analytic_scale;
    const double rel = std::abs(g_a - g_fd) / std::max(1e-8, std::abs(g_a) + std::abs(g_fd));
    result.max_relative_error = std::max(result.max_relative_error, rel);
    ++result.checked;
  }
  return result;
}

GradCheckResult grad_check(const TrainableMlm& model, const MaskedExample& ex,
                           const GradCheckConfig& cfg) {
  LossFn fn = [&](const TrainableMlm& m, Gradients* g) {
    return g ? masked_ce_loss_and_grad(m, ex, 1.0, *g) : masked_ce_loss(m, ex);
  };
  return grad_check(model, fn, ex.input_ids, ex.segment_ids, cfg);
}

GradCheckResult grad_check(const TrainableMlm& model, const PretrainUnit& unit,
                           const MixedLossConfig& mix, const GradCheckConfig& cfg) {
  LossFn fn = [&](const TrainableMlm& m, Gradients* g) {
    return g ? unit_loss_and_grad(m, unit, mix, 1.0, *g) : unit_loss(m, unit, mix);
  };
  std::vector<TokenId> tokens = unit.token.input_ids;
  std::vector<int> segments = unit.token.segment_ids;
  if (unit.segment) {
    tokens.insert(tokens.end(), unit.segment->input_ids.begin(), unit.segment->input_ids.end());
    segments.insert(segments.end(), unit.segment->segment_ids.begin(),
                    unit.segment->segment_ids.end());
  }
  return grad_check(model, fn, tokens, segments, cfg);
}

namespace {
template <class Fn>
void for_each_batch(std::size_t n, std::size_t batch_size, std::uint64_t seed, std::size_t epoch,
                    Fn&& fn) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed + 0x9e37 * (epoch + 1));
  rng.shuffle(order.begin(), order.end());
  batch_size = std::max<std::size_t>(batch_size, 1);
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    if (!fn(std::span<const std::size_t>(order.data() + start, end - start))) return;
  }
}
}  // namespace

TrainReport pretrain(TrainableMlm& model, std::span<const PretrainUnit> units,
                     const PretrainConfig& cfg) {
  TrainReport report;
  if (units.empty()) return report;
  Gradients scratch(model);
  Optimizer opt(model, cfg.optimizer);
  std::vector<PretrainUnit> batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double total = 0.0;
    std::size_t batches = 0;
    bool stop = false;
    for_each_batch(units.size(), cfg.batch_size, cfg.seed, epoch,
                   [&](std::span<const std::size_t> idx) {
                     if (cfg.max_steps != 0 && report.steps >= cfg.max_steps) {
                       stop = true;
                       return false;
                     }
                     batch.clear();
                     for (std::size_t i : idx) batch.push_back(units[i]);
                     StepResult r = train_step(model, batch, cfg.mix, opt, scratch);
                     ++report.steps;
                     if (!r.applied) ++report.aborted_steps;
                     total += r.loss;
                     ++batches;
                     return true;
                   });
    if (batches) report.epoch_loss.push_back(total / static_cast<double>(batches));
    if (stop) break;
  }
  return report;
}

std::vector<SftExample> render_sft_examples(std::span<const corpus::LabeledTriple> triples,
                                            const corpus::Catalog& catalog,
                                            const dke::Vocab& vocab, const RelevancePrompt& prompt,
                                            std::size_t* skipped) {
  std::vector<SftExample> out;
  out.reserve(triples.size());
  for (const auto& t : triples) {
    auto it = catalog.find(t.item_id);
    if (it == catalog.end()) {
      if (skipped) ++*skipped;
      continue;
    }
    out.push_back({pet_render(prompt, vocab, t.query, it->second, t.label), t.label});
  }
  return out;
}

namespace {
SftStepResult sft_accumulate(const TrainableMlm& model, std::span<const SftExample> batch,
                             Verbalizers v, Gradients& scratch) {
  SftStepResult result;
  if (batch.empty()) return result;
  scratch.clear();
  const double weight = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch) {
    if (ex.label != 0 && ex.label != 1) throw std::invalid_argument("sft label must be 0 or 1");
    result.loss += weight * verbalizer_ce_loss(model, ex.prompt, v, ex.label, weight, &scratch);
  }
  result.used = batch.size();
  return result;
}
}  // namespace

SftStepResult sft_step(TrainableMlm& model, std::span<const SftExample> batch, Verbalizers v,
                       double lr, Gradients& scratch) {
  SftStepResult result = sft_accumulate(model, batch, v, scratch);
  if (result.used && std::isfinite(result.loss) && scratch.all_finite()) {
    scratch.apply(model, lr);
    result.applied = true;
  }
  return result;
}

SftStepResult sft_step(TrainableMlm& model, std::span<const corpus::LabeledTriple> triples,
                       const corpus::Catalog& catalog, const dke::Vocab& vocab,
                       const RelevancePrompt& prompt, double lr, Gradients& scratch) {
  std::size_t skipped = 0;
  auto examples = render_sft_examples(triples, catalog, vocab, prompt, &skipped);
  SftStepResult r = sft_step(model, examples, verbalizer_ids(prompt, vocab), lr, scratch);
  r.skipped = skipped;
  return r;
}

TrainReport train_sft(TrainableMlm& model, std::span<const SftExample> examples, Verbalizers v,
                      const SftConfig& cfg) {
  TrainReport report;
  if (examples.empty()) return report;
  Gradients scratch(model);
  Optimizer opt(model, cfg.optimizer);
  std::vector<SftExample> batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double total = 0.0;
    std::size_t batches = 0;
    for_each_batch(examples.size(), cfg.batch_size, cfg.seed, epoch,
                   [&](std::span<const std::size_t> idx) {
                     batch.clear();
                     for (std::size_t i : idx) batch.push_back(examples[i]);
                     SftStepResult r = sft_accumulate(model, batch, v, scratch);
                     if (r.used && std::isfinite(r.loss) && scratch.all_finite()) {
                       opt.apply(model, scratch);
                       r.applied = true;
                     }
                     ++report.steps;
                     if (!r.applied) ++report.aborted_steps;
                     total += r.loss;
                     ++batches;
                     return true;
                   });
    report.epoch_loss.push_back(total / static_cast<double>(batches));
  }
  return report;
}

}  // namespace forge::mlm
