#include "forge/mlm/model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <string>

#include "forge/util/rng.hpp"

namespace forge::mlm {

using dke::Vocab;

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::quadratic: return "quadratic";
  }
  return "identity";
}

Activation activation_from_string(std::string_view s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "quadratic") return Activation::quadratic;
  if (s == "identity" || s == "linear") return Activation::identity;
  throw std::invalid_argument("unknown activation '" + std::string(s) + "'");
}

TrainableMlm::TrainableMlm(std::size_t vocab_size, const ModelConfig& cfg)
    : vocab_size_(vocab_size), cfg_(cfg) {
  if (cfg_.dim < 8) throw std::invalid_argument("model dim must be >= 8");
  if (cfg_.max_segments < 1) throw std::invalid_argument("max_segments must be >= 1");
  if (vocab_size_ == 0) throw std::invalid_argument("vocab must be non-empty");
  E_.resize(vocab_size_ * cfg_.dim);
  W_.resize(vocab_size_ * cfg_.dim);
  b_.assign(vocab_size_, 0.0);
  S_.resize(cfg_.max_segments * cfg_.dim);
  Rng rng(cfg_.seed);
  for (double& x : E_) x = rng.uniform(-cfg_.init_scale, cfg_.init_scale);
  for (double& x : W_) x = rng.uniform(-cfg_.init_scale, cfg_.init_scale);
  for (double& x : S_) x = rng.uniform(-cfg_.init_scale, cfg_.init_scale) * 0.1;
}

std::span<double> TrainableMlm::block(Block b) {
  switch (b) {
    case Block::embedding: return E_;
    case Block::output: return W_;
    case Block::bias: return b_;
    case Block::segment: return S_;
  }
  return {};
}

std::span<const double> TrainableMlm::block(Block b) const {
  return const_cast<TrainableMlm*>(this)->block(b);
}

std::size_t TrainableMlm::segment_row(int s) const {
  if (s <= 0) return 0;
  return std::min(static_cast<std::size_t>(s), cfg_.max_segments - 1);
}

bool TrainableMlm::all_finite() const {
  for (auto blk : kAllBlocks) {
    for (double x : block(blk)) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

Gradients::Gradients(const TrainableMlm& model)
    : dim_(model.dim()),
      E_(model.block(Block::embedding).size(), 0.0),
      W_(model.block(Block::output).size(), 0.0),
      b_(model.vocab_size(), 0.0),
      S_(model.block(Block::segment).size(), 0.0),
      e_touched_(model.vocab_size(), 0),
      w_touched_(model.vocab_size(), 0),
      s_touched_(model.max_segments(), 0) {}

std::span<double> Gradients::touch(std::vector<double>& m, std::vector<char>& flags,
                                   std::vector<std::size_t>& rows, std::size_t r) {
  if (!flags[r]) {
    flags[r] = 1;
    rows.push_back(r);
  }
  return {m.data() + r * dim_, dim_};
}

std::span<double> Gradients::embedding(TokenId t) {
  return touch(E_, e_touched_, e_rows_, static_cast<std::size_t>(t));
}
std::span<double> Gradients::output(TokenId t) {
  return touch(W_, w_touched_, w_rows_, static_cast<std::size_t>(t));
}
std::span<double> Gradients::segment(std::size_t row) {
  return touch(S_, s_touched_, s_rows_, row);
}
double& Gradients::bias(TokenId t) {
  touch(W_, w_touched_, w_rows_, static_cast<std::size_t>(t));
  return b_[static_cast<std::size_t>(t)];
}

double Gradients::value(Block b, std::size_t index) const {
  switch (b) {
    case Block::embedding: return E_[index];
    case Block::output: return W_[index];
    case Block::bias: return b_[index];
    case Block::segment: return S_[index];
  }
  return 0.0;
}

void Gradients::clear() {
  auto zero_rows = [&](std::vector<double>& m, std::vector<char>& flags,
                       std::vector<std::size_t>& rows) {
    for (std::size_t r : rows) {
      std::fill_n(m.begin() + static_cast<std::ptrdiff_t>(r * dim_), dim_, 0.0);
      flags[r] = 0;
    }
    rows.clear();
  };
  for (std::size_t r : w_rows_) b_[r] = 0.0;
  zero_rows(E_, e_touched_, e_rows_);
  zero_rows(W_, w_touched_, w_rows_);
  zero_rows(S_, s_touched_, s_rows_);
}

void Gradients::scale(double factor) {
  auto scale_rows = [&](std::vector<double>& m, const std::vector<std::size_t>& rows) {
    for (std::size_t r : rows) {
      for (std::size_t k = 0; k < dim_; ++k) m[r * dim_ + k] *= factor;
    }
  };
  scale_rows(E_, e_rows_);
  scale_rows(W_, w_rows_);
  scale_rows(S_, s_rows_);
  for (std::size_t r : w_rows_) b_[r] *= factor;
}

bool Gradients::all_finite() const {
  auto rows_finite = [&](const std::vector<double>& m, const std::vector<std::size_t>& rows) {
    for (std::size_t r : rows) {
      for (std::size_t k = 0; k < dim_; ++k) {
        if (!std::isfinite(m[r * dim_ + k])) return false;
      }
    }
    return true;
  };
  for (std::size_t r : w_rows_) {
    if (!std::isfinite(b_[r])) return false;
  }
  return rows_finite(E_, e_rows_) && rows_finite(W_, w_rows_) && rows_finite(S_, s_rows_);
}

void Gradients::apply(TrainableMlm& model, double lr) const {
  auto apply_rows = [&](std::span<double> params, const std::vector<double>& g,
                        const std::vector<std::size_t>& rows) {
    for (std::size_t r : rows) {
      for (std::size_t k = 0; k < dim_; ++k) params[r * dim_ + k] -= lr * g[r * dim_ + k];
    }
  };
  apply_rows(model.block(Block::embedding), E_, e_rows_);
  apply_rows(model.block(Block::output), W_, w_rows_);
  apply_rows(model.block(Block::segment), S_, s_rows_);
  auto bias = model.block(Block::bias);
  for (std::size_t r : w_rows_) bias[r] -= lr * b_[r];
}

namespace {
std::atomic<std::size_t> g_empty_context_events{0};

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}
}  // namespace

std::size_t empty_context_events() { return g_empty_context_events.load(); }

ForwardPass encode_context(const TrainableMlm& model, std::span<const TokenId> input_ids,
                           std::span<const int> segment_ids,
                           std::span<const std::size_t> masked) {
  const std::size_t d = model.dim();
  ForwardPass fp;
  fp.context.assign(d, 0.0);
  std::vector<char> excluded(input_ids.size(), 0);
  for (std::size_t p : masked) excluded[p] = 1;
  for (std::size_t i = 0; i < input_ids.size(); ++i) {
    const TokenId t = input_ids[i];
    if (excluded[i] || t == Vocab::kPad || Vocab::is_separator(t)) continue;
    fp.context_positions.push_back(i);
    auto e = model.embedding(t);
    auto s = model.segment(segment_ids[i]);
    for (std::size_t k = 0; k < d; ++k) fp.context[k] += e[k] + s[k];
  }
  if (fp.context_positions.empty()) {
    fp.empty_context = true;
    ++g_empty_context_events;
  } else {
    const double inv = 1.0 / static_cast<double>(fp.context_positions.size());
    for (double& x : fp.context) x *= inv;
  }
  fp.hidden = fp.context;
  if (model.config().activation == Activation::tanh) {
    for (double& x : fp.hidden) x = std::tanh(x);
  } else if (model.config().activation == Activation::quadratic) {
    for (double& x : fp.hidden) x += x * x;
  }
  return fp;
}

double logit(const TrainableMlm& model, const ForwardPass& fp, TokenId v) {
  return dot(model.output(v), fp.hidden) + model.bias(v);
}

std::vector<double> distribution(const TrainableMlm& model, const ForwardPass& fp) {
  const std::size_t V = model.vocab_size();
  if (fp.empty_context) return std::vector<double>(V, 1.0 / static_cast<double>(V));
  std::vector<double> p(V);
  double mx = -INFINITY;
  for (std::size_t v = 0; v < V; ++v) {
    p[v] = logit(model, fp, static_cast<TokenId>(v));
    mx = std::max(mx, p[v]);
  }
  double z = 0.0;
  for (double& x : p) {
    x = std::exp(x - mx);
    z += x;
  }
  for (double& x : p) x /= z;
  return p;
}

std::vector<std::vector<double>> forward_logits(const TrainableMlm& model, const MaskedExample& ex) {
  ForwardPass fp = encode_context(model, ex.input_ids, ex.segment_ids, ex.masked_positions);
  auto dist = distribution(model, fp);
  return std::vector<std::vector<double>>(ex.masked_positions.size(), dist);
}

void backward(const TrainableMlm& model, const ForwardPass& fp, std::span<const TokenId> input_ids,
              std::span<const int> segment_ids, std::span<const std::pair<TokenId, double>> dlogits,
              double weight, Gradients& grads) {
  if (fp.empty_context) return;
  const std::size_t d = model.dim();
  std::vector<double> dh(d, 0.0);
  for (const auto& [v, g] : dlogits) {
    if (g == 0.0) continue;
    auto w = model.output(v);
    auto gw = grads.output(v);
    const double wg = weight * g;
    for (std::size_t k = 0; k < d; ++k) {
      gw[k] += wg * fp.hidden[k];
      dh[k] += g * w[k];
    }
    grads.bias(v) += wg;
  }
  if (model.config().activation == Activation::tanh) {
    for (std::size_t k = 0; k < d; ++k) dh[k] *= 1.0 - fp.hidden[k] * fp.hidden[k];
  } else if (model.config().activation == Activation::quadratic) {
    for (std::size_t k = 0; k < d; ++k) dh[k] *= 1.0 + 2.0 * fp.context[k];
  }
  const double scale = weight / static_cast<double>(fp.context_positions.size());
  for (double& x : dh) x *= scale;
  for (std::size_t pos : fp.context_positions) {
    auto ge = grads.embedding(input_ids[pos]);
    auto gs = grads.segment(model.segment_row(segment_ids[pos]));
    for (std::size_t k = 0; k < d; ++k) {
      ge[k] += dh[k];
      gs[k] += dh[k];
    }
  }
}

namespace {

void check_example(const TrainableMlm& model, const MaskedExample& ex) {
  if (ex.masked_positions.empty()) throw std::invalid_argument("example has no masked positions");
  for (std::size_t p : ex.masked_positions) {
    const int label = ex.labels.at(p);
    if (label < 0 || static_cast<std::size_t>(label) >= model.vocab_size()) {
      throw std::invalid_argument("masked position without a valid label");
    }
  }
}

// Loss and dL/dlogits for the mean CE over masked positions.
double ce_with_dlogits(const TrainableMlm& model, const MaskedExample& ex, const ForwardPass& fp,
                       std::vector<std::pair<TokenId, double>>* dlogits) {
  const std::size_t V = model.vocab_size();
  const double n = static_cast<double>(ex.masked_positions.size());
  if (fp.empty_context) return std::log(static_cast<double>(V));
  std::vector<double> logits(V);
  double mx = -INFINITY;
  for (std::size_t v = 0; v < V; ++v) {
    logits[v] = logit(model, fp, static_cast<TokenId>(v));
    mx = std::max(mx, logits[v]);
  }
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  const double lse = mx + std::log(z);
  double loss = 0.0;
  for (std::size_t p : ex.masked_positions) loss += lse - logits[static_cast<std::size_t>(ex.labels[p])];
  loss /= n;
  if (dlogits) {
    dlogits->resize(V);
    for (std::size_t v = 0; v < V; ++v) {
      (*dlogits)[v] = {static_cast<TokenId>(v), std::exp(logits[v] - lse)};
    }
    for (std::size_t p : ex.masked_positions) {
      (*dlogits)[static_cast<std::size_t>(ex.labels[p])].second -= 1.0 / n;
    }
  }
  return loss;
}

}  // namespace

double masked_ce_loss(const TrainableMlm& model, const MaskedExample& ex) {
  check_example(model, ex);
  ForwardPass fp = encode_context(model, ex.input_ids, ex.segment_ids, ex.masked_positions);
  return ce_with_dlogits(model, ex, fp, nullptr);
}

double masked_ce_loss_and_grad(const TrainableMlm& model, const MaskedExample& ex, double weight,
                               Gradients& grads) {
  check_example(model, ex);
  ForwardPass fp = encode_context(model, ex.input_ids, ex.segment_ids, ex.masked_positions);
  std::vector<std::pair<TokenId, double>> dlogits;
  const double loss = ce_with_dlogits(model, ex, fp, &dlogits);
  backward(model, fp, ex.input_ids, ex.segment_ids, dlogits, weight, grads);
  return loss;
}

void MixedLossConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
}

namespace {
void check_kinds(const MaskedExample& token_ex, const MaskedExample& segment_ex) {
  if (token_ex.kind != dke::MaskKind::token || segment_ex.kind != dke::MaskKind::segment) {
    throw std::invalid_argument("mixed_loss expects (token, segment) masked examples");
  }
}
}  // namespace

double mixed_loss(const TrainableMlm& model, const MaskedExample& token_ex,
                  const MaskedExample& segment_ex, const MixedLossConfig& cfg) {
  cfg.validate();
  check_kinds(token_ex, segment_ex);
  return cfg.alpha * masked_ce_loss(model, token_ex) +
         (1.0 - cfg.alpha) * masked_ce_loss(model, segment_ex);
}

double mixed_loss_and_grad(const TrainableMlm& model, const MaskedExample& token_ex,
                           const MaskedExample& segment_ex, const MixedLossConfig& cfg,
                           double weight, Gradients& grads) {
  cfg.validate();
  check_kinds(token_ex, segment_ex);
  const double lt = masked_ce_loss_and_grad(model, token_ex, weight * cfg.alpha, grads);
  const double ls = masked_ce_loss_and_grad(model, segment_ex, weight * (1.0 - cfg.alpha), grads);
  return cfg.alpha * lt + (1.0 - cfg.alpha) * ls;
}

}  // namespace forge::mlm
