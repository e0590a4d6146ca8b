#include <cmath>
#include <numeric>

#include "forge/mlm/checkpoint.hpp"
#include "forge/mlm/relevance.hpp"
#include "forge/mlm/training.hpp"
#include "unit/support.hpp"

using namespace forge;
using namespace forge::mlm;
using dke::Vocab;

namespace {

TrainableMlm zero_model(std::size_t vocab, std::size_t dim, Activation act) {
  ModelConfig cfg;
  cfg.dim = dim;
  cfg.activation = act;
  TrainableMlm m(vocab, cfg);
  for (Block b : kAllBlocks) {
    for (double& x : m.block(b)) x = 0.0;
  }
  return m;
}

MaskedExample one_masked(std::vector<TokenId> ids, std::vector<int> segs, std::size_t pos, int label) {
  MaskedExample ex;
  ex.input_ids = std::move(ids);
  ex.segment_ids = std::move(segs);
  ex.labels.assign(ex.input_ids.size(), dke::kIgnoreLabel);
  ex.labels[pos] = label;
  ex.input_ids[pos] = Vocab::kMask;
  ex.position_ids.resize(ex.input_ids.size());
  std::iota(ex.position_ids.begin(), ex.position_ids.end(), 0);
  ex.masked_positions = {pos};
  return ex;
}

// E[5] + S[1] = (1, 1, 0, ...); W[5] = (1, 2, 3, 0, ...); b[3] = 0.5.
TrainableMlm hand_model(Activation act) {
  auto m = zero_model(6, 8, act);
  m.embedding(5)[0] = 1.0;
  m.segment(1)[1] = 1.0;
  m.output(5)[0] = 1.0;
  m.output(5)[1] = 2.0;
  m.output(5)[2] = 3.0;
  m.bias(3) = 0.5;
  return m;
}

corpus::ItemDoc clinic() {
  return test::item("c1", {{"title", "City Clinic"}, {"keywords", "clinic,health"}});
}

Vocab prompt_vocab() {
  RelevancePrompt p;
  auto texts = p.vocabulary_text();
  texts.push_back("flu shot taxi ride City Clinic | clinic,health Taxi Co");
  return Vocab::build(texts);
}

}  // namespace

TEST_SUITE("mlm") {

TEST_CASE("forward pass matches a hand-computed example") {
  const auto ex = one_masked({5, 5}, {1, 1}, 1, 5);
  for (auto [act, expected5] : {std::pair{Activation::identity, 3.0}, {Activation::quadratic, 6.0},
                                {Activation::tanh, std::tanh(1.0) * 3.0}}) {
    const auto m = hand_model(act);
    const auto fp = encode_context(m, ex.input_ids, ex.segment_ids, ex.masked_positions);
    CHECK(fp.context == std::vector<double>{1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0});
    CHECK(logit(m, fp, 5) == doctest::Approx(expected5));
    CHECK(logit(m, fp, 3) == doctest::Approx(0.5));
    CHECK(logit(m, fp, 0) == 0.0);
    const auto p = distribution(m, fp);
    const double z = 4.0 + std::exp(0.5) + std::exp(expected5);
    CHECK(p[5] == doctest::Approx(std::exp(expected5) / z));
    CHECK(masked_ce_loss(m, ex) == doctest::Approx(std::log(z) - expected5));
  }
}

TEST_CASE("distributions sum to one") {
  ModelConfig cfg;
  cfg.dim = 8;
  const TrainableMlm m(50, cfg);
  Rng rng(1);
  for (int n = 0; n < 50; ++n) {
    std::vector<TokenId> ids;
    for (int i = 0; i < 6; ++i) ids.push_back(static_cast<TokenId>(5 + rng.index(45)));
    const auto ex = one_masked(ids, std::vector<int>(6, 1), rng.index(6), 7);
    for (const auto& p : forward_logits(m, ex)) {
      CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("a zero model over 100 tokens has loss ln 100") {
  const auto m = zero_model(100, 8, Activation::quadratic);
  CHECK(masked_ce_loss(m, one_masked({10, 11, 12}, {1, 1, 1}, 0, 10)) ==
        doctest::Approx(std::log(100.0)));
  // fully masked context falls back to uniform
  CHECK(masked_ce_loss(m, one_masked({10}, {1}, 0, 10)) == doctest::Approx(std::log(100.0)));
}

TEST_CASE("loss stays finite for huge logits and equals a long-double log-sum-exp") {
  auto m = hand_model(Activation::identity);
  for (double& w : m.output(5)) w *= 400.0;
  m.bias(4) = 900.0;
  const auto ex = one_masked({5, 5}, {1, 1}, 1, 5);
  const auto fp = encode_context(m, ex.input_ids, ex.segment_ids, ex.masked_positions);
  long double mx = -1e300L;
  for (TokenId v = 0; v < 6; ++v) mx = std::max<long double>(mx, logit(m, fp, v));
  long double s = 0;
  for (TokenId v = 0; v < 6; ++v) s += std::exp(static_cast<long double>(logit(m, fp, v)) - mx);
  const double expected = static_cast<double>(mx + std::log(s) - logit(m, fp, 5));
  const double got = masked_ce_loss(m, ex);
  CHECK(std::isfinite(got));
  CHECK(got == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("mixed loss weights token and segment losses by alpha") {
  ModelConfig cfg;
  cfg.dim = 8;
  const TrainableMlm m(20, cfg);
  auto tok = one_masked({7, 8, 9, 10}, {1, 1, 2, 2}, 1, 8);
  auto seg = one_masked({7, 8, 9, 10}, {1, 1, 2, 2}, 2, 9);
  seg.kind = dke::MaskKind::segment;
  for (double alpha : {0.0, 0.3, 0.7, 1.0}) {
    const double expected = alpha * masked_ce_loss(m, tok) + (1 - alpha) * masked_ce_loss(m, seg);
    CHECK(mixed_loss(m, tok, seg, {alpha}) == doctest::Approx(expected));
  }
  CHECK_THROWS_AS(mixed_loss(m, seg, tok, {0.7}), std::invalid_argument);
  CHECK_THROWS_AS(MixedLossConfig{1.5}.validate(), std::invalid_argument);
}

TEST_CASE("sgd_step: lr 0 is a no-op, small steps descend, repeated steps converge") {
  ModelConfig cfg;
  cfg.dim = 8;
  TrainableMlm m(30, cfg);
  PretrainUnit unit{one_masked({6, 7, 8, 9}, {1, 1, 1, 1}, 2, 8), std::nullopt};
  const std::vector<PretrainUnit> batch = {unit};
  Gradients g(m);

  const TrainableMlm before = m;
  auto r = sgd_step(m, batch, {0.0, {}}, g);
  CHECK(r.applied);
  for (Block b : kAllBlocks) {
    CHECK(std::equal(m.block(b).begin(), m.block(b).end(), before.block(b).begin()));
  }

  const double l0 = unit_loss(m, unit, {});
  sgd_step(m, batch, {0.05, {}}, g);
  CHECK(unit_loss(m, unit, {}) < l0);

  for (int i = 0; i < 200; ++i) sgd_step(m, batch, {0.5, {}}, g);
  CHECK(unit_loss(m, unit, {}) < 0.05);
}

TEST_CASE("analytic gradients agree with finite differences") {
  for (Activation act : {Activation::identity, Activation::tanh, Activation::quadratic}) {
    ModelConfig cfg;
    cfg.dim = 8;
    cfg.activation = act;
    cfg.init_scale = 0.5;
    const TrainableMlm m(12, cfg);
    auto tok = one_masked({5, 6, 7, 3, 8, 9, 4}, {1, 1, 2, 0, 3, 3, 0}, 1, 6);
    auto seg = one_masked({5, 6, 7, 3, 8, 9, 4}, {1, 1, 2, 0, 3, 3, 0}, 4, 8);
    seg.kind = dke::MaskKind::segment;
    CHECK(grad_check(m, tok).max_relative_error < 1e-5);
    CHECK(grad_check(m, PretrainUnit{tok, seg}, {0.7}).max_relative_error < 1e-5);
  }
}

TEST_CASE("grad_check detects a scaled gradient and ignores unused parameters") {
  ModelConfig cfg;
  cfg.dim = 8;
  cfg.init_scale = 0.5;
  const TrainableMlm m(12, cfg);
  const auto ex = one_masked({5, 6, 7}, {1, 1, 1}, 1, 6);
  GradCheckConfig gc;
  gc.analytic_scale = 2.0;
  // |2g - g| / (|2g| + |g|) = 1/3 on every parameter with a nonzero gradient
  CHECK(grad_check(m, ex, gc).max_relative_error == doctest::Approx(1.0 / 3.0).epsilon(1e-4));

  const LossFn constant = [](const TrainableMlm&, Gradients*) { return 1.0; };
  const std::vector<TokenId> toks = {5, 6};
  const std::vector<int> segs = {1};
  const auto r = grad_check(m, constant, toks, segs);
  CHECK(r.checked > 0);
  CHECK(r.max_relative_error == 0.0);
}

TEST_CASE("pet prompt renders the exact text, one mask and segment split") {
  const RelevancePrompt p;
  CHECK(pet_text(p, "flu shot", clinic()) == "Is flu shot and City Clinic | clinic,health related? [MASK]");
  const auto v = prompt_vocab();
  const auto ex = pet_render(p, v, "flu shot", clinic(), 1);
  REQUIRE(ex.masked_positions.size() == 1);
  CHECK(ex.input_ids[ex.masked_positions[0]] == Vocab::kMask);
  CHECK(ex.labels[ex.masked_positions[0]] == v.id("yes"));
  std::vector<std::string> seg2;
  for (std::size_t i = 0; i < ex.input_ids.size(); ++i) {
    if (ex.segment_ids[i] == 2) seg2.push_back(v.token(ex.input_ids[i]));
  }
  CHECK(seg2 == std::vector<std::string>{"City", "Clinic", "|", "clinic", ",", "health"});
  nlohmann::ordered_json j;
  j["input_ids"] = ex.input_ids;
  j["segment_ids"] = ex.segment_ids;
  j["labels"] = ex.labels;
  test::check_golden("pet_render_flu_shot.json", j.dump() + "\n");

  CHECK_THROWS_AS(RelevancePrompt{"Is {Q} related? [MASK]"}.validate(), std::invalid_argument);
  CHECK_THROWS_AS(RelevancePrompt({"{Q} {I} [MASK] [MASK]"}).validate(), std::invalid_argument);
}

TEST_CASE("relevance score is the renormalized verbalizer probability") {
  const auto v = prompt_vocab();
  const RelevancePrompt p;
  auto m = zero_model(v.size(), 8, Activation::quadratic);
  auto r = relevance_score(m, v, p, "flu shot", clinic());
  CHECK(r.score == 0.5);
  CHECK(r.label == 1);  // ties go to relevant

  m.bias(v.id("yes")) = std::log(4.0);
  r = relevance_score(m, v, p, "flu shot", clinic());
  CHECK(r.score == doctest::Approx(0.8));
  CHECK(r.label == 1);

  m.bias(v.id("yes")) = -std::log(4.0);
  CHECK(relevance_score(m, v, p, "flu shot", clinic()).score == doctest::Approx(0.2));
}

TEST_CASE("adding a constant to every logit leaves scores and losses unchanged") {
  const auto v = prompt_vocab();
  const RelevancePrompt p;
  ModelConfig cfg;
  cfg.dim = 8;
  cfg.init_scale = 0.4;
  TrainableMlm m(v.size(), cfg);
  const auto ex = pet_render(p, v, "taxi ride", clinic(), 0);
  const double s0 = relevance_from_example(m, ex, verbalizer_ids(p, v)).score;
  const double l0 = masked_ce_loss(m, ex);
  for (double& b : m.block(Block::bias)) b += 17.0;
  CHECK(relevance_from_example(m, ex, verbalizer_ids(p, v)).score == doctest::Approx(s0).epsilon(1e-12));
  CHECK(masked_ce_loss(m, ex) == doctest::Approx(l0).epsilon(1e-10));
}

TEST_CASE("verbalizer cross-entropy and fine-tuning") {
  const auto v = prompt_vocab();
  const RelevancePrompt p;
  const Verbalizers vb = verbalizer_ids(p, v);
  auto m = zero_model(v.size(), 8, Activation::quadratic);
  const auto ex = pet_render(p, v, "flu shot", clinic());
  CHECK(verbalizer_ce_loss(m, ex, vb, 1) == doctest::Approx(std::log(2.0)));
  m.bias(vb.positive) = 20.0;
  CHECK(verbalizer_ce_loss(m, ex, vb, 1) < 1e-8);
  CHECK(verbalizer_ce_loss(m, ex, vb, 0) == doctest::Approx(20.0).epsilon(1e-6));

  corpus::Catalog cat;
  cat["c1"] = clinic();
  cat["t1"] = test::item("t1", {{"title", "Taxi Co"}, {"keywords", "taxi,ride"}});
  const std::vector<corpus::LabeledTriple> triples = {
      {"flu shot", "c1", 1}, {"flu shot", "t1", 0}, {"taxi ride", "t1", 1}, {"taxi ride", "c1", 0},
      {"flu", "c1", 1},      {"taxi", "c1", 0},     {"taxi", "t1", 1},      {"flu", "t1", 0},
      {"flu shot", "ghost", 1}};
  std::size_t skipped = 0;
  const auto examples = render_sft_examples(triples, cat, v, p, &skipped);
  CHECK(skipped == 1);
  REQUIRE(examples.size() == 8);

  ModelConfig mc;
  mc.dim = 16;
  TrainableMlm model(v.size(), mc);
  SftConfig sc;
  sc.epochs = 200;
  sc.batch_size = 8;
  train_sft(model, examples, vb, sc);
  std::size_t correct = 0;
  for (const auto& e : examples) {
    correct += relevance_from_example(model, e.prompt, vb).label == e.label;
  }
  CHECK(static_cast<double>(correct) / examples.size() > 0.95);
}

TEST_CASE("pretraining lowers the epoch loss and is seed-deterministic") {
  ModelConfig mc;
  mc.dim = 8;
  std::vector<PretrainUnit> units;
  for (int i = 0; i < 40; ++i) {
    const TokenId a = static_cast<TokenId>(5 + i % 4), b = static_cast<TokenId>(9 + i % 4);
    units.push_back({one_masked({a, b, a}, {1, 1, 1}, 1, b), std::nullopt});
  }
  PretrainConfig pc;
  pc.epochs = 20;
  pc.batch_size = 8;
  TrainableMlm m1(16, mc), m2(16, mc);
  const auto r1 = pretrain(m1, units, pc);
  const auto r2 = pretrain(m2, units, pc);
  CHECK(r1.epoch_loss.back() < r1.epoch_loss.front());
  CHECK(r1.epoch_loss == r2.epoch_loss);
  CHECK(r1.steps == 100);
}

TEST_CASE("checkpoint round-trips and rejects corruption") {
  const auto v = prompt_vocab();
  ModelConfig mc;
  mc.dim = 8;
  mc.activation = Activation::tanh;
  Checkpoint ck{v, TrainableMlm(v.size(), mc), {{"stage", "sft"}}};
  const std::string bytes = serialize_checkpoint(ck);
  const Checkpoint back = parse_checkpoint(bytes);
  CHECK(back.vocab == v);
  CHECK(back.meta["stage"] == "sft");
  CHECK(back.model.config().activation == Activation::tanh);
  for (Block b : kAllBlocks) {
    CHECK(std::equal(back.model.block(b).begin(), back.model.block(b).end(), ck.model.block(b).begin()));
  }
  CHECK(checkpoint_digest(back) == checkpoint_digest(ck));

  std::string bad = bytes;
  bad[3] ^= 1;
  CHECK_THROWS(parse_checkpoint(bad));
  CHECK_THROWS(parse_checkpoint(bytes.substr(0, bytes.size() / 2)));

  test::TempDir dir("ckpt");
  save_checkpoint(dir / "m.ckpt", ck);
  CHECK(serialize_checkpoint(load_checkpoint(dir / "m.ckpt")) == bytes);
  CHECK_THROWS_AS(load_checkpoint(dir / "nope.ckpt"), MissingInputError);
}

}  // TEST_SUITE
