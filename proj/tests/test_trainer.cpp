#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "bepa/corpus.hpp"
#include "bepa/diagnostics.hpp"
#include "bepa/encoder.hpp"
#include "bepa/errors.hpp"
#include "bepa/numerics.hpp"
#include "bepa/trainer.hpp"

using namespace bepa;
using namespace bepa::trainer;
using nlohmann::json;

namespace {

encoder::EncoderConfig tiny_encoder() {
  encoder::EncoderConfig c;
  c.vocab_size = 0;  // filled from data
  c.d_model = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_ff = 32;
  c.max_len = 12;
  c.dropout = 0.1;
  return c;
}

std::vector<corpus::ParallelPair> tiny_corpus(std::size_t n_pairs = 60) {
  const auto base = corpus::default_base_vocab(12);
  std::vector<corpus::LanguageSpec> langs = {
      corpus::generate_language(0, base, false),
      corpus::generate_language(1, base, true)};
  return corpus::generate_parallel_corpus(langs, n_pairs, 2, 4, 7);
}

TrainConfig fast_train() {
  TrainConfig c;
  c.learning_rate = 1e-3;
  c.warmup_steps = 2;
  c.batch_size = 8;
  c.epochs = 2;
  c.seed = 5;
  return c;
}

bool params_equal(const encoder::ModelParams& a, const encoder::ModelParams& b) {
  return encoder::params_fingerprint(a) == encoder::params_fingerprint(b);
}

}  // namespace

TEST_CASE("train config defaults survive an empty json object") {
  TrainConfig c = train_config_from_json(json::object());
  CHECK(c.learning_rate == 2e-5);
  CHECK(c.weight_decay == 0.01);
  CHECK(c.warmup_steps == 500);
  CHECK(c.batch_size == 16);
  CHECK(c.epochs == 10);
  CHECK(c.mask_prob == 0.15);
  CHECK(c.lambda == 1.0);
  CHECK(c.temperature == 0.1);
  CHECK(c.alignment_loss == objective::AlignmentLoss::kInfoNce);
  CHECK(c.mode == corpus::PackingMode::kBilingual);
  CHECK(c.seed == 0);
  CHECK(c.mlm_only == false);
}

TEST_CASE("train config parsing is strict") {
  CHECK_THROWS_AS(train_config_from_json(json{{"learning_rte", 1e-3}}),
                  ConfigError);
  // The internal mlm-only switch has no config spelling.
  CHECK_THROWS_AS(train_config_from_json(json{{"mlm_only", true}}),
                  ConfigError);
  CHECK_THROWS_AS(train_config_from_json(json{{"learning_rate", "fast"}}),
                  ConfigError);
  CHECK_THROWS_AS(train_config_from_json(json{{"mode", "trilingual"}}),
                  ConfigError);
  CHECK_THROWS_AS(train_config_from_json(json{{"alignment_loss", "l1"}}),
                  ConfigError);
  CHECK_THROWS_AS(train_config_from_json(json::array()), ConfigError);

  TrainConfig c = train_config_from_json(
      json{{"mode", "monolingual"}, {"alignment_loss", "cosine"}, {"seed", 9}});
  CHECK(c.mode == corpus::PackingMode::kMonolingual);
  CHECK(c.alignment_loss == objective::AlignmentLoss::kCosine);
  CHECK(c.seed == 9);
}

TEST_CASE("train config round-trips through json") {
  TrainConfig c;
  c.learning_rate = 3e-4;
  c.batch_size = 4;
  c.lambda = 0.5;
  c.alignment_loss = objective::AlignmentLoss::kMse;
  c.mode = corpus::PackingMode::kMonolingual;
  c.seed = 1234;
  TrainConfig back = train_config_from_json(json::parse(to_json(c).dump()));
  CHECK(back.learning_rate == c.learning_rate);
  CHECK(back.batch_size == c.batch_size);
  CHECK(back.lambda == c.lambda);
  CHECK(back.alignment_loss == c.alignment_loss);
  CHECK(back.mode == c.mode);
  CHECK(back.seed == c.seed);
}

TEST_CASE("config validation catches bad values") {
  TrainConfig c;
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.temperature = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.mask_prob = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lambda = -0.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("encoder config rejects vocab_size and unknown keys") {
  CHECK_THROWS_AS(encoder_config_from_json(json{{"vocab_size", 100}}),
                  ConfigError);
  CHECK_THROWS_AS(encoder_config_from_json(json{{"dmodel", 32}}), ConfigError);
  encoder::EncoderConfig c =
      encoder_config_from_json(json{{"d_model", 32}, {"n_heads", 8}});
  CHECK(c.d_model == 32);
  CHECK(c.n_heads == 8);
  CHECK(c.n_layers == 2);  // default
}

TEST_CASE("run config reads both sections") {
  RunConfig rc = run_config_from_json(json::parse(
      R"({"encoder": {"d_model": 24, "n_heads": 3}, "train": {"epochs": 3}})"));
  CHECK(rc.enc.d_model == 24);
  CHECK(rc.train.epochs == 3);
  CHECK(run_config_from_json(json::object()).train.epochs == 10);
  CHECK_THROWS_AS(run_config_from_json(json{{"optimizer", "adam"}}),
                  ConfigError);
}

TEST_CASE("learning rate warms up linearly then stays constant") {
  TrainConfig c;
  c.learning_rate = 1e-3;
  c.warmup_steps = 4;
  CHECK(lr_at_step(c, 1) == doctest::Approx(0.25e-3).epsilon(1e-15));
  CHECK(lr_at_step(c, 2) == doctest::Approx(0.5e-3).epsilon(1e-15));
  CHECK(lr_at_step(c, 3) == doctest::Approx(0.75e-3).epsilon(1e-15));
  CHECK(lr_at_step(c, 4) == 1e-3);
  CHECK(lr_at_step(c, 5) == 1e-3);
  CHECK(lr_at_step(c, 1000000) == 1e-3);
  c.warmup_steps = 0;
  CHECK(lr_at_step(c, 1) == 1e-3);
  CHECK_THROWS_AS(lr_at_step(c, 0), InvalidArgument);
}

TEST_CASE("adamw matches a scalar re-derivation for two steps") {
  encoder::EncoderConfig ec;
  ec.vocab_size = 8;
  ec.d_model = 4;
  ec.n_layers = 1;
  ec.n_heads = 2;
  ec.d_ff = 8;
  ec.max_len = 8;
  ec.dropout = 0.0;
  encoder::ModelParams p = encoder::ModelParams::allocate(ec);
  p.token_embedding(0, 0) = 0.5;
  encoder::ModelParams g = encoder::ModelParams::zeros_like(p);
  g.token_embedding(0, 0) = 2.0;

  TrainConfig c;
  c.learning_rate = 0.01;
  c.weight_decay = 0.1;
  c.warmup_steps = 0;
  AdamState state = AdamState::init(p);

  // Independent scalar recurrence with the same update equations.
  double sp = 0.5, sm = 0.0, sv = 0.0;
  auto scalar_step = [&](double grad, long t) {
    sm = c.adam_beta1 * sm + (1.0 - c.adam_beta1) * grad;
    sv = c.adam_beta2 * sv + (1.0 - c.adam_beta2) * grad * grad;
    const double bc1 = 1.0 - std::pow(c.adam_beta1, double(t));
    const double bc2 = 1.0 - std::pow(c.adam_beta2, double(t));
    sp -= c.learning_rate * (sm / bc1) / (std::sqrt(sv / bc2) + c.adam_eps) +
          c.learning_rate * c.weight_decay * sp;
  };

  adamw_step(p, g, state, c);
  scalar_step(2.0, 1);
  CHECK(p.token_embedding(0, 0) == doctest::Approx(sp).epsilon(1e-15));
  CHECK(state.step == 1);

  g.token_embedding(0, 0) = -1.0;
  adamw_step(p, g, state, c);
  scalar_step(-1.0, 2);
  CHECK(p.token_embedding(0, 0) == doctest::Approx(sp).epsilon(1e-15));
  CHECK(state.step == 2);

  // Zero gradient still decays the weight, and only the weight term moves.
  encoder::ModelParams p2 = encoder::ModelParams::allocate(ec);
  p2.token_embedding(0, 1) = 1.0;
  AdamState s2 = AdamState::init(p2);
  encoder::ModelParams g2 = encoder::ModelParams::zeros_like(p2);
  adamw_step(p2, g2, s2, c);
  const double expect = 1.0 - c.learning_rate * c.weight_decay * 1.0;
  CHECK(p2.token_embedding(0, 1) == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("split sizes follow the ninety-ten rule exactly") {
  for (std::size_t n : {1u, 5u, 9u, 10u, 11u, 19u, 20u, 100u, 101u, 999u}) {
    Split s = split_pairs(n);
    CHECK(s.validation.size() == n / 10);
    CHECK(s.train.size() == n - n / 10);
    // n_train = ceil(0.9 n).
    CHECK(s.train.size() == (9 * n + 9) / 10);

    std::set<std::size_t> all(s.train.begin(), s.train.end());
    all.insert(s.validation.begin(), s.validation.end());
    CHECK(all.size() == n);
    if (!all.empty()) CHECK(*all.rbegin() == n - 1);
  }
  Split a = split_pairs(100);
  Split b = split_pairs(100);
  CHECK(a.validation == b.validation);
  CHECK(a.train == b.train);
  CHECK(std::is_sorted(a.validation.begin(), a.validation.end()));
  CHECK(std::is_sorted(a.train.begin(), a.train.end()));
}

TEST_CASE("validation chunks fold a trailing singleton") {
  using Ranges = std::vector<std::pair<std::size_t, std::size_t>>;
  CHECK(chunk_ranges(17, 16) == Ranges{{0, 17}});
  CHECK(chunk_ranges(33, 16) == Ranges{{0, 16}, {16, 33}});
  CHECK(chunk_ranges(16, 16) == Ranges{{0, 16}});
  CHECK(chunk_ranges(32, 16) == Ranges{{0, 16}, {16, 32}});
  CHECK(chunk_ranges(35, 16) == Ranges{{0, 16}, {16, 32}, {32, 35}});
  CHECK(chunk_ranges(1, 16) == Ranges{{0, 1}});
  CHECK(chunk_ranges(0, 16) == Ranges{});
  CHECK_THROWS_AS(chunk_ranges(5, 0), InvalidArgument);
}

TEST_CASE("pack_batch counts labels and is seed deterministic") {
  auto pairs = tiny_corpus(20);
  tokenize::Vocab vocab = tokenize::Vocab::build(pairs);
  std::vector<corpus::ParallelPair> batch(pairs.begin(), pairs.begin() + 6);

  Rng r1 = Rng::stream(3, "corrupt");
  Rng r2 = Rng::stream(3, "corrupt");
  PackedBatch a = pack_batch(batch, vocab, 12, 0.15, r1);
  PackedBatch b = pack_batch(batch, vocab, 12, 0.15, r2);
  REQUIRE(a.examples.size() == 6);
  std::size_t labels = 0;
  for (const auto& t : a.targets) labels += t.label_positions.size();
  CHECK(a.label_count == labels);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(a.targets[i].corrupted_ids == b.targets[i].corrupted_ids);
    CHECK(a.targets[i].labels == b.targets[i].labels);
  }
  CHECK_THROWS_AS(pack_batch({}, vocab, 12, 0.15, r1), InvalidArgument);
}

TEST_CASE("step graph holds the total identity and the annihilation property") {
  auto pairs = tiny_corpus(20);
  tokenize::Vocab vocab = tokenize::Vocab::build(pairs);
  encoder::EncoderConfig enc = tiny_encoder();
  enc.vocab_size = vocab.size();
  enc.dropout = 0.0;
  Rng init = Rng::stream(1, "init");
  encoder::ModelParams params = encoder::ModelParams::init(enc, init);
  encoder::IdentityPredictor predictor;

  std::vector<corpus::ParallelPair> batch(pairs.begin(), pairs.begin() + 4);
  TrainConfig cfg = fast_train();
  cfg.lambda = 0.7;

  auto make_batch = [&]() {
    Rng corrupt = Rng::stream(2, "corrupt");
    return pack_batch(batch, vocab, enc.max_len, cfg.mask_prob, corrupt);
  };

  PackedBatch pb = make_batch();
  Tape tape;
  encoder::ParamNodes nodes = encoder::bind(tape, params);
  StepGraph g = build_step_graph(tape, nodes, enc, cfg, pb, predictor, false,
                                 nullptr);
  REQUIRE(g.has_alignment);
  const double mlm = tape.value(g.mlm)(0, 0);
  const double align = tape.value(g.alignment)(0, 0);
  CHECK(tape.value(g.total)(0, 0) == mlm + cfg.lambda * align);
  CHECK(mlm > 0.0);
  CHECK(align > 0.0);

  // lambda = 0 and the internal mlm-only switch must produce bit-identical
  // losses and gradients.
  auto run = [&](double lambda, bool mlm_only) {
    TrainConfig c2 = cfg;
    c2.lambda = lambda;
    c2.mlm_only = mlm_only;
    PackedBatch pb2 = make_batch();
    Tape t;
    encoder::ParamNodes n2 = encoder::bind(t, params);
    StepGraph g2 = build_step_graph(t, n2, enc, c2, pb2, predictor, false,
                                    nullptr);
    CHECK(!g2.has_alignment);
    t.backward(g2.total);
    encoder::ModelParams grads = encoder::ModelParams::zeros_like(params);
    encoder::collect_grads(t, n2, grads);
    return std::make_pair(t.value(g2.total)(0, 0),
                          encoder::params_fingerprint(grads));
  };
  const auto [loss_zero, grads_zero] = run(0.0, false);
  const auto [loss_only, grads_only] = run(1.0, true);
  CHECK(loss_zero == loss_only);
  CHECK(grads_zero == grads_only);

  // Gradients are linear in lambda.
  auto grads_of = [&](double lambda) {
    TrainConfig c2 = cfg;
    c2.lambda = lambda;
    PackedBatch pb2 = make_batch();
    Tape t;
    encoder::ParamNodes n2 = encoder::bind(t, params);
    StepGraph g2 = build_step_graph(t, n2, enc, c2, pb2, predictor, false,
                                    nullptr);
    t.backward(g2.total);
    encoder::ModelParams grads = encoder::ModelParams::zeros_like(params);
    encoder::collect_grads(t, n2, grads);
    return grads;
  };
  encoder::ModelParams g1 = grads_of(1.0);
  encoder::ModelParams g2x = grads_of(2.0);
  encoder::ModelParams g0 = grads_of(1e-12);  // almost pure mlm, align present
  // g(2) - g(1) == g(1) - g(0) within accumulation noise.
  double max_dev = 0.0;
  auto pa = [&](encoder::ModelParams& m) {
    std::vector<numerics::Matrix*> v;
    m.for_each([&v](const std::string&, numerics::Matrix& mm) { v.push_back(&mm); });
    return v;
  };
  auto v1 = pa(g1), v2 = pa(g2x), v0 = pa(g0);
  for (std::size_t i = 0; i < v1.size(); ++i) {
    max_dev = std::max(max_dev,
                       ((*v2[i] - *v1[i]) - (*v1[i] - *v0[i])).cwiseAbs().maxCoeff());
  }
  CHECK(max_dev < 1e-9);
}

TEST_CASE("full objective gradients agree with central differences") {
  // The complete training loss: joint MLM pass plus both occluded alignment
  // passes and the InfoNCE coupling, checked against the independent
  // finite-difference oracle over every parameter entry.
  auto pairs = tiny_corpus(20);
  tokenize::Vocab vocab = tokenize::Vocab::build(pairs);
  encoder::EncoderConfig enc;
  enc.vocab_size = vocab.size();
  enc.d_model = 4;
  enc.n_layers = 1;
  enc.n_heads = 2;
  enc.d_ff = 8;
  enc.max_len = 12;
  enc.dropout = 0.0;

  TrainConfig cfg;
  cfg.lambda = 0.8;
  cfg.temperature = 0.2;
  cfg.mask_prob = 0.3;
  encoder::IdentityPredictor predictor;
  std::vector<corpus::ParallelPair> batch(pairs.begin(), pairs.begin() + 2);
  Rng corrupt = Rng::stream(11, "corrupt");
  PackedBatch pb = pack_batch(batch, vocab, enc.max_len, cfg.mask_prob, corrupt);
  REQUIRE(pb.label_count > 0);

  Rng init = Rng::stream(12, "init");
  encoder::ModelParams p0 = encoder::ModelParams::init(enc, init);

  auto to_vec = [](const encoder::ModelParams& p) {
    numerics::Params v;
    p.for_each([&v](const std::string&, const numerics::Matrix& m) {
      v.push_back(m);
    });
    return v;
  };
  auto from_vec = [&](const numerics::Params& v) {
    encoder::ModelParams p = encoder::ModelParams::allocate(enc);
    std::size_t i = 0;
    p.for_each([&](const std::string&, numerics::Matrix& m) { m = v.at(i++); });
    return p;
  };

  auto objective_fn = [&](const numerics::Params& v) {
    encoder::ModelParams p = from_vec(v);
    Tape t;
    encoder::ParamNodes nodes = encoder::bind(t, p);
    StepGraph g = build_step_graph(t, nodes, enc, cfg, pb, predictor, false,
                                   nullptr);
    return t.value(g.total)(0, 0);
  };
  auto analytic = [&](const numerics::Params& v) {
    encoder::ModelParams p = from_vec(v);
    Tape t;
    encoder::ParamNodes nodes = encoder::bind(t, p);
    StepGraph g = build_step_graph(t, nodes, enc, cfg, pb, predictor, false,
                                   nullptr);
    t.backward(g.total);
    encoder::ModelParams grads = encoder::ModelParams::zeros_like(p);
    encoder::collect_grads(t, nodes, grads);
    return to_vec(grads);
  };

  const double err = numerics::grad_check(objective_fn, analytic, to_vec(p0));
  CHECK(err < 1e-6);
}

TEST_CASE("validation evaluation is deterministic and sane") {
  auto pairs = tiny_corpus(40);
  tokenize::Vocab vocab = tokenize::Vocab::build(pairs);
  encoder::EncoderConfig enc = tiny_encoder();
  enc.vocab_size = vocab.size();
  Rng init = Rng::stream(21, "init");
  encoder::ModelParams params = encoder::ModelParams::init(enc, init);
  encoder::IdentityPredictor predictor;
  TrainConfig cfg = fast_train();

  std::vector<corpus::ParallelPair> val(pairs.begin(), pairs.begin() + 10);
  ValReport a = evaluate_validation(params, vocab, val, cfg, predictor);
  ValReport b = evaluate_validation(params, vocab, val, cfg, predictor);
  CHECK(a.mlm == b.mlm);
  CHECK(a.alignment == b.alignment);
  REQUIRE(a.embeddings.size() == 10);
  CHECK((a.embeddings[3].z_a - b.embeddings[3].z_a).cwiseAbs().maxCoeff() ==
        0.0);

  // A fresh random model scores near the uniform-guess level.
  CHECK(std::abs(a.mlm - std::log(double(vocab.size()))) < 0.5);
  CHECK(std::isfinite(a.alignment));

  ValReport empty = evaluate_validation(params, vocab, {}, cfg, predictor);
  CHECK(std::isnan(empty.mlm));
  CHECK(std::isnan(empty.alignment));

  TrainConfig only = cfg;
  only.mlm_only = true;
  ValReport mo = evaluate_validation(params, vocab, val, only, predictor);
  CHECK(mo.alignment == 0.0);
  CHECK(mo.mlm == a.mlm);
}

TEST_CASE("metrics lines are stable bytes with fixed keys") {
  EpochRecord r;
  r.epoch = 3;
  r.train_mlm = 1.5;
  r.train_alignment = 0.25;
  r.train_total = 1.75;
  r.val_mlm = 1.25;
  r.val_alignment = 0.5;
  r.val_total = 1.75;
  r.rankme = 7.5;
  r.mean_pos_cosine = 0.875;
  r.mean_neg_cosine = -0.125;
  const std::string line = epoch_record_json_line(r);
  CHECK(line ==
        R"({"epoch":3,"train_mlm":1.5,"train_alignment":0.25,"train_total":1.75,)"
        R"("val_mlm":1.25,"val_alignment":0.5,"val_total":1.75,"rankme":7.5,)"
        R"("mean_pos_cosine":0.875,"mean_neg_cosine":-0.125})");

  EpochRecord nanr;
  nanr.epoch = 1;
  nanr.val_mlm = std::nan("");
  const std::string nline = epoch_record_json_line(nanr);
  CHECK(nline.find("\"val_mlm\":null") != std::string::npos);

  const std::string path = "/tmp/bepa_test_metrics.jsonl";
  write_metrics_jsonl({r, nanr}, path);
  std::ifstream in(path);
  std::string l1, l2, l3;
  CHECK(std::getline(in, l1));
  CHECK(std::getline(in, l2));
  CHECK(!std::getline(in, l3));
  CHECK(l1 == line);
  std::remove(path.c_str());
}

TEST_CASE("training runs deterministically end to end") {
  auto pairs = tiny_corpus(60);
  TrainConfig cfg = fast_train();

  TrainResult r1 = train(pairs, tiny_encoder(), cfg);
  TrainResult r2 = train(pairs, tiny_encoder(), cfg);

  CHECK(r1.log.size() == 2);
  CHECK(r1.log[0].epoch == 1);
  CHECK(r1.log[1].epoch == 2);
  // 60 pairs: 6 validation, 54 training, ceil(54 / 8) = 7 steps per epoch.
  CHECK(r1.validation_pairs.size() == 6);
  CHECK(r1.train_pairs.size() == 54);
  CHECK(r1.total_steps == 14);

  // The standalone split sees the same held-out set training used.
  CorpusSplit cs = split_corpus(pairs, cfg.mode);
  REQUIRE(cs.validation.size() == r1.validation_pairs.size());
  for (std::size_t i = 0; i < cs.validation.size(); ++i) {
    CHECK(cs.validation[i].text_a == r1.validation_pairs[i].text_a);
    CHECK(cs.validation[i].text_b == r1.validation_pairs[i].text_b);
  }

  CHECK(params_equal(r1.params, r2.params));
  for (std::size_t i = 0; i < r1.log.size(); ++i) {
    CHECK(epoch_record_json_line(r1.log[i]) ==
          epoch_record_json_line(r2.log[i]));
  }

  TrainConfig other = cfg;
  other.seed = 6;
  TrainResult r3 = train(pairs, tiny_encoder(), other);
  CHECK(!params_equal(r1.params, r3.params));

  for (const EpochRecord& rec : r1.log) {
    CHECK(rec.train_total == rec.train_mlm + cfg.lambda * rec.train_alignment);
    CHECK(rec.val_total == rec.val_mlm + cfg.lambda * rec.val_alignment);
    CHECK(std::isfinite(rec.rankme));
    CHECK(std::isfinite(rec.mean_pos_cosine));
    CHECK(std::isfinite(rec.mean_neg_cosine));
    CHECK(rec.rankme >= 1.0);
  }
}

TEST_CASE("lambda zero and mlm-only keep identical parameter trajectories") {
  auto pairs = tiny_corpus(60);
  TrainConfig zero = fast_train();
  zero.lambda = 0.0;
  TrainConfig only = fast_train();
  only.mlm_only = true;

  TrainResult rz = train(pairs, tiny_encoder(), zero);
  TrainResult ro = train(pairs, tiny_encoder(), only);
  CHECK(params_equal(rz.params, ro.params));
  for (std::size_t i = 0; i < rz.log.size(); ++i) {
    CHECK(rz.log[i].train_mlm == ro.log[i].train_mlm);
    CHECK(rz.log[i].train_total == ro.log[i].train_total);
    CHECK(rz.log[i].val_mlm == ro.log[i].val_mlm);
    CHECK(rz.log[i].val_total == ro.log[i].val_total);
  }
  // The lambda = 0 run still reports a real alignment value.
  CHECK(rz.log[0].train_alignment != 0.0);
  CHECK(ro.log[0].train_alignment == 0.0);
}

TEST_CASE("training reduces the mlm loss on a tiny corpus") {
  auto pairs = tiny_corpus(60);
  TrainConfig cfg = fast_train();
  cfg.epochs = 5;
  TrainResult r = train(pairs, tiny_encoder(), cfg);
  CHECK(r.log.back().train_mlm < r.log.front().train_mlm);
}

TEST_CASE("training rejects impossible setups") {
  auto pairs = tiny_corpus(60);
  TrainConfig cfg = fast_train();
  cfg.batch_size = 60;  // pool is 54
  CHECK_THROWS_AS(train(pairs, tiny_encoder(), cfg), ConfigError);

  TrainConfig mono = fast_train();
  mono.mode = corpus::PackingMode::kMonolingual;
  CHECK_THROWS_AS(train(pairs, tiny_encoder(), mono), ConfigError);

  CHECK_THROWS_AS(train({}, tiny_encoder(), fast_train()), InvalidArgument);
}

TEST_CASE("monolingual mode trains on paraphrase corpora") {
  const auto base = corpus::default_base_vocab(10);
  std::vector<corpus::LanguageSpec> langs = {
      corpus::generate_language(0, base, false),
      corpus::generate_language(1, base, false)};
  auto pairs = corpus::generate_paraphrase_corpus(langs, 40, 2, 4, 3);
  TrainConfig cfg = fast_train();
  cfg.mode = corpus::PackingMode::kMonolingual;
  cfg.batch_size = 4;
  cfg.epochs = 1;
  TrainResult r = train(pairs, tiny_encoder(), cfg);
  CHECK(r.log.size() == 1);
  CHECK(std::isfinite(r.log[0].train_mlm));
  CHECK(std::isfinite(r.log[0].val_mlm));
}
