#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dvga/optim.hpp"
#include "dvga/training.hpp"
#include "oracles.hpp"

using namespace dvga;

namespace {

// Config for training directly on the toy split (the edge path is never read).
TrainConfig toy_config(ModelMode mode) {
  TrainConfig c;
  c.mode = mode;
  c.edges = "toy";
  c.channels = 2;
  c.channel_dim = 4;
  c.iterations = 2;
  c.flow_steps = 1;
  c.epochs = 5;
  c.eval_every = 2;
  c.seed = 3;
  return c;
}

EdgeSplit toy_split(double val = 0.2, double test = 0.2) {
  return split_edges(oracle::toy_graph(), val, test, 1);
}

bool same_params(const ParamStore& a, const ParamStore& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, value] : a.entries()) {
    if (!b.contains(name) || b.get(name) != value) return false;
  }
  return true;
}

std::string scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "dvga_test_training";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

TEST(Training, OneEpochReachesEveryParameter) {
  const Graph g = oracle::toy_graph();
  TrainConfig cfg = toy_config(ModelMode::kDVGA);
  cfg.layers = 2;
  const ModelConfig m = cfg.model(g.features().cols());
  Rng rng(1);
  const ParamStore params = init_model(m, rng);
  Tape tape;
  BoundParams bound(tape, params, true);
  LossOptions o;
  o.lambda = 0.1;
  const LossPass pass = model_loss(bound, m, make_inputs(g), o, rng);
  const GradMap grads = bound.gradients(tape.backward(pass.objective.total));
  ASSERT_EQ(grads.size(), params.size());
  for (const auto& [name, grad] : grads) {
    EXPECT_TRUE(all_finite(grad)) << name;
    EXPECT_EQ(grad.rows(), params.get(name).rows());
    // First flow layers sit behind zero-initialized output layers.
    const bool shielded = name.rfind("flow.", 0) == 0 && (name.ends_with(".w1") || name.ends_with(".b1"));
    if (!shielded) EXPECT_GT(grad.cwiseAbs().maxCoeff(), 0.0) << name;
  }
}

TEST(Training, AblatedDvgaMatchesPlainVariationalLoop) {
  TrainConfig cfg = toy_config(ModelMode::kDVGA);
  cfg.channels = 1;
  cfg.flow_steps = 0;
  cfg.lambda = 0.0;
  const EdgeSplit split = toy_split(0.0, 0.0);
  const TrainResult trained = train(split, cfg);

  // Reference: encoder, decoder, recon and closed-form KL composed by hand.
  const ModelConfig m = cfg.model(split.train.features().cols());
  Rng rng(cfg.seed);
  ParamStore params = init_model(m, rng);
  Adam adam(AdamOptions{cfg.learning_rate});
  const GraphInputs in = make_inputs(split.train);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Tape t;
    BoundParams b(t, params, true);
    EncodeOptions eo;
    eo.training = true;
    const EncoderOutput enc = encode(b, m.encoder(), t.constant(in.features), in.arcs, eo, rng);
    const Var recon = recon_loss_logits(decoder_logits(enc.z, 1), in.target);
    const Var loss = add(recon, kl_closed_form(enc.mu, enc.logvar));
    EXPECT_NEAR(trained.history.epochs[static_cast<std::size_t>(epoch)].loss.total, loss.scalar(), 1e-12);
    GradMap grads = b.gradients(t.backward(loss));
    adam.step(params, grads);
  }
  for (const auto& [name, value] : params.entries()) {
    if (name.rfind("disc.", 0) == 0) continue;
    EXPECT_LT((trained.final_params.get(name) - value).cwiseAbs().maxCoeff(), 1e-12) << name;
  }
}

TEST(Training, BitwiseDeterministic) {
  const TrainConfig cfg = toy_config(ModelMode::kDVGA);
  const EdgeSplit split = toy_split();
  const TrainResult a = train(split, cfg), b = train(split, cfg);
  EXPECT_TRUE(same_params(a.final_params, b.final_params));
  EXPECT_TRUE(same_params(a.params, b.params));
  ASSERT_EQ(a.history.evals.size(), b.history.evals.size());
  EXPECT_EQ(a.history.evals.back().auc, b.history.evals.back().auc);
  TrainConfig other = cfg;
  other.seed = 4;
  EXPECT_FALSE(same_params(a.final_params, train(split, other).final_params));
}

TEST(Training, ZeroLambdaLeavesDiscriminatorUntouched) {
  TrainConfig cfg = toy_config(ModelMode::kDGA);
  cfg.lambda = 0.0;
  const EdgeSplit split = toy_split();
  const TrainResult r = train(split, cfg);
  Rng rng(cfg.seed);
  const ParamStore init = init_model(r.model, rng);
  for (const char* name : {"disc.w1", "disc.b1", "disc.w2", "disc.b2"}) {
    EXPECT_EQ(r.final_params.get(name), init.get(name)) << name;
  }
  cfg.lambda = 0.5;
  EXPECT_NE(train(split, cfg).final_params.get("disc.w2"), init.get("disc.w2"));
}

TEST(Training, EvalScheduleAndBestCheckpoint) {
  TrainConfig cfg = toy_config(ModelMode::kDGA);
  cfg.epochs = 7;
  cfg.eval_every = 3;
  const TrainResult r = train(toy_split(), cfg);
  ASSERT_EQ(r.history.epochs.size(), 7u);
  std::vector<int> at;
  for (const auto& e : r.history.evals) at.push_back(e.epoch);
  EXPECT_EQ(at, (std::vector<int>{3, 6, 7}));
  double best = -1;
  for (const auto& e : r.history.evals) best = std::max(best, e.auc);
  EXPECT_EQ(r.history.best_val_auc, best);
  const RankMetrics again = evaluate_link(r.params, r.model, toy_split().train, toy_split().val_pos, toy_split().val_neg);
  EXPECT_EQ(again.auc, best);

  const TrainResult none = train(toy_split(0.0, 0.2), cfg);
  EXPECT_TRUE(none.history.evals.empty());
  EXPECT_EQ(none.history.best_epoch, 7);
  EXPECT_TRUE(same_params(none.params, none.final_params));
}

TEST(Training, ModeSpecificEntryPoints) {
  const EdgeSplit split = toy_split();
  EXPECT_THROW(train_dvga(split, toy_config(ModelMode::kDGA)), ConfigError);
  EXPECT_THROW(train_dga(split, toy_config(ModelMode::kDVGA)), ConfigError);
}

TEST(Training, NonFiniteFeaturesNameTheEpoch) {
  EdgeSplit split = toy_split();
  Matrix x = split.train.features();
  x(3, 2) = std::nan("");
  split.train = split.train.with_features(x);
  try {
    train(split, toy_config(ModelMode::kDGA));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos) << e.what();
  }
}

TEST(Training, SyntheticRunImproves) {
  TrainConfig cfg;
  cfg.synthetic = true;
  cfg.synth_factors = 1;
  cfg.synth_nodes = 200;
  cfg.synth_classes = 4;
  cfg.synth_q = 0.002;
  cfg.synth_target_degree = 20;
  cfg.val_frac = 0.2;
  cfg.test_frac = 0.2;
  cfg.channels = 2;
  cfg.channel_dim = 8;
  cfg.epochs = 60;
  cfg.eval_every = 10;
  const Graph full = load_dataset(cfg);
  const EdgeSplit split = prepare_split(full, cfg);
  const TrainResult r = train(split, cfg);
  const auto& e = r.history.epochs;
  double head = 0, tail = 0;
  for (int i = 0; i < 5; ++i) {
    head += e[static_cast<std::size_t>(i)].loss.recon;
    tail += e[e.size() - 1 - static_cast<std::size_t>(i)].loss.recon;
  }
  EXPECT_LT(tail, head);
  EXPECT_GT(r.history.best_val_auc, 0.8);
  const RankMetrics test = evaluate_link(r.params, r.model, split.train, split.test_pos, split.test_neg);
  EXPECT_GT(test.auc, 0.8);
}

TEST(Training, AdjacencyFeaturesExcludeHeldOutEdges) {
  TrainConfig cfg;
  cfg.synthetic = true;
  cfg.synth_factors = 1;
  cfg.synth_nodes = 120;
  cfg.synth_classes = 3;
  cfg.synth_q = 0.01;
  cfg.synth_target_degree = 10;
  cfg.val_frac = 0.2;
  cfg.test_frac = 0.2;
  const Graph full = load_dataset(cfg);
  const EdgeSplit split = prepare_split(full, cfg);
  const Matrix& x = split.train.features();
  EXPECT_EQ(x, split.train.adjacency());
  for (const auto* list : {&split.val_pos, &split.test_pos}) {
    ASSERT_FALSE(list->empty());
    for (const Edge& e : *list) {
      EXPECT_EQ(x(e.u, e.v), 0.0);
      EXPECT_EQ(x(e.v, e.u), 0.0);
    }
  }
  const GraphInputs in = make_inputs(split.train);
  for (const Edge& e : split.test_pos) EXPECT_EQ(in.target(e.u, e.v), 0.0);
}

TEST(Checkpoint, RoundTripPreservesParametersAndMetrics) {
  const TrainConfig cfg = toy_config(ModelMode::kDVGA);
  const EdgeSplit split = toy_split();
  const TrainResult r = train(split, cfg);
  const std::string path = scratch("ckpt.txt");
  save_checkpoint(path, {cfg, r.model, r.params, r.history.best_epoch});
  const Checkpoint c = load_checkpoint(path);
  EXPECT_TRUE(same_params(c.params, r.params));
  EXPECT_EQ(c.best_epoch, r.history.best_epoch);
  EXPECT_EQ(format_config(c.config), format_config(cfg));
  EXPECT_EQ(c.model.in_features, r.model.in_features);
  const RankMetrics a = evaluate_link(r.params, r.model, split.train, split.test_pos, split.test_neg);
  const RankMetrics b = evaluate_link(c.params, c.model, split.train, split.test_pos, split.test_neg);
  EXPECT_EQ(a.auc, b.auc);
  EXPECT_EQ(a.ap, b.ap);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  const std::string path = scratch("bad_ckpt.txt");
  {
    std::ofstream(path) << "dvga-checkpoint 99\n";
  }
  EXPECT_ANY_THROW(load_checkpoint(path));
  EXPECT_ANY_THROW(load_checkpoint(scratch("absent.txt")));
}

TEST(Config, UnknownKeyIsNamed) {
  try {
    parse_config("mode=DGA\nlamda=0.1\nedges=e.txt\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    ASSERT_EQ(e.problems().size(), 1u);
    EXPECT_NE(e.problems()[0].find("lamda"), std::string::npos);
    EXPECT_NE(e.problems()[0].find("line 2"), std::string::npos);
  }
}

TEST(Config, AllProblemsReportedTogether) {
  try {
    parse_config("channels=0\nlambda=5\nepochs=abc\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    // Bad epochs value, channels range, lambda range, missing edges.
    EXPECT_EQ(e.problems().size(), 4u);
  }
}

TEST(Config, OverridesApplyLast) {
  const TrainConfig c = parse_config("# comment\nedges=e.txt\nchannels=2\n", {"channels=3", "mode=DVGA"});
  EXPECT_EQ(c.channels, 3);
  EXPECT_EQ(c.mode, ModelMode::kDVGA);
  EXPECT_THROW(parse_config("edges=e.txt\n", {"nope=1"}), ConfigError);
  EXPECT_THROW(parse_config("edges=e.txt\n", {"channels"}), ConfigError);
}

TEST(Config, FormatRoundTripsExactly) {
  TrainConfig c = toy_config(ModelMode::kDVGA);
  c.lambda = 0.1 + 0.2;
  c.feature_source = FeatureSource::kAdjacency;
  const TrainConfig back = parse_config(format_config(c));
  EXPECT_EQ(format_config(back), format_config(c));
  EXPECT_EQ(back.lambda, c.lambda);
  EXPECT_EQ(config_hash(back), config_hash(c));
  c.seed = 9;
  EXPECT_NE(config_hash(back), config_hash(c));
  EXPECT_EQ(config_hash(c).size(), 16u);
}

TEST(Config, GridExpansion) {
  const auto points = expand_grid({{"channels", {"1", "4"}}, {"lambda", {"0", "0.01", "0.1"}}});
  ASSERT_EQ(points.size(), 6u);
  EXPECT_EQ(points[0], (std::vector<std::string>{"channels=1", "lambda=0"}));
  EXPECT_EQ(points[5], (std::vector<std::string>{"channels=4", "lambda=0.1"}));
  EXPECT_EQ(expand_grid({}).size(), 1u);
}
