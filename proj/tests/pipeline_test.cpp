#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "icegcn/artifact.hpp"
#include "icegcn/config.hpp"
#include "icegcn/pipeline.hpp"
#include "icegcn/sweep.hpp"
#include "support.hpp"

using namespace icegcn;

namespace {

const Mesh& coarse_mesh() {
  static const Mesh m = triangulate_rectangle(25.0, 100.0, 100.0, 0.1, 1);
  return m;
}

FrameSet small_dataset(std::vector<double> rates, std::size_t months) {
  return generate_dataset(coarse_mesh(), OracleConfig{}, std::move(rates), months);
}

TrainConfig tiny(ModelKind kind) {
  TrainConfig c;
  c.kind = kind;
  c.epochs = 3;
  c.hidden_width = 6;
  c.gcn_layers = 2;
  c.fcn_layers = 2;
  c.grid_nx = 6;
  c.grid_ny = 6;
  return c;
}

/// Normalization fixed by hand so one-frame datasets can be trained.
NormStats hand_norm() {
  NormStats s;
  s.inputs = {{50.0, 50.0, 1.0, 30.0}, {30.0, 30.0, 1.0, 20.0}};
  s.outputs = {{-300.0, 0.0, 900.0}, {300.0, 50.0, 400.0}};
  return s;
}

FrameSubset whole(const FrameSet& s) {
  FrameSubset sub{&s, {}};
  for (std::size_t f = 0; f < s.frame_count(); ++f) sub.frames.push_back(f);
  return sub;
}

}  // namespace

TEST(Split, DefaultRatesGiveExpectedPartition) {
  const FrameSet set = small_dataset(parse_rate_list("0:70:2"), 240);
  ASSERT_EQ(set.frame_count(), 8640u);
  const Split s = split_frames(set, SplitSpec{});
  EXPECT_EQ(s.train.size(), 6720u);
  EXPECT_EQ(s.validation.size(), 960u);
  EXPECT_EQ(s.test.size(), 960u);
  EXPECT_EQ(s.test.rates(), (std::vector<double>{0, 20, 40, 60}));
  EXPECT_EQ(s.validation.rates(), (std::vector<double>{10, 30, 50, 70}));
  EXPECT_EQ(s.train.rates().size(), 28u);

  std::set<std::size_t> seen;
  for (const auto* part : {&s.train, &s.validation, &s.test}) {
    for (auto f : part->frames) EXPECT_TRUE(seen.insert(f).second) << "frame " << f << " in two partitions";
  }
  EXPECT_EQ(seen.size(), set.frame_count());
}

TEST(Split, AllMonthsOfARateStayTogether) {
  const FrameSet set = small_dataset({0, 4, 10, 20, 26}, 5);
  const Split s = split_frames(set, SplitSpec{});
  for (const auto* part : {&s.train, &s.validation, &s.test}) {
    for (double r : part->rates()) {
      std::size_t months = 0;
      for (std::size_t k = 0; k < part->size(); ++k) months += part->key(k).rate == r;
      EXPECT_EQ(months, 5u);
    }
  }
}

TEST(Split, EmptyTrainingAndOverlapAreRejected) {
  const FrameSet toy = small_dataset({0, 10, 20, 30}, 2);
  EXPECT_THROW(split_frames(toy, SplitSpec{}), ValidationError);
  SplitSpec overlap;
  overlap.validation_rates = {2.0};
  overlap.test_rates = {2.0};
  EXPECT_THROW(split_frames(small_dataset({2, 4}, 1), overlap), ConfigError);
}

TEST(Normalization, RoundTripAndStandardization) {
  std::mt19937_64 rng(1);
  Matrix data = ref::random_matrix(200, 3, rng, 50.0);
  for (std::size_t i = 0; i < data.rows(); ++i) data(i, 2) += 1000.0;
  const ZScore z = ZScore::fit(data);
  Matrix t = data;
  z.apply(t);
  for (std::size_t j = 0; j < 3; ++j) {
    double mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < t.rows(); ++i) mean += t(i, j);
    mean /= static_cast<double>(t.rows());
    for (std::size_t i = 0; i < t.rows(); ++i) var += (t(i, j) - mean) * (t(i, j) - mean);
    EXPECT_NEAR(mean, 0.0, 1e-9);
    EXPECT_NEAR(std::sqrt(var / static_cast<double>(t.rows())), 1.0, 1e-9);
  }
  z.invert(t);
  EXPECT_LE(max_abs_diff(t, data), 1e-12 * 1000.0);
}

TEST(Normalization, ConstantFeatureIsRejected) {
  Matrix data(10, 2, 3.0);
  for (std::size_t i = 0; i < 10; ++i) data(i, 0) = static_cast<double>(i);
  EXPECT_THROW(ZScore::fit(data), ValidationError);
  // One month per rate leaves the time feature constant.
  const FrameSet one_month = small_dataset({2, 4, 6}, 1);
  EXPECT_THROW(fit_normalization(coarse_mesh(), whole(one_month)), ValidationError);
}

TEST(Normalization, StatisticsComeFromTrainingFramesOnly) {
  FrameSet set = small_dataset({0, 2, 4, 10, 20}, 4);
  const Split s = split_frames(set, SplitSpec{});
  const NormStats before = fit_normalization(coarse_mesh(), s.train);
  for (const auto* part : {&s.validation, &s.test}) {
    for (auto f : part->frames) {
      for (double& h : set.frame(f).thickness) h += 1e6;
    }
  }
  EXPECT_EQ(fit_normalization(coarse_mesh(), s.train), before);
  // Inputs are the node coordinates and the training (t, m) pairs.
  EXPECT_DOUBLE_EQ(before.inputs.mean[3], 3.0);
}

TEST(Train, ObservedRatesExcludeHeldOutRates) {
  const FrameSet set = small_dataset({0, 2, 4, 10, 20}, 3);
  const Split s = split_frames(set, SplitSpec{});
  const TrainResult r = train(coarse_mesh(), s.train, s.validation, tiny(ModelKind::gcn));
  EXPECT_EQ(r.observed_rates, (std::vector<double>{2, 4}));
  EXPECT_EQ(r.history.size(), 3u);
}

TEST(Train, ZeroLearningRateKeepsInitialParameters) {
  const FrameSet set = small_dataset({2, 4}, 3);
  for (ModelKind kind : {ModelKind::gcn, ModelKind::fcn}) {
    TrainConfig cfg = tiny(kind);
    cfg.learning_rate = 0.0;
    const TrainResult r = train(coarse_mesh(), whole(set), {&set, {}}, cfg, hand_norm());
    EXPECT_EQ(r.emulator.params(), make_emulator(cfg, coarse_mesh(), hand_norm()).params());
    for (const auto& rec : r.history) EXPECT_EQ(rec.train_loss, r.history.front().train_loss);
  }
}

TEST(Train, FcnLearningRateOverridesOnlyTheFcn) {
  const FrameSet set = small_dataset({2, 4}, 3);
  for (ModelKind kind : {ModelKind::gcn, ModelKind::fcn}) {
    TrainConfig cfg = tiny(kind);
    cfg.fcn_learning_rate = 0.0;
    const TrainResult r = train(coarse_mesh(), whole(set), {&set, {}}, cfg, hand_norm());
    const bool frozen = r.emulator.params() == make_emulator(cfg, coarse_mesh(), hand_norm()).params();
    EXPECT_EQ(frozen, kind == ModelKind::fcn) << to_string(kind);
  }
}

TEST(Train, SingleFrameLossDecreases) {
  const FrameSet set = small_dataset({30}, 1);
  for (ModelKind kind : {ModelKind::gcn, ModelKind::fcn}) {
    TrainConfig cfg = tiny(kind);
    cfg.epochs = 100;
    const TrainResult r = train(coarse_mesh(), whole(set), {&set, {}}, cfg, hand_norm());
    EXPECT_LT(r.history.back().train_loss, 0.25 * r.history.front().train_loss)
        << to_string(kind) << " " << r.history.front().train_loss << " -> " << r.history.back().train_loss;
  }
}

TEST(Train, SameSeedSameHistory) {
  const FrameSet set = small_dataset({2, 4, 6}, 3);
  for (ModelKind kind : {ModelKind::gcn, ModelKind::fcn}) {
    TrainConfig cfg = tiny(kind);
    cfg.seed = 11;
    const TrainResult a = train(coarse_mesh(), whole(set), {&set, {}}, cfg);
    const TrainResult b = train(coarse_mesh(), whole(set), {&set, {}}, cfg);
    ASSERT_EQ(a.history.size(), b.history.size());
    for (std::size_t e = 0; e < a.history.size(); ++e) {
      EXPECT_EQ(a.history[e].train_loss, b.history[e].train_loss);
      EXPECT_EQ(a.history[e].val_loss, b.history[e].val_loss);
    }
    EXPECT_EQ(a.emulator.params(), b.emulator.params());
    cfg.seed = 12;
    EXPECT_NE(train(coarse_mesh(), whole(set), {&set, {}}, cfg).emulator.params(), a.emulator.params());
  }
}

TEST(Train, RejectsBadConfiguration) {
  const FrameSet set = small_dataset({2, 4}, 2);
  TrainConfig cfg = tiny(ModelKind::gcn);
  cfg.epochs = 0;
  EXPECT_THROW(train(coarse_mesh(), whole(set), {&set, {}}, cfg), ConfigError);
  cfg = tiny(ModelKind::gcn);
  EXPECT_THROW(train(coarse_mesh(), {&set, {}}, {&set, {}}, cfg), ValidationError);
}

TEST(Train, HugeLearningRateDiverges) {
  const FrameSet set = small_dataset({2, 4}, 3);
  TrainConfig cfg = tiny(ModelKind::gcn);
  cfg.learning_rate = 1e300;
  cfg.epochs = 5;
  EXPECT_THROW(train(coarse_mesh(), whole(set), {&set, {}}, cfg), DivergenceError);
}

TEST(Metrics, PearsonHandCases) {
  const std::vector<double> a{1, 2, 3}, b{1, 3, 2}, neg{-1, -2, -3}, flat{4, 4, 4};
  EXPECT_NEAR(*pearson_r(a, b), 0.5, 1e-15);
  EXPECT_NEAR(*pearson_r(a, a), 1.0, 1e-15);
  EXPECT_NEAR(*pearson_r(a, neg), -1.0, 1e-15);
  EXPECT_FALSE(pearson_r(a, flat).has_value());
  EXPECT_DOUBLE_EQ(rmse(a, b), std::sqrt(2.0 / 3.0));
}

TEST(Metrics, IdentityPredictorIsPerfect) {
  const FrameSet set = small_dataset({0, 20, 40}, 4);
  const Metrics m = evaluate_predictions(whole(set), [&](std::size_t f, const FrameKey&) { return set.frame(f); });
  EXPECT_EQ(m.velocity.rmse, 0.0);
  EXPECT_EQ(m.thickness.rmse, 0.0);
  EXPECT_NEAR(*m.velocity.r, 1.0, 1e-12);
  EXPECT_NEAR(*m.thickness.r, 1.0, 1e-12);
  ASSERT_EQ(m.per_rate.size(), 3u);
  EXPECT_EQ(m.per_rate[1].rate, 20.0);
  EXPECT_EQ(m.frames, 12u);
  EXPECT_EQ(m.samples, 12 * coarse_mesh().node_count());
}

TEST(Metrics, ConstantPredictionLeavesCorrelationUndefined) {
  const FrameSet set = small_dataset({0, 20}, 2);
  const Metrics m = evaluate_predictions(whole(set), [&](std::size_t, const FrameKey&) {
    FrameFields f(coarse_mesh().node_count());
    std::fill(f.thickness.begin(), f.thickness.end(), 500.0);
    return f;
  });
  EXPECT_FALSE(m.velocity.r.has_value());
  EXPECT_FALSE(m.thickness.r.has_value());
  std::ostringstream os;
  write_metrics_report(os, m, "const");
  EXPECT_NE(os.str().find("pearson_r_velocity = undefined"), std::string::npos);
  EXPECT_NE(os.str().find("warning"), std::string::npos);
}

TEST(Metrics, IndependentOfFrameOrder) {
  const FrameSet set = small_dataset({0, 20, 40}, 4);
  const auto noisy = [&](std::size_t f, const FrameKey&) {
    FrameFields x = set.frame(f);
    for (std::size_t i = 0; i < x.node_count(); ++i) x.thickness[i] += std::sin(static_cast<double>(i + f));
    return x;
  };
  FrameSubset shuffled = whole(set);
  std::shuffle(shuffled.frames.begin(), shuffled.frames.end(), std::mt19937_64(2));
  const Metrics a = evaluate_predictions(whole(set), noisy), b = evaluate_predictions(shuffled, noisy);
  EXPECT_EQ(a.thickness.rmse, b.thickness.rmse);
  EXPECT_EQ(*a.thickness.r, *b.thickness.r);
  std::ostringstream ca, cb;
  write_metrics_csv(ca, a);
  write_metrics_csv(cb, b);
  EXPECT_EQ(ca.str(), cb.str());
}

TEST(Artifact, RoundTripBothKinds) {
  for (ModelKind kind : {ModelKind::gcn, ModelKind::fcn}) {
    const Emulator e = make_emulator(tiny(kind), coarse_mesh(), hand_norm());
    std::stringstream buf;
    save_emulator(buf, e);
    const Emulator back = load_emulator(buf);
    EXPECT_EQ(back.kind(), kind);
    EXPECT_EQ(back.params(), e.params());
    EXPECT_EQ(back.norm, e.norm);
    const BoundEmulator b1(e, coarse_mesh()), b2(back, coarse_mesh());
    EXPECT_EQ(b1.predict({12.0, 7}), b2.predict({12.0, 7}));
  }
  std::stringstream bad("GEMU2xxxxxxxx");
  EXPECT_THROW(load_emulator(bad), ValidationError);
  std::stringstream cut;
  save_emulator(cut, make_emulator(tiny(ModelKind::gcn), coarse_mesh(), hand_norm()));
  std::stringstream truncated(cut.str().substr(0, cut.str().size() / 2));
  EXPECT_THROW(load_emulator(truncated), ValidationError);
}

TEST(Sweep, MatchesIndependentQuadrature) {
  const Mesh& mesh = coarse_mesh();
  const OracleConfig oracle;
  const auto areas = ref::dual_areas(mesh);
  const double total = 100.0 * 100.0;
  const auto predict = [&](const FrameKey& k) {
    FrameFields f(mesh.node_count());
    for (std::size_t i = 0; i < mesh.node_count(); ++i) {
      const auto s = analytic_fields(oracle, mesh.node(i).x, mesh.node(i).y, k.years(), k.rate);
      f.vx[i] = s.vx;
      f.vy[i] = s.vy;
      f.thickness[i] = s.thickness;
    }
    return f;
  };
  const SweepSeries s = sweep_series(mesh, 40.0, 13, predict);
  ASSERT_EQ(s.mean_thickness.size(), 13u);
  for (std::size_t month = 0; month < 13; ++month) {
    const FrameFields f = predict({40.0, month});
    double h = 0.0, v = 0.0;
    for (std::size_t i = 0; i < mesh.node_count(); ++i) {
      h += areas[i] * f.thickness[i];
      v += areas[i] * std::hypot(f.vx[i], f.vy[i]);
    }
    EXPECT_NEAR(s.mean_thickness[month], h / total, 1e-9);
    EXPECT_NEAR(s.mean_speed[month], v / total, 1e-9);
  }
}

TEST(Sweep, UniformThinningMassAndSeaLevel) {
  // 1 m of ice lost over 10^4 km^2 is 917 * 1e4 * 1e6 kg = 9.17 Gt.
  const Mesh& mesh = coarse_mesh();
  const SweepSeries s = sweep_series(mesh, 5.0, 2, [&](const FrameKey& k) {
    FrameFields f(mesh.node_count());
    std::fill(f.thickness.begin(), f.thickness.end(), 100.0 - static_cast<double>(k.month));
    return f;
  });
  EXPECT_NEAR(s.mass_change_gt, -9.17, 1e-9);
  EXPECT_NEAR(s.sle_mm, 9.17 / 362.5, 1e-12);
  EXPECT_NEAR(s.thickness_change(), -1.0, 1e-12);
  EXPECT_THROW(sweep_series(mesh, 5.0, 0, [&](const FrameKey&) { return FrameFields(mesh.node_count()); }),
               ConfigError);
}

TEST(Config, RateListsAndRoundTrip) {
  const auto rates = parse_rate_list("0:70:2");
  ASSERT_EQ(rates.size(), 36u);
  EXPECT_EQ(rates.front(), 0.0);
  EXPECT_EQ(rates.back(), 70.0);
  EXPECT_EQ(parse_rate_list("1, 2.5,7"), (std::vector<double>{1, 2.5, 7}));
  EXPECT_THROW(parse_rate_list("0:70"), ConfigError);
  EXPECT_THROW(parse_rate_list("5:1:1"), ConfigError);

  RunConfig c;
  c.set("train", "epochs", "7");
  c.set("model", "kind", "fcn");
  c.set("graph", "kernel", "exp-decay");
  c.set("oracle", "accumulation", "0.25");
  c.set("data", "rates", "1,3,5");
  c.set("train", "fcn_learning_rate", "0.001");
  std::istringstream is(c.dump());
  const RunConfig back = load_run_config(is);
  EXPECT_EQ(back.dump(), c.dump());
  EXPECT_EQ(back.train.epochs, 7u);
  EXPECT_EQ(back.train.kind, ModelKind::fcn);
  EXPECT_EQ(back.train.fcn_learning_rate, 0.001);
  c.set("train", "fcn_learning_rate", "auto");
  EXPECT_FALSE(c.train.fcn_learning_rate);
}

TEST(Config, DefaultsAndErrors) {
  const RunConfig c;
  EXPECT_EQ(c.months, 240u);
  EXPECT_EQ(c.train.epochs, 200u);
  EXPECT_EQ(c.train.learning_rate, 0.01);
  EXPECT_FALSE(c.train.fcn_learning_rate);
  RunConfig d;
  EXPECT_THROW(d.set("train", "nonsense", "1"), ConfigError);
  EXPECT_THROW(d.set("train", "epochs", "ten"), ConfigError);
  std::istringstream bad("[data]\nmonths = 0\n");
  EXPECT_THROW(load_run_config(bad), ConfigError);
  std::istringstream negative("[train]\nfcn_learning_rate = -1\n");
  EXPECT_THROW(load_run_config(negative), ConfigError);
}
