#include <gtest/gtest.h>

#include <algorithm>

#include "ppa/pipeline.hpp"
#include "support.hpp"

namespace ppa {
namespace {

PipelineOptions quick_recipe(std::uint64_t seed = 0) {
  PipelineOptions o = synthetic_recipe();
  o.train.epochs = 15;
  o.train.seed = seed;
  return o;
}

TEST(Recipes, Defaults) {
  const auto p = embedding_recipe();
  EXPECT_EQ(p.train, TrainConfig{});
  EXPECT_DOUBLE_EQ(p.tau, 1.0);
  EXPECT_TRUE(p.normalize);
  EXPECT_DOUBLE_EQ(p.group_prior_smoothing, 1.0);
  const auto s = synthetic_recipe();
  EXPECT_FALSE(s.normalize);
  EXPECT_DOUBLE_EQ(s.train.learning_rate, 0.1);
  EXPECT_EQ(s.train.epochs, 100u);
}

TEST(Aggregate, SumsGroupRowsAndBiases) {
  const LinearScorer head(Matrix(4, 2, {1, 2, 3, 4, 5, 6, 7, 8}), TargetSpace::kGroup, Vector{0.1, 0.2, 0.3, 0.4});
  const auto agg = aggregate_group_head(head, 2);
  EXPECT_EQ(agg.weights(), Matrix(2, 2, {4, 6, 12, 14}));
  EXPECT_NEAR((*agg.bias())[0], 0.3, 1e-15);
  EXPECT_NEAR((*agg.bias())[1], 0.7, 1e-15);
  EXPECT_EQ(agg.target_space(), TargetSpace::kClass);
  EXPECT_THROW(aggregate_group_head(head, 3), ValidationError);
}

TEST(Aggregate, WorkedRows) {
  const LinearScorer head(Matrix(4, 2, {1, 2, 3, 4, 0, 1, 1, 0}), TargetSpace::kGroup);
  EXPECT_EQ(aggregate_group_head(head, 2).weights(), Matrix(2, 2, {4, 6, 1, 1}));
}

TEST(AggregateProperty, ClassLogitIsSumOfGroupLogits) {
  Rng rng(21);
  for (int t = 0; t < 50; ++t) {
    const std::size_t k = 2 + rng.below(4), d = 1 + rng.below(10);
    const LinearScorer head(testing::random_matrix(rng, 2 * k, d), TargetSpace::kGroup,
                            testing::random_vector(rng, 2 * k));
    const auto agg = aggregate_group_head(head, k);
    const Vector x = testing::random_vector(rng, d);
    const Vector zg = head.logits(x), zc = agg.logits(x);
    for (std::size_t y = 0; y < k; ++y) EXPECT_NEAR(zc[y], zg[2 * y] + zg[2 * y + 1], 1e-12);
  }
}

TEST(BakeProjection, EqualsScoringProjectedFeatures) {
  Rng rng(22);
  const Matrix z = testing::random_matrix(rng, 2, 6);
  const auto op = build_projection(z);
  const LinearScorer s(testing::random_matrix(rng, 2, 6), TargetSpace::kClass);
  const auto baked = bake_projection(s, op);
  for (int t = 0; t < 20; ++t) {
    const Vector x = testing::random_vector(rng, 6);
    const Vector px = matvec(op.pi, x);
    const Vector a = baked.logits(x), b = s.logits(px);
    EXPECT_NEAR(a[0], b[0], 1e-12);
    EXPECT_NEAR(a[1], b[1], 1e-12);
  }
  // A baked scorer is blind to the proxy directions.
  const Vector zero = baked.logits(z.row(0));
  EXPECT_NEAR(zero[0], 0.0, 1e-12);
  EXPECT_NEAR(zero[1], 0.0, 1e-12);
}

TEST(PseudoGroups, FlagsExactlyTheErrors) {
  // Scorer predicts class 1 iff x > 0.
  const LinearScorer s(Matrix(2, 1, {-1, 1}), TargetSpace::kClass);
  const FeatureDataset ds(Matrix(5, 1, {-2, 3, 1, -1, 4}), {0, 0, 1, 1, 1}, 2, std::nullopt, 0,
                          {Split::kTrain, Split::kTrain, Split::kVal, Split::kTrain, Split::kTrain});
  const auto g = infer_pseudo_groups(s, ds, false);
  EXPECT_EQ(g.pseudo_attribute, (std::vector<std::uint8_t>{0, 1, 1, 0}));
  EXPECT_EQ(g.group_index, (std::vector<std::uint32_t>{0, 1, 3, 2}));
  EXPECT_EQ(g.group_counts, (std::vector<std::size_t>{1, 1, 1, 1}));
  EXPECT_EQ(error_set(s, ds, false), g.pseudo_attribute);
}

TEST(PseudoGroups, WithGroupIndex) {
  const auto g = with_group_index({0, 3, 3, 2}, 2);
  EXPECT_EQ(g.pseudo_attribute, (std::vector<std::uint8_t>{0, 1, 1, 0}));
  EXPECT_EQ(g.group_counts, (std::vector<std::size_t>{1, 0, 1, 2}));
  EXPECT_THROW(with_group_index({4}, 2), ValidationError);
}

TEST(Debiased, RejectsInconsistentGrouping) {
  const auto data = generate_synthetic(testing::tiny_spec());
  auto g = infer_pseudo_groups(zero_shot_class_head(data.proxies), data.dataset, false);
  auto clash = g;
  clash.group_index[0] ^= 2u;  // flips the class half of ĝ = y·2 + â
  EXPECT_THROW(train_debiased(data.dataset, clash, data.proxies, 1.0, quick_recipe()), ValidationError);
  g.group_index.pop_back();
  EXPECT_THROW(train_debiased(data.dataset, g, data.proxies, 1.0, quick_recipe()), ValidationError);
}

// τ = 0 removes the offset, leaving plain cross-entropy over group targets.
TEST(Debiased, ZeroTauIsGroupCrossEntropy) {
  const auto data = generate_synthetic(testing::tiny_spec(1));
  const auto grouping = infer_pseudo_groups(zero_shot_class_head(data.proxies), data.dataset, false);
  auto opt = quick_recipe(1);
  opt.select_on_val = false;
  const auto gla = train_debiased(data.dataset, grouping, data.proxies, 0.0, opt);
  const auto split = detail::train_split(data.dataset);
  const auto ce = train(TrainView{split.features, grouping.group_index}, LossKind::kCe, std::nullopt, opt.train,
                        zero_shot_group_head(data.proxies));
  EXPECT_LE(max_abs_diff(gla.group_head.weights(), ce.scorer.weights()), 1e-12);
  EXPECT_FALSE(gla.selected_epoch.has_value());
}

// Two well-separated classes along the first axis; train and test splits only.
FeatureDataset separable_toy() {
  Rng rng(23);
  const std::size_t n = 200;
  Matrix x(n, 2);
  std::vector<std::uint32_t> y(n), a(n);
  std::vector<Split> split(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<std::uint32_t>(i % 2);
    a[i] = static_cast<std::uint32_t>(rng.below(2));
    split[i] = i < 150 ? Split::kTrain : Split::kTest;
    x(i, 0) = (y[i] ? 3.0 : -3.0) + 0.5 * rng.normal();
    x(i, 1) = rng.normal();
  }
  return FeatureDataset(x, y, 2, a, 2, split);
}

const ClassProxyMatrix kToyProxies(Matrix(2, 2, {-1, 0.3, 1, 0.3}));

// A uniform β̂ shifts every logit by the same ln(1/4), so the trajectory
// matches τ = 0 up to rounding.
TEST(Debiased, UniformPriorMatchesZeroTau) {
  const auto data = generate_synthetic(testing::tiny_spec(7));
  const auto grouping = infer_pseudo_groups(zero_shot_class_head(data.proxies), data.dataset, false);
  const auto opt = quick_recipe(7);
  const auto split = detail::train_split(data.dataset);
  const TrainView view{split.features, grouping.group_index};
  const auto uniform = train(view, LossKind::kGla, GroupPrior::uniform(4), opt.train, zero_shot_group_head(data.proxies));
  const auto zero = train(view, LossKind::kGla, GroupPrior::uniform(4, 0.0), opt.train, zero_shot_group_head(data.proxies));
  ASSERT_EQ(uniform.snapshots.size(), zero.snapshots.size());
  for (std::size_t e = 0; e < zero.snapshots.size(); ++e)
    EXPECT_LE(max_abs_diff(uniform.snapshots[e].weights(), zero.snapshots[e].weights()), 1e-12);
}

TEST(Erm, SeparableToyIsPerfect) {
  const auto ds = separable_toy();
  const auto erm = train_erm(ds, kToyProxies, quick_recipe());
  EXPECT_FALSE(erm.selected_epoch.has_value());  // no validation split
  EXPECT_DOUBLE_EQ(eval::evaluate(erm.scorer, ds, Split::kTrain, false).average_accuracy, 1.0);
  EXPECT_DOUBLE_EQ(eval::evaluate(erm.scorer, ds, Split::kTest).average_accuracy, 1.0);
}

TEST(GtGla, NeedsAttributes) {
  const auto data = generate_synthetic(testing::tiny_spec());
  const auto& ds = data.dataset;
  const FeatureDataset bare(ds.features(), ds.labels(), 2, std::nullopt, 0, ds.splits());
  EXPECT_THROW(train_gt_gla(bare, data.proxies, 1.0, quick_recipe()), ValidationError);
}

TEST(Jtt, RejectsNonPositiveLambda) {
  const auto data = generate_synthetic(testing::tiny_spec());
  EXPECT_THROW(train_jtt(data.dataset, data.proxies, zero_shot_class_head(data.proxies), 0.0, quick_recipe()),
               ValidationError);
}

TEST(RunPpa, DeterministicAndSelectsOnVal) {
  const auto data = generate_synthetic(testing::tiny_spec(2));
  const auto a = run_ppa(data.dataset, data.proxies, quick_recipe(2));
  const auto b = run_ppa(data.dataset, data.proxies, quick_recipe(2));
  EXPECT_EQ(a.classifier.scorer, b.classifier.scorer);
  EXPECT_EQ(a.grouping.group_index, b.grouping.group_index);
  ASSERT_TRUE(a.classifier.selected_epoch.has_value());
  EXPECT_GE(*a.classifier.selected_epoch, 1u);
  EXPECT_LE(*a.classifier.selected_epoch, 15u);
  EXPECT_EQ(a.manifest["method"], "ppa");
  EXPECT_EQ(a.manifest["projection_rank"], 1);
  EXPECT_TRUE(a.manifest.contains("minority_precision"));
  // The biased model ignores the proxy (core) direction entirely.
  const Vector on_proxy = a.biased.logits(data.proxies.proxies.row(1));
  EXPECT_NEAR(on_proxy[0], 0.0, 1e-12);
  EXPECT_NEAR(on_proxy[1], 0.0, 1e-12);
}

TEST(RunPpa, BeatsErmOnWorstGroup) {
  const auto data = generate_synthetic(testing::tiny_spec(3));
  const auto opt = quick_recipe(3);
  const auto ppa = run_ppa(data.dataset, data.proxies, opt);
  const auto erm = train_erm(data.dataset, data.proxies, opt);
  const double wga_ppa = eval::evaluate(ppa.classifier.scorer, data.dataset, Split::kTest).worst_group_accuracy;
  const double wga_erm = eval::evaluate(erm.scorer, data.dataset, Split::kTest).worst_group_accuracy;
  EXPECT_GT(wga_ppa, wga_erm);
}

TEST(RunPpa, NoiseChangesGroupsButKeepsClasses) {
  const auto data = generate_synthetic(testing::tiny_spec(4));
  auto opt = quick_recipe(4);
  const auto clean = run_ppa(data.dataset, data.proxies, opt);
  opt.pseudo_label_noise = 0.5;
  const auto noisy = run_ppa(data.dataset, data.proxies, opt);
  EXPECT_NE(clean.grouping.group_index, noisy.grouping.group_index);
  for (std::size_t k = 0; k < clean.grouping.group_index.size(); ++k)
    EXPECT_EQ(clean.grouping.group_index[k] / 2, noisy.grouping.group_index[k] / 2);
  EXPECT_EQ(noisy.manifest["pseudo_label_noise"], 0.5);
}

TEST(NoiseProperty, ResamplesRoundedFractionWithinClass) {
  Rng rng(24);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng.below(300);
    std::vector<std::uint32_t> g(n);
    for (auto& v : g) v = static_cast<std::uint32_t>(rng.below(6));
    const double p = rng.uniform();
    const auto out = inject_pseudo_label_noise(g, p, t, 2);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(out[i] / 2, g[i] / 2);
      changed += out[i] != g[i];
    }
    EXPECT_LE(changed, static_cast<std::size_t>(std::llround(p * static_cast<double>(n))));
    EXPECT_EQ(inject_pseudo_label_noise(g, 0.0, t, 2), g);
  }
  EXPECT_THROW(inject_pseudo_label_noise({0}, 1.5, 0), ValidationError);
}

// ---------------------------------------------------------------------------
// Full-size presets (100 epochs each, well under a second per run)

struct PresetRun {
  SyntheticData data;
  PipelineOptions opt;
};

PresetRun preset(const char* name, std::uint64_t seed = 0) {
  PipelineOptions opt = synthetic_recipe();
  opt.train.seed = seed;
  return {generate_synthetic(synthetic_preset(name, seed)), opt};
}

double test_wga(const LinearScorer& s, const FeatureDataset& ds) {
  return eval::evaluate(s, ds, Split::kTest).worst_group_accuracy;
}

TEST(Presets, NoSpuriousCorrelationLeavesPpaAndErmClose) {
  const auto p = preset("synthetic-balanced");
  const double ppa = test_wga(run_ppa(p.data.dataset, p.data.proxies, p.opt).classifier.scorer, p.data.dataset);
  const auto erm = train_erm(p.data.dataset, p.data.proxies, p.opt);
  EXPECT_NEAR(ppa, test_wga(erm.scorer, p.data.dataset), 0.03);
  // Both approach Φ(1), the Bayes accuracy when the attribute carries no label signal.
  const double bayes = bayes_group_balanced_accuracy(synthetic_preset("synthetic-balanced"));
  EXPECT_NEAR(eval::evaluate(erm.scorer, p.data.dataset, Split::kTest).average_accuracy, bayes, 0.02);
}

TEST(Presets, ErmFavoursMajorityGroups) {
  const auto p = preset("synthetic-waterbirds");
  const auto r = eval::evaluate(train_erm(p.data.dataset, p.data.proxies, p.opt).scorer, p.data.dataset, Split::kTest);
  const double majority = std::min(r.per_group_accuracy.at({0, 0}), r.per_group_accuracy.at({1, 1}));
  const double minority = std::max(r.per_group_accuracy.at({1, 0}), r.per_group_accuracy.at({0, 1}));
  EXPECT_LT(minority, majority);
}

TEST(Presets, JttUpweightingHelpsWorstGroup) {
  const auto p = preset("synthetic-waterbirds");
  auto first = p.opt;
  first.select_on_val = false;
  const auto stage1 = train_erm(p.data.dataset, p.data.proxies, first).scorer;
  const auto jtt = train_jtt(p.data.dataset, p.data.proxies, stage1, 50.0, p.opt);
  const auto erm = train_erm(p.data.dataset, p.data.proxies, p.opt);
  EXPECT_GT(test_wga(jtt.scorer, p.data.dataset), test_wga(erm.scorer, p.data.dataset));
}

TEST(Jtt, UnitWeightIsErm) {
  const auto data = generate_synthetic(testing::tiny_spec(5));
  const auto opt = quick_recipe(5);
  const auto erm = train_erm(data.dataset, data.proxies, opt);
  EXPECT_EQ(train_jtt(data.dataset, data.proxies, zero_shot_class_head(data.proxies), 1.0, opt).scorer, erm.scorer);
}

TEST(Jtt, EmptyErrorSetIsErm) {
  const auto ds = separable_toy();
  const auto opt = quick_recipe();
  const auto erm = train_erm(ds, kToyProxies, opt);
  const auto errors = error_set(erm.scorer, ds, opt.normalize);
  ASSERT_EQ(std::count(errors.begin(), errors.end(), 1), 0);
  EXPECT_EQ(train_jtt(ds, kToyProxies, erm.scorer, 50.0, opt).scorer, erm.scorer);
}

TEST(GtGla, PerfectPseudoGroupsMatchDebiased) {
  const auto data = generate_synthetic(testing::tiny_spec(6));
  const auto opt = quick_recipe(6);
  const auto& attrs = eval::ground_truth_attributes(data.dataset);
  const auto idx = data.dataset.indices(Split::kTrain);
  std::vector<std::uint32_t> groups(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) groups[k] = data.dataset.labels()[idx[k]] * 2 + attrs[idx[k]];
  const auto direct = train_debiased(data.dataset, with_group_index(groups, 2), data.proxies, 1.0, opt);
  const auto gt = train_gt_gla(data.dataset, data.proxies, 1.0, opt);
  EXPECT_EQ(direct.scorer, gt.scorer);
  EXPECT_EQ(direct.group_head, gt.group_head);
}

}  // namespace
}  // namespace ppa
