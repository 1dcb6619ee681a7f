#pragma once

// Project → Probe → Aggregate, plus the ERM, JTT and ground-truth-group
// baselines it is compared against.

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ppa/dataset.hpp"
#include "ppa/eval.hpp"
#include "ppa/probe.hpp"
#include "ppa/projection.hpp"

namespace ppa {

inline constexpr std::uint32_t kPseudoAttributes = 2;

struct PipelineOptions {
  TrainConfig train;
  double tau = 1.0;
  bool normalize = true;            // L2-normalize features in every stage
  double projection_tol = 1e-10;
  double class_prior_smoothing = 1.0;
  double group_prior_smoothing = 1.0;
  double pseudo_label_noise = 0.0;  // fraction of pseudo-groups resampled before probing
  bool select_on_val = true;        // pick the epoch with best validation WGA when val has attributes
};

// Training recipe for exported image-text embeddings.
inline PipelineOptions embedding_recipe() { return PipelineOptions{}; }

// Recipe for the raw Gaussian generator. Its features are far from unit norm
// and have no embedding geometry worth preserving, so normalization is off and
// the step size is scaled up to move the zero-shot start within 100 epochs.
inline PipelineOptions synthetic_recipe() {
  PipelineOptions o;
  o.train.learning_rate = 0.1;
  o.train.warmup_lr = 0.01;
  o.normalize = false;
  return o;
}

// ĝ = y·2 + â for each train sample, in file order.
struct PseudoGrouping {
  std::vector<std::uint8_t> pseudo_attribute;
  std::vector<std::uint32_t> group_index;
  std::vector<std::size_t> group_counts;  // 2K entries
};

struct DebiasedClassifier {
  LinearScorer scorer;      // K-way, aggregated from the group head
  LinearScorer group_head;  // 2K-way, the epoch that was selected
  double tau = 1.0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> group_counts;
  std::optional<std::size_t> selected_epoch;
};

// Features exactly as every stage sees them.
inline FeatureDataset prepare_features(const FeatureDataset& ds, bool normalize) {
  return normalize ? ds.l2_normalized() : ds;
}

namespace detail {

struct TrainSplit {
  Matrix features;
  std::vector<std::uint32_t> labels;
};

inline TrainSplit train_split(const FeatureDataset& ds) {
  const auto idx = ds.indices(Split::kTrain);
  if (idx.empty()) throw ValidationError("train split is empty");
  TrainSplit t{Matrix(idx.size(), ds.dim()), std::vector<std::uint32_t>(idx.size())};
  for (std::size_t r = 0; r < idx.size(); ++r) {
    auto src = ds.features().row(idx[r]);
    std::copy(src.begin(), src.end(), t.features.row(r).begin());
    t.labels[r] = ds.labels()[idx[r]];
  }
  return t;
}

inline bool can_select(const FeatureDataset& ds) { return ds.has_attributes() && ds.count(Split::kVal) > 0; }

}  // namespace detail

// Sums the group rows of each class (and their biases): w_y = Σ_a W_{y·A + a}.
inline LinearScorer aggregate_group_head(const LinearScorer& head, std::size_t class_count,
                                         std::size_t attribute_count = kPseudoAttributes) {
  if (head.outputs() != class_count * attribute_count)
    throw ValidationError("aggregate: group head has " + std::to_string(head.outputs()) + " rows, expected " +
                          std::to_string(class_count * attribute_count));
  Matrix w(class_count, head.dim());
  std::optional<Vector> b;
  if (head.bias()) b.emplace(class_count, 0.0);
  for (std::size_t y = 0; y < class_count; ++y) {
    auto out = w.row(y);
    for (std::size_t a = 0; a < attribute_count; ++a) {
      const std::size_t g = y * attribute_count + a;
      auto src = head.weights().row(g);
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += src[j];
      if (b) (*b)[y] += (*head.bias())[g];
    }
  }
  return LinearScorer(std::move(w), TargetSpace::kClass, std::move(b));
}

// Scorer with Π folded into its weights: (WΠ)x = W(Πx).
inline LinearScorer bake_projection(const LinearScorer& s, const ProjectionOperator& op) {
  return LinearScorer(matmul(s.weights(), op.pi), s.target_space(), s.bias());
}

// Class head trained with the class-prior logit-adjusted loss. With
// `project` the features are first mapped through Π and Π is baked into the
// returned weights; without it the head sees raw features.
inline LinearScorer train_biased(const FeatureDataset& ds, const ClassProxyMatrix& z, const PipelineOptions& opt,
                                 bool project = true) {
  check_compatible(ds, z);
  const FeatureDataset prepared = prepare_features(ds, opt.normalize);
  auto split = detail::train_split(prepared);
  const GroupPrior prior = empirical_class_prior(prepared, opt.class_prior_smoothing);
  LinearScorer init = zero_shot_class_head(z, opt.train.bias);
  if (!project) {
    auto r = train(TrainView{split.features, split.labels}, LossKind::kLa, prior, opt.train, std::move(init));
    return std::move(r.scorer);
  }
  const ProjectionOperator op = build_projection(z, opt.projection_tol);
  const Matrix projected = project_features(op, split.features);
  auto r = train(TrainView{projected, split.labels}, LossKind::kLa, prior, opt.train, std::move(init));
  return bake_projection(r.scorer, op);
}

// â = 1 exactly where the biased scorer's argmax (ties → lowest) misses the label.
inline PseudoGrouping infer_pseudo_groups(const LinearScorer& biased, const FeatureDataset& ds, bool normalize) {
  if (biased.outputs() != ds.class_count()) throw ValidationError("biased scorer is not K-way");
  const FeatureDataset prepared = prepare_features(ds, normalize);
  const auto idx = prepared.indices(Split::kTrain);
  if (idx.empty()) throw ValidationError("train split is empty");
  PseudoGrouping g;
  g.pseudo_attribute.resize(idx.size());
  g.group_index.resize(idx.size());
  g.group_counts.assign(ds.class_count() * kPseudoAttributes, 0);
  Vector buf(biased.outputs());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    biased.logits(prepared.features().row(idx[k]), buf);
    const std::uint32_t y = prepared.labels()[idx[k]];
    const std::uint8_t a = LinearScorer::argmax(buf) != y ? 1 : 0;
    g.pseudo_attribute[k] = a;
    g.group_index[k] = y * kPseudoAttributes + a;
    ++g.group_counts[g.group_index[k]];
  }
  return g;
}

inline PseudoGrouping with_group_index(std::vector<std::uint32_t> groups, std::size_t class_count) {
  PseudoGrouping g;
  g.group_counts.assign(class_count * kPseudoAttributes, 0);
  g.pseudo_attribute.resize(groups.size());
  for (std::size_t k = 0; k < groups.size(); ++k) {
    if (groups[k] >= g.group_counts.size()) throw ValidationError("group index out of range");
    g.pseudo_attribute[k] = static_cast<std::uint8_t>(groups[k] % kPseudoAttributes);
    ++g.group_counts[groups[k]];
  }
  g.group_index = std::move(groups);
  return g;
}

// Group head on raw (unprojected) features with the group logit-adjusted
// loss, then weight aggregation. The epoch is chosen on validation WGA of the
// aggregated classifier when the validation split carries attributes.
inline DebiasedClassifier train_debiased(const FeatureDataset& ds, const PseudoGrouping& grouping,
                                         const ClassProxyMatrix& z, double tau, const PipelineOptions& opt) {
  check_compatible(ds, z);
  const FeatureDataset prepared = prepare_features(ds, opt.normalize);
  auto split = detail::train_split(prepared);
  if (grouping.group_index.size() != split.labels.size())
    throw ValidationError("pseudo-grouping does not cover the train split");
  for (std::size_t k = 0; k < split.labels.size(); ++k)
    if (grouping.group_index[k] / kPseudoAttributes != split.labels[k])
      throw ValidationError("pseudo-group class component disagrees with label");
  const GroupPrior beta = GroupPrior::from_counts(grouping.group_counts, opt.group_prior_smoothing, tau);
  auto result = train(TrainView{split.features, grouping.group_index}, LossKind::kGla, beta, opt.train,
                      zero_shot_group_head(z, kPseudoAttributes, opt.train.bias));

  DebiasedClassifier out;
  out.tau = tau;
  out.seed = opt.train.seed;
  out.group_counts = grouping.group_counts;
  if (opt.select_on_val && detail::can_select(prepared)) {
    std::vector<LinearScorer> aggregated;
    aggregated.reserve(result.snapshots.size());
    for (const auto& s : result.snapshots) aggregated.push_back(aggregate_group_head(s, ds.class_count()));
    auto sel = eval::select_model(aggregated, prepared);
    out.selected_epoch = sel.epoch;
    out.group_head = result.snapshots[sel.epoch - 1];
    out.scorer = std::move(sel.scorer);
  } else {
    out.group_head = result.scorer;
    out.scorer = aggregate_group_head(result.scorer, ds.class_count());
  }
  return out;
}

struct SelectedScorer {
  LinearScorer scorer;
  std::optional<std::size_t> selected_epoch;
};

namespace detail {

inline SelectedScorer finish(TrainResult r, const FeatureDataset& prepared, const PipelineOptions& opt) {
  if (opt.select_on_val && can_select(prepared)) {
    auto sel = eval::select_model(r.snapshots, prepared);
    return {std::move(sel.scorer), sel.epoch};
  }
  return {std::move(r.scorer), std::nullopt};
}

}  // namespace detail

// Plain cross-entropy linear probe on raw features.
inline SelectedScorer train_erm(const FeatureDataset& ds, const ClassProxyMatrix& z, const PipelineOptions& opt) {
  check_compatible(ds, z);
  const FeatureDataset prepared = prepare_features(ds, opt.normalize);
  auto split = detail::train_split(prepared);
  auto r = train(TrainView{split.features, split.labels}, LossKind::kCe, std::nullopt, opt.train,
                 zero_shot_class_head(z, opt.train.bias));
  return detail::finish(std::move(r), prepared, opt);
}

// Error set of a first-stage model on the train split (1 = misclassified).
inline std::vector<std::uint8_t> error_set(const LinearScorer& first_stage, const FeatureDataset& ds, bool normalize) {
  return infer_pseudo_groups(first_stage, ds, normalize).pseudo_attribute;
}

// Second stage of JTT: cross-entropy with weight λ on the first stage's errors.
inline SelectedScorer train_jtt(const FeatureDataset& ds, const ClassProxyMatrix& z, const LinearScorer& first_stage,
                                double lambda, const PipelineOptions& opt) {
  if (!(lambda > 0.0)) throw ValidationError("JTT upweight lambda must be > 0");
  check_compatible(ds, z);
  const auto errors = error_set(first_stage, ds, opt.normalize);
  std::vector<double> weights(errors.size());
  for (std::size_t k = 0; k < errors.size(); ++k) weights[k] = errors[k] ? lambda : 1.0;
  const FeatureDataset prepared = prepare_features(ds, opt.normalize);
  auto split = detail::train_split(prepared);
  auto r = train(TrainView{split.features, split.labels, weights}, LossKind::kCe, std::nullopt, opt.train,
                 zero_shot_class_head(z, opt.train.bias));
  return detail::finish(std::move(r), prepared, opt);
}

// Oracle ceiling: the debiased stage with true (y, a) groups.
inline DebiasedClassifier train_gt_gla(const FeatureDataset& ds, const ClassProxyMatrix& z, double tau,
                                       const PipelineOptions& opt) {
  if (!ds.has_attributes()) throw ValidationError("gt-gla needs ground-truth attributes");
  if (ds.attribute_count() > kPseudoAttributes)
    throw ValidationError("gt-gla supports binary attributes only");
  const auto& attrs = eval::ground_truth_attributes(ds);
  const auto idx = ds.indices(Split::kTrain);
  std::vector<std::uint32_t> groups(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) groups[k] = ds.labels()[idx[k]] * kPseudoAttributes + attrs[idx[k]];
  return train_debiased(ds, with_group_index(std::move(groups), ds.class_count()), z, tau, opt);
}

struct PpaRun {
  DebiasedClassifier classifier;
  LinearScorer biased;
  PseudoGrouping grouping;
  nlohmann::ordered_json manifest;
};

inline PpaRun run_ppa(const FeatureDataset& ds, const ClassProxyMatrix& z, const PipelineOptions& opt,
                      bool project = true) {
  using clock = std::chrono::steady_clock;
  auto ms_since = [](clock::time_point t) {
    return std::chrono::duration<double, std::milli>(clock::now() - t).count();
  };
  check_compatible(ds, z);
  nlohmann::ordered_json timings;

  auto t0 = clock::now();
  LinearScorer biased = train_biased(ds, z, opt, project);
  timings["project"] = ms_since(t0);

  t0 = clock::now();
  PseudoGrouping grouping = infer_pseudo_groups(biased, ds, opt.normalize);
  if (opt.pseudo_label_noise > 0.0) {
    grouping = with_group_index(inject_pseudo_label_noise(grouping.group_index, opt.pseudo_label_noise,
                                                          opt.train.seed, kPseudoAttributes),
                                ds.class_count());
  }
  DebiasedClassifier classifier = train_debiased(ds, grouping, z, opt.tau, opt);
  timings["probe_aggregate"] = ms_since(t0);

  nlohmann::ordered_json m;
  m["method"] = project ? "ppa" : "gla-unprojected";
  m["tau"] = opt.tau;
  m["seed"] = opt.train.seed;
  m["normalize"] = opt.normalize;
  m["pseudo_label_noise"] = opt.pseudo_label_noise;
  m["projection_rank"] = project ? build_projection(z, opt.projection_tol).source_rank : 0;
  m["pseudo_group_counts"] = grouping.group_counts;
  m["selected_epoch"] = classifier.selected_epoch ? nlohmann::ordered_json(*classifier.selected_epoch)
                                                  : nlohmann::ordered_json(nullptr);
  if (ds.has_attributes() && ds.attribute_count() == 2 && ds.class_count() == 2) {
    // Minority identification against ground truth: â = 1 versus a ≠ y.
    const auto& attrs = eval::ground_truth_attributes(ds);
    const auto idx = ds.indices(Split::kTrain);
    std::size_t flagged = 0, minority = 0, both = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const bool is_min = attrs[idx[k]] != ds.labels()[idx[k]];
      const bool f = grouping.pseudo_attribute[k] != 0;
      flagged += f;
      minority += is_min;
      both += f && is_min;
    }
    m["minority_precision"] = flagged ? static_cast<double>(both) / static_cast<double>(flagged) : 0.0;
    m["minority_recall"] = minority ? static_cast<double>(both) / static_cast<double>(minority) : 0.0;
  }
  m["timings_ms"] = timings;
  return {std::move(classifier), std::move(biased), std::move(grouping), std::move(m)};
}

}  // namespace ppa
