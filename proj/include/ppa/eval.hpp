#pragma once

// Group metrics (worst-group accuracy, balanced group error), epoch selection
// and minority-identification quality.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ppa/dataset.hpp"
#include "ppa/probe.hpp"

namespace ppa {

inline GroundTruthKey evaluation_key() { return GroundTruthKey{}; }

namespace eval {

// (attribute, class)
using GroupId = std::pair<std::uint32_t, std::uint32_t>;

inline const std::vector<std::uint32_t>& ground_truth_attributes(const FeatureDataset& ds) {
  return ds.attributes(evaluation_key());
}

struct EvalReport {
  std::map<GroupId, double> per_group_accuracy;  // populated groups only
  std::map<GroupId, std::size_t> group_sizes;    // every (a, y) cell, including empty ones
  double worst_group_accuracy = 0.0;
  double average_accuracy = 0.0;  // sample-weighted over the split
  double bge = 0.0;
  std::size_t samples = 0;
  bool has_groups = false;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["samples"] = samples;
    j["average_accuracy"] = average_accuracy;
    if (has_groups) {
      j["worst_group_accuracy"] = worst_group_accuracy;
      j["bge"] = bge;
      nlohmann::ordered_json groups = nlohmann::ordered_json::array();
      for (const auto& [g, n] : group_sizes) {
        nlohmann::ordered_json e;
        e["attribute"] = g.first;
        e["class"] = g.second;
        e["size"] = n;
        auto it = per_group_accuracy.find(g);
        e["accuracy"] = it == per_group_accuracy.end() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(it->second);
        groups.push_back(e);
      }
      j["groups"] = groups;
    }
    return j;
  }

  std::string to_csv() const {
    std::string s = "attribute,class,size,accuracy\n";
    for (const auto& [g, n] : group_sizes) {
      auto it = per_group_accuracy.find(g);
      s += std::to_string(g.first) + "," + std::to_string(g.second) + "," + std::to_string(n) + ",";
      if (it != per_group_accuracy.end()) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", it->second);
        s += buf;
      }
      s += "\n";
    }
    return s;
  }
};

// Metrics from precomputed predictions over the given sample indices.
inline EvalReport evaluate_predictions(std::span<const std::uint32_t> predictions, const FeatureDataset& ds,
                                       std::span<const std::size_t> idx, bool require_groups = true) {
  if (idx.empty()) throw ValidationError("evaluate: split is empty");
  EvalReport r;
  r.samples = idx.size();
  std::size_t correct = 0;
  for (std::size_t k = 0; k < idx.size(); ++k)
    if (predictions[k] == ds.labels()[idx[k]]) ++correct;
  r.average_accuracy = static_cast<double>(correct) / static_cast<double>(idx.size());
  if (!ds.has_attributes()) {
    if (require_groups) throw ValidationError("evaluate: group metrics need ground-truth attributes");
    return r;
  }
  const auto& attrs = ground_truth_attributes(ds);
  std::map<GroupId, std::size_t> hits;
  for (std::uint32_t a = 0; a < ds.attribute_count(); ++a)
    for (std::uint32_t y = 0; y < ds.class_count(); ++y) {
      r.group_sizes[{a, y}] = 0;
      hits[{a, y}] = 0;
    }
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const GroupId g{attrs[idx[k]], ds.labels()[idx[k]]};
    ++r.group_sizes[g];
    if (predictions[k] == g.second) ++hits[g];
  }
  double worst = 1.0;
  double sum = 0.0;
  for (const auto& [g, n] : r.group_sizes) {
    if (n == 0) continue;
    const double acc = static_cast<double>(hits[g]) / static_cast<double>(n);
    r.per_group_accuracy[g] = acc;
    worst = std::min(worst, acc);
    sum += acc;
  }
  r.has_groups = true;
  r.worst_group_accuracy = worst;
  r.bge = 1.0 - sum / static_cast<double>(r.per_group_accuracy.size());
  return r;
}

inline EvalReport evaluate(const LinearScorer& classifier, const FeatureDataset& ds, Split split,
                           bool require_groups = true) {
  if (classifier.outputs() != ds.class_count()) throw ValidationError("evaluate: classifier is not K-way");
  const auto idx = ds.indices(split);
  if (idx.empty()) throw ValidationError("evaluate: split '" + std::string(to_string(split)) + "' is empty");
  std::vector<std::uint32_t> pred(idx.size());
  Vector buf(classifier.outputs());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    classifier.logits(ds.features().row(idx[k]), buf);
    pred[k] = LinearScorer::argmax(buf);
  }
  return evaluate_predictions(pred, ds, idx, require_groups);
}

struct Selection {
  LinearScorer scorer;
  std::size_t epoch = 0;  // 1-based
  double val_worst_group_accuracy = 0.0;
};

// Highest validation worst-group accuracy; ties go to the earliest epoch.
inline Selection select_model(std::span<const LinearScorer> snapshots, const FeatureDataset& ds,
                              Split split = Split::kVal) {
  if (snapshots.empty()) throw ValidationError("select_model: no snapshots");
  Selection best;
  double best_wga = -1.0;
  for (std::size_t e = 0; e < snapshots.size(); ++e) {
    const double wga = evaluate(snapshots[e], ds, split).worst_group_accuracy;
    if (wga > best_wga) {
      best_wga = wga;
      best.epoch = e + 1;
    }
  }
  best.scorer = snapshots[best.epoch - 1];
  best.val_worst_group_accuracy = best_wga;
  return best;
}

struct IdentificationReport {
  double precision = 0.0;
  double recall = 0.0;
  GroupId worst_group{};
  std::size_t identified = 0;
  std::size_t worst_group_size = 0;
  std::size_t overlap = 0;
  bool precision_undefined = false;  // nothing identified; precision reported as 0

  nlohmann::ordered_json to_json() const {
    return {{"precision", precision},
            {"recall", recall},
            {"worst_group", {{"attribute", worst_group.first}, {"class", worst_group.second}}},
            {"identified", identified},
            {"worst_group_size", worst_group_size},
            {"overlap", overlap},
            {"precision_undefined", precision_undefined}};
  }
};

// Group with the lowest accuracy in a report; ties go to the first (a, y) in order.
inline GroupId worst_group(const EvalReport& r) {
  if (r.per_group_accuracy.empty()) throw ValidationError("report has no group accuracies");
  GroupId g = r.per_group_accuracy.begin()->first;
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& [id, acc] : r.per_group_accuracy)
    if (acc < lo) {
      lo = acc;
      g = id;
    }
  return g;
}

// How well the pseudo-minority flags (one per train sample, file order) cover
// the worst validation group of the reference model.
inline IdentificationReport identification_quality(std::span<const std::uint8_t> pseudo_minority,
                                                   const FeatureDataset& ds, const EvalReport& reference_val_report) {
  const auto idx = ds.indices(Split::kTrain);
  if (pseudo_minority.size() != idx.size()) throw ValidationError("identification: flag count differs from train size");
  const auto& attrs = ground_truth_attributes(ds);
  IdentificationReport r;
  r.worst_group = worst_group(reference_val_report);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const bool in_worst = attrs[idx[k]] == r.worst_group.first && ds.labels()[idx[k]] == r.worst_group.second;
    const bool flagged = pseudo_minority[k] != 0;
    r.identified += flagged;
    r.worst_group_size += in_worst;
    r.overlap += flagged && in_worst;
  }
  if (r.identified == 0) {
    r.precision_undefined = true;
    r.precision = 0.0;
  } else {
    r.precision = static_cast<double>(r.overlap) / static_cast<double>(r.identified);
  }
  r.recall = r.worst_group_size == 0 ? 0.0 : static_cast<double>(r.overlap) / static_cast<double>(r.worst_group_size);
  return r;
}

}  // namespace eval
}  // namespace ppa
