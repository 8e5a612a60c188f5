#pragma once

#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "preblock/corpus_labels.hpp"
#include "preblock/csv.hpp"
#include "preblock/error.hpp"
#include "preblock/features.hpp"
#include "preblock/model.hpp"
#include "preblock/stats_eval.hpp"

namespace preblock {

/// Mask lengths in frames: 0, 128, 256, 512 and 1024 ms at 32 ms per frame.
inline const std::vector<std::size_t> &default_mask_sweep() {
  static const std::vector<std::size_t> sweep{0, 4, 8, 16, 32};
  return sweep;
}

struct AblationRow {
  std::string target;
  std::size_t n = 0;
  std::size_t positives = 0;
  /// One entry per sweep level; absent when the target lacks a class.
  std::vector<std::optional<double>> auc;
  /// auc.back() - auc.front().
  std::optional<double> delta;
};

struct AblationReport {
  std::vector<std::size_t> mask_frames;
  std::vector<AblationRow> rows; // preblock_targets() order
};

/// Preblock-head AUC per target with the last N frames of every input
/// zeroed, for each N of the sweep. Features must be normalized and keyed.
inline AblationReport tail_mask_sweep(const CnnModel &model,
                                      std::span<const FeatureTensor> features,
                                      std::span<const std::string> keys,
                                      std::span<const LabeledClip> labeled,
                                      const ClipFilter &filter,
                                      const std::vector<std::size_t> &sweep) {
  if (sweep.empty())
    throw ContractError("ablate: empty mask sweep");
  if (keys.size() != features.size())
    throw ContractError("ablate: keys and features differ in length");
  AblationReport report;
  report.mask_frames = sweep;
  const auto targets = preblock_targets();
  for (const auto &t : targets)
    report.rows.push_back({t, 0, 0, {}, std::nullopt});
  std::vector<FeatureTensor> masked(features.size());
  for (const std::size_t n : sweep) {
    for (std::size_t i = 0; i < features.size(); ++i)
      masked[i] = mask_tail(features[i], n);
    const auto preds = predict_batch(model, masked, keys);
    auto sets = preblock_sets(preds, labeled, filter);
    for (auto &row : report.rows) {
      const auto &set = sets[row.target];
      row.n = set.size();
      row.positives = set.positives();
      row.auc.push_back(row.positives > 0 && row.positives < row.n
                            ? std::optional<double>(auc(set))
                            : std::nullopt);
    }
  }
  for (auto &row : report.rows)
    if (row.auc.front() && row.auc.back())
      row.delta = *row.auc.back() - *row.auc.front();
  return report;
}

inline nlohmann::json to_json(const AblationReport &r) {
  using nlohmann::json;
  auto opt = [](const std::optional<double> &v) { return v ? json(*v) : json(nullptr); };
  json rows = json::array();
  for (const auto &row : r.rows) {
    json aucs = json::array();
    for (const auto &a : row.auc)
      aucs.push_back(opt(a));
    rows.push_back({{"target", row.target},
                    {"n", row.n},
                    {"positives", row.positives},
                    {"auc", aucs},
                    {"delta", opt(row.delta)}});
  }
  json frames = json::array();
  json ms = json::array();
  for (auto f : r.mask_frames) {
    frames.push_back(f);
    ms.push_back(f * kHopLength * 1000 / kFeatureSampleRate);
  }
  return json{{"mask_frames", frames}, {"mask_ms", ms}, {"rows", rows}};
}

/// CSV: target,n,positives,auc_<ms>ms...,delta.
inline void write_ablation_csv(std::ostream &out, const AblationReport &r) {
  out << "target,n,positives";
  for (auto f : r.mask_frames)
    out << ",auc_" << f * kHopLength * 1000 / kFeatureSampleRate << "ms";
  out << ",delta\n";
  for (const auto &row : r.rows) {
    out << csv::escape(row.target) << ',' << row.n << ',' << row.positives;
    for (const auto &a : row.auc) {
      out << ',';
      if (a)
        out << *a;
    }
    out << ',';
    if (row.delta)
      out << *row.delta;
    out << '\n';
  }
}

} // namespace preblock
