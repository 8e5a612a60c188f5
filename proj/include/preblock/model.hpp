#pragma once

#include <cmath>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "preblock/calibration.hpp"
#include "preblock/error.hpp"
#include "preblock/features.hpp"
#include "preblock/layers.hpp"
#include "preblock/weights.hpp"

namespace preblock {

struct HeadLogits {
  float event_logit = 0.0f;
  float preblock_logit = 0.0f;

  friend bool operator==(const HeadLogits &, const HeadLogits &) = default;
};

/// Immutable network bound to validated weights. forward() is const and
/// reentrant; one instance can serve many threads.
class CnnModel {
public:
  explicit CnnModel(ModelWeights weights)
      : weights_(std::move(weights)), arch_(&arch_by_id(weights_.arch_id)) {
    validate(weights_);
  }

  const ModelWeights &weights() const { return weights_; }
  const ArchSpec &arch() const { return *arch_; }

  /// Logits for one normalized feature tensor of the architecture's shape.
  HeadLogits forward(const FeatureTensor &features) const {
    if (!features.normalized)
      throw ContractError("forward: features must be normalized");
    if (features.rows != arch_->input_rows || features.cols != arch_->input_cols)
      throw ContractError("forward: expected " + std::to_string(arch_->input_rows) +
                          "x" + std::to_string(arch_->input_cols) + " features, got " +
                          std::to_string(features.rows) + "x" +
                          std::to_string(features.cols));
    layers::Activation x(1, features.rows, features.cols);
    x.data = features.data;
    std::size_t t = 0;
    auto next = [&]() -> std::span<const float> {
      return weights_.tensors[t++].values;
    };
    for (std::size_t b = 0; b < arch_->block_channels.size(); ++b) {
      const auto conv_w = next(), conv_b = next();
      x = layers::conv3x3(x, conv_w, conv_b);
      const auto gamma = next(), beta = next(), mean = next(), var = next();
      layers::batch_norm(x, gamma, beta, mean, var);
      layers::relu(x.data);
      x = layers::max_pool2x2(x);
    }
    const auto pooled = layers::global_avg_pool(x);
    const auto embed_w = next(), embed_b = next();
    auto embedding = layers::affine(pooled, embed_w, embed_b);
    layers::relu(embedding);
    const auto ev_w = next(), ev_b = next();
    const auto pb_w = next(), pb_b = next();
    return {layers::affine(embedding, ev_w, ev_b)[0],
            layers::affine(embedding, pb_w, pb_b)[0]};
  }

private:
  ModelWeights weights_;
  const ArchSpec *arch_;
};

inline HeadLogits forward(const ModelWeights &weights,
                          const FeatureTensor &features) {
  return CnnModel(weights).forward(features);
}

/// Optional per-head calibration applied in predict_batch.
struct HeadCalibration {
  std::optional<CalibrationModel> event;
  std::optional<CalibrationModel> preblock;
};

struct PredictionRecord {
  std::string clip_key;
  HeadLogits logits;
  double p_raw_event = 0.5;
  double p_raw_preblock = 0.5;
  std::optional<double> p_cal_event;
  std::optional<double> p_cal_preblock;
};

inline PredictionRecord make_prediction(std::string key, HeadLogits logits,
                                        const HeadCalibration &cal = {}) {
  PredictionRecord r;
  r.clip_key = std::move(key);
  r.logits = logits;
  r.p_raw_event = sigmoid(logits.event_logit);
  r.p_raw_preblock = sigmoid(logits.preblock_logit);
  if (cal.event)
    r.p_cal_event = apply(*cal.event, logits.event_logit);
  if (cal.preblock)
    r.p_cal_preblock = apply(*cal.preblock, logits.preblock_logit);
  return r;
}

/// Order-preserving batch inference. keys may be empty (records get the
/// batch index as key) or match features in length.
inline std::vector<PredictionRecord>
predict_batch(const CnnModel &model, std::span<const FeatureTensor> features,
              std::span<const std::string> keys = {},
              const HeadCalibration &cal = {}) {
  if (!keys.empty() && keys.size() != features.size())
    throw ContractError("predict_batch: keys and features differ in length");
  std::vector<PredictionRecord> out;
  out.reserve(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    HeadLogits logits;
    try {
      logits = model.forward(features[i]);
    } catch (const ContractError &e) {
      throw ContractError("predict_batch: clip " + std::to_string(i) + ": " +
                          e.what());
    }
    out.push_back(make_prediction(keys.empty() ? std::to_string(i) : keys[i],
                                  logits, cal));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Logit dump: JSON lines {"clip_key", "event_logit", "preblock_logit"}, logits
// printed with 9 significant digits (enough to round-trip a float).

struct LogitRow {
  std::string clip_key;
  HeadLogits logits;
};

inline std::string format_logit(float v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
  return buf;
}

inline void write_logit_dump(std::ostream &out, std::span<const LogitRow> rows) {
  for (const auto &r : rows)
    out << "{\"clip_key\":" << nlohmann::json(r.clip_key).dump()
        << ",\"event_logit\":" << format_logit(r.logits.event_logit)
        << ",\"preblock_logit\":" << format_logit(r.logits.preblock_logit)
        << "}\n";
}

inline std::vector<LogitRow> read_logit_dump(std::istream &in) {
  std::vector<LogitRow> rows;
  std::string line;
  for (std::size_t n = 0; std::getline(in, line); ++n) {
    if (line.empty())
      continue;
    try {
      const auto j = nlohmann::json::parse(line);
      rows.push_back({j.at("clip_key").get<std::string>(),
                      {j.at("event_logit").get<float>(),
                       j.at("preblock_logit").get<float>()}});
    } catch (const nlohmann::json::exception &e) {
      throw RowError(n, std::string("logit dump: ") + e.what());
    }
  }
  return rows;
}

} // namespace preblock
