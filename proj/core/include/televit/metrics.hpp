// SPDX-License-Identifier: Apache-2.0
//
// Exact precision-recall curves over pooled pixel scores. Thresholds are the
// distinct score values, highest first; pixels with equal scores enter the
// positive set together. AUPRC is the step (average precision) sum
//   AP = sum_k (R_k - R_{k-1}) * P_k,  R_0 = 0.
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "televit/datacube.hpp"
#include "televit/model.hpp"

namespace televit {

struct PRPoint {
  double threshold;
  double precision;
  double recall;
};

struct PRCurve {
  std::vector<PRPoint> points;  // one per distinct score, descending threshold
  double auprc = 0.0;
  std::size_t n_pos = 0, n_neg = 0;
};

/// Throws UndefinedMetricError when no label is positive.
PRCurve pr_curve(std::span<const double> scores, std::span<const int> labels);
double auprc(const PRCurve& curve);

/// Scores for every pixel of a sample's target patch, row-major.
using ScoreFn = std::function<std::vector<double>(const Sample&)>;

/// Positive-class probabilities of a model, computed without graph recording.
ScoreFn model_scores(const TeleViTModel& model);
/// Seasonal climatology at the target step's slot for the sample's patch.
ScoreFn climatology_scores(const Climatology& climatology, const Calendar& calendar);

struct EvalReport {
  std::string variant;
  std::size_t h = 0;
  std::size_t n_pixels = 0, n_pos = 0;
  double auprc = 0.0;
  PRCurve curve;
};

/// Pools all pixels of all samples (which must share one horizon) into one curve.
EvalReport evaluate(const ScoreFn& scores, const std::vector<Sample>& samples, const std::string& variant);

nlohmann::json report_json(const EvalReport& report);
/// Problems found in a report document; empty when valid.
std::vector<std::string> validate_report_json(const nlohmann::json& report);

}  // namespace televit
