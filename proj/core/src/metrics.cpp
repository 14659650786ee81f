// SPDX-License-Identifier: Apache-2.0
#include "televit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "televit/errors.hpp"
#include "televit/parallel.hpp"

namespace televit {

PRCurve pr_curve(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw DimensionError("pr_curve: " + std::to_string(scores.size()) + " scores for " +
                         std::to_string(labels.size()) + " labels");
  PRCurve curve;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) throw DataError("pr_curve: NaN score at " + std::to_string(i));
    if (labels[i] != 0 && labels[i] != 1) throw ContractError("pr_curve: labels must be 0 or 1");
    labels[i] ? ++curve.n_pos : ++curve.n_neg;
  }
  if (curve.n_pos == 0) throw UndefinedMetricError("pr_curve: no positive labels, precision-recall undefined");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::size_t tp = 0, fp = 0;
  double prev_recall = 0.0, area = 0.0;
  const double n_pos = static_cast<double>(curve.n_pos);
  for (std::size_t i = 0; i < order.size();) {
    const double thr = scores[order[i]];
    while (i < order.size() && scores[order[i]] == thr) {
      labels[order[i]] ? ++tp : ++fp;
      ++i;
    }
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / n_pos;
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    curve.points.push_back({thr, precision, recall});
  }
  curve.auprc = area;
  return curve;
}

double auprc(const PRCurve& curve) {
  double area = 0.0, prev = 0.0;
  for (const auto& p : curve.points) {
    area += (p.recall - prev) * p.precision;
    prev = p.recall;
  }
  return area;
}

ScoreFn model_scores(const TeleViTModel& model) {
  return [&model](const Sample& s) {
    NoGradGuard no_grad;
    const Tensor proba = predict_proba(forward(s, model));
    return std::vector<double>(proba.data().begin(), proba.data().end());
  };
}

ScoreFn climatology_scores(const Climatology& clim, const Calendar& calendar) {
  return [&clim, &calendar](const Sample& s) {
    const std::size_t h = s.target.dim(1), w = s.target.dim(2);
    const std::size_t slot = calendar.slot_of(s.t + s.h);
    std::vector<double> out(h * w);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out[y * w + x] = clim.at(slot, s.lat_origin + y, s.lon_origin + x);
    return out;
  };
}

EvalReport evaluate(const ScoreFn& scores, const std::vector<Sample>& samples, const std::string& variant) {
  if (samples.empty()) throw UndefinedMetricError("evaluate: no samples");
  EvalReport report;
  report.variant = variant;
  report.h = samples.front().h;
  for (const auto& s : samples)
    if (s.h != report.h) throw ContractError("evaluate: samples mix horizons");

  std::vector<std::vector<double>> per_sample(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    per_sample[i] = scores(samples[i]);
    if (per_sample[i].size() != samples[i].target.numel())
      throw DimensionError("evaluate: score count does not match target pixels");
  });
  std::vector<double> pooled;
  std::vector<int> labels;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    pooled.insert(pooled.end(), per_sample[i].begin(), per_sample[i].end());
    for (double v : samples[i].target.data()) labels.push_back(v > 0.5 ? 1 : 0);
  }
  report.curve = pr_curve(pooled, labels);
  report.n_pixels = pooled.size();
  report.n_pos = report.curve.n_pos;
  report.auprc = report.curve.auprc;
  return report;
}

nlohmann::json report_json(const EvalReport& r) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& p : r.curve.points) curve.push_back({{"thr", p.threshold}, {"p", p.precision}, {"r", p.recall}});
  return {{"variant", r.variant}, {"h", r.h}, {"n_pixels", r.n_pixels}, {"n_pos", r.n_pos},
          {"auprc", r.auprc}, {"pooling", "all pixels of all samples"}, {"curve", curve}};
}

std::vector<std::string> validate_report_json(const nlohmann::json& j) {
  std::vector<std::string> problems;
  if (!j.is_object()) return {"report must be an object"};
  if (!j.contains("variant") || !j["variant"].is_string()) problems.push_back("'variant' must be a string");
  for (const char* k : {"h", "n_pixels", "n_pos"})
    if (!j.contains(k) || !j[k].is_number_unsigned()) problems.push_back(std::string("'") + k + "' must be a non-negative integer");
  if (!j.contains("auprc") || !j["auprc"].is_number() || j["auprc"] < 0.0 || j["auprc"] > 1.0)
    problems.push_back("'auprc' must be a number in [0, 1]");
  if (!j.contains("curve") || !j["curve"].is_array()) {
    problems.push_back("'curve' must be an array");
  } else {
    for (const auto& p : j["curve"])
      if (!p.is_object() || !p.contains("thr") || !p.contains("p") || !p.contains("r") || !p["thr"].is_number() ||
          !p["p"].is_number() || !p["r"].is_number()) {
        problems.push_back("curve points must be {thr, p, r} numbers");
        break;
      }
  }
  if (problems.empty() && j["n_pos"].get<std::size_t>() > j["n_pixels"].get<std::size_t>())
    problems.push_back("'n_pos' exceeds 'n_pixels'");
  return problems;
}

}  // namespace televit
