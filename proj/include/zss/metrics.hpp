#pragma once

#include <algorithm>
#include <functional>
#include <span>
#include <vector>

#include "zss/common.hpp"

namespace zss {

inline constexpr double kSdrClampDb = 60.0;
inline constexpr double kSdrEps = 1e-12;

inline double clamp_db(double v) { return std::clamp(v, -kSdrClampDb, kSdrClampDb); }

/// 10*log10((|ref|^2 + eps) / (|ref - est|^2 + eps)), clamped to +-60 dB.
template <class S>
double sdr(std::span<const S> reference, std::span<const S> estimate) {
  check(reference.size() == estimate.size(),
        "sdr: reference has " + std::to_string(reference.size()) + " samples, estimate " +
            std::to_string(estimate.size()));
  double ref_e = 0, err_e = 0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    double r = reference[i];
    double e = r - static_cast<double>(estimate[i]);
    ref_e += r * r;
    err_e += e * e;
  }
  check(ref_e > 0, "sdr: reference has zero energy (use the silence protocol)");
  return clamp_db(10.0 * std::log10((ref_e + kSdrEps) / (err_e + kSdrEps)));
}

/// Attenuation achieved when the queried source is absent: higher is better.
template <class S>
double silence_sdr(std::span<const S> input, std::span<const S> output) {
  check(input.size() == output.size(),
        "silence_sdr: input has " + std::to_string(input.size()) + " samples, output " +
            std::to_string(output.size()));
  double in_e = 0, out_e = 0;
  for (std::size_t i = 0; i < input.size(); ++i) {
    in_e += static_cast<double>(input[i]) * input[i];
    out_e += static_cast<double>(output[i]) * output[i];
  }
  check(in_e > 0, "silence_sdr: input has zero energy");
  return clamp_db(10.0 * std::log10((in_e + kSdrEps) / (out_e + kSdrEps)));
}

/// Median with the even-count mean-of-central-pair rule.
inline double median(std::vector<double> v) {
  check(!v.empty(), "median: empty value list");
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Two-level median: per-item median over its clips, then the corpus median.
inline double median_aggregate(const std::vector<std::vector<double>>& per_item_clips) {
  check(!per_item_clips.empty(), "median_aggregate: no items");
  std::vector<double> item_medians;
  item_medians.reserve(per_item_clips.size());
  for (const auto& clips : per_item_clips) {
    check(!clips.empty(), "median_aggregate: item with no clip values");
    item_medians.push_back(median(clips));
  }
  return median(item_medians);
}

/// Splits a waveform into 1-second clips and scores each against the
/// reference clip with `score`; partial trailing samples are dropped.
template <class S>
std::vector<double> per_second_scores(
    std::span<const S> reference, std::span<const S> estimate, Index rate,
    const std::function<double(std::span<const S>, std::span<const S>)>& score) {
  check(reference.size() == estimate.size(), "per_second_scores: length mismatch");
  std::size_t n = reference.size() / static_cast<std::size_t>(rate);
  check(n >= 1, "per_second_scores: waveform shorter than one second");
  std::vector<double> out;
  for (std::size_t k = 0; k < n; ++k) {
    auto r = reference.subspan(k * rate, static_cast<std::size_t>(rate));
    auto e = estimate.subspan(k * rate, static_cast<std::size_t>(rate));
    out.push_back(score(r, e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mean average precision
// ---------------------------------------------------------------------------

/// Macro-averaged AP over classes; a class's AP is the mean of the precision
/// values at each positive, walking items in score-descending order with ties
/// broken by item index. Classes without positives are skipped and reported.
inline double mean_average_precision(const std::vector<std::vector<double>>& scores,
                                     const std::vector<std::vector<int>>& labels,
                                     std::vector<Index>* skipped_classes = nullptr) {
  check(!scores.empty() && scores.size() == labels.size(),
        "mAP: scores and labels must be non-empty and congruent");
  std::size_t c = scores[0].size();
  for (std::size_t i = 0; i < scores.size(); ++i)
    check(scores[i].size() == c && labels[i].size() == c,
          "mAP: ragged score/label rows");
  bool any_positive = false;
  for (const auto& row : labels)
    for (int v : row) {
      check(v == 0 || v == 1, "mAP: labels must be 0 or 1");
      any_positive = any_positive || v == 1;
    }
  check(any_positive, "mAP: label matrix has no positives");

  double total = 0;
  std::size_t used = 0;
  for (std::size_t cls = 0; cls < c; ++cls) {
    std::size_t positives = 0;
    for (const auto& row : labels) positives += static_cast<std::size_t>(row[cls]);
    if (positives == 0) {
      if (skipped_classes) skipped_classes->push_back(static_cast<Index>(cls));
      continue;
    }
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return scores[a][cls] > scores[b][cls];
    });
    double ap = 0;
    std::size_t hits = 0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
      if (labels[order[rank]][cls] == 1) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
      }
    }
    total += ap / static_cast<double>(positives);
    ++used;
  }
  return total / static_cast<double>(used);
}

// ---------------------------------------------------------------------------
// Localization error
// ---------------------------------------------------------------------------

struct LocalizationScore {
  double error_seconds = 0;
  bool hit = false;
};

/// |predicted center - truth midpoint|, plus whether the center fell inside
/// the annotated interval.
inline LocalizationScore localization_error(double center_time, double onset, double offset) {
  check(offset >= onset, "localization_error: interval ends before it starts");
  LocalizationScore s;
  s.error_seconds = std::abs(center_time - 0.5 * (onset + offset));
  s.hit = center_time >= onset && center_time <= offset;
  return s;
}

// ---------------------------------------------------------------------------
// Three-protocol separation evaluation
// ---------------------------------------------------------------------------

template <class S>
struct EvalTriplet {
  std::vector<S> mixture;  // c1 + c2 after energy normalization
  std::vector<S> target;   // c_j
  std::vector<S> other;    // c_{not j}
  std::vector<S> query;    // e_j
  Index class_id = -1;
};

struct ProtocolResult {
  std::vector<double> mixture_sdr;  // per triplet, median over its 1-s clips
  std::vector<double> clean_sdr;
  std::vector<double> silence_sdr;
  std::vector<Index> class_ids;
  double median_mixture = 0, median_clean = 0, median_silence = 0;
};

/// model(input waveform, query) -> estimate waveform.
template <class S>
ProtocolResult protocol_eval(
    const std::function<std::vector<S>(const std::vector<S>&, const std::vector<S>&)>& model,
    const std::vector<EvalTriplet<S>>& triplets, Index rate) {
  check(!triplets.empty(), "protocol_eval: no evaluation triplets");
  ProtocolResult r;
  std::function<double(std::span<const S>, std::span<const S>)> sdr_fn =
      [](std::span<const S> a, std::span<const S> b) { return sdr(a, b); };
  std::function<double(std::span<const S>, std::span<const S>)> sil_fn =
      [](std::span<const S> a, std::span<const S> b) { return silence_sdr(a, b); };
  for (const auto& t : triplets) {
    auto est_mix = model(t.mixture, t.query);
    auto est_clean = model(t.target, t.query);
    auto est_sil = model(t.other, t.query);
    r.mixture_sdr.push_back(
        median(per_second_scores<S>(t.target, est_mix, rate, sdr_fn)));
    r.clean_sdr.push_back(
        median(per_second_scores<S>(t.target, est_clean, rate, sdr_fn)));
    r.silence_sdr.push_back(
        median(per_second_scores<S>(t.other, est_sil, rate, sil_fn)));
    r.class_ids.push_back(t.class_id);
  }
  r.median_mixture = median(r.mixture_sdr);
  r.median_clean = median(r.clean_sdr);
  r.median_silence = median(r.silence_sdr);
  return r;
}

}  // namespace zss
