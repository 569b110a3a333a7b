#include "coxmap/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "coxmap/log.hpp"
#include "coxmap/parallel.hpp"
#include "coxmap/rng.hpp"

namespace coxmap {

RocResult roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw Error("E_EVAL", "score/label size mismatch");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw Error("E_EVAL", "labels must be 0/1");
    n_pos += static_cast<std::size_t>(l);
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error("E_EVAL", "degenerate labels: one class only");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Mann-Whitney with midranks for ties
  double rank_sum_pos = 0.0;
  {
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
      const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t t = i; t <= j; ++t)
        if (labels[order[t]] == 1) rank_sum_pos += midrank;
      i = j + 1;
    }
  }
  RocResult out;
  out.auc = (rank_sum_pos - 0.5 * static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0)) /
            (static_cast<double>(n_pos) * static_cast<double>(n_neg));

  // curve swept over descending unique thresholds: predict positive at score >= t
  out.thresholds.push_back(std::numeric_limits<double>::infinity());
  out.fpr.push_back(0.0);
  out.tpr.push_back(0.0);
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = n; i-- > 0;) {
    const std::size_t j = order[i];
    if (labels[j] == 1)
      ++tp;
    else
      ++fp;
    const bool tie_continues = i > 0 && scores[order[i - 1]] == scores[j];
    if (!tie_continues) {
      out.thresholds.push_back(scores[j]);
      out.fpr.push_back(static_cast<double>(fp) / static_cast<double>(n_neg));
      out.tpr.push_back(static_cast<double>(tp) / static_cast<double>(n_pos));
    }
  }
  return out;
}

CvPlan make_cv_plan(int n_units, std::uint64_t seed, int n_folds) {
  if (n_folds < 2) throw Error("E_EVAL", "cross-validation needs at least 2 folds");
  if (n_units < n_folds)
    throw Error("E_EVAL", "fewer units than folds: " + std::to_string(n_units));
  CvPlan plan;
  plan.n_folds = n_folds;
  plan.seed = seed;
  std::vector<int> units(n_units);
  std::iota(units.begin(), units.end(), 0);
  CounterRng rng(seed, 0x63760706u);
  for (int i = n_units - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
    std::swap(units[i], units[j]);
  }
  plan.fold_of_unit.assign(n_units, 0);
  for (int i = 0; i < n_units; ++i) plan.fold_of_unit[units[i]] = i % n_folds;
  return plan;
}

CvResult cross_validate(const PixelTable& pixels, const AdjacencyGraph& graph,
                        const std::vector<EffectSpec>& effects, const HyperSpec& hyper,
                        const CvPlan& plan, const FitOptions& options,
                        IntensityEstimator estimator) {
  if (static_cast<int>(plan.fold_of_unit.size()) != graph.n_units())
    throw Error("E_EVAL", "cross-validation plan does not cover the unit set");
  for (int u : pixels.unit_id)
    if (u < 0 || u >= graph.n_units())
      throw Error("E_EVAL", "pixel references unit outside the plan");

  CvResult out;
  out.folds.resize(plan.n_folds);

  const int fold_threads = std::max(1, options.threads);
  const int outer = std::min(fold_threads, plan.n_folds);
  const int inner = std::max(1, fold_threads / outer);

  parallel_for(plan.n_folds, outer, [&](int f) {
    FoldResult fold;
    fold.fold = f;
    std::vector<std::size_t> train_rows;
    for (std::size_t i = 0; i < pixels.n_pixels(); ++i) {
      if (plan.fold_of_unit[pixels.unit_id[i]] == f)
        fold.heldout_rows.push_back(i);
      else
        train_rows.push_back(i);
    }
    if (train_rows.empty() || fold.heldout_rows.empty())
      throw Error("E_EVAL", "fold " + std::to_string(f) + " has an empty train or test set");

    const PixelTable train = pixels.subset(train_rows);
    ModelStructure model = assemble_model(train, graph, effects, hyper);
    FitOptions fit_options = options;
    fit_options.threads = inner;
    fit_options.keep_grid_state = true;
    FitResult fitted = fit(model, hyper, fit_options);

    // score held-out pixels through the training model's effect mappings
    const auto columns = model.bind_table(pixels);
    std::vector<std::vector<std::pair<int, double>>> rows;
    rows.reserve(fold.heldout_rows.size());
    std::vector<double> values(model.blocks.size(), 0.0);
    for (std::size_t i : fold.heldout_rows) {
      for (std::size_t b = 0; b < model.blocks.size(); ++b)
        values[b] = columns[b] >= 0 ? pixels.covariates[columns[b]][i] : 0.0;
      rows.push_back(model.incidence_row(values, pixels.unit_id[i]));
    }
    Eigen::VectorXd mean, variance;
    linear_predictor_moments(fitted, rows, mean, variance);
    const Eigen::VectorXd lambda =
        pixel_intensity(mean, variance, model.cell_area, estimator);

    fold.pixel_scores.assign(lambda.data(), lambda.data() + lambda.size());
    fold.pixel_labels.reserve(fold.heldout_rows.size());
    for (std::size_t i : fold.heldout_rows)
      fold.pixel_labels.push_back(pixels.count[i] > 0 ? 1 : 0);

    // unit level: aggregate held-out pixels per held-out unit
    std::vector<double> unit_lambda(graph.n_units(), 0.0);
    std::vector<int> unit_events(graph.n_units(), 0);
    for (std::size_t t = 0; t < fold.heldout_rows.size(); ++t) {
      const int u = pixels.unit_id[fold.heldout_rows[t]];
      unit_lambda[u] += fold.pixel_scores[t];
      unit_events[u] += pixels.count[fold.heldout_rows[t]];
    }
    for (int u = 0; u < graph.n_units(); ++u) {
      if (plan.fold_of_unit[u] != f) continue;
      fold.heldout_units.push_back(u);
      fold.unit_scores.push_back(unit_lambda[u]);
      fold.unit_labels.push_back(unit_events[u] > 0 ? 1 : 0);
    }

    const auto try_roc = [f](const std::vector<double>& s, const std::vector<int>& l,
                             const char* level, RocResult& roc, double& auc) {
      try {
        roc = roc_auc(s, l);
        auc = roc.auc;
      } catch (const Error&) {
        auc = std::numeric_limits<double>::quiet_NaN();
        log_warn("fold " + std::to_string(f) + " has single-class " + level +
                 " labels; fold ROC skipped");
      }
    };
    try_roc(fold.pixel_scores, fold.pixel_labels, "pixel", fold.pixel_roc, fold.pixel_auc);
    try_roc(fold.unit_scores, fold.unit_labels, "unit", fold.unit_roc, fold.unit_auc);
    out.folds[f] = std::move(fold);
  });

  // pooled curves: held-out scores concatenated across folds in fold order
  std::vector<double> all_pixel_scores, all_unit_scores;
  std::vector<int> all_pixel_labels, all_unit_labels;
  for (const auto& fold : out.folds) {
    all_pixel_scores.insert(all_pixel_scores.end(), fold.pixel_scores.begin(),
                            fold.pixel_scores.end());
    all_pixel_labels.insert(all_pixel_labels.end(), fold.pixel_labels.begin(),
                            fold.pixel_labels.end());
    all_unit_scores.insert(all_unit_scores.end(), fold.unit_scores.begin(),
                           fold.unit_scores.end());
    all_unit_labels.insert(all_unit_labels.end(), fold.unit_labels.begin(),
                           fold.unit_labels.end());
  }
  try {
    out.pooled_pixel = roc_auc(all_pixel_scores, all_pixel_labels);
  } catch (const Error&) {
    out.pooled_pixel.auc = std::numeric_limits<double>::quiet_NaN();
    log_warn("pooled pixel labels are single-class; pooled pixel ROC skipped");
  }
  try {
    out.pooled_unit = roc_auc(all_unit_scores, all_unit_labels);
  } catch (const Error&) {
    out.pooled_unit.auc = std::numeric_limits<double>::quiet_NaN();
    log_warn("pooled unit labels are single-class; pooled unit ROC skipped");
  }

  double pixel_sum = 0.0, unit_sum = 0.0;
  int pixel_n = 0, unit_n = 0;
  for (const auto& fold : out.folds) {
    if (std::isfinite(fold.pixel_auc)) {
      pixel_sum += fold.pixel_auc;
      ++pixel_n;
    }
    if (std::isfinite(fold.unit_auc)) {
      unit_sum += fold.unit_auc;
      ++unit_n;
    }
  }
  out.fold_mean_pixel_auc = pixel_n > 0 ? pixel_sum / pixel_n
                                        : std::numeric_limits<double>::quiet_NaN();
  out.fold_mean_unit_auc =
      unit_n > 0 ? unit_sum / unit_n : std::numeric_limits<double>::quiet_NaN();
  return out;
}

}  // namespace coxmap
