// Copyright 2026 The actree Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "actree/action_space.hpp"
#include "actree/search_tree.hpp"
#include "json.hpp"

namespace actree {

inline constexpr const char* kLengthFeature = "len.chars";

// Dense design matrix with named columns. Indicator columns hold 0/1; the
// optional len.chars column holds character counts.
struct FeatureMatrix {
  std::vector<std::string> row_ids;
  std::vector<std::string> column_names;
  Eigen::MatrixXd values;

  Eigen::Index column(const std::string& name) const;  // -1 when absent
};

// Unicode code points in UTF-8 text.
std::size_t char_count(const std::string& text);

// presence.<dim>.<action> for every non-reference action of the selected
// dimensions (the first template of a dimension is the reference).
std::vector<std::string> presence_feature_names(const ActionSpace& space,
                                                const std::vector<std::string>& dimensions);

// pos[k].<dim>.<action>, then step[k].<a>x<b> for every dimension pair, then
// trans.<dim>.<a>-><a'>[k->k+1]; k is 1-based.
std::vector<std::string> sequential_feature_names(const ActionSpace& space, int depth);

// Throws FeatureError for actions outside the space.
FeatureMatrix extract_presence_features(const std::vector<Trace>& traces,
                                        const ActionSpace& space,
                                        const std::vector<std::string>& dimensions,
                                        bool length_feature = false);

// Throws FeatureError unless every trace has exactly `depth` steps.
FeatureMatrix extract_sequential_features(const std::vector<Trace>& traces,
                                          const ActionSpace& space, int depth,
                                          bool length_feature = false);

// Traces with exactly `depth` steps, in input order.
std::vector<Trace> filter_fixed_length(const std::vector<Trace>& traces, int depth);

// m1a = first dimension presence, m1b = second dimension presence,
// m1c = both, m2 = sequential.
enum class AttributionModel { kM1a, kM1b, kM1c, kM2 };
std::string to_string(AttributionModel model);
AttributionModel attribution_model_from_string(const std::string& name);

FeatureMatrix extract_model_features(AttributionModel model, const std::vector<Trace>& traces,
                                     const ActionSpace& space, int depth,
                                     bool length_feature = false);

enum class ModelKind { kOls, kLasso };

struct RegressionFit {
  ModelKind model_kind = ModelKind::kOls;
  std::vector<std::string> feature_names;
  Eigen::VectorXd coefficients;  // aligned with feature_names
  double intercept = 0;
  double alpha = 0;
  std::vector<std::pair<double, double>> cv_curve;  // (alpha, mean fold R^2)
  double train_r2 = 0;
  std::optional<double> test_r2;
  std::optional<std::pair<double, double>> test_r2_ci;
  int nonzero_count = 0;
  // Diagnostics.
  Eigen::Index rank = 0;  // OLS design rank
  int sweeps = 0;
  bool converged = true;
  int objective_increases = 0;   // summed over every coordinate-descent run
  double max_kkt_excess = 0;     // max over converged runs of |grad_j| - alpha
  std::size_t train_rows = 0;

  std::map<std::string, double> coefficient_map() const;
};

// Minimum-norm least squares with an intercept. Throws NumericError on
// empty or non-finite input.
RegressionFit fit_ols(const FeatureMatrix& X, const Eigen::VectorXd& y);

struct LassoOptions {
  std::vector<double> alpha_grid;  // empty: log grid from alpha_max
  int grid_size = 50;
  double grid_ratio = 1e-4;
  int folds = 10;
  std::uint64_t seed = 0;
  double tolerance = 1e-7;
  int max_sweeps = 10000;
};

// Cross-validated LASSO (coefficients in original units).
RegressionFit fit_lasso(const FeatureMatrix& X, const Eigen::VectorXd& y,
                        const LassoOptions& options = {});

// LASSO at one fixed alpha, no cross-validation.
RegressionFit fit_lasso_at(const FeatureMatrix& X, const Eigen::VectorXd& y, double alpha,
                           double tolerance = 1e-7, int max_sweeps = 10000);

Eigen::VectorXd predict(const RegressionFit& fit, const FeatureMatrix& X);

struct FitEvaluation {
  double r2 = 0;
  double ci_low = 0, ci_high = 0;
  int bootstrap_iterations = 0;
  int degenerate_resamples = 0;  // resamples with zero variance, skipped
};

// Test R^2 plus a percentile bootstrap interval over resampled test rows.
FitEvaluation evaluate_fit(const RegressionFit& fit, const FeatureMatrix& X_test,
                           const Eigen::VectorXd& y_test, int bootstrap_iterations = 1000,
                           std::uint64_t seed = 0);

struct TrainTestSplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
  std::vector<std::string> removed_duplicates;
};

// Optionally drops later traces whose final answer repeats an earlier one,
// then shuffles and cuts at round(fraction * n).
TrainTestSplit split_train_test(const std::vector<Trace>& traces, double train_fraction,
                                std::uint64_t seed, bool remove_duplicates = true);

// Rows of X whose ids are listed, in list order.
FeatureMatrix select_rows(const FeatureMatrix& X, const std::vector<std::string>& ids);

// A non-empty comment is written first as "# <comment>".
void write_feature_csv(const std::filesystem::path& path, const FeatureMatrix& X,
                       const std::optional<Eigen::VectorXd>& y = {},
                       const std::string& comment = "");

nlohmann::json to_json(const RegressionFit& fit);
RegressionFit regression_fit_from_json(const nlohmann::json& doc);

}  // namespace actree
