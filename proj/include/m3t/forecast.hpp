#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "m3t/domain.hpp"

namespace m3t {

// Per-UAV load samples, normalized to [0,1], evenly spaced.
struct LoadSeries {
  int uav_id = 0;
  double sample_period = 1.0;
  std::vector<double> t;
  std::vector<double> load;

  std::size_t size() const { return load.size(); }
};

void validate_series(const LoadSeries& s);

// Single-layer LSTM with scalar input and a linear scalar head. Gate rows are
// stacked i, f, o, g (H rows each).
struct LstmModel {
  int hidden_size = 0;
  // History length the model was trained for; 0 if unknown.
  int window = 0;
  Eigen::VectorXd wx;  // 4H
  Eigen::MatrixXd wh;  // 4H x H
  Eigen::VectorXd b;   // 4H
  Eigen::VectorXd wy;  // H
  double by = 0.0;

  std::size_t parameter_count() const;
  // Flat order: wx, wh (row-major), b, wy, by.
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& p);

  friend bool operator==(const LstmModel&, const LstmModel&);
};

LstmModel zero_model(int hidden_size);
// Weights uniform in [-scale, scale] from a seeded generator.
LstmModel random_model(int hidden_size, std::uint64_t seed, double scale = 0.1);

struct LstmState {
  Eigen::VectorXd h;
  Eigen::VectorXd c;
};

LstmState zero_state(int hidden_size);

// One cell step; returns the head output and the new state.
std::pair<double, LstmState> lstm_step(const LstmModel& m, double x, const LstmState& state);

struct ForecastConfig {
  int window = 120;
  int horizon = 60;
  int hidden_size = 16;
  double learning_rate = 0.05;
  int epochs = 200;
  std::uint64_t seed = 0;
  // Offset between consecutive training windows.
  int window_stride = 1;
};

inline constexpr double kGradClipNorm = 5.0;

struct TrainLog {
  // Full-batch loss before each update, then the loss of the final weights.
  std::vector<double> losses;
  double initial_loss() const { return losses.empty() ? 0.0 : losses.front(); }
  double final_loss() const { return losses.empty() ? 0.0 : losses.back(); }
};

// Teacher-forced one-step MSE over the last `targets` samples of `seq`, and
// its BPTT gradient (flat parameter order) when `grad` is set.
double sequence_loss(const LstmModel& m, std::span<const double> seq, std::size_t targets,
                     Eigen::VectorXd* grad = nullptr);

// Mean loss over all W+L training windows of the series.
double training_loss(const LstmModel& m, const LoadSeries& series, const ForecastConfig& cfg,
                     Eigen::VectorXd* grad = nullptr);

// Full-batch gradient descent with norm clipping. Returns the lowest-loss
// iterate, so the returned loss never exceeds the initial one.
LstmModel train(const LoadSeries& series, const ForecastConfig& cfg, TrainLog* log = nullptr);

// Max over parameters of |analytic - numeric| / max(1, |numeric|), central
// differences with step 1e-5. `flip_sign_of` corrupts one analytic partial.
double gradient_check(const LstmModel& m, std::span<const double> window,
                      std::optional<std::size_t> flip_sign_of = std::nullopt);

// Closed-loop rollout after consuming `history`; outputs clamped to [0,1].
std::vector<double> forecast(const LstmModel& m, std::span<const double> history, int horizon);

enum class BaselineKind { persistence, linear_ar };

struct Baseline {
  BaselineKind kind = BaselineKind::persistence;
  int order = 1;
};

std::vector<double> baseline_forecast(std::span<const double> history, int horizon, Baseline kind);

// AR(p) coefficients without intercept; a[j] multiplies x[t-1-j].
Eigen::VectorXd fit_ar(std::span<const double> history, int order);

double rmse(std::span<const double> predicted, std::span<const double> actual);

struct ForecastSplit {
  std::map<int, double> weights;
  std::map<int, long> chunks;
  std::map<int, double> cycles;  // sums to the task's cycles exactly
};

// Shares proportional to 1 - mean forecast load, snapped to k chunks by
// largest remainder (ties to the lower UAV id).
ForecastSplit split_by_forecast(const TaskRequest& task, const std::map<int, std::vector<double>>& forecasts, int k);

std::string model_to_json(const LstmModel& m);
LstmModel model_from_json(const std::string& text);

// CSV `t,uav_id,load`; one series per UAV id, ordered by id.
std::string series_to_csv(const std::vector<LoadSeries>& series);
std::vector<LoadSeries> series_from_csv(const std::string& text);
std::vector<LoadSeries> load_series_csv(const std::filesystem::path& path);

}  // namespace m3t
