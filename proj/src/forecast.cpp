#include "m3t/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "m3t/offload.hpp"

namespace m3t {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw InputError(std::string(what) + ": must be finite");
}

// Per-step activations kept for the backward pass.
struct StepCache {
  double x = 0.0;
  Eigen::VectorXd h_prev, c_prev, i, f, o, g, c, tc, h;
  double y = 0.0;
};

StepCache forward_step(const LstmModel& m, double x, const Eigen::VectorXd& h_prev, const Eigen::VectorXd& c_prev) {
  const int H = m.hidden_size;
  StepCache s;
  s.x = x;
  s.h_prev = h_prev;
  s.c_prev = c_prev;
  const Eigen::VectorXd z = m.wx * x + m.wh * h_prev + m.b;
  s.i = z.segment(0, H).unaryExpr(&sigmoid);
  s.f = z.segment(H, H).unaryExpr(&sigmoid);
  s.o = z.segment(2 * H, H).unaryExpr(&sigmoid);
  s.g = z.segment(3 * H, H).array().tanh();
  s.c = s.f.cwiseProduct(c_prev) + s.i.cwiseProduct(s.g);
  s.tc = s.c.array().tanh();
  s.h = s.o.cwiseProduct(s.tc);
  s.y = m.wy.dot(s.h) + m.by;
  return s;
}

std::size_t usable_windows(const LoadSeries& series, const ForecastConfig& cfg) {
  const std::size_t span = static_cast<std::size_t>(cfg.window + cfg.horizon);
  if (series.size() < span)
    throw InputError("series " + std::to_string(series.uav_id) + ": " + std::to_string(series.size()) +
                     " samples, need at least window + horizon = " + std::to_string(span));
  return (series.size() - span) / static_cast<std::size_t>(cfg.window_stride) + 1;
}

void validate_config(const ForecastConfig& cfg) {
  if (cfg.window < 1) throw InputError("window: must be >= 1");
  if (cfg.horizon < 1) throw InputError("horizon: must be >= 1");
  if (cfg.hidden_size < 1) throw InputError("hidden_size: must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw InputError("learning_rate: must be > 0");
  if (cfg.epochs < 0) throw InputError("epochs: must be >= 0");
  if (cfg.window_stride < 1) throw InputError("window_stride: must be >= 1");
}

}  // namespace

void validate_series(const LoadSeries& s) {
  if (s.t.size() != s.load.size()) throw InputError("series " + std::to_string(s.uav_id) + ": t/load length mismatch");
  if (!(s.sample_period > 0.0)) throw InputError("series " + std::to_string(s.uav_id) + ": sample_period must be > 0");
  for (std::size_t k = 0; k < s.load.size(); ++k) {
    const std::string at = "series " + std::to_string(s.uav_id) + "[" + std::to_string(k) + "]";
    if (!std::isfinite(s.load[k]) || s.load[k] < 0.0 || s.load[k] > 1.0) throw InputError(at + ".load: must be in [0,1]");
    if (k > 0) {
      const double dt = s.t[k] - s.t[k - 1];
      if (!(dt > 0.0)) throw InputError(at + ".t: timestamps must increase");
      if (std::abs(dt - s.sample_period) > 1e-6 * s.sample_period)
        throw InputError(at + ".t: spacing differs from sample_period");
    }
  }
}

std::size_t LstmModel::parameter_count() const {
  const std::size_t H = static_cast<std::size_t>(hidden_size);
  return 4 * H + 4 * H * H + 4 * H + H + 1;
}

Eigen::VectorXd LstmModel::parameters() const {
  Eigen::VectorXd p(parameter_count());
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < wx.size(); ++r) p[k++] = wx[r];
  for (Eigen::Index r = 0; r < wh.rows(); ++r)
    for (Eigen::Index c = 0; c < wh.cols(); ++c) p[k++] = wh(r, c);
  for (Eigen::Index r = 0; r < b.size(); ++r) p[k++] = b[r];
  for (Eigen::Index r = 0; r < wy.size(); ++r) p[k++] = wy[r];
  p[k] = by;
  return p;
}

void LstmModel::set_parameters(const Eigen::VectorXd& p) {
  if (static_cast<std::size_t>(p.size()) != parameter_count())
    throw InputError("parameter vector has " + std::to_string(p.size()) + " entries, expected " +
                     std::to_string(parameter_count()));
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < wx.size(); ++r) wx[r] = p[k++];
  for (Eigen::Index r = 0; r < wh.rows(); ++r)
    for (Eigen::Index c = 0; c < wh.cols(); ++c) wh(r, c) = p[k++];
  for (Eigen::Index r = 0; r < b.size(); ++r) b[r] = p[k++];
  for (Eigen::Index r = 0; r < wy.size(); ++r) wy[r] = p[k++];
  by = p[k];
}

bool operator==(const LstmModel& a, const LstmModel& b) {
  return a.hidden_size == b.hidden_size && a.window == b.window && a.wx == b.wx && a.wh == b.wh && a.b == b.b &&
         a.wy == b.wy && a.by == b.by;
}

LstmModel zero_model(int hidden_size) {
  if (hidden_size < 1) throw InputError("hidden_size: must be >= 1");
  LstmModel m;
  m.hidden_size = hidden_size;
  m.wx = Eigen::VectorXd::Zero(4 * hidden_size);
  m.wh = Eigen::MatrixXd::Zero(4 * hidden_size, hidden_size);
  m.b = Eigen::VectorXd::Zero(4 * hidden_size);
  m.wy = Eigen::VectorXd::Zero(hidden_size);
  return m;
}

LstmModel random_model(int hidden_size, std::uint64_t seed, double scale) {
  LstmModel m = zero_model(hidden_size);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  Eigen::VectorXd p(m.parameter_count());
  for (Eigen::Index k = 0; k < p.size(); ++k) p[k] = u(rng);
  m.set_parameters(p);
  return m;
}

LstmState zero_state(int hidden_size) {
  return {Eigen::VectorXd::Zero(hidden_size), Eigen::VectorXd::Zero(hidden_size)};
}

std::pair<double, LstmState> lstm_step(const LstmModel& m, double x, const LstmState& state) {
  require_finite(x, "lstm input");
  if (state.h.size() != m.hidden_size || state.c.size() != m.hidden_size)
    throw InputError("lstm state: expected length " + std::to_string(m.hidden_size));
  if (!state.h.allFinite() || !state.c.allFinite()) throw InputError("lstm state: must be finite");
  StepCache s = forward_step(m, x, state.h, state.c);
  return {s.y, LstmState{std::move(s.h), std::move(s.c)}};
}

double sequence_loss(const LstmModel& m, std::span<const double> seq, std::size_t targets, Eigen::VectorXd* grad) {
  if (seq.size() < 2) throw InputError("sequence: need at least 2 samples");
  if (targets < 1 || targets > seq.size() - 1) throw InputError("sequence: targets out of range");
  const int H = m.hidden_size;
  const std::size_t steps = seq.size() - 1;
  const std::size_t first = steps - targets;  // first step whose output is scored

  std::vector<StepCache> cache;
  cache.reserve(steps);
  Eigen::VectorXd h = Eigen::VectorXd::Zero(H), c = Eigen::VectorXd::Zero(H);
  double loss = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    cache.push_back(forward_step(m, seq[t], h, c));
    h = cache.back().h;
    c = cache.back().c;
    if (t >= first) {
      const double e = cache.back().y - seq[t + 1];
      loss += e * e;
    }
  }
  loss /= static_cast<double>(targets);
  if (!grad) return loss;

  Eigen::VectorXd dwx = Eigen::VectorXd::Zero(4 * H), db = Eigen::VectorXd::Zero(4 * H);
  Eigen::MatrixXd dwh = Eigen::MatrixXd::Zero(4 * H, H);
  Eigen::VectorXd dwy = Eigen::VectorXd::Zero(H);
  double dby = 0.0;
  Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(H), dc_next = Eigen::VectorXd::Zero(H);
  Eigen::VectorXd dz(4 * H);

  for (std::size_t t = steps; t-- > 0;) {
    const StepCache& s = cache[t];
    const double dy = t >= first ? 2.0 * (s.y - seq[t + 1]) / static_cast<double>(targets) : 0.0;
    dwy += dy * s.h;
    dby += dy;
    const Eigen::VectorXd dh = dy * m.wy + dh_next;
    const Eigen::VectorXd dc =
        dh.cwiseProduct(s.o).cwiseProduct((1.0 - s.tc.array().square()).matrix()) + dc_next;
    dz.segment(0, H) = dc.cwiseProduct(s.g).cwiseProduct(s.i.cwiseProduct((1.0 - s.i.array()).matrix()));
    dz.segment(H, H) = dc.cwiseProduct(s.c_prev).cwiseProduct(s.f.cwiseProduct((1.0 - s.f.array()).matrix()));
    dz.segment(2 * H, H) = dh.cwiseProduct(s.tc).cwiseProduct(s.o.cwiseProduct((1.0 - s.o.array()).matrix()));
    dz.segment(3 * H, H) = dc.cwiseProduct(s.i).cwiseProduct((1.0 - s.g.array().square()).matrix());
    dwx += dz * s.x;
    dwh.noalias() += dz * s.h_prev.transpose();
    db += dz;
    dh_next.noalias() = m.wh.transpose() * dz;
    dc_next = dc.cwiseProduct(s.f);
  }

  LstmModel g = m;
  g.wx = dwx;
  g.wh = dwh;
  g.b = db;
  g.wy = dwy;
  g.by = dby;
  *grad = g.parameters();
  return loss;
}

double training_loss(const LstmModel& m, const LoadSeries& series, const ForecastConfig& cfg, Eigen::VectorXd* grad) {
  const std::size_t n = usable_windows(series, cfg);
  const std::size_t span = static_cast<std::size_t>(cfg.window + cfg.horizon);
  const std::span<const double> all(series.load);
  double loss = 0.0;
  Eigen::VectorXd g;
  if (grad) *grad = Eigen::VectorXd::Zero(m.parameter_count());
  for (std::size_t w = 0; w < n; ++w) {
    const auto seq = all.subspan(w * static_cast<std::size_t>(cfg.window_stride), span);
    loss += sequence_loss(m, seq, static_cast<std::size_t>(cfg.horizon), grad ? &g : nullptr);
    if (grad) *grad += g;
  }
  if (grad) *grad /= static_cast<double>(n);
  return loss / static_cast<double>(n);
}

LstmModel train(const LoadSeries& series, const ForecastConfig& cfg, TrainLog* log) {
  validate_config(cfg);
  validate_series(series);
  usable_windows(series, cfg);

  LstmModel m = random_model(cfg.hidden_size, cfg.seed);
  m.window = cfg.window;
  if (log) log->losses.clear();
  if (cfg.epochs == 0) return m;

  LstmModel best = m;
  double best_loss = std::numeric_limits<double>::infinity();
  Eigen::VectorXd p = m.parameters(), g;
  for (int e = 0; e <= cfg.epochs; ++e) {
    const bool last = e == cfg.epochs;
    const double loss = training_loss(m, series, cfg, last ? nullptr : &g);
    if (log) log->losses.push_back(loss);
    if (loss < best_loss) {
      best_loss = loss;
      best = m;
    }
    if (last) break;
    const double norm = g.norm();
    if (norm > kGradClipNorm) g *= kGradClipNorm / norm;
    p -= cfg.learning_rate * g;
    m.set_parameters(p);
  }
  if (log) log->losses.back() = best_loss;
  return best;
}

double gradient_check(const LstmModel& m, std::span<const double> window, std::optional<std::size_t> flip_sign_of) {
  if (window.size() < 2) throw InputError("gradient_check: window needs at least 2 samples");
  const std::size_t targets = window.size() - 1;
  Eigen::VectorXd analytic;
  sequence_loss(m, window, targets, &analytic);
  if (flip_sign_of) {
    if (*flip_sign_of >= static_cast<std::size_t>(analytic.size()))
      throw InputError("gradient_check: parameter index out of range");
    analytic[static_cast<Eigen::Index>(*flip_sign_of)] *= -1.0;
  }

  constexpr double step = 1e-5;
  const Eigen::VectorXd p0 = m.parameters();
  LstmModel probe = m;
  double worst = 0.0;
  for (Eigen::Index k = 0; k < p0.size(); ++k) {
    Eigen::VectorXd p = p0;
    p[k] = p0[k] + step;
    probe.set_parameters(p);
    const double up = sequence_loss(probe, window, targets);
    p[k] = p0[k] - step;
    probe.set_parameters(p);
    const double down = sequence_loss(probe, window, targets);
    const double numeric = (up - down) / (2.0 * step);
    worst = std::max(worst, std::abs(analytic[k] - numeric) / std::max(1.0, std::abs(numeric)));
  }
  return worst;
}

std::vector<double> forecast(const LstmModel& m, std::span<const double> history, int horizon) {
  if (horizon < 0) throw InputError("horizon: must be >= 0");
  if (m.window > 0 && history.size() != static_cast<std::size_t>(m.window))
    throw InputError("history: " + std::to_string(history.size()) + " samples, model expects " +
                     std::to_string(m.window));
  if (history.empty()) throw InputError("history: must be nonempty");
  std::vector<double> out;
  if (horizon == 0) return out;
  LstmState st = zero_state(m.hidden_size);
  double y = 0.0;
  for (double x : history) std::tie(y, st) = lstm_step(m, x, st);
  out.reserve(static_cast<std::size_t>(horizon));
  for (int k = 0; k < horizon; ++k) {
    const double v = std::clamp(y, 0.0, 1.0);
    out.push_back(v);
    if (k + 1 < horizon) std::tie(y, st) = lstm_step(m, v, st);
  }
  return out;
}

Eigen::VectorXd fit_ar(std::span<const double> history, int order) {
  if (order < 1) throw InputError("ar order: must be >= 1");
  const std::size_t p = static_cast<std::size_t>(order);
  if (history.size() <= p)
    throw InputError("history: " + std::to_string(history.size()) + " samples, AR(" + std::to_string(order) +
                     ") needs more than " + std::to_string(order));
  const std::size_t rows = history.size() - p;
  Eigen::MatrixXd X(rows, p);
  Eigen::VectorXd y(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    y[r] = history[r + p];
    for (std::size_t j = 0; j < p; ++j) X(r, j) = history[r + p - 1 - j];
  }
  return X.completeOrthogonalDecomposition().solve(y);
}

std::vector<double> baseline_forecast(std::span<const double> history, int horizon, Baseline kind) {
  if (horizon < 0) throw InputError("horizon: must be >= 0");
  if (history.empty()) throw InputError("history: must be nonempty");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(horizon));
  if (kind.kind == BaselineKind::persistence) {
    out.assign(static_cast<std::size_t>(horizon), history.back());
    return out;
  }
  const Eigen::VectorXd a = fit_ar(history, kind.order);
  std::vector<double> buf(history.begin(), history.end());
  for (int k = 0; k < horizon; ++k) {
    double v = 0.0;
    for (Eigen::Index j = 0; j < a.size(); ++j) v += a[j] * buf[buf.size() - 1 - static_cast<std::size_t>(j)];
    buf.push_back(v);
    out.push_back(v);
  }
  return out;
}

double rmse(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size()) throw InputError("rmse: length mismatch");
  if (predicted.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < predicted.size(); ++k) sum += (predicted[k] - actual[k]) * (predicted[k] - actual[k]);
  return std::sqrt(sum / static_cast<double>(predicted.size()));
}

ForecastSplit split_by_forecast(const TaskRequest& task, const std::map<int, std::vector<double>>& forecasts, int k) {
  if (k < 1) throw InputError("split granularity: must be >= 1");
  if (forecasts.empty()) throw InputError("split_by_forecast: no UAV forecasts");
  ForecastSplit out;
  double total = 0.0;
  for (const auto& [uav, f] : forecasts) {
    if (f.empty()) throw InputError("split_by_forecast: empty forecast for uav " + std::to_string(uav));
    double mean = 0.0;
    for (double v : f) mean += v;
    mean /= static_cast<double>(f.size());
    const double w = std::max(0.0, 1.0 - mean);
    out.weights[uav] = w;
    total += w;
  }
  if (!(total > 0.0)) throw InfeasibleError("split_by_forecast: every UAV is saturated (forecast load >= 1)");
  for (auto& [uav, w] : out.weights) w /= total;

  // Largest remainder: floors first, then leftover chunks by remainder.
  long assigned = 0;
  std::vector<std::pair<double, int>> rem;
  for (const auto& [uav, w] : out.weights) {
    const double quota = w * k;
    const long fl = static_cast<long>(std::floor(quota));
    out.chunks[uav] = fl;
    assigned += fl;
    if (w > 0.0) rem.emplace_back(quota - static_cast<double>(fl), uav);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t j = 0; assigned < k && j < rem.size(); ++j, ++assigned) ++out.chunks[rem[j].second];

  // Cycles per chunk count; the largest holder absorbs rounding so the sum is exact.
  const double chunk = task.compute_cycles / static_cast<double>(k);
  int largest = out.chunks.begin()->first;
  for (const auto& [uav, n] : out.chunks)
    if (n > out.chunks[largest]) largest = uav;
  double others = 0.0;
  for (const auto& [uav, n] : out.chunks) {
    out.cycles[uav] = static_cast<double>(n) * chunk;
    if (uav != largest) others += out.cycles[uav];
  }
  out.cycles[largest] = task.compute_cycles - others;
  return out;
}

std::string model_to_json(const LstmModel& m) {
  const auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  std::vector<double> wh;
  for (Eigen::Index r = 0; r < m.wh.rows(); ++r)
    for (Eigen::Index c = 0; c < m.wh.cols(); ++c) wh.push_back(m.wh(r, c));
  nlohmann::ordered_json j;
  j["hidden_size"] = m.hidden_size;
  j["window"] = m.window;
  j["wx"] = vec(m.wx);
  j["wh"] = wh;
  j["b"] = vec(m.b);
  j["wy"] = vec(m.wy);
  j["by"] = m.by;
  return j.dump(2) + "\n";
}

LstmModel model_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(std::string("model: ") + e.what());
  }
  try {
    LstmModel m = zero_model(j.at("hidden_size").get<int>());
    m.window = j.value("window", 0);
    const auto fill = [&](const char* key, std::size_t n) {
      auto v = j.at(key).get<std::vector<double>>();
      if (v.size() != n)
        throw InputError(std::string("model.") + key + ": expected " + std::to_string(n) + " values, got " +
                         std::to_string(v.size()));
      for (double x : v)
        if (!std::isfinite(x)) throw InputError(std::string("model.") + key + ": must be finite");
      return v;
    };
    const std::size_t H = static_cast<std::size_t>(m.hidden_size);
    auto wx = fill("wx", 4 * H), wh = fill("wh", 4 * H * H), b = fill("b", 4 * H), wy = fill("wy", H);
    Eigen::VectorXd p(m.parameter_count());
    std::size_t k = 0;
    for (const auto* v : {&wx, &wh, &b, &wy})
      for (double x : *v) p[static_cast<Eigen::Index>(k++)] = x;
    p[static_cast<Eigen::Index>(k)] = j.at("by").get<double>();
    require_finite(p[static_cast<Eigen::Index>(k)], "model.by");
    m.set_parameters(p);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("model: ") + e.what());
  }
}

std::string series_to_csv(const std::vector<LoadSeries>& series) {
  std::string out = "t,uav_id,load\n";
  for (const auto& s : series)
    for (std::size_t k = 0; k < s.size(); ++k)
      out += format_number(s.t[k]) + "," + std::to_string(s.uav_id) + "," + format_number(s.load[k]) + "\n";
  return out;
}

std::vector<LoadSeries> series_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "t,uav_id,load") throw InputError("load csv: expected header t,uav_id,load");
  std::map<int, LoadSeries> by_uav;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string at = "load csv line " + std::to_string(lineno);
    std::istringstream row(line);
    std::string a, b, c, extra;
    if (!std::getline(row, a, ',') || !std::getline(row, b, ',') || !std::getline(row, c, ',') ||
        std::getline(row, extra, ','))
      throw InputError(at + ": expected 3 columns");
    try {
      std::size_t used = 0;
      const double t = std::stod(a, &used);
      if (used != a.size()) throw std::invalid_argument(a);
      const int uav = std::stoi(b, &used);
      if (used != b.size()) throw std::invalid_argument(b);
      const double load = std::stod(c, &used);
      if (used != c.size()) throw std::invalid_argument(c);
      LoadSeries& s = by_uav[uav];
      s.uav_id = uav;
      s.t.push_back(t);
      s.load.push_back(load);
    } catch (const std::logic_error&) {
      throw InputError(at + ": malformed number");
    }
  }
  std::vector<LoadSeries> out;
  for (auto& [uav, s] : by_uav) {
    if (s.t.size() >= 2) s.sample_period = s.t[1] - s.t[0];
    validate_series(s);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<LoadSeries> load_series_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return series_from_csv(ss.str());
}

}  // namespace m3t
