#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

// DWA-style adaptive weight allocation over an arbitrary number of loss
// streams: w_j = n * exp(r_j / T) / sum_i exp(r_i / T), with the ratio
// taken against the previous epoch's loss or the Welford running mean.

namespace polybox {

enum class RatioMode { previous, mean };

// Numerically stable incremental mean update.
inline double welford_mean(double prev_mean, double new_value, long n) {
  if (n < 1) throw std::invalid_argument("welford_mean: n must be >= 1");
  return prev_mean + (new_value - prev_mean) / static_cast<double>(n);
}

inline std::vector<double> dwa_weights(std::span<const double> ratios, double temperature) {
  const std::size_t n = ratios.size();
  // subtract the max before exponentiating
  double rmax = ratios[0];
  for (double r : ratios) rmax = std::max(rmax, r);
  double denom = 0.0;
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = std::exp((ratios[i] - rmax) / temperature);
    denom += w[i];
  }
  for (auto& x : w) x *= static_cast<double>(n) / denom;
  return w;
}

class WeightState {
 public:
  static constexpr double kRatioMax = 10.0;  // guard for zero previous loss

  WeightState(std::size_t n_terms, double temperature = 20.0,
              RatioMode mode = RatioMode::previous)
      : n_terms_(n_terms),
        temperature_(temperature),
        ratio_mode_(mode),
        last_loss_(n_terms, 0.0),
        running_mean_(n_terms, 0.0) {
    if (n_terms < 1) throw std::invalid_argument("WeightState: need at least one stream");
    if (temperature <= 0.0) throw std::invalid_argument("WeightState: temperature must be > 0");
  }

  std::vector<double> update(std::initializer_list<double> losses) {
    return update(std::span<const double>(losses.begin(), losses.size()));
  }

  // Consumes one epoch's losses and returns the per-stream weights.
  // Epochs 0 and 1 have no valid ratio and get uniform weights.
  std::vector<double> update(std::span<const double> losses) {
    if (losses.size() != n_terms_)
      throw std::invalid_argument("WeightState::update: wrong number of losses");
    for (double l : losses) {
      if (!std::isfinite(l) || l < 0.0)
        throw std::invalid_argument("WeightState::update: losses must be finite and >= 0");
    }

    std::vector<double> weights;
    clamped_ = false;
    if (epoch_ < 2) {
      weights.assign(n_terms_, 1.0);
    } else {
      std::vector<double> ratios(n_terms_);
      for (std::size_t j = 0; j < n_terms_; ++j) {
        const double denom = ratio_mode_ == RatioMode::previous ? last_loss_[j] : running_mean_[j];
        if (denom == 0.0) {
          ratios[j] = kRatioMax;
          clamped_ = true;
        } else {
          ratios[j] = losses[j] / denom;
        }
      }
      weights = dwa_weights(ratios, temperature_);
    }

    const long n = epoch_ + 1;
    for (std::size_t j = 0; j < n_terms_; ++j) {
      last_loss_[j] = losses[j];
      running_mean_[j] = welford_mean(running_mean_[j], losses[j], n);
    }
    ++epoch_;
    return weights;
  }

  std::size_t n_terms() const { return n_terms_; }
  long epoch() const { return epoch_; }
  double temperature() const { return temperature_; }
  RatioMode ratio_mode() const { return ratio_mode_; }
  const std::vector<double>& last_loss() const { return last_loss_; }
  const std::vector<double>& running_mean() const { return running_mean_; }
  bool last_update_clamped() const { return clamped_; }

  // checkpoint restore
  void restore(long epoch, std::vector<double> last_loss, std::vector<double> running_mean) {
    if (last_loss.size() != n_terms_ || running_mean.size() != n_terms_)
      throw std::invalid_argument("WeightState::restore: size mismatch");
    epoch_ = epoch;
    last_loss_ = std::move(last_loss);
    running_mean_ = std::move(running_mean);
  }

 private:
  std::size_t n_terms_;
  double temperature_;
  RatioMode ratio_mode_;
  long epoch_ = 0;
  std::vector<double> last_loss_;
  std::vector<double> running_mean_;
  bool clamped_ = false;
};

}  // namespace polybox
