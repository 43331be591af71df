#pragma once

#include <chrono>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "probcast/core/error.hpp"

namespace probcast {

struct TrainingSchedule {
  double initial_lr = 5e-5;
  double lr_reduce_factor = 5.0;
  std::size_t lr_patience_epochs = 2;
  std::size_t stop_patience_epochs = 5;
  std::size_t max_epochs = 100;
  std::size_t batch_size = 32;
  /// A validation loss counts as a new best only below best - min_delta.
  double min_delta = 1e-6;

  void validate() const {
    detail::require(initial_lr > 0.0, "learning rate must be positive");
    detail::require(lr_reduce_factor > 1.0, "learning-rate reduction factor must exceed 1");
    detail::require(lr_patience_epochs >= 1 && stop_patience_epochs >= 1, "patiences must be at least one epoch");
    detail::require(batch_size >= 1, "batch size must be at least 1");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  /// Index of the epoch whose weights were kept; npos when no epoch ran.
  std::size_t best_epoch = static_cast<std::size_t>(-1);
  bool stopped_early = false;

  double best_val_loss() const {
    return best_epoch < epochs.size() ? epochs[best_epoch].val_loss : std::numeric_limits<double>::quiet_NaN();
  }

  /// CSV with columns epoch, train_loss, val_loss, lr, seconds.
  std::string to_csv(bool with_seconds = true) const {
    std::string out = "epoch,train_loss,val_loss,lr,seconds\n";
    char line[192];
    for (const auto& e : epochs) {
      std::snprintf(line, sizeof line, "%zu,%.9g,%.9g,%.9g,%.3f\n", e.epoch, e.train_loss, e.val_loss, e.lr,
                    with_seconds ? e.seconds : 0.0);
      out += line;
    }
    return out;
  }
};

/// Plateau logic: divide the learning rate by the factor after
/// `lr_patience` epochs without a new best (the counter restarts after each
/// reduction), stop after `stop_patience` epochs since the last best.
class PlateauController {
 public:
  struct Decision {
    bool improved = false;
    bool reduce_lr = false;
    bool stop = false;
  };

  explicit PlateauController(const TrainingSchedule& s) : sched_(s), lr_(s.initial_lr) { s.validate(); }

  double lr() const { return lr_; }
  double best() const { return best_; }

  Decision observe(double val_loss) {
    Decision d;
    if (val_loss < best_ - sched_.min_delta) {
      best_ = val_loss;
      since_best_ = 0;
      plateau_ = 0;
      d.improved = true;
      return d;
    }
    ++since_best_;
    ++plateau_;
    if (since_best_ >= sched_.stop_patience_epochs) {
      d.stop = true;
    } else if (plateau_ >= sched_.lr_patience_epochs) {
      lr_ /= sched_.lr_reduce_factor;
      plateau_ = 0;
      d.reduce_lr = true;
    }
    return d;
  }

 private:
  TrainingSchedule sched_;
  double lr_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t since_best_ = 0;
  std::size_t plateau_ = 0;
};

struct EpochLosses {
  double train_loss = 0.0;
  double val_loss = 0.0;
};

/// Drives `epoch_fn(epoch, lr)` under the plateau schedule. `on_improved`
/// runs after every epoch that sets a new best validation loss, `on_record`
/// after every epoch.
inline TrainHistory run_schedule(const TrainingSchedule& sched,
                                 const std::function<EpochLosses(std::size_t, double)>& epoch_fn,
                                 const std::function<void(std::size_t)>& on_improved = {},
                                 const std::function<void(const EpochRecord&)>& on_record = {}) {
  PlateauController ctl(sched);
  TrainHistory hist;
  for (std::size_t epoch = 0; epoch < sched.max_epochs; ++epoch) {
    const double lr = ctl.lr();
    const auto t0 = std::chrono::steady_clock::now();
    const EpochLosses l = epoch_fn(epoch, lr);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    hist.epochs.push_back({epoch, l.train_loss, l.val_loss, lr, secs});
    if (on_record) on_record(hist.epochs.back());
    const auto d = ctl.observe(l.val_loss);
    if (d.improved) {
      hist.best_epoch = epoch;
      if (on_improved) on_improved(epoch);
    }
    if (d.stop) {
      hist.stopped_early = true;
      break;
    }
  }
  return hist;
}

}  // namespace probcast
