#pragma once

#include <deque>
#include <functional>

#include "koopkan/numerics.hpp"

namespace koopkan {

/// Returns f(x) and writes the gradient into `grad` (pre-sized to x.size()).
using Objective = std::function<double(const Vector& x, Vector& grad)>;

struct LbfgsOptions {
  double learning_rate = 1.0;
  int max_iter = 20;
  int max_eval = 25;
  int history_size = 10;
  double tolerance_grad = 1e-7;
  double tolerance_change = 1e-9;
  bool strong_wolfe = true;
};

struct LbfgsReport {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int iterations = 0;
  int evaluations = 0;
};

/// Limited-memory BFGS with a strong-Wolfe line search (cubic interpolation
/// and zoom, c1 = 1e-4, c2 = 0.9). One step() runs up to max_iter
/// iterations. History is kept across step() calls until reset().
class Lbfgs {
 public:
  explicit Lbfgs(LbfgsOptions opts = {}) : opts_(opts) {}

  LbfgsReport step(Vector& x, const Objective& f);
  void reset();

 private:
  LbfgsOptions opts_;
  std::deque<Vector> old_dirs_;
  std::deque<Vector> old_steps_;
  std::deque<double> ro_;
  Vector d_;
  Vector prev_grad_;
  double t_ = 0.0;
  double h_diag_ = 1.0;
  int total_iter_ = 0;
};

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Decoupled: x <- x - lr * weight_decay * x.
  double weight_decay = 0.0;
};

class Adam {
 public:
  explicit Adam(AdamOptions opts = {}) : opts_(opts) {}

  void step(Vector& x, const Vector& grad);
  long steps() const { return t_; }

 private:
  AdamOptions opts_;
  Vector m_;
  Vector v_;
  long t_ = 0;
};

}  // namespace koopkan
