#include "koopkan/optim.hpp"

#include <algorithm>
#include <cmath>

#include "koopkan/errors.hpp"

namespace koopkan {

namespace {

double cubic_interpolate(double x1, double f1, double g1, double x2, double f2, double g2,
                         double lo, double hi) {
  const double d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
  const double d2_square = d1 * d1 - g1 * g2;
  if (d2_square >= 0.0) {
    const double d2 = std::sqrt(d2_square);
    double min_pos;
    if (x1 <= x2) {
      min_pos = x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2));
    } else {
      min_pos = x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2));
    }
    if (std::isnan(min_pos)) return 0.5 * (lo + hi);
    return std::min(std::max(min_pos, lo), hi);
  }
  return 0.5 * (lo + hi);
}

double cubic_interpolate(double x1, double f1, double g1, double x2, double f2, double g2) {
  return cubic_interpolate(x1, f1, g1, x2, f2, g2, std::min(x1, x2), std::max(x1, x2));
}

struct LineSearchResult {
  double loss;
  Vector grad;
  double t;
  int evals;
};

struct Probe {
  double t;
  double f;
  Vector g;
  double gtd;
};

LineSearchResult strong_wolfe(const Objective& f, const Vector& x, double t, const Vector& d,
                              double loss, const Vector& grad, double gtd,
                              double tolerance_change, int max_ls = 25) {
  constexpr double c1 = 1e-4;
  constexpr double c2 = 0.9;
  const double d_norm = d.cwiseAbs().maxCoeff();

  auto eval = [&](double step) {
    Probe p{step, 0.0, Vector::Zero(x.size()), 0.0};
    p.f = f(x + step * d, p.g);
    p.gtd = p.g.dot(d);
    return p;
  };

  Probe cur = eval(t);
  int evals = 1;
  Probe prev{0.0, loss, grad, gtd};

  std::vector<Probe> bracket;
  bool done = false;
  int ls_iter = 0;
  while (ls_iter < max_ls) {
    if (cur.f > loss + c1 * cur.t * gtd || (ls_iter > 1 && cur.f >= prev.f)) {
      bracket = {prev, cur};
      break;
    }
    if (std::abs(cur.gtd) <= -c2 * gtd) {
      bracket = {cur};
      done = true;
      break;
    }
    if (cur.gtd >= 0.0) {
      bracket = {prev, cur};
      break;
    }
    const double min_step = cur.t + 0.01 * (cur.t - prev.t);
    const double max_step = cur.t * 10.0;
    const double next_t =
        cubic_interpolate(prev.t, prev.f, prev.gtd, cur.t, cur.f, cur.gtd, min_step, max_step);
    prev = std::move(cur);
    cur = eval(next_t);
    ++evals;
    ++ls_iter;
  }
  if (ls_iter == max_ls) bracket = {Probe{0.0, loss, grad, gtd}, cur};

  // Zoom phase.
  bool insuf_progress = false;
  std::size_t low = 0, high = 1;
  if (bracket.size() == 2 && bracket[0].f > bracket[1].f) std::swap(low, high);
  while (!done && ls_iter < max_ls && bracket.size() == 2) {
    if (std::abs(bracket[1].t - bracket[0].t) * d_norm < tolerance_change) break;
    double step = cubic_interpolate(bracket[0].t, bracket[0].f, bracket[0].gtd, bracket[1].t,
                                    bracket[1].f, bracket[1].gtd);
    const double bmax = std::max(bracket[0].t, bracket[1].t);
    const double bmin = std::min(bracket[0].t, bracket[1].t);
    const double eps = 0.1 * (bmax - bmin);
    if (std::min(bmax - step, step - bmin) < eps) {
      if (insuf_progress || step >= bmax || step <= bmin) {
        step = std::abs(step - bmax) < std::abs(step - bmin) ? bmax - eps : bmin + eps;
        insuf_progress = false;
      } else {
        insuf_progress = true;
      }
    } else {
      insuf_progress = false;
    }
    Probe p = eval(step);
    ++evals;
    ++ls_iter;
    if (p.f > loss + c1 * p.t * gtd || p.f >= bracket[low].f) {
      bracket[high] = std::move(p);
      if (bracket[0].f <= bracket[1].f) {
        low = 0;
        high = 1;
      } else {
        low = 1;
        high = 0;
      }
    } else {
      if (std::abs(p.gtd) <= -c2 * gtd) {
        done = true;
      } else if (p.gtd * (bracket[high].t - bracket[low].t) >= 0.0) {
        bracket[high] = bracket[low];
      }
      bracket[low] = std::move(p);
    }
  }
  if (bracket.size() == 1) low = 0;
  return {bracket[low].f, bracket[low].g, bracket[low].t, evals};
}

}  // namespace

void Lbfgs::reset() {
  old_dirs_.clear();
  old_steps_.clear();
  ro_.clear();
  d_.resize(0);
  prev_grad_.resize(0);
  t_ = 0.0;
  h_diag_ = 1.0;
  total_iter_ = 0;
}

LbfgsReport Lbfgs::step(Vector& x, const Objective& f) {
  LbfgsReport report;
  Vector grad = Vector::Zero(x.size());
  double loss = f(x, grad);
  int evals = 1;
  report.initial_loss = loss;
  report.final_loss = loss;
  report.evaluations = 1;
  if (!std::isfinite(loss)) return report;
  if (grad.size() == 0 || grad.cwiseAbs().maxCoeff() <= opts_.tolerance_grad) return report;

  int n_iter = 0;
  while (n_iter < opts_.max_iter) {
    ++n_iter;
    ++total_iter_;

    if (total_iter_ == 1 || d_.size() != x.size()) {
      d_ = -grad;
      old_dirs_.clear();
      old_steps_.clear();
      ro_.clear();
      h_diag_ = 1.0;
    } else {
      const Vector y = grad - prev_grad_;
      const Vector s = d_ * t_;
      const double ys = y.dot(s);
      if (ys > 1e-10) {
        if (static_cast<int>(old_dirs_.size()) == opts_.history_size) {
          old_dirs_.pop_front();
          old_steps_.pop_front();
          ro_.pop_front();
        }
        old_dirs_.push_back(y);
        old_steps_.push_back(s);
        ro_.push_back(1.0 / ys);
        h_diag_ = ys / y.dot(y);
      }
      const std::size_t m = old_dirs_.size();
      std::vector<double> al(m);
      Vector q = -grad;
      for (std::size_t i = m; i-- > 0;) {
        al[i] = old_steps_[i].dot(q) * ro_[i];
        q -= al[i] * old_dirs_[i];
      }
      d_ = q * h_diag_;
      for (std::size_t i = 0; i < m; ++i) {
        const double be = old_dirs_[i].dot(d_) * ro_[i];
        d_ += old_steps_[i] * (al[i] - be);
      }
    }
    prev_grad_ = grad;
    const double prev_loss = loss;

    if (total_iter_ == 1) {
      t_ = std::min(1.0, 1.0 / grad.cwiseAbs().sum()) * opts_.learning_rate;
    } else {
      t_ = opts_.learning_rate;
    }

    const double gtd = grad.dot(d_);
    if (gtd > -opts_.tolerance_change) break;

    int ls_evals = 0;
    if (opts_.strong_wolfe) {
      auto ls = strong_wolfe(f, x, t_, d_, loss, grad, gtd, opts_.tolerance_change);
      loss = ls.loss;
      grad = std::move(ls.grad);
      t_ = ls.t;
      ls_evals = ls.evals;
      x += t_ * d_;
    } else {
      x += t_ * d_;
      if (n_iter != opts_.max_iter) {
        loss = f(x, grad);
        ls_evals = 1;
      }
    }
    evals += ls_evals;
    report.final_loss = loss;

    if (!std::isfinite(loss)) break;
    if (n_iter == opts_.max_iter) break;
    if (evals >= opts_.max_eval) break;
    if (grad.cwiseAbs().maxCoeff() <= opts_.tolerance_grad) break;
    if ((d_ * t_).cwiseAbs().maxCoeff() <= opts_.tolerance_change) break;
    if (std::abs(loss - prev_loss) < opts_.tolerance_change) break;
  }
  report.iterations = n_iter;
  report.evaluations = evals;
  return report;
}

void Adam::step(Vector& x, const Vector& grad) {
  if (grad.size() != x.size()) throw InvalidInput("Adam::step: gradient size mismatch");
  if (m_.size() != x.size()) {
    m_ = Vector::Zero(x.size());
    v_ = Vector::Zero(x.size());
    t_ = 0;
  }
  ++t_;
  if (opts_.weight_decay != 0.0) x *= 1.0 - opts_.learning_rate * opts_.weight_decay;
  m_ = opts_.beta1 * m_ + (1.0 - opts_.beta1) * grad;
  v_ = opts_.beta2 * v_ + (1.0 - opts_.beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  const double step = opts_.learning_rate / bc1;
  const Vector denom = (v_ / bc2).cwiseSqrt().array() + opts_.eps;
  x -= step * m_.cwiseQuotient(denom);
}

}  // namespace koopkan
