#pragma once

#include <Eigen/Dense>

namespace metado {

struct Bounds {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  int dim() const { return static_cast<int>(lower.size()); }

  double diameter() const {
    return (upper - lower).norm();
  }

  static Bounds cube(int dim, double lo, double hi) {
    return {Eigen::VectorXd::Constant(dim, lo),
            Eigen::VectorXd::Constant(dim, hi)};
  }
};

// Budgeted objective. Every evaluate() call consumes one function evaluation
// from the budget; callers are expected to check remaining() before spending.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual double evaluate(const Eigen::VectorXd& x) = 0;
  virtual const Bounds& bounds() const = 0;
  virtual long fe_used() const = 0;
  virtual long fe_max() const = 0;

  long remaining() const { return fe_max() - fe_used(); }
};

}  // namespace metado
