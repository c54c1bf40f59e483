#include "rfanova/bspline.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace rfanova {

BSplineBasis::BSplineBasis(int order, Eigen::VectorXd interior_knots, double a, double b)
    : order_(order), a_(a), b_(b), interior_(std::move(interior_knots)) {
  if (order < 2) throw OrderError("B-spline order must be at least 2");
  if (!(a < b) || !std::isfinite(a) || !std::isfinite(b)) {
    throw DomainError("B-spline domain must satisfy a < b");
  }
  for (Eigen::Index k = 0; k < interior_.size(); ++k) {
    if (!(interior_(k) > a_ && interior_(k) < b_)) {
      throw DomainError("interior knot outside (a, b)");
    }
    if (k > 0 && !(interior_(k) > interior_(k - 1))) {
      throw DomainError("interior knots must be strictly increasing");
    }
  }
  const Eigen::Index m = interior_.size() + 2 * order_;
  knots_.resize(m);
  knots_.head(order_).setConstant(a_);
  knots_.segment(order_, interior_.size()) = interior_;
  knots_.tail(order_).setConstant(b_);
}

BSplineBasis BSplineBasis::uniform(int order, int num_basis, double a, double b) {
  if (num_basis < order) {
    throw OrderError("need at least `order` basis functions (got " + std::to_string(num_basis) + ")");
  }
  const int n_interior = num_basis - order;
  Eigen::VectorXd interior(n_interior);
  for (int k = 0; k < n_interior; ++k) {
    interior(k) = a + (b - a) * static_cast<double>(k + 1) / static_cast<double>(n_interior + 1);
  }
  return BSplineBasis(order, std::move(interior), a, b);
}

Eigen::Index BSplineBasis::span_index(double t) const {
  // Index i with knots_[i] <= t < knots_[i+1]; the right end maps to the last non-empty span.
  const Eigen::Index last = knots_.size() - order_ - 1;
  if (t >= b_) return last;
  const auto* begin = knots_.data();
  const auto* end = knots_.data() + knots_.size();
  const auto* it = std::upper_bound(begin, end, t);
  return std::clamp<Eigen::Index>(static_cast<Eigen::Index>(it - begin) - 1, order_ - 1, last);
}

Eigen::MatrixXd BSplineBasis::eval_derivs(double t, int max_deriv) const {
  if (!(t >= a_ && t <= b_)) {
    throw DomainError("t = " + std::to_string(t) + " outside basis domain [" + std::to_string(a_) +
                      ", " + std::to_string(b_) + "]");
  }
  const int k = order_;
  const Eigen::Index span = span_index(t);
  // table(j, r): value of the order-(j+1) B-spline with index span - j + r, r = 0..j.
  std::vector<Eigen::VectorXd> table(static_cast<std::size_t>(k));
  table[0] = Eigen::VectorXd::Ones(1);
  for (int j = 1; j < k; ++j) {
    const auto& prev = table[static_cast<std::size_t>(j - 1)];
    Eigen::VectorXd cur = Eigen::VectorXd::Zero(j + 1);
    for (int r = 0; r < j; ++r) {
      // spline index i = span - (j-1) + r, order j -> contributes to i and i-1 at order j+1
      const Eigen::Index i = span - (j - 1) + r;
      const double left = knots_(i + j) - knots_(i);
      const double w = left > 0.0 ? (t - knots_(i)) / left : 0.0;
      cur(r + 1) += w * prev(r);
      cur(r) += (1.0 - w) * prev(r);
    }
    table[static_cast<std::size_t>(j)] = cur;
  }
  // Derivatives through D B_{i,k} = (k-1) [B_{i,k-1}/(t_{i+k-1}-t_i) - B_{i+1,k-1}/(t_{i+k}-t_{i+1})],
  // applied to coefficient vectors on the local support.
  const int L = num_basis();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(max_deriv + 1, L);
  for (int d = 0; d <= max_deriv; ++d) {
    if (d >= k) break;
    const int low = k - d;  // evaluate order-`low` splines, then push coefficients up
    const auto& vals = table[static_cast<std::size_t>(low - 1)];
    for (int r = 0; r < k; ++r) {
      const Eigen::Index target = span - (k - 1) + r;  // order-k spline index
      // Coefficients over order-(k - s) splines with indices target .. target + s.
      Eigen::VectorXd coef = Eigen::VectorXd::Ones(1);
      for (int s = 1; s <= d; ++s) {
        const int ord = k - s + 1;  // differentiating an order-`ord` spline
        Eigen::VectorXd next = Eigen::VectorXd::Zero(s + 1);
        for (int c = 0; c < s; ++c) {
          const Eigen::Index i = target + c;
          const double d1 = knots_(i + ord - 1) - knots_(i);
          const double d2 = knots_(i + ord) - knots_(i + 1);
          if (d1 > 0.0) next(c) += coef(c) * (ord - 1) / d1;
          if (d2 > 0.0) next(c + 1) -= coef(c) * (ord - 1) / d2;
        }
        coef = next;
      }
      double v = 0.0;
      for (int c = 0; c <= d; ++c) {
        const Eigen::Index idx = target + c;  // order-`low` spline index
        const Eigen::Index pos = idx - (span - (low - 1));
        if (pos >= 0 && pos < low) v += coef(c) * vals(pos);
      }
      if (target >= 0 && target < L) out(d, target) = v;
    }
  }
  return out;
}

Eigen::VectorXd BSplineBasis::eval(double t) const { return eval_derivs(t, 0).row(0).transpose(); }

Eigen::MatrixXd BSplineBasis::design(const Eigen::VectorXd& times) const {
  Eigen::MatrixXd X(times.size(), num_basis());
  for (Eigen::Index k = 0; k < times.size(); ++k) X.row(k) = eval(times(k)).transpose();
  return X;
}

Eigen::VectorXd eval_basis(const BSplineBasis& basis, double t) { return basis.eval(t); }

Eigen::VectorXd eval_beta(const Eigen::MatrixXd& B, const BSplineBasis& basis, double t) {
  if (B.rows() != basis.num_basis()) {
    throw std::invalid_argument("coefficient matrix has " + std::to_string(B.rows()) +
                                " rows, basis has " + std::to_string(basis.num_basis()));
  }
  return B.transpose() * basis.eval(t);
}

Eigen::MatrixXd penalty_matrix(const BSplineBasis& basis, const DerivativeOperator& op) {
  if (basis.order() < 4) {
    throw OrderError("second-derivative penalty needs order >= 4 (twice continuously differentiable)");
  }
  if (basis.order() > 10) throw OrderError("penalty quadrature supports order <= 10");
  using Rule = boost::math::quadrature::gauss<double, 10>;
  const int L = basis.num_basis();
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(L, L);
  std::vector<double> breaks;
  breaks.push_back(basis.lower());
  for (Eigen::Index k = 0; k < basis.interior_knots().size(); ++k) breaks.push_back(basis.interior_knots()(k));
  breaks.push_back(basis.upper());

  const auto& abscissa = Rule::abscissa();
  const auto& weights = Rule::weights();
  for (std::size_t s = 0; s + 1 < breaks.size(); ++s) {
    const double lo = breaks[s];
    const double hi = breaks[s + 1];
    const double half = 0.5 * (hi - lo);
    const double mid = 0.5 * (hi + lo);
    auto accumulate = [&](double x, double w) {
      const Eigen::MatrixXd d = basis.eval_derivs(mid + half * x, 2);
      const Eigen::VectorXd l = op.omega0 * d.row(0).transpose() + op.omega1 * d.row(1).transpose() +
                                d.row(2).transpose();
      P.noalias() += (w * half) * l * l.transpose();
    };
    // boost stores the non-negative half of a symmetric rule.
    for (std::size_t q = 0; q < abscissa.size(); ++q) {
      if (abscissa[q] == 0.0) {
        accumulate(0.0, weights[q]);
      } else {
        accumulate(abscissa[q], weights[q]);
        accumulate(-abscissa[q], weights[q]);
      }
    }
  }
  return 0.5 * (P + P.transpose());
}

double penalty_value(const Eigen::MatrixXd& B, const Eigen::MatrixXd& penalty, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("penalty weight lambda must be >= 0");
  if (penalty.rows() != B.rows() || penalty.cols() != B.rows()) {
    throw std::invalid_argument("penalty matrix does not match coefficient rows");
  }
  if (lambda == 0.0) return 0.0;
  return lambda * (B.transpose() * penalty * B).trace();
}

int BasisConfig::resolve_num_basis(long max_curve_length) const {
  if (num_basis > 0) return num_basis;
  const long guess = std::min<long>(max_curve_length / 2, 15);
  return static_cast<int>(std::max<long>(guess, order));
}

}  // namespace rfanova
