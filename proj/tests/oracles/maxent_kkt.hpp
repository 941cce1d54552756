#pragma once

// Reference maximum-entropy solver: infeasible-start primal Newton on the
// KKT system of  min sum p log p  s.t.  sum p = 1, sum p l = L1, sum p l^2 = L2.
// Works on the probabilities directly, unlike the library's dual solver.

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

inline std::vector<double> maxent_kkt(double L1, double L2, int lmin, int lmax, int max_iter = 500) {
  const int n = lmax - lmin + 1;
  const double s = static_cast<double>(lmax);
  Eigen::MatrixXd A(3, n);
  Eigen::Vector3d b(1.0, L1 / s, L2 / (s * s));
  for (int i = 0; i < n; ++i) {
    const double l = (lmin + i) / s;
    A(0, i) = 1.0;
    A(1, i) = l;
    A(2, i) = l * l;
  }
  Eigen::VectorXd p = Eigen::VectorXd::Constant(n, 1.0 / n);
  Eigen::Vector3d nu = Eigen::Vector3d::Zero();
  auto residual = [&](const Eigen::VectorXd& pp, const Eigen::Vector3d& vv) {
    Eigen::VectorXd r(n + 3);
    r.head(n) = (pp.array().log() + 1.0).matrix() + A.transpose() * vv;
    r.tail(3) = A * pp - b;
    return r;
  };
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd r = residual(p, nu);
    if (r.norm() < 1e-14) break;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + 3, n + 3);
    K.topLeftCorner(n, n) = p.cwiseInverse().asDiagonal();
    K.topRightCorner(n, 3) = A.transpose();
    K.bottomLeftCorner(3, n) = A;
    const Eigen::VectorXd d = K.fullPivLu().solve(-r);
    const Eigen::VectorXd dp = d.head(n);
    const Eigen::Vector3d dnu = d.tail(3);
    double t = 1.0;
    while ((p + t * dp).minCoeff() <= 0.0) t *= 0.5;
    const double r0 = r.norm();
    while (residual(p + t * dp, nu + t * dnu).norm() > (1.0 - 0.01 * t) * r0 && t > 1e-12) t *= 0.5;
    p += t * dp;
    nu += t * dnu;
  }
  if (residual(p, nu).norm() > 1e-9) throw std::runtime_error("oracle KKT solver did not converge");
  return {p.data(), p.data() + n};
}

}  // namespace oracle
