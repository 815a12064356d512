#pragma once

#include <Eigen/Dense>
#include <complex>

namespace mcad {

using cplx = std::complex<double>;
using MatrixXcd = Eigen::MatrixXcd;
using VectorXcd = Eigen::VectorXcd;
using MatrixXd = Eigen::MatrixXd;
using VectorXd = Eigen::VectorXd;

/// Numerical-integrity failure (lost positive definiteness, inverse drift,
/// impossible branch); harness-level code catches these per realization.
class numerical_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace mcad
