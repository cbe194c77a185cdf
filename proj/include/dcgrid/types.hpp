#pragma once

#include <Eigen/Dense>

#include <limits>
#include <stdexcept>
#include <string>

namespace dcgrid {

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Mat = MatX<double>;
using Vec = VecX<double>;
using Index = Eigen::Index;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// x' M x for any vector/matrix expression pair.
template <typename MatDerived, typename VecDerived>
typename MatDerived::Scalar quadratic_form(const Eigen::MatrixBase<MatDerived>& m,
                                           const Eigen::MatrixBase<VecDerived>& x) {
    return x.dot(m * x);
}

/// Elementwise clamp of a vector expression into [lo, hi].
template <typename D1, typename D2, typename D3>
VecX<typename D1::Scalar> clamp_box(const Eigen::MatrixBase<D1>& x,
                                    const Eigen::MatrixBase<D2>& lo,
                                    const Eigen::MatrixBase<D3>& hi) {
    return x.cwiseMax(lo.derived()).cwiseMin(hi.derived());
}

/// Thrown on violated preconditions and malformed inputs across the library.
class InvalidArgument : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when a numerical routine cannot produce a valid result
/// (unstable model, non-PD matrix, infeasible problem, ...).
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace dcgrid
