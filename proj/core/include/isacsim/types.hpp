#ifndef ISACSIM_TYPES_HPP
#define ISACSIM_TYPES_HPP

#include <complex>
#include <Eigen/Dense>

namespace isac {

using cplx = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;
using RMat = Eigen::MatrixXd;

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kPi = 3.141592653589793238462643383279502884;

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

}  // namespace isac

#endif
