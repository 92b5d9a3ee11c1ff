#pragma once

#include <Eigen/Dense>
#include <complex>

#include "kanwit/common.hpp"

namespace kanwit::qstate {

using Matrix2c = Eigen::Matrix2cd;
using Matrix4c = Eigen::Matrix4cd;
using Complex = std::complex<double>;

enum class PauliAxis { X = 0, Y = 1, Z = 2 };

// Correlation triple of a Bell-diagonal X-state
// rho = 1/4 (I + t1 XX + t2 YY + t3 ZZ).
struct XStateCoeffs {
    double t1 = 0.0;
    double t2 = 0.0;
    double t3 = 0.0;
};

// Ordered Pauli-pair expectation values for one state.
struct FeatureVector {
    Family family = Family::General9;
    Eigen::VectorXd values;

    const std::vector<std::string>& labels() const { return observable_labels(family); }
};

struct StateSample {
    Matrix4c rho;
    FeatureVector features;
    Label label = Label::Separable;
};

struct StateCheck {
    bool ok = false;
    double min_eigenvalue = 0.0;
};

const Matrix2c& pauli_matrix(PauliAxis axis);

// Kronecker product of two 2x2 expressions.
template <typename DerivedA, typename DerivedB>
Eigen::Matrix<typename DerivedA::Scalar, 4, 4> kron2(const Eigen::MatrixBase<DerivedA>& a,
                                                     const Eigen::MatrixBase<DerivedB>& b) {
    Eigen::Matrix<typename DerivedA::Scalar, 4, 4> out;
    out.template block<2, 2>(0, 0) = a(0, 0) * b;
    out.template block<2, 2>(0, 2) = a(0, 1) * b;
    out.template block<2, 2>(2, 0) = a(1, 0) * b;
    out.template block<2, 2>(2, 2) = a(1, 1) * b;
    return out;
}

// sigma_i (x) sigma_j for axes i, j; cached.
const Matrix4c& pauli_pair(PauliAxis i, PauliAxis j);

// rho = 1/4 [I(x)I + sum t_ij sigma_i(x)sigma_j].  Hermitian and unit-trace by
// construction; positivity is the caller's concern (validate_state).
Matrix4c density_from_features(const FeatureVector& features);

// t_ij = Tr(rho sigma_i(x)sigma_j).  For Symmetric5, checks t_XX == t_YY and
// t_XY == -t_YX within 1e-8 and throws SchemaError on violation.
FeatureVector pauli_features(const Matrix4c& rho, Family family);

// Hermiticity gate (throws std::invalid_argument beyond 1e-10), then
// ok = (min eigenvalue >= -1e-10).
StateCheck validate_state(const Matrix4c& rho);

// Transpose of the second-qubit subsystem: each 2x2 sub-block transposed in
// place.
Matrix4c partial_transpose_second(const Matrix4c& rho);

// Peres-Horodecki test, exact for two qubits: entangled iff the partial
// transpose has an eigenvalue below -1e-10 (boundary counted separable).
bool is_entangled_ppt(const Matrix4c& rho);

// Haar-distributed U(2) element: complex Ginibre draw, QR, then each column
// multiplied by the conjugate phase of its diagonal R entry so the
// factorization is unique.
Matrix2c haar_unitary(RandomStream& rng);

// Uniform draw from the Bell-diagonal positivity tetrahedron by rejection from
// the cube [-1,1]^3.
XStateCoeffs sample_x_state(RandomStream& rng);

bool x_state_valid(const XStateCoeffs& x);

// Analytic separability of a Bell-diagonal state: |t1|+|t2|+|t3| <= 1.
bool x_state_separable(const XStateCoeffs& x);

Matrix4c x_state_density(const XStateCoeffs& x);

// (U1 (x) U2) rho_x (U1 (x) U2)^dagger.
template <typename DerivedA, typename DerivedB>
Matrix4c rotate_locally(const XStateCoeffs& x, const Eigen::MatrixBase<DerivedA>& u1,
                        const Eigen::MatrixBase<DerivedB>& u2) {
    const Matrix4c u = kron2(u1.derived().eval(), u2.derived().eval());
    return u * x_state_density(x) * u.adjoint();
}

// rho = 1/4 [I + a(XX+YY) + b(XY-YX) + c ZZ]: the family invariant under
// equal-angle local z-rotations.
Matrix4c symmetric_density(double a, double b, double c);

// Uniform (a,b,c) on [-1,1]^3, rejected on validate_state.
Matrix4c sample_symmetric_state(RandomStream& rng);

// One labeled state of the requested family: General9 draws an X-state,
// labels it by PPT, and conjugates by independent Haar unitaries; Symmetric5
// draws from the invariant family and labels the state itself.
StateSample sample_state(Family family, RandomStream& rng);

}  // namespace kanwit::qstate
