#include "kanwit/qstate.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <array>
#include <cmath>

namespace kanwit::qstate {

namespace {

constexpr Complex kI{0.0, 1.0};

Matrix2c make_pauli(PauliAxis axis) {
    Matrix2c m;
    switch (axis) {
        case PauliAxis::X:
            m << 0, 1, 1, 0;
            break;
        case PauliAxis::Y:
            m << 0, -kI, kI, 0;
            break;
        case PauliAxis::Z:
            m << 1, 0, 0, -1;
            break;
    }
    return m;
}

// (axis_first, axis_second) pairs in feature-column order XX, XY, ..., ZZ.
constexpr std::array<std::pair<int, int>, 9> kGeneralAxes = {
    {{0, 0}, {0, 1}, {0, 2}, {1, 0}, {1, 1}, {1, 2}, {2, 0}, {2, 1}, {2, 2}}};

// Column indices of XX, XY, YX, YY, ZZ within the general order.
constexpr std::array<int, 5> kSymmetricToGeneral = {0, 1, 3, 4, 8};

double min_eig_hermitian(const Matrix4c& h) {
    Eigen::SelfAdjointEigenSolver<Matrix4c> solver(h, Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
}

}  // namespace

const Matrix2c& pauli_matrix(PauliAxis axis) {
    static const Matrix2c x = make_pauli(PauliAxis::X);
    static const Matrix2c y = make_pauli(PauliAxis::Y);
    static const Matrix2c z = make_pauli(PauliAxis::Z);
    switch (axis) {
        case PauliAxis::X:
            return x;
        case PauliAxis::Y:
            return y;
        default:
            return z;
    }
}

const Matrix4c& pauli_pair(PauliAxis i, PauliAxis j) {
    static const std::array<Matrix4c, 9> table = [] {
        std::array<Matrix4c, 9> t;
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                t[3 * a + b] = kron2(pauli_matrix(static_cast<PauliAxis>(a)),
                                     pauli_matrix(static_cast<PauliAxis>(b)));
        return t;
    }();
    return table[3 * static_cast<int>(i) + static_cast<int>(j)];
}

Matrix4c density_from_features(const FeatureVector& features) {
    Eigen::Matrix<double, 9, 1> t = Eigen::Matrix<double, 9, 1>::Zero();
    if (features.family == Family::General9) {
        if (features.values.size() != 9)
            throw std::invalid_argument("expected 9 feature values for general9");
        t = features.values;
    } else {
        if (features.values.size() != 5)
            throw std::invalid_argument("expected 5 feature values for symmetric5");
        for (int k = 0; k < 5; ++k) t[kSymmetricToGeneral[k]] = features.values[k];
    }
    Matrix4c rho = 0.25 * Matrix4c::Identity();
    for (int k = 0; k < 9; ++k) {
        if (t[k] == 0.0) continue;
        const auto [i, j] = kGeneralAxes[k];
        rho += 0.25 * t[k] * pauli_pair(static_cast<PauliAxis>(i), static_cast<PauliAxis>(j));
    }
    return rho;
}

FeatureVector pauli_features(const Matrix4c& rho, Family family) {
    Eigen::Matrix<double, 9, 1> t;
    for (int k = 0; k < 9; ++k) {
        const auto [i, j] = kGeneralAxes[k];
        const Complex tr =
            (rho * pauli_pair(static_cast<PauliAxis>(i), static_cast<PauliAxis>(j))).trace();
        t[k] = tr.real();
    }
    FeatureVector out;
    out.family = family;
    if (family == Family::General9) {
        out.values = t;
        return out;
    }
    if (std::abs(t[0] - t[4]) > 1e-8 || std::abs(t[1] + t[3]) > 1e-8)
        throw SchemaError(
            "state violates the z-rotation symmetry (t_XX != t_YY or t_XY != -t_YX)");
    out.values.resize(5);
    for (int k = 0; k < 5; ++k) out.values[k] = t[kSymmetricToGeneral[k]];
    return out;
}

StateCheck validate_state(const Matrix4c& rho) {
    const double herm = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
    if (herm > 1e-10)
        throw std::invalid_argument("matrix is not Hermitian (residual " + std::to_string(herm) +
                                    ")");
    const double lo = min_eig_hermitian(rho);
    return {lo >= -1e-10, lo};
}

Matrix4c partial_transpose_second(const Matrix4c& rho) {
    Matrix4c out;
    for (int bi = 0; bi < 2; ++bi)
        for (int bj = 0; bj < 2; ++bj)
            out.block<2, 2>(2 * bi, 2 * bj) = rho.block<2, 2>(2 * bi, 2 * bj).transpose();
    return out;
}

bool is_entangled_ppt(const Matrix4c& rho) {
    const StateCheck check = validate_state(rho);
    if (!check.ok)
        throw std::invalid_argument("not a density matrix (min eigenvalue " +
                                    std::to_string(check.min_eigenvalue) + ")");
    return min_eig_hermitian(partial_transpose_second(rho)) < -1e-10;
}

Matrix2c haar_unitary(RandomStream& rng) {
    while (true) {
        Matrix2c g;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) g(i, j) = Complex(rng.normal(), rng.normal());
        if (g.norm() < 1e-12) continue;  // probability-zero degenerate draw
        Eigen::HouseholderQR<Matrix2c> qr(g);
        Matrix2c q = qr.householderQ();
        const Matrix2c r = qr.matrixQR().triangularView<Eigen::Upper>();
        for (int j = 0; j < 2; ++j) {
            const Complex d = r(j, j);
            const double mag = std::abs(d);
            if (mag < 1e-12) continue;
            q.col(j) *= d / mag;
        }
        return q;
    }
}

bool x_state_valid(const XStateCoeffs& x) {
    constexpr double slack = -1e-12;
    return 1.0 - x.t1 - x.t2 - x.t3 >= slack && 1.0 - x.t1 + x.t2 + x.t3 >= slack &&
           1.0 + x.t1 - x.t2 + x.t3 >= slack && 1.0 + x.t1 + x.t2 - x.t3 >= slack;
}

bool x_state_separable(const XStateCoeffs& x) {
    return std::abs(x.t1) + std::abs(x.t2) + std::abs(x.t3) <= 1.0;
}

XStateCoeffs sample_x_state(RandomStream& rng) {
    while (true) {
        const XStateCoeffs x{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                             rng.uniform(-1.0, 1.0)};
        if (x_state_valid(x)) return x;
    }
}

Matrix4c x_state_density(const XStateCoeffs& x) {
    Matrix4c rho = 0.25 * Matrix4c::Identity();
    rho += 0.25 * x.t1 * pauli_pair(PauliAxis::X, PauliAxis::X);
    rho += 0.25 * x.t2 * pauli_pair(PauliAxis::Y, PauliAxis::Y);
    rho += 0.25 * x.t3 * pauli_pair(PauliAxis::Z, PauliAxis::Z);
    return rho;
}

Matrix4c symmetric_density(double a, double b, double c) {
    Matrix4c rho = 0.25 * Matrix4c::Identity();
    rho += 0.25 * a * pauli_pair(PauliAxis::X, PauliAxis::X);
    rho += 0.25 * a * pauli_pair(PauliAxis::Y, PauliAxis::Y);
    rho += 0.25 * b * pauli_pair(PauliAxis::X, PauliAxis::Y);
    rho -= 0.25 * b * pauli_pair(PauliAxis::Y, PauliAxis::X);
    rho += 0.25 * c * pauli_pair(PauliAxis::Z, PauliAxis::Z);
    return rho;
}

Matrix4c sample_symmetric_state(RandomStream& rng) {
    while (true) {
        const double a = rng.uniform(-1.0, 1.0);
        const double b = rng.uniform(-1.0, 1.0);
        const double c = rng.uniform(-1.0, 1.0);
        const Matrix4c rho = symmetric_density(a, b, c);
        if (validate_state(rho).ok) return rho;
    }
}

StateSample sample_state(Family family, RandomStream& rng) {
    StateSample s;
    if (family == Family::General9) {
        const XStateCoeffs x = sample_x_state(rng);
        s.label = is_entangled_ppt(x_state_density(x)) ? Label::Entangled : Label::Separable;
        const Matrix2c u1 = haar_unitary(rng);
        const Matrix2c u2 = haar_unitary(rng);
        s.rho = rotate_locally(x, u1, u2);
        s.features = pauli_features(s.rho, Family::General9);
    } else {
        s.rho = sample_symmetric_state(rng);
        s.label = is_entangled_ppt(s.rho) ? Label::Entangled : Label::Separable;
        s.features = pauli_features(s.rho, Family::Symmetric5);
    }
    return s;
}

}  // namespace kanwit::qstate
