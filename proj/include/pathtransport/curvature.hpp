#pragma once

#include <optional>
#include <span>
#include <utility>

#include "pathtransport/geometry.hpp"

namespace pt {

// T^eta(s,t) = Gamma(s; eta(.,t)) eta'' - Gamma(t; eta(s,.)) eta'
// with eta' = d eta/ds, eta'' = d eta/dt. Requires fiber_dim == base_dim.
Vector torsion_vector(const CoefficientFunctional& gamma, const TwoParamMap& eta, double s, double t,
                      double h_fd = kDefaultFdStep);

// T^i_{.jk} = Gamma^i_{.kj} - Gamma^i_{.jk}, stored (i, j, k), so that
// T(A, B)^i = T^i_{.jk} A^j B^k.
Tensor3 torsion_tensor(const ConnectionField& conn, const Vector& x);

Vector contract_torsion(const Tensor3& torsion, const Vector& a, const Vector& b);

struct CurvatureMatrix {
    Matrix matrix;           // R^eta(s,t)^i_{.j}, computed with `step`
    double est_error = 0.0;  // ||R_h - R_{h/2}||_inf
    double step = 0.0;
};

// Default family step 1e-4 * max(1, |s|, |t|).
double default_family_step(double s, double t);

// R^eta(s,t) = d/ds Gamma(t; eta(s,.)) - d/dt Gamma(s; eta(.,t))
//              + Gamma(s; eta(.,t)) Gamma(t; eta(s,.)) - Gamma(t; eta(s,.)) Gamma(s; eta(.,t)).
// The parameter derivatives difference the functional across neighbouring
// paths of the family (eta(s +- h, .) and eta(., t +- h)).
CurvatureMatrix curvature_matrix(const CoefficientFunctional& gamma, const TwoParamMap& eta, double s, double t,
                                 std::optional<double> h = {});

// R^i_{.j alpha beta}(x), stored (i, j, alpha, beta):
//   d_alpha Gamma_beta - d_beta Gamma_alpha + Gamma_alpha Gamma_beta - Gamma_beta Gamma_alpha
// (matrix products of the slices Gamma_alpha = [Gamma^i_{.j alpha}]).
// Uses the connection's analytic partials when it has them, otherwise central
// differences with step h (default 1e-4, relative).
Tensor4 curvature_tensor(const ConnectionField& conn, const Vector& x, std::optional<double> h = {});

// R^i_{.j alpha beta} a^alpha b^beta.
Matrix contract_curvature(const Tensor4& r, const Vector& a, const Vector& b);

// Max over samples and indices of
//   |curvature_matrix(connection_functional(conn)) - R(eta(s,t)) eta' eta''|.
double curvature_contraction_gap(const ConnectionField& conn, const TwoParamMap& eta,
                                 std::span<const std::pair<double, double>> samples,
                                 std::optional<double> h = {});

}  // namespace pt
