#pragma once

#include <string>
#include <vector>

#include "mflqg/coefficient_path.hpp"
#include "mflqg/errors.hpp"
#include "mflqg/time_grid.hpp"

namespace mflqg {

// Partially observed mean-field LQ problem data. Immutable after construction;
// safe to share read-only across workers.
struct MFLQProblem {
    int n = 1;   // state dimension
    int m = 1;   // recursive-value dimension
    int k = 1;   // control dimension
    int r = 1;   // state-noise dimension
    int rt = 1;  // observation-noise dimension

    TimeGrid grid;
    Eigen::VectorXd mu0;     // initial mean
    Eigen::MatrixXd sigma0;  // initial covariance

    // state dynamics dx = (a x + abar Ex + b v + bbar) dt + c dw
    CoefficientPath a, abar;  // n x n
    CoefficientPath b;        // n x k
    CoefficientPath bbar;     // n x 1
    CoefficientPath c;        // n x r

    // backward component
    // -dy = (alpha x + alphabar Ex + beta y + betabar Ey + gamma z + gammabar Ez
    //        + gammatilde zt + gammabartilde Ezt + psi v + psibar) dt - z dw - zt dwt
    CoefficientPath alpha, alphabar;  // m x n
    CoefficientPath beta, betabar;    // m x m
    std::vector<CoefficientPath> gamma, gammabar;            // r entries of m x m
    std::vector<CoefficientPath> gammatilde, gammabartilde;  // rt entries of m x m
    CoefficientPath psi;     // m x k
    CoefficientPath psibar;  // m x 1
    Eigen::MatrixXd rho, rhobar;  // m x n, terminal y_T = rho x_T + rhobar Ex_T

    // observation dY = (f x + fbar Ex + g) dt + h dwt
    CoefficientPath f, fbar;  // rt x n
    CoefficientPath g;        // rt x 1
    CoefficientPath h;        // rt x rt

    // cost  J = 1/2 E{ int [<A x,x> + <Abar Ex,Ex> + <B v,v> + 2<D x,v> + 2<Dbar Ex,v>
    //                      + 2<Ftilde,x> + 2<Fbartilde,Ex> + 2<Gtilde,v>] dt
    //              + <H x_T,x_T> + <Hbar Ex_T,Ex_T> + 2<Ltilde,x_T> + 2<Lbartilde,Ex_T>
    //              + <M y_0,y_0> - 2<N,y_0> }
    // N enters with a minus sign (utility convention of the asset-liability problem).
    CoefficientPath A, Abar;    // n x n symmetric
    CoefficientPath B;          // k x k symmetric positive definite
    CoefficientPath D, Dbar;    // k x n
    CoefficientPath Ftilde, Fbartilde;  // n x 1
    CoefficientPath Gtilde;     // k x 1
    Eigen::MatrixXd H, Hbar;    // n x n symmetric
    Eigen::VectorXd Ltilde, Lbartilde;  // n
    Eigen::MatrixXd M;          // m x m symmetric
    Eigen::VectorXd N;          // m

    // simulation defaults carried by the scenario file
    long long sim_paths = 20000;
    unsigned long long sim_seed = 42;
    double sim_dt = 0.0;  // 0 = use grid step

    static MFLQProblem zero(int n, int m, int k, int r, int rt, const TimeGrid& grid,
                            Interp interp = Interp::PiecewiseConstantLeft);

    // Resample every coefficient on a new grid (same horizon).
    MFLQProblem with_grid(const TimeGrid& g2) const;
};

struct AssumptionReport {
    double a1_margin = 0.0;    // min_t lambda_min(A+Abar - (D+Dbar)^T B^-1 (D+Dbar))
    double a2_constant = 0.0;  // max_t lambda_max(D^T B^-1 D - A); reported, never pass/fail
    double b_min_eig = 0.0;    // min_t lambda_min(B)
    double h_max_cond = 0.0;   // max_t cond(h)
    bool a1_ok = false;
    bool gate_ok = false;      // M = 0 and the gamma family vanishes
    bool structure_ok = false; // symmetry / positivity invariants
    std::vector<std::string> messages;
};

struct GateDecision {
    bool accepted = false;
    std::vector<std::string> violations;
};

AssumptionReport validate(const MFLQProblem& p);
GateDecision special_case_gate(const MFLQProblem& p);

// Throws GateRejection / ValidationError when the problem cannot be synthesized.
void require_synthesizable(const MFLQProblem& p);

} // namespace mflqg
