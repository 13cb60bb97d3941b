#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mflqg/scenario.hpp"

using namespace mflqg;

namespace {

const char* kAlScenario = R"(# bundled asset-liability scenario
[problem]
n = 1
m = 1
k = 1
r = 1
rtilde = 1
T = 1.0
steps = 1000

[init]
mu0 = 1.0
sigma0 = 0.0

[dynamics]
a = 0.03
abar = 0.03
b = 1.0
bbar = 0.01
c = 0.04

[bsde]
beta = 0.06
psi = 1.0
rho = 1.0

[observation]
f = 0.1
h = 0.1

[cost]
B = 1.0
H = 0.01
Hbar = -0.01
N = 1.0

[sim]
paths = 20000
seed = 42
)";

} // namespace

TEST_CASE("scenario text loads the asset-liability data") {
    MFLQProblem p = load_scenario(kAlScenario);
    CHECK(p.n == 1);
    CHECK(p.m == 1);
    CHECK(p.k == 1);
    CHECK(p.r == 1);
    CHECK(p.rt == 1);
    CHECK(p.grid.horizon == 1.0);
    CHECK(p.grid.step_count == 1000);
    CHECK(p.a.at_knot(500)(0, 0) == 0.03);
    CHECK(p.c.at_knot(0)(0, 0) == 0.04);
    CHECK(p.h.at_knot(1000)(0, 0) == 0.1);
    CHECK(p.H(0, 0) == 0.01);
    CHECK(p.N(0) == 1.0);
    CHECK(p.mu0(0) == 1.0);
    CHECK(p.sigma0(0, 0) == 0.0);
    CHECK(p.sim_paths == 20000);
    CHECK(p.sim_seed == 42);
    // omitted blocks default to zero
    CHECK(p.M.cwiseAbs().maxCoeff() == 0.0);
    CHECK(p.alpha.max_abs() == 0.0);
    CHECK(p.g.max_abs() == 0.0);
    // matches the embedded scenario
    MFLQProblem e = al_example_problem(1000);
    CHECK(p.a == e.a);
    CHECK(p.Hbar == e.Hbar);
    CHECK(p.N == e.N);
}

TEST_CASE("dimension mismatch names the offending key") {
    std::string doc = kAlScenario;
    doc.replace(doc.find("b = 1.0"), 7, "b = 1.0 2.0");
    try {
        load_scenario(doc);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        CHECK(e.key == "b");
    }
}

TEST_CASE("parse errors carry line context") {
    CHECK_THROWS_AS(load_scenario("x = 1\n"), ParseError);        // entry before section
    CHECK_THROWS_AS(load_scenario("[problem]\nn 1\n"), ParseError);
    CHECK_THROWS_AS(load_scenario("[problem\nn = 1\n"), ParseError);
    try {
        load_scenario("[problem]\nn = 1\nm = oops\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line == 3);
    }
}

TEST_CASE("validate on the bundled scenario") {
    MFLQProblem p = al_example_problem(100);
    AssumptionReport rep = validate(p);
    CHECK(rep.structure_ok);
    CHECK(rep.gate_ok);
    CHECK(rep.a1_ok);
    CHECK(rep.a1_margin == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(rep.b_min_eig == doctest::Approx(1.0));

    // idempotent and side-effect free
    AssumptionReport rep2 = validate(p);
    CHECK(rep.a1_margin == rep2.a1_margin);
    CHECK(rep.a2_constant == rep2.a2_constant);
    CHECK(rep.messages == rep2.messages);
}

TEST_CASE("validate flags an indefinite A+Abar") {
    TimeGrid g = TimeGrid::make(1.0, 10);
    MFLQProblem p = MFLQProblem::zero(2, 1, 2, 1, 1, g);
    Eigen::MatrixXd apab(2, 2);
    apab << 1.0, 0.0, 0.0, -1.0;
    p.A = CoefficientPath::constant(Eigen::MatrixXd::Zero(2, 2), g);
    p.Abar = CoefficientPath::constant(apab, g);
    p.B = CoefficientPath::constant(Eigen::MatrixXd::Identity(2, 2), g);
    p.h = CoefficientPath::constant(Eigen::MatrixXd::Identity(1, 1), g);
    AssumptionReport rep = validate(p);
    CHECK(rep.a1_margin == doctest::Approx(-1.0).epsilon(1e-10));
    CHECK_FALSE(rep.a1_ok);
}

TEST_CASE("a2 constant for scalar D=1, B=1, A=0") {
    TimeGrid g = TimeGrid::make(1.0, 10);
    MFLQProblem p = MFLQProblem::zero(1, 1, 1, 1, 1, g);
    p.D = CoefficientPath::constant(Eigen::MatrixXd::Constant(1, 1, 1.0), g);
    p.B = CoefficientPath::constant(Eigen::MatrixXd::Constant(1, 1, 1.0), g);
    p.h = CoefficientPath::constant(Eigen::MatrixXd::Constant(1, 1, 1.0), g);
    AssumptionReport rep = validate(p);
    CHECK(rep.a2_constant == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("a1 margin is invariant under orthogonal conjugation") {
    TimeGrid g = TimeGrid::make(1.0, 4);
    double th = 0.7321;
    Eigen::MatrixXd Q(2, 2);
    Q << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    Eigen::MatrixXd A(2, 2), D(2, 2), B(2, 2);
    A << 2.0, 0.3, 0.3, 1.0;
    D << 0.5, 0.1, -0.2, 0.4;
    B << 1.5, 0.2, 0.2, 1.1;

    auto build = [&](const Eigen::MatrixXd& a, const Eigen::MatrixXd& d,
                     const Eigen::MatrixXd& b) {
        MFLQProblem p = MFLQProblem::zero(2, 1, 2, 1, 1, g);
        p.A = CoefficientPath::constant(a, g);
        p.D = CoefficientPath::constant(d, g);
        p.B = CoefficientPath::constant(b, g);
        p.h = CoefficientPath::constant(Eigen::MatrixXd::Identity(1, 1), g);
        return validate(p).a1_margin;
    };
    double m1 = build(A, D, B);
    double m2 = build(Q.transpose() * A * Q, Q.transpose() * D * Q, Q.transpose() * B * Q);
    CHECK(m1 == doctest::Approx(m2).epsilon(1e-9));
}

TEST_CASE("scenario round-trips bitwise through save and load") {
    MFLQProblem p = load_scenario(kAlScenario);
    // make one coefficient genuinely time-varying to exercise the knot table
    for (int i = 0; i < p.grid.knots(); ++i)
        p.a.at_knot(i)(0, 0) = 0.03 + 0.001 * std::sin(7.0 * p.grid.t(i));
    std::string text = save_scenario(p);
    MFLQProblem q = load_scenario(text);
    CHECK(p.a == q.a);
    CHECK(p.c == q.c);
    CHECK(p.beta == q.beta);
    CHECK(p.B == q.B);
    CHECK(p.mu0 == q.mu0);
    CHECK(p.H == q.H);
    CHECK(p.N == q.N);
    CHECK(save_scenario(q) == text);
}

TEST_CASE("special-case gate") {
    MFLQProblem p = al_example_problem(50);
    CHECK(special_case_gate(p).accepted);

    MFLQProblem q = p;
    q.M(0, 0) = 1.0;
    GateDecision d = special_case_gate(q);
    CHECK_FALSE(d.accepted);
    REQUIRE(d.violations.size() == 1);
    CHECK(d.violations[0] == "M");

    MFLQProblem r = p;
    r.gammatilde[0] = CoefficientPath::constant(Eigen::MatrixXd::Constant(1, 1, 0.5), r.grid);
    d = special_case_gate(r);
    CHECK_FALSE(d.accepted);
    REQUIRE(d.violations.size() == 1);
    CHECK(d.violations[0] == "gammatilde");

    // betabar is deliberately not gated
    MFLQProblem s = p;
    s.betabar = CoefficientPath::constant(Eigen::MatrixXd::Constant(1, 1, 0.01), s.grid);
    CHECK(special_case_gate(s).accepted);
}

TEST_CASE("knot tables interpolate per the declared convention") {
    std::string doc = R"([problem]
n = 1
m = 1
k = 1
r = 1
rtilde = 1
T = 1.0
steps = 4

[dynamics]
a @ 0.0 = 1.0
a @ 0.5 = 2.0

[observation]
h = 1.0

[cost]
B = 1.0
)";
    MFLQProblem p = load_scenario(doc);
    CHECK(p.a.at_knot(0)(0, 0) == 1.0);  // t = 0
    CHECK(p.a.at_knot(1)(0, 0) == 1.0);  // t = 0.25, last knot <= t is 0.0
    CHECK(p.a.at_knot(2)(0, 0) == 2.0);  // t = 0.5
    CHECK(p.a.at_knot(4)(0, 0) == 2.0);  // t = 1.0
}
