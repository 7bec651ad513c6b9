//! The registered cases. Every source term below is the governing operator
//! applied to `u*` by hand; the load-time check verifies it against the
//! analytic derivatives of `u*`.

use std::f64::consts::{PI, SQRT_2};

use super::exact::{breather, Exact, Profile};
use super::{CaseBuilder, CaseMode, PdeCase};
use crate::collocation::BoxDomain;
use crate::error::{Error, Result};
use crate::newton::{NonlinearProblem, Nonlinearity};
use crate::operators::{LinearOperator, ScalarField};
use crate::solve::{Condition, LinearProblem};

fn sin_pi(x: f64) -> f64 {
    (PI * x).sin()
}

/// `prod_k sin(pi x_k)` over the first `n` axes of a `dim`-dimensional point.
fn sin_product(dim: usize, n: usize) -> Exact {
    Exact::Product((0..n).map(|k| Exact::sin_axis(dim, k, PI, 0.0)).collect())
}

/// `sum_k sin(pi x_k)` over the first `n` axes.
fn sin_sum(dim: usize, n: usize) -> Exact {
    Exact::Sum((0..n).map(|k| Exact::sin_axis(dim, k, PI, 0.0)).collect())
}

fn poisson1d() -> Result<PdeCase> {
    // -u'' = pi^2 sin(pi x)
    Ok(CaseBuilder::new(
        "poisson1d",
        "Poisson 1D",
        CaseMode::SolverLinear,
        BoxDomain::unit(1)?,
        Exact::sin_axis(1, 0, PI, 0.0),
        LinearOperator::laplacian(1)?.negate(),
        ScalarField::new("pi^2 sin(pi x)", |x: &[f64]| PI * PI * sin_pi(x[0])),
    )
    .description("-u'' = f on [0,1], u* = sin(pi x)")
    .sigma(2.0)
    .build())
}

fn poisson5d() -> Result<PdeCase> {
    // -Laplacian(sum sin(pi x_k)) = pi^2 sum sin(pi x_k)
    Ok(CaseBuilder::new(
        "poisson5d",
        "Poisson 5D",
        CaseMode::SolverLinear,
        BoxDomain::unit(5)?,
        sin_sum(5, 5),
        LinearOperator::laplacian(5)?.negate(),
        ScalarField::new("pi^2 sum sin(pi x_k)", |x: &[f64]| PI * PI * x.iter().map(|&v| sin_pi(v)).sum::<f64>()),
    )
    .description("-Laplacian u = f on [0,1]^5, u* = sum_k sin(pi x_k)")
    .sigma(1.0)
    .build())
}

fn heat5d() -> Result<PdeCase> {
    // u* = e^{-t} S(x), S = sum sin(pi x_k): u_t = -u*, -Laplacian u* = pi^2 u*
    let exact = Exact::Product(vec![Exact::ridge_axis(Profile::Exp, 6, 5, -1.0, 0.0), sin_sum(6, 5)]);
    Ok(CaseBuilder::new(
        "heat5d",
        "Heat 5D",
        CaseMode::SolverLinear,
        BoxDomain::unit(6)?,
        exact,
        LinearOperator::heat(5, 1.0)?,
        ScalarField::new("(pi^2 - 1) e^-t sum sin(pi x_k)", |x: &[f64]| {
            (PI * PI - 1.0) * (-x[5]).exp() * x[..5].iter().map(|&v| sin_pi(v)).sum::<f64>()
        }),
    )
    .description("u_t - Laplacian u = f on [0,1]^5 x [0,1], u* = e^-t sum_k sin(pi x_k)")
    .time(5, vec![("initial value", LinearOperator::identity(6)?)])
    .sigma(1.0)
    .build())
}

fn wave1d() -> Result<PdeCase> {
    // sin(pi x) cos(pi t): u_tt = u_xx = -pi^2 u*
    let exact = Exact::Product(vec![Exact::sin_axis(2, 0, PI, 0.0), Exact::cos_axis(2, 1, PI, 0.0)]);
    Ok(CaseBuilder::new(
        "wave1d",
        "Wave 1D",
        CaseMode::SolverLinear,
        BoxDomain::unit(2)?,
        exact,
        LinearOperator::wave(1, 1.0)?,
        ScalarField::zero(),
    )
    .description("u_tt - u_xx = 0 on [0,1] x [0,1], u* = sin(pi x) cos(pi t)")
    .time(
        1,
        vec![
            ("initial value", LinearOperator::identity(2)?),
            ("initial velocity", LinearOperator::partial(2, 1, 1)?),
        ],
    )
    .sigma(3.0)
    .build())
}

fn helmholtz2d() -> Result<PdeCase> {
    // Laplacian u* = -200 u*, so Laplacian u* + 100 u* = -100 u*
    let exact = Exact::Product(vec![Exact::sin_axis(2, 0, 10.0, 0.0), Exact::sin_axis(2, 1, 10.0, 0.0)]);
    Ok(CaseBuilder::new(
        "helmholtz2d",
        "Helmholtz 2D",
        CaseMode::SolverLinear,
        BoxDomain::unit(2)?,
        exact,
        LinearOperator::helmholtz(2, 10.0)?,
        ScalarField::new("-100 sin(10x) sin(10y)", |x: &[f64]| -100.0 * (10.0 * x[0]).sin() * (10.0 * x[1]).sin()),
    )
    .description("Laplacian u + k^2 u = f on [0,1]^2, k = 10, u* = sin(kx) sin(ky)")
    .sigma(12.0)
    .build())
}

fn maxwell2d() -> Result<PdeCase> {
    // TM mode reduced to the scalar wave equation for E_z:
    // u_tt = -2 pi^2 u* = Laplacian u*
    let exact = Exact::Product(vec![
        sin_product(3, 2),
        Exact::cos_axis(3, 2, SQRT_2 * PI, 0.0),
    ]);
    Ok(CaseBuilder::new(
        "maxwell2d",
        "Maxwell 2D TM",
        CaseMode::SolverLinear,
        BoxDomain::unit(3)?,
        exact,
        LinearOperator::wave(2, 1.0)?,
        ScalarField::zero(),
    )
    .description("E_z of the TM mode: u_tt - Laplacian u = 0 on [0,1]^2 x [0,1], u* = sin(pi x) sin(pi y) cos(sqrt2 pi t)")
    .time(
        2,
        vec![
            ("initial value", LinearOperator::identity(3)?),
            ("initial velocity", LinearOperator::partial(3, 2, 1)?),
        ],
    )
    .sigma(3.0)
    .build())
}

fn magnetostatics2d() -> Result<PdeCase> {
    // -div(nu grad u) with nu = 1 + (x^2 + y^2)/2, grad nu = (x, y):
    // f = 2 pi^2 nu s - pi (x cos(pi x) sin(pi y) + y sin(pi x) cos(pi y))
    let nu = ScalarField::new("1 + (x^2+y^2)/2", |x: &[f64]| 1.0 + 0.5 * (x[0] * x[0] + x[1] * x[1]));
    let grad = vec![
        ScalarField::new("x", |x: &[f64]| x[0]),
        ScalarField::new("y", |x: &[f64]| x[1]),
    ];
    Ok(CaseBuilder::new(
        "magnetostatics2d",
        "Magnetostatics 2D",
        CaseMode::SolverLinear,
        BoxDomain::unit(2)?,
        sin_product(2, 2),
        LinearOperator::divergence_form(nu, grad)?.negate(),
        ScalarField::new("f", |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let nu = 1.0 + 0.5 * (a * a + b * b);
            2.0 * PI * PI * nu * sin_pi(a) * sin_pi(b)
                - PI * (a * (PI * a).cos() * sin_pi(b) + b * sin_pi(a) * (PI * b).cos())
        }),
    )
    .description("-div(nu grad A) = J on [0,1]^2 with variable reluctivity nu = 1 + (x^2+y^2)/2, A* = sin(pi x) sin(pi y)")
    .sigma(3.0)
    .build())
}

fn nl_poisson2d() -> Result<PdeCase> {
    // -Laplacian u + u^3 = 2 pi^2 s + s^3, s = sin(pi x) sin(pi y)
    Ok(CaseBuilder::new(
        "nlpoisson2d",
        "NL-Poisson 2D",
        CaseMode::SolverNewton,
        BoxDomain::unit(2)?,
        sin_product(2, 2),
        LinearOperator::laplacian(2)?.negate(),
        ScalarField::new("2 pi^2 s + s^3", |x: &[f64]| {
            let s = sin_pi(x[0]) * sin_pi(x[1]);
            2.0 * PI * PI * s + s * s * s
        }),
    )
    .description("-Laplacian u + u^3 = f on [0,1]^2, u* = sin(pi x) sin(pi y)")
    .nonlinearity(Nonlinearity::cubic(1.0))
    .sigma(3.0)
    .build())
}

fn bratu2d() -> Result<PdeCase> {
    // Laplacian u + e^u = -2 pi^2 s + e^s
    Ok(CaseBuilder::new(
        "bratu2d",
        "Bratu 2D",
        CaseMode::SolverNewton,
        BoxDomain::unit(2)?,
        sin_product(2, 2),
        LinearOperator::laplacian(2)?,
        ScalarField::new("-2 pi^2 s + e^s", |x: &[f64]| {
            let s = sin_pi(x[0]) * sin_pi(x[1]);
            -2.0 * PI * PI * s + s.exp()
        }),
    )
    .description("Laplacian u + lambda e^u = f on [0,1]^2, lambda = 1, u* = sin(pi x) sin(pi y)")
    .nonlinearity(Nonlinearity::exponential(1.0))
    .sigma(2.0)
    .build())
}

fn nl_helmholtz2d() -> Result<PdeCase> {
    // Laplacian u + 9u + u^3 = (9 - 2 pi^2) s + s^3
    Ok(CaseBuilder::new(
        "nlhelmholtz2d",
        "NL-Helmholtz 2D",
        CaseMode::SolverNewton,
        BoxDomain::unit(2)?,
        sin_product(2, 2),
        LinearOperator::helmholtz(2, 3.0)?,
        ScalarField::new("(9 - 2 pi^2) s + s^3", |x: &[f64]| {
            let s = sin_pi(x[0]) * sin_pi(x[1]);
            (9.0 - 2.0 * PI * PI) * s + s * s * s
        }),
    )
    .description("Laplacian u + k^2 u + u^3 = f on [0,1]^2, k = 3, u* = sin(pi x) sin(pi y)")
    .nonlinearity(Nonlinearity::cubic(1.0))
    .sigma(5.0)
    .build())
}

/// Target viscosity of the steady Burgers case.
pub const BURGERS_NU: f64 = 0.1;

fn burgers_exact(nu: f64) -> Exact {
    Exact::ridge_axis(Profile::Tanh, 1, 0, 1.0 / (2.0 * nu), 0.0).scaled(-1.0)
}

fn burgers1d() -> Result<PdeCase> {
    // u* = -tanh(x/(2 nu)) = -T: u u_x = T T'/(2 nu) = nu u_xx, so
    // -nu u_xx + u u_x = 0. Every stage keeps the nu = 0.1 end values.
    let domain = BoxDomain::cube(1, -1.0, 1.0)?;
    let exact = burgers_exact(BURGERS_NU);
    let bc_exact = exact.clone();
    let bc_domain = domain.clone();
    let family = move |nu: f64| -> Result<NonlinearProblem> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::invalid(format!("viscosity must be positive, got {nu}")));
        }
        let e = bc_exact.clone();
        let data = ScalarField::new("u*(+-1)", move |x: &[f64]| e.value(x));
        let lin = LinearProblem::new(
            LinearOperator::partial(1, 0, 2)?.scale(-nu),
            ScalarField::zero(),
            bc_domain.clone(),
            vec![Condition::dirichlet(1, data)?],
        )?;
        NonlinearProblem::new(lin, Nonlinearity::convective(0))
    };
    Ok(CaseBuilder::new(
        "burgers1d",
        "Burgers 1D (steady)",
        CaseMode::SolverNewton,
        domain,
        exact,
        LinearOperator::partial(1, 0, 2)?.scale(-BURGERS_NU),
        ScalarField::zero(),
    )
    .description("u u_x = nu u_xx on [-1,1], nu = 0.1, u* = -tanh(x/(2 nu)), continuation in nu")
    .nonlinearity(Nonlinearity::convective(0))
    .sigma(25.0)
    .continuation(vec![1.0, 0.5, 0.2, BURGERS_NU], 48, family)
    .build())
}

/// Interface width parameter of the Allen-Cahn case.
pub const ALLEN_CAHN_EPS: f64 = 0.1;

fn allen_cahn_exact(eps: f64) -> Exact {
    Exact::ridge_axis(Profile::Tanh, 1, 0, 1.0 / (SQRT_2 * eps), 0.0)
}

fn allen_cahn1d() -> Result<PdeCase> {
    // u* = tanh(x/(sqrt2 eps)) solves eps^2 u'' + u - u^3 = 0. The linear
    // part is eps^2 u'' alone, so the warm start is the straight line
    // between the end values. Continuation in eps keeps the eps = 0.1 end
    // values at every stage.
    let domain = BoxDomain::cube(1, -1.0, 1.0)?;
    let exact = allen_cahn_exact(ALLEN_CAHN_EPS);
    let bc_exact = exact.clone();
    let bc_domain = domain.clone();
    let family = move |eps: f64| -> Result<NonlinearProblem> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::invalid(format!("interface width must be positive, got {eps}")));
        }
        let e = bc_exact.clone();
        let data = ScalarField::new("u*(+-1)", move |x: &[f64]| e.value(x));
        let lin = LinearProblem::new(
            LinearOperator::partial(1, 0, 2)?.scale(eps * eps),
            ScalarField::zero(),
            bc_domain.clone(),
            vec![Condition::dirichlet(1, data)?],
        )?;
        NonlinearProblem::new(lin, allen_cahn_reaction())
    };
    Ok(CaseBuilder::new(
        "allencahn1d",
        "Allen-Cahn 1D",
        CaseMode::SolverNewton,
        domain,
        exact,
        LinearOperator::partial(1, 0, 2)?.scale(ALLEN_CAHN_EPS * ALLEN_CAHN_EPS),
        ScalarField::zero(),
    )
    .description("eps^2 u'' + u - u^3 = 0 on [-1,1], eps = 0.1, u* = tanh(x/(sqrt2 eps)), continuation in eps")
    .nonlinearity(allen_cahn_reaction())
    .sigma(10.0)
    .continuation(vec![0.4, 0.2, ALLEN_CAHN_EPS], 45, family)
    .build())
}

fn allen_cahn_reaction() -> Nonlinearity {
    Nonlinearity::pointwise("u - u^3", |u, _| u - u * u * u, |u, _| 1.0 - 3.0 * u * u)
}

/// Breather frequency of the Sine-Gordon case.
pub const SINE_GORDON_OMEGA: f64 = 0.8;

fn sine_gordon() -> Result<PdeCase> {
    // u_tt - u_xx + sin u = 0 for the breather, see `breather`
    Ok(CaseBuilder::new(
        "sinegordon",
        "Sine-Gordon (breather)",
        CaseMode::Regression,
        BoxDomain::new(vec![-4.0, 0.0], vec![4.0, 4.0])?,
        breather(SINE_GORDON_OMEGA),
        LinearOperator::wave(1, 1.0)?,
        ScalarField::zero(),
    )
    .description("u_tt - u_xx + sin u = 0 on [-4,4] x [0,4], breather with omega = 0.8")
    .time(1, Vec::new())
    .nonlinearity(Nonlinearity::pointwise("sin(u)", |u, _| u.sin(), |u, _| u.cos()))
    .sigma(2.0)
    .build())
}

fn klein_gordon() -> Result<PdeCase> {
    // u = cos(w t) sin(k x): u_tt - u_xx + m^2 u = (-w^2 + k^2 + m^2) u = 0
    let (k, m) = (PI, 1.0);
    let w = (k * k + m * m).sqrt();
    Ok(CaseBuilder::new(
        "kleingordon",
        "Klein-Gordon (standing wave)",
        CaseMode::Regression,
        BoxDomain::unit(2)?,
        Exact::Product(vec![Exact::sin_axis(2, 0, k, 0.0), Exact::cos_axis(2, 1, w, 0.0)]),
        LinearOperator::wave(1, 1.0)?.add(&LinearOperator::identity(2)?.scale(m * m))?,
        ScalarField::zero(),
    )
    .description("u_tt - u_xx + m^2 u = 0 on [0,1] x [0,1], u* = cos(w t) sin(pi x), w^2 = pi^2 + 1")
    .time(1, Vec::new())
    .sigma(3.0)
    .build())
}

/// Viscosity and speed of the travelling Burgers front.
pub const SHOCK_NU: f64 = 0.05;
pub const SHOCK_SPEED: f64 = 0.5;

fn burgers_shock() -> Result<PdeCase> {
    // u = c - tanh(xi/(2 nu)), xi = x - c t: with T' = sech^2,
    // u_t = c T'/(2 nu), u u_x = -(c - T) T'/(2 nu), nu u_xx = T T'/(2 nu),
    // so u_t + u u_x - nu u_xx = 0
    let (nu, c) = (SHOCK_NU, SHOCK_SPEED);
    let front = Exact::Ridge {
        profile: Profile::Tanh,
        dir: vec![1.0 / (2.0 * nu), -c / (2.0 * nu)],
        offset: 0.0,
    };
    Ok(CaseBuilder::new(
        "burgersshock",
        "Burgers (travelling shock)",
        CaseMode::Regression,
        BoxDomain::new(vec![-1.0, 0.0], vec![1.0, 1.0])?,
        Exact::Sum(vec![Exact::Const(c), front.scaled(-1.0)]),
        LinearOperator::partial(2, 1, 1)?.add(&LinearOperator::partial(2, 0, 2)?.scale(-nu))?,
        ScalarField::zero(),
    )
    .description("u_t + u u_x = nu u_xx on [-1,1] x [0,1], nu = 0.05, u* = c - tanh((x - ct)/(2 nu)), c = 0.5")
    .time(1, Vec::new())
    .nonlinearity(Nonlinearity::convective(0))
    .sigma(15.0)
    .build())
}

/// All registered cases. Fails with the offending case if a manufactured
/// source does not satisfy its governing equation.
pub fn registry() -> Result<Vec<PdeCase>> {
    let cases = vec![
        poisson1d()?,
        poisson5d()?,
        heat5d()?,
        wave1d()?,
        helmholtz2d()?,
        maxwell2d()?,
        magnetostatics2d()?,
        nl_poisson2d()?,
        bratu2d()?,
        burgers1d()?,
        nl_helmholtz2d()?,
        allen_cahn1d()?,
        sine_gordon()?,
        klein_gordon()?,
        burgers_shock()?,
    ];
    for c in &cases {
        c.check_consistency()?;
    }
    Ok(cases)
}

/// Case by name, ignoring case, `-` and `_`.
pub fn find(name: &str) -> Result<PdeCase> {
    let key = |s: &str| s.to_ascii_lowercase().replace(['-', '_'], "");
    let k = key(name);
    registry()?
        .into_iter()
        .find(|c| key(&c.name) == k)
        .ok_or_else(|| Error::UnknownProblem(name.to_string()))
}
