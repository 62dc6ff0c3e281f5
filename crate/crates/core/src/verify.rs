//! Cross-module verification: ties the moment engine, the integrability
//! conditions, the chaos oracle, the classification and the closed forms into
//! one report.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::chaos::{check_axioms, check_n_meixner, operators_from_moments};
use crate::classify::{classify, Classification3, Marginal1d};
use crate::dist3::{quadrature_cone_lt, quadrature_cylinder_lt, CanonicalGamma3, Sampler};
use crate::error::{Error, Result};
use crate::integrability::{cubic_matches_third_moments, necessary_conditions};
use crate::moments::{
    laplace_radius, taylor_laplace, taylor_tail_bound, MomentTable, PivotPolicy,
    DEFAULT_DEGREE_CAP,
};
use crate::tensor::{validate_lcc, MeixnerSpec, SymmetricCubicTensor};

/// Every tolerance used by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Identities that hold up to rounding (closed-form gradients, third moments).
    pub exact: f64,
    /// Symbolic expansions compared with floating-point evaluation.
    pub symbolic: f64,
    /// Residuals of operators reconstructed from moments, and finite differences.
    pub operator: f64,
    /// Commutation rules on the truncation-exact region.
    pub axioms: f64,
    /// Relative error of quadrature against closed forms.
    pub quadrature: f64,
    /// Monte Carlo checks, in standard errors.
    pub monte_carlo_sigmas: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            exact: 1e-12,
            symbolic: 1e-9,
            operator: 1e-7,
            axioms: 1e-8,
            quadrature: 1e-6,
            monte_carlo_sigmas: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    #[default]
    Quick,
    Full,
}

impl Profile {
    fn chaos_degree(self) -> usize {
        match self {
            Profile::Quick => 3,
            Profile::Full => 4,
        }
    }

    fn draws(self) -> usize {
        match self {
            Profile::Quick => 20_000,
            Profile::Full => 1_000_000,
        }
    }

    fn pivot_degree(self) -> usize {
        match self {
            Profile::Quick => 6,
            Profile::Full => 10,
        }
    }
}

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyConfig {
    pub tolerances: Tolerances,
    pub profile: Profile,
    pub seed: u64,
    /// Include wall-clock times; off by default so reports are reproducible byte for byte.
    pub record_timings: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::default(),
            profile: Profile::Quick,
            seed: DEFAULT_SEED,
            record_timings: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub description: String,
    pub tolerance: Option<f64>,
    pub observed: Option<f64>,
    pub status: Status,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Input to [`full_suite`].
#[derive(Debug, Clone, PartialEq)]
pub enum SuiteInput {
    /// The normalized canonical tensor with this parameter.
    Canonical(f64),
    Spec(MeixnerSpec),
}

/// A classified three-dimensional law, `X = U^T X'` with `X'` canonical or a product.
#[derive(Debug, Clone)]
pub enum ClassifiedLaw {
    CaseI {
        law: CanonicalGamma3,
        u: DMatrix<f64>,
    },
    CaseII {
        components: [Marginal1d; 3],
        u: DMatrix<f64>,
    },
}

fn vec3(v: &DVector<f64>) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

impl ClassifiedLaw {
    pub fn canonical(a: f64) -> Result<Self> {
        Ok(ClassifiedLaw::CaseI {
            law: CanonicalGamma3::new(a)?,
            u: DMatrix::identity(3, 3),
        })
    }

    /// `None` for rejected tensors.
    pub fn from_classification(c: &Classification3) -> Result<Option<Self>> {
        Ok(match c {
            Classification3::CaseI { a, u } => Some(ClassifiedLaw::CaseI {
                law: CanonicalGamma3::new(*a)?,
                u: u.clone(),
            }),
            Classification3::CaseII { u, components } => Some(ClassifiedLaw::CaseII {
                components: [
                    components[0].marginal,
                    components[1].marginal,
                    components[2].marginal,
                ],
                u: u.clone(),
            }),
            Classification3::Rejected { .. } => None,
        })
    }

    fn rotation(&self) -> &DMatrix<f64> {
        match self {
            ClassifiedLaw::CaseI { u, .. } | ClassifiedLaw::CaseII { u, .. } => u,
        }
    }

    /// `U s`: the argument of the canonical transform.
    fn rotated(&self, s: [f64; 3]) -> [f64; 3] {
        vec3(&(self.rotation() * DVector::from_column_slice(&s)))
    }

    pub fn laplace(&self, s: [f64; 3]) -> Result<f64> {
        let z = self.rotated(s);
        match self {
            ClassifiedLaw::CaseI { law, .. } => law.laplace(z),
            ClassifiedLaw::CaseII { components, .. } => {
                components.iter().zip(z).try_fold(1.0, |acc, (c, zk)| {
                    c.laplace(zk)
                        .map(|v| acc * v)
                        .ok_or(Error::OutOfDomain { point: s })
                })
            }
        }
    }

    /// Closed-form gradient of the Laplace transform.
    pub fn laplace_gradient(&self, s: [f64; 3]) -> Result<[f64; 3]> {
        let z = self.rotated(s);
        let phi = self.laplace(s)?;
        let log_grad = match self {
            ClassifiedLaw::CaseI { law, .. } => law.log_laplace_gradient(z)?,
            ClassifiedLaw::CaseII { components, .. } => {
                let mut g = [0.0; 3];
                for (k, c) in components.iter().enumerate() {
                    g[k] = match *c {
                        Marginal1d::Gaussian => z[k],
                        Marginal1d::Gamma { scale, .. } => z[k] / (1.0 - scale * z[k]),
                    };
                }
                g
            }
        };
        let back = self.rotation().transpose() * DVector::from_column_slice(&log_grad);
        Ok(vec3(&(back * phi)))
    }

    /// Sampler for `X'`; product samplers already rotate back.
    pub fn sampler(&self) -> Result<Sampler> {
        match self {
            ClassifiedLaw::CaseI { law, .. } => Ok(law.sampler()),
            ClassifiedLaw::CaseII { components, u } => Sampler::product(*components, u.clone()),
        }
    }

    /// `n` draws in the original coordinates.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<[f64; 3]>> {
        let sampler = self.sampler()?;
        let draws = sampler.sample(n, seed);
        Ok(match self {
            ClassifiedLaw::CaseI { u, .. } => {
                let ut = u.transpose();
                draws
                    .into_iter()
                    .map(|x| vec3(&(&ut * DVector::from_column_slice(&x))))
                    .collect()
            }
            ClassifiedLaw::CaseII { .. } => draws,
        })
    }
}

/// `(I - B(s))^{-1} phi(s) s` for the slices of `t`.
fn pde_rhs(t: &SymmetricCubicTensor, s: [f64; 3], phi: f64) -> Result<Vector3<f64>> {
    let mut b = DMatrix::<f64>::identity(3, 3);
    for (k, &sk) in s.iter().enumerate() {
        b -= t.slice_matrix(k)?.into_inner() * sk;
    }
    let rhs = DVector::from_column_slice(&s) * phi;
    let sol = b
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidInput(format!("I - B(s) is singular at {s:?}")))?;
    Ok(Vector3::new(sol[0], sol[1], sol[2]))
}

/// Central difference gradient with step `1e-6 max(1, |s_i|)`.
fn finite_difference_gradient(f: &dyn Fn([f64; 3]) -> Result<f64>, s: [f64; 3]) -> Result<Vector3<f64>> {
    let mut g = Vector3::zeros();
    for k in 0..3 {
        let h = 1e-6 * s[k].abs().max(1.0);
        let mut up = s;
        let mut down = s;
        up[k] += h;
        down[k] -= h;
        g[k] = (f(up)? - f(down)?) / (2.0 * h);
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PdeResidual {
    /// Using the closed-form gradient.
    pub analytic: f64,
    /// Using central finite differences of the closed form.
    pub finite_difference: f64,
}

/// Largest finite-difference residual of an arbitrary candidate transform.
pub fn pde_residual_of(
    t: &SymmetricCubicTensor,
    phi: &dyn Fn([f64; 3]) -> Result<f64>,
    points: &[[f64; 3]],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &s in points {
        let grad = finite_difference_gradient(phi, s)?;
        worst = worst.max((grad - pde_rhs(t, s, phi(s)?)?).norm());
    }
    Ok(worst)
}

fn law_pde_residual(
    t: &SymmetricCubicTensor,
    law: &ClassifiedLaw,
    points: &[[f64; 3]],
) -> Result<PdeResidual> {
    let mut analytic: f64 = 0.0;
    for &s in points {
        let g = law.laplace_gradient(s)?;
        let rhs = pde_rhs(t, s, law.laplace(s)?)?;
        analytic = analytic.max((Vector3::from(g) - rhs).norm());
    }
    let finite_difference = pde_residual_of(t, &|s| law.laplace(s), points)?;
    Ok(PdeResidual {
        analytic,
        finite_difference,
    })
}

/// Residual of the Laplace-transform system for the canonical law with parameter `a`.
pub fn pde_residual(a: f64, points: &[[f64; 3]]) -> Result<PdeResidual> {
    let law = ClassifiedLaw::canonical(a)?;
    for &s in points {
        if let ClassifiedLaw::CaseI { law, .. } = &law {
            if !law.in_domain(s) {
                return Err(Error::OutOfDomain { point: s });
            }
        }
    }
    law_pde_residual(&SymmetricCubicTensor::canonical(a), &law, points)
}

/// Points with independent uniform coordinates in `[-radius, radius]`.
pub fn random_points(count: usize, radius: f64, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| std::array::from_fn(|_| rng.random_range(-radius..=radius)))
        .collect()
}

/// Grid with five values per axis in `[-radius, radius]`.
pub fn cube_grid(radius: f64) -> Vec<[f64; 3]> {
    let steps = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let mut out = Vec::with_capacity(125);
    for x in steps {
        for y in steps {
            for z in steps {
                out.push([x * radius, y * radius, z * radius]);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaylorComparison {
    pub max_degree: usize,
    pub radius: f64,
    /// Largest `|partial sum - closed form|` on the grid.
    pub max_raw_deviation: f64,
    /// Largest analytic bound on the omitted terms.
    pub max_tail_bound: f64,
    /// Largest `max(0, |partial sum - closed form| - tail bound)`.
    pub max_deviation: f64,
}

fn compare_taylor(
    spec: &MeixnerSpec,
    closed: &dyn Fn([f64; 3]) -> Result<f64>,
    max_degree: usize,
    radius: f64,
) -> Result<TaylorComparison> {
    let mut tbl = MomentTable::<f64>::new(spec)?;
    let mut out = TaylorComparison {
        max_degree,
        radius,
        max_raw_deviation: 0.0,
        max_tail_bound: 0.0,
        max_deviation: 0.0,
    };
    for s in cube_grid(radius) {
        let series = taylor_laplace(&mut tbl, spec, &s, max_degree)?.value;
        let raw = (series - closed(s)?).abs();
        let tail = taylor_tail_bound(spec, &s, max_degree);
        out.max_raw_deviation = out.max_raw_deviation.max(raw);
        out.max_tail_bound = out.max_tail_bound.max(tail);
        out.max_deviation = out.max_deviation.max((raw - tail).max(0.0));
    }
    Ok(out)
}

/// Taylor partial sums from moments of the canonical tensor against the
/// closed-form transform on a grid with `||s||_inf <= radius` (default `R / 2`).
pub fn taylor_vs_closed_form(
    a: f64,
    max_degree: usize,
    radius: Option<f64>,
) -> Result<TaylorComparison> {
    let law = CanonicalGamma3::new(a)?;
    let spec = MeixnerSpec::normalized(SymmetricCubicTensor::canonical(a));
    let radius = radius.unwrap_or(0.5 * laplace_radius(&spec));
    compare_taylor(&spec, &|s| law.laplace(s), max_degree, radius)
}

/// Smallest degree whose tail bound at the grid corner is below `target`.
fn degree_for_tail(spec: &MeixnerSpec, radius: f64, target: f64) -> usize {
    let corner = [radius; 3];
    (0..=DEFAULT_DEGREE_CAP)
        .find(|&n| taylor_tail_bound(spec, &corner, n) <= target)
        .unwrap_or(DEFAULT_DEGREE_CAP)
}

struct Suite {
    config: VerifyConfig,
    checks: Vec<CheckResult>,
}

impl Suite {
    fn run(
        &mut self,
        name: &str,
        description: &str,
        tolerance: Option<f64>,
        body: impl FnOnce() -> Result<(Option<f64>, bool, String)>,
    ) -> bool {
        let start = Instant::now();
        let (observed, status, detail) = match body() {
            Ok((observed, ok, detail)) => (
                observed,
                if ok { Status::Pass } else { Status::Fail },
                detail,
            ),
            Err(e) => (None, Status::Fail, e.to_string()),
        };
        let wall = start.elapsed().as_secs_f64() * 1e3;
        self.checks.push(CheckResult {
            name: name.to_string(),
            description: description.to_string(),
            tolerance,
            observed,
            status,
            detail,
            wall_time_ms: self.config.record_timings.then_some(wall),
        });
        status == Status::Pass
    }

    fn skip(&mut self, name: &str, description: &str, reason: &str) {
        self.checks.push(CheckResult {
            name: name.to_string(),
            description: description.to_string(),
            tolerance: None,
            observed: None,
            status: Status::Skipped,
            detail: reason.to_string(),
            wall_time_ms: None,
        });
    }

    fn threshold(
        &mut self,
        name: &str,
        description: &str,
        tolerance: f64,
        body: impl FnOnce() -> Result<f64>,
    ) -> bool {
        self.run(name, description, Some(tolerance), || {
            let v = body()?;
            Ok((Some(v), v <= tolerance, String::new()))
        })
    }
}

const CANONICAL_CHECKS: [(&str, &str); 10] = [
    ("pde_residual_analytic", "closed-form gradient solves the Laplace system"),
    ("pde_residual_finite_difference", "finite-difference gradient solves the Laplace system"),
    ("taylor_vs_closed_form", "moment series matches the closed-form transform"),
    ("quadrature_cone", "cone quadrature matches the closed-form cone transform"),
    ("quadrature_cylinder", "surface quadrature matches the closed-form surface transform"),
    ("sampler_mean", "sample mean is zero"),
    ("sampler_covariance", "sample covariance is the identity"),
    ("sampler_third_moments", "sample third moments equal 2 alpha"),
    ("sampler_laplace", "sample Laplace transform matches the closed form"),
    ("sampler_support", "draws lie in the support"),
];

/// Largest z-score of `values - target` over the listed statistics.
fn max_z_score(samples: &[[f64; 3]], stats: &[(Box<dyn Fn(&[f64; 3]) -> f64>, f64)]) -> f64 {
    let n = samples.len() as f64;
    stats
        .iter()
        .map(|(f, target)| {
            let (mut sum, mut sq) = (0.0, 0.0);
            for x in samples {
                let v = f(x);
                sum += v;
                sq += v * v;
            }
            let mean = sum / n;
            let var = (sq / n - mean * mean).max(0.0);
            let se = (var / n).sqrt();
            let dev = (mean - target).abs();
            if se == 0.0 {
                if dev == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                dev / se
            }
        })
        .fold(0.0, f64::max)
}

fn law_checks(suite: &mut Suite, t: &SymmetricCubicTensor, spec: &MeixnerSpec, law: &ClassifiedLaw) {
    let tol = suite.config.tolerances;
    let seed = suite.config.seed;
    let points = random_points(20, 0.05, seed);

    let pde = law_pde_residual(t, law, &points);
    let pde_fd = pde.clone();
    suite.threshold(CANONICAL_CHECKS[0].0, CANONICAL_CHECKS[0].1, tol.exact, || {
        Ok(pde?.analytic)
    });
    suite.threshold(CANONICAL_CHECKS[1].0, CANONICAL_CHECKS[1].1, tol.operator, || {
        Ok(pde_fd?.finite_difference)
    });

    let radius = (0.5 * laplace_radius(spec)).min(0.02);
    let degree = degree_for_tail(spec, radius, 0.1 * tol.symbolic);
    suite.threshold(CANONICAL_CHECKS[2].0, CANONICAL_CHECKS[2].1, tol.symbolic, || {
        Ok(compare_taylor(spec, &|s| law.laplace(s), degree, radius)?.max_deviation)
    });

    match law {
        ClassifiedLaw::CaseI { law: g, .. } if !g.is_singular() => {
            let p = g.interior_exponent();
            suite.threshold(CANONICAL_CHECKS[3].0, CANONICAL_CHECKS[3].1, tol.quadrature, || {
                cone_relative_error(p)
            });
            suite.skip(CANONICAL_CHECKS[4].0, CANONICAL_CHECKS[4].1, "law has a density");
        }
        ClassifiedLaw::CaseI { .. } => {
            suite.skip(CANONICAL_CHECKS[3].0, CANONICAL_CHECKS[3].1, "law has no density");
            suite.threshold(CANONICAL_CHECKS[4].0, CANONICAL_CHECKS[4].1, tol.quadrature, cylinder_relative_error);
        }
        ClassifiedLaw::CaseII { .. } => {
            for (name, description) in &CANONICAL_CHECKS[3..5] {
                suite.skip(name, description, "product law");
            }
        }
    }

    let draws = match law.sample(suite.config.profile.draws(), seed) {
        Ok(d) => d,
        Err(e) => {
            for (name, description) in &CANONICAL_CHECKS[5..] {
                suite.skip(name, description, &e.to_string());
            }
            return;
        }
    };
    let sigmas = tol.monte_carlo_sigmas;

    let means: Vec<(Box<dyn Fn(&[f64; 3]) -> f64>, f64)> = (0..3)
        .map(|i| (Box::new(move |x: &[f64; 3]| x[i]) as Box<dyn Fn(&[f64; 3]) -> f64>, 0.0))
        .collect();
    suite.threshold(CANONICAL_CHECKS[5].0, CANONICAL_CHECKS[5].1, sigmas, || {
        Ok(max_z_score(&draws, &means))
    });

    let mut cov: Vec<(Box<dyn Fn(&[f64; 3]) -> f64>, f64)> = Vec::new();
    let mut third: Vec<(Box<dyn Fn(&[f64; 3]) -> f64>, f64)> = Vec::new();
    for k in 0..3 {
        for j in 0..=k {
            cov.push((
                Box::new(move |x: &[f64; 3]| x[j] * x[k]),
                if j == k { 1.0 } else { 0.0 },
            ));
            for i in 0..=j {
                third.push((
                    Box::new(move |x: &[f64; 3]| x[i] * x[j] * x[k]),
                    2.0 * t.get(i, j, k),
                ));
            }
        }
    }
    suite.threshold(CANONICAL_CHECKS[6].0, CANONICAL_CHECKS[6].1, sigmas, || {
        Ok(max_z_score(&draws, &cov))
    });
    suite.threshold(CANONICAL_CHECKS[7].0, CANONICAL_CHECKS[7].1, sigmas, || {
        Ok(max_z_score(&draws, &third))
    });

    suite.threshold(CANONICAL_CHECKS[8].0, CANONICAL_CHECKS[8].1, sigmas, || {
        let mut stats: Vec<(Box<dyn Fn(&[f64; 3]) -> f64>, f64)> = Vec::new();
        for s in random_points(5, 0.1, seed.wrapping_add(1)) {
            let target = law.laplace(s)?;
            stats.push((
                Box::new(move |x: &[f64; 3]| (s[0] * x[0] + s[1] * x[1] + s[2] * x[2]).exp()),
                target,
            ));
        }
        Ok(max_z_score(&draws, &stats))
    });

    suite.run(CANONICAL_CHECKS[9].0, CANONICAL_CHECKS[9].1, Some(0.0), || {
        let outside = match law {
            ClassifiedLaw::CaseI { law: g, u } if !g.is_singular() => draws
                .iter()
                .filter(|x| {
                    !g.in_support_closure(vec3(&(u * DVector::from_column_slice(&x[..]))), 1e-12)
                })
                .count(),
            ClassifiedLaw::CaseI { u, .. } => draws
                .iter()
                .filter(|x| {
                    let y = u * DVector::from_column_slice(&x[..]);
                    let lhs = y[0] * y[0] + y[1] * y[1];
                    let rhs = (y[2] + 1.0).powi(2);
                    (lhs - rhs).abs() > 1e-9 * rhs.max(1.0)
                })
                .count(),
            ClassifiedLaw::CaseII { .. } => 0,
        };
        Ok((Some(outside as f64), outside == 0, format!("{} draws", draws.len())))
    });
}

/// Admissible `t` used by the quadrature checks.
pub const QUADRATURE_POINTS: [[f64; 3]; 5] = [
    [0.0, 0.0, -1.0],
    [0.3, 0.0, -1.0],
    [0.0, -0.4, -1.5],
    [0.2, 0.2, -0.8],
    [-0.5, 0.3, -2.0],
];

/// Largest relative error of the cone quadrature over [`QUADRATURE_POINTS`].
pub fn cone_relative_error(p: f64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for t in QUADRATURE_POINTS {
        let exact = cone_closed_form(p, t);
        worst = worst.max((quadrature_cone_lt(p, t)? - exact).abs() / exact);
    }
    Ok(worst)
}

/// Largest relative error of the surface quadrature over [`QUADRATURE_POINTS`].
pub fn cylinder_relative_error() -> Result<f64> {
    let mut worst: f64 = 0.0;
    for t in QUADRATURE_POINTS {
        let exact = cylinder_closed_form(t);
        worst = worst.max((quadrature_cylinder_lt(t)? - exact).abs() / exact);
    }
    Ok(worst)
}

/// `2 pi Gamma(2p + 2) (t3^2 - t1^2 - t2^2)^(-p - 3/2)`.
pub fn cone_closed_form(p: f64, t: [f64; 3]) -> f64 {
    let q = t[2] * t[2] - t[0] * t[0] - t[1] * t[1];
    2.0 * std::f64::consts::PI * statrs::function::gamma::gamma(2.0 * p + 2.0) * q.powf(-p - 1.5)
}

/// `2 pi / sqrt(t3^2 - t1^2 - t2^2)`.
pub fn cylinder_closed_form(t: [f64; 3]) -> f64 {
    2.0 * std::f64::consts::PI / (t[2] * t[2] - t[0] * t[0] - t[1] * t[1]).sqrt()
}

/// Runs every applicable check; failures are report entries, not errors.
pub fn full_suite(input: &SuiteInput, config: &VerifyConfig) -> VerifyReport {
    let spec = match input {
        SuiteInput::Canonical(a) => MeixnerSpec::normalized(SymmetricCubicTensor::canonical(*a)),
        SuiteInput::Spec(s) => s.clone(),
    };
    let mut suite = Suite {
        config: config.clone(),
        checks: Vec::new(),
    };
    let tol = config.tolerances;
    let t = &spec.alpha;

    suite.run("linear_consistency", "coefficients satisfy the consistency conditions", None, || {
        let report = validate_lcc(&spec, false);
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
        Ok((None, report.passed, failed.join(", ")))
    });

    let integrable = suite.threshold(
        "necessary_conditions",
        "integrability identities vanish (normalized coefficients)",
        tol.symbolic,
        || Ok(necessary_conditions(t, tol.symbolic).max_normalized()),
    );

    let pivot_degree = config.profile.pivot_degree();
    let consistent = suite.run(
        "pivot_independence",
        "moment recursion agrees across pivots",
        Some(crate::moments::PIVOT_REL_TOL),
        || {
            let mut tbl = MomentTable::<f64>::with_policy(&spec, PivotPolicy::AllAndCompare)?;
            match tbl.fill_to_degree(pivot_degree) {
                Ok(()) => Ok((None, true, format!("up to degree {pivot_degree}"))),
                Err(e @ Error::PivotInconsistency { .. }) => Ok((None, false, e.to_string())),
                Err(e) => Err(e),
            }
        },
    );

    suite.threshold(
        "third_moments",
        "cubic form equals half the third moment",
        tol.exact * 1f64.max(t.max_abs()),
        || {
            let mut tbl = MomentTable::<f64>::new(&spec)?;
            cubic_matches_third_moments(t, &mut tbl, 50, config.seed)
        },
    );

    let chaos_names = [
        ("chaos_axioms", "commutation rules hold on the truncation-exact region"),
        ("chaos_meixner1", "single commutators recover alpha and beta"),
    ];
    if integrable && consistent {
        let degree = config.profile.chaos_degree();
        let built = MomentTable::<f64>::new(&spec)
            .and_then(|mut tbl| operators_from_moments(&mut tbl, degree));
        match built {
            Ok((_, ops)) => {
                suite.threshold(chaos_names[0].0, chaos_names[0].1, tol.axioms, || {
                    Ok(check_axioms(&ops, degree - 2)?.max_residual)
                });
                suite.threshold(chaos_names[1].0, chaos_names[1].1, tol.operator, || {
                    let report = check_n_meixner(&ops, 1, degree - 1)?;
                    let mut worst = report.max_residual;
                    for f in &report.fits {
                        let (i, j) = (f.indices[0], f.indices[1]);
                        for (k, b) in f.b.iter().enumerate() {
                            worst = worst.max((b - t.get(i, j, k)).abs());
                        }
                        worst = worst.max((f.c.unwrap_or(0.0) - spec.beta[(i, j)]).abs());
                    }
                    Ok(worst)
                });
            }
            Err(e) => {
                for (name, description) in chaos_names {
                    suite.run(name, description, None, || Err(e.clone()));
                }
            }
        }
    } else {
        for (name, description) in chaos_names {
            suite.skip(name, description, "moments do not come from a consistent law");
        }
    }

    let mut law = None;
    if spec.dimension() != 3 {
        suite.skip("classify", "reduction to canonical form", "classification is defined for d = 3");
    } else if !spec.is_normalized() {
        suite.skip("classify", "reduction to canonical form", "requires a normalized spec");
    } else {
        suite.run("classify", "reduction to canonical form", None, || {
            let c = classify(t, tol.symbolic)?;
            let detail = serde_json::to_string(&c).unwrap_or_default();
            law = ClassifiedLaw::from_classification(&c)?;
            Ok((None, !c.is_rejected(), detail))
        });
    }

    match law {
        Some(law) => law_checks(&mut suite, t, &spec, &law),
        None => {
            for (name, description) in CANONICAL_CHECKS {
                suite.skip(name, description, "no classified law");
            }
        }
    }

    let mut checks = suite.checks;
    checks.sort_by(|a, b| a.name.cmp(&b.name));
    let passed = checks.iter().all(|c| c.status != Status::Fail);
    VerifyReport { passed, checks }
}
