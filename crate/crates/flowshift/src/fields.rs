//! Vector fields, scalar fields, sample grids, and the builtin catalog.
//!
//! Every verification suite in this crate runs against fields from
//! [`builtin_catalog`], whose closed-form flows serve as oracles, or against
//! polynomial fields defined in a scenario config.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::space::{norm, AmbientSpace};

/// Points where `|F(x)|` falls at or below this are treated as singular.
pub const SINGULAR_NORM_TOL: f64 = 1e-10;

type VecEval = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
type JacEval = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
type FlowEval = Arc<dyn Fn(&[f64], f64) -> Vec<f64> + Send + Sync>;
type ScalarEval = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradEval = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A smooth vector field on an ambient space.
///
/// `analytic_flow`, when present, is a closed-form flow used only as a test
/// oracle; the numerical integrator never consults it.
#[derive(Clone)]
pub struct VectorFieldSpec {
    pub space: AmbientSpace,
    pub name: String,
    pub params: BTreeMap<String, f64>,
    eval: VecEval,
    jacobian: Option<JacEval>,
    analytic_flow: Option<FlowEval>,
    /// Known period function of the flow, attached to catalog fields whose
    /// shift map is periodic with a closed-form period.
    pub period_function: Option<ScalarFieldSpec>,
}

impl fmt::Debug for VectorFieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorFieldSpec")
            .field("name", &self.name)
            .field("space", &self.space)
            .field("params", &self.params)
            .finish()
    }
}

impl VectorFieldSpec {
    pub fn new<F>(space: AmbientSpace, name: impl Into<String>, eval: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        VectorFieldSpec {
            space,
            name: name.into(),
            params: BTreeMap::new(),
            eval: Arc::new(eval),
            jacobian: None,
            analytic_flow: None,
            period_function: None,
        }
    }

    pub fn with_jacobian<J>(mut self, jac: J) -> Self
    where
        J: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jac));
        self
    }

    pub fn with_analytic_flow<G>(mut self, flow: G) -> Self
    where
        G: Fn(&[f64], f64) -> Vec<f64> + Send + Sync + 'static,
    {
        self.analytic_flow = Some(Arc::new(flow));
        self
    }

    pub fn with_params(mut self, params: BTreeMap<String, f64>) -> Self {
        self.params = params;
        self
    }

    pub fn with_period_function(mut self, theta: ScalarFieldSpec) -> Self {
        self.period_function = Some(theta);
        self
    }

    pub fn dimension(&self) -> usize {
        self.space.dimension
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (self.eval)(x, out)
    }

    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension()];
        self.eval_into(x, &mut out);
        out
    }

    pub fn has_analytic_flow(&self) -> bool {
        self.analytic_flow.is_some()
    }

    /// Closed-form flow oracle, if this field carries one.
    pub fn analytic_flow(&self, x: &[f64], t: f64) -> Option<Vec<f64>> {
        self.analytic_flow.as_ref().map(|f| f(x, t))
    }

    /// Jacobian at `x`: analytic when supplied, central differences otherwise.
    pub fn jacobian_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        match &self.jacobian {
            Some(j) => Ok(j(x)),
            None => finite_difference_jacobian(self, x, default_fd_step(x)),
        }
    }

    pub fn is_singular_at(&self, x: &[f64]) -> bool {
        norm(&self.evaluate(x)) <= SINGULAR_NORM_TOL
    }
}

/// A smooth scalar function on an ambient space.
#[derive(Clone)]
pub struct ScalarFieldSpec {
    pub space: AmbientSpace,
    pub name: String,
    /// Claim that the function is strictly positive; verified on sample grids
    /// at use sites that require it.
    pub positive: bool,
    eval: ScalarEval,
    gradient: Option<GradEval>,
}

impl fmt::Debug for ScalarFieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarFieldSpec")
            .field("name", &self.name)
            .field("space", &self.space)
            .field("positive", &self.positive)
            .finish()
    }
}

impl ScalarFieldSpec {
    pub fn new<F>(space: AmbientSpace, name: impl Into<String>, eval: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        ScalarFieldSpec {
            space,
            name: name.into(),
            positive: false,
            eval: Arc::new(eval),
            gradient: None,
        }
    }

    pub fn with_gradient<G>(mut self, grad: G) -> Self
    where
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(grad));
        self
    }

    pub fn positive(mut self) -> Self {
        self.positive = true;
        self
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    /// Gradient at `x`: analytic when supplied, central differences otherwise.
    pub fn gradient_at(&self, x: &[f64]) -> Vec<f64> {
        if let Some(g) = &self.gradient {
            return g(x);
        }
        let h = default_fd_step(x);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        let mut out = vec![0.0; x.len()];
        for j in 0..x.len() {
            xp[j] = x[j] + h;
            xm[j] = x[j] - h;
            out[j] = (self.evaluate(&xp) - self.evaluate(&xm)) / (2.0 * h);
            xp[j] = x[j];
            xm[j] = x[j];
        }
        out
    }

    /// Constant function `c` on the given space.
    pub fn constant(space: AmbientSpace, c: f64) -> Self {
        let dim = space.dimension;
        let mut s = ScalarFieldSpec::new(space, format!("const({c})"), move |_| c)
            .with_gradient(move |_| vec![0.0; dim]);
        if c > 0.0 {
            s = s.positive();
        }
        s
    }
}

/// A finite list of sample points in an ambient space.
#[derive(Debug, Clone)]
pub struct SampleGrid {
    pub space: AmbientSpace,
    pub points: Vec<Vec<f64>>,
    pub description: String,
}

impl SampleGrid {
    pub fn from_points(
        space: AmbientSpace,
        points: Vec<Vec<f64>>,
        description: impl Into<String>,
    ) -> Result<Self> {
        space.validate()?;
        let mut reduced = Vec::with_capacity(points.len());
        for p in &points {
            space.check_point(p)?;
            reduced.push(space.reduce(p));
        }
        Ok(SampleGrid {
            space,
            points: reduced,
            description: description.into(),
        })
    }

    /// Rectangular lattice, optionally jittered (deterministic per seed).
    pub fn lattice(
        space: AmbientSpace,
        min: &[f64],
        max: &[f64],
        counts: &[usize],
        jitter: f64,
        seed: u64,
    ) -> Result<Self> {
        let dim = space.dimension;
        if min.len() != dim || max.len() != dim || counts.len() != dim {
            return Err(Error::config(
                "lattice bounds must match the space dimension",
            ));
        }
        if counts.contains(&0) {
            return Err(Error::config("lattice counts must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let total: usize = counts.iter().product();
        let mut points = Vec::with_capacity(total);
        for flat in 0..total {
            let mut idx = flat;
            let mut p = vec![0.0; dim];
            for (j, &c) in counts.iter().enumerate() {
                let i = idx % c;
                idx /= c;
                p[j] = if c == 1 {
                    0.5 * (min[j] + max[j])
                } else {
                    min[j] + (max[j] - min[j]) * i as f64 / (c - 1) as f64
                };
                if jitter != 0.0 {
                    p[j] += jitter * unit_symmetric(&mut rng);
                }
            }
            points.push(p);
        }
        SampleGrid::from_points(
            space,
            points,
            format!("lattice {counts:?} in [{min:?}, {max:?}], jitter {jitter}"),
        )
    }

    /// Concentric circles in the Euclidean plane. Points of one circle are
    /// listed consecutively, so grid-adjacent entries share an orbit for
    /// rotational fields.
    pub fn circles(radii: &[f64], per_circle: usize, jitter: f64, seed: u64) -> Result<Self> {
        if per_circle == 0 {
            return Err(Error::config(
                "circle grids need at least one point per circle",
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::with_capacity(radii.len() * per_circle);
        for &r in radii {
            for i in 0..per_circle {
                let mut angle = 2.0 * std::f64::consts::PI * i as f64 / per_circle as f64;
                if jitter != 0.0 {
                    angle += jitter * unit_symmetric(&mut rng);
                }
                points.push(vec![r * angle.cos(), r * angle.sin()]);
            }
        }
        SampleGrid::from_points(
            AmbientSpace::euclidean(2),
            points,
            format!("circles r={radii:?}, {per_circle} points each, jitter {jitter}"),
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Grids match when they hold bitwise-identical point lists.
    pub fn same_points(&self, other: &SampleGrid) -> bool {
        self.points == other.points && self.space == other.space
    }
}

fn unit_symmetric(rng: &mut ChaCha8Rng) -> f64 {
    // 53 random bits mapped to [0,1), then to [-1,1).
    let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    2.0 * u - 1.0
}

/// Default central-difference step at `x`.
pub fn default_fd_step(x: &[f64]) -> f64 {
    1e-5 * norm(x).max(1.0)
}

/// Pointwise product `mu * F`. Drops any analytic flow of `F`.
pub fn scale_field(f: &VectorFieldSpec, mu: &ScalarFieldSpec) -> Result<VectorFieldSpec> {
    if f.space != mu.space {
        return Err(Error::config(format!(
            "scale_field: field '{}' and scalar '{}' live on different spaces",
            f.name, mu.name
        )));
    }
    let fe = f.eval.clone();
    let me = mu.eval.clone();
    let name = format!("{}*{}", mu.name, f.name);
    let mut scaled = VectorFieldSpec::new(f.space.clone(), name, move |x, out| {
        fe(x, out);
        let m = me(x);
        for v in out.iter_mut() {
            *v *= m;
        }
    });
    scaled.params = f.params.clone();
    // Product rule J(mu F) = mu J_F + F grad(mu)^T, available when both
    // analytic pieces are.
    if let (Some(jf), Some(gm)) = (f.jacobian.clone(), mu.gradient.clone()) {
        let fe = f.eval.clone();
        let me = mu.eval.clone();
        let dim = f.space.dimension;
        scaled = scaled.with_jacobian(move |x| {
            let mut fx = vec![0.0; dim];
            fe(x, &mut fx);
            let m = me(x);
            let grad = gm(x);
            let mut j = jf(x) * m;
            for r in 0..dim {
                for c in 0..dim {
                    j[(r, c)] += fx[r] * grad[c];
                }
            }
            j
        });
    }
    Ok(scaled)
}

/// Central-difference Jacobian of `f` at `x` with step `h`.
pub fn finite_difference_jacobian(f: &VectorFieldSpec, x: &[f64], h: f64) -> Result<DMatrix<f64>> {
    if h.is_nan() || h <= 0.0 {
        return Err(Error::config("finite-difference step must be positive"));
    }
    f.space.check_point(x)?;
    let d = f.dimension();
    let mut jac = DMatrix::zeros(d, d);
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    let mut fp = vec![0.0; d];
    let mut fm = vec![0.0; d];
    for j in 0..d {
        xp[j] = x[j] + h;
        xm[j] = x[j] - h;
        f.eval_into(&xp, &mut fp);
        f.eval_into(&xm, &mut fm);
        if fp.iter().chain(fm.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("field '{}' at a difference stencil around {x:?}", f.name),
            });
        }
        for i in 0..d {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
        xp[j] = x[j];
        xm[j] = x[j];
    }
    Ok(jac)
}

// ---------------------------------------------------------------------------
// Builtin catalog
// ---------------------------------------------------------------------------

/// Rigid rotation on the plane: `F(x, y) = (-y, x)`.
pub fn rotation() -> VectorFieldSpec {
    let space = AmbientSpace::euclidean(2);
    VectorFieldSpec::new(space.clone(), "rotation", |x, out| {
        out[0] = -x[1];
        out[1] = x[0];
    })
    .with_jacobian(|_| DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]))
    .with_analytic_flow(|x, t| {
        let (s, c) = t.sin_cos();
        vec![c * x[0] - s * x[1], s * x[0] + c * x[1]]
    })
    .with_period_function(ScalarFieldSpec::constant(space, 2.0 * std::f64::consts::PI))
}

/// Cubic rotation on the plane: `F(x, y) = (1 + x^2 + y^2) (-y, x)`.
///
/// Orbits are circles traversed with angular speed `1 + r^2`, so the period
/// at radius `r` is `2 pi / (1 + r^2)`.
pub fn nonlinear_rotation() -> VectorFieldSpec {
    let space = AmbientSpace::euclidean(2);
    VectorFieldSpec::new(space.clone(), "nonlinear-rotation", |x, out| {
        let s = 1.0 + x[0] * x[0] + x[1] * x[1];
        out[0] = -s * x[1];
        out[1] = s * x[0];
    })
    .with_jacobian(|x| {
        let s = 1.0 + x[0] * x[0] + x[1] * x[1];
        DMatrix::from_row_slice(
            2,
            2,
            &[
                -2.0 * x[0] * x[1],
                -(s + 2.0 * x[1] * x[1]),
                s + 2.0 * x[0] * x[0],
                2.0 * x[0] * x[1],
            ],
        )
    })
    .with_analytic_flow(|x, t| {
        let r2 = x[0] * x[0] + x[1] * x[1];
        let (s, c) = ((1.0 + r2) * t).sin_cos();
        vec![c * x[0] - s * x[1], s * x[0] + c * x[1]]
    })
    .with_period_function(scaled_inv_one_plus_r_squared(
        space,
        2.0 * std::f64::consts::PI,
    ))
}

/// Constant translation on the plane: `F = (1, 0)`.
pub fn translation() -> VectorFieldSpec {
    VectorFieldSpec::new(AmbientSpace::euclidean(2), "translation", |_, out| {
        out[0] = 1.0;
        out[1] = 0.0;
    })
    .with_jacobian(|_| DMatrix::zeros(2, 2))
    .with_analytic_flow(|x, t| vec![x[0] + t, x[1]])
}

/// Scalar blow-up field on the line: `F(x) = x^2`.
///
/// The flow `x / (1 - t x)` exists only while `1 - t x > 0`; trajectories
/// starting at `x > 0` blow up at `t = 1/x`.
pub fn blowup() -> VectorFieldSpec {
    VectorFieldSpec::new(AmbientSpace::euclidean(1), "blowup", |x, out| {
        out[0] = x[0] * x[0];
    })
    .with_jacobian(|x| DMatrix::from_element(1, 1, 2.0 * x[0]))
    .with_analytic_flow(|x, t| {
        let denom = 1.0 - t * x[0];
        vec![if denom > 0.0 {
            x[0] / denom
        } else {
            f64::INFINITY
        }]
    })
}

/// Block-diagonal rotations on `R^{2k+l}`: each plane block rotates at rate
/// `A_j`, the trailing `l` coordinates are fixed.
pub fn rotation_blocks(rates: &[f64], zero_dim: usize) -> Result<VectorFieldSpec> {
    if rates.is_empty() && zero_dim == 0 {
        return Err(Error::config("rotation-blocks needs at least one block"));
    }
    if rates.contains(&0.0) {
        return Err(Error::config("rotation rates must be nonzero"));
    }
    let k = rates.len();
    let dim = 2 * k + zero_dim;
    let rates_eval = rates.to_vec();
    let rates_jac = rates.to_vec();
    let rates_flow = rates.to_vec();
    let mut params = BTreeMap::new();
    for (j, &a) in rates.iter().enumerate() {
        params.insert(format!("a{}", j + 1), a);
    }
    params.insert("l".to_string(), zero_dim as f64);
    Ok(VectorFieldSpec::new(
        AmbientSpace::euclidean(dim),
        "rotation-blocks",
        move |x, out| {
            for (j, &a) in rates_eval.iter().enumerate() {
                out[2 * j] = -a * x[2 * j + 1];
                out[2 * j + 1] = a * x[2 * j];
            }
            for v in out.iter_mut().skip(2 * rates_eval.len()) {
                *v = 0.0;
            }
        },
    )
    .with_jacobian(move |_| {
        let mut j = DMatrix::zeros(dim, dim);
        for (b, &a) in rates_jac.iter().enumerate() {
            j[(2 * b, 2 * b + 1)] = -a;
            j[(2 * b + 1, 2 * b)] = a;
        }
        j
    })
    .with_analytic_flow(move |x, t| {
        let mut y = x.to_vec();
        for (j, &a) in rates_flow.iter().enumerate() {
            let (s, c) = (a * t).sin_cos();
            y[2 * j] = c * x[2 * j] - s * x[2 * j + 1];
            y[2 * j + 1] = s * x[2 * j] + c * x[2 * j + 1];
        }
        y
    })
    .with_params(params))
}

/// Constant field `F = (1, gamma)` on the flat torus `T^2`.
pub fn torus_constant(gamma: f64, periods: [f64; 2]) -> VectorFieldSpec {
    let space = AmbientSpace::flat_torus(periods.to_vec());
    let mut params = BTreeMap::new();
    params.insert("gamma".to_string(), gamma);
    VectorFieldSpec::new(space, "torus-constant", move |_, out| {
        out[0] = 1.0;
        out[1] = gamma;
    })
    .with_jacobian(|_| DMatrix::zeros(2, 2))
    .with_analytic_flow(move |x, t| vec![x[0] + t, x[1] + gamma * t])
    .with_params(params)
}

/// All builtin example systems with their default parameters.
pub fn builtin_catalog() -> Vec<VectorFieldSpec> {
    vec![
        rotation(),
        nonlinear_rotation(),
        translation(),
        blowup(),
        rotation_blocks(&[1.0, 3.0], 1).expect("default block rates are valid"),
        torus_constant(
            std::f64::consts::SQRT_2,
            [2.0 * std::f64::consts::PI, 2.0 * std::f64::consts::PI],
        ),
    ]
}

/// Builtin field by catalog name, with optional parameter overrides.
pub fn builtin_field(
    name: &str,
    params: &BTreeMap<String, f64>,
    rates: Option<&[f64]>,
    zero_dim: Option<usize>,
) -> Result<VectorFieldSpec> {
    match name {
        "rotation" => Ok(rotation()),
        "nonlinear-rotation" => Ok(nonlinear_rotation()),
        "translation" => Ok(translation()),
        "blowup" => Ok(blowup()),
        "rotation-blocks" => {
            let default_rates = [1.0, 3.0];
            let r = rates.unwrap_or(&default_rates);
            rotation_blocks(r, zero_dim.unwrap_or(1))
        }
        "torus-constant" => {
            let gamma = params
                .get("gamma")
                .copied()
                .unwrap_or(std::f64::consts::SQRT_2);
            let tau = 2.0 * std::f64::consts::PI;
            let p0 = params.get("period1").copied().unwrap_or(tau);
            let p1 = params.get("period2").copied().unwrap_or(tau);
            Ok(torus_constant(gamma, [p0, p1]))
        }
        other => Err(Error::config(format!("unknown catalog field '{other}'"))),
    }
}

// ---------------------------------------------------------------------------
// Builtin scalar functions
// ---------------------------------------------------------------------------

/// `1 + |x|^2`; strictly positive, constant along circles about the origin.
pub fn one_plus_r_squared(space: AmbientSpace) -> ScalarFieldSpec {
    ScalarFieldSpec::new(space, "one-plus-r-squared", |x| {
        1.0 + x.iter().map(|v| v * v).sum::<f64>()
    })
    .with_gradient(|x| x.iter().map(|v| 2.0 * v).collect())
    .positive()
}

/// `c / (1 + |x|^2)`.
pub fn scaled_inv_one_plus_r_squared(space: AmbientSpace, c: f64) -> ScalarFieldSpec {
    let mut s = ScalarFieldSpec::new(space, format!("{c}/(1+r^2)"), move |x| {
        c / (1.0 + x.iter().map(|v| v * v).sum::<f64>())
    })
    .with_gradient(move |x| {
        let s = 1.0 + x.iter().map(|v| v * v).sum::<f64>();
        x.iter().map(|v| -2.0 * c * v / (s * s)).collect()
    });
    if c > 0.0 {
        s = s.positive();
    }
    s
}

/// `a + b sin(x_1)`; strictly positive when `a > |b|`.
pub fn offset_sin_first(space: AmbientSpace, a: f64, b: f64) -> ScalarFieldSpec {
    let dim = space.dimension;
    let mut s = ScalarFieldSpec::new(space, format!("{a}+{b}*sin(x1)"), move |x| {
        a + b * x[0].sin()
    })
    .with_gradient(move |x| {
        let mut g = vec![0.0; dim];
        g[0] = b * x[0].cos();
        g
    });
    if a > b.abs() {
        s = s.positive();
    }
    s
}

/// `c * x_i` for a coordinate index `i`.
pub fn coordinate_scale(space: AmbientSpace, c: f64, index: usize) -> Result<ScalarFieldSpec> {
    let dim = space.dimension;
    if index >= dim {
        return Err(Error::config(format!(
            "coordinate index {index} out of range for dimension {dim}"
        )));
    }
    Ok(
        ScalarFieldSpec::new(space, format!("{c}*x{}", index + 1), move |x| c * x[index])
            .with_gradient(move |_| {
                let mut g = vec![0.0; dim];
                g[index] = c;
                g
            }),
    )
}

/// Builtin scalar by name.
pub fn builtin_scalar(
    name: &str,
    space: AmbientSpace,
    params: &BTreeMap<String, f64>,
) -> Result<ScalarFieldSpec> {
    match name {
        "unit" => Ok(ScalarFieldSpec::constant(space, 1.0)),
        "const" => {
            let c = params.get("c").copied().unwrap_or(1.0);
            Ok(ScalarFieldSpec::constant(space, c))
        }
        "one-plus-r-squared" => Ok(one_plus_r_squared(space)),
        "scaled-inv-one-plus-r-squared" => {
            let c = params.get("c").copied().unwrap_or(1.0);
            Ok(scaled_inv_one_plus_r_squared(space, c))
        }
        "offset-sin-first" => {
            let a = params.get("a").copied().unwrap_or(2.0);
            let b = params.get("b").copied().unwrap_or(1.0);
            Ok(offset_sin_first(space, a, b))
        }
        "coordinate-scale" => {
            let c = params.get("c").copied().unwrap_or(1.0);
            let index = params.get("index").copied().unwrap_or(0.0) as usize;
            coordinate_scale(space, c, index)
        }
        other => Err(Error::config(format!("unknown catalog scalar '{other}'"))),
    }
}

// ---------------------------------------------------------------------------
// Polynomial fields from coefficient tables
// ---------------------------------------------------------------------------

/// One monomial term: `coeffs[i]` is the contribution of
/// `prod_j x_j^{exponents[j]}` to output component `i`.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PolynomialTerm {
    pub coeffs: Vec<f64>,
    pub exponents: Vec<u32>,
}

fn monomial(x: &[f64], exponents: &[u32]) -> f64 {
    x.iter()
        .zip(exponents)
        .map(|(&v, &e)| v.powi(e as i32))
        .product()
}

/// Partial derivative of the monomial with respect to coordinate `j`.
fn monomial_dj(x: &[f64], exponents: &[u32], j: usize) -> f64 {
    let e = exponents[j];
    if e == 0 {
        return 0.0;
    }
    let mut prod = e as f64 * x[j].powi(e as i32 - 1);
    for (k, (&v, &ek)) in x.iter().zip(exponents).enumerate() {
        if k != j {
            prod *= v.powi(ek as i32);
        }
    }
    prod
}

/// Polynomial vector field from a coefficient table, with analytic Jacobian.
pub fn polynomial_field(
    space: AmbientSpace,
    name: impl Into<String>,
    terms: Vec<PolynomialTerm>,
) -> Result<VectorFieldSpec> {
    let dim = space.dimension;
    for t in &terms {
        if t.coeffs.len() != dim || t.exponents.len() != dim {
            return Err(Error::config(
                "polynomial term coeffs/exponents must match the space dimension",
            ));
        }
    }
    let terms_eval = terms.clone();
    let terms_jac = terms;
    Ok(VectorFieldSpec::new(space, name, move |x, out| {
        out.iter_mut().for_each(|v| *v = 0.0);
        for t in &terms_eval {
            let m = monomial(x, &t.exponents);
            for (o, &c) in out.iter_mut().zip(&t.coeffs) {
                *o += c * m;
            }
        }
    })
    .with_jacobian(move |x| {
        let mut jac = DMatrix::zeros(dim, dim);
        for t in &terms_jac {
            for j in 0..dim {
                let dm = monomial_dj(x, &t.exponents, j);
                if dm != 0.0 {
                    for i in 0..dim {
                        jac[(i, j)] += t.coeffs[i] * dm;
                    }
                }
            }
        }
        jac
    }))
}

/// One scalar monomial term.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ScalarTerm {
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

/// Polynomial scalar field from a coefficient table, with analytic gradient.
pub fn polynomial_scalar(
    space: AmbientSpace,
    name: impl Into<String>,
    terms: Vec<ScalarTerm>,
) -> Result<ScalarFieldSpec> {
    let dim = space.dimension;
    for t in &terms {
        if t.exponents.len() != dim {
            return Err(Error::config(
                "scalar term exponents must match the space dimension",
            ));
        }
    }
    let terms_eval = terms.clone();
    let terms_grad = terms;
    Ok(ScalarFieldSpec::new(space, name, move |x| {
        terms_eval
            .iter()
            .map(|t| t.coeff * monomial(x, &t.exponents))
            .sum()
    })
    .with_gradient(move |x| {
        let mut g = vec![0.0; dim];
        for t in &terms_grad {
            for (j, gj) in g.iter_mut().enumerate() {
                *gj += t.coeff * monomial_dj(x, &t.exponents, j);
            }
        }
        g
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn scale_by_one_is_identity() {
        let f = rotation();
        let mu = ScalarFieldSpec::constant(f.space.clone(), 1.0);
        let g = scale_field(&f, &mu).unwrap();
        for p in [[1.0, 0.0], [0.3, -0.7], [-2.0, 1.5]] {
            assert_eq!(g.evaluate(&p), f.evaluate(&p));
        }
    }

    #[test]
    fn scale_by_two_doubles() {
        let f = rotation();
        let mu = ScalarFieldSpec::constant(f.space.clone(), 2.0);
        let g = scale_field(&f, &mu).unwrap();
        assert_eq!(g.evaluate(&[1.0, 0.0]), vec![0.0, 2.0]);
    }

    #[test]
    fn scale_line_field_creates_singular_point() {
        // F(x) = 1 scaled by mu(x) = x gives G(x) = x, singular at 0.
        let space = AmbientSpace::euclidean(1);
        let f = VectorFieldSpec::new(space.clone(), "unit-speed", |_, out| out[0] = 1.0);
        let mu = ScalarFieldSpec::new(space, "x", |x| x[0]);
        let g = scale_field(&f, &mu).unwrap();
        assert_eq!(g.evaluate(&[3.0]), vec![3.0]);
        assert!(g.is_singular_at(&[0.0]));
        assert!(!g.is_singular_at(&[0.5]));
    }

    #[test]
    fn scale_rejects_dimension_mismatch() {
        let f = rotation();
        let mu = ScalarFieldSpec::constant(AmbientSpace::euclidean(3), 1.0);
        assert!(scale_field(&f, &mu).is_err());
    }

    #[test]
    fn catalog_flows_fix_time_zero() {
        for f in builtin_catalog() {
            let x: Vec<f64> = (0..f.dimension()).map(|i| 0.3 + 0.2 * i as f64).collect();
            let y = f.analytic_flow(&x, 0.0).unwrap();
            assert_eq!(x, y, "field {}", f.name);
        }
    }

    #[test]
    fn rotation_quarter_turn() {
        let f = rotation();
        let y = f
            .analytic_flow(&[1.0, 0.0], std::f64::consts::FRAC_PI_2)
            .unwrap();
        assert_abs_diff_eq!(y[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(y[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn blowup_closed_form() {
        let f = blowup();
        let y = f.analytic_flow(&[1.0], 0.5).unwrap();
        assert_abs_diff_eq!(y[0], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn single_block_matches_rotation() {
        let blocks = rotation_blocks(&[1.0], 0).unwrap();
        let rot = rotation();
        for p in [[1.0, 0.0], [0.4, -0.9]] {
            assert_eq!(blocks.evaluate(&p), rot.evaluate(&p));
        }
        let a = blocks.analytic_flow(&[1.0, 0.0], 0.7).unwrap();
        let b = rot.analytic_flow(&[1.0, 0.0], 0.7).unwrap();
        assert_abs_diff_eq!(a[0], b[0], epsilon = 1e-15);
        assert_abs_diff_eq!(a[1], b[1], epsilon = 1e-15);
    }

    #[test]
    fn catalog_flows_satisfy_the_flow_ode() {
        // Central time difference of the oracle flow against the field.
        let h = 1e-6;
        for f in builtin_catalog() {
            let x: Vec<f64> = (0..f.dimension()).map(|i| 0.2 + 0.15 * i as f64).collect();
            for t in [0.0, 0.3, 1.1] {
                if f.name == "blowup" && t > 0.9 {
                    continue;
                }
                let yp = f.analytic_flow(&x, t + h).unwrap();
                let ym = f.analytic_flow(&x, t - h).unwrap();
                let y = f.analytic_flow(&x, t).unwrap();
                let fy = f.evaluate(&y);
                for i in 0..f.dimension() {
                    let dt = (yp[i] - ym[i]) / (2.0 * h);
                    assert_abs_diff_eq!(dt, fy[i], epsilon = 1e-6);
                }
            }
        }
    }

    #[test]
    fn fd_jacobian_of_linear_field_is_exact() {
        let f = rotation();
        let j = finite_difference_jacobian(&f, &[0.0, 0.0], 1e-5).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!((j - expect).norm() < 1e-8);
    }

    #[test]
    fn fd_jacobian_of_constant_field_is_zero() {
        let f = translation();
        let j = finite_difference_jacobian(&f, &[0.7, -0.2], 1e-5).unwrap();
        assert!(j.norm() < 1e-10);
    }

    #[test]
    fn fd_jacobian_of_square_matches_derivative() {
        let f = blowup();
        let j = finite_difference_jacobian(&f, &[3.0], 1e-5).unwrap();
        assert_abs_diff_eq!(j[(0, 0)], 6.0, epsilon = 1e-6);
    }

    #[test]
    fn fd_jacobian_reports_nonfinite_stencils() {
        let space = AmbientSpace::euclidean(1);
        let f = VectorFieldSpec::new(space, "reciprocal", |x, out| out[0] = 1.0 / x[0]);
        // Stencil around 0 hits the pole.
        let err = finite_difference_jacobian(&f, &[0.0], 1e-5);
        assert!(err.is_ok()); // 1/(±h) is finite
        let g = VectorFieldSpec::new(AmbientSpace::euclidean(1), "sqrt", |x, out| {
            out[0] = x[0].sqrt()
        });
        assert!(matches!(
            finite_difference_jacobian(&g, &[0.0], 1e-5),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn polynomial_field_encodes_rotation() {
        let terms = vec![
            PolynomialTerm {
                coeffs: vec![-1.0, 0.0],
                exponents: vec![0, 1],
            },
            PolynomialTerm {
                coeffs: vec![0.0, 1.0],
                exponents: vec![1, 0],
            },
        ];
        let f = polynomial_field(AmbientSpace::euclidean(2), "poly-rot", terms).unwrap();
        let rot = rotation();
        for p in [[1.0, 0.0], [0.3, 0.4], [-1.2, 2.0]] {
            assert_eq!(f.evaluate(&p), rot.evaluate(&p));
        }
        let j = f.jacobian_at(&[5.0, -3.0]).unwrap();
        assert!((j - DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])).norm() < 1e-14);
    }

    #[test]
    fn polynomial_scalar_gradient() {
        // mu = 1 + x^2 + y^2
        let terms = vec![
            ScalarTerm {
                coeff: 1.0,
                exponents: vec![0, 0],
            },
            ScalarTerm {
                coeff: 1.0,
                exponents: vec![2, 0],
            },
            ScalarTerm {
                coeff: 1.0,
                exponents: vec![0, 2],
            },
        ];
        let s = polynomial_scalar(AmbientSpace::euclidean(2), "poly-mu", terms).unwrap();
        assert_abs_diff_eq!(s.evaluate(&[1.0, 2.0]), 6.0, epsilon = 1e-15);
        let g = s.gradient_at(&[1.0, 2.0]);
        assert_abs_diff_eq!(g[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[1], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn grid_constructors_are_deterministic() {
        let a = SampleGrid::lattice(
            AmbientSpace::euclidean(2),
            &[-1.0, -1.0],
            &[1.0, 1.0],
            &[3, 3],
            0.05,
            42,
        )
        .unwrap();
        let b = SampleGrid::lattice(
            AmbientSpace::euclidean(2),
            &[-1.0, -1.0],
            &[1.0, 1.0],
            &[3, 3],
            0.05,
            42,
        )
        .unwrap();
        assert_eq!(a.points, b.points);
        assert_eq!(a.len(), 9);
        let c = SampleGrid::circles(&[0.5, 1.0], 4, 0.0, 0).unwrap();
        assert_eq!(c.len(), 8);
        assert_abs_diff_eq!(crate::space::norm(&c.points[5]), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn torus_grid_reduces_points() {
        let g = SampleGrid::from_points(
            AmbientSpace::flat_torus(vec![1.0, 1.0]),
            vec![vec![1.25, -0.5]],
            "wrap",
        )
        .unwrap();
        assert_abs_diff_eq!(g.points[0][0], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(g.points[0][1], 0.5, epsilon = 1e-12);
    }
}
