//! High-order control barrier functions.
//!
//! Level `i` of the stack is `h_i(x, u) = ∂h_{i−1}/∂x · f(x, u) + β h_{i−1}(x, u)`
//! with `h_0(x, u) = h(x)`. Each level is evaluated by pushing `f` into a
//! fresh jet generator and reading off the directional derivative, so every
//! level is itself a differentiable map.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::autodiff::{jacobian_unchecked, max_depth, Carrier, Dims, GenericMap, Jet, MapRef};
use crate::problem::ProblemSpec;
use crate::scalar::{norm, Real};

/// `|∂(𝓛_f^i h)/∂u|` below this counts as identically zero.
pub const ZERO_INPUT_GAIN: f64 = 1e-10;
/// Band `|h_r| ≤ BOUNDARY_BAND` used to collect near-boundary samples.
pub const BOUNDARY_BAND: f64 = 1e-3;
pub const DEFAULT_BOUNDARY_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HocbfError {
    #[error("relative-degree check needs at least one sample")]
    EmptySamples,
    #[error("sample box has {got} coordinates, expected {expected}")]
    BoxDimension { got: usize, expected: usize },
    #[error("no near-boundary sample found after {attempts} attempts")]
    NoBoundarySamples { attempts: usize },
}

/// `(x, u) ↦ h(x)`: a map of `x` alone viewed as a map of `(x, u)`.
pub struct StateLift<T: Real> {
    inner: MapRef<T>,
    m: usize,
}

impl<T: Real> StateLift<T> {
    pub fn new(inner: MapRef<T>, m: usize) -> Self {
        assert_eq!(inner.dims().u, 0, "lifted map must not read u");
        StateLift { inner, m }
    }
}

impl<T: Real> GenericMap<T> for StateLift<T> {
    fn dims(&self) -> Dims {
        let d = self.inner.dims();
        Dims::new(d.x, self.m, d.out)
    }

    fn apply<S: Carrier<Real = T>>(&self, x: &[S], _u: &[S]) -> Vec<S> {
        S::call(self.inner.as_ref(), x, &[])
    }
}

/// `(x, u) ↦ ∂p/∂x(x, u) · f(x, u) + β p(x, u)` for a scalar parent `p`.
pub struct LieLevel<T: Real> {
    parent: MapRef<T>,
    plant: MapRef<T>,
    beta: T,
}

impl<T: Real> LieLevel<T> {
    pub fn new(parent: MapRef<T>, plant: MapRef<T>, beta: T) -> Self {
        let (pd, fd) = (parent.dims(), plant.dims());
        assert_eq!(pd.out, 1, "parent must be scalar");
        assert_eq!((pd.x, pd.u), (fd.x, fd.u), "parent and plant inputs differ");
        LieLevel {
            parent,
            plant,
            beta,
        }
    }
}

impl<T: Real> GenericMap<T> for LieLevel<T> {
    fn dims(&self) -> Dims {
        let d = self.parent.dims();
        Dims::new(d.x, d.u, 1)
    }

    fn apply<S: Carrier<Real = T>>(&self, x: &[S], u: &[S]) -> Vec<S> {
        let d = max_depth(x, u);
        let xj: Vec<Jet<T>> = x.iter().map(|&v| v.into_jet()).collect();
        let uj: Vec<Jet<T>> = u.iter().map(|&v| v.into_jet()).collect();
        let fx = self.plant.eval_jet(&xj, &uj);
        let zero = Jet::constant(T::zero());
        let xe: Vec<Jet<T>> = xj
            .iter()
            .zip(&fx)
            .map(|(&xi, &fi)| Jet::extend(xi, fi, d))
            .collect();
        let ue: Vec<Jet<T>> = uj.iter().map(|&ui| Jet::extend(ui, zero, d)).collect();
        let (value, lie) = self.parent.eval_jet(&xe, &ue)[0].split(d);
        vec![S::from_jet(lie + value * Jet::constant(self.beta))]
    }
}

/// The levels `h_0, …, h_r` of one problem.
#[derive(Clone)]
pub struct HocbfStack<T: Real> {
    spec: ProblemSpec<T>,
    levels: Vec<MapRef<T>>,
    /// `𝓛_f^i h` for `i = 0..=r` (same recursion with `β = 0`).
    lie: Vec<MapRef<T>>,
}

fn recursion<T: Real>(spec: &ProblemSpec<T>, beta: T) -> Vec<MapRef<T>> {
    let mut levels: Vec<MapRef<T>> = vec![Arc::new(StateLift::new(
        spec.state_constraint().clone(),
        spec.m(),
    ))];
    for _ in 0..spec.relative_degree() {
        let parent = levels.last().unwrap().clone();
        levels.push(Arc::new(LieLevel::new(parent, spec.plant().clone(), beta)));
    }
    levels
}

impl<T: Real> HocbfStack<T> {
    pub fn new(spec: &ProblemSpec<T>) -> Self {
        HocbfStack {
            spec: spec.clone(),
            levels: recursion(spec, spec.beta()),
            lie: recursion(spec, T::zero()),
        }
    }

    pub fn spec(&self) -> &ProblemSpec<T> {
        &self.spec
    }

    pub fn relative_degree(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, i: usize) -> &MapRef<T> {
        &self.levels[i]
    }

    pub fn lie_derivative(&self, i: usize) -> &MapRef<T> {
        &self.lie[i]
    }

    /// `[h_0(x), h_1(x, u), …, h_r(x, u)]`
    pub fn values(&self, x: &[T], u: &[T]) -> Vec<T> {
        self.levels.iter().map(|l| l.eval(x, u)[0]).collect()
    }

    pub fn top(&self, x: &[T], u: &[T]) -> T {
        self.levels.last().unwrap().eval(x, u)[0]
    }

    /// Exact `(∂h_i/∂x, ∂h_i/∂u)`.
    pub fn level_partials(&self, i: usize, x: &[T], u: &[T]) -> (Vec<T>, Vec<T>) {
        let (jx, ju) = jacobian_unchecked(self.levels[i].as_ref(), x, u);
        (jx.row(0).to_vec(), ju.row(0).to_vec())
    }

    /// Exact `(∂h_r/∂x, ∂h_r/∂u)`.
    pub fn hr_partials(&self, x: &[T], u: &[T]) -> (Vec<T>, Vec<T>) {
        self.level_partials(self.relative_degree(), x, u)
    }

    pub fn membership(&self, x: &[T], u: &[T]) -> MembershipReport<T> {
        let h = self.spec.h(x);
        let b = self.spec.b(u);
        let levels = self.values(x, u)[1..].to_vec();
        let base = h >= T::zero() && b >= T::zero();
        let in_xi: Vec<bool> = std::iter::once(base)
            .chain(levels.iter().map(|&hi| base && hi >= T::zero()))
            .collect();
        let in_intersection = in_xi.iter().all(|&v| v);
        MembershipReport {
            x: x.to_vec(),
            u: u.to_vec(),
            h,
            b,
            levels,
            in_xi,
            in_intersection,
        }
    }
}

pub fn build_stack<T: Real>(spec: &ProblemSpec<T>) -> HocbfStack<T> {
    HocbfStack::new(spec)
}

/// Values of the constraint functions at one point and membership in
/// `𝒳_i = {h ≥ 0, b ≥ 0, h_i ≥ 0}`; `in_xi[0]` is membership in `𝒳`.
#[derive(Debug, Clone, Serialize)]
pub struct MembershipReport<T> {
    pub x: Vec<T>,
    pub u: Vec<T>,
    pub h: T,
    pub b: T,
    /// `h_1, …, h_r`
    pub levels: Vec<T>,
    pub in_xi: Vec<bool>,
    pub in_intersection: bool,
}

/// Axis-aligned box over `(x, u)`.
#[derive(Debug, Clone, Serialize)]
pub struct SampleBox<T> {
    pub lo: Vec<T>,
    pub hi: Vec<T>,
}

impl<T: Real> SampleBox<T> {
    pub fn new(lo: Vec<T>, hi: Vec<T>) -> Self {
        assert_eq!(lo.len(), hi.len());
        SampleBox { lo, hi }
    }

    pub fn contains(&self, z: &[T]) -> bool {
        z.iter()
            .zip(&self.lo)
            .zip(&self.hi)
            .all(|((&v, &l), &h)| l <= v && v <= h)
    }

    pub(crate) fn draw(&self, rng: &mut impl Rng) -> Vec<T> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| l + (h - l) * T::lit(rng.gen::<f64>()))
            .collect()
    }
}

/// Box used by the relative-degree check for the builtin problems.
pub fn default_sample_box<T: Real>(spec: &ProblemSpec<T>) -> SampleBox<T> {
    let v = |s: &[f64]| s.iter().map(|&a| T::lit(a)).collect::<Vec<T>>();
    match spec.name.as_str() {
        "second_order_r2" => SampleBox::new(v(&[-1.0, -2.0, -1.0]), v(&[1.0, 2.0, 1.0])),
        _ if spec.n() == 2 && spec.m() == 2 => {
            SampleBox::new(v(&[-2.0, -1.5, -4.0, -4.0]), v(&[2.5, 2.0, 4.0, 4.0]))
        }
        _ => {
            let k = spec.n() + spec.m();
            SampleBox::new(vec![T::lit(-2.0); k], vec![T::lit(2.0); k])
        }
    }
}

/// Points of `box` with `|h_r| ≤ BOUNDARY_BAND`.
///
/// Uniform draws are moved onto the level set `h_r = 0` by Newton steps
/// along the gradient of `h_r` in `(x, u)`; the result is kept only if it is
/// still inside the box and within the band.
#[derive(Debug, Clone)]
pub struct BoundarySamples<T> {
    pub points: Vec<(Vec<T>, Vec<T>)>,
    pub attempts: usize,
}

pub fn sample_boundary<T: Real>(
    stack: &HocbfStack<T>,
    region: &SampleBox<T>,
    count: usize,
    seed: u64,
) -> Result<BoundarySamples<T>, HocbfError> {
    let n = stack.spec.n();
    let expected = n + stack.spec.m();
    if region.lo.len() != expected {
        return Err(HocbfError::BoxDimension {
            got: region.lo.len(),
            expected,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let band = T::lit(BOUNDARY_BAND);
    let mut points = Vec::with_capacity(count);
    let max_attempts = 20 * count.max(1);
    let mut attempts = 0;
    while points.len() < count && attempts < max_attempts {
        attempts += 1;
        let mut z = region.draw(&mut rng);
        for _ in 0..12 {
            let (x, u) = z.split_at(n);
            let v = stack.top(x, u);
            if v.abs() <= T::lit(1e-12) {
                break;
            }
            let (gx, gu) = stack.hr_partials(x, u);
            let g: Vec<T> = gx.into_iter().chain(gu).collect();
            let gg: T = g.iter().map(|&a| a * a).sum();
            if !(gg > T::lit(1e-24)) {
                break;
            }
            for (zi, gi) in z.iter_mut().zip(&g) {
                *zi = *zi - v * *gi / gg;
            }
        }
        let (x, u) = z.split_at(n);
        if region.contains(&z) && stack.top(x, u).abs() <= band {
            points.push((x.to_vec(), u.to_vec()));
        }
    }
    Ok(BoundarySamples { points, attempts })
}

/// Spot check of the relative-degree assumption.
#[derive(Debug, Clone, Serialize)]
pub struct RelativeDegreeReport {
    pub declared: usize,
    pub samples: usize,
    /// `max ‖∂(𝓛_f^i h)/∂u‖` over all samples, for `i < r`.
    pub lower_input_gain: Vec<f64>,
    /// Number of samples with `|h_r| ≤ BOUNDARY_BAND`.
    pub boundary_samples: usize,
    /// `min ‖∂(𝓛_f^r h)/∂u‖` over the near-boundary samples.
    pub top_input_gain: Option<f64>,
    pub violations: Vec<String>,
}

impl RelativeDegreeReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn verify_relative_degree<T: Real>(
    spec: &ProblemSpec<T>,
    samples: &[(Vec<T>, Vec<T>)],
) -> Result<RelativeDegreeReport, HocbfError> {
    if samples.is_empty() {
        return Err(HocbfError::EmptySamples);
    }
    let stack = HocbfStack::new(spec);
    let r = spec.relative_degree();
    let gain = |map: &MapRef<T>, x: &[T], u: &[T]| {
        let (_, ju) = jacobian_unchecked(map.as_ref(), x, u);
        norm(ju.row(0)).to_f64_lossy()
    };
    let mut lower = vec![0.0f64; r];
    let mut boundary = 0;
    let mut top: Option<f64> = None;
    for (x, u) in samples {
        for (i, slot) in lower.iter_mut().enumerate() {
            *slot = slot.max(gain(stack.lie_derivative(i), x, u));
        }
        if stack.top(x, u).abs().to_f64_lossy() <= BOUNDARY_BAND {
            boundary += 1;
            let g = gain(stack.lie_derivative(r), x, u);
            top = Some(top.map_or(g, |t| t.min(g)));
        }
    }
    let mut violations = Vec::new();
    for (i, &g) in lower.iter().enumerate() {
        if g > ZERO_INPUT_GAIN {
            violations.push(format!("input appears in Lie derivative {i} (max |d/du| = {g:.3e}); relative degree is below {r}"));
        }
    }
    match top {
        None => violations
            .push("no sample with |h_r| <= 1e-3; top-level condition not checked".to_string()),
        Some(g) if g <= ZERO_INPUT_GAIN => violations.push(format!(
            "input gain of Lie derivative {r} vanishes on the boundary (min {g:.3e})"
        )),
        Some(_) => {}
    }
    Ok(RelativeDegreeReport {
        declared: r,
        samples: samples.len(),
        lower_input_gain: lower,
        boundary_samples: boundary,
        top_input_gain: top,
        violations,
    })
}

/// `max |h_1/β − h|` over the given points: how closely `𝒳_1` tracks `𝒳`.
pub fn beta_deviation<T: Real>(spec: &ProblemSpec<T>, points: &[(Vec<T>, Vec<T>)]) -> T {
    let stack = HocbfStack::new(spec);
    let beta = spec.beta();
    points.iter().fold(T::zero(), |m, (x, u)| {
        let v = stack.values(x, u);
        m.max((v[1] / beta - v[0]).abs())
    })
}
