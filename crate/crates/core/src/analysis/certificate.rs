use serde::Serialize;

use crate::hocbf::{HocbfStack, SampleBox};
use crate::scalar::{dot, norm, Real};

/// A row counts as being on its boundary when `|value| ≤` this.
pub const BOUNDARY_TOL: f64 = 1e-8;
/// Radius of the ball searched for certificates.
pub const CERTIFICATE_RADIUS: f64 = 1e3;
pub const DEFAULT_CRCQ_BOUND: f64 = 0.99;
/// Band used to collect double-boundary samples.
pub const DOUBLE_BOUNDARY_BAND: f64 = 1e-3;

/// Best `q` with `‖q‖ ≤ radius` for `max_q min_i (a_iᵀq + d_i)`, over at most
/// two rows. Returns the optimal margin and its maximizer.
///
/// The optimum either makes one row tight alone (`q = radius · a_j/‖a_j‖`) or
/// equalizes both margins, in which case `q` maximizes `a_1ᵀq` over the
/// intersection of the ball with the hyperplane `(a_1 − a_2)ᵀq = d_2 − d_1`.
pub fn max_margin<T: Real>(rows: &[(Vec<T>, T)], radius: T) -> (T, Vec<T>) {
    assert!(rows.len() <= 2);
    let m = rows.first().map_or(0, |r| r.0.len());
    let margin = |q: &[T]| {
        rows.iter()
            .map(|(a, d)| dot(a, q) + *d)
            .fold(T::infinity(), T::min)
    };
    let mut cands: Vec<Vec<T>> = vec![vec![T::zero(); m]];
    for (a, _) in rows {
        let na = norm(a);
        if na > T::zero() {
            cands.push(a.iter().map(|&v| radius * v / na).collect());
        }
    }
    if let [(a1, d1), (a2, d2)] = rows {
        let w: Vec<T> = a1.iter().zip(a2).map(|(&p, &q)| p - q).collect();
        let ww = dot(&w, &w);
        if ww > T::zero() {
            let q0: Vec<T> = w.iter().map(|&v| v * (*d2 - *d1) / ww).collect();
            let rest = radius * radius - dot(&q0, &q0);
            if rest >= T::zero() {
                let k = dot(a1, &w) / ww;
                let p: Vec<T> = a1.iter().zip(&w).map(|(&a, &v)| a - k * v).collect();
                let np = norm(&p);
                let rho = rest.sqrt();
                cands.push(if np > T::zero() {
                    q0.iter().zip(&p).map(|(&z, &v)| z + rho * v / np).collect()
                } else {
                    q0
                });
            }
        }
    }
    cands
        .into_iter()
        .map(|q| (margin(&q), q))
        .fold(None, |best: Option<(T, Vec<T>)>, c| match best {
            Some(b) if b.0 >= c.0 => Some(b),
            _ => Some(c),
        })
        .unwrap()
}

/// Pointwise certificate that the controller QP is strictly feasible:
/// a `q` with `∇bᵀq > 0` when `b = 0` and `∂h_r/∂u q + ∂h_r/∂x f > 0` when
/// `h_r = 0`.
#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityCertificate {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    /// Present iff every applicable strict inequality holds with positive margin.
    pub q_cert: Option<Vec<f64>>,
    /// Margins of the b and h_r rows at `q_cert` (or at the best `q` found),
    /// absent for rows that do not apply.
    pub margin_b: Option<f64>,
    pub margin_h: Option<f64>,
}

pub fn feasibility_certificate<T: Real>(
    stack: &HocbfStack<T>,
    x: &[T],
    u: &[T],
) -> FeasibilityCertificate {
    let spec = stack.spec();
    let tol = T::lit(BOUNDARY_TOL);
    let b_on = spec.b(u).abs() <= tol;
    let h_on = stack.top(x, u).abs() <= tol;
    let mut rows = Vec::new();
    if b_on {
        rows.push((spec.grad_b(u), T::zero()));
    }
    if h_on {
        let (dx, du) = stack.hr_partials(x, u);
        rows.push((du, dot(&dx, &spec.f(x, u))));
    }
    let (best, q) = if rows.is_empty() {
        (T::infinity(), vec![T::zero(); spec.m()])
    } else {
        max_margin(&rows, T::lit(CERTIFICATE_RADIUS))
    };
    let mut margins = rows.iter().map(|(a, d)| (dot(a, &q) + *d).to_f64_lossy());
    let margin_b = if b_on { margins.next() } else { None };
    let margin_h = if h_on { margins.next() } else { None };
    FeasibilityCertificate {
        x: x.iter().map(|v| v.to_f64_lossy()).collect(),
        u: u.iter().map(|v| v.to_f64_lossy()).collect(),
        q_cert: (best > T::zero()).then(|| q.iter().map(|v| v.to_f64_lossy()).collect()),
        margin_b,
        margin_h,
    }
}

/// Certificates over a set of sample points.
#[derive(Debug, Clone, Serialize)]
pub struct CertificateScan {
    pub samples: usize,
    /// Samples where at least one strict inequality applies.
    pub on_boundary: usize,
    pub certified: usize,
    /// Up to ten points without a certificate.
    pub failures: Vec<FeasibilityCertificate>,
    /// Smallest positive margin among the boundary samples.
    pub min_margin: Option<f64>,
}

impl CertificateScan {
    pub fn passed(&self) -> bool {
        self.certified == self.samples
    }
}

pub fn certificate_scan<T: Real>(
    stack: &HocbfStack<T>,
    samples: &[(Vec<T>, Vec<T>)],
) -> CertificateScan {
    let mut scan = CertificateScan {
        samples: samples.len(),
        on_boundary: 0,
        certified: 0,
        failures: Vec::new(),
        min_margin: None,
    };
    for (x, u) in samples {
        let cert = feasibility_certificate(stack, x, u);
        let margins: Vec<f64> = cert
            .margin_b
            .iter()
            .chain(&cert.margin_h)
            .copied()
            .collect();
        if !margins.is_empty() {
            scan.on_boundary += 1;
        }
        if cert.q_cert.is_some() {
            scan.certified += 1;
            if let Some(m) = margins.iter().copied().reduce(f64::min) {
                scan.min_margin = Some(scan.min_margin.map_or(m, |w: f64| w.min(m)));
            }
        } else if scan.failures.len() < 10 {
            scan.failures.push(cert);
        }
    }
    scan
}

/// `|aᵀb| / (‖a‖‖b‖)`, or `None` when either vector vanishes.
pub fn normalized_alignment<T: Real>(a: &[T], b: &[T]) -> Option<T> {
    let (na, nb) = (norm(a), norm(b));
    (na > T::zero() && nb > T::zero()).then(|| (dot(a, b) / (na * nb)).abs())
}

/// Sufficient condition for constant rank: on the double
/// boundary the input normals of `b` and `h_r` stay away from parallel.
#[derive(Debug, Clone, Serialize)]
pub struct CrcqReport {
    pub samples: usize,
    /// Maximum normalized alignment over the double-boundary samples
    /// (1 when a normal vanishes).
    pub max_alignment: Option<f64>,
    pub bound: f64,
    /// `None` when no double-boundary sample was available.
    pub passed: Option<bool>,
}

pub fn crcq_sufficient_check<T: Real>(
    stack: &HocbfStack<T>,
    samples: &[(Vec<T>, Vec<T>)],
    bound: f64,
) -> CrcqReport {
    let spec = stack.spec();
    let band = T::lit(DOUBLE_BOUNDARY_BAND);
    let mut used = 0;
    let mut worst: Option<f64> = None;
    for (x, u) in samples {
        if spec.b(u).abs() > band || stack.top(x, u).abs() > band {
            continue;
        }
        used += 1;
        let (_, du) = stack.hr_partials(x, u);
        let a = normalized_alignment(&spec.grad_b(u), &du).map_or(1.0, |v| v.to_f64_lossy());
        worst = Some(worst.map_or(a, |w| w.max(a)));
    }
    CrcqReport {
        samples: used,
        max_alignment: worst,
        bound,
        passed: worst.map(|w| w <= bound),
    }
}

/// Points near `b = 0 ∧ h_r = 0`: uniform draws from `region` moved onto both
/// level sets by minimum-norm Gauss–Newton steps, then filtered by the band.
pub fn sample_double_boundary<T: Real>(
    stack: &HocbfStack<T>,
    region: &SampleBox<T>,
    count: usize,
    seed: u64,
) -> Vec<(Vec<T>, Vec<T>)> {
    use rand::SeedableRng;
    let spec = stack.spec();
    let n = spec.n();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let band = T::lit(DOUBLE_BOUNDARY_BAND);
    let mut out = Vec::new();
    for _ in 0..20 * count.max(1) {
        if out.len() == count {
            break;
        }
        let mut z = region.draw(&mut rng);
        for _ in 0..12 {
            let (x, u) = z.split_at(n);
            let r = [spec.b(u), stack.top(x, u)];
            if r[0].abs() <= T::lit(1e-12) && r[1].abs() <= T::lit(1e-12) {
                break;
            }
            let (dx, du) = stack.hr_partials(x, u);
            let jb: Vec<T> = std::iter::repeat(T::zero())
                .take(n)
                .chain(spec.grad_b(u))
                .collect();
            let jh: Vec<T> = dx.into_iter().chain(du).collect();
            // z ← z − Jᵀ (J Jᵀ)⁻¹ r
            let (g11, g12, g22) = (dot(&jb, &jb), dot(&jb, &jh), dot(&jh, &jh));
            let det = g11 * g22 - g12 * g12;
            if !(det > T::lit(1e-14) * g11 * g22) {
                break;
            }
            let y1 = (g22 * r[0] - g12 * r[1]) / det;
            let y2 = (g11 * r[1] - g12 * r[0]) / det;
            for i in 0..z.len() {
                z[i] = z[i] - y1 * jb[i] - y2 * jh[i];
            }
        }
        let (x, u) = z.split_at(n);
        if region.contains(&z) && spec.b(u).abs() <= band && stack.top(x, u).abs() <= band {
            out.push((x.to_vec(), u.to_vec()));
        }
    }
    out
}
