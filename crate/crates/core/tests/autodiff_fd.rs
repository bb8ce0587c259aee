use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safeflow::analysis::{regularize, RegularizationForm};
use safeflow::autodiff::{jacobian, Carrier, Dims, GenericMap, MapRef, SmoothMap};
use safeflow::hocbf::default_sample_box;
use safeflow::maps::{AffinePlant, Arg, Quadratic};
use safeflow::problem::{builtin_problem, BUILTIN_NAMES};
use safeflow::{build_stack, Matrix};

const STEP: f64 = 1e-6;
const POINTS: usize = 100;

/// Compares every autodiff partial with a central difference.
fn check_map(label: &str, map: &dyn SmoothMap<f64>, points: &[Vec<f64>]) {
    let d = map.dims();
    for p in points {
        let (x, u) = p.split_at(d.x);
        let (jx, ju) = jacobian(map, x, u).unwrap();
        for k in 0..d.inputs() {
            let mut hi = p.clone();
            let mut lo = p.clone();
            hi[k] += STEP;
            lo[k] -= STEP;
            let fh = map.eval(&hi[..d.x], &hi[d.x..]);
            let fl = map.eval(&lo[..d.x], &lo[d.x..]);
            for i in 0..d.out {
                let fd = (fh[i] - fl[i]) / (2.0 * STEP);
                let ad = if k < d.x {
                    jx.row(i)[k]
                } else {
                    ju.row(i)[k - d.x]
                };
                assert!(
                    (fd - ad).abs() <= 1e-6 * (1.0 + ad.abs()),
                    "{label}: d out{i}/d in{k} at {p:?}: autodiff {ad}, fd {fd}"
                );
            }
        }
    }
}

/// Random points for a map, drawn from the builtin's `(x, u)` sample box.
fn points(lo: &[f64], hi: &[f64], dims: Dims, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |rng: &mut ChaCha8Rng, range: std::ops::Range<usize>| -> Vec<f64> {
        range
            .map(|i| lo[i] + (hi[i] - lo[i]) * rng.gen::<f64>())
            .collect()
    };
    (0..POINTS)
        .map(|_| {
            let mut p = if dims.x > 0 {
                pick(&mut rng, 0..n)
            } else {
                vec![]
            };
            if dims.u > 0 {
                p.extend(pick(&mut rng, n..lo.len()));
            }
            p
        })
        .collect()
}

#[test]
fn every_problem_map_matches_finite_differences() {
    for (k, name) in BUILTIN_NAMES.iter().enumerate() {
        let spec = builtin_problem::<f64>(name).unwrap();
        let stack = build_stack(&spec);
        let region = default_sample_box(&spec);
        let n = spec.n();
        let mut maps: Vec<(String, MapRef<f64>)> = spec
            .maps()
            .into_iter()
            .map(|(l, m)| (format!("{name}.{l}"), m))
            .collect();
        for i in 0..=stack.relative_degree() {
            maps.push((format!("{name}.h{i}"), stack.level(i).clone()));
            maps.push((format!("{name}.lie{i}"), stack.lie_derivative(i).clone()));
        }
        for form in [
            RegularizationForm::ShiftedSquare,
            RegularizationForm::AsPrinted,
        ] {
            let reg = regularize(&spec, 10.0, 0.1, form).unwrap();
            maps.push((format!("{name}.phi_reg_{form}"), reg.objective().clone()));
        }
        for (j, (label, map)) in maps.iter().enumerate() {
            let pts = points(&region.lo, &region.hi, map.dims(), n, (k * 100 + j) as u64);
            check_map(label, map.as_ref(), &pts);
        }
    }
}

#[test]
fn standalone_maps_match_finite_differences() {
    let a = Matrix::from_rows(&[[-1.0, 0.3, 0.0], [0.2, -2.0, 0.5], [0.0, 0.1, -0.7]]);
    let b = Matrix::from_rows(&[[1.0, 0.0], [0.5, 1.0], [0.0, -1.0]]);
    let shape = Matrix::from_rows(&[[2.0, 0.3, 0.0], [0.3, 1.0, 0.1], [0.0, 0.1, 0.5]]);
    let maps: Vec<(&str, MapRef<f64>)> = vec![
        ("affine", Arc::new(AffinePlant::new(a, b))),
        (
            "cost",
            Arc::new(Quadratic::cost(Arg::X, vec![0.1, -0.2, 0.3], shape.clone())),
        ),
        (
            "ellipsoid",
            Arc::new(Quadratic::ellipsoid(
                Arg::X,
                vec![0.5, 0.0, -0.5],
                shape,
                2.0,
            )),
        ),
        ("ball", Arc::new(Quadratic::ball(Arg::U, 2, 9.0))),
    ];
    let lo = [-2.0; 5];
    let hi = [2.0; 5];
    for (j, (label, map)) in maps.iter().enumerate() {
        let pts = points(&lo, &hi, map.dims(), 3, 1000 + j as u64);
        check_map(label, map.as_ref(), &pts);
    }
}

/// `y = A x + B u` with rectangular `A`.
struct Linear {
    a: Matrix<f64>,
    b: Matrix<f64>,
}

impl GenericMap<f64> for Linear {
    fn dims(&self) -> Dims {
        Dims::new(self.a.cols(), self.b.cols(), self.a.rows())
    }

    fn apply<S: Carrier<Real = f64>>(&self, x: &[S], u: &[S]) -> Vec<S> {
        (0..self.a.rows())
            .map(|i| {
                let mut acc = S::zero();
                for (j, &xj) in x.iter().enumerate() {
                    acc += xj.scale(self.a.row(i)[j]);
                }
                for (j, &uj) in u.iter().enumerate() {
                    acc += uj.scale(self.b.row(i)[j]);
                }
                acc
            })
            .collect()
    }
}

struct Compose {
    inner: MapRef<f64>,
    outer: MapRef<f64>,
}

impl GenericMap<f64> for Compose {
    fn dims(&self) -> Dims {
        let d = self.inner.dims();
        Dims::new(d.x, d.u, self.outer.dims().out)
    }

    fn apply<S: Carrier<Real = f64>>(&self, x: &[S], u: &[S]) -> Vec<S> {
        let mid = S::call(&*self.inner, x, u);
        S::call(&*self.outer, &mid, &[])
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f64> {
    let data: Vec<Vec<f64>> = (0..rows)
        .map(|_| (0..cols).map(|_| rng.gen_range(-3.0..3.0)).collect())
        .collect();
    Matrix::from_rows(&data)
}

#[test]
fn composition_jacobian_is_the_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let (n, m, k) = (
            rng.gen_range(1..5),
            rng.gen_range(1..4),
            rng.gen_range(1..5),
        );
        let a1 = random_matrix(&mut rng, k, n);
        let b1 = random_matrix(&mut rng, k, m);
        let a2 = random_matrix(&mut rng, 3, k);
        let inner: MapRef<f64> = Arc::new(Linear {
            a: a1.clone(),
            b: b1.clone(),
        });
        let outer: MapRef<f64> = Arc::new(Linear {
            a: a2.clone(),
            b: Matrix::zeros(3, 0),
        });
        let comp = Compose { inner, outer };
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (jx, ju) = jacobian(&comp, &x, &u).unwrap();
        let ex = a2.matmul(&a1);
        let eu = a2.matmul(&b1);
        let tol =
            8.0 * f64::EPSILON * (1.0 + a2.max_abs() * a1.max_abs().max(b1.max_abs()) * k as f64);
        assert!(jx.sub(&ex).max_abs() <= tol, "{jx:?} vs {ex:?}");
        assert!(ju.sub(&eu).max_abs() <= tol, "{ju:?} vs {eu:?}");
    }
}
