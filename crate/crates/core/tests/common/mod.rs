//! Oracle checks shared by the unit-level test targets and the acceptance
//! runner. Each check returns `Err` with a description on failure.

#![allow(dead_code)]

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use steinselect::data::{ar1_covariance, Dataset};
use steinselect::moment::{select, stein_moment, top_s_indices, SelectionRule, SteinMoment};
use steinselect::refit::Mlp;
use steinselect::score::{sample_covariance, second_order_score, CovarianceModel};
use steinselect::screening::{keep_count, ScreeningConfig};
use steinselect::tuning::{bic_from_table, bic_value};

pub type Check = Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Cyclic Jacobi rotations until the off-diagonal mass vanishes. Returns
/// eigenvalues and eigenvectors as columns of `v`.
pub fn jacobi(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let p = a.len();
    let mut a = a.to_vec();
    let mut v = vec![vec![0.0; p]; p];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..p)
            .flat_map(|i| (0..p).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for i in 0..p {
            for j in i + 1..p {
                if a[i][j].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[j][j] - a[i][i]) / (2.0 * a[i][j]);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..p {
                    let (aki, akj) = (a[k][i], a[k][j]);
                    a[k][i] = c * aki - s * akj;
                    a[k][j] = s * aki + c * akj;
                }
                for k in 0..p {
                    let (aik, ajk) = (a[i][k], a[j][k]);
                    a[i][k] = c * aik - s * ajk;
                    a[j][k] = s * aik + c * ajk;
                }
                for row in v.iter_mut() {
                    let (vi, vj) = (row[i], row[j]);
                    row[i] = c * vi - s * vj;
                    row[j] = s * vi + c * vj;
                }
            }
        }
    }
    ((0..p).map(|i| a[i][i]).collect(), v)
}

pub fn random_symmetric(p: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in 0..=i {
            let v: f64 = StandardNormal.sample(rng);
            a[i][j] = v;
            a[j][i] = v;
        }
    }
    a
}

pub fn to_mat(a: &[Vec<f64>]) -> Mat<f64> {
    Mat::from_fn(a.len(), a.len(), |i, j| a[i][j])
}

/// Orthogonal projector onto the span of `vectors` (each of length p).
pub fn projector(vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = vectors[0].len();
    let mut m = vec![vec![0.0; p]; p];
    for v in vectors {
        for i in 0..p {
            for j in 0..p {
                m[i][j] += v[i] * v[j];
            }
        }
    }
    m
}

pub fn max_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(r, s)| r.iter().zip(s).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

/// Eigenvalues and eigenvectors of random symmetric matrices, `p ≤ 6`,
/// against the Jacobi oracle.
pub fn eigen_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for p in 1..=6 {
        for _ in 0..20 {
            let a = random_symmetric(p, &mut rng);
            let m = SteinMoment::from_matrix(to_mat(&a), 1);
            let (vals, vecs) = jacobi(&a);
            let mut order: Vec<usize> = (0..p).collect();
            order.sort_by(|&i, &j| vals[j].abs().partial_cmp(&vals[i].abs()).unwrap());
            for (k, &i) in order.iter().enumerate() {
                let dl = (m.eigenvalues()[k].abs() - vals[i].abs()).abs();
                ensure(dl < 1e-8, || format!("p={p}: |λ_{k}| differs by {dl:e}"))?;
                // Random spectra are simple, so vectors agree up to sign.
                let dot: f64 = (0..p).map(|c| m.eigenvectors()[(k, c)] * vecs[c][i]).sum();
                ensure((dot.abs() - 1.0).abs() < 1e-8, || {
                    format!("p={p}: eigenvector {k} angle cosine {dot}")
                })?;
            }
        }
    }
    Ok(())
}

/// `λ = {3, 3, 0}` in a rotated basis: the leading pair must span the
/// oracle eigenspace and column scores must be basis-invariant.
pub fn degenerate_eigenspace() -> Check {
    let s = 1.0 / 2f64.sqrt();
    let t = 1.0 / 3f64.sqrt();
    let u = 1.0 / 6f64.sqrt();
    let q = [[t, t, t], [s, -s, 0.0], [u, u, -2.0 * u]];
    let lam = [3.0, 3.0, 0.0];
    let a: Vec<Vec<f64>> = (0..3)
        .map(|i| (0..3).map(|j| (0..3).map(|k| q[k][i] * lam[k] * q[k][j]).sum()).collect())
        .collect();
    let m = SteinMoment::from_matrix(to_mat(&a), 1);
    let ours: Vec<Vec<f64>> = (0..2)
        .map(|k| (0..3).map(|c| m.eigenvectors()[(k, c)]).collect())
        .collect();
    let oracle = vec![q[0].to_vec(), q[1].to_vec()];
    let p = projector(&oracle);
    let d = max_diff(&projector(&ours), &p);
    ensure(d < 1e-8, || format!("eigenspace projector differs by {d:e}"))?;
    let r = select(&m, 2, SelectionRule::TopS { s: 2 }).map_err(|e| e.to_string())?;
    for j in 0..3 {
        let diff = (r.column_scores[j] - p[j][j].sqrt()).abs();
        ensure(diff < 1e-8, || format!("column score {j} differs by {diff:e}"))?;
    }
    Ok(())
}

pub fn gaussian_rows(n: usize, p: usize, seed: u64) -> Mat<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mat::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng))
}

/// Largest entrywise deviation of `Â` from `B + Bᵀ` for `y = xᵀBx` over
/// three seeded `B` (p = 4, x ~ N(0, I)).
pub fn stein_identity_deviation(n: usize) -> f64 {
    let p = 4;
    let x = gaussian_rows(n, p, 99);
    let cov = CovarianceModel::known(ar1_covariance(p, 0.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let unif = Uniform::new(-1.0, 1.0).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let b: Vec<Vec<f64>> = (0..p)
            .map(|_| (0..p).map(|_| unif.sample(&mut rng)).collect())
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                (0..p)
                    .flat_map(|j| (0..p).map(move |k| (j, k)))
                    .map(|(j, k)| x[(i, j)] * b[j][k] * x[(i, k)])
                    .sum()
            })
            .collect();
        let d = Dataset::with_default_ids(x.clone(), y).unwrap();
        let m = stein_moment(&d, &cov).unwrap();
        for j in 0..p {
            for k in 0..p {
                worst = worst.max((m.a_hat()[(j, k)] - (b[j][k] + b[k][j])).abs());
            }
        }
    }
    worst
}

/// `T(x)` is exactly symmetric and has mean within 0.05 of zero over
/// 10⁵ draws from `N(0, Σ)`.
pub fn score_symmetry_and_zero_mean() -> Check {
    let (n, p, rho) = (100_000, 3, 0.4);
    let cov = CovarianceModel::known(ar1_covariance(p, rho)).unwrap();
    let z = gaussian_rows(n, p, 21);
    let innov = (1.0f64 - rho * rho).sqrt();
    let mut mean = vec![vec![0.0; p]; p];
    let mut row = vec![0.0; p];
    for i in 0..n {
        row[0] = z[(i, 0)];
        for j in 1..p {
            row[j] = rho * row[j - 1] + innov * z[(i, j)];
        }
        let t = second_order_score(&row, &cov).map_err(|e| e.to_string())?;
        let t = t.as_ref();
        for a in 0..p {
            for b in 0..p {
                ensure(t[(a, b)].to_bits() == t[(b, a)].to_bits(), || {
                    format!("T not symmetric at ({a},{b})")
                })?;
                mean[a][b] += t[(a, b)] / n as f64;
            }
        }
    }
    let worst = mean.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    ensure(worst <= 0.05, || format!("max |mean T| = {worst}"))
}

/// Scaling `y` by `c ≠ 0` scales the spectrum by `c` and keeps the
/// selection; permuting columns permutes the column scores.
pub fn selection_invariances() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let unif = Uniform::new(-1.0, 1.0).unwrap();
    for trial in 0..20 {
        let (n, p) = (400, 6);
        let x = gaussian_rows(n, p, 1000 + trial);
        let w: Vec<f64> = (0..p).map(|_| unif.sample(&mut rng)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let z: f64 = (0..p).map(|j| w[j] * x[(i, j)]).sum();
                z * z + 0.5 * x[(i, 0)] * x[(i, 1)]
            })
            .collect();
        let d = Dataset::with_default_ids(x.clone(), y.clone()).unwrap();
        let cov = sample_covariance(&d).map_err(|e| e.to_string())?;
        let m = stein_moment(&d, &cov).map_err(|e| e.to_string())?;
        let base = select(&m, 2, SelectionRule::TopS { s: 3 }).map_err(|e| e.to_string())?;
        for c in [3.0, -0.5] {
            let dc = d.with_response(y.iter().map(|v| c * v).collect()).unwrap();
            let mc = stein_moment(&dc, &cov).map_err(|e| e.to_string())?;
            for (a, b) in m.eigenvalues().iter().zip(mc.eigenvalues()) {
                ensure((c * a - b).abs() <= 1e-8 * (1.0 + a.abs()), || {
                    format!("trial {trial}: eigenvalue {a} scaled by {c} gave {b}")
                })?;
            }
            let rc = select(&mc, 2, SelectionRule::TopS { s: 3 }).map_err(|e| e.to_string())?;
            ensure(rc.selected == base.selected, || {
                format!("trial {trial}: scaling by {c} changed the selection")
            })?;
        }
        let perm = [3, 0, 5, 1, 4, 2];
        let xp = Mat::from_fn(n, p, |i, j| x[(i, perm[j])]);
        let dp = Dataset::with_default_ids(xp, y).unwrap();
        let covp = sample_covariance(&dp).map_err(|e| e.to_string())?;
        let mp = stein_moment(&dp, &covp).map_err(|e| e.to_string())?;
        let rp = select(&mp, 2, SelectionRule::TopS { s: 3 }).map_err(|e| e.to_string())?;
        for j in 0..p {
            let diff = (rp.column_scores[j] - base.column_scores[perm[j]]).abs();
            ensure(diff < 1e-8, || format!("trial {trial}: permuted score {j} off by {diff:e}"))?;
        }
        for s in 1..p {
            let a = top_s_indices(&base.column_scores, s);
            let b = top_s_indices(&base.column_scores, s + 1);
            ensure(a.iter().all(|j| b.contains(j)), || format!("top_{s} not nested"))?;
        }
    }
    Ok(())
}

/// Stored BIC values equal `n·ln(mse) + 100·s·ln(n)` within 1e−9.
pub fn bic_arithmetic() -> Check {
    let table = [(1, 10.0), (2, 1.0), (3, 0.99), (7, 0.5)];
    let r = bic_from_table(1000, &table, 100.0).map_err(|e| e.to_string())?;
    for c in &r.candidates {
        let direct = 1000.0 * c.train_mse.ln() + 100.0 * c.s as f64 * 1000f64.ln();
        ensure((c.bic - direct).abs() < 1e-9, || format!("bic for s={} off", c.s))?;
        ensure(c.bic == bic_value(1000, c.train_mse, c.s, 100.0), || "bic_value mismatch".into())?;
    }
    ensure(r.s_hat == 2, || format!("s_hat = {}, expected 2", r.s_hat))
}

/// Halving from 1000 and the automatic schedule at n = 2000.
pub fn screening_floor_arithmetic() -> Check {
    let mut m = 1000;
    let mut seq = vec![m];
    while m > 60 {
        m = keep_count(0.5, m);
        seq.push(m);
    }
    ensure(seq == [1000, 500, 250, 125, 62, 31], || format!("halving gave {seq:?}"))?;
    let (zeta, p0) = ScreeningConfig::auto().resolve(2000);
    ensure(p0 == 26, || format!("p0 = {p0}"))?;
    ensure((zeta - 2.0 * 2000f64.powf(-1.0 / 3.0)).abs() < 1e-12, || format!("zeta = {zeta}"))?;
    let mut sizes = vec![2000];
    while *sizes.last().unwrap() > p0 {
        sizes.push(keep_count(zeta, *sizes.last().unwrap()));
    }
    ensure(sizes == [2000, 317, 50, 7], || format!("auto schedule {sizes:?}"))
}

/// Analytic gradients of a 2×[3,2]×1 network on 8 samples against central
/// differences (h = 1e−5) at 100 random parameter vectors. Returns the
/// largest relative error.
pub fn gradient_max_relative_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = Mat::from_fn(8, 2, |_, _| StandardNormal.sample(&mut rng));
    let t: Vec<f64> = (0..8).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut net = Mlp::new(2, &[3, 2], 1);
    let unif = Uniform::new(-1.0, 1.0).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let params: Vec<f64> = (0..net.parameters().len()).map(|_| unif.sample(&mut rng)).collect();
        net.set_parameters(&params);
        let (_, grad) = net.loss_and_gradient(x.as_ref(), &t);
        for k in 0..params.len() {
            let mut shifted = params.clone();
            shifted[k] = params[k] + h;
            net.set_parameters(&shifted);
            let (lp, _) = net.loss_and_gradient(x.as_ref(), &t);
            shifted[k] = params[k] - h;
            net.set_parameters(&shifted);
            let (lm, _) = net.loss_and_gradient(x.as_ref(), &t);
            let fd = (lp - lm) / (2.0 * h);
            let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}
