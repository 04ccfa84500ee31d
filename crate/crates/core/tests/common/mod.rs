//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the library's numerics.

#![allow(dead_code)]

use domdist::analysis::DistanceMatrix;
use domdist::distances::{
    grad_distance, grad_mixture, DistanceConfig, DomainBatch, FldConfig, KernelConfig, Measure, MixtureSpec,
};
use domdist::model::{backward, encode, forward, Architecture, LabeledBatch, ModelParams};
use domdist::numerics::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Rows = Vec<Vec<f64>>;

pub const FD_STEP: f64 = 1e-5;
pub const REL: f64 = 1e-4;
pub const ABS: f64 = 1e-7;

pub fn close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= ABS + REL * analytic.abs().max(numeric.abs())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_rows(rng: &mut ChaCha8Rng, n: usize, d: usize, shift: f64) -> Rows {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0) + shift).collect())
        .collect()
}

pub fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, d: usize, shift: f64) -> Rows {
    (0..n)
        .map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal) + shift).collect())
        .collect()
}

pub fn batch(rows: &Rows) -> DomainBatch {
    DomainBatch::from_rows("x", rows).unwrap()
}

pub fn mean(x: &Rows) -> Vec<f64> {
    let d = x[0].len();
    (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / x.len() as f64).collect()
}

pub fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn l2(s: &Rows, t: &Rows) -> f64 {
    sq(&mean(s), &mean(t)).sqrt()
}

pub fn cosine(s: &Rows, t: &Rows) -> f64 {
    let (a, b) = (mean(s), mean(t));
    let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    1.0 - dot / (na * nb)
}

pub fn mmd(s: &Rows, t: &Rows, sigma: f64) -> f64 {
    let k = |x: &[f64], y: &[f64]| (-sq(x, y) / (2.0 * sigma)).exp();
    let avg = |a: &Rows, b: &Rows| {
        a.iter().flat_map(|x| b.iter().map(move |y| k(x, y))).sum::<f64>() / (a.len() * b.len()) as f64
    };
    avg(s, s) + avg(t, t) - 2.0 * avg(s, t)
}

fn cov(x: &Rows) -> Rows {
    let m = mean(x);
    let d = m.len();
    let n = x.len() as f64;
    (0..d)
        .map(|i| (0..d).map(|j| x.iter().map(|r| (r[i] - m[i]) * (r[j] - m[j])).sum::<f64>() / (n - 1.0)).collect())
        .collect()
}

pub fn coral(s: &Rows, t: &Rows) -> f64 {
    let (cs, ct) = (cov(s), cov(t));
    let d = cs.len() as f64;
    let f: f64 = cs.iter().flatten().zip(ct.iter().flatten()).map(|(a, b)| (a - b) * (a - b)).sum();
    f / (4.0 * d * d)
}

/// `S_W + λI` with the default trace-scaled ridge.
pub fn ridged_scatter(s: &Rows, t: &Rows) -> Rows {
    let d = s[0].len();
    let mut w = vec![vec![0.0; d]; d];
    for x in [s, t] {
        let m = mean(x);
        for r in x {
            for i in 0..d {
                for j in 0..d {
                    w[i][j] += (r[i] - m[i]) * (r[j] - m[j]);
                }
            }
        }
    }
    let lambda = 1e-3 * (0..d).map(|i| w[i][i]).sum::<f64>() / d as f64;
    for (i, row) in w.iter_mut().enumerate() {
        row[i] += lambda;
    }
    w
}

/// Gauss-Jordan solve with partial pivoting.
pub fn solve(a: &Rows, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Rows = a.iter().zip(b).map(|(r, &v)| r.iter().copied().chain([v]).collect()).collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = m[r][c] / m[c][c];
                for k in c..=n {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
    }
    (0..n).map(|i| m[i][n] / m[i][i]).collect()
}

/// FLD objective with the ridged scatter held at `frozen`.
pub fn fld_frozen(s: &Rows, t: &Rows, frozen: &Rows) -> f64 {
    let diff: Vec<f64> = mean(s).iter().zip(mean(t)).map(|(a, b)| a - b).collect();
    let y = solve(frozen, &diff);
    diff.iter().zip(&y).map(|(a, b)| a * b).sum()
}

/// `n` unit vectors in three dimensions: a Fibonacci lattice under a
/// uniformly random rotation. Each vector is uniform on the sphere while the
/// set covers it evenly, which i.i.d. draws do not guarantee.
pub fn stratified_sphere(n: usize, rng: &mut ChaCha8Rng) -> Rows {
    let mut basis: Rows = Vec::new();
    while basis.len() < 3 {
        let mut v: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        basis.push(v.into_iter().map(|x| x / norm).collect());
    }
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / n as f64;
            let r = (1.0 - z * z).sqrt();
            let (s, c) = (golden * i as f64).sin_cos();
            let p = [r * c, r * s, z];
            (0..3).map(|j| (0..3).map(|k| p[k] * basis[k][j]).sum()).collect()
        })
        .collect()
}

/// Largest Rayleigh quotient `(wᵀΔ)² / wᵀ(S_W+λI)w` over `draws` random
/// unit `w`, for three-dimensional batches.
pub fn rayleigh_search(s: &Rows, t: &Rows, draws: usize, rng: &mut ChaCha8Rng) -> f64 {
    let a = ridged_scatter(s, t);
    let diff: Vec<f64> = mean(s).iter().zip(mean(t)).map(|(a, b)| a - b).collect();
    assert_eq!(diff.len(), 3);
    stratified_sphere(draws, rng)
        .iter()
        .map(|w| {
            let num: f64 = w.iter().zip(&diff).map(|(a, b)| a * b).sum();
            let den: f64 = (0..3).map(|i| (0..3).map(|j| w[i] * a[i][j] * w[j]).sum::<f64>()).sum();
            num * num / den
        })
        .fold(0.0, f64::max)
}

pub fn median_sq(s: &Rows, t: &Rows) -> f64 {
    let pooled: Vec<&Vec<f64>> = s.iter().chain(t).collect();
    let mut d = Vec::new();
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            d.push(sq(pooled[i], pooled[j]));
        }
    }
    d.sort_by(f64::total_cmp);
    let m = d.len() / 2;
    if d.len() % 2 == 1 {
        d[m]
    } else {
        0.5 * (d[m - 1] + d[m])
    }
}

/// z2 straight from its definition.
pub fn z2(v: &[f64], k: usize) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt();
    let e: Vec<f64> = v.iter().map(|x| ((x - m) / sd).exp()).collect();
    let total: f64 = e.iter().sum();
    (0..k).map(|i| e[i * k + i]).sum::<f64>() / total
}

/// Lowest z2 over a grid of coefficient vectors with entries in `grid`,
/// skipping combinations whose matrix has no spread.
pub fn phi_grid(matrices: &[DistanceMatrix], grid: &[f64]) -> f64 {
    let k = matrices[0].size();
    let flat: Vec<&[f64]> = matrices.iter().map(|m| m.values().as_slice()).collect();
    let mut best = f64::INFINITY;
    let mut idx = vec![0usize; matrices.len()];
    loop {
        let combined: Vec<f64> = (0..k * k)
            .map(|e| idx.iter().zip(&flat).map(|(&g, m)| grid[g] * m[e]).sum())
            .collect();
        let spread = combined.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
            - combined.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if spread > 1e-9 {
            best = best.min(z2(&combined, k));
        }
        let mut p = 0;
        loop {
            if p == idx.len() {
                return best;
            }
            idx[p] += 1;
            if idx[p] < grid.len() {
                break;
            }
            idx[p] = 0;
            p += 1;
        }
    }
}

pub fn matrix(values: Vec<f64>, k: usize, label: &str) -> DistanceMatrix {
    let ids = (0..k).map(|i| format!("d{i}")).collect();
    DistanceMatrix::new(ids, Mat::from_vec(k, k, values).unwrap(), label).unwrap()
}

/// A matrix whose diagonal is clearly smaller than its off-diagonal entries.
pub fn separating_matrix(rng: &mut ChaCha8Rng, k: usize, label: &str) -> DistanceMatrix {
    let v = (0..k * k)
        .map(|e| if e / k == e % k { 0.0 } else { 2.0 } + 0.5 * rng.random::<f64>())
        .collect();
    matrix(v, k, label)
}

pub fn noise_matrix(rng: &mut ChaCha8Rng, k: usize, label: &str) -> DistanceMatrix {
    matrix((0..k * k).map(|_| rng.random::<f64>()).collect(), k, label)
}

// Gradient checks. Each returns the first disagreement found.

pub type Objective<'a> = &'a dyn Fn(&Rows, &Rows) -> f64;

fn check_batch_grad(label: &str, s: &Rows, t: &Rows, analytic: (&Mat, &Mat), f: Objective) -> Result<(), String> {
    for side in 0..2 {
        let rows = if side == 0 { s } else { t };
        let g = if side == 0 { analytic.0 } else { analytic.1 };
        for i in 0..rows.len() {
            for j in 0..rows[0].len() {
                let eval = |delta: f64| {
                    let (mut a, mut b) = (s.clone(), t.clone());
                    if side == 0 {
                        a[i][j] += delta;
                    } else {
                        b[i][j] += delta;
                    }
                    f(&a, &b)
                };
                let numeric = (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP);
                if !close(g[(i, j)], numeric) {
                    return Err(format!(
                        "{label}: batch {side} entry [{i},{j}] analytic {} numeric {numeric}",
                        g[(i, j)]
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Random small batch pairs of varying shape.
pub fn batch_instances(count: u64) -> impl Iterator<Item = (Rows, Rows)> {
    (0..count).map(|seed| {
        let mut r = rng(100 + seed);
        let d = r.random_range(2..5);
        let ns = r.random_range(3..7);
        let nt = r.random_range(3..7);
        (uniform_rows(&mut r, ns, d, 0.8), uniform_rows(&mut r, nt, d, -0.3))
    })
}

/// `grad_distance` (or `grad_mixture`) against finite differences of the
/// oracle, where `oracle` receives the unperturbed pair first so it can
/// freeze data-dependent constants.
pub fn check_distance_grad(
    label: &str,
    mix: &MixtureSpec,
    cfg: &DistanceConfig,
    instances: u64,
    oracle: &dyn Fn(&Rows, &Rows, &Rows, &Rows) -> f64,
) -> Result<(), String> {
    for (s, t) in batch_instances(instances) {
        let g = match mix.components() {
            [(m, c)] if *c == 1.0 => grad_distance(*m, &batch(&s), &batch(&t), cfg),
            _ => grad_mixture(&batch(&s), &batch(&t), mix, cfg),
        }
        .map_err(|e| format!("{label}: {e}"))?;
        check_batch_grad(label, &s, &t, (&g.source, &g.target), &|a, b| oracle(&s, &t, a, b))?;
    }
    Ok(())
}

pub struct ModelCase {
    pub params: ModelParams,
    pub src: LabeledBatch,
    pub tgt: Mat,
}

pub fn model_case(seed: u64) -> ModelCase {
    let mut r = rng(seed);
    let arch = Architecture {
        input_dim: 3,
        encoder_hidden: vec![4],
        rep_dim: 3,
        head_hidden: vec![4],
        num_classes: 3,
    };
    let params = ModelParams::init(&arch, &mut r).unwrap();
    let n = 5;
    let src = Mat::from_rows(&uniform_rows(&mut r, n, 3, 0.5)).unwrap();
    let labels = (0..n).map(|_| r.random_range(0..3)).collect();
    let tgt = Mat::from_rows(&uniform_rows(&mut r, n, 3, -0.5)).unwrap();
    ModelCase {
        params,
        src: LabeledBatch::new(src, labels, 3).unwrap(),
        tgt,
    }
}

fn xe(params: &ModelParams, src: &LabeledBatch) -> f64 {
    let p = forward(params, &src.inputs).unwrap().probabilities;
    src.labels.iter().enumerate().map(|(i, &y)| -p[(i, y)].ln()).sum::<f64>() / src.len() as f64
}

fn reps(params: &ModelParams, x: &Mat) -> Rows {
    encode(params, x).unwrap().to_rows()
}

/// Full-model `backward` against finite differences of cross-entropy plus
/// `β·oracle` on the encoder outputs. The oracle receives the unperturbed
/// representations first.
pub fn check_model_grad(
    label: &str,
    mix: &MixtureSpec,
    cfg: &DistanceConfig,
    instances: u64,
    oracle: &dyn Fn(&Rows, &Rows, &Rows, &Rows) -> f64,
) -> Result<(), String> {
    let beta = 0.7;
    for seed in 0..instances {
        let case = model_case(seed);
        let (_, grads) =
            backward(&case.params, &case.src, &case.tgt, mix, beta, cfg).map_err(|e| format!("{label}: {e}"))?;
        let analytic = grads.flatten();
        let base = case.params.flatten();
        let (s0, t0) = (reps(&case.params, &case.src.inputs), reps(&case.params, &case.tgt));
        let objective = |flat: &[f64]| {
            let mut p = case.params.clone();
            p.set_flat(flat).unwrap();
            xe(&p, &case.src) + beta * oracle(&s0, &t0, &reps(&p, &case.src.inputs), &reps(&p, &case.tgt))
        };
        for k in 0..base.len() {
            let (mut plus, mut minus) = (base.clone(), base.clone());
            plus[k] += FD_STEP;
            minus[k] -= FD_STEP;
            let numeric = (objective(&plus) - objective(&minus)) / (2.0 * FD_STEP);
            if !close(analytic[k], numeric) {
                return Err(format!(
                    "{label}: seed {seed} parameter {k} analytic {} numeric {numeric}",
                    analytic[k]
                ));
            }
        }
    }
    Ok(())
}

/// Every gradient case of the suite as `(label, mixture, config, oracle)`.
pub fn gradient_cases() -> Vec<(&'static str, MixtureSpec, DistanceConfig, Box<dyn Fn(&Rows, &Rows, &Rows, &Rows) -> f64>)> {
    let fixed = |sigma| DistanceConfig {
        kernel: KernelConfig::fixed(sigma),
        fld: FldConfig::default(),
    };
    vec![
        ("l2", MixtureSpec::single(Measure::L2), DistanceConfig::default(), Box::new(|_, _, s, t| l2(s, t))),
        ("cosine", MixtureSpec::single(Measure::Cosine), DistanceConfig::default(), Box::new(|_, _, s, t| cosine(s, t))),
        ("mmd", MixtureSpec::single(Measure::Mmd), fixed(0.7), Box::new(|_, _, s, t| mmd(s, t, 0.7))),
        (
            "mmd-median",
            MixtureSpec::single(Measure::Mmd),
            DistanceConfig::default(),
            Box::new(|s0, t0, s, t| mmd(s, t, median_sq(s0, t0))),
        ),
        ("coral", MixtureSpec::single(Measure::Coral), DistanceConfig::default(), Box::new(|_, _, s, t| coral(s, t))),
        (
            "fld",
            MixtureSpec::single(Measure::Fld),
            DistanceConfig::default(),
            Box::new(|s0, t0, s, t| fld_frozen(s, t, &ridged_scatter(s0, t0))),
        ),
        (
            "mixture",
            MixtureSpec::new(vec![(Measure::L2, 0.3), (Measure::Mmd, 1.5), (Measure::Coral, 0.8), (Measure::Fld, 0.2)])
                .unwrap(),
            fixed(0.9),
            Box::new(|s0, t0, s, t| {
                0.3 * l2(s, t) + 1.5 * mmd(s, t, 0.9) + 0.8 * coral(s, t) + 0.2 * fld_frozen(s, t, &ridged_scatter(s0, t0))
            }),
        ),
    ]
}
