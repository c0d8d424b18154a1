#![allow(dead_code)]

use std::f64::consts::{PI, SQRT_2};

use funcov::basis::KernelMatrix;
use funcov::FunctionalPanel;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| normal(rng))
}

/// Fourier basis written out independently of the library.
pub fn phi(j: usize, u: f64) -> f64 {
    if j == 0 {
        return 1.0;
    }
    let m = ((j + 1) / 2) as f64;
    if j % 2 == 1 {
        SQRT_2 * (2.0 * PI * m * u).cos()
    } else {
        SQRT_2 * (2.0 * PI * m * u).sin()
    }
}

/// Composite Simpson nodes and weights on `[0,1]` with `m` (even) intervals.
pub fn simpson(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m % 2 == 0);
    let h = 1.0 / m as f64;
    let nodes = (0..=m).map(|i| i as f64 * h).collect();
    let weights = (0..=m)
        .map(|i| {
            let c = if i == 0 || i == m {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect();
    (nodes, weights)
}

/// `G × K` matrix of basis values on the nodes.
pub fn phi_table(nodes: &[f64], k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(nodes.len(), k, |g, j| phi(j, nodes[g]))
}

pub fn random_panel(rng: &mut ChaCha8Rng, n: usize, p: usize, k: usize) -> FunctionalPanel<f64> {
    let coeffs = DMatrix::from_fn(n, p * k, |_, c| normal(rng) / (1.0 + (c % k) as f64));
    FunctionalPanel::new(n, p, k, coeffs).unwrap()
}

/// `A Aᵀ / dim + shift · I`.
pub fn random_psd(rng: &mut ChaCha8Rng, dim: usize, shift: f64) -> DMatrix<f64> {
    let a = normal_matrix(rng, dim, dim);
    &a * a.transpose() / dim as f64 + DMatrix::identity(dim, dim) * shift
}

pub fn kron_identity(b: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(b.nrows() * k, b.ncols() * k);
    for i in 0..b.nrows() {
        for j in 0..b.ncols() {
            for a in 0..k {
                out[(i * k + a, j * k + a)] = b[(i, j)];
            }
        }
    }
    out
}

/// `p × r` loadings with `p⁻¹ BᵀB = I`.
pub fn orthonormal_loadings(rng: &mut ChaCha8Rng, p: usize, r: usize) -> DMatrix<f64> {
    let q = normal_matrix(rng, p, r).qr().q();
    q.columns(0, r).into_owned() * (p as f64).sqrt()
}

/// Draws `n` rows from `N(0, sigma)`.
pub fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let l = sigma.clone().cholesky().expect("positive definite").l();
    normal_matrix(rng, n, sigma.nrows()) * l.transpose()
}

pub fn kernel(p: usize, k: usize, m: DMatrix<f64>) -> KernelMatrix<f64> {
    KernelMatrix::square(p, k, m).unwrap()
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

pub fn curve_on(nodes_phi: &DMatrix<f64>, coeffs: &[f64]) -> DVector<f64> {
    nodes_phi * DVector::from_column_slice(coeffs)
}

/// Quadrature oracle for `⟨f, g⟩` of two curves; returns |library − oracle|.
pub fn inner_product_gap(rng: &mut ChaCha8Rng) -> f64 {
    use funcov::basis::inner_product;
    use funcov::Curve;
    let k = rng.random_range(1..=4);
    let f: Vec<f64> = (0..k).map(|_| normal(rng)).collect();
    let g: Vec<f64> = (0..k).map(|_| normal(rng)).collect();
    let lib = inner_product(&Curve::new(DVector::from_vec(f.clone())), &Curve::new(DVector::from_vec(g.clone()))).unwrap();
    let (nodes, w) = simpson(2000);
    let tab = phi_table(&nodes, k);
    let (fv, gv) = (curve_on(&tab, &f), curve_on(&tab, &g));
    let oracle: f64 = (0..nodes.len()).map(|i| w[i] * fv[i] * gv[i]).sum();
    (lib - oracle).abs()
}

/// Evaluates `Σ_ij(u_g, v_h)` for every block on the tensor grid.
fn kernel_on_grid(m: &DMatrix<f64>, k: usize, tab: &DMatrix<f64>, i: usize, j: usize) -> DMatrix<f64> {
    let block = m.view((i * k, j * k), (k, k));
    tab * block * tab.transpose()
}

/// Quadrature oracle for `Ω = ∫∫ Σ Σᵀ`; returns the max entry gap.
pub fn gram_omega_gap(rng: &mut ChaCha8Rng) -> f64 {
    let p = rng.random_range(1..=3);
    let k = rng.random_range(1..=4);
    let s = random_psd(rng, p * k, 0.1);
    let lib = funcov::digit::gram_omega(&kernel(p, k, s.clone())).unwrap().mat;
    let (nodes, w) = simpson(160);
    let tab = phi_table(&nodes, k);
    let blocks: Vec<Vec<DMatrix<f64>>> =
        (0..p).map(|i| (0..p).map(|j| kernel_on_grid(&s, k, &tab, i, j)).collect()).collect();
    let mut gap: f64 = 0.0;
    for i in 0..p {
        for l in 0..p {
            let mut acc = 0.0;
            for j in 0..p {
                let (a, b) = (&blocks[i][j], &blocks[l][j]);
                for g in 0..nodes.len() {
                    for h in 0..nodes.len() {
                        acc += w[g] * w[h] * a[(g, h)] * b[(g, h)];
                    }
                }
            }
            gap = gap.max((lib[(i, l)] - acc).abs());
        }
    }
    gap
}

/// Quadrature oracle for `∫∫ Θ̂_ij`; returns the max entry gap.
pub fn variance_factor_gap(rng: &mut ChaCha8Rng) -> f64 {
    let p = rng.random_range(1..=3);
    let k = rng.random_range(1..=4);
    let n = rng.random_range(5..=30);
    let panel = random_panel(rng, n, p, k);
    let sigma = funcov::covariance::sample_cov(&panel);
    let lib = funcov::aft::variance_factors(&panel, &sigma).unwrap().theta_iint;
    let (nodes, w) = simpson(120);
    let tab = phi_table(&nodes, k);
    let g = nodes.len();
    // curves[t][i] on the grid
    let curves: Vec<Vec<DVector<f64>>> = (0..n)
        .map(|t| {
            (0..p)
                .map(|i| {
                    let c: Vec<f64> = (0..k).map(|a| panel.coeffs()[(t, i * k + a)]).collect();
                    curve_on(&tab, &c)
                })
                .collect()
        })
        .collect();
    let mut gap: f64 = 0.0;
    for i in 0..p {
        for j in 0..p {
            let mut cov = DMatrix::zeros(g, g);
            for t in 0..n {
                cov += &curves[t][i] * curves[t][j].transpose();
            }
            cov /= n as f64;
            let mut acc = 0.0;
            for t in 0..n {
                let outer = &curves[t][i] * curves[t][j].transpose();
                for a in 0..g {
                    for b in 0..g {
                        let d = outer[(a, b)] - cov[(a, b)];
                        acc += w[a] * w[b] * d * d;
                    }
                }
            }
            acc /= n as f64;
            gap = gap.max((lib[(i, j)] - acc).abs());
        }
    }
    gap
}
