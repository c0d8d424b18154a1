//! Monte Carlo harness over the simulation designs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aft::ThresholdRule;
use crate::basis::{BasisKind, BasisSpec, KernelNorm};
use crate::covariance::sample_cov;
use crate::digit::digit_estimator;
use crate::error::Result;
use crate::fpoet::fpoet_estimator;
use crate::select::{default_r0, ratio_digit, ratio_fpoet, select, spectra, SelectOptions, SelectionReport};
use crate::sim::{generate, loss, DgpConfig, Simulated};

pub const DEFAULT_K: usize = 15;

/// One Monte Carlo setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Setting {
    pub dgp: u8,
    pub p: usize,
    pub n: usize,
    pub r: usize,
    pub alpha: f64,
    pub k: usize,
    pub reps: usize,
    pub seed: u64,
}

impl Setting {
    pub fn new(dgp: u8, p: usize, n: usize, r: usize, alpha: f64, reps: usize, seed: u64) -> Self {
        Setting { dgp, p, n, r, alpha, k: DEFAULT_K, reps, seed }
    }

    pub fn basis(&self) -> Result<BasisSpec<f64>> {
        BasisSpec::new(BasisKind::Fourier, self.k, 4 * self.k + 1)
    }

    pub fn config(&self, rep: usize) -> DgpConfig {
        DgpConfig::new(self.dgp, self.p, self.n, self.r, self.alpha, self.seed).with_replication(rep as u64)
    }

    fn draw(&self, basis: &BasisSpec<f64>, rep: usize) -> Result<Simulated> {
        generate(&self.config(rep), basis)
    }
}

/// Estimated numbers of factors per replication under both ratio rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankDraw {
    pub r_hat_digit: usize,
    pub r_hat_fpoet: usize,
}

pub fn rank_draws(setting: &Setting) -> Result<Vec<RankDraw>> {
    let basis = setting.basis()?;
    (0..setting.reps)
        .into_par_iter()
        .map(|rep| {
            let sim = setting.draw(&basis, rep)?;
            let sp = spectra(&sim.panel)?;
            let (n, p) = (setting.n, setting.p);
            Ok(RankDraw {
                r_hat_digit: ratio_digit(sp.omega.as_slice(), p, 0.75, 0.01)?,
                r_hat_fpoet: ratio_fpoet(sp.tau.as_slice(), p, default_r0(n, p), 0.01)?,
            })
        })
        .collect()
}

/// `P(r̂ = r)` for the rule that matches the design (ratio on `Ω̂` for DGP1,
/// on `Σ̂_y^S` for DGP2).
pub fn recovery_frequency(setting: &Setting) -> Result<f64> {
    let draws = rank_draws(setting)?;
    let hits = draws
        .iter()
        .filter(|d| if setting.dgp == 1 { d.r_hat_digit == setting.r } else { d.r_hat_fpoet == setting.r })
        .count();
    Ok(hits as f64 / draws.len().max(1) as f64)
}

pub fn selection_reports(setting: &Setting) -> Result<Vec<SelectionReport>> {
    let basis = setting.basis()?;
    (0..setting.reps)
        .into_par_iter()
        .map(|rep| select(&setting.draw(&basis, rep)?.panel, &SelectOptions::default()))
        .collect()
}

/// Losses `[Smax, SF, S1]` of the three estimators against the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossDraw {
    pub r_hat_digit: usize,
    pub r_hat_fpoet: usize,
    pub digit: [f64; 3],
    pub fpoet: [f64; 3],
    pub sample: [f64; 3],
}

const LOSS_NORMS: [KernelNorm; 3] = [KernelNorm::Smax, KernelNorm::SF, KernelNorm::S1];

pub fn loss_draws(setting: &Setting, rule: &ThresholdRule<f64>) -> Result<Vec<LossDraw>> {
    let basis = setting.basis()?;
    (0..setting.reps)
        .into_par_iter()
        .map(|rep| {
            let sim = setting.draw(&basis, rep)?;
            let panel = &sim.panel;
            let sp = spectra(panel)?;
            let (n, p) = (setting.n, setting.p);
            let r_d = ratio_digit(sp.omega.as_slice(), p, 0.75, 0.01)?;
            let r_f = ratio_fpoet(sp.tau.as_slice(), p, default_r0(n, p), 0.01)?;
            let (est_d, _) = digit_estimator(panel, r_d, rule)?;
            let (est_f, _) = fpoet_estimator(panel, r_f, rule)?;
            let est_s = sample_cov(panel);
            let truth = &sim.truth.sigma_y;
            let eval = |e| -> Result<[f64; 3]> {
                Ok([loss(e, truth, LOSS_NORMS[0])?, loss(e, truth, LOSS_NORMS[1])?, loss(e, truth, LOSS_NORMS[2])?])
            };
            Ok(LossDraw { r_hat_digit: r_d, r_hat_fpoet: r_f, digit: eval(&est_d)?, fpoet: eval(&est_f)?, sample: eval(&est_s)? })
        })
        .collect()
}

/// Column means of a set of `[Smax, SF, S1]` triples.
pub fn mean_losses(rows: &[[f64; 3]]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for r in rows {
        for c in 0..3 {
            out[c] += r[c];
        }
    }
    out.map(|v| v / rows.len().max(1) as f64)
}
