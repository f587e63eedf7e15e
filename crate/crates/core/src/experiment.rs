//! Monte-Carlo experiments: random decompositions with well-conditioned
//! unfoldings, additive noise at a grid of SNRs, and the frequency of each
//! detected size tuple together with relative factor errors.

use serde::{Deserialize, Serialize};

use crate::decomposition::{add_noise, match_decompositions, random_btd, BlockTermDecomposition, NoiseSpec, Snr};
use crate::error::{invalid, Result};
use crate::linalg::{self, derive_seed};
use crate::sjbd::EvdVariant;
use crate::solver::{candidate_tuples, decompose, estimate_l_from_d, generic_sum_d, CaseChoice, SolveMode, SolverOptions};
use crate::tensor::{Mode, Tensor3};

/// Default cap on `max(cond(unfold1), cond(unfold3))` for accepted draws.
pub const DEFAULT_CONDITION_CAP: f64 = 10.0;

/// Upper bound on rejected draws per accepted tensor before giving up.
const MAX_REJECTIONS_PER_TRIAL: usize = 100_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dims: [usize; 3],
    pub sizes: Vec<usize>,
    pub snrs: Vec<Snr>,
    pub trials: usize,
    pub condition_cap: f64,
    pub evd_variant: EvdVariant,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnrSummary {
    pub snr: Snr,
    /// Count per entry of [`ExperimentResult::tuples`].
    pub counts: Vec<usize>,
    /// Trials whose detected tuple is not a candidate, or where the solver failed.
    pub other: usize,
    pub mean_err_a: f64,
    pub median_err_a: f64,
    pub mean_err_terms: f64,
    pub median_err_terms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    /// Candidate size tuples in nondecreasing order, one CSV row each.
    pub tuples: Vec<Vec<usize>>,
    pub true_tuple: Vec<usize>,
    pub per_snr: Vec<SnrSummary>,
    pub rejected_draws: usize,
}

impl ExperimentResult {
    /// Count of the true tuple at the given SNR column.
    pub fn correct(&self, column: usize) -> usize {
        let idx = self.tuples.iter().position(|t| *t == self.true_tuple);
        idx.map_or(0, |i| self.per_snr[column].counts[i])
    }

    /// `tuple,<snr>...` rows of detection frequencies, plus an `other` row.
    pub fn frequency_csv(&self) -> String {
        let mut out = String::from("tuple");
        for s in &self.per_snr {
            out.push_str(&format!(",{}", s.snr));
        }
        out.push('\n');
        for (i, t) in self.tuples.iter().enumerate() {
            let label: Vec<String> = t.iter().map(|x| x.to_string()).collect();
            out.push_str(&label.join(" "));
            for s in &self.per_snr {
                out.push_str(&format!(",{}", s.counts[i]));
            }
            out.push('\n');
        }
        out
    }

    /// `snr,mean_err_a,median_err_a,mean_err_terms,median_err_terms,other` rows.
    pub fn error_csv(&self) -> String {
        let mut out = String::from("snr,mean_err_a,median_err_a,mean_err_terms,median_err_terms,other\n");
        for s in &self.per_snr {
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},{}\n",
                s.snr, s.mean_err_a, s.median_err_a, s.mean_err_terms, s.median_err_terms, s.other
            ));
        }
        out
    }
}

/// Candidate size tuples compatible with `R`, `K` and `sum(L)` in the
/// generic setting.
pub fn candidate_size_tuples(r: usize, k: usize, sum_l: usize) -> Result<Vec<Vec<usize>>> {
    let sum_d = generic_sum_d(r, k, sum_l)?;
    candidate_tuples(sum_d, r).iter().map(|d| estimate_l_from_d(d, k, r)).collect()
}

pub fn condition_number(m: &nalgebra::DMatrix<f64>) -> f64 {
    let s = linalg::svd(m).s;
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Draws random real decompositions until both relevant unfoldings have
/// condition number at most `cap`. Returns the draw and the number rejected.
pub fn draw_well_conditioned(
    dims: [usize; 3],
    sizes: &[usize],
    cap: f64,
    seed: u64,
) -> Result<(BlockTermDecomposition<f64>, usize)> {
    for attempt in 0..MAX_REJECTIONS_PER_TRIAL {
        let d = random_btd::<f64>(dims, sizes, derive_seed(seed, attempt as u64))?;
        let t = d.compose();
        let c = condition_number(&t.unfold(Mode::One)).max(condition_number(&t.unfold(Mode::Three)));
        if c <= cap {
            return Ok((d, attempt));
        }
    }
    Err(invalid(format!("no draw met the condition cap {cap} after {MAX_REJECTIONS_PER_TRIAL} attempts")))
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Scenario-two options for a tensor whose `R` and `sum(L)` are known, or
/// exact-mode options for noiseless data.
pub fn trial_options(snr: Snr, r: usize, sum_l: usize, variant: EvdVariant, seed: u64) -> SolverOptions {
    let mode = match snr {
        Snr::Exact => SolveMode::Exact,
        Snr::Db(_) => SolveMode::Scenario2,
    };
    SolverOptions {
        case: CaseChoice::Auto,
        mode,
        known_r: Some(r),
        known_sum_l: Some(sum_l),
        evd_variant: variant,
        seed,
        ..SolverOptions::default()
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    if cfg.trials == 0 || cfg.snrs.is_empty() {
        return Err(invalid("need at least one trial and one SNR"));
    }
    let r = cfg.sizes.len();
    let sum_l: usize = cfg.sizes.iter().sum();
    let tuples = candidate_size_tuples(r, cfg.dims[2], sum_l)?;
    let mut true_tuple = cfg.sizes.clone();
    true_tuple.sort_unstable();

    let mut rejected = 0;
    let mut draws = Vec::with_capacity(cfg.trials);
    for trial in 0..cfg.trials {
        let (d, rej) = draw_well_conditioned(cfg.dims, &cfg.sizes, cfg.condition_cap, derive_seed(cfg.seed, trial as u64))?;
        rejected += rej;
        draws.push(d);
    }

    let mut per_snr = Vec::with_capacity(cfg.snrs.len());
    for (si, &snr) in cfg.snrs.iter().enumerate() {
        let mut counts = vec![0; tuples.len()];
        let mut other = 0;
        let mut errs_a = Vec::new();
        let mut errs_t = Vec::new();
        for (trial, truth) in draws.iter().enumerate() {
            let stream = derive_seed(cfg.seed ^ 0x5eed, (si * cfg.trials + trial) as u64);
            let t: Tensor3<f64> = add_noise(&truth.compose(), NoiseSpec { snr, seed: stream })?;
            let opts = trial_options(snr, r, sum_l, cfg.evd_variant, stream);
            let Ok(rep) = decompose(&t, &opts) else {
                other += 1;
                continue;
            };
            let mut found = rep.detected_l.clone();
            found.sort_unstable();
            match tuples.iter().position(|c| *c == found) {
                Some(i) => counts[i] += 1,
                None => other += 1,
            }
            if let Ok(m) = match_decompositions(truth, &rep.decomposition) {
                errs_a.push(m.err_a);
                errs_t.push(m.err_terms);
            }
        }
        let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
        per_snr.push(SnrSummary {
            snr,
            counts,
            other,
            mean_err_a: mean(&errs_a),
            median_err_a: median(&mut errs_a),
            mean_err_terms: mean(&errs_t),
            median_err_terms: median(&mut errs_t),
        });
    }
    Ok(ExperimentResult { tuples, true_tuple, per_snr, rejected_draws: rejected })
}
