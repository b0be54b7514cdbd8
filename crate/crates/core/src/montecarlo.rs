//! Replicated comparison of survey designs over a fixed finite population.
//!
//! Every replicate of every design draws from its own ChaCha stream derived
//! from `(master_seed, design, replicate)`, so results do not depend on the
//! number of worker threads. Per-design summaries are reduced in replicate
//! order.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::design::{run_design, DesignConfig, DesignKind, Measurement, RankingMode};
use crate::error::{Error, Result};
use crate::estimators::{estimate_imperfect, MisrankingModel};
use crate::frame::{census_theta, empirical_quantile, lattice_edges, ArealFrame, ArealUnit};
use crate::mathkit::{g_k, reg_inc_beta, solve_root, RootSolveSpec};
use crate::sampler::DustParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignLabel {
    Srs,
    DustSrs,
    DustMnsPerfect,
    DustMnsImperfect,
}

impl DesignLabel {
    pub const ALL: [DesignLabel; 4] = [
        DesignLabel::Srs,
        DesignLabel::DustSrs,
        DesignLabel::DustMnsPerfect,
        DesignLabel::DustMnsImperfect,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DesignLabel::Srs => "srs",
            DesignLabel::DustSrs => "dust_srs",
            DesignLabel::DustMnsPerfect => "dust_mns_perfect",
            DesignLabel::DustMnsImperfect => "dust_mns_imperfect",
        }
    }

    fn stream_code(self) -> u64 {
        match self {
            DesignLabel::Srs => 0,
            DesignLabel::DustSrs => 1,
            DesignLabel::DustMnsPerfect => 2,
            DesignLabel::DustMnsImperfect => 3,
        }
    }
}

/// How the exceedance threshold `c` is fixed on the frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ThresholdRule {
    /// `c` is the lower empirical `q`-quantile of the latent prevalences.
    Quantile {
        q: f64,
    },
    Fixed {
        c: f64,
    },
}

impl ThresholdRule {
    pub fn resolve(&self, frame: &ArealFrame) -> Result<f64> {
        match *self {
            ThresholdRule::Quantile { q } => empirical_quantile(&frame.p_values()?, q),
            ThresholdRule::Fixed { c } => Ok(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub n: usize,
    pub k: usize,
    pub measurement: Measurement,
    pub dust: DustParams,
    pub replicates: usize,
    pub threshold: ThresholdRule,
    pub designs: Vec<DesignLabel>,
    pub master_seed: u64,
    /// Ranking used by the imperfect MNS design.
    #[serde(default = "default_imperfect_ranking")]
    pub imperfect_ranking: RankingMode,
    /// Calibrate the imperfect design through the τ model instead of `g_k`.
    #[serde(default)]
    pub imperfect_tau: Option<f64>,
}

fn default_imperfect_ranking() -> RankingMode {
    RankingMode::Auxiliary
}

impl McConfig {
    pub fn new(n: usize, k: usize, measurement: Measurement, dust: DustParams) -> Self {
        Self {
            n,
            k,
            measurement,
            dust,
            replicates: 5000,
            threshold: ThresholdRule::Quantile { q: 0.9 },
            designs: DesignLabel::ALL.to_vec(),
            master_seed: 0,
            imperfect_ranking: RankingMode::Auxiliary,
            imperfect_tau: None,
        }
    }

    pub fn with_replicates(mut self, b: usize) -> Self {
        self.replicates = b;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_threshold(mut self, rule: ThresholdRule) -> Self {
        self.threshold = rule;
        self
    }

    pub fn with_designs(mut self, designs: &[DesignLabel]) -> Self {
        self.designs = designs.to_vec();
        self
    }

    pub fn validate(&self, frame: &ArealFrame) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::argument("at least one replicate is required"));
        }
        if self.designs.is_empty() {
            return Err(Error::argument("no designs selected"));
        }
        if self.n == 0 || self.k == 0 {
            return Err(Error::argument("n and k must be at least 1"));
        }
        let uses_sets = self.designs.iter().any(|d| {
            matches!(
                d,
                DesignLabel::DustMnsPerfect | DesignLabel::DustMnsImperfect
            )
        });
        let pool = if uses_sets { self.n * self.k } else { self.n };
        if pool > frame.len() {
            return Err(Error::argument(format!(
                "a pool of {pool} units exceeds the frame size {}",
                frame.len()
            )));
        }
        if let ThresholdRule::Quantile { q } = self.threshold {
            if !(q > 0.0 && q <= 1.0) {
                return Err(Error::domain(format!(
                    "threshold quantile {q} is outside (0, 1]"
                )));
            }
        }
        if let Some(tau) = self.imperfect_tau {
            MisrankingModel::Tau(tau).validate(self.k as u32)?;
        }
        self.measurement.validate()?;
        self.dust.validate()
    }

    fn design_config(&self, design: DesignLabel, threshold_c: f64) -> DesignConfig {
        let (kind, ranking) = match design {
            DesignLabel::Srs => (DesignKind::Srs, RankingMode::Perfect),
            DesignLabel::DustSrs => (DesignKind::DustSrs, RankingMode::Perfect),
            DesignLabel::DustMnsPerfect => (DesignKind::DustMns, RankingMode::Perfect),
            DesignLabel::DustMnsImperfect => (DesignKind::DustMns, self.imperfect_ranking),
        };
        DesignConfig {
            kind,
            n: self.n,
            k: self.k,
            dust: self.dust,
            measurement: self.measurement,
            threshold_c,
            ranking,
        }
    }

    /// Column value for the measurement setting in result tables.
    pub fn f_m_label(&self) -> String {
        match self.measurement {
            Measurement::Exact => "exact".to_string(),
            Measurement::Fraction { f_m } => format!("{f_m}"),
            Measurement::Fixed { m } => format!("m={m}"),
        }
    }
}

/// Generator for replicate `index` of `design`.
pub fn replicate_rng(master_seed: u64, design: DesignLabel, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream((design.stream_code() << 48) | index as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicateOutcome {
    pub theta_hat: f64,
    pub r_n: usize,
}

/// Threshold and finite-population target for a study on `frame`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Target {
    pub threshold_c: f64,
    pub theta_n: f64,
}

impl Target {
    pub fn resolve(frame: &ArealFrame, rule: &ThresholdRule) -> Result<Self> {
        let c = rule.resolve(frame)?;
        Ok(Self {
            threshold_c: c,
            theta_n: census_theta(&frame.p_values()?, c),
        })
    }
}

/// One replicate of one design.
pub fn run_replicate(
    frame: &ArealFrame,
    config: &McConfig,
    target: &Target,
    design: DesignLabel,
    index: usize,
) -> Result<ReplicateOutcome> {
    let mut rng = replicate_rng(config.master_seed, design, index);
    let dc = config.design_config(design, target.threshold_c);
    let data = run_design(frame, &dc, &mut rng)?;
    let (r_n, n) = (data.r_n, data.n);
    let theta_hat = match design {
        DesignLabel::Srs | DesignLabel::DustSrs => data.proportion(),
        DesignLabel::DustMnsPerfect => g_k(data.proportion(), config.k as u32)?,
        DesignLabel::DustMnsImperfect => match config.imperfect_tau {
            None => g_k(data.proportion(), config.k as u32)?,
            Some(tau) => {
                estimate_imperfect(r_n, n, config.k, &MisrankingModel::Tau(tau))?.theta_hat
            }
        },
    };
    Ok(ReplicateOutcome { theta_hat, r_n })
}

/// Monte Carlo summary of one design.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignSummary {
    pub design: DesignLabel,
    pub n: usize,
    pub k: usize,
    pub f_m: String,
    pub eta0: f64,
    pub mse: f64,
    /// Jackknife standard error of `mse`.
    pub mse_se: f64,
    pub bias: f64,
    /// Variance of the estimates with divisor B, so `mse = bias² + var`.
    pub var: f64,
    pub re_vs_dust_srs: Option<f64>,
    pub mean_estimate: f64,
    pub mean_r_n: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McResult {
    pub config: McConfig,
    pub target: Target,
    pub summaries: Vec<DesignSummary>,
}

/// `sqrt((B-1)/B Σ (θ_(i) - θ_(.))²)` for the mean of `values`.
pub fn jackknife_se_of_mean(values: &[f64]) -> f64 {
    let b = values.len();
    if b < 2 {
        return 0.0;
    }
    let bf = b as f64;
    let total: f64 = values.iter().sum();
    let loo: Vec<f64> = values.iter().map(|v| (total - v) / (bf - 1.0)).collect();
    let centre = loo.iter().sum::<f64>() / bf;
    let ss: f64 = loo.iter().map(|x| (x - centre) * (x - centre)).sum();
    ((bf - 1.0) / bf * ss).sqrt()
}

fn summarize(
    design: DesignLabel,
    config: &McConfig,
    target: &Target,
    outcomes: &[ReplicateOutcome],
) -> DesignSummary {
    let b = outcomes.len() as f64;
    let estimates: Vec<f64> = outcomes.iter().map(|o| o.theta_hat).collect();
    let squared: Vec<f64> = estimates
        .iter()
        .map(|t| (t - target.theta_n).powi(2))
        .collect();
    let mean_estimate = estimates.iter().sum::<f64>() / b;
    let var = estimates
        .iter()
        .map(|t| (t - mean_estimate).powi(2))
        .sum::<f64>()
        / b;
    DesignSummary {
        design,
        n: config.n,
        k: match design {
            DesignLabel::Srs | DesignLabel::DustSrs => 1,
            _ => config.k,
        },
        f_m: config.f_m_label(),
        eta0: config.dust.eta0,
        mse: squared.iter().sum::<f64>() / b,
        mse_se: jackknife_se_of_mean(&squared),
        bias: mean_estimate - target.theta_n,
        var,
        re_vs_dust_srs: None,
        mean_estimate,
        mean_r_n: outcomes.iter().map(|o| o.r_n as f64).sum::<f64>() / b,
        replicates: outcomes.len(),
    }
}

/// Replicates for one design, in replicate order.
pub fn run_design_replicates(
    frame: &ArealFrame,
    config: &McConfig,
    target: &Target,
    design: DesignLabel,
) -> Result<Vec<ReplicateOutcome>> {
    (0..config.replicates)
        .into_par_iter()
        .map(|b| run_replicate(frame, config, target, design, b))
        .collect()
}

pub fn run_study(frame: &ArealFrame, config: &McConfig) -> Result<McResult> {
    config.validate(frame)?;
    let target = Target::resolve(frame, &config.threshold)?;
    let mut summaries = Vec::with_capacity(config.designs.len());
    for &design in &config.designs {
        let outcomes = run_design_replicates(frame, config, &target, design)?;
        summaries.push(summarize(design, config, &target, &outcomes));
    }
    if let Some(reference) = summaries
        .iter()
        .find(|s| s.design == DesignLabel::DustSrs)
        .map(|s| s.mse)
    {
        for s in &mut summaries {
            s.re_vs_dust_srs = (s.mse > 0.0).then(|| reference / s.mse);
        }
    }
    Ok(McResult {
        config: config.clone(),
        target,
        summaries,
    })
}

impl McResult {
    pub fn summary(&self, design: DesignLabel) -> Option<&DesignSummary> {
        self.summaries.iter().find(|s| s.design == design)
    }

    pub const CSV_COLUMNS: [&'static str; 10] = [
        "design",
        "n",
        "k",
        "f_m",
        "eta0",
        "mse",
        "mse_se",
        "bias",
        "var",
        "re_vs_dust_srs",
    ];

    /// Writes the summaries as CSV; with `header` false only data rows are written.
    pub fn write_csv<W: Write>(&self, out: W, header: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Data(format!("writing study table: {e}"));
        if header {
            w.write_record(Self::CSV_COLUMNS).map_err(io)?;
        }
        for s in &self.summaries {
            w.write_record([
                s.design.name().to_string(),
                s.n.to_string(),
                s.k.to_string(),
                s.f_m.clone(),
                s.eta0.to_string(),
                s.mse.to_string(),
                s.mse_se.to_string(),
                s.bias.to_string(),
                s.var.to_string(),
                s.re_vs_dust_srs.map(|r| r.to_string()).unwrap_or_default(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Data(e.to_string()))?;
        Ok(())
    }
}

/// Synthetic lattice population with Beta-marginal, spatially correlated
/// prevalences, lognormal sizes and an optional concordant auxiliary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub rows: usize,
    pub cols: usize,
    pub beta_alpha: f64,
    pub beta_beta: f64,
    /// Weight on the neighbour average in each smoothing pass, in `[0, 1)`.
    pub spatial_mix: f64,
    #[serde(default = "one")]
    pub smoothing_passes: u32,
    /// Mean and sd of log size; sd 0 gives equal sizes.
    #[serde(default = "default_log_size_mean")]
    pub log_size_mean: f64,
    #[serde(default)]
    pub log_size_sd: f64,
    /// Target Kendall τ between the auxiliary and the prevalence; `None` omits it.
    #[serde(default)]
    pub aux_tau: Option<f64>,
    pub seed: u64,
}

fn one() -> u32 {
    1
}

fn default_log_size_mean() -> f64 {
    (1000f64).ln()
}

impl SynthSpec {
    pub fn new(
        rows: usize,
        cols: usize,
        beta_alpha: f64,
        beta_beta: f64,
        spatial_mix: f64,
        seed: u64,
    ) -> Self {
        Self {
            rows,
            cols,
            beta_alpha,
            beta_beta,
            spatial_mix,
            smoothing_passes: 1,
            log_size_mean: default_log_size_mean(),
            log_size_sd: 0.0,
            aux_tau: None,
            seed,
        }
    }

    pub fn with_sizes(mut self, log_mean: f64, log_sd: f64) -> Self {
        self.log_size_mean = log_mean;
        self.log_size_sd = log_sd;
        self
    }

    pub fn with_aux_tau(mut self, tau: f64) -> Self {
        self.aux_tau = Some(tau);
        self
    }

    pub fn with_passes(mut self, passes: u32) -> Self {
        self.smoothing_passes = passes;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.rows < 2 || self.cols < 2 {
            return Err(Error::argument(
                "lattice needs at least 2 rows and 2 columns",
            ));
        }
        if !(self.beta_alpha > 0.0 && self.beta_beta > 0.0) {
            return Err(Error::domain("Beta shapes must be positive"));
        }
        if !(0.0..1.0).contains(&self.spatial_mix) {
            return Err(Error::domain(format!(
                "spatial mix {} is outside [0, 1)",
                self.spatial_mix
            )));
        }
        if !(self.log_size_sd >= 0.0 && self.log_size_mean.is_finite()) {
            return Err(Error::domain("invalid log-size parameters"));
        }
        if let Some(t) = self.aux_tau {
            if !(-1.0..=1.0).contains(&t) {
                return Err(Error::domain(format!("aux tau {t} is outside [-1, 1]")));
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<ArealFrame> {
        self.validate()?;
        let n = self.rows * self.cols;
        let edges = lattice_edges(self.rows, self.cols);
        let mut neighbours = vec![Vec::new(); n];
        for &(a, b) in &edges {
            neighbours[a].push(b);
            neighbours[b].push(a);
        }
        let stream = |s: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(s);
            rng
        };

        let mut field_rng = stream(0);
        let mut field: Vec<f64> = (0..n)
            .map(|_| beta_quantile(field_rng.random::<f64>(), self.beta_alpha, self.beta_beta))
            .collect::<Result<_>>()?;
        for _ in 0..self.smoothing_passes {
            field = (0..n)
                .map(|i| {
                    let nb = &neighbours[i];
                    let avg = nb.iter().map(|&j| field[j]).sum::<f64>() / nb.len() as f64;
                    (1.0 - self.spatial_mix) * field[i] + self.spatial_mix * avg
                })
                .collect();
        }
        // rank back onto the Beta marginal
        let ranks = ranks_of(&field);
        let p: Vec<f64> = ranks
            .par_iter()
            .map(|&r| beta_quantile((r as f64 + 0.5) / n as f64, self.beta_alpha, self.beta_beta))
            .collect::<Result<_>>()?;

        let mut size_rng = stream(1);
        let sizes: Vec<f64> = if self.log_size_sd == 0.0 {
            vec![self.log_size_mean.exp(); n]
        } else {
            let dist = LogNormal::new(self.log_size_mean, self.log_size_sd)
                .map_err(|e| Error::domain(e.to_string()))?;
            (0..n).map(|_| dist.sample(&mut size_rng)).collect()
        };

        let aux = match self.aux_tau {
            None => None,
            Some(tau) => {
                let rho = (std::f64::consts::FRAC_PI_2 * tau).sin();
                let normal = Normal::new(0.0, 1.0).expect("standard normal");
                let mut aux_rng = stream(2);
                let p_ranks = ranks_of(&p);
                Some(
                    p_ranks
                        .iter()
                        .map(|&r| {
                            let z = normal.inverse_cdf((r as f64 + 0.5) / n as f64);
                            let e: f64 = StandardNormal.sample(&mut aux_rng);
                            rho * z + (1.0 - rho * rho).sqrt() * e
                        })
                        .collect::<Vec<f64>>(),
                )
            }
        };

        let units = (0..n)
            .map(|i| {
                let (r, c) = (i / self.cols, i % self.cols);
                let mut u = ArealUnit::new(format!("r{r}c{c}"), sizes[i]).with_p(p[i]);
                if let Some(a) = &aux {
                    u = u.with_aux(a[i]);
                }
                u
            })
            .collect();
        ArealFrame::new(units, edges)
    }
}

/// Lattice frame with default sizes and no auxiliary.
pub fn synth_frame(
    rows: usize,
    cols: usize,
    beta_alpha: f64,
    beta_beta: f64,
    spatial_mix: f64,
    seed: u64,
) -> Result<ArealFrame> {
    SynthSpec::new(rows, cols, beta_alpha, beta_beta, spatial_mix, seed).build()
}

fn ranks_of(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut ranks = vec![0; values.len()];
    for (r, &i) in idx.iter().enumerate() {
        ranks[i] = r;
    }
    ranks
}

/// Inverse of the Beta(α, β) CDF.
pub fn beta_quantile(u: f64, alpha: f64, beta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::domain(format!("probability {u} is outside [0, 1]")));
    }
    if u == 0.0 || u == 1.0 {
        return Ok(u);
    }
    let mut failure = None;
    let spec = RootSolveSpec::new(0.0, 1.0).with_tol(1e-13);
    let x = solve_root(
        |x| match reg_inc_beta(x, alpha, beta) {
            Ok(v) => v - u,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        &spec,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    x
}

/// Measurement fraction whose average `max(1, floor(f N_i))` over the frame
/// is closest to `target_mean_m` from below.
pub fn fraction_for_mean_m(frame: &ArealFrame, target_mean_m: f64) -> Result<f64> {
    if !(target_mean_m >= 1.0) {
        return Err(Error::domain(
            "target mean measurement size must be at least 1",
        ));
    }
    let mean_m = |f: f64| {
        let m = Measurement::Fraction { f_m: f };
        frame
            .units()
            .iter()
            .map(|u| m.sample_size(u.n_individuals).unwrap_or(1) as f64)
            .sum::<f64>()
            / frame.len() as f64
    };
    let (mut lo, mut hi) = (f64::MIN_POSITIVE, 1.0);
    if mean_m(hi) < target_mean_m {
        return Err(Error::domain(
            "frame units are too small for the target measurement size",
        ));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_m(mid) <= target_mean_m {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}
