//! One survey under a given design: selection, within-set ranking, maxima
//! nomination and within-unit binomial measurement.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::ArealFrame;
use crate::sampler::{dust_draw, partition_sets, srs_draw, DustParams, SampleDraw};

/// How the units of a set are ordered before the maximum is nominated.
/// Ties among maxima are always broken uniformly at random.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RankingMode {
    /// Rank by the latent prevalence itself.
    Perfect,
    /// Rank by the auxiliary concomitant.
    Auxiliary,
    /// Rank by the latent prevalence plus independent Gaussian noise.
    Noisy { sd: f64 },
}

/// How the exceedance indicator of a nominated unit is observed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Measurement {
    /// Indicator `1(p_i > c)` without sampling error.
    Exact,
    /// `m_i = max(1, floor(f_m N_i))` individuals.
    Fraction { f_m: f64 },
    /// A fixed number of individuals, capped at `N_i`.
    Fixed { m: u64 },
}

impl Measurement {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Measurement::Fraction { f_m } if !(f_m > 0.0 && f_m <= 1.0) => Err(Error::domain(
                format!("measurement fraction f_m = {f_m} is outside (0, 1]"),
            )),
            Measurement::Fixed { m: 0 } => {
                Err(Error::domain("fixed measurement size must be >= 1"))
            }
            _ => Ok(()),
        }
    }

    /// Number of individuals measured in a unit with `n_individuals` people.
    pub fn sample_size(&self, n_individuals: u64) -> Option<u64> {
        match *self {
            Measurement::Exact => None,
            Measurement::Fraction { f_m } => {
                Some(((f_m * n_individuals as f64).floor() as u64).max(1))
            }
            Measurement::Fixed { m } => Some(m.min(n_individuals).max(1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    Srs,
    DustSrs,
    DustMns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig {
    pub kind: DesignKind,
    /// Number of measured units (sets).
    pub n: usize,
    /// Set size; ignored (treated as 1) for the SRS and DUST-SRS designs.
    pub k: usize,
    pub dust: DustParams,
    pub measurement: Measurement,
    pub threshold_c: f64,
    pub ranking: RankingMode,
}

impl DesignConfig {
    pub fn effective_k(&self) -> usize {
        match self.kind {
            DesignKind::DustMns => self.k,
            DesignKind::Srs | DesignKind::DustSrs => 1,
        }
    }

    pub fn validate(&self, frame: &ArealFrame) -> Result<()> {
        let k = self.effective_k();
        if self.n == 0 || k == 0 {
            return Err(Error::argument("n and k must be at least 1"));
        }
        if self.n * k > frame.len() {
            return Err(Error::argument(format!(
                "n k = {} exceeds the frame size {}",
                self.n * k,
                frame.len()
            )));
        }
        if !self.threshold_c.is_finite() {
            return Err(Error::domain("threshold must be finite"));
        }
        if let RankingMode::Noisy { sd } = self.ranking {
            if !(sd >= 0.0 && sd.is_finite()) {
                return Err(Error::domain(format!("ranking noise sd = {sd} is invalid")));
            }
        }
        self.measurement.validate()?;
        self.dust.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasuredUnit {
    pub unit: usize,
    /// Individuals measured, `None` in exact-measurement mode.
    pub m: Option<u64>,
    /// Observed successes among the `m` individuals.
    pub x: Option<u64>,
    pub indicator: bool,
}

/// Per-set exceedance indicators of one survey.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExceedanceData {
    pub indicators: Vec<bool>,
    pub r_n: usize,
    pub n: usize,
    pub k: usize,
    pub measured: Vec<MeasuredUnit>,
    pub draw: SampleDraw,
}

impl ExceedanceData {
    pub fn proportion(&self) -> f64 {
        self.r_n as f64 / self.n as f64
    }
}

fn ranking_key<R: Rng + ?Sized>(
    frame: &ArealFrame,
    i: usize,
    mode: RankingMode,
    rng: &mut R,
) -> Result<f64> {
    let u = frame.unit(i);
    let missing = |what: &str| Error::Data(format!("unit {:?} has no {what} for ranking", u.id));
    match mode {
        RankingMode::Perfect => u.p_true.ok_or_else(|| missing("prevalence")),
        RankingMode::Auxiliary => u.aux.ok_or_else(|| missing("auxiliary value")),
        RankingMode::Noisy { sd } => {
            let p = u.p_true.ok_or_else(|| missing("prevalence"))?;
            if sd == 0.0 {
                return Ok(p);
            }
            let noise = Normal::new(0.0, sd).map_err(|e| Error::domain(e.to_string()))?;
            Ok(p + noise.sample(rng))
        }
    }
}

/// Nominates the judged maximum of every set.
pub fn nominate<R: Rng + ?Sized>(
    sets: &[Vec<usize>],
    frame: &ArealFrame,
    mode: RankingMode,
    rng: &mut R,
) -> Result<Vec<usize>> {
    sets.iter()
        .map(|set| {
            if set.is_empty() {
                return Err(Error::argument("cannot nominate from an empty set"));
            }
            if set.len() == 1 {
                return Ok(set[0]);
            }
            let keys = set
                .iter()
                .map(|&i| ranking_key(frame, i, mode, rng))
                .collect::<Result<Vec<_>>>()?;
            let mut best = set[0];
            let mut best_key = keys[0];
            let mut ties = 1u32;
            for (&i, &key) in set.iter().zip(&keys).skip(1) {
                if key > best_key {
                    best = i;
                    best_key = key;
                    ties = 1;
                } else if key == best_key {
                    // reservoir choice keeps every tied maximum equally likely
                    ties += 1;
                    if rng.random_range(0..ties) == 0 {
                        best = i;
                    }
                }
            }
            Ok(best)
        })
        .collect()
}

/// Observes the exceedance indicator of one unit. The comparison with the
/// threshold is strict: `X / m > c` (or `p > c` in exact mode).
pub fn measure_unit<R: Rng + ?Sized>(
    frame: &ArealFrame,
    unit: usize,
    measurement: Measurement,
    threshold_c: f64,
    rng: &mut R,
) -> Result<MeasuredUnit> {
    let u = frame.unit(unit);
    let p = u
        .p_true
        .ok_or_else(|| Error::Data(format!("unit {:?} has no prevalence to measure", u.id)))?;
    match measurement.sample_size(u.n_individuals) {
        None => Ok(MeasuredUnit {
            unit,
            m: None,
            x: None,
            indicator: p > threshold_c,
        }),
        Some(m) => {
            let x = Binomial::new(m, p)
                .map_err(|e| Error::domain(e.to_string()))?
                .sample(rng);
            Ok(MeasuredUnit {
                unit,
                m: Some(m),
                x: Some(x),
                indicator: x as f64 / m as f64 > threshold_c,
            })
        }
    }
}

/// Runs one survey: selection, partition and nomination (MNS only), then
/// measurement of the `n` retained units.
pub fn run_design<R: Rng + ?Sized>(
    frame: &ArealFrame,
    config: &DesignConfig,
    rng: &mut R,
) -> Result<ExceedanceData> {
    config.validate(frame)?;
    let k = config.effective_k();
    let (draw, retained) = match config.kind {
        DesignKind::Srs => {
            let draw = srs_draw(frame, config.n, rng)?;
            let retained = draw.order.clone();
            (draw, retained)
        }
        DesignKind::DustSrs => {
            let draw = dust_draw(frame, config.n, &config.dust, rng)?;
            let retained = draw.order.clone();
            (draw, retained)
        }
        DesignKind::DustMns => {
            let mut draw = dust_draw(frame, config.n * k, &config.dust, rng)?;
            draw.sets = partition_sets(&draw.order, config.n, k, rng)?;
            let retained = nominate(&draw.sets, frame, config.ranking, rng)?;
            (draw, retained)
        }
    };
    let measured = retained
        .iter()
        .map(|&i| measure_unit(frame, i, config.measurement, config.threshold_c, rng))
        .collect::<Result<Vec<_>>>()?;
    let indicators: Vec<bool> = measured.iter().map(|m| m.indicator).collect();
    let r_n = indicators.iter().filter(|&&z| z).count();
    Ok(ExceedanceData {
        indicators,
        r_n,
        n: config.n,
        k,
        measured,
        draw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::ArealUnit;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frame_with(p: &[f64], aux: &[f64]) -> ArealFrame {
        let units = p
            .iter()
            .zip(aux)
            .enumerate()
            .map(|(i, (&p, &a))| ArealUnit::new(format!("u{i}"), 100.0).with_p(p).with_aux(a))
            .collect();
        ArealFrame::new(units, vec![]).unwrap()
    }

    #[test]
    fn nominate_examples() {
        let f = frame_with(&[0.1, 0.9, 0.5], &[0.9, 0.1, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            nominate(&[vec![2]], &f, RankingMode::Perfect, &mut rng).unwrap(),
            vec![2]
        );
        let set = vec![vec![0, 1, 2]];
        assert_eq!(
            nominate(&set, &f, RankingMode::Perfect, &mut rng).unwrap(),
            vec![1]
        );
        // aux reversed from p: the nominee is the set minimum of p
        assert_eq!(
            nominate(&set, &f, RankingMode::Auxiliary, &mut rng).unwrap(),
            vec![0]
        );
    }

    #[test]
    fn ties_are_broken_among_maxima_only() {
        let f = frame_with(&[0.7, 0.2, 0.7, 0.7], &[0.0; 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut counts = [0usize; 4];
        for _ in 0..3000 {
            let w = nominate(&[vec![0, 1, 2, 3]], &f, RankingMode::Perfect, &mut rng).unwrap()[0];
            counts[w] += 1;
        }
        assert_eq!(counts[1], 0);
        for &c in &[counts[0], counts[2], counts[3]] {
            assert!((c as f64 - 1000.0).abs() < 120.0, "{counts:?}");
        }
    }

    #[test]
    fn nominate_missing_field() {
        let units = vec![
            ArealUnit::new("a", 1.0).with_p(0.2),
            ArealUnit::new("b", 1.0).with_p(0.3),
        ];
        let f = ArealFrame::new(units, vec![]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = nominate(&[vec![0, 1]], &f, RankingMode::Auxiliary, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn measure_extremes() {
        let f = frame_with(&[0.0, 1.0], &[0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Measurement::Fraction { f_m: 0.5 };
        let zero = measure_unit(&f, 0, m, 0.3, &mut rng).unwrap();
        assert_eq!((zero.m, zero.x, zero.indicator), (Some(50), Some(0), false));
        let one = measure_unit(&f, 1, m, 0.99, &mut rng).unwrap();
        assert!(one.indicator);
        let exact = measure_unit(&f, 1, Measurement::Exact, 0.5, &mut rng).unwrap();
        assert!(exact.indicator && exact.m.is_none());
    }

    #[test]
    fn measurement_sizes() {
        assert_eq!(
            Measurement::Fraction { f_m: 0.0025 }.sample_size(100),
            Some(1)
        );
        assert_eq!(
            Measurement::Fraction { f_m: 0.0025 }.sample_size(40_000),
            Some(100)
        );
        assert_eq!(Measurement::Fixed { m: 50 }.sample_size(20), Some(20));
        assert_eq!(Measurement::Exact.sample_size(20), None);
        assert!(Measurement::Fraction { f_m: 0.0 }.validate().is_err());
        assert!(Measurement::Fraction { f_m: 1.5 }.validate().is_err());
    }

    #[test]
    fn indicator_is_strict_at_lattice_points() {
        // p = 1 with m = 4 gives X/m = 1 exactly; c = 1 must not count
        let f = frame_with(&[1.0], &[0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = measure_unit(&f, 0, Measurement::Fixed { m: 4 }, 1.0, &mut rng).unwrap();
        assert!(!m.indicator);
        let exact = measure_unit(&f, 0, Measurement::Exact, 1.0, &mut rng).unwrap();
        assert!(!exact.indicator);
    }

    #[test]
    fn all_exceed_gives_full_count() {
        let f = frame_with(&[0.9; 12], &[0.0; 12]);
        let cfg = DesignConfig {
            kind: DesignKind::DustMns,
            n: 4,
            k: 3,
            dust: DustParams::new(0.2).unwrap(),
            measurement: Measurement::Exact,
            threshold_c: 0.5,
            ranking: RankingMode::Perfect,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = run_design(&f, &cfg, &mut rng).unwrap();
        assert_eq!(d.r_n, 4);
        assert_eq!(d.draw.sets.len(), 4);
        assert!(d.draw.sets.iter().all(|s| s.len() == 3));
    }

    #[test]
    fn non_mns_designs_use_singletons() {
        let f = frame_with(&[0.1, 0.2, 0.3, 0.4, 0.5], &[0.0; 5]);
        for kind in [DesignKind::Srs, DesignKind::DustSrs] {
            let cfg = DesignConfig {
                kind,
                n: 3,
                k: 4,
                dust: DustParams::new(0.0).unwrap(),
                measurement: Measurement::Exact,
                threshold_c: 0.25,
                ranking: RankingMode::Perfect,
            };
            let d = run_design(&f, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            assert_eq!(d.k, 1);
            assert_eq!(d.indicators.len(), 3);
        }
    }

    #[test]
    fn config_rejects_oversized_pool() {
        let f = frame_with(&[0.1; 5], &[0.0; 5]);
        let cfg = DesignConfig {
            kind: DesignKind::DustMns,
            n: 2,
            k: 3,
            dust: DustParams::new(0.0).unwrap(),
            measurement: Measurement::Exact,
            threshold_c: 0.25,
            ranking: RankingMode::Perfect,
        };
        assert!(run_design(&f, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }
}
