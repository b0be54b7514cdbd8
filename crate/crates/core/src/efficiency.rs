//! Closed-form design analytics: the critical exceedance level θ*(k), the
//! variance gap and relative efficiency of DUST-MNS against DUST-SRS, the
//! DUST-SRS lower bound against SRS, and the table generators built on them.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{exact_bias, leading_bias};
use crate::mathkit::{reg_inc_beta, solve_root, RootSolveSpec};

const U_LOWER: f64 = 1e-12;
const U_UPPER: f64 = 1.0 - 1e-12;

/// `φ_k(u) = Σ_{j<k} u^{-j}`, which equals `k²` exactly at the crossing.
pub fn phi_k(u: f64, k: u32) -> f64 {
    let inv = 1.0 / u;
    let mut term = 1.0;
    let mut total = 0.0;
    for _ in 0..k {
        total += term;
        term *= inv;
    }
    total
}

/// Critical exceedance level below which DUST-MNS beats DUST-SRS.
pub fn theta_star(k: u32) -> Result<f64> {
    if k < 2 {
        return Err(Error::domain(format!("theta* needs k >= 2, got {k}")));
    }
    let kf = f64::from(k);
    let spec = RootSolveSpec::new(U_LOWER, U_UPPER).with_tol(1e-15);
    let u = solve_root(
        |u| {
            let mut geometric = 0.0;
            let mut power = 1.0;
            for _ in 0..k {
                geometric += power;
                power *= u;
            }
            // power is now u^k
            kf * kf * power / u - geometric
        },
        &spec,
    )?;
    Ok(1.0 - u)
}

fn check_theta(theta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::domain(format!("theta = {theta} is outside [0, 1]")));
    }
    Ok(())
}

/// Fractional variance reduction `1 - Var(MNS)/Var(DUST-SRS)`.
///
/// Takes its limits at the boundary: `1 - 1/k` at θ = 0 and `-∞` at θ = 1
/// (0 when k = 1).
pub fn delta_theta(theta: f64, k: u32) -> Result<f64> {
    check_theta(theta)?;
    if k == 0 {
        return Err(Error::argument("k must be at least 1"));
    }
    let kf = f64::from(k);
    if k == 1 {
        return Ok(0.0);
    }
    if theta == 1.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(1.0 - phi_k(1.0 - theta, k) / (kf * kf))
}

/// `k² θ (1-θ)^{k-1} / (1 - (1-θ)^k)`, with limit `k` at θ = 0 and 0 at θ = 1.
pub fn re_mns_vs_dustsrs(theta: f64, k: u32) -> Result<f64> {
    check_theta(theta)?;
    if k == 0 {
        return Err(Error::argument("k must be at least 1"));
    }
    let kf = f64::from(k);
    if theta == 0.0 {
        return Ok(kf);
    }
    let log_keep = (-theta).ln_1p();
    let q = -(kf * log_keep).exp_m1();
    Ok(kf * kf * theta * ((kf - 1.0) * log_keep).exp() / q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EfficiencyPoint {
    pub theta: f64,
    pub k: u32,
    pub re_mns_vs_dustsrs: f64,
    pub delta: f64,
    /// θ lies above θ*(k).
    pub dominated: bool,
}

impl EfficiencyPoint {
    pub fn new(theta: f64, k: u32) -> Result<Self> {
        let dominated = k >= 2 && theta > theta_star(k)?;
        Ok(Self {
            theta,
            k,
            re_mns_vs_dustsrs: re_mns_vs_dustsrs(theta, k)?,
            delta: delta_theta(theta, k)?,
            dominated,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaBoundPoint {
    pub eta0: f64,
    pub n: usize,
    pub mean_lag: f64,
    pub bound: f64,
}

/// Lower bound `1 + (n-1) η₀^{l̄}` on the efficiency of DUST-SRS over SRS.
pub fn lambda_bound(eta0: f64, n: usize, mean_lag: f64) -> Result<LambdaBoundPoint> {
    if !(0.0..1.0).contains(&eta0) {
        return Err(Error::domain(format!("eta0 = {eta0} is outside [0, 1)")));
    }
    if n == 0 {
        return Err(Error::argument("n must be at least 1"));
    }
    if !(mean_lag > 0.0 && mean_lag.is_finite()) {
        return Err(Error::domain(format!(
            "mean lag must be positive, got {mean_lag}"
        )));
    }
    let bound = 1.0 + (n as f64 - 1.0) * eta0.powf(mean_lag);
    Ok(LambdaBoundPoint {
        eta0,
        n,
        mean_lag,
        bound,
    })
}

/// Relative efficiency when `p ~ Beta(α, β)` and the threshold is `c`,
/// written in terms of `I = I_c(α, β)`.
pub fn beta_model_re(c: f64, alpha: f64, beta: f64, k: u32) -> Result<f64> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::domain(format!(
            "threshold c = {c} is outside (0, 1)"
        )));
    }
    if k == 0 {
        return Err(Error::argument("k must be at least 1"));
    }
    let below = reg_inc_beta(c, alpha, beta)?;
    let kf = f64::from(k);
    let top = below.powi(k as i32);
    if top == 1.0 {
        return Ok(kf);
    }
    if below == 0.0 {
        return Ok(0.0);
    }
    Ok(kf * kf * (1.0 - below) * below.powi(k as i32 - 1) / (1.0 - top))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    Lambda,
    Re,
    ThetaStar,
    ExactBias,
}

impl TableKind {
    pub const ALL: [TableKind; 4] = [
        TableKind::Lambda,
        TableKind::Re,
        TableKind::ThetaStar,
        TableKind::ExactBias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TableKind::Lambda => "lambda",
            TableKind::Re => "re",
            TableKind::ThetaStar => "theta_star",
            TableKind::ExactBias => "exact_bias",
        }
    }
}

/// Grid over which a table is generated.
#[derive(Debug, Clone, PartialEq)]
pub enum TableGrid {
    Lambda {
        cells: Vec<(f64, usize, f64)>,
    },
    Re {
        thetas: Vec<f64>,
        ks: Vec<u32>,
    },
    ThetaStar {
        ks: Vec<u32>,
    },
    ExactBias {
        thetas: Vec<f64>,
        ns: Vec<usize>,
        ks: Vec<u32>,
    },
}

impl TableGrid {
    /// The published grid for each table.
    pub fn standard(kind: TableKind) -> Self {
        match kind {
            TableKind::Lambda => TableGrid::Lambda {
                cells: [(10, 1.6), (20, 2.4)]
                    .iter()
                    .flat_map(|&(n, l)| [0.2, 0.5, 0.8].map(|e| (e, n, l)))
                    .collect(),
            },
            TableKind::Re => TableGrid::Re {
                thetas: vec![0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.34, 0.35, 0.40, 0.42],
                ks: vec![2, 3, 4, 5, 6, 10],
            },
            TableKind::ThetaStar => TableGrid::ThetaStar {
                ks: vec![2, 3, 4, 5, 6, 7, 8, 10],
            },
            TableKind::ExactBias => TableGrid::ExactBias {
                thetas: vec![0.10, 0.20, 0.30, 0.40],
                ns: vec![10, 20],
                ks: vec![2, 3, 4, 5],
            },
        }
    }

    pub fn kind(&self) -> TableKind {
        match self {
            TableGrid::Lambda { .. } => TableKind::Lambda,
            TableGrid::Re { .. } => TableKind::Re,
            TableGrid::ThetaStar { .. } => TableKind::ThetaStar,
            TableGrid::ExactBias { .. } => TableKind::ExactBias,
        }
    }

    fn is_empty(&self) -> bool {
        match self {
            TableGrid::Lambda { cells } => cells.is_empty(),
            TableGrid::Re { thetas, ks } => thetas.is_empty() || ks.is_empty(),
            TableGrid::ThetaStar { ks } => ks.is_empty(),
            TableGrid::ExactBias { thetas, ns, ks } => {
                thetas.is_empty() || ns.is_empty() || ks.is_empty()
            }
        }
    }
}

pub const DOMINATED_MARKER: &str = "dagger";

/// A generated table, one row per grid cell, values already formatted to
/// their printed precision.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub kind: TableKind,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Data(format!("writing {} table: {e}", self.kind.name()));
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Data(e.to_string()))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Data(e.to_string()))
    }

    /// Row whose leading cells equal `key`.
    pub fn find(&self, key: &[&str]) -> Option<&[String]> {
        self.rows
            .iter()
            .find(|row| row.iter().zip(key).all(|(a, b)| a == b))
            .map(Vec::as_slice)
    }
}

/// Formats with the shortest representation that round-trips, used for grid keys.
fn key(x: f64) -> String {
    format!("{x}")
}

pub fn make_table(grid: &TableGrid) -> Result<Table> {
    if grid.is_empty() {
        return Err(Error::argument(format!(
            "{} table grid is empty",
            grid.kind().name()
        )));
    }
    let (columns, rows) = match grid {
        TableGrid::Lambda { cells } => {
            let rows = cells
                .par_iter()
                .map(|&(eta0, n, l)| {
                    let p = lambda_bound(eta0, n, l)?;
                    Ok(vec![
                        key(eta0),
                        n.to_string(),
                        key(l),
                        format!("{:.3}", p.bound),
                    ])
                })
                .collect::<Result<Vec<_>>>()?;
            (vec!["eta0", "n", "mean_lag", "bound"], rows)
        }
        TableGrid::Re { thetas, ks } => {
            let cells: Vec<(f64, u32)> = thetas
                .iter()
                .flat_map(|&t| ks.iter().map(move |&k| (t, k)))
                .collect();
            let rows = cells
                .par_iter()
                .map(|&(theta, k)| {
                    let p = EfficiencyPoint::new(theta, k)?;
                    let flag = if p.dominated { DOMINATED_MARKER } else { "" };
                    Ok(vec![
                        key(theta),
                        k.to_string(),
                        format!("{:.3}", p.re_mns_vs_dustsrs),
                        flag.to_string(),
                    ])
                })
                .collect::<Result<Vec<_>>>()?;
            (vec!["theta", "k", "re", "flag"], rows)
        }
        TableGrid::ThetaStar { ks } => {
            let rows = ks
                .par_iter()
                .map(|&k| Ok(vec![k.to_string(), format!("{:.4}", theta_star(k)?)]))
                .collect::<Result<Vec<_>>>()?;
            (vec!["k", "theta_star"], rows)
        }
        TableGrid::ExactBias { thetas, ns, ks } => {
            let cells: Vec<(f64, usize, u32)> = thetas
                .iter()
                .flat_map(|&t| {
                    ns.iter()
                        .flat_map(move |&n| ks.iter().map(move |&k| (t, n, k)))
                })
                .collect();
            let rows = cells
                .par_iter()
                .map(|&(theta, n, k)| {
                    let b = exact_bias(n, k as usize, theta)?;
                    Ok(vec![
                        key(theta),
                        n.to_string(),
                        k.to_string(),
                        format!("{b:.4}"),
                    ])
                })
                .collect::<Result<Vec<_>>>()?;
            (vec!["theta", "n", "k", "bias"], rows)
        }
    };
    Ok(Table {
        kind: grid.kind(),
        columns,
        rows,
    })
}

/// Optional limits applied when ranking set sizes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdviceConstraints {
    /// Largest set size that can be ranked in the field.
    pub max_k: Option<u32>,
    /// Largest acceptable leading-order bias.
    pub max_abs_bias: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KAdvice {
    pub k: u32,
    pub theta_star: f64,
    /// θ_prior lies below θ*(k) and the constraints hold.
    pub feasible: bool,
    pub re: f64,
    pub leading_bias: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Advice {
    pub theta_prior: f64,
    pub n: usize,
    /// Feasible candidates, best relative efficiency first.
    pub ranked: Vec<KAdvice>,
    pub rejected: Vec<KAdvice>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

pub fn advise_k(
    theta_prior: f64,
    k_candidates: &[u32],
    n: usize,
    constraints: &AdviceConstraints,
) -> Result<Advice> {
    if !(theta_prior > 0.0 && theta_prior < 1.0) {
        return Err(Error::domain(format!(
            "prior theta {theta_prior} is outside (0, 1)"
        )));
    }
    if n == 0 {
        return Err(Error::argument("n must be at least 1"));
    }
    if k_candidates.is_empty() {
        return Err(Error::argument("no candidate set sizes"));
    }
    let mut ranked = Vec::new();
    let mut rejected = Vec::new();
    for &k in k_candidates {
        if k < 2 {
            return Err(Error::domain(format!("candidate set size {k} is below 2")));
        }
        let star = theta_star(k)?;
        let re = re_mns_vs_dustsrs(theta_prior, k)?;
        let bias = leading_bias(n, k as usize, theta_prior)?;
        let reason = if theta_prior >= star {
            Some(format!(
                "prior {theta_prior} is not below theta*({k}) = {star:.4}"
            ))
        } else if constraints.max_k.is_some_and(|m| k > m) {
            Some(format!("k = {k} exceeds the maximum set size"))
        } else if constraints.max_abs_bias.is_some_and(|b| bias.abs() > b) {
            Some(format!("leading bias {bias:.5} exceeds the limit"))
        } else {
            None
        };
        let entry = KAdvice {
            k,
            theta_star: star,
            feasible: reason.is_none(),
            re,
            leading_bias: bias,
            reason,
        };
        if entry.feasible {
            ranked.push(entry);
        } else {
            rejected.push(entry);
        }
    }
    ranked.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.k.cmp(&b.k)));
    let explanation = ranked.is_empty().then(|| {
        format!("no candidate set size is feasible at prior theta {theta_prior}; use DUST-SRS")
    });
    Ok(Advice {
        theta_prior,
        n,
        ranked,
        rejected,
        explanation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathkit::q_k;

    #[test]
    fn theta_star_residual_and_values() {
        for k in 2..=10 {
            let t = theta_star(k).unwrap();
            let kf = f64::from(k);
            assert!((phi_k(1.0 - t, k) - kf * kf).abs() < 1e-9, "k = {k}");
        }
        assert_eq!(format!("{:.4}", theta_star(2).unwrap()), "0.6667");
        assert!((theta_star(2).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(format!("{:.4}", theta_star(5).unwrap()), "0.4643");
        assert_eq!(format!("{:.4}", theta_star(10).unwrap()), "0.3215");
        assert!(theta_star(1).is_err());
    }

    #[test]
    fn delta_examples() {
        assert!((delta_theta(0.0, 4).unwrap() - 0.75).abs() < 1e-15);
        assert!((delta_theta(1e-9, 4).unwrap() - 0.75).abs() < 1e-8);
        assert!(delta_theta(theta_star(3).unwrap(), 3).unwrap().abs() < 1e-8);
        let d = delta_theta(0.2, 2).unwrap();
        assert!((d - 0.4375).abs() < 1e-12);
        assert!((1.0 / (1.0 - d) - re_mns_vs_dustsrs(0.2, 2).unwrap()).abs() < 1e-12);
        assert_ne!(delta_theta(0.2, 3).unwrap(), delta_theta(0.8, 3).unwrap());
    }

    #[test]
    fn delta_matches_variance_ratio_form() {
        for k in 1..=8 {
            for i in 1..50 {
                let t = i as f64 / 50.0;
                let kf = f64::from(k);
                let ratio =
                    q_k(t, k).unwrap() * (1.0 - t).powf(2.0 - kf) / (kf * kf * t * (1.0 - t));
                let d = delta_theta(t, k).unwrap();
                assert!(
                    (d - (1.0 - ratio)).abs() < 1e-12 * (1.0 + ratio),
                    "k = {k}, theta = {t}"
                );
            }
        }
    }

    #[test]
    fn re_examples() {
        assert_eq!(
            format!("{:.3}", re_mns_vs_dustsrs(0.05, 2).unwrap()),
            "1.949"
        );
        assert_eq!(
            format!("{:.3}", re_mns_vs_dustsrs(0.40, 5).unwrap()),
            "1.405"
        );
        assert!((re_mns_vs_dustsrs(1e-9, 4).unwrap() - 4.0).abs() < 1e-6);
        assert!((re_mns_vs_dustsrs(0.3, 1).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lambda_examples() {
        assert_eq!(
            format!("{:.3}", lambda_bound(0.2, 10, 1.6).unwrap().bound),
            "1.685"
        );
        assert_eq!(
            format!("{:.3}", lambda_bound(0.8, 20, 2.4).unwrap().bound),
            "12.122"
        );
        assert_eq!(lambda_bound(0.0, 20, 2.4).unwrap().bound, 1.0);
        assert!(lambda_bound(1.0, 20, 2.4).is_err());
        assert!(lambda_bound(0.5, 20, 0.0).is_err());
    }

    #[test]
    fn beta_model_examples() {
        let uniform = beta_model_re(0.95, 1.0, 1.0, 2).unwrap();
        assert!((uniform - re_mns_vs_dustsrs(0.05, 2).unwrap()).abs() < 1e-12);
        assert_eq!(format!("{uniform:.3}"), "1.949");
        // I_{0.3}(2,3) = 1 - (0.7^4 + 4·0.3·0.7^3) = 0.3483
        let i = 0.3483;
        let want = 4.0 * (1.0 - i) * i / (1.0 - i * i);
        let got = beta_model_re(0.3, 2.0, 3.0, 2).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        assert!((got - 1.033301).abs() < 1e-6);
        assert!((beta_model_re(0.999999, 1.0, 5.0, 3).unwrap() - 3.0).abs() < 1e-6);
        assert!(beta_model_re(0.3, -1.0, 3.0, 2).is_err());
    }

    #[test]
    fn re_table_marks_dominated_cells() {
        let t = make_table(&TableGrid::standard(TableKind::Re)).unwrap();
        assert_eq!(t.rows.len(), 60);
        assert_eq!(t.find(&["0.34", "10"]).unwrap()[3], DOMINATED_MARKER);
        assert_eq!(t.find(&["0.3", "10"]).unwrap()[3], "");
        assert_eq!(t.find(&["0.42", "6"]).unwrap()[2], "1.032");
    }

    #[test]
    fn tables_render_csv() {
        let t = make_table(&TableGrid::standard(TableKind::ThetaStar)).unwrap();
        let csv = t.to_csv_string().unwrap();
        assert!(csv.starts_with("k,theta_star\n2,0.6667\n"));
        assert!(make_table(&TableGrid::ThetaStar { ks: vec![] }).is_err());
    }

    #[test]
    fn advice_examples() {
        let a = advise_k(0.0866, &[2, 3, 4, 5], 20, &AdviceConstraints::default()).unwrap();
        let ks: Vec<u32> = a.ranked.iter().map(|r| r.k).collect();
        assert_eq!(ks, vec![5, 4, 3, 2]);
        let none = advise_k(0.6, &[4, 5], 20, &AdviceConstraints::default()).unwrap();
        assert!(none.ranked.is_empty() && none.explanation.is_some());
        let tiny = advise_k(1e-6, &[3, 7, 2, 5], 50, &AdviceConstraints::default()).unwrap();
        let ks: Vec<u32> = tiny.ranked.iter().map(|r| r.k).collect();
        assert_eq!(ks, vec![7, 5, 3, 2]);
        let capped = advise_k(
            0.0866,
            &[2, 3, 4, 5],
            20,
            &AdviceConstraints {
                max_k: Some(3),
                max_abs_bias: None,
            },
        )
        .unwrap();
        assert_eq!(capped.ranked[0].k, 3);
        assert_eq!(capped.rejected.len(), 2);
    }
}
