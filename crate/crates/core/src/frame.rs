//! The finite areal population: units, contiguity graph, graph lags and the
//! empirical diagnostics used to configure a design.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Frames up to this many units may hold a full lag matrix in memory.
pub const DEFAULT_LAG_CACHE_CEILING: usize = 5000;

const UNREACHABLE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct ArealUnit {
    pub id: String,
    /// Size measure `M_i` used for probability-proportional-to-size selection.
    pub size: f64,
    /// Latent prevalence `p_i`; known for census and simulation frames.
    pub p_true: Option<f64>,
    /// Ranking concomitant `a_i`.
    pub aux: Option<f64>,
    /// Number of individuals `N_i`.
    pub n_individuals: u64,
}

impl ArealUnit {
    /// A unit with `N_i = max(1, round(size))` and no prevalence or auxiliary value.
    pub fn new(id: impl Into<String>, size: f64) -> Self {
        Self {
            id: id.into(),
            size,
            p_true: None,
            aux: None,
            n_individuals: individuals_from_size(size),
        }
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p_true = Some(p);
        self
    }

    pub fn with_aux(mut self, aux: f64) -> Self {
        self.aux = Some(aux);
        self
    }

    pub fn with_individuals(mut self, n: u64) -> Self {
        self.n_individuals = n;
        self
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty unit id".into());
        }
        if !(self.size.is_finite() && self.size > 0.0) {
            return Err(format!(
                "unit {}: size must be positive, got {}",
                self.id, self.size
            ));
        }
        if let Some(p) = self.p_true {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("unit {}: p = {p} is outside [0, 1]", self.id));
            }
        }
        if let Some(a) = self.aux {
            if !a.is_finite() {
                return Err(format!("unit {}: aux is not finite", self.id));
            }
        }
        if self.n_individuals == 0 {
            return Err(format!("unit {}: N_i must be at least 1", self.id));
        }
        Ok(())
    }
}

fn individuals_from_size(size: f64) -> u64 {
    if size.is_finite() && size >= 1.0 {
        size.round() as u64
    } else {
        1
    }
}

/// Symmetric matrix of graph distances; `None` marks unreachable pairs (or
/// pairs beyond the cap the matrix was computed with).
#[derive(Debug, Clone, PartialEq)]
pub struct LagMatrix {
    n: usize,
    data: Vec<u32>,
}

impl LagMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> Option<u32> {
        match self.data[i * self.n + j] {
            UNREACHABLE => None,
            l => Some(l),
        }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = Option<u32>> + '_ {
        self.data[i * self.n..(i + 1) * self.n]
            .iter()
            .map(|&l| (l != UNREACHABLE).then_some(l))
    }
}

/// A validated areal population with an undirected simple contiguity graph.
#[derive(Debug, Clone)]
pub struct ArealFrame {
    units: Vec<ArealUnit>,
    index: HashMap<String, usize>,
    neighbors: Vec<Vec<usize>>,
    n_edges: usize,
    lag_cache: Option<LagMatrix>,
}

impl ArealFrame {
    /// Builds a frame from units and index-based edges. Duplicate edges are
    /// merged; self-loops, out-of-range endpoints and duplicate ids are errors.
    pub fn new<I>(units: Vec<ArealUnit>, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut index = HashMap::with_capacity(units.len());
        for (i, u) in units.iter().enumerate() {
            u.validate().map_err(Error::Integrity)?;
            if index.insert(u.id.clone(), i).is_some() {
                return Err(Error::Integrity(format!("duplicate unit id {:?}", u.id)));
            }
        }
        let n = units.len();
        let mut seen = HashSet::new();
        let mut neighbors = vec![Vec::new(); n];
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Integrity(format!(
                    "edge ({a}, {b}) references a unit outside 0..{n}"
                )));
            }
            if a == b {
                return Err(Error::Integrity(format!(
                    "self-loop on unit {:?}",
                    units[a].id
                )));
            }
            if seen.insert((a.min(b), a.max(b))) {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self {
            units,
            index,
            neighbors,
            n_edges: seen.len(),
            lag_cache: None,
        })
    }

    /// Builds a frame from edges given as unit ids.
    pub fn from_id_edges<S: AsRef<str>>(units: Vec<ArealUnit>, edges: &[(S, S)]) -> Result<Self> {
        let lookup: HashMap<&str, usize> = units
            .iter()
            .enumerate()
            .map(|(i, u)| (u.id.as_str(), i))
            .collect();
        let resolve = |id: &str| {
            lookup
                .get(id)
                .copied()
                .ok_or_else(|| Error::Integrity(format!("edge references unknown unit id {id:?}")))
        };
        let idx_edges = edges
            .iter()
            .map(|(a, b)| Ok((resolve(a.as_ref())?, resolve(b.as_ref())?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(units, idx_edges)
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn units(&self) -> &[ArealUnit] {
        &self.units
    }

    pub fn unit(&self, i: usize) -> &ArealUnit {
        &self.units[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    /// Undirected edges as `(i, j)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, nb)| nb.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    /// Latent prevalences of all units; errors if any is missing.
    pub fn p_values(&self) -> Result<Vec<f64>> {
        self.units
            .iter()
            .map(|u| {
                u.p_true
                    .ok_or_else(|| Error::Data(format!("unit {:?} has no prevalence p", u.id)))
            })
            .collect()
    }

    /// Auxiliary values of all units; errors if any is missing.
    pub fn aux_values(&self) -> Result<Vec<f64>> {
        self.units
            .iter()
            .map(|u| {
                u.aux
                    .ok_or_else(|| Error::Data(format!("unit {:?} has no auxiliary value", u.id)))
            })
            .collect()
    }

    /// Sub-frame induced by the units satisfying `keep` (edges to dropped units
    /// are removed). Used to drop units with missing values before a study.
    pub fn retain<F>(&self, mut keep: F) -> Result<Self>
    where
        F: FnMut(&ArealUnit) -> bool,
    {
        let mut remap = vec![usize::MAX; self.len()];
        let mut units = Vec::new();
        for (i, u) in self.units.iter().enumerate() {
            if keep(u) {
                remap[i] = units.len();
                units.push(u.clone());
            }
        }
        let edges: Vec<_> = self
            .edges()
            .filter(|&(a, b)| remap[a] != usize::MAX && remap[b] != usize::MAX)
            .map(|(a, b)| (remap[a], remap[b]))
            .collect();
        Self::new(units, edges)
    }

    /// Visits every unit within `max_lag` of `source` (including `source` at
    /// lag 0) in breadth-first order.
    pub fn visit_within<F>(&self, source: usize, max_lag: Option<u32>, mut visit: F)
    where
        F: FnMut(usize, u32),
    {
        let cap = max_lag.unwrap_or(u32::MAX - 1);
        let mut dist = vec![UNREACHABLE; self.len()];
        let mut queue = VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let d = dist[u];
            visit(u, d);
            if d >= cap {
                continue;
            }
            for &v in &self.neighbors[u] {
                if dist[v] == UNREACHABLE {
                    dist[v] = d + 1;
                    queue.push_back(v);
                }
            }
        }
    }

    /// Breadth-first lags from `source`; `None` for unreachable units or units
    /// farther than `max_lag`.
    pub fn lags_from(&self, source: usize, max_lag: Option<u32>) -> Vec<Option<u32>> {
        if let (Some(cache), None) = (&self.lag_cache, max_lag) {
            return cache.row(source).collect();
        }
        let mut out = vec![None; self.len()];
        self.visit_within(source, max_lag, |j, l| out[j] = Some(l));
        out
    }

    /// Graph lag between two units, from the cache when present.
    pub fn lag(&self, i: usize, j: usize) -> Option<u32> {
        match &self.lag_cache {
            Some(cache) => cache.get(i, j),
            None => self.lags_from(i, None)[j],
        }
    }

    /// Computes and stores the full lag matrix if the frame has at most
    /// `ceiling` units. Returns whether the cache is now present.
    pub fn cache_lags(&mut self, ceiling: usize) -> bool {
        if self.lag_cache.is_none() && self.len() <= ceiling {
            self.lag_cache = Some(compute_lags(self, None));
        }
        self.lag_cache.is_some()
    }

    pub fn lag_cache(&self) -> Option<&LagMatrix> {
        self.lag_cache.as_ref()
    }
}

/// All-pairs breadth-first graph distances, optionally capped at `max_lag`.
/// Sources are processed in parallel; the result does not depend on the
/// number of worker threads.
pub fn compute_lags(frame: &ArealFrame, max_lag: Option<u32>) -> LagMatrix {
    let n = frame.len();
    let mut data = vec![UNREACHABLE; n * n];
    data.par_chunks_mut(n.max(1))
        .enumerate()
        .for_each(|(src, row)| {
            frame.visit_within(src, max_lag, |j, l| row[j] = l);
        });
    LagMatrix { n, data }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads a frame from a population CSV (`unit_id,size,p,aux`) and an
/// adjacency CSV (`id_a,id_b`).
pub fn load_frame(population_file: &Path, adjacency_file: &Path) -> Result<ArealFrame> {
    let units = read_population(open(population_file)?, population_file)?;
    let edges = read_adjacency(open(adjacency_file)?, adjacency_file)?;
    frame_from_records(units, edges, adjacency_file)
}

fn frame_from_records(
    units: Vec<ArealUnit>,
    edges: Vec<(u64, String, String)>,
    adjacency_label: &Path,
) -> Result<ArealFrame> {
    let mut index = HashMap::with_capacity(units.len());
    for (i, u) in units.iter().enumerate() {
        if index.insert(u.id.as_str(), i).is_some() {
            return Err(Error::Integrity(format!("duplicate unit id {:?}", u.id)));
        }
    }
    let mut idx_edges = Vec::with_capacity(edges.len());
    for (line, a, b) in &edges {
        let lookup = |id: &str| {
            index.get(id).copied().ok_or_else(|| {
                Error::Integrity(format!(
                    "{}:{line}: edge references unknown unit id {id:?}",
                    adjacency_label.display()
                ))
            })
        };
        idx_edges.push((lookup(a)?, lookup(b)?));
    }
    ArealFrame::new(units, idx_edges)
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, want: &[&str], path: &Path) -> Result<()> {
    let header = rdr.headers().map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: e.to_string(),
    })?;
    let got: Vec<&str> = header.iter().collect();
    if got != want {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!(
                "expected header {:?}, found {:?}",
                want.join(","),
                got.join(",")
            ),
        });
    }
    Ok(())
}

fn record_line(rec: &csv::StringRecord, fallback: u64) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(fallback)
}

/// Parses population rows. Rows without an id or a positive size are
/// rejected with their line number; `p` and `aux` may be empty.
pub fn read_population<R: Read>(reader: R, path: &Path) -> Result<Vec<ArealUnit>> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &["unit_id", "size", "p", "aux"], path)?;
    let mut units = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let fallback = row as u64 + 2;
        let parse_err = |line: u64, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(fallback);
            parse_err(line, e.to_string())
        })?;
        let line = record_line(&rec, fallback);
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(parse_err(line, "missing unit_id".into()));
        }
        let size: f64 = rec[1]
            .parse()
            .map_err(|_| parse_err(line, format!("invalid size {:?}", &rec[1])))?;
        if !(size.is_finite() && size > 0.0) {
            return Err(parse_err(
                line,
                format!("size must be positive, got {size}"),
            ));
        }
        let optional = |field: &str, name: &str| -> Result<Option<f64>> {
            if field.is_empty() {
                return Ok(None);
            }
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("invalid {name} {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("{name} must be finite")));
            }
            Ok(Some(v))
        };
        let p = optional(&rec[2], "p")?;
        if let Some(p) = p {
            if !(0.0..=1.0).contains(&p) {
                return Err(parse_err(line, format!("p = {p} is outside [0, 1]")));
            }
        }
        let aux = optional(&rec[3], "aux")?;
        let mut unit = ArealUnit::new(id, size);
        unit.p_true = p;
        unit.aux = aux;
        units.push(unit);
    }
    Ok(units)
}

/// Parses adjacency rows into `(line, id_a, id_b)`. Self-loops are rejected.
pub fn read_adjacency<R: Read>(reader: R, path: &Path) -> Result<Vec<(u64, String, String)>> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &["id_a", "id_b"], path)?;
    let mut edges = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let fallback = row as u64 + 2;
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line()).unwrap_or(fallback),
            message: e.to_string(),
        })?;
        let line = record_line(&rec, fallback);
        let (a, b) = (rec[0].to_string(), rec[1].to_string());
        if a.is_empty() || b.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: "missing unit id in edge".into(),
            });
        }
        if a == b {
            return Err(Error::Integrity(format!(
                "{}:{line}: self-loop on unit {a:?}",
                path.display()
            )));
        }
        edges.push((line, a, b));
    }
    Ok(edges)
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::argument("values must be finite"));
    }
    Ok(())
}

/// Lower empirical order statistic `x_(⌈q n⌉)`.
pub fn empirical_quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::argument("quantile of an empty sample"));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::domain(format!(
            "quantile level {q} is outside (0, 1)"
        )));
    }
    check_finite(values)?;
    let n = values.len();
    // q n is nudged down so that e.g. 0.9 * 10 lands on rank 9, not 10.
    let rank = ((q * n as f64) * (1.0 - 4.0 * f64::EPSILON)).ceil() as usize;
    let rank = rank.clamp(1, n);
    let mut sorted = values.to_vec();
    let (_, nth, _) = sorted.select_nth_unstable_by(rank - 1, f64::total_cmp);
    Ok(*nth)
}

/// Fraction of values strictly above `c`.
pub fn census_theta(values: &[f64], c: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|&&v| v > c).count() as f64 / values.len() as f64
}

/// Global Moran's I with binary, unstandardised contiguity weights.
pub fn morans_i(frame: &ArealFrame, values: &[f64]) -> Result<f64> {
    if values.len() != frame.len() {
        return Err(Error::argument(format!(
            "{} values for {} units",
            values.len(),
            frame.len()
        )));
    }
    check_finite(values)?;
    if frame.n_edges() == 0 {
        return Err(Error::degenerate(
            "Moran's I is undefined on an edgeless graph",
        ));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    if ss <= 0.0 || values.iter().all(|&v| v == values[0]) {
        return Err(Error::degenerate(
            "Moran's I is undefined for a constant field",
        ));
    }
    // each undirected edge contributes w_ij and w_ji
    let cross: f64 = frame
        .edges()
        .map(|(i, j)| 2.0 * (values[i] - mean) * (values[j] - mean))
        .sum();
    let w = 2.0 * frame.n_edges() as f64;
    Ok(n / w * cross / ss)
}

/// Average finite off-diagonal graph lag over unordered pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanLag {
    pub mean: f64,
    pub finite_pairs: u64,
    pub infinite_pairs: u64,
}

pub fn mean_pairwise_lag(frame: &ArealFrame) -> Result<MeanLag> {
    let n = frame.len();
    let per_source: Vec<(u64, u64)> = (0..n)
        .into_par_iter()
        .map(|src| {
            let (mut sum, mut count) = (0u64, 0u64);
            let visit = |j: usize, l: u32| {
                if j > src {
                    sum += u64::from(l);
                    count += 1;
                }
            };
            match frame.lag_cache() {
                Some(cache) => {
                    let mut visit = visit;
                    for (j, l) in cache.row(src).enumerate() {
                        if let Some(l) = l {
                            visit(j, l);
                        }
                    }
                }
                None => frame.visit_within(src, None, visit),
            }
            (sum, count)
        })
        .collect();
    let (sum, finite) = per_source
        .iter()
        .fold((0u64, 0u64), |(s, c), &(s2, c2)| (s + s2, c + c2));
    let total = (n as u64) * (n as u64).saturating_sub(1) / 2;
    if finite == 0 {
        return Err(Error::degenerate("no pair of units is connected"));
    }
    Ok(MeanLag {
        mean: sum as f64 / finite as f64,
        finite_pairs: finite,
        infinite_pairs: total - finite,
    })
}

/// Kendall's tau-b (tie corrected).
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::argument(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::argument("Kendall's tau needs at least two pairs"));
    }
    check_finite(x)?;
    check_finite(y)?;
    let n = x.len();
    let (concordant, discordant, tie_x, tie_y) = (0..n)
        .into_par_iter()
        .map(|i| {
            let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
            for j in (i + 1)..n {
                let dx = x[i] - x[j];
                let dy = y[i] - y[j];
                if dx == 0.0 {
                    tx += 1;
                }
                if dy == 0.0 {
                    ty += 1;
                }
                let s = dx * dy;
                if s > 0.0 {
                    c += 1;
                } else if s < 0.0 {
                    d += 1;
                }
            }
            (c, d, tx, ty)
        })
        .reduce(
            || (0, 0, 0, 0),
            |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2, a.3 + b.3),
        );
    let pairs = (n * (n - 1) / 2) as i64;
    if tie_x == pairs || tie_y == pairs {
        return Err(Error::degenerate(
            "Kendall's tau is undefined for an all-tied vector",
        ));
    }
    let denom = (((pairs - tie_x) as f64) * ((pairs - tie_y) as f64)).sqrt();
    Ok(((concordant - discordant) as f64 / denom).clamp(-1.0, 1.0))
}

/// Frame summary: threshold, census exceedance, spatial and ranking structure.
///
/// Statistics that cannot be computed are `None` with the reason recorded in
/// the matching `*_note` field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameDiagnostics {
    pub n_units: usize,
    pub threshold_c: f64,
    pub census_theta: f64,
    pub morans_i: Option<f64>,
    pub kendall_tau: Option<f64>,
    pub mean_lag: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub morans_i_note: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kendall_tau_note: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_lag_note: Option<String>,
}

/// Computes [`FrameDiagnostics`] with the threshold set at the `quantile`
/// level of the latent prevalences.
pub fn diagnostics(frame: &ArealFrame, quantile: f64) -> Result<FrameDiagnostics> {
    let p = frame.p_values()?;
    let threshold_c = empirical_quantile(&p, quantile)?;
    diagnostics_at(frame, &p, threshold_c)
}

/// Same as [`diagnostics`] with a fixed threshold.
pub fn diagnostics_with_threshold(frame: &ArealFrame, c: f64) -> Result<FrameDiagnostics> {
    let p = frame.p_values()?;
    diagnostics_at(frame, &p, c)
}

fn diagnostics_at(frame: &ArealFrame, p: &[f64], threshold_c: f64) -> Result<FrameDiagnostics> {
    fn split(r: Result<f64>) -> (Option<f64>, Option<String>) {
        match r {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e.to_string())),
        }
    }
    let (morans_i, morans_i_note) = split(morans_i(frame, p));
    let (kendall_tau, kendall_tau_note) =
        split(frame.aux_values().and_then(|a| kendall_tau(p, &a)));
    let (mean_lag, mean_lag_note) = split(mean_pairwise_lag(frame).map(|m| m.mean));
    Ok(FrameDiagnostics {
        n_units: frame.len(),
        threshold_c,
        census_theta: census_theta(p, threshold_c),
        morans_i,
        kendall_tau,
        mean_lag,
        morans_i_note,
        kendall_tau_note,
        mean_lag_note,
    })
}

/// Rook-contiguity lattice edges for a `rows x cols` grid in row-major order.
pub fn lattice_edges(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::with_capacity(2 * rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if c + 1 < cols {
                edges.push((i, i + 1));
            }
            if r + 1 < rows {
                edges.push((i, i + cols));
            }
        }
    }
    edges
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_frame(n: usize) -> ArealFrame {
        let units = (0..n)
            .map(|i| ArealUnit::new(format!("u{i}"), 10.0))
            .collect();
        ArealFrame::new(units, (1..n).map(|i| (i - 1, i))).unwrap()
    }

    #[test]
    fn path_lags() {
        let f = path_frame(3);
        let lags = compute_lags(&f, None);
        assert_eq!(lags.get(0, 1), Some(1));
        assert_eq!(lags.get(0, 2), Some(2));
        assert_eq!(lags.get(2, 0), Some(2));
        for i in 0..3 {
            assert_eq!(lags.get(i, i), Some(0));
        }
        let capped = compute_lags(&f, Some(1));
        assert_eq!(capped.get(0, 2), None);
    }

    #[test]
    fn disconnected_components_have_infinite_lag() {
        let units = (0..4)
            .map(|i| ArealUnit::new(format!("u{i}"), 1.0))
            .collect();
        let f = ArealFrame::new(units, vec![(0, 1), (2, 3)]).unwrap();
        let lags = compute_lags(&f, None);
        assert_eq!(lags.get(0, 2), None);
        assert_eq!(lags.get(1, 3), None);
        assert_eq!(lags.get(0, 1), Some(1));
        let m = mean_pairwise_lag(&f).unwrap();
        assert_eq!(m.finite_pairs, 2);
        assert_eq!(m.infinite_pairs, 4);
        assert_eq!(m.mean, 1.0);
    }

    #[test]
    fn frame_rejects_bad_structure() {
        let units = vec![ArealUnit::new("a", 1.0), ArealUnit::new("a", 2.0)];
        assert!(matches!(
            ArealFrame::new(units, vec![]),
            Err(Error::Integrity(_))
        ));
        let units = vec![ArealUnit::new("a", 1.0), ArealUnit::new("b", 2.0)];
        assert!(matches!(
            ArealFrame::new(units.clone(), vec![(0, 0)]),
            Err(Error::Integrity(_))
        ));
        assert!(matches!(
            ArealFrame::from_id_edges(units.clone(), &[("a", "zz")]),
            Err(Error::Integrity(_))
        ));
        let zero = vec![ArealUnit::new("a", 0.0)];
        assert!(matches!(
            ArealFrame::new(zero, vec![]),
            Err(Error::Integrity(_))
        ));
        let f = ArealFrame::new(units, vec![(0, 1), (1, 0), (0, 1)]).unwrap();
        assert_eq!(f.n_edges(), 1);
    }

    #[test]
    fn quantile_convention() {
        assert_eq!(
            empirical_quantile(&[5.0, 1.0, 3.0, 2.0, 4.0], 0.5).unwrap(),
            3.0
        );
        assert_eq!(empirical_quantile(&[1.0, 2.0, 3.0, 4.0], 0.9).unwrap(), 4.0);
        assert_eq!(empirical_quantile(&[7.5; 9], 0.1).unwrap(), 7.5);
        assert_eq!(empirical_quantile(&[7.5; 9], 0.99).unwrap(), 7.5);
        let ten: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(empirical_quantile(&ten, 0.9).unwrap(), 9.0);
        assert_eq!(empirical_quantile(&ten, 0.1).unwrap(), 1.0);
        assert!(empirical_quantile(&[], 0.5).is_err());
        assert!(empirical_quantile(&[1.0], 1.0).is_err());
    }

    #[test]
    fn census_theta_is_strict() {
        let p = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(census_theta(&p, 0.3), 0.25);
        assert_eq!(census_theta(&p, 0.29), 0.5);
    }

    #[test]
    fn morans_i_two_units() {
        let f = path_frame(2);
        assert!((morans_i(&f, &[0.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn morans_i_checkerboard_is_negative() {
        let units = (0..16)
            .map(|i| ArealUnit::new(format!("u{i}"), 1.0))
            .collect();
        let f = ArealFrame::new(units, lattice_edges(4, 4)).unwrap();
        let x: Vec<f64> = (0..16).map(|i| ((i / 4 + i % 4) % 2) as f64).collect();
        let i = morans_i(&f, &x).unwrap();
        assert!(i < 0.0);
        assert!((i + 1.0).abs() < 1e-12);
    }

    #[test]
    fn morans_i_degenerate_inputs() {
        let f = path_frame(3);
        assert!(matches!(morans_i(&f, &[2.0; 3]), Err(Error::Degenerate(_))));
        let units = (0..3)
            .map(|i| ArealUnit::new(format!("u{i}"), 1.0))
            .collect();
        let edgeless = ArealFrame::new(units, vec![]).unwrap();
        assert!(matches!(
            morans_i(&edgeless, &[1.0, 2.0, 3.0]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn mean_lag_examples() {
        let m = mean_pairwise_lag(&path_frame(3)).unwrap();
        assert!((m.mean - 4.0 / 3.0).abs() < 1e-15);
        let units = (0..5)
            .map(|i| ArealUnit::new(format!("u{i}"), 1.0))
            .collect();
        let complete: Vec<_> = (0..5)
            .flat_map(|i| ((i + 1)..5).map(move |j| (i, j)))
            .collect();
        let f = ArealFrame::new(units, complete).unwrap();
        assert_eq!(mean_pairwise_lag(&f).unwrap().mean, 1.0);
        let units = (0..2)
            .map(|i| ArealUnit::new(format!("u{i}"), 1.0))
            .collect();
        let isolated = ArealFrame::new(units, vec![]).unwrap();
        assert!(matches!(
            mean_pairwise_lag(&isolated),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn mean_lag_uses_cache_consistently() {
        let mut f = path_frame(7);
        let direct = mean_pairwise_lag(&f).unwrap();
        assert!(f.cache_lags(DEFAULT_LAG_CACHE_CEILING));
        assert_eq!(mean_pairwise_lag(&f).unwrap(), direct);
        assert_eq!(f.lag(0, 6), Some(6));
        let mut big = path_frame(7);
        assert!(!big.cache_lags(3));
    }

    #[test]
    fn kendall_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(kendall_tau(&x, &x).unwrap(), 1.0);
        assert_eq!(kendall_tau(&x, &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
        let t = kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
        assert!((t - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            kendall_tau(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::Degenerate(_))
        ));
        assert!(kendall_tau(&[1.0], &[1.0]).is_err());
        assert!(kendall_tau(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn kendall_tau_b_with_ties() {
        // x ties on one pair; by hand: C = 4, D = 1, n0 = 6, n1 = 1, n2 = 0
        let x = [1.0, 1.0, 2.0, 3.0];
        let y = [1.0, 2.0, 4.0, 3.0];
        let t = kendall_tau(&x, &y).unwrap();
        assert!((t - 3.0 / (5.0f64 * 6.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn retain_induces_subgraph() {
        let f = path_frame(4);
        let sub = f.retain(|u| u.id != "u1").unwrap();
        assert_eq!(sub.len(), 3);
        assert_eq!(sub.n_edges(), 1);
        assert_eq!(sub.index_of("u2"), Some(1));
    }
}
