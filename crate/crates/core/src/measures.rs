//! Probability densities on a grid: quadrature, pushforward, sampling, 1-D W2.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SbbError};
use crate::grid::{Grid, GridFunction};

pub const MASS_TOL: f64 = 1e-10;
const QUANTILE_POINTS: usize = 8192;

/// Density against Lebesgue measure with trapezoid mass one.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure {
    grid: Grid,
    density: Vec<f64>,
}

impl GridMeasure {
    pub fn new(grid: Grid, density: Vec<f64>) -> Result<Self> {
        check_density(&grid, &density)?;
        let mass = trapezoid_mass(&grid, &density);
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(SbbError::Structural(format!("measure has mass {mass}, expected 1")));
        }
        Ok(Self { grid, density })
    }

    /// Normalizes a nonnegative density to unit mass.
    pub fn from_unnormalized(grid: Grid, mut density: Vec<f64>) -> Result<Self> {
        check_density(&grid, &density)?;
        let mass = trapezoid_mass(&grid, &density);
        if mass <= 0.0 {
            return Err(SbbError::Degenerate("density has zero mass".into()));
        }
        density.iter_mut().for_each(|d| *d /= mass);
        Ok(Self { grid, density })
    }

    /// `N(mean, var)` sampled at the nodes and renormalized.
    pub fn gaussian(grid: Grid, mean: f64, var: f64) -> Result<Self> {
        if !(var > 0.0) {
            return Err(SbbError::InvalidConfig(format!("variance must be positive, got {var}")));
        }
        let density = grid.nodes().iter().map(|&x| gaussian_pdf(x - mean, var)).collect();
        Self::from_unnormalized(grid, density)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// Trapezoid masses `w_i * rho_i`.
    pub fn masses(&self) -> Vec<f64> {
        self.grid.weights().iter().zip(&self.density).map(|(w, d)| w * d).collect()
    }

    pub fn mass(&self) -> f64 {
        trapezoid_mass(&self.grid, &self.density)
    }

    pub fn mean(&self) -> f64 {
        self.moment(|x| x)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.moment(|x| (x - m) * (x - m))
    }

    fn moment(&self, f: impl Fn(f64) -> f64) -> f64 {
        let w = self.grid.weights();
        (0..self.grid.n()).map(|i| w[i] * self.density[i] * f(self.grid.node(i))).sum()
    }

    /// Density interpolated piecewise-linearly, zero outside the grid.
    pub fn density_at(&self, x: f64) -> f64 {
        if !self.grid.contains(x) {
            return 0.0;
        }
        let (i, t) = self.grid.locate(x);
        self.density[i] + t * (self.density[i + 1] - self.density[i])
    }

    /// Trapezoid cumulative masses at the nodes, scaled so the last entry is one.
    pub fn node_cdf(&self) -> Vec<f64> {
        let h = self.grid.h();
        let mut c = Vec::with_capacity(self.grid.n());
        let mut acc = 0.0;
        c.push(0.0);
        for i in 1..self.grid.n() {
            acc += 0.5 * h * (self.density[i - 1] + self.density[i]);
            c.push(acc);
        }
        c.iter_mut().for_each(|v| *v /= acc);
        c
    }

    /// Inverse of the piecewise-linear interpolant of [`Self::node_cdf`].
    pub fn quantile(&self, p: f64) -> f64 {
        quantile_from_cdf(&self.grid, &self.node_cdf(), p)
    }

    /// CDF of the measure viewed as constant on the dual cells.
    pub fn cell_cdf(&self) -> CellCdf {
        CellCdf::new(self)
    }
}

pub(crate) fn quantile_from_cdf(grid: &Grid, cdf: &[f64], p: f64) -> f64 {
    let n = grid.n();
    if p <= 0.0 {
        let first = cdf.iter().position(|&c| c > 0.0).unwrap_or(1);
        return grid.node(first - 1);
    }
    if p >= 1.0 {
        let last = cdf.iter().position(|&c| c >= 1.0).unwrap_or(n - 1);
        return grid.node(last);
    }
    let j = cdf.partition_point(|&c| c < p).clamp(1, n - 1);
    let (c0, c1) = (cdf[j - 1], cdf[j]);
    let t = if c1 > c0 { (p - c0) / (c1 - c0) } else { 0.0 };
    grid.node(j - 1) + t * grid.h()
}

/// Piecewise-linear CDF of a measure whose density is constant on each dual cell.
#[derive(Debug, Clone)]
pub struct CellCdf {
    edges: Vec<f64>,
    cum: Vec<f64>,
    dens: Vec<f64>,
}

impl CellCdf {
    fn new(mu: &GridMeasure) -> Self {
        let edges = mu.grid.cell_edges();
        let mut cum = Vec::with_capacity(edges.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for (i, d) in mu.density.iter().enumerate() {
            acc += d * (edges[i + 1] - edges[i]);
            cum.push(acc);
        }
        Self { edges, cum, dens: mu.density.clone() }
    }

    pub fn eval(&self, z: f64) -> f64 {
        let n = self.dens.len();
        if z <= self.edges[0] {
            return 0.0;
        }
        if z >= self.edges[n] {
            return self.cum[n];
        }
        let i = self.edges.partition_point(|&e| e <= z) - 1;
        self.cum[i] + self.dens[i] * (z - self.edges[i])
    }
}

fn check_density(grid: &Grid, density: &[f64]) -> Result<()> {
    if density.len() != grid.n() {
        return Err(SbbError::Structural(format!(
            "expected {} densities, got {}",
            grid.n(),
            density.len()
        )));
    }
    if let Some(i) = density.iter().position(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(SbbError::Structural(format!("invalid density {} at node {i}", density[i])));
    }
    Ok(())
}

fn trapezoid_mass(grid: &Grid, density: &[f64]) -> f64 {
    grid.weights().iter().zip(density).map(|(w, d)| w * d).sum()
}

pub fn gaussian_pdf(z: f64, var: f64) -> f64 {
    (-0.5 * z * z / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Trapezoid value of `∫ f dmu`.
pub fn quadrature(f: &GridFunction, mu: &GridMeasure) -> Result<f64> {
    f.grid().check_same(&mu.grid)?;
    let w = mu.grid.weights();
    Ok((0..w.len()).map(|i| w[i] * mu.density[i] * f.value(i)).sum())
}

/// Result of a pushforward together with the fraction of mass mapped off the target grid.
#[derive(Debug, Clone)]
pub struct Pushforward {
    pub measure: GridMeasure,
    pub lost_fraction: f64,
}

/// Adjacent decreases of a map below this many cell widths (scaled by `1 + |value|`) count
/// as ties and are resolved by keeping the left value.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// `map # mu` deposited on `target`. See [`pushforward_detailed`].
pub fn pushforward(map: &GridFunction, mu: &GridMeasure, target: &Grid) -> Result<GridMeasure> {
    pushforward_detailed(map, mu, target).map(|p| p.measure)
}

/// Conservative remap `map # mu` onto the dual cells of `target`.
///
/// The pushed CDF at each target cell edge `e` is `G(map⁻¹(e))`, where `G` is a monotone
/// cubic Hermite interpolant of the source cell CDF (slopes: the density at the source cell
/// edges) and `map⁻¹` inverts the piecewise-linear interpolant of the nodal map values.
/// Cell masses are exact for the identity; a piecewise-constant `G` would leave a
/// first-order moiré pattern for maps that stretch cells by non-integer factors.
pub fn pushforward_detailed(map: &GridFunction, mu: &GridMeasure, target: &Grid) -> Result<Pushforward> {
    map.grid().check_same(&mu.grid)?;
    let g = mu.grid;
    let n = g.n();
    let mut y = map.values().to_vec();
    for i in 1..n {
        let drop = y[i - 1] - y[i];
        if drop > 0.0 {
            // Ties are judged relative to the map's magnitude: maps obtained by differencing
            // large potentials carry rounding proportional to their values.
            let tol = TIE_TOLERANCE * g.h() * (1.0 + y[i - 1].abs());
            let on_support = mu.density[i - 1] > 0.0 || mu.density[i] > 0.0;
            if on_support && drop > tol {
                return Err(SbbError::NonMonotone { x: g.node(i), decrease: drop });
            }
            y[i] = y[i - 1];
        }
    }
    let cdf = HermiteCdf::new(mu);
    let total = cdf.total();
    let nodes = g.nodes();
    // source mass mapped into (-inf, z]
    let pushed = |z: f64| -> f64 {
        let count = y.partition_point(|&v| v <= z);
        if count == 0 {
            return 0.0;
        }
        if count == n {
            return total;
        }
        let i = count - 1;
        let t = (z - y[i]) / (y[i + 1] - y[i]);
        cdf.eval(nodes[i] + t * (nodes[i + 1] - nodes[i]))
    };
    let edges = target.cell_edges();
    let at_edges: Vec<f64> = edges.iter().map(|&e| pushed(e)).collect();
    let tn = target.n();
    let kept = at_edges[tn] - at_edges[0];
    let lost_fraction = ((total - kept) / total).max(0.0);
    if kept <= 1e-12 * total {
        return Err(SbbError::LostMass { lost_fraction });
    }
    let density = (0..tn)
        .map(|k| ((at_edges[k + 1] - at_edges[k]) / (edges[k + 1] - edges[k])).max(0.0))
        .collect();
    Ok(Pushforward { measure: GridMeasure::from_unnormalized(*target, density)?, lost_fraction })
}

/// Monotone (Fritsch–Carlson limited) cubic Hermite interpolant of the dual-cell CDF.
#[derive(Debug, Clone)]
pub struct HermiteCdf {
    edges: Vec<f64>,
    cum: Vec<f64>,
    /// Per cell: limited left and right slopes.
    slopes: Vec<(f64, f64)>,
}

impl HermiteCdf {
    pub fn new(mu: &GridMeasure) -> Self {
        let edges = mu.grid.cell_edges();
        let d = &mu.density;
        let n = d.len();
        let mut cum = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        cum.push(0.0);
        for i in 0..n {
            acc += d[i] * (edges[i + 1] - edges[i]);
            cum.push(acc);
        }
        let edge_density = |i: usize| match i {
            0 => d[0],
            i if i == n => d[n - 1],
            i => 0.5 * (d[i - 1] + d[i]),
        };
        let slopes = (0..n)
            .map(|i| {
                let sec = d[i];
                if sec <= 0.0 {
                    return (0.0, 0.0);
                }
                let (a, b) = (edge_density(i) / sec, edge_density(i + 1) / sec);
                let r = (a * a + b * b).sqrt();
                let scale = if r > 3.0 { 3.0 / r } else { 1.0 };
                (a * scale * sec, b * scale * sec)
            })
            .collect();
        Self { edges, cum, slopes }
    }

    pub fn total(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn eval(&self, z: f64) -> f64 {
        let n = self.slopes.len();
        if z <= self.edges[0] {
            return 0.0;
        }
        if z >= self.edges[n] {
            return self.cum[n];
        }
        let i = self.edges.partition_point(|&e| e <= z) - 1;
        let w = self.edges[i + 1] - self.edges[i];
        let t = (z - self.edges[i]) / w;
        let (t2, t3) = (t * t, t * t * t);
        let (s0, s1) = self.slopes[i];
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.cum[i]
            + (t3 - 2.0 * t2 + t) * w * s0
            + (-2.0 * t3 + 3.0 * t2) * self.cum[i + 1]
            + (t3 - t2) * w * s1
    }
}

/// 1-D quadratic Wasserstein distance from quantile functions on a midpoint p-grid.
pub fn wasserstein2(mu: &GridMeasure, nu: &GridMeasure) -> f64 {
    let (cm, cn) = (mu.node_cdf(), nu.node_cdf());
    let k = QUANTILE_POINTS;
    let s: f64 = (0..k)
        .map(|i| {
            let p = (i as f64 + 0.5) / k as f64;
            let d = quantile_from_cdf(&mu.grid, &cm, p) - quantile_from_cdf(&nu.grid, &cn, p);
            d * d
        })
        .sum();
    (s / k as f64).sqrt()
}

/// W2 between an empirical sample and a grid measure.
pub fn wasserstein2_empirical(samples: &[f64], mu: &GridMeasure) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let cdf = mu.node_cdf();
    let k = xs.len() as f64;
    let s: f64 = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let q = quantile_from_cdf(&mu.grid, &cdf, (i as f64 + 0.5) / k);
            (x - q) * (x - q)
        })
        .sum();
    (s / k).sqrt()
}

/// Kolmogorov–Smirnov distance between an empirical sample and a grid measure.
pub fn ks_empirical(samples: &[f64], mu: &GridMeasure) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let cdf = GridFunction::new(mu.grid, mu.node_cdf()).expect("finite cdf");
    let k = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf.eval(x).clamp(0.0, 1.0);
            (f - i as f64 / k).abs().max(((i + 1) as f64 / k - f).abs())
        })
        .fold(0.0, f64::max)
}

/// I.i.d. draws by inverse CDF, deterministic in `seed`.
pub fn sample(mu: &GridMeasure, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cdf = mu.node_cdf();
    (0..count).map(|_| quantile_from_cdf(&mu.grid, &cdf, rng.gen::<f64>())).collect()
}

/// Marginal description as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum MarginalSpec {
    Gaussian { mean: f64, var: f64 },
    Csv { path: PathBuf },
}

/// Density samples read from a `x,density` file.
#[derive(Debug, Clone)]
pub struct TabulatedDensity {
    pub x: Vec<f64>,
    pub density: Vec<f64>,
}

impl TabulatedDensity {
    pub fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "x" || &headers[1] != "density" {
            return Err(SbbError::InvalidConfig(format!(
                "{}: expected header \"x,density\"",
                path.display()
            )));
        }
        let (mut x, mut density) = (Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| SbbError::InvalidConfig(format!("{}: {e}", path.display())))
            };
            x.push(parse(&rec[0])?);
            density.push(parse(&rec[1])?);
        }
        if x.len() < 2 || x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SbbError::InvalidConfig(format!(
                "{}: need at least two rows with increasing x",
                path.display()
            )));
        }
        if density.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(SbbError::InvalidConfig(format!("{}: negative or non-finite density", path.display())));
        }
        Ok(Self { x, density })
    }

    /// Mean and variance by the trapezoid rule on the tabulated nodes.
    pub fn moments(&self) -> Result<(f64, f64)> {
        let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for i in 1..self.x.len() {
            let dx = self.x[i] - self.x[i - 1];
            let (a, b) = (self.density[i - 1], self.density[i]);
            let (xa, xb) = (self.x[i - 1], self.x[i]);
            m0 += 0.5 * dx * (a + b);
            m1 += 0.5 * dx * (a * xa + b * xb);
            m2 += 0.5 * dx * (a * xa * xa + b * xb * xb);
        }
        if m0 <= 0.0 {
            return Err(SbbError::Degenerate("tabulated density has zero mass".into()));
        }
        let mean = m1 / m0;
        Ok((mean, (m2 / m0 - mean * mean).max(0.0)))
    }

    pub fn eval(&self, z: f64) -> f64 {
        let n = self.x.len();
        if z < self.x[0] || z > self.x[n - 1] {
            return 0.0;
        }
        let j = self.x.partition_point(|&v| v <= z).clamp(1, n - 1);
        let t = (z - self.x[j - 1]) / (self.x[j] - self.x[j - 1]);
        self.density[j - 1] + t * (self.density[j] - self.density[j - 1])
    }
}

/// A marginal resolved to concrete data, ready to be put on a grid.
#[derive(Debug, Clone)]
pub enum Marginal {
    Gaussian { mean: f64, var: f64 },
    Tabulated(TabulatedDensity),
}

impl Marginal {
    pub fn resolve(spec: &MarginalSpec, base: Option<&Path>) -> Result<Self> {
        match spec {
            MarginalSpec::Gaussian { mean, var } => {
                if !(mean.is_finite() && var.is_finite() && *var > 0.0) {
                    return Err(SbbError::InvalidConfig(format!("bad gaussian marginal ({mean}, {var})")));
                }
                Ok(Marginal::Gaussian { mean: *mean, var: *var })
            }
            MarginalSpec::Csv { path } => {
                let p = match base {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path.clone(),
                };
                Ok(Marginal::Tabulated(TabulatedDensity::read(&p)?))
            }
        }
    }

    pub fn moments(&self) -> Result<(f64, f64)> {
        match self {
            Marginal::Gaussian { mean, var } => Ok((*mean, *var)),
            Marginal::Tabulated(t) => t.moments(),
        }
    }

    pub fn on_grid(&self, grid: Grid) -> Result<GridMeasure> {
        match self {
            Marginal::Gaussian { mean, var } => GridMeasure::gaussian(grid, *mean, *var),
            Marginal::Tabulated(t) => {
                GridMeasure::from_unnormalized(grid, grid.nodes().iter().map(|&x| t.eval(x)).collect())
            }
        }
    }
}

/// Truncation window `[min mean − 8σ_max − 4√T, max mean + 8σ_max + 4√T]`.
pub fn truncation_window(moments: &[(f64, f64)], horizon: f64) -> (f64, f64) {
    let sigma = moments.iter().map(|m| m.1.sqrt()).fold(0.0, f64::max);
    let lo = moments.iter().map(|m| m.0).fold(f64::INFINITY, f64::min);
    let hi = moments.iter().map(|m| m.0).fold(f64::NEG_INFINITY, f64::max);
    let pad = 8.0 * sigma + 4.0 * horizon.sqrt();
    (lo - pad, hi + pad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g() -> Grid {
        Grid::new(-8.0, 8.0, 1024).unwrap()
    }

    #[test]
    fn quadrature_moments_of_standard_normal() {
        let mu = GridMeasure::gaussian(g(), 0.0, 1.0).unwrap();
        let one = GridFunction::from_fn(g(), |_| 1.0).unwrap();
        let x = GridFunction::from_fn(g(), |x| x).unwrap();
        let x2 = GridFunction::from_fn(g(), |x| x * x).unwrap();
        assert!((quadrature(&one, &mu).unwrap() - 1.0).abs() < 1e-12);
        assert!(quadrature(&x, &mu).unwrap().abs() < 1e-8);
        assert!((quadrature(&x2, &mu).unwrap() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn quadrature_rejects_grid_mismatch() {
        let mu = GridMeasure::gaussian(g(), 0.0, 1.0).unwrap();
        let f = GridFunction::zeros(Grid::new(-8.0, 8.0, 512).unwrap());
        assert!(matches!(quadrature(&f, &mu), Err(SbbError::Structural(_))));
    }

    #[test]
    fn pushforward_identity_is_exact() {
        let mu = GridMeasure::gaussian(g(), 0.3, 0.7).unwrap();
        let id = GridFunction::from_fn(g(), |x| x).unwrap();
        let out = pushforward(&id, &mu, &g()).unwrap();
        let l1: f64 = out.density().iter().zip(mu.density()).map(|(a, b)| (a - b).abs()).sum::<f64>() * g().h();
        assert!(l1 <= 1e-10, "{l1}");
    }

    #[test]
    fn pushforward_scaling_and_translation() {
        let wide = Grid::new(-16.0, 16.0, 2048).unwrap();
        let mu = GridMeasure::gaussian(wide, 0.0, 1.0).unwrap();
        let twice = GridFunction::from_fn(wide, |x| 2.0 * x).unwrap();
        let out = pushforward(&twice, &mu, &wide).unwrap();
        assert!((out.variance() - 4.0).abs() < 1e-3, "{}", out.variance());
        let shift = GridFunction::from_fn(wide, |x| x + 1.0).unwrap();
        let out = pushforward(&shift, &mu, &wide).unwrap();
        assert!((out.mean() - 1.0).abs() < 1e-6, "{}", out.mean());
    }

    #[test]
    fn pushforward_reports_lost_mass_and_monotonicity() {
        let mu = GridMeasure::gaussian(g(), 0.0, 1.0).unwrap();
        let far = GridFunction::from_fn(g(), |x| x + 100.0).unwrap();
        assert!(matches!(pushforward(&far, &mu, &g()), Err(SbbError::LostMass { .. })));
        let half = GridFunction::from_fn(g(), |x| x + 8.0).unwrap();
        let p = pushforward_detailed(&half, &mu, &g()).unwrap();
        assert!((p.lost_fraction - 0.5).abs() < 1e-3);
        assert!((p.measure.mass() - 1.0).abs() < 1e-12);
        let flip = GridFunction::from_fn(g(), |x| -x).unwrap();
        assert!(matches!(pushforward(&flip, &mu, &g()), Err(SbbError::NonMonotone { .. })));
    }

    #[test]
    fn w2_examples() {
        let mu = GridMeasure::gaussian(g(), 0.0, 1.0).unwrap();
        let nu = GridMeasure::gaussian(g(), 0.7, 1.0).unwrap();
        assert!(wasserstein2(&mu, &mu) < 1e-8);
        assert!((wasserstein2(&mu, &nu) - 0.7).abs() < 1e-3);
        let a = GridMeasure::gaussian(g(), 0.0, 0.25).unwrap();
        assert!((wasserstein2(&a, &mu) - 0.5).abs() < 1e-3);
    }

    #[test]
    fn sampling_is_deterministic_and_centred() {
        let mu = GridMeasure::gaussian(g(), 0.0, 1.0).unwrap();
        let s = sample(&mu, 100_000, 7);
        assert_eq!(s, sample(&mu, 100_000, 7));
        // 3 sigma of the sample mean at 1e5 draws is 0.0095
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        assert!(mean.abs() < 0.02, "{mean}");
        let one = sample(&mu, 1, 1);
        assert!(g().contains(one[0]));
    }

    #[test]
    fn cell_cdf_matches_masses() {
        let mu = GridMeasure::gaussian(g(), 0.0, 1.0).unwrap();
        let c = mu.cell_cdf();
        assert!((c.eval(0.0) - 0.5).abs() < 1e-3);
        assert!((c.eval(100.0) - 1.0).abs() < 1e-12);
        assert_eq!(c.eval(-100.0), 0.0);
    }

    #[test]
    fn marginal_spec_json_shape() {
        let s: MarginalSpec = serde_json::from_str(r#"{"type":"gaussian","mean":0.5,"var":2.0}"#).unwrap();
        assert_eq!(s, MarginalSpec::Gaussian { mean: 0.5, var: 2.0 });
        let c: MarginalSpec = serde_json::from_str(r#"{"type":"csv","path":"m.csv"}"#).unwrap();
        assert!(matches!(c, MarginalSpec::Csv { .. }));
    }

    #[test]
    fn window_covers_heat_spread() {
        let (lo, hi) = truncation_window(&[(0.0, 0.25), (0.0, 1.0)], 1.0);
        assert_eq!((lo, hi), (-12.0, 12.0));
    }
}
