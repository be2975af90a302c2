//! Teachers `f*` and synthetic single-index data `y = f*(⟨θ*, x⟩) + ξ`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::{
    eval_hermite, hermite_values_into, project_to_series, HermiteSeries, QuadratureRule, DEFAULT_ORDER,
    TAIL_WARN_THRESHOLD,
};
use crate::util::{self, streams};

/// Source of a dataset's randomness. Training, fine-tuning and test data
/// come from disjoint RNG streams of the same seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Train,
    FineTune,
    Test,
    Probe,
    /// Built by hand rather than sampled.
    External,
}

impl Stream {
    pub fn id(self) -> u64 {
        match self {
            Stream::Train => streams::TRAIN_DATA,
            Stream::FineTune => streams::FINETUNE_DATA,
            Stream::Test => streams::TEST_DATA,
            Stream::Probe => streams::PROBE,
            Stream::External => 0,
        }
    }

    fn from_id(id: u64) -> Result<Self> {
        [Stream::Train, Stream::FineTune, Stream::Test, Stream::Probe, Stream::External]
            .into_iter()
            .find(|s| s.id() == id)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown stream id {id}")))
    }
}

/// Link function before centering and normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Link {
    /// Continuous piecewise-linear function, zero at the first knot.
    /// `slopes[0]` applies left of the first knot and `slopes[i]` right of
    /// knot `i`, so `slopes.len() == knots.len() + 1`.
    PiecewiseLinear { knots: Vec<f64>, slopes: Vec<f64> },
    /// `h_s`.
    HermiteMonomial { s: usize },
    /// `f - Σ_{j<s} ⟨f, h_j⟩ h_j`.
    Stripped { base: Box<Link>, s: usize },
    /// Explicit Hermite coefficients `α_0, α_1, …`.
    CustomSeries { coeffs: Vec<f64> },
}

impl Link {
    /// Compactly supported, asymmetric profile on `[-2, 2]` with values
    /// `0, 1, -1, 0` at its four knots. Its first three Hermite coefficients
    /// are all nonzero, so stripping gives teachers of exponent 1, 2 and 3.
    pub fn default_piecewise() -> Self {
        Link::PiecewiseLinear {
            knots: vec![-2.0, -1.0, 0.5, 2.0],
            slopes: vec![0.0, 1.0, -4.0 / 3.0, 2.0 / 3.0, 0.0],
        }
    }

    pub fn stripped(base: Link, s: usize) -> Self {
        Link::Stripped { base: Box::new(base), s }
    }
}

impl Default for Link {
    fn default() -> Self {
        Link::default_piecewise()
    }
}

/// How `θ*` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Random,
    /// First basis vector, for debugging.
    E1,
}

fn default_sigma() -> f64 {
    0.001
}

fn default_order() -> usize {
    DEFAULT_ORDER
}

/// Declarative teacher description, as found in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherConfig {
    #[serde(default)]
    pub link: Link,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub direction: Direction,
    /// Hermite truncation used for the series.
    #[serde(default = "default_order")]
    pub order: usize,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self { link: Link::default(), sigma: default_sigma(), direction: Direction::Random, order: DEFAULT_ORDER }
    }
}

impl TeacherConfig {
    pub fn new(link: Link) -> Self {
        Self { link, ..Self::default() }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Raw {
    Piecewise { knots: Vec<f64>, slopes: Vec<f64>, values: Vec<f64> },
    Monomial(usize),
    Series(HermiteSeries),
}

impl Raw {
    fn eval(&self, t: f64) -> f64 {
        match self {
            Raw::Piecewise { knots, slopes, values } => {
                let i = knots.partition_point(|&k| k <= t);
                if i == 0 {
                    slopes[0] * (t - knots[0])
                } else {
                    values[i - 1] + slopes[i] * (t - knots[i - 1])
                }
            }
            Raw::Monomial(s) => eval_hermite(*s, t),
            Raw::Series(s) => s.eval(t),
        }
    }

    fn params(&self) -> Vec<f64> {
        match self {
            Raw::Piecewise { knots, slopes, .. } => {
                let mut p = vec![1.0];
                p.extend(knots);
                p.extend(slopes);
                p
            }
            Raw::Monomial(s) => vec![2.0, *s as f64],
            Raw::Series(s) => {
                let mut p = vec![3.0];
                p.extend(s.coeffs());
                p
            }
        }
    }
}

/// Reduce a link to a raw callable and the number of low-order Hermite
/// components to remove. Centering counts as stripping `h_0`.
fn resolve(link: &Link) -> Result<(Raw, usize)> {
    match link {
        Link::PiecewiseLinear { knots, slopes } => {
            if knots.is_empty() || slopes.len() != knots.len() + 1 {
                return Err(Error::InvalidParameter(format!(
                    "piecewise link needs {} slopes for {} knots, got {}",
                    knots.len() + 1,
                    knots.len(),
                    slopes.len()
                )));
            }
            if knots.windows(2).any(|w| !(w[0] < w[1])) || knots.iter().chain(slopes).any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("knots must be finite and strictly increasing".into()));
            }
            let mut values = vec![0.0];
            for i in 1..knots.len() {
                values.push(values[i - 1] + slopes[i] * (knots[i] - knots[i - 1]));
            }
            Ok((Raw::Piecewise { knots: knots.clone(), slopes: slopes.clone(), values }, 1))
        }
        Link::HermiteMonomial { s } => Ok((Raw::Monomial(*s), 1)),
        Link::CustomSeries { coeffs } => Ok((Raw::Series(HermiteSeries::new(coeffs.clone())?), 1)),
        Link::Stripped { base, s } => {
            if *s == 0 {
                return Err(Error::InvalidParameter("stripping order must be >= 1".into()));
            }
            let (raw, base_s) = resolve(base)?;
            Ok((raw, base_s.max(*s)))
        }
    }
}

/// A realized teacher: normalized link, its Hermite series, `θ*` and noise.
///
/// The callable is `f(t) = (f_raw(t) - Σ_{j<s} a_j h_j(t)) / ν` where `a_j`
/// are the raw coefficients and `ν² = ‖f_raw‖² - Σ_{j<s} a_j²` is computed
/// from the raw function, not the truncated series, so `‖f‖_γ = 1` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherSpec {
    config: TeacherConfig,
    raw: Raw,
    low: Vec<f64>,
    scale: f64,
    series: HermiteSeries,
    theta_star: Vec<f64>,
    seed: u64,
    hash: u64,
}

/// Build the teacher for dimension `d` with `θ*` drawn from `seed`.
pub fn make_teacher(config: &TeacherConfig, d: usize, seed: u64) -> Result<TeacherSpec> {
    if d < 2 {
        return Err(Error::InvalidParameter(format!("dimension d = {d} must be >= 2")));
    }
    if !(config.sigma >= 0.0 && config.sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise sigma = {} must be >= 0", config.sigma)));
    }
    let order = config.order;
    let (raw, strip) = resolve(&config.link)?;
    let (raw_coeffs, raw_norm_sq) = match &raw {
        Raw::Piecewise { knots, .. } => {
            let q = QuadratureRule::piecewise_default(knots);
            let s = project_to_series(|t| raw.eval(t), order.max(strip), &q)?;
            (s.coeffs().to_vec(), q.expect(|t| raw.eval(t).powi(2)))
        }
        Raw::Monomial(k) => {
            let s = HermiteSeries::basis(*k, order.max(*k).max(strip));
            (s.coeffs().to_vec(), 1.0)
        }
        Raw::Series(s) => (s.coeffs().to_vec(), s.norm_sq()),
    };
    let low: Vec<f64> = (0..strip).map(|j| raw_coeffs.get(j).copied().unwrap_or(0.0)).collect();
    let remaining = raw_norm_sq - low.iter().map(|a| a * a).sum::<f64>();
    if !(remaining > 1e-14 * raw_norm_sq.max(1e-300)) {
        return Err(Error::ZeroTail(strip));
    }
    let nu = remaining.sqrt();
    let mut coeffs: Vec<f64> = raw_coeffs.iter().take(order + 1).map(|a| a / nu).collect();
    coeffs.resize(order + 1, 0.0);
    coeffs.iter_mut().take(strip).for_each(|a| *a = 0.0);
    let series = HermiteSeries::new(coeffs)?;

    let theta_star = match config.direction {
        Direction::E1 => {
            let mut v = vec![0.0; d];
            v[0] = 1.0;
            v
        }
        Direction::Random => random_unit(d, &mut util::rng(seed, streams::TEACHER)),
    };
    let mut h = raw.params();
    h.extend(&low);
    h.push(nu);
    h.extend(&theta_star);
    h.push(config.sigma);
    h.push(order as f64);
    let hash = util::hash_f64s(h);
    Ok(TeacherSpec { config: config.clone(), raw, low, scale: 1.0 / nu, series, theta_star, seed, hash })
}

/// Uniform draw from `S^{d-1}`.
pub fn random_unit<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = util::norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

impl TeacherSpec {
    /// The normalized link `f*(t)`, evaluated from the raw function.
    pub fn eval(&self, t: f64) -> f64 {
        let mut v = self.raw.eval(t);
        if !self.low.is_empty() {
            let mut h = Vec::with_capacity(self.low.len());
            hermite_values_into(self.low.len() - 1, t, &mut h);
            v -= self.low.iter().zip(&h).map(|(a, hj)| a * hj).sum::<f64>();
        }
        v * self.scale
    }

    pub fn series(&self) -> &HermiteSeries {
        &self.series
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    pub fn dim(&self) -> usize {
        self.theta_star.len()
    }

    pub fn sigma(&self) -> f64 {
        self.config.sigma
    }

    pub fn config(&self) -> &TeacherConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn hash(&self) -> u64 {
        self.hash
    }

    /// `1 - Σ_j α_j²`: mass of `f*` beyond the truncation.
    pub fn tail_mass(&self) -> f64 {
        (1.0 - self.series.norm_sq()).max(0.0)
    }

    /// A note when the truncated series misses noticeable mass.
    pub fn tail_warning(&self) -> Option<String> {
        let t = self.tail_mass();
        (t > TAIL_WARN_THRESHOLD).then(|| {
            format!("teacher series truncated at order {} misses L2 mass {t:.2e}", self.series.order())
        })
    }

    pub fn information_exponent(&self) -> Result<usize> {
        self.series.information_exponent(crate::hermite::DEFAULT_NONZERO_TOL)
    }

    /// Same link with a different noise level.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        let cfg = self.config.clone().with_sigma(sigma);
        let mut t = make_teacher(&cfg, self.dim(), self.seed)?;
        t.theta_star = self.theta_star.clone();
        Ok(t)
    }
}

/// `n × d` Gaussian design with responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    xs: DMatrix<f64>,
    ys: Vec<f64>,
    seed: u64,
    teacher_hash: u64,
    stream: Stream,
}

/// Training data: `x ~ N(0, I_d)`, `y = f*(⟨θ*, x⟩) + σξ`.
pub fn sample_dataset(teacher: &TeacherSpec, n: usize, d: usize, seed: u64) -> Result<Dataset> {
    sample_dataset_stream(teacher, n, d, seed, Stream::Train)
}

/// As [`sample_dataset`] on a named stream.
pub fn sample_dataset_stream(teacher: &TeacherSpec, n: usize, d: usize, seed: u64, stream: Stream) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if d != teacher.dim() {
        return Err(Error::DimensionMismatch { expected: teacher.dim(), found: d });
    }
    if stream == Stream::External {
        return Err(Error::InvalidParameter("external datasets are not sampled".into()));
    }
    let mut rng = util::rng(seed, stream.id());
    let sigma = teacher.sigma();
    let mut buf = Vec::with_capacity(n * d);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let start = buf.len();
        buf.extend((0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let u = util::dot(&buf[start..], teacher.theta_star());
        let xi: f64 = rng.sample(StandardNormal);
        ys.push(teacher.eval(u) + sigma * xi);
    }
    Ok(Dataset {
        xs: DMatrix::from_row_slice(n, d, &buf),
        ys,
        seed,
        teacher_hash: teacher.hash(),
        stream,
    })
}

const DATA_MAGIC: &[u8; 8] = b"SIDXDS01";

impl Dataset {
    /// Wrap explicit arrays; tagged [`Stream::External`].
    pub fn from_parts(xs: DMatrix<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.nrows() != ys.len() {
            return Err(Error::DimensionMismatch { expected: xs.nrows(), found: ys.len() });
        }
        Ok(Self { xs, ys, seed: 0, teacher_hash: 0, stream: Stream::External })
    }

    pub fn xs(&self) -> &DMatrix<f64> {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.xs.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn teacher_hash(&self) -> u64 {
        self.teacher_hash
    }

    pub fn stream(&self) -> Stream {
        self.stream
    }

    /// `⟨θ, x_i⟩` for every row.
    pub fn project(&self, theta: &[f64]) -> Vec<f64> {
        let t = DVector::from_column_slice(theta);
        (&self.xs * t).as_slice().to_vec()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.xs.row(i).iter().copied().collect()
    }

    /// CSV with header `x_1, …, x_d, y`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (1..=self.dim()).map(|j| format!("x_{j}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.xs.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.ys[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Binary cache: magic, seed, teacher hash, stream id, n, d (u64 LE),
    /// rows of `x` then `y` (f64 LE).
    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(DATA_MAGIC)?;
        for v in [self.seed, self.teacher_hash, self.stream.id(), self.len() as u64, self.dim() as u64] {
            w.write_all(&v.to_le_bytes())?;
        }
        for i in 0..self.len() {
            for v in self.xs.row(i).iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        for v in &self.ys {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_cache(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DATA_MAGIC {
            return Err(Error::InvalidParameter("not a dataset cache file".into()));
        }
        let mut next = || -> Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(u64::from_le_bytes(b))
        };
        let seed = next()?;
        let teacher_hash = next()?;
        let stream = Stream::from_id(next()?)?;
        let n = next()? as usize;
        let d = next()? as usize;
        let mut vals = Vec::with_capacity(n * (d + 1));
        for _ in 0..n * (d + 1) {
            vals.push(f64::from_bits(next()?));
        }
        let ys = vals.split_off(n * d);
        Ok(Self { xs: DMatrix::from_row_slice(n, d, &vals), ys, seed, teacher_hash, stream })
    }
}
