//! AlNiCo major loop, recoil lines and the magnetization-state machine.
//!
//! The major loop is stored as its descending branch, sampled from positive
//! saturation down to negative saturation and interpolated piecewise
//! linearly. The ascending branch follows from odd symmetry,
//! `B_asc(H) = -B_desc(-H)`.
//!
//! Partial demagnetization leaves the magnet on a straight recoil line
//! anchored at the point where it left the major loop (its corner point).
//! Recoil lines are clamped between the two major branches: a recoil line
//! that runs into the descending branch rejoins it, one that runs into the
//! ascending branch continues along that branch. Reaching
//! [`SATURATION_FRACTION`] of `B_sat` at either polarity snaps the state onto
//! the major branch that leaves that saturation point.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::root;

/// Permeability of free space, H/m.
pub const MU0: f64 = 4.0e-7 * std::f64::consts::PI;

/// Fraction of `B_sat` at which the magnet counts as saturated.
pub const SATURATION_FRACTION: f64 = 0.98;

/// Residual tolerance (T) for corner-point intersections.
pub const CORNER_TOL: f64 = 1e-9;

const BH_HEADER: [&str; 2] = ["H_A_per_m", "B_T"];
const RECOIL_TABLE_HEADER: [&str; 2] = ["B_r_prime_T", "mu_rec"];

const BUNDLED_BRANCH: &str = include_str!("../data/alnico5_synthetic.csv");
const BUNDLED_RECOIL_TABLE: &str = include_str!("../data/recoil_table_synthetic.csv");

/// Descending branch of the major BH loop.
#[derive(Debug, Clone, PartialEq)]
pub struct MajorLoop {
    // H strictly decreasing.
    h: Vec<f64>,
    b: Vec<f64>,
}

impl MajorLoop {
    /// Builds a loop from `(H, B)` samples ordered by decreasing `H`.
    pub fn new<I>(samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let (h, b): (Vec<f64>, Vec<f64>) = samples.into_iter().unzip();
        if h.len() < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least 2 samples, got {}",
                h.len()
            )));
        }
        for (i, (&hi, &bi)) in h.iter().zip(&b).enumerate() {
            if !hi.is_finite() || !bi.is_finite() {
                return Err(Error::InvalidDataset(format!(
                    "non-finite value at row {i}"
                )));
            }
        }
        for i in 1..h.len() {
            if h[i] >= h[i - 1] {
                return Err(Error::InvalidDataset(format!(
                    "H must be strictly decreasing: row {} has H = {} after H = {}",
                    i,
                    h[i],
                    h[i - 1]
                )));
            }
            if b[i] > b[i - 1] {
                return Err(Error::InvalidDataset(format!(
                    "B must be non-increasing: row {} has B = {} after B = {}",
                    i,
                    b[i],
                    b[i - 1]
                )));
            }
        }
        let major = MajorLoop { h, b };
        match major.coercive_field() {
            Some(hc) if hc < 0.0 => Ok(major),
            Some(hc) => Err(Error::InvalidDataset(format!(
                "branch crosses B = 0 at H = {hc} A/m, expected a negative coercive field"
            ))),
            None => Err(Error::InvalidDataset(
                "branch never crosses B = 0 in the sampled range".into(),
            )),
        }
    }

    /// Parses the `H_A_per_m,B_T` CSV format.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let rows = read_two_column_csv(reader, BH_HEADER)?;
        Self::new(rows).map_err(|e| match e {
            Error::InvalidDataset(msg) => Error::InvalidDataset(msg),
            other => other,
        })
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::InvalidDataset(format!("cannot open {}: {e}", path.display())))?;
        Self::from_csv_reader(file)
    }

    /// The synthetic AlNiCo-5-like branch shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_csv_reader(BUNDLED_BRANCH.as_bytes()).expect("bundled BH dataset is valid")
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(BH_HEADER)?;
        for (h, b) in self.samples() {
            w.write_record([h.to_string(), b.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.h.iter().copied().zip(self.b.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// Flux density at the first (positive saturation) sample.
    pub fn b_sat(&self) -> f64 {
        self.b[0]
    }

    /// Field magnitude at the first sample.
    pub fn h_sat(&self) -> f64 {
        self.h[0].abs()
    }

    pub fn h_max(&self) -> f64 {
        self.h[0]
    }

    pub fn h_min(&self) -> f64 {
        self.h[self.h.len() - 1]
    }

    pub fn contains(&self, h: f64) -> bool {
        h <= self.h_max() && h >= self.h_min()
    }

    fn check_range(&self, h: f64) -> Result<()> {
        if self.contains(h) {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                what: "H",
                value: h,
                min: self.h_min(),
                max: self.h_max(),
            })
        }
    }

    /// `B` on the descending branch, monotone piecewise-linear and exact at
    /// the samples.
    pub fn major_b_at(&self, h: f64) -> Result<f64> {
        self.check_range(h)?;
        Ok(self.descending(h))
    }

    /// Unchecked interpolation; `h` outside the range clamps to the ends.
    pub(crate) fn descending(&self, h: f64) -> f64 {
        let idx = self.h.partition_point(|&x| x > h);
        if idx == 0 {
            return self.b[0];
        }
        if idx == self.h.len() {
            return self.b[idx - 1];
        }
        if self.h[idx] == h {
            return self.b[idx];
        }
        let i = idx - 1;
        let t = (h - self.h[i]) / (self.h[idx] - self.h[i]);
        self.b[i] + t * (self.b[idx] - self.b[i])
    }

    /// `B` on the ascending branch, when `-h` is inside the sampled range.
    pub fn ascending(&self, h: f64) -> Option<f64> {
        self.contains(-h).then(|| -self.descending(-h))
    }

    /// Slope `dB/dH` of the descending branch on the side of `h` given by
    /// `dir`.
    pub fn descending_slope(&self, h: f64, dir: Direction) -> f64 {
        let n = self.h.len();
        let idx = self.h.partition_point(|&x| x > h);
        // Segment i spans h[i] (right) .. h[i + 1] (left).
        let seg = match dir {
            Direction::Decreasing => {
                if idx == 0 {
                    0
                } else if idx < n && self.h[idx] == h {
                    idx.min(n - 2)
                } else {
                    (idx - 1).min(n - 2)
                }
            }
            Direction::Increasing => {
                if idx == 0 {
                    0
                } else {
                    (idx - 1).min(n - 2)
                }
            }
        };
        (self.b[seg] - self.b[seg + 1]) / (self.h[seg] - self.h[seg + 1])
    }

    /// Smallest segment slope of the branch.
    pub fn min_slope(&self) -> f64 {
        self.h
            .windows(2)
            .zip(self.b.windows(2))
            .map(|(h, b)| (b[0] - b[1]) / (h[0] - h[1]))
            .fold(f64::INFINITY, f64::min)
    }

    /// `B` at `H = 0`.
    pub fn remanence(&self) -> Result<f64> {
        self.major_b_at(0.0)
    }

    /// Largest `H` at which the descending branch reaches `B = 0`.
    pub fn coercive_field(&self) -> Option<f64> {
        let n = self.h.len();
        for i in 0..n {
            if self.b[i] <= 0.0 {
                if i == 0 || self.b[i] == 0.0 {
                    return Some(self.h[i]);
                }
                let t = self.b[i - 1] / (self.b[i - 1] - self.b[i]);
                return Some(self.h[i - 1] + t * (self.h[i] - self.h[i - 1]));
            }
        }
        None
    }

    /// Inverse of the descending branch: the largest `H` with `B(H) = b`.
    pub fn h_on_descending(&self, b: f64) -> Option<f64> {
        if b > self.b[0] || b < self.b[self.b.len() - 1] {
            return None;
        }
        root::bisect(
            |h| self.descending(h) - b,
            self.h_min(),
            self.h_max(),
            1e-12,
            1e-9,
        )
        .map(|r| r.x)
    }
}

fn read_two_column_csv<R: Read>(reader: R, header: [&str; 2]) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let found = rdr.headers()?.clone();
    if found.len() != 2 || found.get(0) != Some(header[0]) || found.get(1) != Some(header[1]) {
        return Err(Error::InvalidDataset(format!(
            "expected header \"{},{}\", found \"{}\"",
            header[0],
            header[1],
            found.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::InvalidDataset(format!(
                "row {} has {} fields, expected 2",
                i + 1,
                rec.len()
            )));
        }
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|_| {
                Error::InvalidDataset(format!("row {}: cannot parse {s:?} as a number", i + 1))
            })
        };
        rows.push((parse(&rec[0])?, parse(&rec[1])?));
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Increasing,
    Decreasing,
}

/// Linear relation between recoil remanence and relative recoil
/// permeability, `mu_rec = slope * B_r' + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoilFit {
    pub slope: f64,
    pub intercept: f64,
}

impl RecoilFit {
    /// The AlNiCo 5 fit over the second quadrant.
    pub const ALNICO5: RecoilFit = RecoilFit {
        slope: 0.955,
        intercept: 4.69,
    };

    pub fn mu_rec(&self, b_r_prime: f64) -> f64 {
        recoil_permeability(b_r_prime, self)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.slope.is_finite() || !self.intercept.is_finite() {
            return Err(Error::InvalidParams(
                "recoil fit coefficients must be finite".into(),
            ));
        }
        if self.intercept <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "recoil fit intercept must be positive, got {}",
                self.intercept
            )));
        }
        Ok(())
    }
}

pub fn recoil_permeability(b_r_prime: f64, fit: &RecoilFit) -> f64 {
    fit.slope * b_r_prime + fit.intercept
}

/// Tabulated `mu_rec(B_r')`, linearly interpolated and held flat beyond
/// the ends.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoilTable {
    b_r: Vec<f64>,
    mu: Vec<f64>,
}

impl RecoilTable {
    pub fn new<I>(points: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let (b_r, mu): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
        if b_r.len() < 2 {
            return Err(Error::InvalidDataset(
                "recoil table needs at least 2 rows".into(),
            ));
        }
        if b_r.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidDataset(
                "recoil table B_r' must be strictly increasing".into(),
            ));
        }
        if mu.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(Error::InvalidDataset(
                "recoil table mu_rec must be positive".into(),
            ));
        }
        Ok(RecoilTable { b_r, mu })
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        Self::new(read_two_column_csv(reader, RECOIL_TABLE_HEADER)?)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::InvalidDataset(format!("cannot open {}: {e}", path.display())))?;
        Self::from_csv_reader(file)
    }

    /// Synthetic table that droops below the AlNiCo 5 fit near the major
    /// curve.
    pub fn bundled_synthetic() -> Self {
        Self::from_csv_reader(BUNDLED_RECOIL_TABLE.as_bytes())
            .expect("bundled recoil table is valid")
    }

    pub fn mu_rec(&self, b_r_prime: f64) -> f64 {
        let n = self.b_r.len();
        if b_r_prime <= self.b_r[0] {
            return self.mu[0];
        }
        if b_r_prime >= self.b_r[n - 1] {
            return self.mu[n - 1];
        }
        let idx = self.b_r.partition_point(|&x| x <= b_r_prime);
        let i = idx - 1;
        let t = (b_r_prime - self.b_r[i]) / (self.b_r[idx] - self.b_r[i]);
        self.mu[i] + t * (self.mu[idx] - self.mu[i])
    }

    pub fn min_mu(&self) -> f64 {
        self.mu.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// How the recoil permeability depends on the recoil remanence.
#[derive(Debug, Clone, PartialEq)]
pub enum RecoilModel {
    Linear(RecoilFit),
    Table(RecoilTable),
}

impl RecoilModel {
    pub fn mu_rec(&self, b_r_prime: f64) -> f64 {
        match self {
            RecoilModel::Linear(fit) => fit.mu_rec(b_r_prime),
            RecoilModel::Table(table) => table.mu_rec(b_r_prime),
        }
    }

    /// Remanence and permeability of the recoil line through `(h, b)`,
    /// solving `B_r' = b - mu_rec(B_r') * mu0 * h` self-consistently.
    pub fn remanence_through(&self, h: f64, b: f64) -> Result<(f64, f64)> {
        match self {
            RecoilModel::Linear(fit) => {
                let den = 1.0 + fit.slope * MU0 * h;
                if den.abs() < 1e-9 {
                    return Err(Error::Singular(format!(
                        "1 + slope * mu0 * H vanishes at H = {h} A/m"
                    )));
                }
                let b_r = (b - fit.intercept * MU0 * h) / den;
                Ok((b_r, fit.mu_rec(b_r)))
            }
            RecoilModel::Table(table) => {
                let g = |x: f64| x + table.mu_rec(x) * MU0 * h - b;
                let r = root::bisect(g, -10.0, 10.0, 1e-13, 0.0).ok_or_else(|| {
                    Error::Singular(format!("no recoil remanence through ({h}, {b})"))
                })?;
                Ok((r.x, table.mu_rec(r.x)))
            }
        }
    }

    /// Smallest recoil permeability the model can produce.
    pub fn min_mu(&self, major: &MajorLoop) -> f64 {
        match self {
            RecoilModel::Linear(fit) => {
                let lo = fit.mu_rec(-major.b_sat());
                let hi = fit.mu_rec(major.b_sat());
                lo.min(hi)
            }
            RecoilModel::Table(table) => table.min_mu(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Descending,
    Ascending,
}

/// A straight recoil line `B = B_r' + mu_rec * mu0 * H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoilLine {
    pub b_r_prime: f64,
    pub mu_rec: f64,
    pub corner_h: f64,
    pub corner_b: f64,
    /// Major branch the corner point sits on.
    pub anchor: Branch,
}

impl RecoilLine {
    pub fn b_at(&self, h: f64) -> f64 {
        self.b_r_prime + self.mu_rec * MU0 * h
    }

    /// `dB/dH` of the line.
    pub fn slope(&self) -> f64 {
        self.mu_rec * MU0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MagnetMode {
    MajorDescending,
    MajorAscending,
    Recoil(RecoilLine),
}

/// Where the magnet sits in its hysteresis characteristic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnetState {
    pub mode: MagnetMode,
    pub h: f64,
    pub b: f64,
}

impl MagnetState {
    /// Positive saturation, first sample of the branch.
    pub fn saturated(major: &MajorLoop) -> Self {
        MagnetState {
            mode: MagnetMode::MajorDescending,
            h: major.h_max(),
            b: major.b_sat(),
        }
    }

    pub fn on_major(major: &MajorLoop, h: f64) -> Result<Self> {
        Ok(MagnetState {
            mode: MagnetMode::MajorDescending,
            h,
            b: major.major_b_at(h)?,
        })
    }

    pub fn on_recoil(line: RecoilLine, h: f64) -> Self {
        MagnetState {
            mode: MagnetMode::Recoil(line),
            h,
            b: line.b_at(h),
        }
    }

    pub fn recoil_line(&self) -> Option<&RecoilLine> {
        match &self.mode {
            MagnetMode::Recoil(line) => Some(line),
            _ => None,
        }
    }

    pub fn is_on_recoil(&self) -> bool {
        matches!(self.mode, MagnetMode::Recoil(_))
    }
}

/// Intersection of the recoil line `B = B_r' + mu_rec * mu0 * H` with the
/// descending branch.
///
/// Scans the branch from positive saturation towards negative `H` for the
/// first segment where the line passes from inside the loop (below the
/// branch) to outside it, then bisects that segment.
pub fn corner_point(major: &MajorLoop, b_r_prime: f64, mu_rec: f64) -> Result<(f64, f64)> {
    let line = |h: f64| b_r_prime + mu_rec * MU0 * h;
    let diff = |h: f64| line(h) - major.descending(h);
    for w in major.h.windows(2) {
        let (right, left) = (w[0], w[1]);
        let d_right = diff(right);
        if d_right.abs() <= CORNER_TOL {
            return Ok((right, major.descending(right)));
        }
        let d_left = diff(left);
        if d_right < 0.0 && d_left >= 0.0 {
            // Converge in H: near tangency a small residual does not pin B.
            let r =
                root::bisect(diff, left, right, 0.0, 1e-9).expect("segment brackets a sign change");
            return Ok((r.x, major.descending(r.x)));
        }
    }
    Err(Error::NoCorner { b_r_prime, mu_rec })
}

/// Major loop plus recoil behaviour: everything needed to advance a
/// [`MagnetState`].
#[derive(Debug, Clone, PartialEq)]
pub struct MagnetModel {
    pub major: MajorLoop,
    pub recoil: RecoilModel,
}

impl MagnetModel {
    pub fn new(major: MajorLoop, recoil: RecoilModel) -> Self {
        MagnetModel { major, recoil }
    }

    /// Bundled synthetic branch with the linear AlNiCo 5 recoil fit.
    pub fn bundled() -> Self {
        MagnetModel::new(
            MajorLoop::bundled(),
            RecoilModel::Linear(RecoilFit::ALNICO5),
        )
    }

    /// Thermally demagnetized magnet: recoil line through the origin.
    pub fn demagnetized(&self) -> Result<MagnetState> {
        let mu = self.recoil.mu_rec(0.0);
        let (corner_h, corner_b) = corner_point(&self.major, 0.0, mu)?;
        let line = RecoilLine {
            b_r_prime: 0.0,
            mu_rec: mu,
            corner_h,
            corner_b,
            anchor: Branch::Descending,
        };
        Ok(MagnetState::on_recoil(line, 0.0))
    }

    /// Recoil line leaving the major loop at `(h, b)` on `anchor`.
    pub fn spawn_line(&self, h: f64, b: f64, anchor: Branch) -> Result<RecoilLine> {
        let (b_r_prime, mu_rec) = match anchor {
            Branch::Descending => self.recoil.remanence_through(h, b)?,
            Branch::Ascending => {
                let (b_r, mu) = self.recoil.remanence_through(-h, -b)?;
                (-b_r, mu)
            }
        };
        Ok(RecoilLine {
            b_r_prime,
            mu_rec,
            corner_h: h,
            corner_b: b,
            anchor,
        })
    }

    /// Moves the magnet to field `h_new`.
    pub fn apply_h(&self, state: &MagnetState, h_new: f64) -> Result<MagnetState> {
        self.major.check_range(h_new)?;
        self.transition(state, h_new)
    }

    /// [`apply_h`](Self::apply_h) without the range check; the branch is
    /// held flat outside its sampled range.
    pub(crate) fn transition(&self, state: &MagnetState, h_new: f64) -> Result<MagnetState> {
        let desc = self.major.descending(h_new);
        let asc = self.major.ascending(h_new);
        let line = match state.mode {
            MagnetMode::MajorDescending => {
                if h_new <= state.h {
                    return Ok(self.snap(MagnetState {
                        mode: MagnetMode::MajorDescending,
                        h: h_new,
                        b: desc,
                    }));
                }
                self.spawn_line(state.h, state.b, Branch::Descending)?
            }
            MagnetMode::MajorAscending => {
                if h_new >= state.h {
                    return Ok(self.snap(MagnetState {
                        mode: MagnetMode::MajorAscending,
                        h: h_new,
                        b: asc.unwrap_or(desc),
                    }));
                }
                self.spawn_line(state.h, state.b, Branch::Ascending)?
            }
            MagnetMode::Recoil(line) => line,
        };

        let b_line = line.b_at(h_new);
        let next = if b_line >= desc {
            MagnetState {
                mode: MagnetMode::MajorDescending,
                h: h_new,
                b: desc,
            }
        } else {
            match asc {
                Some(a) if b_line <= a => MagnetState {
                    mode: MagnetMode::MajorAscending,
                    h: h_new,
                    b: a,
                },
                _ => MagnetState {
                    mode: MagnetMode::Recoil(line),
                    h: h_new,
                    b: b_line,
                },
            }
        };
        Ok(self.snap(next))
    }

    fn snap(&self, s: MagnetState) -> MagnetState {
        let threshold = SATURATION_FRACTION * self.major.b_sat();
        if s.b >= threshold && !matches!(s.mode, MagnetMode::MajorDescending) {
            MagnetState {
                mode: MagnetMode::MajorDescending,
                h: s.h,
                b: self.major.descending(s.h),
            }
        } else if s.b <= -threshold && !matches!(s.mode, MagnetMode::MajorAscending) {
            MagnetState {
                mode: MagnetMode::MajorAscending,
                h: s.h,
                b: self.major.ascending(s.h).unwrap_or(s.b),
            }
        } else {
            s
        }
    }

    /// Local differential permeability `dB/dH` in the direction of motion.
    pub fn differential_permeability(&self, state: &MagnetState, dir: Direction) -> Result<f64> {
        const DH: f64 = 1e-3;
        let (lo, hi) = (self.major.h_min(), self.major.h_max());
        let step = match dir {
            Direction::Increasing if state.h + DH <= hi => DH,
            Direction::Decreasing if state.h - DH >= lo => -DH,
            Direction::Increasing => -DH,
            Direction::Decreasing => DH,
        };
        let moved = self.transition(state, state.h + step)?;
        Ok((moved.b - state.b) / step)
    }

    /// Remanence of the recoil line the magnet currently sits on, or of the
    /// one it would follow if the field were raised now.
    pub fn current_remanence(&self, state: &MagnetState) -> Result<f64> {
        match state.mode {
            MagnetMode::Recoil(line) => Ok(line.b_r_prime),
            MagnetMode::MajorDescending => Ok(self
                .spawn_line(state.h, state.b, Branch::Descending)?
                .b_r_prime),
            MagnetMode::MajorAscending => Ok(self
                .spawn_line(state.h, state.b, Branch::Ascending)?
                .b_r_prime),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Straight segment B = 1.2 + 2.4e-5 H on [-50000, 0].
    fn toy() -> MajorLoop {
        MajorLoop::new([(0.0, 1.2), (-50_000.0, 0.0)]).unwrap()
    }

    fn constant_fit(mu: f64) -> RecoilModel {
        RecoilModel::Linear(RecoilFit {
            slope: 0.0,
            intercept: mu,
        })
    }

    #[test]
    fn endpoint_is_saturation() {
        let m = MajorLoop::bundled();
        assert_eq!(m.major_b_at(m.h_max()).unwrap(), m.b_sat());
        assert_eq!(m.h_sat(), 100_000.0);
    }

    #[test]
    fn toy_interpolation() {
        assert_abs_diff_eq!(toy().major_b_at(-25_000.0).unwrap(), 0.6, epsilon = 1e-15);
    }

    #[test]
    fn exact_at_samples() {
        let m = MajorLoop::bundled();
        for (h, b) in m.samples() {
            assert_eq!(m.major_b_at(h).unwrap(), b);
        }
    }

    #[test]
    fn out_of_range_names_interval() {
        let err = toy().major_b_at(10.0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("-50000") && msg.contains('0'), "{msg}");
        assert!(matches!(err, Error::OutOfRange { .. }));
    }

    #[test]
    fn rejects_non_monotone_h() {
        let err = MajorLoop::new([(0.0, 1.0), (-10.0, 0.5), (-5.0, -0.5)]).unwrap_err();
        assert!(matches!(err, Error::InvalidDataset(_)));
    }

    #[test]
    fn rejects_increasing_b() {
        assert!(MajorLoop::new([(0.0, 1.0), (-10.0, 1.5), (-20.0, -0.5)]).is_err());
    }

    #[test]
    fn rejects_branch_without_coercive_point() {
        assert!(MajorLoop::new([(0.0, 1.0), (-10.0, 0.5)]).is_err());
    }

    #[test]
    fn csv_header_is_strict() {
        let err = MajorLoop::from_csv_reader("H,B\n0,1\n-1,-1\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("H_A_per_m"));
        let ok = MajorLoop::from_csv_reader("H_A_per_m,B_T\n0,1\n-1,-1\n".as_bytes()).unwrap();
        assert_eq!(ok.len(), 2);
        assert!(MajorLoop::from_csv_reader("H_A_per_m,B_T\n0,1\n-1,x\n".as_bytes()).is_err());
    }

    #[test]
    fn recoil_permeability_values() {
        let fit = RecoilFit::ALNICO5;
        assert_eq!(recoil_permeability(0.0, &fit), 4.69);
        assert_abs_diff_eq!(recoil_permeability(1.0, &fit), 5.645, epsilon = 1e-12);
        assert_abs_diff_eq!(recoil_permeability(0.5, &fit), 5.1675, epsilon = 1e-12);
    }

    #[test]
    fn corner_of_toy_lines() {
        // 0.6 + 5 mu0 H = 1.2 + 2.4e-5 H
        let expected_h = -0.6 / (2.4e-5 - 5.0 * MU0);
        let (h, b) = corner_point(&toy(), 0.6, 5.0).unwrap();
        assert_abs_diff_eq!(h, expected_h, epsilon = 1e-3);
        assert_abs_diff_eq!(h, -33_866.0, epsilon = 1.0);
        assert_abs_diff_eq!(b, 0.3872, epsilon = 1e-4);
        assert!((0.6 + 5.0 * MU0 * h - b).abs() <= CORNER_TOL);
    }

    #[test]
    fn corner_at_remanence() {
        for mu in [0.5, 5.0, 50.0] {
            let (h, b) = corner_point(&toy(), 1.2, mu).unwrap();
            assert_eq!((h, b), (0.0, 1.2));
        }
    }

    #[test]
    fn corner_of_zero_line_is_coercive_point() {
        let (h, b) = corner_point(&toy(), 0.0, 0.0).unwrap();
        assert_eq!((h, b), (-50_000.0, 0.0));
        let m = MajorLoop::bundled();
        let (h, b) = corner_point(&m, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(h, m.coercive_field().unwrap(), epsilon = 1e-3);
        assert!(b.abs() <= CORNER_TOL);
    }

    #[test]
    fn corner_missing_for_line_above_loop() {
        let err = corner_point(&MajorLoop::bundled(), 3.0, 5.0).unwrap_err();
        assert!(matches!(err, Error::NoCorner { .. }));
    }

    #[test]
    fn apply_h_identity_from_saturation() {
        let model = MagnetModel::bundled();
        let s = MagnetState::saturated(&model.major);
        assert_eq!(model.apply_h(&s, s.h).unwrap(), s);
    }

    #[test]
    fn recoil_excursion_is_reversible() {
        let model = MagnetModel::new(toy(), constant_fit(5.0));
        let (ch, cb) = corner_point(&model.major, 0.6, 5.0).unwrap();
        let line = RecoilLine {
            b_r_prime: 0.6,
            mu_rec: 5.0,
            corner_h: ch,
            corner_b: cb,
            anchor: Branch::Descending,
        };
        let s0 = MagnetState::on_recoil(line, -10_000.0);
        let s1 = model.apply_h(&s0, -5_000.0).unwrap();
        assert!(s1.b > s0.b);
        let s2 = model.apply_h(&s1, -10_000.0).unwrap();
        assert_eq!(s2, s0);
    }

    #[test]
    fn spawn_from_toy_corner() {
        let model = MagnetModel::new(toy(), constant_fit(5.0));
        let (ch, _) = corner_point(&model.major, 0.6, 5.0).unwrap();
        let s = MagnetState::on_major(&model.major, ch).unwrap();
        let up = model.apply_h(&s, 0.0).unwrap();
        let line = up.recoil_line().expect("on a recoil line");
        assert_abs_diff_eq!(line.b_r_prime, 0.6, epsilon = 1e-9);
        assert_abs_diff_eq!(up.b, 0.6, epsilon = 1e-9);
    }

    #[test]
    fn leaving_recoil_below_corner_rejoins_major() {
        let model = MagnetModel::bundled();
        let s = MagnetState::on_major(&model.major, -46_000.0).unwrap();
        let up = model.apply_h(&s, -20_000.0).unwrap();
        assert!(up.is_on_recoil());
        let down = model.apply_h(&up, -47_000.0).unwrap();
        assert_eq!(down.mode, MagnetMode::MajorDescending);
        assert_eq!(down.b, model.major.major_b_at(-47_000.0).unwrap());
    }

    #[test]
    fn linear_self_consistency() {
        let model = MagnetModel::bundled();
        let line = model
            .spawn_line(-45_000.0, 0.55, Branch::Descending)
            .unwrap();
        assert_abs_diff_eq!(line.b_at(-45_000.0), 0.55, epsilon = 1e-12);
        assert_abs_diff_eq!(
            line.mu_rec,
            RecoilFit::ALNICO5.mu_rec(line.b_r_prime),
            epsilon = 1e-12
        );
    }

    #[test]
    fn table_self_consistency() {
        let model = MagnetModel::new(
            MajorLoop::bundled(),
            RecoilModel::Table(RecoilTable::bundled_synthetic()),
        );
        let line = model
            .spawn_line(-44_000.0, 0.7, Branch::Descending)
            .unwrap();
        assert_abs_diff_eq!(line.b_at(-44_000.0), 0.7, epsilon = 1e-11);
    }

    #[test]
    fn demagnetized_sits_at_origin() {
        let model = MagnetModel::bundled();
        let s = model.demagnetized().unwrap();
        assert_eq!((s.h, s.b), (0.0, 0.0));
        let line = s.recoil_line().unwrap();
        assert!(line.corner_b < 0.0 && line.corner_h < model.major.coercive_field().unwrap());
    }

    #[test]
    fn full_positive_then_negative_saturation() {
        let model = MagnetModel::bundled();
        let mut s = model.demagnetized().unwrap();
        for h in (0..=100).map(|k| k as f64 * 1_000.0) {
            s = model.apply_h(&s, h).unwrap();
        }
        assert_eq!(s.mode, MagnetMode::MajorDescending);
        assert!(s.b >= SATURATION_FRACTION * model.major.b_sat());
        for h in (0..=200).map(|k| 100_000.0 - k as f64 * 1_000.0) {
            s = model.apply_h(&s, h).unwrap();
        }
        assert_eq!(s.mode, MagnetMode::MajorAscending);
        // Coming back up follows the ascending branch, not the descending one.
        let up = model.apply_h(&s, -40_000.0).unwrap();
        assert!(up.b < -1.0, "B = {}", up.b);
    }

    #[test]
    fn remanence_of_current_line() {
        let model = MagnetModel::bundled();
        let s = model.demagnetized().unwrap();
        assert_eq!(model.current_remanence(&s).unwrap(), 0.0);
    }
}
