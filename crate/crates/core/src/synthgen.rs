//! Analytic synthetic-aerodynamics dataset generator.
//!
//! A Joukowski-airfoil family with exact potential-flow surface pressure and
//! circulation-based lift, plus a declared-fiction drag model
//! `C_D = d0 * thickness + k * C_L^2`, so every downstream claim (probes,
//! force parity, latent optimization) has a closed-form oracle.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::geometry::PointCloud;
use crate::numerics::Tensor;
use crate::Result;

pub const THICKNESS_MIN: f64 = 0.05;
pub const THICKNESS_MAX: f64 = 0.25;
pub const CAMBER_MIN: f64 = 0.0;
pub const CAMBER_MAX: f64 = 0.08;
pub const ALPHA_MIN: f64 = -0.1;
pub const ALPHA_MAX: f64 = 0.3;

/// Synthetic drag model constants.
pub const DRAG_D0: f64 = 0.02;
pub const DRAG_K: f64 = 0.05;

/// Airfoil shape parameters, nondimensional.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DesignParams {
    pub thickness: f64,
    pub camber: f64,
}

impl DesignParams {
    pub fn validate(&self) -> Result<()> {
        if !self.thickness.is_finite() || !self.camber.is_finite() {
            return Err(Error::Generation("non-finite design parameters".into()));
        }
        if self.thickness < THICKNESS_MIN || self.thickness > THICKNESS_MAX {
            return Err(Error::Generation(format!(
                "thickness {} outside [{}, {}]",
                self.thickness, THICKNESS_MIN, THICKNESS_MAX
            )));
        }
        if self.camber < CAMBER_MIN || self.camber > CAMBER_MAX {
            return Err(Error::Generation(format!(
                "camber {} outside [{}, {}]",
                self.camber, CAMBER_MIN, CAMBER_MAX
            )));
        }
        Ok(())
    }

    pub fn as_vec(&self) -> Vec<f64> {
        vec![self.thickness, self.camber]
    }
}

/// Operating conditions; `mach` is a conditioning-width scalar with no
/// effect on the synthetic physics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Conditions {
    pub alpha: f64,
    pub mach: f64,
}

impl Conditions {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < ALPHA_MIN || self.alpha > ALPHA_MAX || !self.alpha.is_finite() {
            return Err(Error::Generation(format!(
                "alpha {} outside [{}, {}]",
                self.alpha, ALPHA_MIN, ALPHA_MAX
            )));
        }
        if !self.mach.is_finite() {
            return Err(Error::Generation("non-finite mach".into()));
        }
        Ok(())
    }
}

/// One sample: closed contour, surface pressure coefficients, and the
/// analytic integrated coefficients for (design, alpha).
#[derive(Clone, Debug)]
pub struct Case {
    pub design: DesignParams,
    pub conditions: Conditions,
    /// Closed airfoil contour (coords only).
    pub geometry: PointCloud<f64>,
    /// Same contour points carrying the surface `C_p` channel.
    pub field: PointCloud<f64>,
    /// (C_L, C_D): Kutta-Joukowski lift and the synthetic drag model.
    pub coeffs: (f64, f64),
}

struct JoukowskiMap {
    center: Complex<f64>,
    radius: f64,
    /// Effective-incidence offset: C_L ~ sin(alpha + beta).
    beta: f64,
}

impl JoukowskiMap {
    fn new(design: &DesignParams) -> Self {
        // calibrated so `thickness`/`camber` are close to the usual
        // thickness and camber ratios of the thin Joukowski family
        let e = design.thickness / 1.299;
        let f = 2.0 * design.camber;
        let center = Complex::new(-e, f);
        let radius = (Complex::new(1.0, 0.0) - center).norm();
        let beta = f.atan2(1.0 + e);
        Self {
            center,
            radius,
            beta,
        }
    }

    fn circulation(&self, alpha: f64) -> f64 {
        4.0 * std::f64::consts::PI * self.radius * (alpha + self.beta).sin()
    }

    /// Point on the physical contour for circle angle theta.
    fn surface_point(&self, theta: f64) -> Complex<f64> {
        let zeta = self.center + Complex::from_polar(self.radius, theta);
        zeta + 1.0 / zeta
    }

    /// Surface pressure coefficient at circle angle theta.
    fn surface_cp(&self, theta: f64, alpha: f64) -> Result<f64> {
        let zeta = self.center + Complex::from_polar(self.radius, theta);
        let eta = zeta - self.center;
        let gamma = self.circulation(alpha);
        let ea = Complex::from_polar(1.0, -alpha);
        let ea_conj = Complex::from_polar(1.0, alpha);
        let r2 = self.radius * self.radius;
        // dw/dzeta for w = eta e^{-ia} + r^2 e^{ia}/eta + (i G / 2 pi) ln eta
        let w_zeta = ea - ea_conj * r2 / (eta * eta)
            + Complex::new(0.0, gamma / (2.0 * std::f64::consts::PI)) / eta;
        let dz_dzeta = Complex::new(1.0, 0.0) - 1.0 / (zeta * zeta);
        if dz_dzeta.norm() < 1e-12 {
            return Err(Error::Generation(
                "pressure evaluation at the trailing-edge cusp".into(),
            ));
        }
        let v = w_zeta / dz_dzeta;
        let cp = 1.0 - v.norm_sqr();
        if !cp.is_finite() {
            return Err(Error::Generation("non-finite surface pressure".into()));
        }
        Ok(cp)
    }

    /// Trailing-edge preimage angle on the circle.
    fn theta_te(&self) -> f64 {
        let v = Complex::new(1.0, 0.0) - self.center;
        v.arg()
    }
}

/// Analytic lift coefficient for (design, alpha): `2 Gamma / chord` with the
/// Kutta circulation, chord taken from the mapped contour extent.
pub fn analytic_cl(design: &DesignParams, alpha: f64, resolution: usize) -> Result<f64> {
    design.validate()?;
    let map = JoukowskiMap::new(design);
    let chord = contour_chord(&map, resolution);
    Ok(2.0 * map.circulation(alpha) / chord)
}

/// Synthetic drag model (declared fiction, gives a nontrivial L/D landscape).
pub fn synthetic_cd(design: &DesignParams, cl: f64) -> f64 {
    DRAG_D0 * design.thickness + DRAG_K * cl * cl
}

fn contour_chord(map: &JoukowskiMap, resolution: usize) -> f64 {
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let t0 = map.theta_te();
    for k in 0..resolution {
        let theta = t0 + 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / resolution as f64;
        let z = map.surface_point(theta);
        min_x = min_x.min(z.re);
        max_x = max_x.max(z.re);
    }
    max_x - min_x
}

/// Build one case: contour from the conformal map, surface `C_p` from the
/// analytic potential-flow velocity with the Kutta condition.
pub fn make_case(
    design: &DesignParams,
    conditions: &Conditions,
    resolution: usize,
) -> Result<Case> {
    design.validate()?;
    conditions.validate()?;
    if resolution < 8 {
        return Err(Error::Argument(format!(
            "resolution {} too small",
            resolution
        )));
    }
    let map = JoukowskiMap::new(design);
    let t0 = map.theta_te();
    let mut coords = Vec::with_capacity(resolution * 2);
    let mut cp = Vec::with_capacity(resolution);
    for k in 0..resolution {
        // offset grid: the cusp preimage is never sampled
        let theta = t0 + 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / resolution as f64;
        let z = map.surface_point(theta);
        coords.push(z.re);
        coords.push(z.im);
        cp.push(map.surface_cp(theta, conditions.alpha)?);
    }
    let coords = Tensor::new(resolution, 2, coords)?;
    let geometry = PointCloud::from_coords(coords.clone())?;
    let field = PointCloud::new(coords, Some(Tensor::new(resolution, 1, cp)?), true)?;
    let chord = contour_chord(&map, resolution);
    let cl = 2.0 * map.circulation(conditions.alpha) / chord;
    let cd = synthetic_cd(design, cl);
    Ok(Case {
        design: *design,
        conditions: *conditions,
        geometry,
        field,
        coeffs: (cl, cd),
    })
}

/// Which split a design belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn tag(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Format(format!("unknown split tag '{}'", other))),
        }
    }
}

/// One dataset entry: a case plus its identity and split assignment.
#[derive(Clone, Debug)]
pub struct DatasetEntry {
    pub case_id: usize,
    pub design_id: usize,
    pub split: Split,
    pub case: Case,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub entries: Vec<DatasetEntry>,
    pub resolution: usize,
}

impl Dataset {
    pub fn split_entries(&self, split: Split) -> impl Iterator<Item = &DatasetEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

/// Seeded Latin-hypercube sample of `n` points in the unit cube.
pub fn latin_hypercube(n: usize, dims: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(dims);
    for _ in 0..dims {
        let mut strata: Vec<usize> = (0..n).collect();
        // Fisher-Yates
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            strata.swap(i, j);
        }
        let col = strata
            .into_iter()
            .map(|s| (s as f64 + rng.gen::<f64>()) / n as f64)
            .collect();
        columns.push(col);
    }
    (0..n)
        .map(|i| (0..dims).map(|d| columns[d][i]).collect())
        .collect()
}

/// Generate `n_designs` Latin-hypercube designs, each evaluated at
/// `alphas_per_design` independently drawn angles of attack, with splits
/// assigned strictly across the design dimension.
pub fn make_dataset(
    n_designs: usize,
    alphas_per_design: usize,
    split: (f64, f64, f64),
    resolution: usize,
    seed: u64,
) -> Result<Dataset> {
    if n_designs < 3 {
        return Err(Error::Argument("need at least 3 designs".into()));
    }
    if alphas_per_design == 0 {
        return Err(Error::Argument("need at least one alpha per design".into()));
    }
    let (ft, fv, fe) = split;
    if (ft + fv + fe - 1.0).abs() > 1e-9 || ft < 0.0 || fv < 0.0 || fe < 0.0 {
        return Err(Error::Argument("split fractions must sum to 1".into()));
    }
    let designs: Vec<DesignParams> = latin_hypercube(n_designs, 2, seed)
        .into_iter()
        .map(|u| DesignParams {
            thickness: THICKNESS_MIN + u[0] * (THICKNESS_MAX - THICKNESS_MIN),
            camber: CAMBER_MIN + u[1] * (CAMBER_MAX - CAMBER_MIN),
        })
        .collect();

    // split assignment over shuffled design indices
    let mut order: Vec<usize> = (0..n_designs).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    for i in (1..n_designs).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let n_train = (ft * n_designs as f64).round() as usize;
    let n_val = (fv * n_designs as f64).round().max(1.0) as usize;
    let n_train = n_train.min(n_designs.saturating_sub(2)).max(1);
    let mut splits = vec![Split::Test; n_designs];
    for (rank, &d) in order.iter().enumerate() {
        splits[d] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }

    let mut alpha_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    let mut entries = Vec::with_capacity(n_designs * alphas_per_design);
    for (design_id, design) in designs.iter().enumerate() {
        for slot in 0..alphas_per_design {
            let alpha = ALPHA_MIN + alpha_rng.gen::<f64>() * (ALPHA_MAX - ALPHA_MIN);
            let conditions = Conditions { alpha, mach: 0.0 };
            let case = make_case(design, &conditions, resolution)?;
            entries.push(DatasetEntry {
                case_id: design_id * alphas_per_design + slot,
                design_id,
                split: splits[design_id],
                case,
            });
        }
    }
    Ok(Dataset {
        entries,
        resolution,
    })
}

/// Pressure-force integral over a closed contour, rotated into lift/drag
/// axes at the given alpha. Returns `(C_L, C_D_pressure)`.
pub fn integrate_forces(field: &PointCloud<f64>, alpha: f64) -> Result<(f64, f64)> {
    let n = field.len();
    if n < 3 || field.dim() != 2 {
        return Err(Error::Geometry("need a closed 2-D contour".into()));
    }
    let cp = field
        .features()
        .ok_or_else(|| Error::Argument("contour carries no pressure channel".into()))?;
    check_ordered(field)?;

    // signed area decides which side is outward
    let mut area2 = 0.0;
    for i in 0..n {
        let a = field.point(i);
        let b = field.point((i + 1) % n);
        area2 += a[0] * b[1] - b[0] * a[1];
    }
    if area2.abs() < 1e-12 {
        return Err(Error::Geometry("degenerate contour (zero area)".into()));
    }
    let ccw = area2 > 0.0;

    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        min_x = min_x.min(field.point(i)[0]);
        max_x = max_x.max(field.point(i)[0]);
    }
    let chord = max_x - min_x;

    let (mut fx, mut fy) = (0.0, 0.0);
    for i in 0..n {
        let a = field.point(i);
        let b = field.point((i + 1) % n);
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        // outward normal times edge length
        let (nx, ny) = if ccw { (dy, -dx) } else { (-dy, dx) };
        let cp_avg = 0.5 * (cp.at(i, 0) + cp.at((i + 1) % n, 0));
        fx -= cp_avg * nx;
        fy -= cp_avg * ny;
    }
    fx /= chord;
    fy /= chord;
    let cl = -alpha.sin() * fx + alpha.cos() * fy;
    let cd = alpha.cos() * fx + alpha.sin() * fy;
    Ok((cl, cd))
}

/// Reject contours whose vertex order does not trace a simple loop: the
/// total turning angle of an ordered closed contour is +-2 pi.
fn check_ordered(field: &PointCloud<f64>) -> Result<()> {
    let n = field.len();
    let mut total = 0.0;
    for i in 0..n {
        let a = field.point(i);
        let b = field.point((i + 1) % n);
        let c = field.point((i + 2) % n);
        let (ux, uy) = (b[0] - a[0], b[1] - a[1]);
        let (vx, vy) = (c[0] - b[0], c[1] - b[1]);
        let cross = ux * vy - uy * vx;
        let dot = ux * vx + uy * vy;
        total += cross.atan2(dot);
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    if (total.abs() - two_pi).abs() > 0.5 {
        return Err(Error::Geometry(format!(
            "contour is not an ordered simple loop (turning angle {:.3})",
            total
        )));
    }
    Ok(())
}
