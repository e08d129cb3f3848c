//! Synthetic dataset generation.
//!
//! A cube of edge `L = 0.1 m` carries a centered ellipsoidal void and is
//! loaded in uniaxial tension along the vertical (z) axis. The XZ mid-plane
//! slice of the void is an ellipse; the in-plane stress around it is the
//! closed-form solution for an elliptical hole in an infinite plate under
//! remote tension, evaluated through the conformal map
//!
//! ```text
//! z = w(ζ) = R (ζ + m / ζ),   R = (a + b) / 2,   m = (a - b) / (a + b),   |ζ| >= 1
//! ```
//!
//! with the complex potentials of the traction-free hole. Fields are stored
//! on a pixel grid as von Mises stress (plane stress), exactly zero inside
//! the void.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, Vector3};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

/// Edge length of the cubic domain, meters.
pub const DOMAIN_EDGE: f64 = 0.1;
/// Semi-axis bounds as fractions of the domain edge.
pub const MIN_SEMI_AXIS: f64 = 0.05 * DOMAIN_EDGE;
pub const MAX_SEMI_AXIS: f64 = 0.1 * DOMAIN_EDGE;
/// Bounds of the rotation about the y axis in the rotated case.
pub const MIN_THETA_Y: f64 = PI / 36.0;
pub const MAX_THETA_Y: f64 = 17.0 * PI / 36.0;

pub const DEFAULT_YOUNGS_MODULUS: f64 = 200e9;
pub const DEFAULT_LOAD: f64 = 5e7;
pub const DEFAULT_POISSON: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Case {
    NonRotated,
    Rotated,
}

impl Case {
    pub fn tag(self) -> &'static str {
        match self {
            Case::NonRotated => "non-rotated",
            Case::Rotated => "rotated",
        }
    }
}

impl std::str::FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "non-rotated" | "nonrotated" => Ok(Case::NonRotated),
            "rotated" => Ok(Case::Rotated),
            other => Err(Error::InvalidArgument(format!("unknown case `{other}`"))),
        }
    }
}

/// Ellipsoid semi-axes (m) and rotation angles about the center axes (rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidParams {
    pub rx: f64,
    pub ry: f64,
    pub rz: f64,
    pub theta_x: f64,
    pub theta_y: f64,
    pub theta_z: f64,
}

impl EllipsoidParams {
    pub fn axis_aligned(rx: f64, ry: f64, rz: f64) -> Self {
        EllipsoidParams { rx, ry, rz, theta_x: 0.0, theta_y: 0.0, theta_z: 0.0 }
    }

    /// Body-to-world rotation, `Rz(theta_z) * Ry(theta_y) * Rx(theta_x)`.
    pub fn rotation(&self) -> Matrix3<f64> {
        let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), self.theta_x);
        let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), self.theta_y);
        let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), self.theta_z);
        (rz * ry * rx).into_inner()
    }

    /// Matrix `Q` of the quadric `x^T Q x = 1` in world coordinates.
    pub fn quadric(&self) -> Matrix3<f64> {
        let r = self.rotation();
        let d = Matrix3::from_diagonal(&Vector3::new(
            1.0 / (self.rx * self.rx),
            1.0 / (self.ry * self.ry),
            1.0 / (self.rz * self.rz),
        ));
        r * d * r.transpose()
    }
}

/// Ellipse in the XZ plane centered on the domain. `a` is the semi-axis
/// along the direction at angle `phi` from +x towards +z, `b` the one
/// perpendicular to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse2D {
    pub a: f64,
    pub b: f64,
    pub phi: f64,
}

impl Ellipse2D {
    pub fn new(a: f64, b: f64, phi: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() && phi.is_finite()) {
            return Err(Error::Geometry(format!(
                "ellipse semi-axes must be positive and finite (a = {a}, b = {b}, phi = {phi})"
            )));
        }
        Ok(Ellipse2D { a, b, phi: normalize_angle(phi) })
    }

    pub fn circle(radius: f64) -> Result<Self> {
        Self::new(radius, radius, 0.0)
    }

    /// Half-extents of the axis-aligned bounding box.
    pub fn half_extents(&self) -> (f64, f64) {
        let (s, c) = self.phi.sin_cos();
        let hx = (self.a * self.a * c * c + self.b * self.b * s * s).sqrt();
        let hz = (self.a * self.a * s * s + self.b * self.b * c * c).sqrt();
        (hx, hz)
    }

    /// Maps world offsets from the center into the ellipse frame.
    fn to_local(self, x: f64, z: f64) -> (f64, f64) {
        let (s, c) = self.phi.sin_cos();
        (c * x + s * z, -s * x + c * z)
    }

    pub fn contains(&self, x: f64, z: f64) -> bool {
        let (u, v) = self.to_local(x, z);
        (u / self.a).powi(2) + (v / self.b).powi(2) < 1.0
    }
}

/// Folds an angle into `[0, pi)`; values within rounding of `pi` fold to 0.
fn normalize_angle(phi: f64) -> f64 {
    let t = phi.rem_euclid(PI);
    if PI - t < 1e-12 {
        0.0
    } else {
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl GridSpec {
    pub const MAX_SIDE: usize = 256;

    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n, DOMAIN_EDGE, DOMAIN_EDGE)
    }

    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 8 || ny < 8 || nx > Self::MAX_SIDE || ny > Self::MAX_SIDE {
            return Err(Error::InvalidArgument(format!(
                "grid {nx}x{ny} outside supported range 8..={}",
                Self::MAX_SIDE
            )));
        }
        if !(lx > 0.0 && ly > 0.0) {
            return Err(Error::InvalidArgument("grid extents must be positive".into()));
        }
        Ok(GridSpec { nx, ny, lx, ly })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Offset of pixel (row, col) from the domain center; columns run
    /// along x, rows along z.
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        let x = (col as f64 + 0.5) * self.lx / self.nx as f64 - 0.5 * self.lx;
        let z = (row as f64 + 0.5) * self.ly / self.ny as f64 - 0.5 * self.ly;
        (x, z)
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { nx: 64, ny: 64, lx: DOMAIN_EDGE, ly: DOMAIN_EDGE }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialLoad {
    pub youngs_modulus: f64,
    /// Remote uniaxial stress along z, Pa.
    pub nominal_stress: f64,
    /// Recorded for provenance; under plane stress it does not enter the
    /// von Mises field.
    pub poisson_ratio: f64,
}

impl MaterialLoad {
    pub fn new(youngs_modulus: f64, nominal_stress: f64, poisson_ratio: f64) -> Result<Self> {
        if !(youngs_modulus > 0.0 && nominal_stress > 0.0) {
            return Err(Error::InvalidArgument("Young's modulus and nominal stress must be strictly positive".into()));
        }
        if !(poisson_ratio > -1.0 && poisson_ratio < 0.5) {
            return Err(Error::InvalidArgument(format!("Poisson ratio {poisson_ratio} outside (-1, 0.5)")));
        }
        Ok(MaterialLoad { youngs_modulus, nominal_stress, poisson_ratio })
    }
}

impl Default for MaterialLoad {
    /// Load spread over the loaded face: `F / L^2`.
    fn default() -> Self {
        MaterialLoad {
            youngs_modulus: DEFAULT_YOUNGS_MODULUS,
            nominal_stress: DEFAULT_LOAD / (DOMAIN_EDGE * DOMAIN_EDGE),
            poisson_ratio: DEFAULT_POISSON,
        }
    }
}

/// One observation: solid/void mask and von Mises field on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub params: EllipsoidParams,
    pub grid: GridSpec,
    /// 1 = solid, 0 = void, row-major.
    pub mask: Vec<f64>,
    /// Von Mises stress in Pa, row-major, 0 on void pixels.
    pub stress: Vec<f64>,
}

pub fn sample_params(case: Case, seed: u64) -> EllipsoidParams {
    let mut rng = rng_from_seed(seed);
    let rx = rng.random_range(MIN_SEMI_AXIS..=MAX_SEMI_AXIS);
    let ry = rng.random_range(MIN_SEMI_AXIS..=MAX_SEMI_AXIS);
    let rz = rng.random_range(MIN_SEMI_AXIS..=MAX_SEMI_AXIS);
    let theta_y = match case {
        Case::NonRotated => 0.0,
        Case::Rotated => rng.random_range(MIN_THETA_Y..=MAX_THETA_Y),
    };
    EllipsoidParams { rx, ry, rz, theta_x: 0.0, theta_y, theta_z: 0.0 }
}

/// Intersects the ellipsoid with the plane `y = 0`.
pub fn slice_to_ellipse(params: &EllipsoidParams) -> Result<Ellipse2D> {
    for (name, r) in [("rx", params.rx), ("ry", params.ry), ("rz", params.rz)] {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Geometry(format!("semi-axis {name} = {r} is not positive")));
        }
    }
    let q = params.quadric();
    let (p, c, r) = (q[(0, 0)], q[(0, 2)], q[(2, 2)]);
    let mean = 0.5 * (p + r);
    let radius = (0.25 * (p - r) * (p - r) + c * c).sqrt();
    let lambda_max = mean + radius;
    let lambda_min = mean - radius;
    if !(lambda_min > 0.0 && lambda_min.is_finite() && lambda_max.is_finite()) || lambda_min / lambda_max < 1e-12 {
        return Err(Error::Geometry(format!(
            "slice conic is not an ellipse (eigenvalues {lambda_min:e}, {lambda_max:e})"
        )));
    }
    // Direction of the eigenvector of the larger eigenvalue (shorter axis).
    let t_short = if radius == 0.0 { 0.0 } else { 0.5 * (2.0 * c).atan2(p - r) };
    let t_short = normalize_angle(t_short);
    let t_long = normalize_angle(t_short + 0.5 * PI);
    let (phi, along, across) =
        if t_short < 0.5 * PI { (t_short, lambda_max, lambda_min) } else { (t_long, lambda_min, lambda_max) };
    Ellipse2D::new(1.0 / along.sqrt(), 1.0 / across.sqrt(), phi)
}

fn check_interior(ellipse: &Ellipse2D, grid: &GridSpec) -> Result<()> {
    let (hx, hz) = ellipse.half_extents();
    if hx >= 0.5 * grid.lx || hz >= 0.5 * grid.ly {
        return Err(Error::Geometry(format!(
            "ellipse (a = {}, b = {}, phi = {}) touches the domain boundary",
            ellipse.a, ellipse.b, ellipse.phi
        )));
    }
    Ok(())
}

/// 0 where the pixel center lies inside the ellipse, 1 elsewhere.
pub fn rasterize_mask(ellipse: &Ellipse2D, grid: &GridSpec) -> Result<Vec<f64>> {
    check_interior(ellipse, grid)?;
    let mut mask = Vec::with_capacity(grid.len());
    for row in 0..grid.ny {
        for col in 0..grid.nx {
            let (x, z) = grid.pixel_center(row, col);
            mask.push(if ellipse.contains(x, z) { 0.0 } else { 1.0 });
        }
    }
    Ok(mask)
}

/// In-plane stress tensor at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneStress {
    pub sxx: f64,
    pub szz: f64,
    pub sxz: f64,
}

impl PlaneStress {
    pub fn von_mises(&self) -> f64 {
        (self.sxx * self.sxx - self.sxx * self.szz + self.szz * self.szz + 3.0 * self.sxz * self.sxz).sqrt()
    }
}

/// Closed-form stress field around a traction-free elliptical hole under
/// unit remote tension along world z.
#[derive(Debug, Clone, Copy)]
pub struct HoleSolution {
    ellipse: Ellipse2D,
    r: f64,
    m: f64,
    gamma: f64,
    gamma_prime: Complex64,
    coef: Complex64,
}

impl HoleSolution {
    pub fn new(ellipse: Ellipse2D) -> Self {
        let r = 0.5 * (ellipse.a + ellipse.b);
        let m = (ellipse.a - ellipse.b) / (ellipse.a + ellipse.b);
        // Load direction measured in the ellipse frame.
        let alpha = 0.5 * PI - ellipse.phi;
        let gamma = 0.25;
        let gamma_prime = -0.5 * Complex64::from_polar(1.0, -2.0 * alpha);
        let coef = -r * (gamma * m + gamma_prime.conj());
        HoleSolution { ellipse, r, m, gamma, gamma_prime, coef }
    }

    /// Preimage of a physical point (ellipse frame) outside the unit disk.
    fn preimage(&self, z: Complex64) -> Complex64 {
        let disc = (z * z - 4.0 * self.r * self.r * self.m).sqrt();
        let z1 = (z + disc) / (2.0 * self.r);
        let z2 = (z - disc) / (2.0 * self.r);
        if z1.norm_sqr() >= z2.norm_sqr() {
            z1
        } else {
            z2
        }
    }

    /// Stress in the ellipse frame at local coordinates `(u, v)` outside
    /// the hole. Callers must not pass points inside the hole.
    pub fn local_stress(&self, u: f64, v: f64) -> PlaneStress {
        let (r, m, g, a) = (self.r, self.m, self.gamma, self.coef);
        let zeta = self.preimage(Complex64::new(u, v));
        let z2 = zeta * zeta;
        let z3 = z2 * zeta;

        let w1 = r * (1.0 - m / z2);
        let w2 = 2.0 * r * m / z3;
        let f1 = g * r - a / z2;
        let f2 = 2.0 * a / z3;
        let big_phi = f1 / w1;
        let big_phi_prime = (f2 * w1 - f1 * w2) / (w1 * w1 * w1);

        let zm = z2 - m;
        let zm3 = z3 - m * zeta;
        let psi1 = self.gamma_prime * r
            + g * r / z2
            + g * r * (1.0 + m * m) * (z2 + m) / (zm * zm)
            + a * (-m * z2 * z2 - (m * m + 3.0) * z2 + m) / (zm3 * zm3);
        let big_psi = psi1 / w1;

        let zphys = r * (zeta + m / zeta);
        let sum = 4.0 * big_phi.re;
        let diff = 2.0 * (zphys.conj() * big_phi_prime + big_psi);
        PlaneStress { sxx: 0.5 * (sum - diff.re), szz: 0.5 * (sum + diff.re), sxz: 0.5 * diff.im }
    }

    /// Stress at a world offset `(x, z)` from the center, in world axes.
    pub fn stress_at(&self, x: f64, z: f64) -> PlaneStress {
        let (u, v) = self.ellipse.to_local(x, z);
        let local = self.local_stress(u, v);
        let (s, c) = self.ellipse.phi.sin_cos();
        // Rotate the tensor back: sigma_world = R sigma_local R^T.
        let (a, b, t) = (local.sxx, local.szz, local.sxz);
        PlaneStress {
            sxx: c * c * a + s * s * b - 2.0 * s * c * t,
            szz: s * s * a + c * c * b + 2.0 * s * c * t,
            sxz: s * c * (a - b) + (c * c - s * s) * t,
        }
    }

    /// Von Mises stress under unit remote load; rotation invariant, so the
    /// tensor never leaves the ellipse frame.
    pub fn von_mises_at(&self, x: f64, z: f64) -> f64 {
        let (u, v) = self.ellipse.to_local(x, z);
        self.local_stress(u, v).von_mises()
    }
}

/// Von Mises field on the grid; void pixels are 0 and never reach the map.
pub fn solve_stress(ellipse: &Ellipse2D, mat: &MaterialLoad, grid: &GridSpec) -> Result<Vec<f64>> {
    check_interior(ellipse, grid)?;
    if !(mat.nominal_stress > 0.0) {
        return Err(Error::InvalidArgument("nominal stress must be positive".into()));
    }
    let solution = HoleSolution::new(*ellipse);
    let mut out = Vec::with_capacity(grid.len());
    for row in 0..grid.ny {
        for col in 0..grid.nx {
            let (x, z) = grid.pixel_center(row, col);
            if ellipse.contains(x, z) {
                out.push(0.0);
                continue;
            }
            let vm = solution.von_mises_at(x, z);
            if !vm.is_finite() {
                return Err(Error::Numerical(format!("non-finite stress at pixel ({row}, {col})")));
            }
            out.push(mat.nominal_stress * vm);
        }
    }
    Ok(out)
}

pub fn generate_sample(params: EllipsoidParams, grid: &GridSpec, mat: &MaterialLoad) -> Result<FieldSample> {
    let ellipse = slice_to_ellipse(&params)?;
    let mask = rasterize_mask(&ellipse, grid)?;
    let stress = solve_stress(&ellipse, mat, grid)?;
    Ok(FieldSample { params, grid: *grid, mask, stress })
}

/// Seed used for sample `index` of a dataset generated with `seed`.
pub fn sample_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, index as u64)
}

/// Generates `n` samples in parallel; sample `i` depends only on
/// `(case, seed, i)`.
pub fn generate_dataset(
    case: Case,
    n: usize,
    grid: &GridSpec,
    mat: &MaterialLoad,
    seed: u64,
) -> Result<Vec<FieldSample>> {
    if n == 0 {
        return Err(Error::InvalidArgument("dataset size must be at least 1".into()));
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let params = sample_params(case, sample_seed(seed, i));
            generate_sample(params, grid, mat).map_err(|e| Error::Sample { index: i, source: Box::new(e) })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nonrotated_params_within_bounds() {
        for seed in 0..200 {
            let p = sample_params(Case::NonRotated, seed);
            for r in [p.rx, p.ry, p.rz] {
                assert!((MIN_SEMI_AXIS..=MAX_SEMI_AXIS).contains(&r));
            }
            assert_eq!((p.theta_x, p.theta_y, p.theta_z), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn params_are_deterministic() {
        assert_eq!(sample_params(Case::Rotated, 99), sample_params(Case::Rotated, 99));
        assert_ne!(sample_params(Case::Rotated, 99), sample_params(Case::Rotated, 100));
    }

    #[test]
    fn rotated_theta_is_uniform() {
        let n = 10_000;
        let thetas: Vec<f64> = (0..n).map(|s| sample_params(Case::Rotated, sample_seed(3, s)).theta_y).collect();
        let lo = thetas.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = thetas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo >= MIN_THETA_Y && hi <= MAX_THETA_Y);
        let mean = thetas.iter().sum::<f64>() / n as f64;
        let sigma = (MAX_THETA_Y - MIN_THETA_Y) / 12f64.sqrt();
        assert!((mean - PI / 4.0).abs() < 3.0 * sigma / (n as f64).sqrt());
    }

    #[test]
    fn axis_aligned_slice_keeps_xz_axes() {
        let e = slice_to_ellipse(&EllipsoidParams::axis_aligned(0.006, 0.008, 0.009)).unwrap();
        assert_eq!((e.a, e.b, e.phi), (0.006, 0.009, 0.0));
        let e = slice_to_ellipse(&EllipsoidParams::axis_aligned(0.009, 0.008, 0.006)).unwrap();
        assert_eq!((e.a, e.b, e.phi), (0.009, 0.006, 0.0));
    }

    #[test]
    fn quarter_turn_swaps_axes() {
        let p = EllipsoidParams { theta_y: 0.5 * PI, ..EllipsoidParams::axis_aligned(0.005, 0.007, 0.01) };
        let e = slice_to_ellipse(&p).unwrap();
        assert!((e.a - 0.01).abs() < 1e-12, "{e:?}");
        assert!((e.b - 0.005).abs() < 1e-12, "{e:?}");
        assert!(e.phi.min(PI - e.phi) < 1e-9);
    }

    #[test]
    fn degenerate_slice_is_rejected() {
        let p = EllipsoidParams::axis_aligned(0.0, 0.01, 0.01);
        assert!(matches!(slice_to_ellipse(&p), Err(Error::Geometry(_))));
    }

    #[test]
    fn tiny_ellipse_off_centers_gives_all_solid() {
        let grid = GridSpec::square(64).unwrap();
        let e = Ellipse2D::new(1e-4, 5e-5, 0.3).unwrap();
        assert!(rasterize_mask(&e, &grid).unwrap().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn mask_is_centrally_symmetric() {
        let grid = GridSpec::square(64).unwrap();
        let e = Ellipse2D::new(0.009, 0.005, 0.7).unwrap();
        let m = rasterize_mask(&e, &grid).unwrap();
        let n = m.len();
        for i in 0..n {
            assert_eq!(m[i], m[n - 1 - i]);
        }
    }

    #[test]
    fn boundary_touching_ellipse_fails() {
        let grid = GridSpec::square(32).unwrap();
        let e = Ellipse2D::new(0.05, 0.01, 0.0).unwrap();
        assert!(matches!(rasterize_mask(&e, &grid), Err(Error::Geometry(_))));
        assert!(matches!(solve_stress(&e, &MaterialLoad::default(), &grid), Err(Error::Geometry(_))));
    }

    #[test]
    fn hole_edge_is_traction_free() {
        let e = Ellipse2D::new(0.009, 0.004, 0.4).unwrap();
        let sol = HoleSolution::new(e);
        for k in 0..36 {
            let t = k as f64 * PI / 18.0 + 0.01;
            let (u, v) = (e.a * t.cos(), e.b * t.sin());
            // Outward normal of the ellipse in the local frame.
            let (nu, nv) = (u / (e.a * e.a), v / (e.b * e.b));
            let norm = (nu * nu + nv * nv).sqrt();
            let (nu, nv) = (nu / norm, nv / norm);
            let s = sol.local_stress(u * (1.0 + 1e-9), v * (1.0 + 1e-9));
            let tx = s.sxx * nu + s.sxz * nv;
            let tz = s.sxz * nu + s.szz * nv;
            assert!(tx.abs() < 1e-6 && tz.abs() < 1e-6, "t = {t}: ({tx}, {tz})");
        }
    }

    #[test]
    fn far_field_recovers_remote_tension() {
        let e = Ellipse2D::new(0.008, 0.005, 1.1).unwrap();
        let s = HoleSolution::new(e).stress_at(30.0, -40.0);
        assert!((s.szz - 1.0).abs() < 1e-6, "{s:?}");
        assert!(s.sxx.abs() < 1e-6 && s.sxz.abs() < 1e-6, "{s:?}");
    }

    #[test]
    fn kirsch_field_matches_closed_form() {
        let radius = 0.01;
        let sol = HoleSolution::new(Ellipse2D::circle(radius).unwrap());
        for &(rho, theta) in &[(0.012f64, 0.3f64), (0.02, 1.2), (0.015, 2.5), (0.03, -0.7)] {
            // theta measured from the load (z) axis.
            let (x, z) = (rho * theta.sin(), rho * theta.cos());
            let s = sol.stress_at(x, z);
            let q = (radius / rho).powi(2);
            let c2 = (2.0 * theta).cos();
            let s2 = (2.0 * theta).sin();
            let srr = 0.5 * (1.0 - q) + 0.5 * (1.0 - 4.0 * q + 3.0 * q * q) * c2;
            let stt = 0.5 * (1.0 + q) - 0.5 * (1.0 + 3.0 * q * q) * c2;
            let srt = -0.5 * (1.0 + 2.0 * q - 3.0 * q * q) * s2;
            let vm_ref = (srr * srr - srr * stt + stt * stt + 3.0 * srt * srt).sqrt();
            assert!((s.von_mises() - vm_ref).abs() < 1e-10, "{rho} {theta}");
        }
    }

    #[test]
    fn generate_is_deterministic() {
        let grid = GridSpec::square(16).unwrap();
        let mat = MaterialLoad::default();
        let a = generate_dataset(Case::Rotated, 4, &grid, &mat, 11).unwrap();
        let b = generate_dataset(Case::Rotated, 4, &grid, &mat, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(generate_dataset(Case::NonRotated, 1, &grid, &mat, 0).unwrap().len(), 1);
        assert!(generate_dataset(Case::NonRotated, 0, &grid, &mat, 0).is_err());
    }
}
