//! Periodic charge deposition, spectral Poisson solve, field interpolation,
//! and moment-norm diagnostics on a triply periodic grid.
//!
//! The continuous problem lives on all of R^3; the artifact works on a
//! periodic box with mean-charge neutralization (-Delta u = rho - <rho>,
//! zero-mean gauge), which makes the spectral solve exact and keeps the
//! conservation diagnostics clean. Deposition and interpolation share the
//! trilinear (cloud-in-cell) kernel, so they form an adjoint pair.
//!
//! Deposition is a deterministic reduction: particles are split into
//! fixed-size chunks, each chunk accumulates a private grid, and the private
//! grids are merged in chunk order. Results do not depend on thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use crate::error::Error;
use crate::geometry::Vec3;

/// Uniform periodic grid; cells per axis are powers of two.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid3 {
    n: [usize; 3],
    lengths: [f64; 3],
}

impl Grid3 {
    pub fn new(n: [usize; 3], lengths: [f64; 3]) -> Result<Self, Error> {
        for d in 0..3 {
            if n[d] < 8 || !n[d].is_power_of_two() {
                return Err(Error::InvalidConfig(format!(
                    "grid cells must be powers of two >= 8, got {}",
                    n[d]
                )));
            }
            if !(lengths[d] > 0.0) || !lengths[d].is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "box length must be > 0, got {}",
                    lengths[d]
                )));
            }
        }
        Ok(Grid3 { n, lengths })
    }

    pub fn cells(&self) -> [usize; 3] {
        self.n
    }

    pub fn lengths(&self) -> [f64; 3] {
        self.lengths
    }

    pub fn node_count(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing(0) * self.spacing(1) * self.spacing(2)
    }

    pub fn spacing(&self, d: usize) -> f64 {
        self.lengths[d] / self.n[d] as f64
    }

    /// Row-major flat index: i3 fastest.
    #[inline]
    pub fn index(&self, i: [usize; 3]) -> usize {
        (i[0] * self.n[1] + i[1]) * self.n[2] + i[2]
    }

    #[inline]
    pub fn node_position(&self, idx: usize) -> Vec3 {
        let i3 = idx % self.n[2];
        let i2 = (idx / self.n[2]) % self.n[1];
        let i1 = idx / (self.n[1] * self.n[2]);
        Vec3::new(
            i1 as f64 * self.spacing(0),
            i2 as f64 * self.spacing(1),
            i3 as f64 * self.spacing(2),
        )
    }

    /// Wrap a coordinate into [0, L) per axis.
    #[inline]
    pub fn wrap(&self, x: Vec3) -> Vec3 {
        let w = |v: f64, l: f64| {
            let r = v - (v / l).floor() * l;
            if r >= l {
                0.0
            } else {
                r
            }
        };
        Vec3::new(
            w(x.x, self.lengths[0]),
            w(x.y, self.lengths[1]),
            w(x.z, self.lengths[2]),
        )
    }

    /// The 8 CIC stencil nodes of a position with their kernel weights.
    #[inline]
    fn cic_stencil(&self, x: Vec3) -> [(usize, f64); 8] {
        let x = self.wrap(x);
        let axis = |d: usize, coord: f64| {
            let s = coord / self.spacing(d);
            let i0 = s.floor() as isize;
            let frac = s - i0 as f64;
            let n = self.n[d] as isize;
            ((i0.rem_euclid(n)) as usize, frac)
        };
        let (i0, fx) = axis(0, x.x);
        let (j0, fy) = axis(1, x.y);
        let (k0, fz) = axis(2, x.z);
        let i1 = (i0 + 1) % self.n[0];
        let j1 = (j0 + 1) % self.n[1];
        let k1 = (k0 + 1) % self.n[2];
        [
            (
                self.index([i0, j0, k0]),
                (1.0 - fx) * (1.0 - fy) * (1.0 - fz),
            ),
            (self.index([i0, j0, k1]), (1.0 - fx) * (1.0 - fy) * fz),
            (self.index([i0, j1, k0]), (1.0 - fx) * fy * (1.0 - fz)),
            (self.index([i0, j1, k1]), (1.0 - fx) * fy * fz),
            (self.index([i1, j0, k0]), fx * (1.0 - fy) * (1.0 - fz)),
            (self.index([i1, j0, k1]), fx * (1.0 - fy) * fz),
            (self.index([i1, j1, k0]), fx * fy * (1.0 - fz)),
            (self.index([i1, j1, k1]), fx * fy * fz),
        ]
    }
}

/// Scalar values at grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid3,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid3) -> Self {
        ScalarField {
            grid,
            values: vec![0.0; grid.node_count()],
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Discrete L^p norm: (sum |v|^p * cell_volume)^(1/p).
    pub fn lp_norm(&self, p: f64) -> f64 {
        let s: f64 = self.values.iter().map(|v| v.abs().powf(p)).sum();
        (s * self.grid.cell_volume()).powf(1.0 / p)
    }
}

/// Vector values at grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: Grid3,
    pub values: Vec<Vec3>,
}

impl VectorField {
    pub fn zeros(grid: Grid3) -> Self {
        VectorField {
            grid,
            values: vec![Vec3::ZERO; grid.node_count()],
        }
    }

    /// Discrete L^p norm of the pointwise magnitude.
    pub fn lp_norm(&self, p: f64) -> f64 {
        let s: f64 = self.values.iter().map(|v| v.norm().powf(p)).sum();
        (s * self.grid.cell_volume()).powf(1.0 / p)
    }

    /// Discrete L2 norm squared; for E = -grad u this is the field energy.
    pub fn l2_norm_squared(&self) -> f64 {
        self.values.iter().map(|v| v.norm2()).sum::<f64>() * self.grid.cell_volume()
    }
}

// ---------------------------------------------------------------------------
// deposition and interpolation (shared trilinear kernel)
// ---------------------------------------------------------------------------

const DEPOSIT_CHUNK: usize = 8192;

/// Cloud-in-cell charge deposition. The integral of the returned density
/// equals the sum of the weights up to round-off.
pub fn deposit_charge(positions: &[Vec3], weights: &[f64], grid: Grid3) -> ScalarField {
    assert_eq!(positions.len(), weights.len());
    let inv_vol = 1.0 / grid.cell_volume();
    let ncells = grid.node_count();
    let chunks: Vec<Vec<f64>> = positions
        .par_chunks(DEPOSIT_CHUNK)
        .zip(weights.par_chunks(DEPOSIT_CHUNK))
        .map(|(xs, ws)| {
            let mut local = vec![0.0; ncells];
            for (x, w) in xs.iter().zip(ws) {
                let scaled = w * inv_vol;
                for (idx, k) in grid.cic_stencil(*x) {
                    local[idx] += scaled * k;
                }
            }
            local
        })
        .collect();
    let mut values = vec![0.0; ncells];
    for local in chunks {
        for (v, l) in values.iter_mut().zip(&local) {
            *v += l;
        }
    }
    ScalarField { grid, values }
}

/// Cloud-in-cell current deposition: J at the nodes from w v per particle.
pub fn deposit_current(
    positions: &[Vec3],
    velocities: &[Vec3],
    weights: &[f64],
    grid: Grid3,
) -> VectorField {
    assert_eq!(positions.len(), weights.len());
    assert_eq!(positions.len(), velocities.len());
    let inv_vol = 1.0 / grid.cell_volume();
    let ncells = grid.node_count();
    let chunks: Vec<Vec<Vec3>> = positions
        .par_chunks(DEPOSIT_CHUNK)
        .zip(velocities.par_chunks(DEPOSIT_CHUNK))
        .zip(weights.par_chunks(DEPOSIT_CHUNK))
        .map(|((xs, vs), ws)| {
            let mut local = vec![Vec3::ZERO; ncells];
            for ((x, v), w) in xs.iter().zip(vs).zip(ws) {
                let carried = *v * (w * inv_vol);
                for (idx, k) in grid.cic_stencil(*x) {
                    local[idx] += carried * k;
                }
            }
            local
        })
        .collect();
    let mut values = vec![Vec3::ZERO; ncells];
    for local in chunks {
        for (v, l) in values.iter_mut().zip(&local) {
            *v += *l;
        }
    }
    VectorField { grid, values }
}

/// Trilinear interpolation of a vector field; the adjoint of deposition.
pub fn interpolate_e(field: &VectorField, x: Vec3) -> Vec3 {
    let mut acc = Vec3::ZERO;
    for (idx, k) in field.grid.cic_stencil(x) {
        acc += field.values[idx] * k;
    }
    acc
}

/// Trilinear interpolation of a scalar field.
pub fn interpolate_scalar(field: &ScalarField, x: Vec3) -> f64 {
    let mut acc = 0.0;
    for (idx, k) in field.grid.cic_stencil(x) {
        acc += field.values[idx] * k;
    }
    acc
}

// ---------------------------------------------------------------------------
// spectral Poisson solve
// ---------------------------------------------------------------------------

/// Radix-2 complex FFT plan for one line length.
struct Fft {
    n: usize,
    // exp(-2 pi i j / n) for j < n/2.
    tw_re: Vec<f64>,
    tw_im: Vec<f64>,
}

impl Fft {
    fn new(n: usize) -> Self {
        assert!(n.is_power_of_two());
        let half = n / 2;
        let mut tw_re = Vec::with_capacity(half);
        let mut tw_im = Vec::with_capacity(half);
        for j in 0..half {
            let a = -2.0 * std::f64::consts::PI * j as f64 / n as f64;
            tw_re.push(a.cos());
            tw_im.push(a.sin());
        }
        Fft { n, tw_re, tw_im }
    }

    /// In-place forward transform (sign -1, no normalization).
    fn forward(&self, re: &mut [f64], im: &mut [f64]) {
        let n = self.n;
        // Bit-reversal permutation.
        let mut j = 0usize;
        for i in 0..n {
            if i < j {
                re.swap(i, j);
                im.swap(i, j);
            }
            let mut m = n >> 1;
            while m >= 1 && j & m != 0 {
                j ^= m;
                m >>= 1;
            }
            j |= m;
        }
        // Butterflies.
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let step = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let (wr, wi) = (self.tw_re[k * step], self.tw_im[k * step]);
                    let (ar, ai) = (re[start + k], im[start + k]);
                    let (br, bi) = (re[start + k + half], im[start + k + half]);
                    let tr = wr * br - wi * bi;
                    let ti = wr * bi + wi * br;
                    re[start + k] = ar + tr;
                    im[start + k] = ai + ti;
                    re[start + k + half] = ar - tr;
                    im[start + k + half] = ai - ti;
                }
            }
            len <<= 1;
        }
    }

    /// In-place inverse transform (sign +1, scaled by 1/n).
    fn inverse(&self, re: &mut [f64], im: &mut [f64]) {
        for v in im.iter_mut() {
            *v = -*v;
        }
        self.forward(re, im);
        let s = 1.0 / self.n as f64;
        for v in re.iter_mut() {
            *v *= s;
        }
        for v in im.iter_mut() {
            *v *= -s;
        }
    }
}

/// Complex grid data in row-major layout with per-axis transforms.
struct SpectralGrid {
    grid: Grid3,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl SpectralGrid {
    fn from_real(field: &ScalarField) -> Self {
        SpectralGrid {
            grid: field.grid,
            re: field.values.clone(),
            im: vec![0.0; field.values.len()],
        }
    }

    fn transform_axes(&mut self, inverse: bool) {
        let [n1, n2, n3] = self.grid.cells();
        // Axis 3 (contiguous lines).
        let fft = Fft::new(n3);
        for line in 0..n1 * n2 {
            let s = line * n3;
            let (re, im) = (&mut self.re[s..s + n3], &mut self.im[s..s + n3]);
            if inverse {
                fft.inverse(re, im)
            } else {
                fft.forward(re, im)
            }
        }
        // Axis 2 (stride n3).
        let fft = Fft::new(n2);
        let mut bre = vec![0.0; n2];
        let mut bim = vec![0.0; n2];
        for i1 in 0..n1 {
            for i3 in 0..n3 {
                for i2 in 0..n2 {
                    let idx = self.grid.index([i1, i2, i3]);
                    bre[i2] = self.re[idx];
                    bim[i2] = self.im[idx];
                }
                if inverse {
                    fft.inverse(&mut bre, &mut bim)
                } else {
                    fft.forward(&mut bre, &mut bim)
                }
                for i2 in 0..n2 {
                    let idx = self.grid.index([i1, i2, i3]);
                    self.re[idx] = bre[i2];
                    self.im[idx] = bim[i2];
                }
            }
        }
        // Axis 1 (stride n2 * n3).
        let fft = Fft::new(n1);
        let mut bre = vec![0.0; n1];
        let mut bim = vec![0.0; n1];
        for i2 in 0..n2 {
            for i3 in 0..n3 {
                for i1 in 0..n1 {
                    let idx = self.grid.index([i1, i2, i3]);
                    bre[i1] = self.re[idx];
                    bim[i1] = self.im[idx];
                }
                if inverse {
                    fft.inverse(&mut bre, &mut bim)
                } else {
                    fft.forward(&mut bre, &mut bim)
                }
                for i1 in 0..n1 {
                    let idx = self.grid.index([i1, i2, i3]);
                    self.re[idx] = bre[i1];
                    self.im[idx] = bim[i1];
                }
            }
        }
    }
}

/// Signed wavenumber of mode m on an axis with n cells and length l; the
/// derivative factor is zeroed at the Nyquist mode to keep fields real.
#[inline]
fn wavenumber(m: usize, n: usize, l: f64) -> (f64, f64) {
    let signed = if m > n / 2 {
        m as isize - n as isize
    } else {
        m as isize
    };
    let k = 2.0 * std::f64::consts::PI * signed as f64 / l;
    let k_deriv = if 2 * m == n { 0.0 } else { k };
    (k, k_deriv)
}

/// Spectral solution of -Delta u = rho - <rho> with <u> = 0, and
/// E = -grad u by spectral differentiation.
pub fn solve_poisson(rho: &ScalarField) -> (ScalarField, VectorField) {
    let grid = rho.grid;
    let [n1, n2, n3] = grid.cells();
    let [l1, l2, l3] = grid.lengths();
    let mut hat = SpectralGrid::from_real(rho);
    hat.transform_axes(false);

    let mut u_hat = SpectralGrid {
        grid,
        re: vec![0.0; grid.node_count()],
        im: vec![0.0; grid.node_count()],
    };
    let mut e_hats = [
        SpectralGrid {
            grid,
            re: vec![0.0; grid.node_count()],
            im: vec![0.0; grid.node_count()],
        },
        SpectralGrid {
            grid,
            re: vec![0.0; grid.node_count()],
            im: vec![0.0; grid.node_count()],
        },
        SpectralGrid {
            grid,
            re: vec![0.0; grid.node_count()],
            im: vec![0.0; grid.node_count()],
        },
    ];
    for i1 in 0..n1 {
        let (k1, kd1) = wavenumber(i1, n1, l1);
        for i2 in 0..n2 {
            let (k2, kd2) = wavenumber(i2, n2, l2);
            for i3 in 0..n3 {
                let (k3, kd3) = wavenumber(i3, n3, l3);
                let idx = grid.index([i1, i2, i3]);
                let k2sum = k1 * k1 + k2 * k2 + k3 * k3;
                if k2sum == 0.0 {
                    continue; // zero-mean gauge: drop the DC mode
                }
                let ur = hat.re[idx] / k2sum;
                let ui = hat.im[idx] / k2sum;
                u_hat.re[idx] = ur;
                u_hat.im[idx] = ui;
                // E = -grad u: E_hat = -i k u_hat = (-i)(ur + i ui) k.
                for (d, kd) in [(0, kd1), (1, kd2), (2, kd3)] {
                    e_hats[d].re[idx] = kd * ui;
                    e_hats[d].im[idx] = -kd * ur;
                }
            }
        }
    }
    u_hat.transform_axes(true);
    for e in e_hats.iter_mut() {
        e.transform_axes(true);
    }
    let u = ScalarField {
        grid,
        values: u_hat.re,
    };
    let mut e = VectorField::zeros(grid);
    for idx in 0..grid.node_count() {
        e.values[idx] = Vec3::new(e_hats[0].re[idx], e_hats[1].re[idx], e_hats[2].re[idx]);
    }
    (u, e)
}

/// Spectral Laplacian (for residual oracles): returns -Delta f.
pub fn neg_laplacian(f: &ScalarField) -> ScalarField {
    let grid = f.grid;
    let [n1, n2, n3] = grid.cells();
    let [l1, l2, l3] = grid.lengths();
    let mut hat = SpectralGrid::from_real(f);
    hat.transform_axes(false);
    for i1 in 0..n1 {
        let (k1, _) = wavenumber(i1, n1, l1);
        for i2 in 0..n2 {
            let (k2, _) = wavenumber(i2, n2, l2);
            for i3 in 0..n3 {
                let (k3, _) = wavenumber(i3, n3, l3);
                let idx = grid.index([i1, i2, i3]);
                let k2sum = k1 * k1 + k2 * k2 + k3 * k3;
                hat.re[idx] *= k2sum;
                hat.im[idx] *= k2sum;
            }
        }
    }
    hat.transform_axes(true);
    ScalarField {
        grid,
        values: hat.re,
    }
}

/// Spectral divergence of a vector field.
pub fn divergence(f: &VectorField) -> ScalarField {
    let grid = f.grid;
    let [n1, n2, n3] = grid.cells();
    let [l1, l2, l3] = grid.lengths();
    let mut out = ScalarField::zeros(grid);
    for d in 0..3 {
        let comp = ScalarField {
            grid,
            values: f.values.iter().map(|v| v.to_array()[d]).collect(),
        };
        let mut hat = SpectralGrid::from_real(&comp);
        hat.transform_axes(false);
        for i1 in 0..n1 {
            let (_, kd1) = wavenumber(i1, n1, l1);
            for i2 in 0..n2 {
                let (_, kd2) = wavenumber(i2, n2, l2);
                for i3 in 0..n3 {
                    let (_, kd3) = wavenumber(i3, n3, l3);
                    let kd = [kd1, kd2, kd3][d];
                    let idx = grid.index([i1, i2, i3]);
                    // d/dx -> i k.
                    let (r, i) = (hat.re[idx], hat.im[idx]);
                    hat.re[idx] = -kd * i;
                    hat.im[idx] = kd * r;
                }
            }
        }
        hat.transform_axes(true);
        for (o, v) in out.values.iter_mut().zip(&hat.re) {
            *o += v;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// moment norms
// ---------------------------------------------------------------------------

/// The uniform-in-epsilon moment and norm diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentNorms {
    /// Estimator of the squared L2 norm of f: sum of w_i f0_i, where f0_i is
    /// the value of f carried by particle i (constant along characteristics).
    pub l2_f: f64,
    /// Sum of w |v|^2 (no 1/2; matches the conserved energy identity).
    pub kinetic_energy: f64,
    /// Discrete L^(7/5) norm of the deposited charge density.
    pub rho_l75: f64,
    /// Discrete L^(7/6) norm of the deposited current density magnitude.
    pub j_l76: f64,
}

/// Moment norms from particle data plus deposited grid densities.
pub fn moment_norms(
    weights: &[f64],
    velocities: &[Vec3],
    f_values: &[f64],
    rho: &ScalarField,
    current: &VectorField,
) -> MomentNorms {
    let l2_f: f64 = weights.iter().zip(f_values).map(|(w, f)| w * f).sum();
    let kinetic_energy: f64 = weights
        .iter()
        .zip(velocities)
        .map(|(w, v)| w * v.norm2())
        .sum();
    MomentNorms {
        l2_f,
        kinetic_energy,
        rho_l75: rho.lp_norm(7.0 / 5.0),
        j_l76: current.lp_norm(7.0 / 6.0),
    }
}

// ---------------------------------------------------------------------------
// snapshot i/o
// ---------------------------------------------------------------------------

const SNAPSHOT_MAGIC: &[u8; 4] = b"GHL1";

/// Binary layout: magic "GHL1", components u32, dims 3 x u32, lengths
/// 3 x f64, then row-major node data as little-endian f64 (vector components
/// interleaved per node).
pub fn write_scalar_snapshot(field: &ScalarField, w: &mut impl Write) -> Result<(), Error> {
    write_header(w, 1, field.grid)?;
    for v in &field.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_vector_snapshot(field: &VectorField, w: &mut impl Write) -> Result<(), Error> {
    write_header(w, 3, field.grid)?;
    for v in &field.values {
        w.write_all(&v.x.to_le_bytes())?;
        w.write_all(&v.y.to_le_bytes())?;
        w.write_all(&v.z.to_le_bytes())?;
    }
    Ok(())
}

fn write_header(w: &mut impl Write, components: u32, grid: Grid3) -> Result<(), Error> {
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&components.to_le_bytes())?;
    for d in 0..3 {
        w.write_all(&(grid.cells()[d] as u32).to_le_bytes())?;
    }
    for d in 0..3 {
        w.write_all(&grid.lengths()[d].to_le_bytes())?;
    }
    Ok(())
}

/// A parsed snapshot: either scalar or vector node data.
#[derive(Debug, Clone, PartialEq)]
pub enum Snapshot {
    Scalar(ScalarField),
    Vector(VectorField),
}

pub fn read_snapshot(r: &mut impl Read) -> Result<Snapshot, Error> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(Error::InvalidConfig("bad snapshot magic".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let components = u32::from_le_bytes(b4);
    let mut n = [0usize; 3];
    for v in n.iter_mut() {
        r.read_exact(&mut b4)?;
        *v = u32::from_le_bytes(b4) as usize;
    }
    let mut b8 = [0u8; 8];
    let mut lengths = [0.0f64; 3];
    for v in lengths.iter_mut() {
        r.read_exact(&mut b8)?;
        *v = f64::from_le_bytes(b8);
    }
    let grid = Grid3::new(n, lengths)?;
    let count = grid.node_count();
    match components {
        1 => {
            let mut values = Vec::with_capacity(count);
            for _ in 0..count {
                r.read_exact(&mut b8)?;
                values.push(f64::from_le_bytes(b8));
            }
            Ok(Snapshot::Scalar(ScalarField { grid, values }))
        }
        3 => {
            let mut values = Vec::with_capacity(count);
            for _ in 0..count {
                let mut v = [0.0f64; 3];
                for c in v.iter_mut() {
                    r.read_exact(&mut b8)?;
                    *c = f64::from_le_bytes(b8);
                }
                values.push(Vec3::from_array(v));
            }
            Ok(Snapshot::Vector(VectorField { grid, values }))
        }
        c => Err(Error::InvalidConfig(format!(
            "unsupported snapshot component count {c}"
        ))),
    }
}

/// CSV export for small grids: x1,x2,x3,value (node positions).
pub fn scalar_to_csv(field: &ScalarField) -> String {
    let mut out = String::from("x1,x2,x3,value\n");
    for (idx, v) in field.values.iter().enumerate() {
        let p = field.grid.node_position(idx);
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e}\n",
            p.x, p.y, p.z, v
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid16() -> Grid3 {
        Grid3::new([16, 16, 16], [1.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid3::new([16, 16, 12], [1.0, 1.0, 1.0]).is_err());
        assert!(Grid3::new([4, 16, 16], [1.0, 1.0, 1.0]).is_err());
        assert!(Grid3::new([16, 16, 16], [0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn deposit_single_particle_at_node() {
        let g = grid16();
        let x = g.node_position(g.index([3, 5, 7]));
        let rho = deposit_charge(&[x], &[2.0], g);
        let vol = g.cell_volume();
        assert!((rho.values[g.index([3, 5, 7])] - 2.0 / vol).abs() < 1e-9 / vol);
        let other: f64 = rho
            .values
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != g.index([3, 5, 7]))
            .map(|(_, v)| v.abs())
            .sum();
        assert!(other < 1e-12 / vol);
    }

    #[test]
    fn deposit_cell_center_splits_evenly() {
        let g = grid16();
        let h = g.spacing(0);
        let x = Vec3::new(3.5 * h, 5.5 * h, 7.5 * h);
        let rho = deposit_charge(&[x], &[1.0], g);
        let expect = 0.125 / g.cell_volume();
        for di in 0..2 {
            for dj in 0..2 {
                for dk in 0..2 {
                    let v = rho.values[g.index([3 + di, 5 + dj, 7 + dk])];
                    assert!((v - expect).abs() < 1e-12 * expect.abs());
                }
            }
        }
    }

    #[test]
    fn deposit_conserves_total_charge() {
        let g = grid16();
        let mut s = 9u64;
        let mut next = move || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let n = 500;
        let xs: Vec<Vec3> = (0..n)
            .map(|_| Vec3::new(next() * 3.0 - 1.0, next(), next()))
            .collect();
        let ws: Vec<f64> = (0..n).map(|_| next()).collect();
        let rho = deposit_charge(&xs, &ws, g);
        let total: f64 = ws.iter().sum();
        assert!((rho.integral() - total).abs() < 1e-12 * total);
    }

    #[test]
    fn fft_matches_naive_dft() {
        let n = 16;
        let fft = Fft::new(n);
        let mut s = 33u64;
        let mut next = move || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let re0: Vec<f64> = (0..n).map(|_| next()).collect();
        let im0: Vec<f64> = (0..n).map(|_| next()).collect();
        let mut re = re0.clone();
        let mut im = im0.clone();
        fft.forward(&mut re, &mut im);
        for k in 0..n {
            let mut er = 0.0;
            let mut ei = 0.0;
            for j in 0..n {
                let a = -2.0 * PI * (k * j) as f64 / n as f64;
                er += re0[j] * a.cos() - im0[j] * a.sin();
                ei += re0[j] * a.sin() + im0[j] * a.cos();
            }
            assert!((re[k] - er).abs() < 1e-12 && (im[k] - ei).abs() < 1e-12);
        }
        // Inverse returns the input.
        fft.inverse(&mut re, &mut im);
        for j in 0..n {
            assert!((re[j] - re0[j]).abs() < 1e-13 && (im[j] - im0[j]).abs() < 1e-13);
        }
    }

    #[test]
    fn poisson_eigenfunction_is_exact() {
        let g = Grid3::new([16, 16, 16], [2.0, 1.0, 1.0]).unwrap();
        let mut rho = ScalarField::zeros(g);
        let l1 = 2.0;
        for idx in 0..g.node_count() {
            let p = g.node_position(idx);
            rho.values[idx] = (2.0 * PI * p.x / l1).sin();
        }
        let (u, e) = solve_poisson(&rho);
        let scale = (l1 / (2.0 * PI)).powi(2);
        for idx in 0..g.node_count() {
            let p = g.node_position(idx);
            let expect_u = scale * (2.0 * PI * p.x / l1).sin();
            let expect_e1 = -(l1 / (2.0 * PI)) * (2.0 * PI * p.x / l1).cos();
            assert!((u.values[idx] - expect_u).abs() < 1e-12);
            assert!((e.values[idx].x - expect_e1).abs() < 1e-12);
            assert!(e.values[idx].y.abs() < 1e-13 && e.values[idx].z.abs() < 1e-13);
        }
    }

    #[test]
    fn poisson_constant_rho_gives_zero_field() {
        let g = grid16();
        let rho = ScalarField {
            grid: g,
            values: vec![3.7; g.node_count()],
        };
        let (u, e) = solve_poisson(&rho);
        for idx in 0..g.node_count() {
            assert!(u.values[idx].abs() < 1e-12);
            assert!(e.values[idx].norm() < 1e-12);
        }
    }

    #[test]
    fn poisson_residual_on_smooth_rho() {
        let g = grid16();
        let mut rho = ScalarField::zeros(g);
        for idx in 0..g.node_count() {
            let p = g.node_position(idx);
            rho.values[idx] = (2.0 * PI * p.x).sin() * (4.0 * PI * p.y).cos()
                + 0.3 * (2.0 * PI * (p.z + 0.1)).cos();
        }
        let (u, _) = solve_poisson(&rho);
        let lap = neg_laplacian(&u);
        let mean = rho.mean();
        let mut max_res = 0.0f64;
        for idx in 0..g.node_count() {
            max_res = max_res.max((lap.values[idx] - (rho.values[idx] - mean)).abs());
        }
        assert!(max_res < 1e-12, "residual {max_res}");
    }

    #[test]
    fn interpolation_examples() {
        let g = grid16();
        let field = VectorField {
            grid: g,
            values: vec![Vec3::new(1.0, 2.0, 3.0); g.node_count()],
        };
        let v = interpolate_e(&field, Vec3::new(0.313, 0.27, 0.99));
        assert!((v - Vec3::new(1.0, 2.0, 3.0)).norm() < 1e-13);

        let mut f2 = VectorField::zeros(g);
        f2.values[g.index([2, 3, 4])] = Vec3::new(0.5, -1.0, 2.0);
        let at_node = interpolate_e(&f2, g.node_position(g.index([2, 3, 4])));
        assert!((at_node - Vec3::new(0.5, -1.0, 2.0)).norm() < 1e-13);
    }

    #[test]
    fn gather_scatter_adjointness() {
        // sum_p w_p interp(E, x_p) = sum_nodes E rho_dep * cell_volume.
        let g = grid16();
        let mut s = 77u64;
        let mut next = move || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut e = VectorField::zeros(g);
        for v in e.values.iter_mut() {
            *v = Vec3::new(next() - 0.5, next() - 0.5, next() - 0.5);
        }
        let n = 200;
        let xs: Vec<Vec3> = (0..n).map(|_| Vec3::new(next(), next(), next())).collect();
        let ws: Vec<f64> = (0..n).map(|_| next()).collect();
        let lhs = xs
            .iter()
            .zip(&ws)
            .fold(Vec3::ZERO, |acc, (x, w)| acc + interpolate_e(&e, *x) * *w);
        let rho = deposit_charge(&xs, &ws, g);
        let vol = g.cell_volume();
        let rhs = e
            .values
            .iter()
            .zip(&rho.values)
            .fold(Vec3::ZERO, |acc, (ev, r)| acc + *ev * (*r * vol));
        assert!((lhs - rhs).norm() < 1e-12 * lhs.norm().max(1.0));
    }

    #[test]
    fn moment_norm_examples() {
        let g = grid16();
        // Single particle: kinetic energy w |v|^2.
        let w = 0.7;
        let v = Vec3::new(1.0, 2.0, -0.5);
        let rho = deposit_charge(&[Vec3::new(0.5, 0.5, 0.5)], &[w], g);
        let j = deposit_current(&[Vec3::new(0.5, 0.5, 0.5)], &[v], &[w], g);
        let m = moment_norms(&[w], &[v], &[0.0], &rho, &j);
        assert!((m.kinetic_energy - w * v.norm2()).abs() < 1e-14);

        // Uniform rho = c on the unit box: L^(7/5) norm = c.
        let c = 2.5;
        let uniform = ScalarField {
            grid: g,
            values: vec![c; g.node_count()],
        };
        assert!((uniform.lp_norm(7.0 / 5.0) - c).abs() < 1e-12);
    }

    #[test]
    fn snapshot_roundtrip() {
        let g = Grid3::new([8, 8, 8], [1.0, 2.0, 3.0]).unwrap();
        let mut f = ScalarField::zeros(g);
        for (i, v) in f.values.iter_mut().enumerate() {
            *v = i as f64 * 0.25 - 3.0;
        }
        let mut buf = Vec::new();
        write_scalar_snapshot(&f, &mut buf).unwrap();
        assert_eq!(&buf[0..4], b"GHL1");
        match read_snapshot(&mut buf.as_slice()).unwrap() {
            Snapshot::Scalar(g2) => assert_eq!(g2, f),
            _ => panic!("expected scalar"),
        }

        let mut vf = VectorField::zeros(g);
        for (i, v) in vf.values.iter_mut().enumerate() {
            *v = Vec3::new(i as f64, -(i as f64), 0.5);
        }
        let mut buf = Vec::new();
        write_vector_snapshot(&vf, &mut buf).unwrap();
        match read_snapshot(&mut buf.as_slice()).unwrap() {
            Snapshot::Vector(v2) => assert_eq!(v2, vf),
            _ => panic!("expected vector"),
        }
    }

    #[test]
    fn divergence_of_gradient_field() {
        // div(E) = div(-grad u) = -Delta u = rho - mean.
        let g = grid16();
        let mut rho = ScalarField::zeros(g);
        for idx in 0..g.node_count() {
            let p = g.node_position(idx);
            rho.values[idx] = (2.0 * PI * p.x).sin() + (2.0 * PI * p.y).cos();
        }
        let (_, e) = solve_poisson(&rho);
        let div = divergence(&e);
        let mean = rho.mean();
        for idx in 0..g.node_count() {
            let expect = rho.values[idx] - mean;
            assert!((div.values[idx] - expect).abs() < 1e-11);
        }
    }
}
