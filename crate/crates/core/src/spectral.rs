//! Fourier analysis on the discretized torus `(-pi, pi]^d`.
//!
//! Transforms use the convention `f^(k) = sum_x f(x) e^{i k.x}` and the
//! normalized measure `dk / (2 pi)^d`, so a grid of `M^d` nodes has node
//! weight `M^{-d}`. Half-cell shifted grids (`k_j = (2n+1) pi / M`) never
//! contain a node with a zero coordinate, which is what makes reciprocals of
//! critical symbols well defined.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{apply_monomial, csv_err, moment, LatticeFunction, Layout, MultiIndex, DEFAULT_CELL_CAP};
use crate::numerics::KahanSum;
use crate::orbit::{permutation_count, TupleSpace};
use crate::symtrans::{apply_symmetric, AxisMap};

/// Reciprocals refuse nodes whose modulus is below this threshold.
pub const POLE_THRESHOLD: f64 = 1e-13;

/// Uniform grid on the torus with `M` nodes per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusGrid {
    pub dim: usize,
    #[serde(rename = "M")]
    pub points_per_axis: usize,
    pub shifted: bool,
}

impl TorusGrid {
    pub fn new(dim: usize, points_per_axis: usize, shifted: bool) -> Result<Self> {
        if dim == 0 || points_per_axis < 2 || points_per_axis % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "grid needs d >= 1 and even M >= 2 (d = {dim}, M = {points_per_axis})"
            )));
        }
        Ok(Self {
            dim,
            points_per_axis,
            shifted,
        })
    }

    pub fn shifted(dim: usize, m: usize) -> Result<Self> {
        Self::new(dim, m, true)
    }

    pub fn m(&self) -> usize {
        self.points_per_axis
    }

    /// Node spacing `2 pi / M`.
    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.points_per_axis as f64
    }

    /// Coordinate of the node with signed index `n` in `-M/2 .. M/2`.
    pub fn coord(&self, n: i64) -> f64 {
        let m = self.points_per_axis as f64;
        if self.shifted {
            (2 * n + 1) as f64 * PI / m
        } else {
            2.0 * PI * n as f64 / m
        }
    }

    /// Number of nodes per axis up to reflection `k -> -k`.
    pub fn classes_per_axis(&self) -> usize {
        if self.shifted {
            self.points_per_axis / 2
        } else {
            self.points_per_axis / 2 + 1
        }
    }

    /// Nonnegative coordinate of reflection class `a`.
    pub fn class_coord(&self, a: usize) -> f64 {
        self.coord(a as i64).abs()
    }

    /// Number of nodes on one axis in reflection class `a`.
    pub fn class_weight(&self, a: usize) -> f64 {
        if !self.shifted && (a == 0 || a == self.points_per_axis / 2) {
            1.0
        } else {
            2.0
        }
    }

    /// Reflection class and sign of the node with signed index `n` (any integer, wrapped).
    pub fn class_of(&self, n: i64) -> (usize, f64) {
        let m = self.points_per_axis as i64;
        let n = (n + m / 2).rem_euclid(m) - m / 2;
        if self.shifted {
            if n >= 0 {
                (n as usize, 1.0)
            } else {
                ((-n - 1) as usize, -1.0)
            }
        } else if n == 0 || n == -m / 2 {
            (n.unsigned_abs() as usize, 0.0)
        } else {
            (n.unsigned_abs() as usize, n.signum() as f64)
        }
    }

    pub fn node_count(&self) -> u128 {
        (self.points_per_axis as u128).pow(self.dim as u32)
    }

    fn measure(&self) -> f64 {
        (self.points_per_axis as f64).powi(-(self.dim as i32))
    }
}

/// Transform algorithm for dense functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformMethod {
    /// Orbit engine for symmetric inputs, FFT when it fits, direct otherwise.
    Auto,
    /// Separable direct evaluation of the finite sum.
    Direct,
    /// Zero-padded FFT with a per-axis phase twist; needs `M >= 2R+1`.
    Fft,
}

#[derive(Debug, Clone)]
enum FieldData {
    /// Complex values on every node, lexicographic with the last axis fastest,
    /// node index `i` on an axis meaning signed index `i - M/2`.
    Dense(Vec<Complex64>),
    /// Real values of a fully symmetric field on sorted reflection classes.
    Orbit(Vec<f64>),
    /// `i^phase * sign(k_1)^odd * v[rest][class(k_1)]`, symmetric in `k_2..k_d`.
    Axial { odd: bool, phase: u8, values: Vec<f64> },
}

/// Samples of a transform on a torus grid.
#[derive(Debug, Clone)]
pub struct SpectralField {
    grid: TorusGrid,
    data: FieldData,
}

fn i_pow(q: u8) -> Complex64 {
    match q % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

impl SpectralField {
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn layout(&self) -> Layout {
        match &self.data {
            FieldData::Dense(_) => Layout::Dense,
            FieldData::Orbit(_) => Layout::Orbit,
            FieldData::Axial { odd: false, .. } => Layout::AxialEven,
            FieldData::Axial { odd: true, .. } => Layout::AxialOdd,
        }
    }

    /// Constant field on every node, in orbit layout.
    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        let n = TupleSpace::new(grid.classes_per_axis(), grid.dim).count();
        Self {
            grid,
            data: FieldData::Orbit(vec![c; n]),
        }
    }

    /// Symmetric field from a function of the sorted nonnegative node coordinates.
    pub fn orbit_from_fn(grid: TorusGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let space = TupleSpace::new(grid.classes_per_axis(), grid.dim);
        let values = space
            .iter()
            .map(|t| {
                let k: Vec<f64> = t.iter().map(|&a| grid.class_coord(a)).collect();
                f(&k)
            })
            .collect();
        Self {
            grid,
            data: FieldData::Orbit(values),
        }
    }

    /// Dense field from a function of the node coordinates.
    pub fn dense_from_fn(grid: TorusGrid, f: impl Fn(&[f64]) -> Complex64) -> Result<Self> {
        if grid.node_count() > DEFAULT_CELL_CAP {
            return Err(Error::MemoryCap {
                cells: grid.node_count(),
                cap: DEFAULT_CELL_CAP,
            });
        }
        let mut values = Vec::with_capacity(grid.node_count() as usize);
        for_each_node(&grid, |_, k| values.push(f(k)));
        Ok(Self {
            grid,
            data: FieldData::Dense(values),
        })
    }

    /// Value at the node with signed indices `n`.
    pub fn value(&self, n: &[i64]) -> Complex64 {
        let g = &self.grid;
        match &self.data {
            FieldData::Dense(v) => {
                let m = g.points_per_axis as i64;
                let idx = n
                    .iter()
                    .fold(0i64, |acc, &c| acc * m + (c + m / 2).rem_euclid(m));
                v[idx as usize]
            }
            FieldData::Orbit(v) => {
                let mut t: Vec<usize> = n.iter().map(|&c| g.class_of(c).0).collect();
                t.sort_unstable();
                let space = TupleSpace::new(g.classes_per_axis(), g.dim);
                Complex64::new(v[space.rank(&t)], 0.0)
            }
            FieldData::Axial { odd, phase, values } => {
                let (a1, s1) = g.class_of(n[0]);
                let mut t: Vec<usize> = n[1..].iter().map(|&c| g.class_of(c).0).collect();
                t.sort_unstable();
                let space = TupleSpace::new(g.classes_per_axis(), g.dim - 1);
                let v = values[space.rank(&t) * g.classes_per_axis() + a1];
                let s = if *odd { s1 } else { 1.0 };
                i_pow(*phase) * (s * v)
            }
        }
    }

    /// Visits each stored node class as `(representative k, value, node count)`.
    ///
    /// Representatives have nonnegative coordinates; for axial fields the
    /// value is the one at `k_1 >= 0`, and the class covers both signs of `k_1`.
    pub fn for_each_class(&self, mut f: impl FnMut(&[f64], Complex64, f64)) {
        let g = &self.grid;
        match &self.data {
            FieldData::Dense(v) => {
                let mut i = 0;
                for_each_node(g, |_, k| {
                    f(k, v[i], 1.0);
                    i += 1;
                });
            }
            FieldData::Orbit(v) => {
                let space = TupleSpace::new(g.classes_per_axis(), g.dim);
                let mut k = vec![0.0; g.dim];
                for (t, &val) in space.iter().zip(v) {
                    let mut mult = permutation_count(&t);
                    for (kj, &a) in k.iter_mut().zip(&t) {
                        *kj = g.class_coord(a);
                        mult *= g.class_weight(a);
                    }
                    f(&k, Complex64::new(val, 0.0), mult);
                }
            }
            FieldData::Axial { phase, values, .. } => {
                let space = TupleSpace::new(g.classes_per_axis(), g.dim - 1);
                let side = g.classes_per_axis();
                let ph = i_pow(*phase);
                let mut k = vec![0.0; g.dim];
                for (ri, t) in space.iter().enumerate() {
                    let mut mult = permutation_count(&t);
                    for (kj, &a) in k[1..].iter_mut().zip(&t) {
                        *kj = g.class_coord(a);
                        mult *= g.class_weight(a);
                    }
                    for a1 in 0..side {
                        k[0] = g.class_coord(a1);
                        f(&k, ph * values[ri * side + a1], mult * g.class_weight(a1));
                    }
                }
            }
        }
    }

    /// Values of a dense field, node index `(n + M/2) mod M` per axis with the
    /// last axis fastest.
    pub(crate) fn dense_values(&self) -> Option<&[Complex64]> {
        match &self.data {
            FieldData::Dense(v) => Some(v),
            _ => None,
        }
    }

    pub(crate) fn from_dense(grid: TorusGrid, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len() as u128, grid.node_count());
        Self {
            grid,
            data: FieldData::Dense(values),
        }
    }

    /// Largest imaginary part over all nodes.
    pub fn max_imag(&self) -> f64 {
        let mut m = 0.0_f64;
        self.for_each_class(|_, v, _| m = m.max(v.im.abs()));
        m
    }

    /// Dense copy (every node), refusing grids above the cell cap.
    pub fn to_dense(&self) -> Result<Self> {
        if let FieldData::Dense(_) = self.data {
            return Ok(self.clone());
        }
        if self.grid.node_count() > DEFAULT_CELL_CAP {
            return Err(Error::MemoryCap {
                cells: self.grid.node_count(),
                cap: DEFAULT_CELL_CAP,
            });
        }
        let mut values = Vec::with_capacity(self.grid.node_count() as usize);
        for_each_node(&self.grid, |n, _| values.push(self.value(n)));
        Ok(Self {
            grid: self.grid,
            data: FieldData::Dense(values),
        })
    }

    /// Nodewise combination of fields sharing grid and layout.
    ///
    /// Orbit-layout results keep only the real part of `f`.
    pub fn combine(fields: &[&SpectralField], f: impl Fn(&[Complex64]) -> Complex64 + Sync) -> Result<Self> {
        let first = fields
            .first()
            .ok_or_else(|| Error::InvalidParameter("no fields to combine".into()))?;
        for other in fields {
            if other.grid != first.grid {
                return Err(Error::InvalidParameter("fields live on different grids".into()));
            }
        }
        if fields.iter().any(|x| x.layout() != first.layout()) {
            let dense: Vec<SpectralField> = fields.iter().map(|x| x.to_dense()).collect::<Result<_>>()?;
            let refs: Vec<&SpectralField> = dense.iter().collect();
            return Self::combine(&refs, f);
        }
        let nfields = fields.len();
        let data = match &first.data {
            FieldData::Orbit(v0) => {
                let cols: Vec<&[f64]> = fields
                    .iter()
                    .map(|x| match &x.data {
                        FieldData::Orbit(v) => v.as_slice(),
                        _ => unreachable!("layouts checked"),
                    })
                    .collect();
                let out = (0..v0.len())
                    .into_par_iter()
                    .map(|i| {
                        let args: Vec<Complex64> = (0..nfields).map(|j| Complex64::new(cols[j][i], 0.0)).collect();
                        f(&args).re
                    })
                    .collect();
                FieldData::Orbit(out)
            }
            FieldData::Dense(v0) => {
                let cols: Vec<&[Complex64]> = fields
                    .iter()
                    .map(|x| match &x.data {
                        FieldData::Dense(v) => v.as_slice(),
                        _ => unreachable!("layouts checked"),
                    })
                    .collect();
                let out = (0..v0.len())
                    .into_par_iter()
                    .map(|i| {
                        let args: Vec<Complex64> = (0..nfields).map(|j| cols[j][i]).collect();
                        f(&args)
                    })
                    .collect();
                FieldData::Dense(out)
            }
            FieldData::Axial { .. } => {
                let dense: Vec<SpectralField> = fields.iter().map(|x| x.to_dense()).collect::<Result<_>>()?;
                let refs: Vec<&SpectralField> = dense.iter().collect();
                return Self::combine(&refs, f);
            }
        };
        Ok(Self { grid: first.grid, data })
    }

    /// The same symmetric field viewed in axial layout.
    fn orbit_as_axial(&self) -> Self {
        let FieldData::Orbit(v) = &self.data else {
            return self.clone();
        };
        let side = self.grid.classes_per_axis();
        let full = TupleSpace::new(side, self.grid.dim);
        let rest = TupleSpace::new(side, self.grid.dim - 1);
        let mut values = Vec::with_capacity(rest.count() * side);
        for t in rest.iter() {
            for a1 in 0..side {
                values.push(v[full.rank_insert(&t, a1)]);
            }
        }
        Self {
            grid: self.grid,
            data: FieldData::Axial {
                odd: false,
                phase: 0,
                values,
            },
        }
    }

    /// Nodewise reciprocal with the pole guard.
    pub fn reciprocal(&self) -> Result<Self> {
        self.check_poles()?;
        Self::combine(&[self], |v| 1.0 / v[0])
    }

    /// Fails with the first node whose modulus is below [`POLE_THRESHOLD`].
    pub fn check_poles(&self) -> Result<()> {
        let mut pole: Option<(Vec<f64>, f64)> = None;
        self.for_each_class(|k, v, _| {
            if pole.is_none() && v.norm() < POLE_THRESHOLD {
                pole = Some((k.to_vec(), v.norm()));
            }
        });
        match pole {
            Some((node, value)) => Err(Error::PoleOnGrid { node, value }),
            None => Ok(()),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        let data = match &self.data {
            FieldData::Dense(v) => FieldData::Dense(v.iter().map(|z| z * c).collect()),
            FieldData::Orbit(v) => FieldData::Orbit(v.iter().map(|z| z * c).collect()),
            FieldData::Axial { odd, phase, values } => FieldData::Axial {
                odd: *odd,
                phase: *phase,
                values: values.iter().map(|z| z * c).collect(),
            },
        };
        Self { grid: self.grid, data }
    }

    /// Multiplies every value by `i^q`.
    pub fn times_i_pow(&self, q: u32) -> Self {
        let q = (q % 4) as u8;
        let data = match &self.data {
            FieldData::Dense(v) => FieldData::Dense(v.iter().map(|z| z * i_pow(q)).collect()),
            FieldData::Orbit(v) => match q {
                0 => FieldData::Orbit(v.clone()),
                2 => FieldData::Orbit(v.iter().map(|z| -z).collect()),
                _ => return self.orbit_as_axial().times_i_pow(q as u32),
            },
            FieldData::Axial { odd, phase, values } => FieldData::Axial {
                odd: *odd,
                phase: (phase + q) % 4,
                values: values.clone(),
            },
        };
        Self { grid: self.grid, data }
    }

    /// `v(k + s e_1) - v(k - s e_1)` for a shift of `steps` grid spacings,
    /// with periodic wraparound.
    pub fn shift_difference(&self, steps: i64) -> Result<Self> {
        let g = self.grid;
        let side = g.classes_per_axis();
        // class a1 is represented by the node with signed index a1 (k_1 >= 0)
        let shift_class = |a1: usize, dir: i64| g.class_of(a1 as i64 + dir * steps);
        match &self.data {
            FieldData::Dense(v) => {
                let m = g.points_per_axis;
                let inner: usize = m.pow((g.dim - 1) as u32);
                let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
                out.par_chunks_mut(inner).enumerate().for_each(|(i1, chunk)| {
                    let plus = (i1 as i64 + steps).rem_euclid(m as i64) as usize;
                    let minus = (i1 as i64 - steps).rem_euclid(m as i64) as usize;
                    for (j, o) in chunk.iter_mut().enumerate() {
                        *o = v[plus * inner + j] - v[minus * inner + j];
                    }
                });
                Ok(Self {
                    grid: g,
                    data: FieldData::Dense(out),
                })
            }
            FieldData::Orbit(v) => {
                let full = TupleSpace::new(side, g.dim);
                let rest_space = TupleSpace::new(side, g.dim - 1);
                let rests: Vec<Vec<usize>> = rest_space.iter().collect();
                let values: Vec<f64> = rests
                    .par_iter()
                    .flat_map_iter(|rest| {
                        let full = &full;
                        (0..side).map(move |a1| {
                            let (ap, _) = shift_class(a1, 1);
                            let (am, _) = shift_class(a1, -1);
                            v[full.rank_insert(rest, ap)] - v[full.rank_insert(rest, am)]
                        })
                    })
                    .collect();
                Ok(Self {
                    grid: g,
                    data: FieldData::Axial {
                        odd: true,
                        phase: 0,
                        values,
                    },
                })
            }
            FieldData::Axial { odd, phase, values } => {
                let nrest = values.len() / side;
                let mut out = vec![0.0; values.len()];
                out.par_chunks_mut(side).enumerate().for_each(|(ri, chunk)| {
                    let row = &values[ri * side..(ri + 1) * side];
                    for (a1, o) in chunk.iter_mut().enumerate() {
                        let (ap, sp) = shift_class(a1, 1);
                        let (am, sm) = shift_class(a1, -1);
                        let (sp, sm) = if *odd { (sp, sm) } else { (1.0, 1.0) };
                        *o = sp * row[ap] - sm * row[am];
                    }
                });
                debug_assert_eq!(nrest * side, out.len());
                Ok(Self {
                    grid: g,
                    data: FieldData::Axial {
                        odd: !odd,
                        phase: *phase,
                        values: out,
                    },
                })
            }
        }
    }

    /// CSV rows `k1,...,kd,re,im`; symmetric layouts emit one row per class.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut head: Vec<String> = (1..=self.grid.dim).map(|j| format!("k{j}")).collect();
        head.push("re".into());
        head.push("im".into());
        wtr.write_record(&head).map_err(csv_err)?;
        let mut err = None;
        self.for_each_class(|k, v, _| {
            if err.is_some() {
                return;
            }
            let mut rec: Vec<String> = k.iter().map(|c| c.to_string()).collect();
            rec.push(v.re.to_string());
            rec.push(v.im.to_string());
            if let Err(e) = wtr.write_record(&rec) {
                err = Some(csv_err(e));
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Visits every node as `(signed indices, coordinates)`, lexicographic order.
pub fn for_each_node(grid: &TorusGrid, mut f: impl FnMut(&[i64], &[f64])) {
    let half = (grid.points_per_axis / 2) as i64;
    let mut n = vec![-half; grid.dim];
    let mut k: Vec<f64> = n.iter().map(|&c| grid.coord(c)).collect();
    loop {
        f(&n, &k);
        let mut j = grid.dim;
        loop {
            if j == 0 {
                return;
            }
            j -= 1;
            if n[j] < half - 1 {
                n[j] += 1;
                k[j] = grid.coord(n[j]);
                break;
            }
            n[j] = -half;
            k[j] = grid.coord(n[j]);
        }
    }
}

// ----- forward transforms --------------------------------------------------------

fn forward_cos_map(grid: &TorusGrid, radius: usize) -> AxisMap {
    AxisMap::from_fn(grid.classes_per_axis(), radius + 1, |a, x| {
        let w = if x == 0 { 1.0 } else { 2.0 };
        w * (grid.class_coord(a) * x as f64).cos()
    })
}

/// `f^(k) = sum_x f(x) e^{i k.x}` at every node.
pub fn forward_transform(f: &LatticeFunction, grid: &TorusGrid) -> Result<SpectralField> {
    forward_transform_with(f, grid, TransformMethod::Auto)
}

pub fn forward_transform_with(f: &LatticeFunction, grid: &TorusGrid, method: TransformMethod) -> Result<SpectralField> {
    if f.dim() != grid.dim {
        return Err(Error::DimensionMismatch(f.dim(), grid.dim));
    }
    let r = f.radius();
    if method == TransformMethod::Fft && grid.points_per_axis < 2 * r + 1 {
        return Err(Error::GridTooSmall {
            m: grid.points_per_axis,
            r,
        });
    }
    match (f.layout(), method) {
        (Layout::Orbit, TransformMethod::Auto) => {
            let map = forward_cos_map(grid, r);
            let values = apply_symmetric(f.raw_values(), 1, grid.dim, &map);
            Ok(SpectralField {
                grid: *grid,
                data: FieldData::Orbit(values),
            })
        }
        (Layout::AxialEven | Layout::AxialOdd, TransformMethod::Auto) => {
            let odd = f.layout() == Layout::AxialOdd;
            let side = r + 1;
            let map = forward_cos_map(grid, r);
            let rest = apply_symmetric(f.raw_values(), side, grid.dim - 1, &map);
            let k1 = AxisMap::from_fn(grid.classes_per_axis(), side, |a, x| {
                let kx = grid.class_coord(a) * x as f64;
                match (odd, x) {
                    (false, 0) => 1.0,
                    (false, _) => 2.0 * kx.cos(),
                    (true, _) => 2.0 * kx.sin(),
                }
            });
            let classes = grid.classes_per_axis();
            let nrest = rest.len() / side;
            let mut values = vec![0.0; nrest * classes];
            values.par_chunks_mut(classes).enumerate().for_each(|(ri, out)| {
                let src = &rest[ri * side..(ri + 1) * side];
                for (a, o) in out.iter_mut().enumerate() {
                    *o = k1.row(a).iter().zip(src).map(|(m, s)| m * s).sum();
                }
            });
            Ok(SpectralField {
                grid: *grid,
                data: FieldData::Axial {
                    odd,
                    phase: u8::from(odd),
                    values,
                },
            })
        }
        (_, method) => {
            let dense = f.to_dense()?;
            let use_fft = match method {
                TransformMethod::Fft => true,
                TransformMethod::Direct => false,
                TransformMethod::Auto => grid.points_per_axis >= 2 * r + 1,
            };
            let values: Vec<Complex64> = dense.raw_values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
            let out = dense_forward(values, grid, r, use_fft)?;
            Ok(SpectralField {
                grid: *grid,
                data: FieldData::Dense(out),
            })
        }
    }
}

/// Applies a line map along every axis of a dense complex tensor.
fn apply_axes(
    mut data: Vec<Complex64>,
    dim: usize,
    in_len: usize,
    out_len: usize,
    line: impl Fn(&[Complex64], &mut [Complex64]) + Sync,
) -> Vec<Complex64> {
    let mut shape = vec![in_len; dim];
    for axis in 0..dim {
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mut next = vec![Complex64::new(0.0, 0.0); outer * out_len * inner];
        next.par_chunks_mut(out_len * inner).enumerate().for_each(|(o, block)| {
            let mut src = vec![Complex64::new(0.0, 0.0); in_len];
            let mut dst = vec![Complex64::new(0.0, 0.0); out_len];
            for i in 0..inner {
                for (j, s) in src.iter_mut().enumerate() {
                    *s = data[(o * in_len + j) * inner + i];
                }
                line(&src, &mut dst);
                for (j, d) in dst.iter().enumerate() {
                    block[j * inner + i] = *d;
                }
            }
        });
        shape[axis] = out_len;
        data = next;
    }
    data
}

fn check_dense_grid(grid: &TorusGrid) -> Result<()> {
    if grid.node_count() > DEFAULT_CELL_CAP {
        return Err(Error::MemoryCap {
            cells: grid.node_count(),
            cap: DEFAULT_CELL_CAP,
        });
    }
    Ok(())
}

fn dense_forward(values: Vec<Complex64>, grid: &TorusGrid, radius: usize, fft: bool) -> Result<Vec<Complex64>> {
    check_dense_grid(grid)?;
    let m = grid.points_per_axis;
    let side = 2 * radius + 1;
    let r = radius as i64;
    if fft {
        let plan = FftPlanner::new().plan_fft_inverse(m);
        let theta = grid.spacing();
        let s = if grid.shifted { 1.0 } else { 0.0 };
        let twist: Vec<Complex64> = (-r..=r)
            .map(|x| {
                let sign = if x.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                Complex64::from_polar(sign, s * theta * x as f64 / 2.0)
            })
            .collect();
        Ok(apply_axes(values, grid.dim, side, m, |src, dst| {
            dst.fill(Complex64::new(0.0, 0.0));
            for (j, (v, t)) in src.iter().zip(&twist).enumerate() {
                let x = j as i64 - r;
                dst[x.rem_euclid(m as i64) as usize] += v * t;
            }
            plan.process(dst);
        }))
    } else {
        let half = (m / 2) as i64;
        let mat: Vec<Complex64> = (0..m as i64)
            .flat_map(|i| {
                let k = grid.coord(i - half);
                (-r..=r).map(move |x| Complex64::from_polar(1.0, k * x as f64))
            })
            .collect();
        Ok(apply_axes(values, grid.dim, side, m, |src, dst| {
            for (i, d) in dst.iter_mut().enumerate() {
                let row = &mat[i * side..(i + 1) * side];
                *d = row.iter().zip(src).map(|(a, b)| a * b).sum();
            }
        }))
    }
}

/// Transform of `(i x)^alpha f(x)`, the exact `alpha`-th derivative of `f^`.
pub fn spectral_derivative(f: &LatticeFunction, alpha: &MultiIndex, grid: &TorusGrid) -> Result<SpectralField> {
    let weighted = apply_monomial(f, alpha)?;
    Ok(forward_transform(&weighted, grid)?.times_i_pow(alpha.order()))
}

/// `(sum_k |v(k)|^p M^{-d})^{1/p}`; `p = inf` gives the max modulus.
pub fn lp_norm(field: &SpectralField, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("L^p norm needs p >= 1, got {p}")));
    }
    if p.is_infinite() {
        let mut m = 0.0_f64;
        field.for_each_class(|_, v, _| m = m.max(v.norm()));
        return Ok(m);
    }
    let mut acc = KahanSum::new();
    field.for_each_class(|_, v, mult| {
        let a = v.norm();
        if a > 0.0 {
            acc.add(mult * if p == 1.0 { a } else { a.powf(p) });
        }
    });
    Ok((acc.value() * field.grid.measure()).powf(1.0 / p))
}

// ----- inverse transforms --------------------------------------------------------

/// `M^{-d} sum_k e^{-i k.x} v(k)` on the box of radius `R`, with `v` the field
/// values or their reciprocals.
pub fn inverse_on_box(field: &SpectralField, radius: usize, reciprocal: bool) -> Result<LatticeFunction> {
    Ok(inverse_on_box_many(&[field], radius, reciprocal)?.remove(0))
}

/// Several inverse transforms sharing one pass of the orbit engine.
pub fn inverse_on_box_many(fields: &[&SpectralField], radius: usize, reciprocal: bool) -> Result<Vec<LatticeFunction>> {
    let Some(first) = fields.first() else {
        return Ok(Vec::new());
    };
    let grid = first.grid;
    if grid.points_per_axis < 4 * radius {
        log::warn!(
            "inverse on box R = {radius} with M = {}: M >= 4R recommended to limit periodization",
            grid.points_per_axis
        );
    }
    let prepared: Vec<SpectralField> = fields
        .iter()
        .map(|f| if reciprocal { f.reciprocal() } else { Ok((*f).clone()) })
        .collect::<Result<_>>()?;
    if prepared.iter().all(|f| matches!(f.data, FieldData::Orbit(_)) && f.grid == grid) {
        let ch = prepared.len();
        let n = match &prepared[0].data {
            FieldData::Orbit(v) => v.len(),
            _ => unreachable!(),
        };
        let mut interleaved = vec![0.0; n * ch];
        for (c, f) in prepared.iter().enumerate() {
            if let FieldData::Orbit(v) = &f.data {
                for (i, x) in v.iter().enumerate() {
                    interleaved[i * ch + c] = *x;
                }
            }
        }
        let m = grid.points_per_axis as f64;
        let map = AxisMap::from_fn(radius + 1, grid.classes_per_axis(), |x, a| {
            grid.class_weight(a) * (grid.class_coord(a) * x as f64).cos() / m
        });
        let out = apply_symmetric(&interleaved, ch, grid.dim, &map);
        let count = out.len() / ch;
        return (0..ch)
            .map(|c| {
                let v: Vec<f64> = (0..count).map(|i| out[i * ch + c]).collect();
                LatticeFunction::orbit(grid.dim, radius, v)
            })
            .collect();
    }
    prepared
        .iter()
        .map(|f| {
            let dense = f.to_dense()?;
            let FieldData::Dense(values) = dense.data else {
                unreachable!("to_dense returns dense data")
            };
            let out = dense_inverse(values, &f.grid, radius)?;
            let real: Vec<f64> = out.iter().map(|z| z.re).collect();
            LatticeFunction::dense(grid.dim, radius, real)
        })
        .collect()
}

fn dense_inverse(values: Vec<Complex64>, grid: &TorusGrid, radius: usize) -> Result<Vec<Complex64>> {
    check_dense_grid(grid)?;
    let m = grid.points_per_axis;
    let side = 2 * radius + 1;
    let r = radius as i64;
    let plan = FftPlanner::new().plan_fft_forward(m);
    let theta = grid.spacing();
    let s = if grid.shifted { 1.0 } else { 0.0 };
    let twist: Vec<Complex64> = (-r..=r)
        .map(|x| {
            let sign = if x.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            Complex64::from_polar(sign / m as f64, -s * theta * x as f64 / 2.0)
        })
        .collect();
    Ok(apply_axes(values, grid.dim, m, side, |src, dst| {
        let mut buf = src.to_vec();
        plan.process(&mut buf);
        for (j, d) in dst.iter_mut().enumerate() {
            let x = j as i64 - r;
            *d = buf[x.rem_euclid(m as i64) as usize] * twist[j];
        }
    }))
}

// ----- infrared bound --------------------------------------------------------------

/// Grid estimate of the infrared constant `K_2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfraredReport {
    /// `min_k (f^(k) - f^(0)) / |k|^2` over nodes with `k != 0`.
    #[serde(rename = "K2_est")]
    pub k2_est: f64,
    pub argmin_node: Vec<f64>,
    /// `sum_x f(x)`, by direct summation.
    pub f_hat_zero: f64,
}

impl InfraredReport {
    /// `K2_est > 0` and `f^(0) >= -1e-12`.
    pub fn holds(&self) -> bool {
        self.k2_est > 0.0 && self.f_hat_zero >= -1e-12
    }
}

pub fn infrared_check(f: &LatticeFunction, grid: &TorusGrid) -> Result<InfraredReport> {
    let field = forward_transform(f, grid)?;
    let f0 = moment(f, 0.0, false);
    let mut best = f64::INFINITY;
    let mut arg = vec![0.0; grid.dim];
    field.for_each_class(|k, v, _| {
        let k2: f64 = k.iter().map(|c| c * c).sum();
        if k2 > 0.0 {
            let q = (v.re - f0) / k2;
            if q < best {
                best = q;
                arg = k.to_vec();
            }
        }
    });
    Ok(InfraredReport {
        k2_est: best,
        argmin_node: arg,
        f_hat_zero: f0,
    })
}
