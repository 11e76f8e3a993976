//! Box-truncated real functions on Z^d.
//!
//! A [`LatticeFunction`] lives on the box `[-R, R]^d` and is zero outside.
//! Three storage layouts are supported:
//!
//! * `Dense`: every box point, lexicographic order with the last axis fastest.
//! * `Orbit`: one value per hyperoctahedral orbit, indexed by the sorted
//!   absolute coordinates. Symmetric by construction and the only layout that
//!   scales to d = 5 boxes of radius 32.
//! * `Axial`: symmetric in the last `d - 1` coordinates and even or odd in the
//!   first one. This is the shape of `x_1^a f(x)` for symmetric `f`.

use std::io::{Read, Write};
use std::path::Path;

use base64::Engine as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{fit_line, KahanSum};
use crate::orbit::{lattice_orbit_size, TupleSpace};

/// Largest supported dimension; lookups use fixed-size stack buffers.
pub const MAX_DIM: usize = 16;

/// Default cap on the number of cells a dense expansion may allocate.
pub const DEFAULT_CELL_CAP: u128 = 1 << 27;

/// A point of Z^d.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticePoint(pub Vec<i64>);

impl LatticePoint {
    pub fn origin(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    /// `r e_axis`.
    pub fn on_axis(dim: usize, axis: usize, r: i64) -> Self {
        let mut v = vec![0; dim];
        v[axis] = r;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm_sq(&self) -> i64 {
        self.0.iter().map(|c| c * c).sum()
    }

    pub fn norm(&self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    /// `max(|x|, 1)`.
    pub fn bracket(&self) -> f64 {
        bracket_of_norm(self.norm())
    }
}

#[inline]
pub fn bracket_of_norm(r: f64) -> f64 {
    r.max(1.0)
}

/// A multi-index of nonnegative orders.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    /// `order e_axis`.
    pub fn along(dim: usize, axis: usize, order: u32) -> Self {
        let mut v = vec![0; dim];
        v[axis] = order;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `|alpha|`.
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    /// The axis carrying all of the order, when at most one entry is nonzero.
    pub fn single_axis(&self) -> Option<(usize, u32)> {
        let nz: Vec<_> = self.0.iter().enumerate().filter(|(_, &a)| a > 0).collect();
        match nz.as_slice() {
            [] => Some((0, 0)),
            [(axis, &a)] => Some((*axis, a)),
            _ => None,
        }
    }

    /// `x^alpha` with `0^0 = 1`.
    pub fn monomial(&self, x: &[i64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .map(|(&a, &c)| (c as f64).powi(a as i32))
            .product()
    }
}

/// An element of the hyperoctahedral group: `(g x)_i = s_i x_{perm[i]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedPermutation {
    pub perm: Vec<usize>,
    pub flips: Vec<bool>,
}

impl SignedPermutation {
    pub fn identity(dim: usize) -> Self {
        Self {
            perm: (0..dim).collect(),
            flips: vec![false; dim],
        }
    }

    pub fn reflection(dim: usize, axis: usize) -> Self {
        let mut g = Self::identity(dim);
        g.flips[axis] = true;
        g
    }

    pub fn transposition(dim: usize, i: usize, j: usize) -> Self {
        let mut g = Self::identity(dim);
        g.perm.swap(i, j);
        g
    }

    pub fn apply(&self, x: &[i64]) -> Vec<i64> {
        self.perm
            .iter()
            .zip(&self.flips)
            .map(|(&p, &f)| if f { -x[p] } else { x[p] })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryTag {
    Unknown,
    Declared,
    Verified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Dense,
    Orbit,
    AxialEven,
    AxialOdd,
}

#[derive(Debug, Clone)]
enum Storage {
    Dense(Vec<f64>),
    Orbit(Vec<f64>),
    Axial { odd: bool, values: Vec<f64> },
}

/// A real function on Z^d supported in the box `[-R, R]^d`.
#[derive(Debug, Clone)]
pub struct LatticeFunction {
    dim: usize,
    radius: usize,
    storage: Storage,
    symmetry: SymmetryTag,
    tuples: Option<TupleSpace>,
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::InvalidParameter(format!("dimension {dim} outside 1..={MAX_DIM}")));
    }
    Ok(())
}

fn dense_cells(dim: usize, radius: usize) -> u128 {
    ((2 * radius + 1) as u128).pow(dim as u32)
}

/// Sorted absolute coordinates written into a stack buffer.
#[inline]
fn sorted_abs_into(x: &[i64], buf: &mut [usize; MAX_DIM]) -> usize {
    let d = x.len();
    for (b, c) in buf.iter_mut().zip(x) {
        *b = c.unsigned_abs() as usize;
    }
    buf[..d].sort_unstable();
    d
}

impl LatticeFunction {
    // ----- constructors -------------------------------------------------

    /// Dense function from values in lexicographic box order.
    pub fn dense(dim: usize, radius: usize, values: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        let cells = dense_cells(dim, radius);
        if values.len() as u128 != cells {
            return Err(Error::InvalidParameter(format!(
                "dense function needs {cells} values, got {}",
                values.len()
            )));
        }
        ensure_finite(&values)?;
        Ok(Self {
            dim,
            radius,
            storage: Storage::Dense(values),
            symmetry: SymmetryTag::Unknown,
            tuples: None,
        })
    }

    /// Dense function evaluated pointwise on the box.
    pub fn dense_from_fn(dim: usize, radius: usize, f: impl Fn(&[i64]) -> f64) -> Result<Self> {
        check_dim(dim)?;
        let cells = dense_cells(dim, radius);
        if cells > DEFAULT_CELL_CAP {
            return Err(Error::MemoryCap { cells, cap: DEFAULT_CELL_CAP });
        }
        let mut values = Vec::with_capacity(cells as usize);
        for_each_box_point(dim, radius, |x| values.push(f(x)));
        Self::dense(dim, radius, values)
    }

    /// Symmetric function from its values on sorted absolute coordinates.
    pub fn orbit_from_fn(dim: usize, radius: usize, f: impl Fn(&[usize]) -> f64) -> Result<Self> {
        check_dim(dim)?;
        let space = TupleSpace::new(radius + 1, dim);
        let values: Vec<f64> = space.iter().map(|t| f(&t)).collect();
        Self::orbit(dim, radius, values)
    }

    /// Symmetric function from values in orbit-representative rank order.
    pub fn orbit(dim: usize, radius: usize, values: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        let space = TupleSpace::new(radius + 1, dim);
        if values.len() != space.count() {
            return Err(Error::InvalidParameter(format!(
                "orbit function needs {} values, got {}",
                space.count(),
                values.len()
            )));
        }
        ensure_finite(&values)?;
        Ok(Self {
            dim,
            radius,
            storage: Storage::Orbit(values),
            symmetry: SymmetryTag::Verified,
            tuples: Some(space),
        })
    }

    /// Axial function from values laid out as `[rest rank][|x_1|]`.
    pub fn axial(dim: usize, radius: usize, odd: bool, values: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        let space = TupleSpace::new(radius + 1, dim - 1);
        if values.len() != space.count() * (radius + 1) {
            return Err(Error::InvalidParameter("axial value count mismatch".into()));
        }
        ensure_finite(&values)?;
        Ok(Self {
            dim,
            radius,
            storage: Storage::Axial { odd, values },
            symmetry: SymmetryTag::Unknown,
            tuples: Some(space),
        })
    }

    /// Kronecker delta at the origin.
    pub fn delta(dim: usize) -> Self {
        Self::orbit_from_fn(dim, 0, |_| 1.0).expect("valid delta")
    }

    /// Nearest-neighbour step distribution `D(x) = 1/(2d)` for `|x| = 1`.
    pub fn nearest_neighbour(dim: usize) -> Self {
        let w = 1.0 / (2.0 * dim as f64);
        Self::orbit_from_fn(dim, 1, |t| {
            let s: usize = t.iter().sum();
            if s == 1 {
                w
            } else {
                0.0
            }
        })
        .expect("valid step distribution")
    }

    // ----- accessors ------------------------------------------------------

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn symmetry(&self) -> SymmetryTag {
        self.symmetry
    }

    pub fn layout(&self) -> Layout {
        match &self.storage {
            Storage::Dense(_) => Layout::Dense,
            Storage::Orbit(_) => Layout::Orbit,
            Storage::Axial { odd: false, .. } => Layout::AxialEven,
            Storage::Axial { odd: true, .. } => Layout::AxialOdd,
        }
    }

    /// Raw stored values in layout order.
    pub fn raw_values(&self) -> &[f64] {
        match &self.storage {
            Storage::Dense(v) | Storage::Orbit(v) => v,
            Storage::Axial { values, .. } => values,
        }
    }

    /// Marks a dense function as symmetric without checking.
    pub fn declare_symmetric(mut self) -> Self {
        if self.symmetry == SymmetryTag::Unknown {
            self.symmetry = SymmetryTag::Declared;
        }
        self
    }

    pub fn is_fully_symmetric(&self) -> bool {
        self.symmetry == SymmetryTag::Verified
    }

    /// Value at `x`; zero outside the box.
    pub fn value(&self, x: &[i64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let r = self.radius as i64;
        if x.iter().any(|c| c.abs() > r) {
            return 0.0;
        }
        match &self.storage {
            Storage::Dense(v) => v[dense_index(x, self.radius)],
            Storage::Orbit(v) => {
                let mut buf = [0usize; MAX_DIM];
                let d = sorted_abs_into(x, &mut buf);
                v[self.tuples.as_ref().expect("orbit space").rank(&buf[..d])]
            }
            Storage::Axial { odd, values } => {
                let mut buf = [0usize; MAX_DIM];
                let d = sorted_abs_into(&x[1..], &mut buf);
                let rest = self.tuples.as_ref().expect("axial space").rank(&buf[..d]);
                let a = x[0].unsigned_abs() as usize;
                let v = values[rest * (self.radius + 1) + a];
                if *odd && x[0] < 0 {
                    -v
                } else {
                    v
                }
            }
        }
    }

    pub fn value_at(&self, x: &LatticePoint) -> f64 {
        self.value(&x.0)
    }

    /// Value at a sorted nonnegative tuple (orbit representative).
    pub fn value_sorted(&self, t: &[usize]) -> f64 {
        match &self.storage {
            Storage::Orbit(v) => {
                if t.iter().any(|&a| a > self.radius) {
                    0.0
                } else {
                    v[self.tuples.as_ref().expect("orbit space").rank(t)]
                }
            }
            _ => {
                let x: Vec<i64> = t.iter().map(|&a| a as i64).collect();
                self.value(&x)
            }
        }
    }

    /// Calls `f(x, value)` for every box point in lexicographic order.
    pub fn for_each_point(&self, mut f: impl FnMut(&[i64], f64)) {
        for_each_box_point(self.dim, self.radius, |x| f(x, self.value(x)));
    }

    /// Samples used for radial statistics: `(point, value, multiplicity)`.
    ///
    /// Fully symmetric functions contribute one sample per orbit with
    /// nonnegative sorted coordinates; other functions contribute every point.
    pub fn samples(&self) -> Vec<(Vec<i64>, f64, f64)> {
        if self.is_fully_symmetric() {
            let space = TupleSpace::new(self.radius + 1, self.dim);
            space
                .iter()
                .map(|t| {
                    let v = self.value_sorted(&t);
                    let m = lattice_orbit_size(&t);
                    (t.into_iter().map(|a| a as i64).collect(), v, m)
                })
                .collect()
        } else {
            let mut out = Vec::new();
            self.for_each_point(|x, v| out.push((x.to_vec(), v, 1.0)));
            out
        }
    }

    /// Every nonzero point with its value, in a fixed order.
    pub fn nonzero_points(&self) -> PointList {
        let mut list = PointList {
            dim: self.dim,
            coords: Vec::new(),
            values: Vec::new(),
        };
        match &self.storage {
            Storage::Orbit(v) => {
                let space = self.tuples.as_ref().expect("orbit space");
                for (t, &val) in space.iter().zip(v) {
                    if val != 0.0 {
                        expand_orbit(&t, |x| list.push(x, val));
                    }
                }
            }
            _ => self.for_each_point(|x, v| {
                if v != 0.0 {
                    list.push(x, v)
                }
            }),
        }
        list
    }

    // ----- conversions ----------------------------------------------------

    /// Dense copy, refusing expansions above `cap` cells.
    pub fn to_dense_capped(&self, cap: u128) -> Result<Self> {
        if let Storage::Dense(_) = self.storage {
            return Ok(self.clone());
        }
        let cells = dense_cells(self.dim, self.radius);
        if cells > cap {
            return Err(Error::MemoryCap { cells, cap });
        }
        let mut values = Vec::with_capacity(cells as usize);
        self.for_each_point(|_, v| values.push(v));
        let mut out = Self::dense(self.dim, self.radius, values)?;
        out.symmetry = self.symmetry;
        Ok(out)
    }

    pub fn to_dense(&self) -> Result<Self> {
        self.to_dense_capped(DEFAULT_CELL_CAP)
    }

    /// Orbit copy of a function whose full symmetry has been verified
    /// (verifying it first when needed).
    pub fn to_orbit(&self) -> Result<Self> {
        if let Storage::Orbit(_) = self.storage {
            return Ok(self.clone());
        }
        if !check_symmetry(self).symmetric {
            return Err(Error::NotSymmetric("orbit layout requires hyperoctahedral symmetry".into()));
        }
        let space = TupleSpace::new(self.radius + 1, self.dim);
        let values: Vec<f64> = space.iter().map(|t| self.value_sorted(&t)).collect();
        Self::orbit(self.dim, self.radius, values)
    }

    /// Same function on a larger (or smaller, truncating) box.
    pub fn with_radius(&self, radius: usize) -> Result<Self> {
        match &self.storage {
            Storage::Orbit(_) => Self::orbit_from_fn(self.dim, radius, |t| self.value_sorted(t)),
            Storage::Dense(_) => {
                let mut out = Self::dense_from_fn(self.dim, radius, |x| self.value(x))?;
                out.symmetry = self.symmetry;
                Ok(out)
            }
            Storage::Axial { odd, .. } => {
                let space = TupleSpace::new(radius + 1, self.dim - 1);
                let mut values = Vec::with_capacity(space.count() * (radius + 1));
                let mut x = vec![0i64; self.dim];
                for rest in space.iter() {
                    for (xr, &a) in x[1..].iter_mut().zip(&rest) {
                        *xr = a as i64;
                    }
                    for a in 0..=radius {
                        x[0] = a as i64;
                        values.push(self.value(&x));
                    }
                }
                Self::axial(self.dim, radius, *odd, values)
            }
        }
    }

    /// `a * self + b * other` on the larger of the two boxes.
    pub fn linear_combination(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(self.dim, other.dim));
        }
        let radius = self.radius.max(other.radius);
        let same_layout = self.layout() == other.layout();
        let lhs = if self.radius == radius { self.clone() } else { self.with_radius(radius)? };
        let rhs = if other.radius == radius { other.clone() } else { other.with_radius(radius)? };
        if same_layout {
            let values: Vec<f64> = lhs
                .raw_values()
                .iter()
                .zip(rhs.raw_values())
                .map(|(x, y)| a * x + b * y)
                .collect();
            let mut out = lhs.clone();
            out.replace_values(values);
            if lhs.symmetry != rhs.symmetry {
                out.symmetry = SymmetryTag::Unknown;
            }
            return Ok(out);
        }
        let lhs = lhs.to_dense()?;
        let rhs = rhs.to_dense()?;
        lhs.linear_combination(a, &rhs, b)
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        let values = self.raw_values().iter().map(|v| c * v).collect();
        out.replace_values(values);
        out
    }

    fn replace_values(&mut self, values: Vec<f64>) {
        match &mut self.storage {
            Storage::Dense(v) | Storage::Orbit(v) => *v = values,
            Storage::Axial { values: v, .. } => *v = values,
        }
    }

    /// Largest absolute value.
    pub fn sup_norm(&self) -> f64 {
        self.raw_values().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    // ----- serialization ----------------------------------------------------

    fn header(&self) -> LatticeHeader {
        LatticeHeader {
            dimension: self.dim,
            radius: self.radius,
            symmetry_tag: self.symmetry,
            layout: self.layout(),
            data: None,
            sidecar: None,
        }
    }

    fn value_bytes(&self) -> Vec<u8> {
        self.raw_values().iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    /// JSON header with the values inline as base64 little-endian f64.
    pub fn to_json(&self) -> serde_json::Value {
        let mut h = self.header();
        h.data = Some(base64::engine::general_purpose::STANDARD.encode(self.value_bytes()));
        serde_json::to_value(h).expect("header serializes")
    }

    /// Writes a JSON header plus a raw little-endian f64 sidecar file.
    pub fn write_with_sidecar(&self, json_path: &Path, bin_path: &Path) -> Result<()> {
        let mut h = self.header();
        h.sidecar = Some(
            bin_path
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
        );
        std::fs::File::create(bin_path)?.write_all(&self.value_bytes())?;
        std::fs::write(json_path, serde_json::to_vec_pretty(&h)?)?;
        Ok(())
    }

    /// Reads either encoding; sidecar paths resolve against `base_dir`.
    pub fn from_json(value: &serde_json::Value, base_dir: Option<&Path>) -> Result<Self> {
        let h: LatticeHeader = serde_json::from_value(value.clone())?;
        let bytes = match (&h.data, &h.sidecar) {
            (Some(b64), _) => base64::engine::general_purpose::STANDARD
                .decode(b64)
                .map_err(|e| Error::Decode(e.to_string()))?,
            (None, Some(name)) => {
                let path = base_dir.map(|d| d.join(name)).unwrap_or_else(|| name.into());
                let mut buf = Vec::new();
                std::fs::File::open(path)?.read_to_end(&mut buf)?;
                buf
            }
            (None, None) => return Err(Error::Decode("no data or sidecar field".into())),
        };
        if bytes.len() % 8 != 0 {
            return Err(Error::Decode("value bytes not a multiple of 8".into()));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let mut f = match h.layout {
            Layout::Dense => Self::dense(h.dimension, h.radius, values)?,
            Layout::Orbit => Self::orbit(h.dimension, h.radius, values)?,
            Layout::AxialEven => Self::axial(h.dimension, h.radius, false, values)?,
            Layout::AxialOdd => Self::axial(h.dimension, h.radius, true, values)?,
        };
        if h.layout == Layout::Dense {
            f.symmetry = h.symmetry_tag;
        }
        Ok(f)
    }

    /// CSV rows `x1,...,xd,value`. Symmetric layouts emit one row per orbit.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut head: Vec<String> = (1..=self.dim).map(|j| format!("x{j}")).collect();
        head.push("value".into());
        wtr.write_record(&head).map_err(csv_err)?;
        for (x, v, _) in self.samples() {
            let mut rec: Vec<String> = x.iter().map(|c| c.to_string()).collect();
            rec.push(v.to_string());
            wtr.write_record(&rec).map_err(csv_err)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn ensure_finite(values: &[f64]) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-finite value at storage index {i}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LatticeHeader {
    dimension: usize,
    radius: usize,
    symmetry_tag: SymmetryTag,
    layout: Layout,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    data: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    sidecar: Option<String>,
}

/// Flat list of lattice points with values.
#[derive(Debug, Clone)]
pub struct PointList {
    pub dim: usize,
    pub coords: Vec<i32>,
    pub values: Vec<f64>,
}

impl PointList {
    fn push(&mut self, x: &[i64], v: f64) {
        self.coords.extend(x.iter().map(|&c| c as i32));
        self.values.push(v);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn point(&self, i: usize) -> &[i32] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }
}

/// Lexicographic index of a box point (last axis fastest).
#[inline]
pub(crate) fn dense_index(x: &[i64], radius: usize) -> usize {
    let side = (2 * radius + 1) as i64;
    let r = radius as i64;
    x.iter().fold(0i64, |acc, &c| acc * side + (c + r)) as usize
}

/// Visits every point of `[-R, R]^d` in lexicographic order.
pub fn for_each_box_point(dim: usize, radius: usize, mut f: impl FnMut(&[i64])) {
    let r = radius as i64;
    let mut x = vec![-r; dim];
    loop {
        f(&x);
        let mut j = dim;
        loop {
            if j == 0 {
                return;
            }
            j -= 1;
            if x[j] < r {
                x[j] += 1;
                break;
            }
            x[j] = -r;
        }
    }
}

/// Visits every point in the orbit of a sorted nonnegative tuple.
pub fn expand_orbit(sorted: &[usize], mut f: impl FnMut(&[i64])) {
    let mut perm: Vec<i64> = sorted.iter().map(|&a| a as i64).collect();
    let d = perm.len();
    loop {
        let nz: Vec<usize> = (0..d).filter(|&i| perm[i] != 0).collect();
        let mut x = perm.clone();
        for mask in 0u64..(1u64 << nz.len()) {
            for (b, &i) in nz.iter().enumerate() {
                x[i] = if mask >> b & 1 == 1 { -perm[i] } else { perm[i] };
            }
            f(&x);
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
}

fn next_permutation(v: &mut [i64]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

// ----- symmetry -------------------------------------------------------------

/// Outcome of [`check_symmetry`].
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryReport {
    pub symmetric: bool,
    /// A point `x` and group element `g` with `f(g x) != f(x)`.
    pub witness: Option<(LatticePoint, SignedPermutation)>,
}

/// Exhaustive hyperoctahedral invariance check (bit-equal values).
///
/// Invariance under the generators (one reflection and the adjacent
/// transpositions) is equivalent to invariance under the whole group.
pub fn check_symmetry(f: &LatticeFunction) -> SymmetryReport {
    if let Storage::Orbit(_) = f.storage {
        return SymmetryReport {
            symmetric: true,
            witness: None,
        };
    }
    let d = f.dim;
    let mut gens = vec![SignedPermutation::reflection(d, 0)];
    gens.extend((0..d.saturating_sub(1)).map(|i| SignedPermutation::transposition(d, i, i + 1)));
    let mut witness = None;
    for_each_box_point(d, f.radius, |x| {
        if witness.is_some() {
            return;
        }
        let v = f.value(x);
        for g in &gens {
            let gx = g.apply(x);
            if f.value(&gx).to_bits() != v.to_bits() {
                witness = Some((LatticePoint(x.to_vec()), g.clone()));
                return;
            }
        }
    });
    SymmetryReport {
        symmetric: witness.is_none(),
        witness,
    }
}

/// Group average of `f`, returned in orbit layout.
pub fn symmetrize(f: &LatticeFunction) -> Result<LatticeFunction> {
    let space = TupleSpace::new(f.radius + 1, f.dim);
    let values: Vec<f64> = space
        .iter()
        .map(|t| {
            let mut acc = KahanSum::new();
            let mut n = 0usize;
            expand_orbit(&t, |x| {
                acc.add(f.value(x));
                n += 1;
            });
            acc.value() / n as f64
        })
        .collect();
    LatticeFunction::orbit(f.dim, f.radius, values)
}

/// Marks a dense function as verified after an exhaustive check.
pub fn verify_symmetry(mut f: LatticeFunction) -> std::result::Result<LatticeFunction, SymmetryReport> {
    let report = check_symmetry(&f);
    if report.symmetric {
        f.symmetry = SymmetryTag::Verified;
        Ok(f)
    } else {
        Err(report)
    }
}

// ----- algebra ----------------------------------------------------------------

/// `sum_x |x|^power f(x)`, or with `|f(x)|` when `absolute`, using
/// compensated summation in storage order.
pub fn moment(f: &LatticeFunction, power: f64, absolute: bool) -> f64 {
    let weight = |r2: f64| if power == 0.0 { 1.0 } else { r2.sqrt().powf(power) };
    let val = |v: f64| if absolute { v.abs() } else { v };
    let mut acc = KahanSum::new();
    match &f.storage {
        Storage::Orbit(values) => {
            let space = f.tuples.as_ref().expect("orbit space");
            for (t, &v) in space.iter().zip(values) {
                if v != 0.0 {
                    let r2: f64 = t.iter().map(|&a| (a * a) as f64).sum();
                    acc.add(lattice_orbit_size(&t) * weight(r2) * val(v));
                }
            }
        }
        Storage::Axial { odd, values } => {
            if *odd && !absolute {
                return 0.0;
            }
            let space = f.tuples.as_ref().expect("axial space");
            let side = f.radius + 1;
            for (ri, rest) in space.iter().enumerate() {
                let m_rest = lattice_orbit_size(&rest);
                let r2_rest: f64 = rest.iter().map(|&a| (a * a) as f64).sum();
                for a in 0..side {
                    let v = values[ri * side + a];
                    if v != 0.0 {
                        let m = if a == 0 { m_rest } else { 2.0 * m_rest };
                        acc.add(m * weight(r2_rest + (a * a) as f64) * val(v));
                    }
                }
            }
        }
        Storage::Dense(_) => f.for_each_point(|x, v| {
            if v != 0.0 {
                let r2: f64 = x.iter().map(|&c| (c * c) as f64).sum();
                acc.add(weight(r2) * val(v));
            }
        }),
    }
    acc.value()
}

/// Support of the left convolution factor, in a fixed iteration order.
enum Support {
    Points(PointList),
    /// Orbit representatives with their values; orbits are expanded on the
    /// fly so large symmetric kernels never materialize densely.
    Orbits { dim: usize, reps: Vec<(Vec<usize>, f64)> },
}

impl Support {
    fn of(f: &LatticeFunction) -> Self {
        match &f.storage {
            Storage::Orbit(v) => {
                let space = f.tuples.as_ref().expect("orbit space");
                let reps = space
                    .iter()
                    .zip(v)
                    .filter(|(_, &val)| val != 0.0)
                    .map(|(t, &val)| (t, val))
                    .collect();
                Support::Orbits { dim: f.dim, reps }
            }
            _ => Support::Points(f.nonzero_points()),
        }
    }
}

/// `(f * g)(x)` at each requested point, summing over the support of `f`
/// in a fixed order.
pub fn convolve_at(f: &LatticeFunction, g: &LatticeFunction, points: &[LatticePoint]) -> Result<Vec<f64>> {
    if f.dim != g.dim {
        return Err(Error::DimensionMismatch(f.dim, g.dim));
    }
    let support = Support::of(f);
    Ok(points
        .par_iter()
        .map(|x| convolve_point(&support, g, &x.0))
        .collect())
}

fn convolve_point(support: &Support, g: &LatticeFunction, x: &[i64]) -> f64 {
    let mut y = [0i64; MAX_DIM];
    let mut acc = KahanSum::new();
    match support {
        Support::Points(list) => {
            let d = list.dim;
            for i in 0..list.len() {
                let p = list.point(i);
                for j in 0..d {
                    y[j] = x[j] - p[j] as i64;
                }
                let gv = g.value(&y[..d]);
                if gv != 0.0 {
                    acc.add(list.values[i] * gv);
                }
            }
        }
        Support::Orbits { dim, reps } => {
            let d = *dim;
            for (t, fv) in reps {
                expand_orbit(t, |p| {
                    for j in 0..d {
                        y[j] = x[j] - p[j];
                    }
                    let gv = g.value(&y[..d]);
                    if gv != 0.0 {
                        acc.add(fv * gv);
                    }
                });
            }
        }
    }
    acc.value()
}

/// Exact direct-sum convolution on the box of radius `R_f + R_g`.
///
/// Symmetric inputs give an orbit-layout result; otherwise the result is dense.
pub fn convolve(f: &LatticeFunction, g: &LatticeFunction) -> Result<LatticeFunction> {
    if f.dim != g.dim {
        return Err(Error::DimensionMismatch(f.dim, g.dim));
    }
    let radius = f.radius + g.radius;
    let support = Support::of(f);
    if f.is_fully_symmetric() && g.is_fully_symmetric() {
        let space = TupleSpace::new(radius + 1, f.dim);
        let reps: Vec<Vec<usize>> = space.iter().collect();
        let values: Vec<f64> = reps
            .par_iter()
            .map(|t| {
                let x: Vec<i64> = t.iter().map(|&a| a as i64).collect();
                convolve_point(&support, g, &x)
            })
            .collect();
        return LatticeFunction::orbit(f.dim, radius, values);
    }
    let cells = dense_cells(f.dim, radius);
    if cells > DEFAULT_CELL_CAP {
        return Err(Error::MemoryCap { cells, cap: DEFAULT_CELL_CAP });
    }
    let mut points = Vec::with_capacity(cells as usize);
    for_each_box_point(f.dim, radius, |x| points.push(x.to_vec()));
    let values: Vec<f64> = points.par_iter().map(|x| convolve_point(&support, g, x)).collect();
    LatticeFunction::dense(f.dim, radius, values)
}

/// Pointwise `x^alpha f(x)` on the same box.
///
/// A symmetric function weighted along the first axis only stays in a
/// compact (axial) layout; any other combination expands to dense storage.
pub fn apply_monomial(f: &LatticeFunction, alpha: &MultiIndex) -> Result<LatticeFunction> {
    if alpha.dim() != f.dim {
        return Err(Error::DimensionMismatch(alpha.dim(), f.dim));
    }
    if alpha.order() == 0 {
        return Ok(f.clone());
    }
    let first_axis_only = alpha.0[1..].iter().all(|&a| a == 0);
    let side = f.radius + 1;
    match &f.storage {
        Storage::Orbit(_) if first_axis_only => {
            let a = alpha.0[0] as i32;
            let space = TupleSpace::new(side, f.dim - 1);
            let mut values = Vec::with_capacity(space.count() * side);
            let mut t = vec![0usize; f.dim];
            for rest in space.iter() {
                for x1 in 0..side {
                    t[0] = x1;
                    t[1..].copy_from_slice(&rest);
                    let mut s = t.clone();
                    s.sort_unstable();
                    values.push((x1 as f64).powi(a) * f.value_sorted(&s));
                }
            }
            LatticeFunction::axial(f.dim, f.radius, a % 2 == 1, values)
        }
        Storage::Axial { odd, values } if first_axis_only => {
            let a = alpha.0[0] as i32;
            let out: Vec<f64> = values
                .iter()
                .enumerate()
                .map(|(i, v)| ((i % side) as f64).powi(a) * v)
                .collect();
            LatticeFunction::axial(f.dim, f.radius, *odd ^ (a % 2 == 1), out)
        }
        _ => {
            let dense = f.to_dense()?;
            let mut values = Vec::with_capacity(dense.raw_values().len());
            dense.for_each_point(|x, v| values.push(alpha.monomial(x) * v));
            LatticeFunction::dense(f.dim, f.radius, values)
        }
    }
}

// ----- decay envelopes ----------------------------------------------------------

/// Power-law envelope `|f(x)| <= K <x>^{-b}` for `|x| >= r_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayEnvelope {
    #[serde(rename = "K")]
    pub k: f64,
    pub b: f64,
    pub fit_window: (f64, f64),
    /// `max (|f(x)| - K <x>^{-b})` over the box beyond `r_min`; `<= 0` when the envelope holds.
    pub max_violation: f64,
    /// `K / exp(intercept)`: how far the fitted line had to be lifted.
    pub headroom: f64,
}

impl DecayEnvelope {
    /// Sentinel for a window where `f` vanishes identically.
    pub fn zero(window: (f64, f64)) -> Self {
        Self {
            k: 0.0,
            b: f64::INFINITY,
            fit_window: window,
            max_violation: 0.0,
            headroom: 1.0,
        }
    }

    pub fn is_zero_sentinel(&self) -> bool {
        self.b.is_infinite() && self.k == 0.0
    }
}

/// Least-squares fit of `log |f|` against `log <x>` over the annulus
/// `r_min <= |x| <= r_max`, lifted so the envelope holds on the box.
pub fn fit_envelope(f: &LatticeFunction, r_min: f64, r_max: f64) -> Result<DecayEnvelope> {
    if r_min < 1.0 || r_max > f.radius as f64 || r_min > r_max {
        return Err(Error::InvalidParameter(format!(
            "envelope window [{r_min}, {r_max}] must satisfy 1 <= r_min <= r_max <= R = {}",
            f.radius
        )));
    }
    let samples = f.samples();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut radii = Vec::new();
    for (x, v, _) in &samples {
        let r = LatticePoint(x.clone()).norm();
        if r >= r_min && r <= r_max && v.abs() > 0.0 {
            xs.push(bracket_of_norm(r).ln());
            ys.push(v.abs().ln());
            radii.push(r);
        }
    }
    if xs.is_empty() {
        return Ok(DecayEnvelope::zero((r_min, r_max)));
    }
    radii.sort_by(f64::total_cmp);
    radii.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if radii.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "{} distinct radii with nonzero values in [{r_min}, {r_max}], need 5",
            radii.len()
        )));
    }
    let line = fit_line(&xs, &ys).ok_or_else(|| Error::InsufficientData("degenerate fit".into()))?;
    let b = -line.slope;
    let mut k = 0.0_f64;
    for (x, v, _) in &samples {
        let r = LatticePoint(x.clone()).norm();
        if r >= r_min {
            k = k.max(v.abs() * bracket_of_norm(r).powf(b));
        }
    }
    k *= 1.0 + 1e-12;
    let mut max_violation = f64::NEG_INFINITY;
    for (x, v, _) in &samples {
        let r = LatticePoint(x.clone()).norm();
        if r >= r_min {
            max_violation = max_violation.max(v.abs() - k * bracket_of_norm(r).powf(-b));
        }
    }
    Ok(DecayEnvelope {
        k,
        b,
        fit_window: (r_min, r_max),
        max_violation,
        headroom: k / line.intercept.exp(),
    })
}


// ----- radial power-law fits ------------------------------------------------------

/// Which lattice directions enter a radial fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Directions {
    /// Points on a coordinate axis.
    Axis,
    /// Points `(t, ..., t)`.
    Diagonal,
    /// Every sample in the window.
    All,
}

/// Least-squares fit of `log |f| = log amplitude - exponent * log <x>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub amplitude: f64,
    pub r_squared: f64,
    /// Number of samples used.
    pub samples: usize,
    /// Number of distinct radii among them.
    pub radii: usize,
}

fn in_direction(x: &[i64], dirs: Directions, symmetric: bool) -> bool {
    match dirs {
        Directions::All => true,
        Directions::Diagonal => x.iter().all(|&c| c == x[0]),
        Directions::Axis => {
            let nz: Vec<_> = x.iter().filter(|&&c| c != 0).collect();
            let on_axis = nz.len() == 1;
            if symmetric {
                on_axis
            } else {
                on_axis && x[0] > 0
            }
        }
    }
}

/// Radial power-law fit of `|f|` over `r_min <= |x| <= r_max`, skipping zeros.
/// Returns `None` when fewer than two distinct radii remain.
pub fn fit_power_law(f: &LatticeFunction, r_min: f64, r_max: f64, dirs: Directions) -> Option<PowerLawFit> {
    let symmetric = f.is_fully_symmetric();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut radii = Vec::new();
    for (x, v, _) in f.samples() {
        let r = LatticePoint(x.clone()).norm();
        if r >= r_min && r <= r_max && v != 0.0 && in_direction(&x, dirs, symmetric) {
            xs.push(bracket_of_norm(r).ln());
            ys.push(v.abs().ln());
            radii.push(r);
        }
    }
    radii.sort_by(f64::total_cmp);
    radii.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let line = fit_line(&xs, &ys)?;
    Some(PowerLawFit {
        exponent: -line.slope,
        amplitude: line.intercept.exp(),
        r_squared: line.r_squared,
        samples: xs.len(),
        radii: radii.len(),
    })
}
