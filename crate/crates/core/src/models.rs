//! Kernel factory and checks of the standing assumptions on `F`.
//!
//! Besides `delta - mu D`, the factory builds synthetic critical kernels
//! `F = delta - D + eps J~`, where `J` is a signed power-law tail and the mass
//! of `J` is removed at the origin so that `F^(0) = 0`.

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::deconv::{admissible_s, rho_lower_bound, ExponentBudget};
use crate::error::{Error, Result};
use crate::green::walk_kernel;
use crate::lattice::{check_symmetry, fit_envelope, moment, DecayEnvelope, LatticeFunction};
use crate::numerics::KahanSum;
use crate::orbit::{lattice_orbit_size, TupleSpace};
use crate::spectral::{infrared_check, InfraredReport, TorusGrid};

/// Tolerance on `F^(0) >= 0` for kernels tuned to criticality.
pub const CRITICALITY_TOLERANCE: f64 = 1e-12;

/// Slack allowed between the fitted envelope exponent and `d + 2 + rho`;
/// an exact power-law tail fits to rounding error either side.
pub const ENVELOPE_SLACK: f64 = 1e-6;

const MAX_HALVINGS: u32 = 20;

/// `delta - mu0 D`.
pub fn srw_kernel(d: usize, mu0: f64) -> Result<LatticeFunction> {
    if d == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    if !(mu0 > 0.0 && mu0 <= 1.0) {
        return Err(Error::InvalidParameter(format!("mu0 = {mu0} outside (0, 1]")));
    }
    Ok(walk_kernel(d, mu0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Srw,
    Perturbed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(rename = "d")]
    pub dim: usize,
    #[serde(default = "one")]
    pub mu0: f64,
    pub rho: f64,
    #[serde(default)]
    pub epsilon: f64,
    pub tail_radius: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Allows `rho` outside the admissible range.
    #[serde(default)]
    pub exploratory: bool,
}

fn one() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim <= 2 {
            return Err(Error::DimensionTooSmall(self.dim));
        }
        if !(self.rho > 0.0) {
            return Err(Error::InvalidParameter(format!("rho = {} must be positive", self.rho)));
        }
        if self.kind == ModelKind::Perturbed {
            if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
                return Err(Error::InvalidParameter(format!("epsilon = {} must be >= 0", self.epsilon)));
            }
            if !self.exploratory {
                check_rho_range(self.dim, self.rho)?;
            }
        }
        Ok(())
    }
}

/// Rejects `rho <= max((d - 8)/2, 0)`.
pub fn check_rho_range(d: usize, rho: f64) -> Result<()> {
    let bound = rho_lower_bound(d as u32);
    let bound_f = *bound.numer() as f64 / *bound.denom() as f64;
    if rho > bound_f {
        Ok(())
    } else {
        Err(Error::RhoOutOfRange {
            d: d as u32,
            rho: rho.to_string(),
            bound: bound.to_string(),
        })
    }
}

/// A constructed kernel and the epsilon that survived the infrared check.
#[derive(Debug, Clone)]
pub struct PerturbedKernel {
    pub kernel: LatticeFunction,
    pub epsilon: f64,
    pub halvings: u32,
    pub report: AssumptionReport,
}

/// Sign per orbit: all `+1`, or drawn from the seed in orbit rank order.
fn sign_pattern(count: usize, seed: Option<u64>) -> Vec<f64> {
    match seed {
        None => vec![1.0; count],
        Some(s) => {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            (0..count).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect()
        }
    }
}

/// `F = delta - D + eps (J - (sum J) delta)` without any checks on the result.
pub fn perturbed_kernel_unchecked(spec: &ModelSpec, epsilon: f64) -> Result<LatticeFunction> {
    let d = spec.dim;
    let radius = spec.tail_radius.max(1);
    let space = TupleSpace::new(radius + 1, d);
    let signs = sign_pattern(space.count(), spec.seed);
    let decay = d as f64 + 2.0 + spec.rho;
    let step = 1.0 / (2 * d) as f64;
    let mut values: Vec<f64> = space
        .iter()
        .zip(&signs)
        .map(|(t, &sign)| {
            let r2: usize = t.iter().map(|a| a * a).sum();
            let r = (r2 as f64).sqrt();
            let walk = if r2 == 1 { -step } else { 0.0 };
            let tail = if r >= 2.0 && r <= spec.tail_radius as f64 {
                sign * r.powf(-decay)
            } else {
                0.0
            };
            walk + epsilon * tail
        })
        .collect();
    // the origin value is fixed by sum F = 0, computed from the other orbits
    let mut off = KahanSum::new();
    for (t, v) in space.iter().zip(&values).skip(1) {
        off.add(lattice_orbit_size(&t) * v);
    }
    values[0] = -off.value();
    LatticeFunction::orbit(d, radius, values)
}

/// Synthetic critical kernel, halving epsilon until the assumption check passes.
pub fn perturbed_kernel(spec: &ModelSpec) -> Result<PerturbedKernel> {
    spec.validate()?;
    if spec.kind == ModelKind::Srw {
        let kernel = srw_kernel(spec.dim, spec.mu0)?;
        let report = assumption_report(&kernel, spec.rho);
        return Ok(PerturbedKernel {
            kernel,
            epsilon: 0.0,
            halvings: 0,
            report,
        });
    }
    if spec.epsilon == 0.0 {
        let kernel = srw_kernel(spec.dim, 1.0)?;
        let report = assumption_report(&kernel, spec.rho);
        return Ok(PerturbedKernel {
            kernel,
            epsilon: 0.0,
            halvings: 0,
            report,
        });
    }
    let mut eps = spec.epsilon;
    let mut last_node = Vec::new();
    for halvings in 0..=MAX_HALVINGS {
        let kernel = perturbed_kernel_unchecked(spec, eps)?;
        let report = assumption_report(&kernel, spec.rho);
        let range_ok = report.rho_range_ok || spec.exploratory;
        let other_ok = report.symmetric && report.envelope_ok && report.f_hat_zero >= -CRITICALITY_TOLERANCE;
        if report.infrared.holds() && other_ok && range_ok {
            if halvings > 0 {
                log::info!("epsilon halved {halvings} times to {eps:e} to satisfy the infrared bound");
            }
            return Ok(PerturbedKernel {
                kernel,
                epsilon: eps,
                halvings,
                report,
            });
        }
        if !other_ok || !range_ok {
            return Err(Error::AssumptionFailed(report.verdict.reasons.join("; ")));
        }
        last_node = report.infrared.argmin_node.clone();
        eps /= 2.0;
    }
    Err(Error::EpsilonUnderflow {
        halvings: MAX_HALVINGS,
        node: last_node,
    })
}

// ----- assumption report -------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub symmetric: bool,
    pub envelope: DecayEnvelope,
    /// `d + 2 + rho`, the exponent the envelope must reach.
    pub required_exponent: f64,
    pub envelope_ok: bool,
    #[serde(rename = "F_hat_zero")]
    pub f_hat_zero: f64,
    pub infrared: InfraredReport,
    pub infrared_grid: TorusGrid,
    pub rho_range_ok: bool,
    pub verdict: Verdict,
}

/// Grid used for infrared checks of a kernel of radius `radius`.
pub fn infrared_grid(dim: usize, radius: usize) -> TorusGrid {
    TorusGrid::shifted(dim, (4 * radius).max(32)).expect("valid grid")
}

/// Checks symmetry, tail envelope, `F^(0) >= 0`, the infrared bound and the
/// range of `rho`. Never fails; problems are listed in the verdict.
pub fn assumption_report(f: &LatticeFunction, declared_rho: f64) -> AssumptionReport {
    let d = f.dim();
    let mut reasons = Vec::new();
    let sym = check_symmetry(f);
    if !sym.symmetric {
        reasons.push(format!("not symmetric: witness {:?}", sym.witness));
    }
    let required = d as f64 + 2.0 + declared_rho;
    let r = f.radius() as f64;
    let envelope = if r < 2.0 {
        Ok(DecayEnvelope::zero((2.0, r.max(2.0))))
    } else {
        fit_envelope(f, 2.0, r)
    };
    let (envelope, envelope_ok) = match envelope {
        Ok(env) => {
            let ok = env.is_zero_sentinel() || (env.b >= required - ENVELOPE_SLACK && env.max_violation <= 0.0);
            if !ok {
                reasons.push(format!(
                    "tail envelope exponent {:.6} below d + 2 + rho = {required}",
                    env.b
                ));
            }
            (env, ok)
        }
        Err(e) => {
            reasons.push(format!("tail envelope: {e}"));
            (DecayEnvelope::zero((2.0, r)), false)
        }
    };
    let f_hat_zero = moment(f, 0.0, false);
    if f_hat_zero < -CRITICALITY_TOLERANCE {
        reasons.push(format!("F^(0) = {f_hat_zero:e} < 0"));
    }
    let grid = infrared_grid(d, f.radius());
    let infrared = match infrared_check(f, &grid) {
        Ok(rep) => rep,
        Err(e) => {
            reasons.push(format!("infrared check: {e}"));
            InfraredReport {
                k2_est: f64::NAN,
                argmin_node: Vec::new(),
                f_hat_zero,
            }
        }
    };
    if !(infrared.k2_est > 0.0) {
        reasons.push(format!(
            "infrared bound fails: K2_est = {:e} at node {:?}",
            infrared.k2_est, infrared.argmin_node
        ));
    }
    let rho_range_ok = d > 2 && check_rho_range(d, declared_rho).is_ok();
    if !rho_range_ok {
        reasons.push(format!("rho = {declared_rho} outside the admissible range for d = {d}"));
    }
    AssumptionReport {
        symmetric: sym.symmetric,
        envelope,
        required_exponent: required,
        envelope_ok,
        f_hat_zero,
        infrared,
        infrared_grid: grid,
        rho_range_ok,
        verdict: Verdict {
            pass: reasons.is_empty(),
            reasons,
        },
    }
}

// ----- model table ---------------------------------------------------------------------

/// One row of the table of lace-expansion models and their tail exponents.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelRow {
    pub name: &'static str,
    /// Smallest dimension with a proof; `None` where only "d sufficiently large" is known.
    pub d_min: Option<u32>,
    pub rho_formula: &'static str,
    pub example_dim: u32,
    pub rho_example: Ratio<i64>,
    pub budget: ExponentBudget,
}

pub fn model_table() -> Result<Vec<ModelRow>> {
    type RhoOf = fn(i64) -> i64;
    let rows: [(&str, Option<u32>, &str, u32, RhoOf); 5] = [
        ("self-avoiding walk", Some(5), "2(d-4)", 5, |d| 2 * (d - 4)),
        ("Ising", None, "2(d-4)", 5, |d| 2 * (d - 4)),
        ("phi^4", Some(5), "2(d-4)", 5, |d| 2 * (d - 4)),
        ("percolation", Some(11), "d-6", 11, |d| d - 6),
        ("lattice trees and animals", Some(27), "d-10", 27, |d| d - 10),
    ];
    rows.iter()
        .map(|&(name, d_min, formula, d, rho_of)| {
            let rho = Ratio::from_integer(rho_of(d as i64));
            Ok(ModelRow {
                name,
                d_min,
                rho_formula: formula,
                example_dim: d,
                rho_example: rho,
                budget: admissible_s(d, rho)?,
            })
        })
        .collect()
}

// ----- run configs ---------------------------------------------------------------------

/// A deconvolution experiment as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelKind,
    pub d: usize,
    pub rho: f64,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "one")]
    pub mu0: f64,
    #[serde(rename = "R")]
    pub radius: usize,
    #[serde(rename = "M")]
    pub grid: usize,
    /// Defaults to `[R/4, R/2]`.
    #[serde(default)]
    pub annulus: Option<(f64, f64)>,
    /// Defaults to `0.9 min(rho, 2)`.
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Defaults to `R/2`.
    #[serde(default)]
    pub tail_radius: Option<usize>,
    #[serde(default)]
    pub exploratory: bool,
}

impl RunConfig {
    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            kind: self.model,
            dim: self.d,
            mu0: self.mu0,
            rho: self.rho,
            epsilon: self.epsilon,
            tail_radius: self.tail_radius.unwrap_or(self.radius / 2),
            seed: self.seed,
            exploratory: self.exploratory,
        }
    }

    pub fn annulus(&self) -> (f64, f64) {
        self.annulus
            .unwrap_or((self.radius as f64 / 4.0, self.radius as f64 / 2.0))
    }

    pub fn sigma(&self) -> f64 {
        self.sigma.unwrap_or(0.9 * self.rho.min(2.0))
    }

    pub fn torus(&self) -> Result<TorusGrid> {
        TorusGrid::shifted(self.d, self.grid)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
