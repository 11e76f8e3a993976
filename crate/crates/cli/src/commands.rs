use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use lattice_deconv::deconv::{
    admissible_s, deconvolve_with, error_symbol_ratio, parse_ratio, DeconvolutionResult, ExponentBudget,
};
use lattice_deconv::fracdiff::{aligned_u_values, c_delta, holder_curve};
use lattice_deconv::green::{a_d, asymptotic_report, green_function, walk_sum_field, GreenMethod, GreenSpec};
use lattice_deconv::lattice::{bracket_of_norm, LatticeFunction, LatticePoint, MultiIndex};
use lattice_deconv::models::{
    assumption_report, check_rho_range, model_table, perturbed_kernel, perturbed_kernel_unchecked, srw_kernel,
    ModelKind, ModelSpec, RunConfig,
};
use lattice_deconv::orbit::TupleSpace;
use lattice_deconv::spectral::TorusGrid;

use crate::failure::Failure;
use crate::manifest::{sidecar_path, write_json, GridInfo, RunManifest};
use crate::{CdeltaArgs, DeconvArgs, ExponentArgs, FieldArg, FracnormArgs, GreenArgs, MethodArg, VerifyArgs};

/// Largest torus residual `|F * G - delta|` accepted as an exact inverse.
const TORUS_TOLERANCE: f64 = 1e-11;
/// Largest relative mismatch between the two forms of `1/F^ - lambda/A^`.
const SPLIT_TOLERANCE: f64 = 1e-8;

/// Refuses grids whose symmetric storage would exceed `cap` cells.
fn guard_cells(grid: &TorusGrid, cap: u128) -> Result<(), Failure> {
    let stored = TupleSpace::new(grid.classes_per_axis(), grid.dim).count() as u128;
    let cells = stored.min(grid.node_count());
    if cells > cap {
        let mut m = grid.m();
        while m > 8 && TupleSpace::new(m / 2, grid.dim).count() as u128 > cap {
            m /= 2;
        }
        return Err(Failure::usage(format!(
            "grid M = {} in d = {} needs {cells} stored cells, above the cap of {cap}; \
             try M <= {m} (with R <= M/4) or raise --max-cells",
            grid.m(),
            grid.dim
        )));
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("reading {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::usage(format!("parsing {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::usage(format!("creating {}: {e}", path.display())))
}

fn print_json(value: &Value) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn relative_change(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (b - a).abs() / a.abs().max(f64::MIN_POSITIVE)
    }
}

// ----- green -------------------------------------------------------------------------------

pub fn green(args: &GreenArgs, cap: u128) -> Result<(), Failure> {
    let d = args.dim;
    let r = args.radius;
    let m = args.grid.unwrap_or(4 * r);
    let method = match args.method {
        MethodArg::Spectral => GreenMethod::Spectral,
        MethodArg::Extrapolated => GreenMethod::SpectralExtrapolated,
        MethodArg::Walk => GreenMethod::WalkSum { n_max: args.n_max },
    };
    let spec = GreenSpec::new(d, args.mu, r, method)?;
    let grid = TorusGrid::shifted(d, m)?;
    guard_cells(&grid, cap)?;
    if args.method == MethodArg::Extrapolated {
        guard_cells(&TorusGrid::shifted(d, 2 * m)?, cap)?;
    }
    let annulus = match &args.annulus {
        Some(v) => (v[0], v[1]),
        None => (r as f64 / 4.0, r as f64 / 2.0),
    };
    let walk = match method {
        GreenMethod::WalkSum { n_max } => Some(walk_sum_field(args.mu, d, r, n_max)?),
        _ => None,
    };
    let c = match &walk {
        Some(w) => w.estimate(),
        None => green_function(&spec, &grid)?,
    };
    let amp = a_d(d)?;

    let mut summary = json!({
        "dim": d,
        "mu": args.mu,
        "radius": r,
        "M": m,
        "method": spec.method,
        "a_d": amp,
        "C_origin": c.value_at(&LatticePoint::origin(d)),
    });
    if args.mu == 1.0 {
        let report = asymptotic_report(&c, d, annulus)?;
        summary["asymptotics"] = serde_json::to_value(&report)?;
        summary["amplitude_ratio"] = json!(report.fitted_amplitude / amp);
    }
    if let Some(walk) = &walk {
        // cross-check against the torus inverse on the same box
        let reference = green_function(&GreenSpec::new(d, args.mu, r, GreenMethod::Spectral)?, &grid)?;
        let delta = c.linear_combination(1.0, &reference, -1.0)?.sup_norm();
        let tail = walk.tail.sup_norm();
        summary["cross_method"] = json!({ "max_delta": delta, "tail_bound": tail });
        if args.mu < 1.0 && delta > tail + 1e-10 {
            print_json(&summary)?;
            return Err(Failure::breach(format!(
                "walk sum and torus inverse differ by {delta:e}, above the tail bound {tail:e}"
            )));
        }
    }

    if let Some(out) = &args.out {
        write_green_csv(&c, d, amp, out)?;
        RunManifest {
            command: "green".into(),
            config: json!({
                "dim": d, "mu": args.mu, "radius": r, "grid": m,
                "method": spec.method, "annulus": [annulus.0, annulus.1],
            }),
            grid: GridInfo { m, shifted: true },
            box_radius: r,
            outputs: vec![out.clone()],
            doubling_deltas: BTreeMap::new(),
        }
        .write(&sidecar_path(out))?;
    }
    print_json(&summary)
}

fn write_green_csv(c: &LatticeFunction, d: usize, amp: f64, out: &Path) -> Result<(), Failure> {
    let mut w = create(out)?;
    let head: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    writeln!(w, "{},norm,C,asymptote,scaled_residual", head.join(","))?;
    for (x, v, _) in c.samples() {
        let r = LatticePoint(x.clone()).norm();
        let asym = amp / bracket_of_norm(r).powi(d as i32 - 2);
        let coords: Vec<String> = x.iter().map(i64::to_string).collect();
        writeln!(w, "{},{r},{v},{asym},{}", coords.join(","), v / asym - 1.0)?;
    }
    w.flush()?;
    Ok(())
}

// ----- deconv ------------------------------------------------------------------------------

fn budget_json(b: &ExponentBudget) -> Value {
    json!({
        "d": b.d,
        "rho": b.rho.to_string(),
        "s_sup": b.s_sup.to_string(),
        "s0": b.s0,
        "n_d": b.n_d,
        "n_d_bound": b.n_d_bound.to_string(),
        "n_d_bound_ok": b.n_d_bound_ok,
    })
}

fn load_config(path: &Path, exploratory: bool) -> Result<RunConfig, Failure> {
    let mut config: RunConfig = read_json(path)?;
    config.exploratory |= exploratory;
    if !config.exploratory {
        check_rho_range(config.d, config.rho)?;
    }
    config.model_spec().validate()?;
    Ok(config)
}

fn result_json(res: &DeconvolutionResult) -> Value {
    let (zeroth, second) = res.error.relative_residuals();
    json!({
        "constants": res.constants,
        "moments": {
            "sum_E": res.error.zeroth,
            "sum_x2_E": res.error.second,
            "scale": res.error.scale,
            "relative": [zeroth, second],
        },
        "fits": {
            "all": res.decay,
            "directional": res.directional,
        },
        "amplitude": {
            "G_scaled_at_third": res.g_scaled_at_third,
            "target": res.amplitude_target,
            "deviation": res.amplitude_deviation(),
        },
        "torus_identity": res.torus_identity,
        "split_consistency": res.split_consistency,
        "f_sup": res.f.sup_norm(),
        "noise_floor": res.noise_floor,
        "annulus": [res.annulus.0, res.annulus.1],
    })
}

pub fn deconv(args: &DeconvArgs, cap: u128) -> Result<(), Failure> {
    let config = load_config(&args.config, args.exploratory)?;
    let grid = config.torus()?;
    guard_cells(&grid, cap)?;
    let fine = TorusGrid::shifted(config.d, 2 * config.grid)?;
    if args.doubling {
        guard_cells(&fine, cap)?;
    }
    let model = perturbed_kernel(&config.model_spec())?;
    if !model.report.verdict.pass && !config.exploratory {
        return Err(Failure::breach(format!(
            "kernel fails the assumption check: {}",
            model.report.verdict.reasons.join("; ")
        )));
    }
    let res = deconvolve_with(&model.kernel, config.radius, &grid, Some(config.annulus()))?;

    let budget = parse_ratio(&config.rho.to_string())
        .and_then(|rho| admissible_s(config.d as u32, rho))
        .map(|b| budget_json(&b))
        .unwrap_or(Value::Null);
    let sigma = config.sigma();
    let plain = TorusGrid::new(config.d, config.grid, false)?;
    let symbol_bounds: Vec<Value> = (0..4)
        .map(|order| {
            let ratio = error_symbol_ratio(&res.error.e, &MultiIndex::along(config.d, 0, order), sigma, &plain)?;
            Ok(json!({ "alpha_order": order, "sigma": sigma, "max_ratio": ratio }))
        })
        .collect::<Result<_, Failure>>()?;

    let mut doubling = BTreeMap::new();
    if args.doubling {
        let fine_res = deconvolve_with(&model.kernel, config.radius, &fine, Some(config.annulus()))?;
        doubling.insert(
            "G_scaled_at_third".into(),
            relative_change(res.g_scaled_at_third, fine_res.g_scaled_at_third),
        );
        doubling.insert("decay_exponent".into(), relative_change(res.decay.exponent, fine_res.decay.exponent));
        doubling.insert("decay_amplitude".into(), relative_change(res.decay.amplitude, fine_res.decay.amplitude));
        doubling.insert("f_sup".into(), relative_change(res.f.sup_norm(), fine_res.f.sup_norm()));
    }

    let mut result = result_json(&res);
    result["kernel"] = json!({
        "epsilon": model.epsilon,
        "halvings": model.halvings,
        "assumptions": model.report,
    });
    result["budget"] = budget;
    result["symbol_bounds"] = Value::Array(symbol_bounds);
    result["doubling_deltas"] = serde_json::to_value(&doubling)?;

    fs::create_dir_all(&args.out_dir)?;
    let paths: Vec<PathBuf> = ["result.json", "G.csv", "f.csv"].iter().map(|n| args.out_dir.join(n)).collect();
    write_json(&paths[0], &result)?;
    res.g.write_csv(create(&paths[1])?)?;
    res.f.write_csv(create(&paths[2])?)?;
    RunManifest {
        command: "deconv".into(),
        config: serde_json::to_value(&config)?,
        grid: GridInfo { m: config.grid, shifted: true },
        box_radius: config.radius,
        outputs: paths,
        doubling_deltas: doubling,
    }
    .write(&args.out_dir.join("manifest.json"))?;

    let mut breaches = Vec::new();
    if res.torus_identity.max_residual > TORUS_TOLERANCE {
        breaches.push(format!("torus residual {:e} above {TORUS_TOLERANCE:e}", res.torus_identity.max_residual));
    }
    if res.split_consistency > SPLIT_TOLERANCE {
        breaches.push(format!("split consistency {:e} above {SPLIT_TOLERANCE:e}", res.split_consistency));
    }
    println!("{}", serde_json::to_string_pretty(&result)?);
    if breaches.is_empty() {
        Ok(())
    } else {
        Err(Failure::breach(breaches.join("; ")))
    }
}

// ----- exponents ---------------------------------------------------------------------------

pub fn exponents(args: &ExponentArgs) -> Result<(), Failure> {
    if args.table {
        let mut out = io::stdout().lock();
        writeln!(out, "model,d_min,rho_formula,example_dim,rho_example,s_sup,s0,n_d,n_d_bound")?;
        for row in model_table()? {
            let b = &row.budget;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                row.name,
                row.d_min.map_or("large".to_string(), |d| d.to_string()),
                row.rho_formula,
                row.example_dim,
                row.rho_example,
                b.s_sup,
                b.s0,
                b.n_d,
                b.n_d_bound
            )?;
        }
        return Ok(());
    }
    match (args.dim, &args.rho) {
        (Some(d), Some(rho)) => {
            let budget = admissible_s(d, parse_ratio(rho)?)?;
            print_json(&budget_json(&budget))
        }
        _ => Err(Failure::usage("pass --table, or both --dim and --rho")),
    }
}

// ----- fracnorm ----------------------------------------------------------------------------

pub fn fracnorm(args: &FracnormArgs, cap: u128) -> Result<(), Failure> {
    let config = load_config(&args.model, false)?;
    let grid = config.torus()?;
    guard_cells(&grid, cap)?;
    let d = config.d;
    let alpha = MultiIndex(args.alpha.clone().unwrap_or_else(|| vec![0; d]));
    if alpha.dim() != d {
        return Err(Failure::usage(format!("--alpha has {} entries, d = {d}", alpha.dim())));
    }
    let eta = args.eta.or(config.eta).unwrap_or(0.5);
    let model = perturbed_kernel(&config.model_spec())?;
    let field = match args.field {
        FieldArg::Kernel => model.kernel,
        FieldArg::Error | FieldArg::Remainder => {
            let res = deconvolve_with(&model.kernel, config.radius, &grid, Some(config.annulus()))?;
            if args.field == FieldArg::Error {
                res.error.e
            } else {
                res.f
            }
        }
    };
    let u_min = args.u_min.unwrap_or(0.0);
    let us: Vec<f64> = aligned_u_values(&grid, args.u_max.min(1.0), args.per_decade)
        .into_iter()
        .filter(|&u| u >= u_min - 1e-12)
        .collect();
    let curve = holder_curve(&field, &alpha, &us, &grid)?;
    let ratios = curve.ratios(eta);

    let mut rows: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(create(path)?),
        None => Box::new(io::stdout().lock()),
    };
    writeln!(rows, "u,norm,ratio")?;
    for ((u, n), r) in curve.u_values.iter().zip(&curve.norms).zip(&ratios) {
        writeln!(rows, "{u},{n},{r}")?;
    }
    rows.flush()?;
    drop(rows);

    if let Some(out) = &args.out {
        RunManifest {
            command: "fracnorm".into(),
            config: json!({
                "run": config, "alpha": alpha.0, "field": format!("{:?}", args.field).to_lowercase(),
                "u_min": u_min, "u_max": args.u_max, "eta": eta, "per_decade": args.per_decade,
            }),
            grid: GridInfo { m: config.grid, shifted: true },
            box_radius: config.radius,
            outputs: vec![out.clone()],
            doubling_deltas: BTreeMap::new(),
        }
        .write(&sidecar_path(out))?;
        print_json(&json!({
            "fitted_eta": curve.fitted_eta,
            "eta": eta,
            "prefactor": curve.prefactor(eta),
            "samples": curve.u_values.len(),
        }))?;
    }
    Ok(())
}

// ----- cdelta ------------------------------------------------------------------------------

pub fn cdelta(args: &CdeltaArgs) -> Result<(), Failure> {
    println!("{}", c_delta(args.delta)?);
    Ok(())
}

// ----- verify-assumptions ------------------------------------------------------------------

/// Reports on the kernel exactly as specified; no epsilon halving.
pub fn verify_assumptions(args: &VerifyArgs) -> Result<(), Failure> {
    let spec: ModelSpec = read_json(&args.model)?;
    spec.validate()?;
    let kernel = match spec.kind {
        ModelKind::Srw => srw_kernel(spec.dim, spec.mu0)?,
        ModelKind::Perturbed => perturbed_kernel_unchecked(&spec, spec.epsilon)?,
    };
    let report = assumption_report(&kernel, spec.rho);
    print_json(&serde_json::to_value(&report)?)?;
    if report.verdict.pass || (spec.exploratory && !report.rho_range_ok && only_range_failed(&report)) {
        Ok(())
    } else {
        Err(Failure::breach(format!("assumptions fail: {}", report.verdict.reasons.join("; "))))
    }
}

fn only_range_failed(report: &lattice_deconv::models::AssumptionReport) -> bool {
    report.symmetric && report.envelope_ok && report.infrared.holds()
}
