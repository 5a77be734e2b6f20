use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use cayley_gibbs::inference::{
    anomaly_scores, denoise, layer_from_json, layer_to_map, InferenceProblem,
};
use cayley_gibbs::measure::{
    boundary_law, curve_k1, curve_unit_emission, edge_conditional, markov_kernel, sample,
    write_k1_curve_csv, write_unit_curve_csv,
};
use cayley_gibbs::model::{DerivedParams, Emission, ModelParams, ModelSpec, Spin};
use cayley_gibbs::solver::{
    classify_tigm_count, solve_full_3d, solve_invariant_sets, FixedPoint3, MultistartConfig,
    RESIDUAL_TOL,
};
use cayley_gibbs::tree::{RootMode, Tree, TreeShape};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::*;
use crate::{from_core, usage, verify, EXIT_FAILURE, EXIT_OK};

pub fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Solve(a) => solve(a),
        Command::Classify(a) => classify(a),
        Command::Sweep(a) => sweep(a),
        Command::Conditional(a) => conditional(a),
        Command::Bp(a) => bp(a),
        Command::Sample(a) => sample_cmd(a),
        Command::Verify(a) => verify_cmd(a),
        Command::DemoDenoise(a) => demo(a),
    }
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

/// Model plus the optional per-command keys of a JSON run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub depth: Option<usize>,
    pub root_mode: Option<RootMode>,
    pub seed: Option<u64>,
    pub point: Option<[f64; 3]>,
    pub solution: Option<usize>,
    pub sigma: Option<Value>,
}

impl RunConfig {
    pub fn derived(&self) -> Result<DerivedParams> {
        self.model.derived().map_err(from_core)
    }
}

fn field<T: serde::de::DeserializeOwned>(doc: &Value, key: &str) -> Result<Option<T>> {
    match doc.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| usage(format!("config key {key:?}: {e}"))),
    }
}

pub fn resolve(args: &ModelArgs) -> Result<RunConfig> {
    let derived_flags =
        args.theta.is_some() || args.a.is_some() || args.b.is_some() || args.c.is_some();
    let physical_flags = args.coupling.is_some() || args.beta.is_some() || args.emission.is_some();

    if let Some(path) = &args.config {
        if derived_flags || physical_flags || args.k.is_some() {
            return Err(usage(
                "give model parameters either as flags or in --config, not both",
            ));
        }
        let text = fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let doc: Value = serde_json::from_str(&text)
            .map_err(|e| usage(format!("config {} is not valid JSON: {e}", path.display())))?;
        let model_doc = doc.get("model").unwrap_or(&doc);
        let model = ModelSpec::from_json(model_doc).map_err(from_core)?;
        return Ok(RunConfig {
            model,
            depth: field(&doc, "depth")?,
            root_mode: field(&doc, "root_mode")?,
            seed: field(&doc, "seed")?,
            point: field(&doc, "point")?,
            solution: field(&doc, "solution")?,
            sigma: doc.get("sigma").cloned(),
        });
    }

    let k = args.k.ok_or_else(|| usage("--k is required"))?;
    let model = match (derived_flags, physical_flags) {
        (true, true) => return Err(usage(
            "mixing derived (--theta/--a/--b/--c) and physical (--J/--beta/--emission) parameters",
        )),
        (false, false) => {
            return Err(usage(
                "need either --theta [--a --b --c] or --J --beta [--emission]",
            ))
        }
        (true, false) => {
            let theta = args.theta.ok_or_else(|| usage("--theta is required"))?;
            let d = DerivedParams::new(
                k,
                theta,
                args.a.unwrap_or(1.0),
                args.b.unwrap_or(1.0),
                args.c.unwrap_or(1.0),
            )
            .map_err(from_core)?;
            ModelSpec::Derived(d)
        }
        (false, true) => {
            let coupling = args.coupling.ok_or_else(|| usage("--J is required"))?;
            let beta = args.beta.ok_or_else(|| usage("--beta is required"))?;
            let emission = match &args.emission {
                Some(s) => {
                    let v = parse_reals(s, 4, "--emission")?;
                    Emission {
                        mm: v[0],
                        mp: v[1],
                        pm: v[2],
                        pp: v[3],
                    }
                }
                None => Emission::uniform(0.0),
            };
            ModelSpec::Physical(ModelParams::new(k, coupling, beta, emission).map_err(from_core)?)
        }
    };
    Ok(RunConfig {
        model,
        depth: None,
        root_mode: None,
        seed: None,
        point: None,
        solution: None,
        sigma: None,
    })
}

fn parse_reals(s: &str, n: usize, what: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| {
            usage(format!(
                "{what} expects {n} comma-separated numbers, got {s:?}"
            ))
        })?;
    if v.len() != n {
        return Err(usage(format!(
            "{what} expects {n} comma-separated numbers, got {s:?}"
        )));
    }
    Ok(v)
}

fn parse_spins(s: &str, what: &str) -> Result<Vec<Spin>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<Spin>()
                .map_err(|e| usage(format!("{what}: {e}")))
        })
        .collect()
}

fn shape_of(cfg: &RunConfig, tree: &TreeArgs, k: usize) -> Result<TreeShape> {
    let depth = tree
        .depth
        .or(cfg.depth)
        .ok_or_else(|| usage("--depth is required"))?;
    let mode = tree.root_mode.or(cfg.root_mode).unwrap_or_default();
    TreeShape::new(k, depth, mode).map_err(from_core)
}

fn point_of(cfg: &RunConfig, args: &PointArgs, params: &DerivedParams) -> Result<FixedPoint3> {
    let explicit = match &args.point {
        Some(s) => Some(parse_reals(s, 3, "--point")?),
        None => cfg.point.map(|p| p.to_vec()),
    };
    if let Some(p) = explicit {
        if p.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(usage(format!("point must be positive, got {p:?}")));
        }
        return Ok(FixedPoint3::new(p[0], p[1], p[2], params));
    }
    let set = solve_full_3d(params, &MultistartConfig::default());
    let index = args.solution.or(cfg.solution).unwrap_or(0);
    set.solutions.get(index).map(|s| s.point).ok_or_else(|| {
        usage(format!(
            "solution index {index} out of range ({} found)",
            set.count
        ))
    })
}

fn require_fixed_point(point: &FixedPoint3) -> Result<()> {
    if point.residual >= RESIDUAL_TOL {
        return Err(usage(format!(
            "point ({}, {}, {}) is not a fixed point (residual {:.3e})",
            point.u, point.v, point.w, point.residual
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

fn emit_text(output: &OutputArgs, text: &str) -> Result<()> {
    match &output.output {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(output: &OutputArgs, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit_text(output, &text)
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn solve(args: SolveArgs) -> Result<i32> {
    let params = resolve(&args.model)?.derived()?;
    let set = match args.method {
        SolveMethod::Full => solve_full_3d(&params, &MultistartConfig::default()),
        SolveMethod::Invariant => solve_invariant_sets(&params).map_err(from_core)?,
    };
    emit_json(&args.output, &set)?;
    Ok(EXIT_OK)
}

fn classify(args: ClassifyArgs) -> Result<i32> {
    let region = classify_tigm_count(args.k, args.theta).map_err(from_core)?;
    emit_json(&args.output, &region)?;
    Ok(EXIT_OK)
}

fn sweep(args: SweepArgs) -> Result<i32> {
    let thetas = args.theta.values();
    let mut buf = Vec::new();
    match args.family {
        Family::Fig1 => {
            if args.a.is_some() {
                return Err(usage("--a applies to the fig2 family only"));
            }
            let k = args.k;
            let rows = thetas
                .par_iter()
                .map(|&t| curve_unit_emission(k, t))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(from_core)?;
            match args.format {
                Format::Csv => write_unit_curve_csv(&rows, &mut buf)?,
                Format::Json => serde_json::to_writer_pretty(&mut buf, &rows)?,
            }
        }
        Family::Fig2 => {
            if args.k != 1 {
                return Err(usage("the fig2 family needs --k 1"));
            }
            let a = args.a.ok_or_else(|| usage("the fig2 family needs --a"))?;
            let variant = args.variant.into();
            let rows = thetas
                .par_iter()
                .map(|&t| curve_k1(a, t, variant))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(from_core)?;
            match args.format {
                Format::Csv => write_k1_curve_csv(&rows, &mut buf)?,
                Format::Json => serde_json::to_writer_pretty(&mut buf, &rows)?,
            }
        }
    }
    if args.format == Format::Json {
        buf.push(b'\n');
    }
    emit_text(&args.output, &String::from_utf8(buf)?)?;
    Ok(EXIT_OK)
}

fn conditional(args: ConditionalArgs) -> Result<i32> {
    let cfg = resolve(&args.model)?;
    let params = cfg.derived()?;
    let sigma = parse_spins(&args.sigma, "--sigma")?;
    let [sx, sy] = sigma[..] else {
        return Err(usage("--sigma needs exactly two spins, e.g. +1,-1"));
    };
    let point = point_of(&cfg, &args.point, &params)?;
    let law = boundary_law(&point, &params).map_err(from_core)?;
    let table = edge_conditional((sx, sy), &params, &law.vertex_weights(&params));
    emit_json(&args.output, &table)?;
    Ok(EXIT_OK)
}

fn read_sigma(arg: Option<&str>, cfg: &RunConfig, tree: &Tree) -> Result<Vec<Spin>> {
    let value = match arg {
        Some(s) if Path::new(s).is_file() => {
            let text = fs::read_to_string(s).with_context(|| format!("reading {s}"))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("{s}: invalid JSON: {e}")))?
        }
        Some(s) => serde_json::from_str(s)
            .map_err(|e| usage(format!("--sigma is neither a file nor valid JSON: {e}")))?,
        None => cfg
            .sigma
            .clone()
            .ok_or_else(|| usage("an observed layer is required (--sigma or config \"sigma\")"))?,
    };
    layer_from_json(tree, &value).map_err(from_core)
}

fn bp(args: BpArgs) -> Result<i32> {
    let cfg = resolve(&args.model)?;
    let params = cfg.derived()?;
    let shape = shape_of(&cfg, &args.tree, params.k)?;
    let tree = Tree::new(shape).map_err(from_core)?;
    let point = point_of(&cfg, &args.point, &params)?;
    let law = boundary_law(&point, &params).map_err(from_core)?;
    let sigma = read_sigma(args.sigma.as_deref(), &cfg, &tree)?;
    let problem = InferenceProblem::new(shape, params, law, sigma.clone()).map_err(from_core)?;
    let result = denoise(&problem).map_err(from_core)?;
    let anomalies = anomaly_scores(&result.map, &sigma, &shape).map_err(from_core)?;
    emit_json(
        &args.output,
        &json!({
            "shape": shape,
            "params": params,
            "point": point,
            "marginals_plus": result.marginals.labeled(&tree),
            "map": layer_to_map(&tree, &result.map),
            "flips": result.flips,
            "anomaly_total": anomalies.total,
        }),
    )?;
    Ok(EXIT_OK)
}

fn seeded_sample(
    cfg: &RunConfig,
    tree_args: &TreeArgs,
    point_args: &PointArgs,
    seed_flag: Option<u64>,
) -> Result<(
    DerivedParams,
    TreeShape,
    Tree,
    FixedPoint3,
    u64,
    cayley_gibbs::model::BilayerConfig,
)> {
    let seed = seed_flag
        .or(cfg.seed)
        .ok_or_else(|| usage("--seed is required"))?;
    let params = cfg.derived()?;
    let shape = shape_of(cfg, tree_args, params.k)?;
    let tree = Tree::new(shape).map_err(from_core)?;
    let point = point_of(cfg, point_args, &params)?;
    require_fixed_point(&point)?;
    let law = boundary_law(&point, &params).map_err(from_core)?;
    let kernel = markov_kernel(&shape, &params, &law).map_err(from_core)?;
    let draw = sample(&kernel, &tree, seed).map_err(from_core)?;
    Ok((params, shape, tree, point, seed, draw))
}

fn sample_cmd(args: SampleArgs) -> Result<i32> {
    let cfg = resolve(&args.model)?;
    let (params, shape, tree, point, seed, draw) =
        seeded_sample(&cfg, &args.tree, &args.point, args.seed)?;
    emit_json(
        &args.output,
        &json!({
            "shape": shape,
            "params": params,
            "point": point,
            "seed": seed,
            "hidden": layer_to_map(&tree, &draw.hidden),
            "observed": layer_to_map(&tree, &draw.observed),
        }),
    )?;
    Ok(EXIT_OK)
}

fn demo(args: DemoArgs) -> Result<i32> {
    let cfg = resolve(&args.model)?;
    let (params, shape, tree, point, seed, draw) =
        seeded_sample(&cfg, &args.tree, &args.point, args.seed)?;
    let law = boundary_law(&point, &params).map_err(from_core)?;
    let problem =
        InferenceProblem::new(shape, params, law, draw.observed.clone()).map_err(from_core)?;
    let result = denoise(&problem).map_err(from_core)?;
    let mismatches = |a: &[Spin], b: &[Spin]| a.iter().zip(b).filter(|(x, y)| x != y).count();
    let anomalies = anomaly_scores(&draw.hidden, &draw.observed, &shape).map_err(from_core)?;
    emit_json(
        &args.output,
        &json!({
            "shape": shape,
            "params": params,
            "point": point,
            "seed": seed,
            "vertices": tree.len(),
            "observed_errors": mismatches(&draw.observed, &draw.hidden),
            "flips": result.flips,
            "map_errors": mismatches(&result.map, &draw.hidden),
            "true_anomaly_total": anomalies.total,
            "map": layer_to_map(&tree, &result.map),
            "hidden": layer_to_map(&tree, &draw.hidden),
            "observed": layer_to_map(&tree, &draw.observed),
        }),
    )?;
    Ok(EXIT_OK)
}

fn verify_cmd(args: VerifyArgs) -> Result<i32> {
    let report = verify::build_report(args.seed)?;
    emit_json(&args.output, &report)?;
    for check in &report.checks {
        let status = if check.pass { "PASS" } else { "FAIL" };
        let kind = if check.mandatory {
            ""
        } else {
            " (informational)"
        };
        eprintln!("{status} {}{kind}", check.name);
    }
    Ok(if report.pass { EXIT_OK } else { EXIT_FAILURE })
}
