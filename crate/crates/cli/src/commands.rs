use semistable_core::bounds::{envelope_scan, resolvent_scan};
use semistable_core::dims::{classify_recurrence, dimension_report, graph_dim, range_dim, Recurrence, SpectrumSummary};
use semistable_core::levy::{AnyModel, ClosedFormModel, LevyExponent};
use semistable_core::probes::{
    example36_suite, graph_dim_index, packing_via_w, range_dim_index, recurrence_integral, ProbeEstimate, ShellOptions,
    Verdict,
};
use semistable_core::regress::log_grid;
use semistable_core::rng::{substream, unit_direction};
use semistable_core::sim::{
    box_dim_graph, box_dim_range, char_function_check, dyadic_scales, path_increments, sample_path, SmallJumpPolicy,
};
use semistable_core::Error;
use serde_json::{json, Value};

use crate::model::{decompositions, LoadedModel, Parsed};
use crate::output::Artifact;
use crate::CliError;

/// Probe results that are this close to the closed form count as agreement.
pub const AGREEMENT_TOL: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Ok,
    Inconclusive,
    ValidationFailed,
}

#[derive(Debug)]
pub struct Outcome {
    pub artifact: Artifact,
    pub status: Status,
}

impl Outcome {
    fn ok(result: Value) -> Self {
        Self {
            artifact: Artifact {
                result,
                csv: Vec::new(),
            },
            status: Status::Ok,
        }
    }

    fn with_csv(mut self, name: &str, body: String) -> Self {
        self.artifact.csv.push((name.into(), body));
        self
    }

    fn status(mut self, s: Status) -> Self {
        self.status = self.status.max(s);
        self
    }
}

/// Budget overrides shared by all commands.
#[derive(Debug, Clone)]
pub struct Budget {
    pub seed: u64,
    pub epsilon: f64,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub r_points: Option<usize>,
    pub samples: Option<usize>,
}

impl Budget {
    fn grid(&self, lo: f64, hi: f64, n: usize) -> Result<Vec<f64>, CliError> {
        let (lo, hi, n) = (
            self.r_min.unwrap_or(lo),
            self.r_max.unwrap_or(hi),
            self.r_points.unwrap_or(n),
        );
        if !(lo > 0.0 && hi > lo) || n < 2 {
            return Err(CliError::Usage(format!(
                "radius grid needs 0 < r-min < r-max and r-points >= 2, got {lo}, {hi}, {n}"
            )));
        }
        Ok(log_grid(lo, hi, n))
    }

    fn samples(&self, default: usize) -> usize {
        self.samples.unwrap_or(default)
    }

    fn shell(&self) -> ShellOptions {
        ShellOptions {
            sphere_samples: self.samples(ShellOptions::default().sphere_samples),
            seed: self.seed,
            ..Default::default()
        }
    }
}

fn core(e: Error) -> CliError {
    CliError::Core(e)
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn spectrum(model: &LoadedModel) -> Result<Option<SpectrumSummary>, CliError> {
    if matches!(model.parsed, Parsed::ClosedForm(ClosedFormModel::DensityExample(_))) {
        return Ok(None);
    }
    let (range, _) = decompositions(&model.exponent()?)?;
    Ok(Some(SpectrumSummary::from_decomposition(&range).map_err(core)?))
}

fn comparison(est: &ProbeEstimate, closed: Option<(f64, String)>) -> Value {
    match closed {
        Some((v, case)) => json!({
            "closed_form": v,
            "formula_case": case,
            "difference": est.value - v,
            "tolerance": AGREEMENT_TOL,
            "agrees": (est.value - v).abs() <= AGREEMENT_TOL,
        }),
        None => json!({ "closed_form": null, "formula_case": "no closed form for this model" }),
    }
}

pub fn decompose_cmd(model: &LoadedModel) -> Result<Outcome, CliError> {
    let e = model.exponent()?;
    let (range, freq) = decompositions(&e)?;
    let rows: Vec<Vec<f64>> = (0..e.dim())
        .map(|i| e.matrix().row(i).iter().copied().collect())
        .collect();
    Ok(Outcome::ok(json!({
        "exponent": rows,
        "decomposition": to_value(&range.report()),
        "adjoint_decomposition": to_value(&freq.report()),
        "spectrum": to_value(&SpectrumSummary::from_decomposition(&range).map_err(core)?),
    })))
}

pub fn validate_cmd(model: &LoadedModel) -> Result<Outcome, CliError> {
    match &model.parsed {
        Parsed::Atomic(m) => {
            let diag = m.validate();
            let checked = m.clone().into_validated();
            let valid = checked.is_ok();
            let out = Outcome::ok(json!({
                "valid": valid,
                "diagnostics": to_value(&diag),
                "error": checked.err().map(|e| e.to_string()),
            }));
            Ok(if valid {
                out
            } else {
                out.status(Status::ValidationFailed)
            })
        }
        Parsed::ClosedForm(m) => Ok(Outcome::ok(json!({
            "valid": true,
            "strict": m.is_strict(),
            "symmetric": m.is_symmetric(),
        }))),
    }
}

pub fn psi_cmd(model: &LoadedModel, b: &Budget) -> Result<Outcome, CliError> {
    let m = model.validated()?;
    let d = m.dim();
    let grid = b.grid(1e-2, 1e2, 9)?;
    let dirs: Vec<Vec<f64>> = if d == 1 {
        vec![vec![1.0], vec![-1.0]]
    } else {
        let mut rng = substream(b.seed, 0);
        (0..b.samples(8)).map(|_| unit_direction(&mut rng, d)).collect()
    };
    let mut rows = Vec::new();
    let mut csv = String::from("r,direction,re_psi,im_psi,truncation_bound\n");
    for &r in &grid {
        for (k, u) in dirs.iter().enumerate() {
            let xi: Vec<f64> = u.iter().map(|v| v * r).collect();
            let (p, bound) = match &m {
                AnyModel::Atomic(a) => a.psi_with_bound(&xi),
                AnyModel::ClosedForm(c) => (c.psi(&xi), 0.0),
            };
            csv.push_str(&format!("{r:e},{k},{:e},{:e},{bound:e}\n", p.re, p.im));
            rows.push(json!({ "r": r, "direction": k, "xi": xi, "re": p.re, "im": p.im, "truncation_bound": bound }));
        }
    }
    Ok(Outcome::ok(json!({ "directions": dirs, "rows": rows })).with_csv("grid", csv))
}

pub fn bounds_cmd(model: &LoadedModel, b: &Budget) -> Result<Outcome, CliError> {
    let m = model.validated()?;
    if !m.is_strict() {
        return Err(CliError::Validation(Error::ModelNotStrict(
            "envelope scans need a strictly semistable model".into(),
        )));
    }
    let (_, freq) = decompositions(&model.exponent()?)?;
    let grid = b.grid(10.0, 1e6, 40)?;
    let n = b.samples(512);
    let env = envelope_scan(&m, &freq, b.epsilon, &grid, n, b.seed).map_err(core)?;
    let res = resolvent_scan(&m, &freq, b.epsilon, &grid, n, b.seed).map_err(core)?;
    let csv = env.to_csv();
    let out = Outcome::ok(json!({ "envelope": to_value(&env), "resolvent": to_value(&res) })).with_csv("envelope", csv);
    Ok(if env.pass {
        out
    } else {
        out.status(Status::Inconclusive)
    })
}

pub fn dims_cmd(model: &LoadedModel) -> Result<Outcome, CliError> {
    let spec = spectrum(model)?.ok_or_else(|| CliError::Usage("dimension formulas need a scaling exponent".into()))?;
    let rep = dimension_report(&spec).map_err(core)?;
    Ok(Outcome::ok(
        json!({ "spectrum": to_value(&spec), "report": to_value(&rep) }),
    ))
}

pub fn probe_index_cmd(model: &LoadedModel, b: &Budget, graph: bool) -> Result<Outcome, CliError> {
    let m = model.validated()?;
    let grid = b.grid(1.0, 1e6, 25)?;
    let est = if graph {
        graph_dim_index(&m, &grid, &b.shell())
    } else {
        range_dim_index(&m, &grid, &b.shell())
    }
    .map_err(core)?;
    let closed = match spectrum(model)? {
        Some(spec) => {
            let br = if graph {
                graph_dim(&spec, 1.0)
            } else {
                range_dim(&spec, 1.0)
            }
            .map_err(core)?;
            Some((br.value, br.case))
        }
        None => None,
    };
    let csv = est.to_csv("shell_mean");
    Ok(
        Outcome::ok(json!({ "estimate": to_value(&est), "comparison": comparison(&est, closed) }))
            .with_csv("profile", csv),
    )
}

pub fn probe_packing_cmd(model: &LoadedModel, b: &Budget) -> Result<Outcome, CliError> {
    let m = model.validated()?;
    let grid = b.grid(1e-4, 1e-1, 20)?;
    let est = packing_via_w(&m, &grid, b.samples(100_000), b.seed).map_err(core)?;
    let closed = match spectrum(model)? {
        Some(spec) => {
            let br = range_dim(&spec, 1.0).map_err(core)?;
            Some((br.value, format!("packing equals Hausdorff on [0,1]; {}", br.case)))
        }
        None => None,
    };
    let csv = est.to_csv("w");
    Ok(
        Outcome::ok(json!({ "estimate": to_value(&est), "comparison": comparison(&est, closed) }))
            .with_csv("profile", csv),
    )
}

/// Decreasing `q` values from `q_max` down to `q_min`.
pub fn q_list(q_max: f64, q_min: f64, n: usize) -> Result<Vec<f64>, CliError> {
    if !(q_min > 0.0 && q_max > q_min) || n < 3 {
        return Err(CliError::Usage(
            "q grid needs 0 < q-min < q-max and at least 3 points".into(),
        ));
    }
    let mut q = log_grid(q_min, q_max, n);
    q.reverse();
    Ok(q)
}

pub fn probe_recurrence_cmd(model: &LoadedModel, b: &Budget, q: &[f64]) -> Result<Outcome, CliError> {
    let m = model.validated()?;
    let probe = recurrence_integral(&m, q, &b.shell()).map_err(core)?;
    let closed = spectrum(model)?.map(|spec| classify_recurrence(&spec, spec.is_gaussian_full()));
    let mut csv = String::from("q,integral\n");
    for (qv, v) in probe.q.iter().zip(&probe.values) {
        csv.push_str(&format!("{qv:e},{v:e}\n"));
    }
    let verdict = probe.verdict;
    let agrees = closed.as_ref().map(|(c, _)| match verdict {
        Verdict::Recurrent => *c == Recurrence::Recurrent,
        Verdict::Transient => *c == Recurrence::Transient,
        Verdict::Inconclusive => false,
    });
    let out = Outcome::ok(json!({
        "probe": to_value(&probe),
        "closed_form": closed.as_ref().map(|(c, _)| to_value(c)),
        "formula_case": closed.as_ref().map(|(_, s)| s.clone()),
        "agrees": agrees,
    }))
    .with_csv("integral", csv);
    Ok(if verdict == Verdict::Inconclusive {
        out.status(Status::Inconclusive)
    } else {
        out
    })
}

pub fn example36_cmd(model: &LoadedModel, b: &Budget, q: &[f64]) -> Result<Outcome, CliError> {
    let Parsed::ClosedForm(ClosedFormModel::DensityExample(d)) = &model.parsed else {
        return Err(CliError::Usage(format!(
            "example36 needs a density_example model, got {}",
            model.kind
        )));
    };
    let grid = b.grid(1.0, 1e6, 25)?;
    let rep = example36_suite(d.alpha, d.beta, q, &grid, &b.shell()).map_err(core)?;
    let out = Outcome::ok(to_value(&rep));
    Ok(if rep.recurrence.verdict == Verdict::Inconclusive {
        out.status(Status::Inconclusive)
    } else {
        out
    })
}

/// Path settings for `simulate` and `boxdim`.
#[derive(Debug, Clone)]
pub struct PathOptions {
    pub t_max: f64,
    pub steps: usize,
    pub delta: Option<f64>,
    pub policy: SmallJumpPolicy,
}

/// Values of `lag·Re ψ` at which the simulated characteristic function is checked.
const CF_LEVELS: [f64; 5] = [0.1, 0.3, 0.6, 1.0, 2.0];

/// Frequency along the first axis where `lag·Re ψ` reaches `target`, by bisection in `log r`.
fn cf_frequency(m: &AnyModel, lag: f64, target: f64) -> Vec<f64> {
    let d = m.dim();
    let at = |r: f64| -> Vec<f64> { (0..d).map(|i| if i == 0 { r } else { 0.0 }).collect() };
    let (mut lo, mut hi) = (-20f64, 20f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if lag * m.psi(&at(mid.exp())).re < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at((0.5 * (lo + hi)).exp())
}

pub fn simulate_cmd(model: &LoadedModel, b: &Budget, p: &PathOptions) -> Result<Outcome, CliError> {
    let m = model.atomic()?;
    let v = model.validated()?;
    let path = sample_path(m, p.t_max, p.steps, p.delta, p.policy, b.seed).map_err(core)?;
    let lag_steps = (p.steps / 1000).max(1);
    let incs = path_increments(&path, lag_steps);
    let lag = p.t_max * lag_steps as f64 / p.steps as f64;
    let d = path.dim;
    let xis: Vec<Vec<f64>> = CF_LEVELS.iter().map(|&target| cf_frequency(&v, lag, target)).collect();
    let cf = char_function_check(&incs, d, lag, &v, &xis).map_err(core)?;
    let last = path.point(path.len() - 1).to_vec();
    let csv = path.to_csv();
    Ok(Outcome::ok(json!({
        "dim": d,
        "points": path.len(),
        "t_max": p.t_max,
        "jump_threshold": path.jump_threshold,
        "small_jump_policy": to_value(&path.small_jump_policy),
        "expected_jumps": path.expected_jumps,
        "discarded_moment_fraction": path.discarded_moment_fraction,
        "discrepancy_bound_unit": path.discrepancy_bound_unit,
        "final_value": last,
        "char_function_check": to_value(&cf),
    }))
    .with_csv("path", csv))
}

pub fn boxdim_cmd(model: &LoadedModel, b: &Budget, p: &PathOptions, j_lo: i32, j_hi: i32) -> Result<Outcome, CliError> {
    let m = model.atomic()?;
    if j_hi <= j_lo || j_lo < 0 {
        return Err(CliError::Usage("box scales need 0 <= j-lo < j-hi".into()));
    }
    let path = sample_path(m, p.t_max, p.steps, p.delta, p.policy, b.seed).map_err(core)?;
    let scales = dyadic_scales(j_lo, j_hi);
    let spec = spectrum(model)?;
    let mut status = Status::Ok;
    let mut part = |est: Result<ProbeEstimate, Error>, closed: Option<(f64, String)>| match est {
        Ok(e) => json!({ "estimate": to_value(&e), "comparison": comparison(&e, closed) }),
        Err(Error::SlopeUnstable(msg)) => {
            status = Status::Inconclusive;
            json!({ "estimate": null, "inconclusive": msg })
        }
        Err(e) => json!({ "estimate": null, "error": e.to_string() }),
    };
    let closed_range = match &spec {
        Some(s) => range_dim(s, 1.0).map(|br| Some((br.value, br.case))).map_err(core)?,
        None => None,
    };
    let closed_graph = match &spec {
        Some(s) => graph_dim(s, 1.0).map(|br| Some((br.value, br.case))).map_err(core)?,
        None => None,
    };
    let range = part(box_dim_range(&path, &scales), closed_range);
    let graph = part(box_dim_graph(&path, &scales), closed_graph);
    Ok(Outcome::ok(json!({
        "points": path.len(),
        "t_max": p.t_max,
        "scales": scales,
        "range": range,
        "graph": graph,
        "note": "box counting uses the time-[0, t_max] path; the graph uses time rescaled to [0, 1]",
    }))
    .status(status))
}

/// Everything at moderate budgets, in one bundle with agreement checks.
pub fn report_cmd(model: &LoadedModel, b: &Budget, q: &[f64]) -> Result<Outcome, CliError> {
    let mut status = Status::Ok;
    let mut sections = serde_json::Map::new();
    let mut checks = Vec::new();
    let mut take = |name: &str, r: Result<Outcome, CliError>, sections: &mut serde_json::Map<String, Value>| match r {
        Ok(o) => {
            status = status.max(o.status);
            sections.insert(name.into(), o.artifact.result.clone());
            Some(o.artifact.result)
        }
        Err(e) => {
            sections.insert(name.into(), json!({ "skipped": e.to_string() }));
            None
        }
    };
    let valid = take("validate", validate_cmd(model), &mut sections);
    if valid.as_ref().and_then(|v| v["valid"].as_bool()) == Some(false) {
        return Ok(Outcome::ok(Value::Object(sections)).status(Status::ValidationFailed));
    }
    let reduced = Budget {
        r_points: Some(b.r_points.unwrap_or(13)),
        samples: b.samples,
        ..b.clone()
    };
    take("decompose", decompose_cmd(model), &mut sections);
    take("dims", dims_cmd(model), &mut sections);
    let bounds_budget = Budget {
        r_points: Some(b.r_points.unwrap_or(20)),
        samples: Some(b.samples(128)),
        ..b.clone()
    };
    take("bounds", bounds_cmd(model, &bounds_budget), &mut sections);
    for (name, graph) in [("probe_range", false), ("probe_graph", true)] {
        if let Some(v) = take(name, probe_index_cmd(model, &reduced, graph), &mut sections) {
            checks.push(json!({ "check": name, "comparison": v["comparison"] }));
        }
    }
    let packing_budget = Budget {
        r_min: None,
        r_max: None,
        r_points: Some(12),
        samples: Some(b.samples(20_000)),
        ..b.clone()
    };
    if let Some(v) = take(
        "probe_packing",
        probe_packing_cmd(model, &packing_budget),
        &mut sections,
    ) {
        checks.push(json!({ "check": "probe_packing", "comparison": v["comparison"] }));
    }
    if let Some(v) = take("probe_recurrence", probe_recurrence_cmd(model, b, q), &mut sections) {
        checks.push(json!({ "check": "probe_recurrence", "agrees": v["agrees"] }));
    }
    if matches!(model.parsed, Parsed::ClosedForm(ClosedFormModel::DensityExample(_))) {
        take("example36", example36_cmd(model, &reduced, q), &mut sections);
    }
    let all_agree = checks.iter().all(|c| {
        c["comparison"]["agrees"]
            .as_bool()
            .or(c["agrees"].as_bool())
            .unwrap_or(true)
    });
    sections.insert("checks".into(), Value::Array(checks));
    sections.insert("all_checks_agree".into(), json!(all_agree));
    let out = Outcome::ok(Value::Object(sections)).status(status);
    Ok(if all_agree {
        out
    } else {
        out.status(Status::Inconclusive)
    })
}
