use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use serde_json::{json, Map, Value};

use crate::dual_green::{matrix_to_text, DualOperator, GreenOptions};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::format::g17_list;
use crate::lattice::{enumerate_region, BlockStructure, Frequency, MultiIndex, Region, RegionDescriptor};
use crate::linalg;
use crate::msa::{
    absence_witness, cube_covering, duality_residual, search_covering, spectral_window_check, sphere_box_grid,
    verify_coupling_decay, verify_coupling_norm, verify_perturbation_lemma, BlochSample, CheckReport, Covering,
    DecayCheckInput, LatticeVector, PolyBound,
};
use crate::potential::PotentialModel;
use crate::resonance::{
    cartan_probe, double_resonance_scan, first_step_delta, in_resonance, section_measure, success_rate, CartanProbe,
    ResonanceSpec,
};
use crate::rng::task_rng;

use super::{Cell, CoreShape, Provenance, Row, Subcommand, SweepConfig, SweepResult, Table, Task};

struct Ctx<'a> {
    cfg: &'a SweepConfig,
    bs: BlockStructure,
    potential: PotentialModel,
    seed: u64,
    inner: Executor,
}

#[derive(Default)]
struct Outcome {
    rows: Vec<Row>,
    extra: Vec<Row>,
    files: Vec<(String, String)>,
}

impl Outcome {
    fn single(row: Row) -> Self {
        Self { rows: vec![row], ..Self::default() }
    }
}

fn headers(sub: Subcommand) -> (&'static [&'static str], Option<(&'static str, &'static [&'static str])>) {
    match sub {
        Subcommand::Assemble => (&["task", "N", "epsilon", "omega", "theta", "size", "hermitian", "file", "status"], None),
        Subcommand::Green => (
            &[
                "task", "N", "epsilon", "omega", "theta", "E", "op_norm", "sigma_min", "near_singular", "decay_rate",
                "decay_intercept", "decay_residual", "decay_samples", "ldt_pass", "profile", "file", "status",
            ],
            None,
        ),
        Subcommand::LdtScan => (
            &[
                "task", "N", "epsilon", "delta", "omega", "theta", "E", "resonant", "resonant_k", "op_norm",
                "sigma_min", "first_step_pass", "ldt_pass", "status",
            ],
            None,
        ),
        Subcommand::ResonanceMeasure => (
            &[
                "j", "theta_section", "N", "delta", "E", "measure", "bound4", "ratio", "task", "epsilon", "omega",
                "theta", "status",
            ],
            None,
        ),
        Subcommand::DoubleResonance => (
            &[
                "task", "N", "N1", "delta", "omega", "theta", "E", "m_lo", "m_hi", "found_m", "success", "candidates",
                "status",
            ],
            Some(("annulus", &["task", "M", "annulus_size", "failures", "first_failure_k"])),
        ),
        Subcommand::CartanProbe => (
            &[
                "task", "N", "N1", "epsilon", "omega", "theta", "E", "j", "interval_length", "samples", "bad",
                "estimate", "ci_low", "ci_high", "threshold", "within_bound", "sub_region_contained",
                "sub_region_diam_ok", "status",
            ],
            Some(("samples", &["task", "sample", "y", "norm", "is_bad"])),
        ),
        Subcommand::CouplingVerify => (
            &[
                "task", "check", "N", "epsilon", "omega", "theta", "E", "M", "hypotheses_hold", "conclusions_hold",
                "hyp_margin", "concl_margin", "c_min", "effective_rate", "inputs_digest", "status",
            ],
            None,
        ),
        Subcommand::Witness => (
            &[
                "task", "N", "epsilon", "delta", "omega", "theta", "E", "rhs_bound", "threshold", "pass", "green_norm",
                "status",
            ],
            None,
        ),
        Subcommand::Duality => (
            &[
                "task", "N", "epsilon", "omega", "theta", "E", "eigenvalue", "phase", "max_residual", "max_psi",
                "interior", "boundary", "tail", "roundoff", "budget", "within_budget", "lattice_equation_holds",
                "status",
            ],
            None,
        ),
        Subcommand::SpectrumWindow => (
            &[
                "task", "N", "epsilon", "omega", "E", "min_dist", "argmin_theta", "v_max", "bound", "grid_term",
                "truncation_term", "slack", "pass", "grid_points", "status",
            ],
            None,
        ),
        Subcommand::Selftest => unreachable!("selftest has its own table"),
    }
}

fn status_of(e: &Error) -> String {
    match e {
        Error::Precondition(m) => format!("refused: {m}"),
        other => format!("error: {other}"),
    }
}

pub(super) fn execute(
    sub: Subcommand,
    cfg: &SweepConfig,
    tasks: &[Task],
    provenance: Provenance,
    exec: &Executor,
) -> Result<SweepResult> {
    if sub == Subcommand::Duality && cfg.options.phase.is_none() && cfg.run.seed.is_none() {
        return Err(Error::Config("duality draws random phases: set options.phase or a seed".into()));
    }
    // The spectral window parallelizes over its Θ grid instead of over tasks.
    let (outer, inner) = match sub {
        Subcommand::SpectrumWindow => (Executor::Sequential, *exec),
        _ => (*exec, Executor::Sequential),
    };
    let ctx = Ctx {
        cfg,
        bs: cfg.block_structure()?,
        potential: cfg.potential_model()?,
        seed: cfg.run.seed.unwrap_or(0),
        inner,
    };
    let results = outer.map(tasks.len(), |i| run_task(sub, &ctx, &tasks[i]));

    let (header, extra_header) = headers(sub);
    let mut main = Table::new("", header);
    let mut extra = extra_header.map(|(suffix, h)| Table::new(suffix, h));
    let mut files = Vec::new();
    if sub == Subcommand::Assemble {
        files.push(("potential.txt".to_string(), ctx.potential.to_table()));
    }
    for (task, result) in tasks.iter().zip(results) {
        match result {
            Ok(out) => {
                for mut row in out.rows {
                    let mut full = Row::new();
                    task.ident(&mut full);
                    for (k, v) in row.0.drain(..) {
                        full.set(&k, v);
                    }
                    if full.get("status").is_none() {
                        full.set("status", "");
                    }
                    main.rows.push(full);
                }
                if let Some(t) = extra.as_mut() {
                    t.rows.extend(out.extra);
                }
                files.extend(out.files);
            }
            Err(e) => {
                let mut row = Row::new();
                task.ident(&mut row);
                row.set("status", status_of(&e));
                main.rows.push(row);
            }
        }
    }
    let summary = summarize(sub, &main);
    let mut tables = vec![main];
    tables.extend(extra);
    Ok(SweepResult { subcommand: sub, provenance, tables, summary, files })
}

fn run_task(sub: Subcommand, ctx: &Ctx<'_>, t: &Task) -> Result<Outcome> {
    match sub {
        Subcommand::Assemble => assemble(ctx, t),
        Subcommand::Green => green(ctx, t),
        Subcommand::LdtScan => ldt_scan(ctx, t),
        Subcommand::ResonanceMeasure => resonance_measure(ctx, t),
        Subcommand::DoubleResonance => double_resonance(ctx, t),
        Subcommand::CartanProbe => cartan(ctx, t),
        Subcommand::CouplingVerify => Ok(coupling(ctx, t)),
        Subcommand::Witness => witness(ctx, t),
        Subcommand::Duality => duality(ctx, t),
        Subcommand::SpectrumWindow => window(ctx, t),
        Subcommand::Selftest => unreachable!("selftest does not run per task"),
    }
}

fn operator(ctx: &Ctx<'_>, t: &Task) -> Result<DualOperator> {
    DualOperator::new(t.theta.clone(), Frequency::new(t.omega.clone())?, t.epsilon, ctx.potential.clone())
}

fn first_step(ctx: &Ctx<'_>, t: &Task) -> Result<f64> {
    match t.delta {
        Some(d) => Ok(d),
        None => first_step_delta(t.n, ctx.cfg.schedule.c1, ctx.bs.b(), ctx.cfg.schedule.c),
    }
}

fn rho(ctx: &Ctx<'_>) -> f64 {
    ctx.potential.rho()
}

fn assemble(ctx: &Ctx<'_>, t: &Task) -> Result<Outcome> {
    let region = ctx.cfg.region(t.n)?;
    let h = operator(ctx, t)?.assemble(&region);
    let file = format!("assemble_task{:05}.txt", t.index);
    let row = Row::new().with("size", region.len()).with("hermitian", h.is_hermitian()).with("file", file.as_str());
    Ok(Outcome { files: vec![(file, matrix_to_text(&h.matrix))], ..Outcome::single(row) })
}

fn green(ctx: &Ctx<'_>, t: &Task) -> Result<Outcome> {
    let region = ctx.cfg.region(t.n)?;
    let op = operator(ctx, t)?;
    let opts = GreenOptions::new(t.n, rho(ctx));
    let (report, inverse) = match op.green(&region, t.energy, &opts) {
        Ok(g) => (g.report, Some(g.inverse)),
        Err(Error::NearSingular { .. }) => (op.green_report(&region, t.energy, &opts)?, None),
        Err(e) => return Err(e),
    };
    let fit = report.decay_fit.as_ref();
    let mut row = Row::new()
        .with("op_norm", report.op_norm)
        .with("sigma_min", report.sigma_min)
        .with("near_singular", report.near_singular)
        .with("decay_rate", fit.map(|f| f.rate))
        .with("decay_intercept", fit.map(|f| f.intercept))
        .with("decay_residual", fit.map(|f| f.residual))
        .with("decay_samples", fit.map(|f| f.samples))
        .with("ldt_pass", report.ldt_pass)
        .with("profile", report.profile.clone());
    let mut out = Outcome::default();
    if let (true, Some(inv)) = (ctx.cfg.options.dump, inverse) {
        let file = format!("green_task{:05}.txt", t.index);
        row.set("file", file.as_str());
        out.files.push((file, matrix_to_text(&inv)));
    }
    out.rows.push(row);
    Ok(out)
}

fn ldt_scan(ctx: &Ctx<'_>, t: &Task) -> Result<Outcome> {
    let delta = first_step(ctx, t)?;
    let op = operator(ctx, t)?;
    let spec = ResonanceSpec::new(t.n, delta, t.energy, op.omega().clone(), ctx.bs.clone())?;
    let resonant = in_resonance(&t.theta, &spec);
    let region = ctx.cfg.region(t.n)?;
    let report = op.green_report(&region, t.energy, &GreenOptions::new(t.n, rho(ctx)))?;
    let row = Row::new()
        .with("delta", delta)
        .with("resonant", resonant.is_some())
        .with("resonant_k", resonant.map(|k| Cell::Ints(k.entries().to_vec())).unwrap_or_default())
        .with("op_norm", report.op_norm)
        .with("sigma_min", report.sigma_min)
        .with("first_step_pass", report.first_step_bounds_hold(delta, rho(ctx)))
        .with("ldt_pass", report.ldt_pass);
    Ok(Outcome::single(row))
}

fn resonance_measure(ctx: &Ctx<'_>, t: &Task) -> Result<Outcome> {
    let delta = first_step(ctx, t)?;
    let j = ctx.cfg.options.j - 1;
    let spec = ResonanceSpec::new(t.n, delta, t.energy, Frequency::new(t.omega.clone())?, ctx.bs.clone())?;
    let rest: Vec<f64> = t.theta.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, x)| *x).collect();
    let measure = section_measure(j, &rest, &spec)?;
    let bound = spec.measure_bound();
    let row = Row::new()
        .with("j", j + 1)
        .with("theta_section", rest)
        .with("delta", delta)
        .with("measure", measure)
        .with("bound4", bound)
        .with("ratio", measure / bound);
    Ok(Outcome::single(row))
}

fn double_resonance(ctx: &Ctx<'_>, t: &Task) -> Result<Outcome> {
    let omega = Frequency::new(t.omega.clone())?;
    let scan = double_resonance_scan(&t.theta, t.energy, &omega, &ctx.bs, t.n, &ctx.cfg.schedule, t.delta)?;
    let row = Row::new()
        .with("N1", scan.n1)
        .with("delta", scan.delta)
        .with("m_lo", scan.m_range.0)
        .with("m_hi", scan.m_range.1)
        .with("found_m", scan.found)
        .with("success", scan.found.is_some())
        .with("candidates", scan.records.len());
    let extra = scan
        .records
        .iter()
        .map(|r| {
            Row::new()
                .with("task", t.index)
                .with("M", r.m)
                .with("annulus_size", r.annulus_size)
                .with("failures", r.failures)
                .with(
                    "first_failure_k",
                    r.first_failure.as_ref().map(|k| Cell::Ints(k.entries().to_vec())).unwrap_or_default(),
                )
        })
        .collect();
    Ok(Outcome { rows: vec![row], extra, files: Vec::new() })
}

fn cartan(ctx: &Ctx<'_>, t: &Task) -> Result<Outcome> {
    let opts = &ctx.cfg.options;
    let region = ctx.cfg.region(t.n)?;
    let sub_region = enumerate_region(&RegionDescriptor::cube(ctx.cfg.region_center(), opts.sub_radius));
    let n1 = ctx.cfg.schedule.n1(t.n);
    let probe = CartanProbe {
        region,
        sub_region,
        operator: operator(ctx, t)?,
        j: opts.j - 1,
        energy: t.energy,
        n_tilde: t.n,
        n1,
        samples: opts.samples,
        seed: task_rng(ctx.seed, t.index as u64).gen(),
    };
    let est = cartan_probe(&probe, &ctx.inner)?;
    let row = Row::new()
        .with("N1", n1)
        .with("j", opts.j)
        .with("interval_length", est.interval_length)
        .with("samples", est.samples)
        .with("bad", est.bad)
        .with("estimate", est.estimate)
        .with("ci_low", est.ci_low)
        .with("ci_high", est.ci_high)
        .with("threshold", est.threshold)
        .with("within_bound", est.within_bound)
        .with("sub_region_contained", est.sub_region_contained)
        .with("sub_region_diam_ok", est.sub_region_diam_ok);
    let extra = est
        .records
        .iter()
        .enumerate()
        .map(|(i, s)| {
            Row::new().with("task", t.index).with("sample", i).with("y", s.y).with("norm", s.norm).with("is_bad", s.is_bad)
        })
        .collect();
    Ok(Outcome { rows: vec![row], extra, files: Vec::new() })
}

fn check_row(name: &str, m: usize, report: Result<CheckReport>) -> Row {
    let mut row = Row::new().with("check", name).with("M", m);
    match report {
        Ok(r) => {
            row.set("hypotheses_hold", r.hypotheses_hold)
                .set("conclusions_hold", r.conclusions_hold)
                .set("hyp_margin", r.worst_margin("hyp."))
                .set("concl_margin", r.worst_margin("concl."))
                .set("c_min", r.budget.get("c_min").copied())
                .set("effective_rate", r.budget.get("effective_rate").copied())
                .set("inputs_digest", r.inputs_digest.as_str())
                .set("margins", Cell::Json(json!(r.margins)))
                .set("budget", Cell::Json(json!(r.budget)));
        }
        Err(e) => {
            row.set("status", status_of(&e));
        }
    }
    row
}

/// Hermitian perturbation with `|P(n,n')| ≤ scale·e^{−3ρ̄N−ρ̄|n−n'|}`.
fn perturbation(region: &Region, n: usize, rho_bar: f64, scale: f64, rng: &mut impl Rng) -> linalg::CMatrix {
    let pts = region.points();
    let size = pts.len();
    let mut p = linalg::CMatrix::zeros(size, size);
    for i in 0..size {
        for j in i..size {
            let cap = scale * (-3.0 * rho_bar * n as f64 - rho_bar * pts[i].distance(&pts[j]) as f64).exp();
            let r = cap * rng.gen::<f64>();
            if i == j {
                p[(i, i)] = Complex64::new(if rng.gen::<bool>() { r } else { -r }, 0.0);
            } else {
                let z = Complex64::from_polar(r, std::f64::consts::TAU * rng.gen::<f64>());
                p[(i, j)] = z;
                p[(j, i)] = z.conj();
            }
        }
    }
    p
}

/// Uncovered core, enclosing region and covering for the decay check.
fn decay_geometry(ctx: &Ctx<'_>, n: usize, m0: usize) -> Result<(Region, Region, Covering)> {
    let center = ctx.cfg.region_center();
    let cube = enumerate_region(&RegionDescriptor::cube(center.clone(), n));
    match ctx.cfg.options.core {
        CoreShape::None => Ok((cube, Region::empty(), cube_covering(&center, n, m0)?)),
        CoreShape::Center => {
            let core = Region::from_points(vec![center])?;
            let outer = cube.difference(&core);
            let cov = search_covering(&outer, &outer, &ctx.bs, m0)?;
            Ok((cube, core, cov))
        }
        CoreShape::Spike => {
            let spike = center.add(&MultiIndex::unit(ctx.bs.b(), 0, n as i64 + 1));
            let core = Region::from_points(vec![spike])?;
            Ok((cube.union(&core), core, cube_covering(&center, n, m0)?))
        }
    }
}

fn coupling(ctx: &Ctx<'_>, t: &Task) -> Outcome {
    let opts = &ctx.cfg.options;
    let rho_bar = opts.rho_bar.unwrap_or(rho(ctx) / 2.0);
    let mut rng = task_rng(ctx.seed, t.index as u64);
    let mut rows = Vec::new();
    let op = match operator(ctx, t) {
        Ok(op) => op,
        Err(e) => return Outcome::single(Row::new().with("status", status_of(&e))),
    };

    let pag = ctx.cfg.region(t.n).and_then(|region| {
        let a = op.assemble(&region).shifted(t.energy);
        let b = &a + perturbation(&region, t.n, rho_bar, opts.perturbation, &mut rng);
        verify_perturbation_lemma(&a, &b, &region, rho_bar, t.n)
    });
    rows.push(check_row("perturbation_lemma", t.n, pag));

    let m1 = opts.patch.unwrap_or((t.n / 3).max(1));
    let norm = if ctx.cfg.region_is_cube() {
        let center = ctx.cfg.region_center();
        ctx.cfg.region(t.n).and_then(|region| {
            let cov = cube_covering(&center, t.n, m1)?;
            verify_coupling_norm(&op, &region, t.energy, &cov, m1, m1, t.n, rho_bar)
        })
    } else {
        Err(Error::Config("the coupling-norm check covers full cubes only".into()))
    };
    rows.push(check_row("coupling_norm", m1, norm));

    let m0 = ((t.n as f64).ln().powi(2).ceil() as usize).max(1);
    let decay = decay_geometry(ctx, t.n, m0).and_then(|(region, core, covering)| {
        verify_coupling_decay(&DecayCheckInput {
            operator: &op,
            region: &region,
            core: &core,
            energy: t.energy,
            covering: &covering,
            m0,
            n: t.n,
            rho_bar: opts.rho_bar.unwrap_or(rho(ctx)),
            constant: Some(opts.constant),
        })
    });
    rows.push(check_row("coupling_decay", m0, decay));
    Outcome { rows, ..Outcome::default() }
}

fn witness(ctx: &Ctx<'_>, t: &Task) -> Result<Outcome> {
    let delta = first_step(ctx, t)?;
    let opts = &ctx.cfg.options;
    let poly = PolyBound { c: opts.poly_c, degree: opts.poly_degree.unwrap_or(5.0 * ctx.bs.b() as f64) };
    let r = absence_witness(&operator(ctx, t)?, t.n, t.energy, delta, poly)?;
    let row = Row::new()
        .with("delta", delta)
        .with("rhs_bound", r.rhs_bound)
        .with("threshold", r.threshold)
        .with("pass", r.pass)
        .with("green_norm", r.green_norm);
    Ok(Outcome::single(row))
}

fn x_grid(d: usize, spec: [f64; 3]) -> Result<Vec<Vec<f64>>> {
    let [a, b, c] = spec;
    if !(c >= 1.0 && c.fract() == 0.0) {
        return Err(Error::Config(format!("options.x_grid count must be a positive integer, got {c}")));
    }
    let count = c as usize;
    let line: Vec<f64> =
        (0..count).map(|i| if count == 1 { a } else { a + (b - a) * i as f64 / (count - 1) as f64 }).collect();
    let mut out = vec![Vec::new()];
    for _ in 0..d {
        out = out.into_iter().flat_map(|p| line.iter().map(move |x| [p.clone(), vec![*x]].concat())).collect();
    }
    Ok(out)
}

fn duality(ctx: &Ctx<'_>, t: &Task) -> Result<Outcome> {
    let opts = &ctx.cfg.options;
    let op = operator(ctx, t)?;
    let region = ctx.cfg.region(t.n)?;
    let (vals, vecs) = linalg::hermitian_eigen(&op.assemble(&region).matrix);
    let idx = (0..vals.len())
        .min_by(|&a, &b| (vals[a] - t.energy).abs().total_cmp(&(vals[b] - t.energy).abs()))
        .ok_or_else(|| Error::Structure("empty region".into()))?;
    let col: Vec<Complex64> = vecs.column(idx).iter().copied().collect();
    let phase = match &opts.phase {
        Some(p) if p.len() == ctx.bs.b() => p.clone(),
        Some(p) => return Err(Error::Config(format!("options.phase has {} entries, b = {}", p.len(), ctx.bs.b()))),
        None => {
            let mut rng = task_rng(ctx.seed, t.index as u64);
            (0..ctx.bs.b()).map(|_| std::f64::consts::TAU * rng.gen::<f64>()).collect()
        }
    };
    let sample = BlochSample {
        theta: t.theta.clone(),
        phase: phase.clone(),
        energy: vals[idx] + opts.energy_shift,
        coefficients: LatticeVector::from_region(&region, &col),
        support: region,
        x_grid: x_grid(ctx.bs.d(), opts.x_grid)?,
    };
    let r = duality_residual(&sample, op.omega(), t.epsilon, &ctx.potential)?;
    let row = Row::new()
        .with("eigenvalue", vals[idx])
        .with("phase", phase)
        .with("max_residual", r.max_residual)
        .with("max_psi", r.max_psi)
        .with("interior", r.interior)
        .with("boundary", r.boundary)
        .with("tail", r.tail)
        .with("roundoff", r.roundoff)
        .with("budget", r.budget)
        .with("within_budget", r.within_budget)
        .with("lattice_equation_holds", r.lattice_equation_holds);
    Ok(Outcome::single(row))
}

fn window(ctx: &Ctx<'_>, t: &Task) -> Result<Outcome> {
    let opts = &ctx.cfg.options;
    let region = ctx.cfg.region(t.n)?;
    let grid = sphere_box_grid(t.energy, ctx.bs.d(), opts.step, opts.halo);
    let r = spectral_window_check(
        t.energy,
        &region,
        &Frequency::new(t.omega.clone())?,
        t.epsilon,
        &ctx.potential,
        &grid,
        &ctx.inner,
    )?;
    let row = Row::new()
        .with("min_dist", r.min_dist)
        .with("argmin_theta", r.argmin_theta)
        .with("v_max", r.v_max)
        .with("bound", r.bound)
        .with("grid_term", r.grid_term)
        .with("truncation_term", r.truncation_term)
        .with("slack", r.slack)
        .with("pass", r.pass)
        .with("grid_points", r.grid_points);
    Ok(Outcome::single(row))
}

fn count(rows: &[&Row], key: &str) -> usize {
    rows.iter().filter(|r| r.flag(key) == Some(true)).count()
}

fn rate(hits: usize, total: usize) -> Value {
    if total == 0 {
        Value::Null
    } else {
        json!(hits as f64 / total as f64)
    }
}

fn summarize(sub: Subcommand, table: &Table) -> Map<String, Value> {
    let all: Vec<&Row> = table.rows.iter().collect();
    let ok: Vec<&Row> = all.iter().copied().filter(|r| !r.failed()).collect();
    let mut s = Map::new();
    s.insert("records".into(), json!(all.len()));
    s.insert("completed".into(), json!(ok.len()));
    let refused = all.iter().filter(|r| r.text("status").is_some_and(|t| t.starts_with("refused"))).count();
    s.insert("refused".into(), json!(refused));
    s.insert("errors".into(), json!(all.len() - ok.len() - refused));
    match sub {
        Subcommand::Green => {
            s.insert("ldt_pass".into(), json!(count(&ok, "ldt_pass")));
            s.insert("near_singular".into(), json!(count(&ok, "near_singular")));
        }
        Subcommand::LdtScan => {
            let outside: Vec<&Row> = ok.iter().copied().filter(|r| r.flag("resonant") == Some(false)).collect();
            s.insert("outside_resonance".into(), json!(outside.len()));
            s.insert("first_step_pass_rate_outside".into(), rate(count(&outside, "first_step_pass"), outside.len()));
            s.insert("ldt_pass_rate".into(), rate(count(&ok, "ldt_pass"), ok.len()));
        }
        Subcommand::ResonanceMeasure => {
            let violations = ok.iter().filter(|r| r.real("measure") > r.real("bound4")).count();
            let worst = ok.iter().filter_map(|r| r.real("ratio")).fold(0.0, f64::max);
            s.insert("violations".into(), json!(violations));
            s.insert("max_ratio".into(), json!(worst));
        }
        Subcommand::DoubleResonance => {
            let outcomes: Vec<Option<usize>> =
                ok.iter().map(|r| r.real("found_m").map(|m| m as usize)).collect();
            s.insert("success_rate".into(), json!(success_rate(&outcomes)));
            let mut groups: BTreeMap<(String, i64), (usize, Vec<Option<usize>>)> = BTreeMap::new();
            for (i, r) in ok.iter().enumerate() {
                let key = (g17_list(&reals(r, "omega")), r.real("N").unwrap_or(0.0) as i64);
                let entry = groups.entry(key).or_insert((i, Vec::new()));
                entry.1.push(outcomes[i]);
            }
            let mut diags: Vec<(usize, Value)> = groups
                .into_iter()
                .map(|((omega, n), (first, outs))| {
                    (first, json!({"omega": omega, "N": n, "scans": outs.len(), "success_rate": success_rate(&outs)}))
                })
                .collect();
            diags.sort_by_key(|d| d.0);
            s.insert("frequency_diagnostics".into(), Value::Array(diags.into_iter().map(|d| d.1).collect()));
        }
        Subcommand::CartanProbe => {
            s.insert("within_bound".into(), json!(count(&ok, "within_bound")));
        }
        Subcommand::CouplingVerify => {
            for name in ["perturbation_lemma", "coupling_norm", "coupling_decay"] {
                let rows: Vec<&Row> = ok.iter().copied().filter(|r| r.text("check") == Some(name)).collect();
                let asserted: Vec<&Row> = rows.iter().copied().filter(|r| r.flag("hypotheses_hold") == Some(true)).collect();
                let min_margin = asserted.iter().filter_map(|r| r.real("concl_margin")).reduce(f64::min);
                s.insert(
                    name.into(),
                    json!({
                        "instances": rows.len(),
                        "asserted": asserted.len(),
                        "conclusions_held": count(&asserted, "conclusions_hold"),
                        "min_conclusion_margin": min_margin,
                    }),
                );
            }
        }
        Subcommand::Witness => {
            s.insert("pass".into(), json!(count(&ok, "pass")));
            let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
            for r in &ok {
                let key = format!("{}|{}|{:?}", g17_list(&reals(r, "omega")), g17_list(&reals(r, "theta")), r.real("E"));
                if let (Some(n), Some(v)) = (r.real("N"), r.real("rhs_bound")) {
                    groups.entry(key).or_default().push((n, v));
                }
            }
            let monotone = groups.values_mut().all(|g| {
                g.sort_by(|a, b| a.0.total_cmp(&b.0));
                g.windows(2).all(|w| w[0].0 == w[1].0 || w[1].1 < w[0].1 || (w[0].1 == 0.0 && w[1].1 == 0.0))
            });
            s.insert("monotone_in_n".into(), json!(monotone));
        }
        Subcommand::Duality => {
            s.insert("within_budget".into(), json!(count(&ok, "within_budget")));
            s.insert("lattice_equation_holds".into(), json!(count(&ok, "lattice_equation_holds")));
        }
        Subcommand::SpectrumWindow => {
            s.insert("pass".into(), json!(count(&ok, "pass")));
            s.insert("max_slack".into(), json!(ok.iter().filter_map(|r| r.real("slack")).fold(0.0, f64::max)));
        }
        Subcommand::Assemble | Subcommand::Selftest => {}
    }
    s
}

fn reals(r: &Row, key: &str) -> Vec<f64> {
    match r.get(key) {
        Some(Cell::Reals(xs)) => xs.clone(),
        _ => Vec::new(),
    }
}
