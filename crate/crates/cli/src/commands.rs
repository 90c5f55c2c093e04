use std::fs::File;
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;
use tensionlab::audit::{audit_map, AuditTolerances};
use tensionlab::beltrami::{construct_entire, inverse_beltrami_residual_analytic, nu_quasiregular_residual_analytic, Convention};
use tensionlab::closed_forms::{
    example51_map, example51_mu, example51_mu_jet, example51_uprime, Example51Audit, Example51Params, Example51Variant,
};
use tensionlab::record::{MapKind, MapRecord};
use tensionlab::teichmuller::teich_distance_in;
use tensionlab::tension::{solve_dirichlet, SolveParams, SolveReport};
use tensionlab::{builtin_metric, GridSpec, Metric};

use crate::files::{MapRecordFile, Source};
use crate::parse::{self, Fixture};
use crate::{AuditArgs, CliError, ConstructArgs, DistanceArgs, Example51Args, SampleArgs, SolveArgs};

pub const EXIT_OK: u8 = 0;
pub const EXIT_NOT_CONVERGED: u8 = 2;
pub const EXIT_AUDIT_FAILED: u8 = 3;

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    csv::WriterBuilder::new().flexible(true).from_path(path).map_err(|e| CliError::output(path, e))
}

fn csv_row(w: &mut csv::Writer<File>, path: &Path, row: Vec<String>) -> Result<(), CliError> {
    w.write_record(&row).map_err(|e| CliError::output(path, e))
}

fn label(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

fn solve_fixture(fixture: &Fixture, metric: &Metric, grid: &GridSpec, params: &SolveParams) -> Result<(MapRecord, SolveReport), CliError> {
    let boundary = fixture.sample("boundary-from", grid)?;
    let (field, report) = solve_dirichlet(&boundary, metric, grid, params).map_err(|e| CliError::input("grid", e))?;
    Ok((MapRecord::new(field, metric.clone()), report))
}

pub fn solve(args: &SolveArgs) -> Result<u8, CliError> {
    let params = SolveParams { tol: args.tol, max_iters: args.max_iters, ..SolveParams::default() };
    params.validate().map_err(|e| CliError::input("tol", e))?;
    let metric = parse::metric(args.metric.as_deref(), args.theta.as_deref())?;
    let grid = args.grid.as_deref().map(parse::grid).transpose()?;

    let (boundary, metric, source) = match (&args.boundary, &args.boundary_from) {
        (Some(path), None) => {
            let rec = MapRecordFile::read(path).map_err(|e| e.with_flag("boundary"))?.to_record()?;
            if let Some(g) = &grid {
                if !g.matches(rec.field.grid()) {
                    return Err(CliError::input("grid", "does not match the grid of the boundary file"));
                }
            }
            (rec.field, metric.unwrap_or(rec.metric), None)
        }
        (None, Some(spec)) => {
            let fixture = Fixture::parse("boundary-from", spec)?;
            let grid = grid.ok_or_else(|| CliError::input("grid", "required with --boundary-from"))?;
            let metric = metric.unwrap_or_else(|| fixture.default_metric());
            let source = Source::Solve { boundary: spec.clone(), tol: args.tol, max_iters: args.max_iters };
            (fixture.sample("boundary-from", &grid)?, metric, Some(source))
        }
        _ => return Err(CliError::input("boundary", "give exactly one of --boundary or --boundary-from")),
    };
    let grid = *boundary.grid();
    let (field, report) = solve_dirichlet(&boundary, &metric, &grid, &params).map_err(|e| CliError::input("grid", e))?;
    MapRecordFile::from_record(&MapRecord::new(field, metric), source).write(&args.out)?;
    println!(
        "iterations={} final_residual={:e} converged={}",
        report.iterations, report.final_residual, report.converged
    );
    Ok(if report.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn construct_records(alpha: Complex64, metric: &Metric, grid: &GridSpec) -> Result<(MapRecord, MapRecord), CliError> {
    let member = construct_entire(alpha, metric, grid).map_err(|e| CliError::input("alpha", e))?;
    Ok(MapRecord::from_member(&member, metric))
}

pub fn construct(args: &ConstructArgs) -> Result<u8, CliError> {
    let alpha = parse::complex("alpha", &args.alpha)?;
    if !(alpha.norm() < 1.0) {
        return Err(CliError::input("alpha", format!("alpha-out-of-disk: |alpha| = {} >= 1", alpha.norm())));
    }
    let metric = parse::metric(args.metric.as_deref(), args.theta.as_deref())?
        .ok_or_else(|| CliError::input("metric", "required"))?;
    if !metric.is_flat() {
        return Err(CliError::input("metric", format!("not-flat: metric `{}` has no global harmonic conjugate", metric.id())));
    }
    let grid = parse::grid(&args.grid)?;
    let (f, g) = construct_records(alpha, &metric, &grid)?;
    let source = Source::Construct { alpha: [alpha.re, alpha.im] };
    MapRecordFile::from_record(&f, Some(source.clone())).write(&args.out)?;
    if let Some(path) = &args.out_inverse {
        MapRecordFile::from_record(&g, Some(source)).write(path)?;
    }
    println!("alpha={},{} metric={} nodes={}x{}", alpha.re, alpha.im, metric.id(), grid.nx, grid.ny);
    Ok(EXIT_OK)
}

pub fn sample(args: &SampleArgs) -> Result<u8, CliError> {
    let fixture = Fixture::parse("fixture", &args.fixture)?;
    let grid = parse::grid(&args.grid)?;
    let metric = parse::metric(args.metric.as_deref(), None)?.unwrap_or_else(|| fixture.default_metric());
    let field = fixture.sample("fixture", &grid)?;
    MapRecordFile::from_record(&MapRecord::new(field, metric), Some(Source::Fixture { fixture: args.fixture.clone() }))
        .write(&args.out)?;
    Ok(EXIT_OK)
}

/// The record described by `source`, regenerated on `grid`.
fn regenerate(source: &Source, record: &MapRecord, grid: &GridSpec) -> Result<MapRecord, CliError> {
    let mut out = match source {
        Source::Fixture { fixture } => {
            let field = Fixture::parse("refine", fixture)?.sample("refine", grid)?;
            MapRecord::new(field, record.metric.clone())
        }
        Source::Solve { boundary, tol, max_iters } => {
            let params = SolveParams { tol: *tol, max_iters: *max_iters, ..SolveParams::default() };
            solve_fixture(&Fixture::parse("refine", boundary)?, &record.metric, grid, &params)?.0
        }
        Source::Construct { alpha } => {
            let (f, g) = construct_records(Complex64::new(alpha[0], alpha[1]), &record.metric, grid)?;
            match record.kind {
                MapKind::Map => f,
                MapKind::Inverse => g,
            }
        }
    };
    out.kind = record.kind;
    out.alpha = record.alpha;
    Ok(out)
}

pub fn audit(args: &AuditArgs) -> Result<u8, CliError> {
    let file = MapRecordFile::read(&args.input)?;
    let record = file.to_record()?;
    let refined = if args.refine {
        let source = file.source.as_ref().ok_or_else(|| {
            CliError::input("refine", "record carries no source to regenerate at half the spacing")
        })?;
        Some(regenerate(source, &record, &record.field.grid().refined())?)
    } else {
        None
    };
    let report = audit_map(&label(&args.input), &record, &args.tolerances(), refined.as_ref())
        .map_err(|e| CliError::input("in", e))?;
    for c in &report.checks {
        let residual = c.residual.map_or_else(|| "-".to_string(), |r| format!("{r:e}"));
        let ratio = c.refinement_ratio.map_or_else(String::new, |r| format!(" ratio={r:.3}"));
        println!("{:<16} {:?} residual={residual} tol={:e}{ratio}", c.name, c.verdict, c.tolerance);
    }
    if let Some(path) = &args.out {
        crate::files::write_json(path, &report)?;
    }
    Ok(if report.passed() { EXIT_OK } else { EXIT_AUDIT_FAILED })
}

fn fmt_matrix(w: &mut csv::Writer<File>, path: &Path, title: &str, labels: &[String], m: &[Vec<f64>]) -> Result<(), CliError> {
    csv_row(w, path, std::iter::once(title.to_string()).chain(labels.iter().cloned()).collect())?;
    for (l, row) in labels.iter().zip(m) {
        csv_row(w, path, std::iter::once(l.clone()).chain(row.iter().map(|v| v.to_string())).collect())?;
    }
    Ok(())
}

pub fn distance(args: &DistanceArgs) -> Result<u8, CliError> {
    if args.inputs.len() < 2 {
        return Err(CliError::input("in", "need at least two records"));
    }
    let records = args
        .inputs
        .iter()
        .map(|p| MapRecordFile::read(p)?.to_record())
        .collect::<Result<Vec<_>, _>>()?;
    let grid = *records[0].field.grid();
    if records.iter().any(|r| !r.field.grid().matches(&grid)) {
        return Err(CliError::input("in", "grid-mismatch: records are sampled on different grids"));
    }
    let n = records.len();
    let mut d_teich = vec![vec![0.0; n]; n];
    let mut d_hyp = vec![vec![0.0; n]; n];
    let mut all_alphas = true;
    for a in 0..n {
        for b in a + 1..n {
            let r = teich_distance_in(&records[a], &records[b], args.window).map_err(|e| CliError::input("in", e))?;
            d_teich[a][b] = r.d_teich;
            d_teich[b][a] = r.d_teich;
            match r.d_hyperbolic {
                Some(d) => {
                    d_hyp[a][b] = d;
                    d_hyp[b][a] = d;
                }
                None => all_alphas = false,
            }
        }
    }
    let labels: Vec<String> = args.inputs.iter().map(|p| label(p)).collect();
    let mut w = csv_writer(&args.out)?;
    fmt_matrix(&mut w, &args.out, "d_teich", &labels, &d_teich)?;
    if all_alphas {
        fmt_matrix(&mut w, &args.out, "d_hyperbolic", &labels, &d_hyp)?;
        let disc = (0..n)
            .flat_map(|a| (0..n).map(move |b| (a, b)))
            .map(|(a, b)| (d_teich[a][b] - d_hyp[a][b]).abs())
            .fold(0.0f64, f64::max);
        csv_row(&mut w, &args.out, vec!["max_discrepancy".into(), disc.to_string()])?;
        println!("max_discrepancy={disc:e}");
    }
    w.flush().map_err(|e| CliError::output(&args.out, e))?;
    for (l, row) in labels.iter().zip(&d_teich) {
        println!("{l}: {}", row.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(" "));
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct Example51Summary {
    variant: Example51Variant,
    /// `u'(A)`, against the left limit 1.
    left_ratio: f64,
    /// `u'(B) / (sqrt(c/2) e^{-s B / 2})`.
    right_ratio: f64,
    /// Largest pointwise twist residual over the sampled rows.
    max_nu_residual: f64,
    max_inverse_residual: f64,
    #[serde(flatten)]
    audit: Example51Audit,
}

/// Leading behaviour of `u'` as `x -> +inf`.
fn right_asymptote(x: f64, p: &Example51Params) -> f64 {
    (p.c / 2.0).sqrt() * (-p.exponent() * x / 2.0).exp()
}

pub fn example51(args: &Example51Args) -> Result<u8, CliError> {
    let variant = parse::variant(&args.variant)?;
    let p = Example51Params::new(args.c, variant).map_err(|e| CliError::input("c", e))?;
    let (a, b, n) = parse::xrange(&args.xrange)?;
    let grid = GridSpec::new(a, 0.0, n, 3, (b - a) / (n - 1) as f64).map_err(|e| CliError::input("xrange", e))?;
    let map = example51_map(&grid, &p).map_err(|e| CliError::input("c", e))?;
    let exp_x = builtin_metric("exp_x").expect("built-in name");
    let nu = nu_quasiregular_residual_analytic(&grid, example51_mu_jet(p), &exp_x, Convention::Printed)
        .map_err(|e| CliError::input("c", e))?;
    let inv = inverse_beltrami_residual_analytic(&grid, example51_mu_jet(p), &exp_x, Convention::Printed);

    let mut w = csv_writer(&args.out)?;
    let header = ["x", "mu", "uprime", "u", "left_ratio", "right_ratio", "nu_residual", "inverse_residual"];
    csv_row(&mut w, &args.out, header.iter().map(|s| s.to_string()).collect())?;
    let (mut max_nu, mut max_inv) = (0.0f64, 0.0f64);
    for i in 0..n {
        let z = grid.node(i, 0);
        let up = example51_uprime(z.re, &p);
        let (r_nu, r_inv) = (nu.at(i, 0).norm(), inv.at(i, 0).norm());
        max_nu = max_nu.max(r_nu);
        max_inv = max_inv.max(r_inv);
        let row = [
            z.re,
            example51_mu(z.re, &p),
            up,
            map.field.at(i, 0).re,
            up,
            up / right_asymptote(z.re, &p),
            r_nu,
            r_inv,
        ];
        csv_row(&mut w, &args.out, row.iter().map(|v| v.to_string()).collect())?;
    }
    w.flush().map_err(|e| CliError::output(&args.out, e))?;

    let summary = Example51Summary {
        variant,
        left_ratio: example51_uprime(a, &p),
        right_ratio: example51_uprime(b, &p) / right_asymptote(b, &p),
        max_nu_residual: max_nu,
        max_inverse_residual: max_inv,
        audit: map.audit,
    };
    let text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::output(&args.out, e))?;
    match &args.summary {
        Some(path) => crate::files::write_json(path, &summary)?,
        None => println!("{text}"),
    }
    Ok(EXIT_OK)
}

impl AuditArgs {
    pub fn tolerances(&self) -> AuditTolerances {
        let d = AuditTolerances::default();
        AuditTolerances {
            tension: self.tol_tension.unwrap_or(d.tension),
            hopf: self.tol_hopf.unwrap_or(d.hopf),
            lemma1: self.tol_lemma1.unwrap_or(d.lemma1),
            lemma2: self.tol_lemma2.unwrap_or(d.lemma2),
            lemma3: self.tol_lemma3.unwrap_or(d.lemma3),
            arg_hopf: self.tol_arg_hopf.unwrap_or(d.arg_hopf),
            spread: self.tol_spread.unwrap_or(d.spread),
            inverse: self.tol_inverse.unwrap_or(d.inverse),
            twist: self.tol_twist.unwrap_or(d.twist),
        }
    }
}
