//! The five subcommands. Each returns the files it wrote and an exit status.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::RunConfig;
use super::output::{csv, json, line_plot, num, opt_num, Series, Writer};
use super::verify::{is_solver_error, run_verify, Status, VerifyReport};
use super::CliError;
use crate::curvature::{bisectional_from_jet, curvature_sup, psi_of};
use crate::flow::{evolve, sign_change_scan, FlowState, Verdict};
use crate::oracle::{audit_general_dimension, cross_check, AuditFinding};
use crate::radial::{build_profile, check_kahler};

pub struct Outcome {
    pub exit: i32,
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
}

fn computed(e: crate::Error) -> CliError {
    if is_solver_error(&e) {
        CliError::Solver(e)
    } else {
        CliError::Compute(e)
    }
}

pub fn cmd_report(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let fam = cfg.family().map_err(computed)?;
    let profile = build_profile(&fam, cfg.grid).map_err(computed)?;
    let n = fam.n();
    let psi = psi_of(&profile, n, cfg.formula).map_err(computed)?;
    let mut rows = Vec::with_capacity(profile.len());
    let mut bis = Vec::with_capacity(profile.len());
    for i in 0..profile.len() {
        let j = profile.jet(i).map_err(computed)?;
        let b = bisectional_from_jet(&j).map_err(computed)?;
        let w = j.w();
        bis.push((j.r, b));
        rows.push(vec![
            num(j.r),
            num(j.phi),
            num(j.phi_r),
            num(psi.psi[i]),
            num(psi.psi_r[i]),
            num(psi.psi[i] / w),
            num(psi.psi_r[i] / w),
            num(b.xx),
            num(b.xy),
            num(b.yy),
        ]);
    }
    let mut out = Writer::new(&cfg.out)?;
    if cfg.formats.csv {
        let header = ["r", "phi", "phi_r", "psi", "psi_r", "lambda1", "lambda2", "b_xx", "b_xy", "b_yy"];
        out.put("report.csv", &csv(&header, &rows))?;
    }
    let kahler = check_kahler(&profile);
    let sup = curvature_sup(&profile).map_err(computed)?;
    if cfg.formats.json {
        let summary = json!({
            "family": fam,
            "formula": cfg.formula,
            "grid": cfg.grid,
            "kahler_holds": kahler.holds,
            "curvature_sup": sup,
            "psi_min": psi.psi.iter().copied().fold(f64::INFINITY, f64::min),
            "psi_max": psi.psi.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        });
        out.put("report.json", &json(&summary)?)?;
    }
    if cfg.formats.svg {
        let l2 = Series {
            name: "lambda2".into(),
            points: psi.r.iter().zip(&psi.psi_r).map(|(r, p)| (*r, p / r.exp())).collect(),
        };
        out.put("report_lambda2.svg", &line_plot("Radial Ricci eigenvalue", "r = log |z|^2", "lambda2", &[l2]))?;
        let pick = |f: fn(&crate::curvature::Bisectional) -> f64, name: &str| Series {
            name: name.into(),
            points: bis.iter().map(|(r, b)| (*r, f(b))).collect(),
        };
        let series = [pick(|b| b.xx, "B(X,X)"), pick(|b| b.xy, "B(X,Y)"), pick(|b| b.yy, "B(Y,Y)")];
        out.put("report_bisectional.svg", &line_plot("Bisectional curvatures", "r = log |z|^2", "curvature", &series))?;
    }
    Ok(Outcome {
        exit: if kahler.holds { 0 } else { 1 },
        files: out.written,
        summary: vec![format!(
            "report: {} nodes, curvature sup {} at r = {}, kahler {}",
            profile.len(),
            num(sup.value),
            num(sup.r),
            if kahler.holds { "ok" } else { "violated" }
        )],
    })
}

pub fn cmd_flow(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let fam = cfg.family().map_err(computed)?;
    let s0 = FlowState::initial(&fam, cfg.grid, cfg.formula).map_err(computed)?;
    let times: Vec<f64> = (1..=cfg.snapshots)
        .map(|i| cfg.t_final * i as f64 / cfg.snapshots as f64)
        .collect();
    let run = evolve(&s0, cfg.t_final, &cfg.controls, &times).map_err(computed)?;
    let scan = sign_change_scan(&s0, &run.state, cfg.formula).map_err(computed)?;
    let ev = run.state.eigenvalues_window_for(cfg.formula).map_err(computed)?;
    let lambda1_w_min = ev.iter().map(|e| e.1 * e.0.exp()).fold(f64::INFINITY, f64::min);

    let mut out = Writer::new(&cfg.out)?;
    if cfg.formats.csv {
        let rows: Vec<Vec<String>> = run
            .snapshots
            .iter()
            .flat_map(|s| s.r.iter().zip(&s.lambda2).map(move |(r, l)| vec![num(s.t), num(*r), num(*l)]))
            .collect();
        out.put("flow_timeseries.csv", &csv(&["t", "r", "lambda2"], &rows))?;
    }
    if cfg.formats.json {
        #[derive(Serialize)]
        struct Summary<'a> {
            family: crate::radial::MetricFamily,
            formula: crate::curvature::FormulaVersion,
            grid: crate::radial::GridSpec,
            controls: crate::flow::SolverControls,
            t_final: f64,
            steps: usize,
            rejected: usize,
            trusted_window: (f64, f64),
            min_lambda1_w: f64,
            sign_change: &'a crate::flow::SignChangeReport,
        }
        let summary = Summary {
            family: fam,
            formula: cfg.formula,
            grid: cfg.grid,
            controls: cfg.controls,
            t_final: run.state.t(),
            steps: run.steps,
            rejected: run.rejected,
            trusted_window: run.state.trusted_window(),
            min_lambda1_w: lambda1_w_min,
            sign_change: &scan,
        };
        out.put("flow_summary.json", &json(&summary)?)?;
    }
    if cfg.formats.svg {
        let stride = (run.snapshots.len() / 4).max(1);
        let series: Vec<Series> = run
            .snapshots
            .iter()
            .rev()
            .step_by(stride)
            .take(4)
            .map(|s| Series {
                name: format!("t = {:.3e}", s.t),
                points: s.r.iter().copied().zip(s.lambda2.iter().copied()).collect(),
            })
            .collect();
        out.put("flow_lambda2.svg", &line_plot("Radial Ricci eigenvalue under the flow", "r = log |z|^2", "lambda2", &series))?;
    }
    let verdict = match scan.verdict {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
        Verdict::NotApplicable => "not-applicable",
    };
    Ok(Outcome {
        exit: if scan.verdict == Verdict::Fail { 1 } else { 0 },
        files: out.written,
        summary: vec![format!(
            "flow: t = {}, {} steps, boundary detected {} predicted {}, verdict {verdict}",
            num(run.state.t()),
            run.steps,
            opt_num(scan.boundary_detected),
            opt_num(scan.boundary_predicted),
        )],
    })
}

fn verify_lines(rep: &VerifyReport) -> Vec<String> {
    rep.checks
        .iter()
        .map(|c| {
            let tag = match c.status {
                Status::Pass => "PASS",
                Status::Fail => "FAIL",
                Status::Skipped => "SKIP",
            };
            format!("{tag} {}: {}", c.name, c.detail)
        })
        .collect()
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let rep = run_verify(cfg).map_err(computed)?;
    let mut out = Writer::new(&cfg.out)?;
    if cfg.formats.json {
        out.put("verify.json", &json(&rep)?)?;
    }
    let mut summary = verify_lines(&rep);
    for f in &rep.findings {
        summary.push(format!("finding {:?} {}: {}", f.verdict, f.quantity, f.location));
    }
    if !rep.all_pass {
        summary.push(format!("failed checks: {}", rep.failed.join(", ")));
    }
    Ok(Outcome {
        exit: if rep.all_pass { 0 } else { 1 },
        files: out.written,
        summary,
    })
}

#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    n: usize,
    a: f64,
    c: f64,
    boundary_detected: Option<f64>,
    boundary_predicted: Option<f64>,
    all_pass: bool,
    failed: Vec<String>,
    error: Option<String>,
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let tuples = cfg.sweep_tuples();
    let rows: Vec<SweepRow> = tuples
        .par_iter()
        .with_max_len(1)
        .map(|&(n, a, c)| {
            let mut one = cfg.clone();
            one.n = n;
            one.a = a;
            one.c = c;
            let base = SweepRow {
                n,
                a,
                c,
                boundary_detected: None,
                boundary_predicted: None,
                all_pass: false,
                failed: Vec::new(),
                error: None,
            };
            match run_verify(&one) {
                Ok(rep) => SweepRow {
                    boundary_detected: rep.boundary_detected,
                    boundary_predicted: rep.boundary_predicted,
                    all_pass: rep.all_pass,
                    failed: rep.failed,
                    ..base
                },
                Err(e) => SweepRow {
                    error: Some(e.to_string()),
                    ..base
                },
            }
        })
        .collect();
    let mut out = Writer::new(&cfg.out)?;
    if cfg.formats.csv {
        let table: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                vec![
                    r.n.to_string(),
                    num(r.a),
                    num(r.c),
                    opt_num(r.boundary_detected),
                    opt_num(r.boundary_predicted),
                    r.all_pass.to_string(),
                    r.failed.join(";"),
                    r.error.clone().unwrap_or_default(),
                ]
            })
            .collect();
        let header = ["n", "a", "c", "boundary_detected", "boundary_predicted", "all_pass", "failed_checks", "error"];
        out.put("sweep.csv", &csv(&header, &table))?;
    }
    if cfg.formats.json {
        out.put("sweep.json", &json(&rows)?)?;
    }
    let summary = rows
        .iter()
        .map(|r| {
            format!(
                "sweep n={} a={} c={}: boundary {} predicted {} {}",
                r.n,
                r.a,
                r.c,
                opt_num(r.boundary_detected),
                opt_num(r.boundary_predicted),
                if r.all_pass { "pass" } else { "fail" }
            )
        })
        .collect();
    Ok(Outcome {
        exit: if rows.iter().all(|r| r.all_pass) { 0 } else { 1 },
        files: out.written,
        summary,
    })
}

#[derive(Debug, Serialize)]
struct OracleReport {
    family: crate::radial::MetricFamily,
    seed: u64,
    points: usize,
    cross_check: Vec<AuditFinding>,
    general_dimension_audit: Vec<AuditFinding>,
}

pub fn cmd_oracle(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let fam = cfg.family().map_err(computed)?;
    let checks = cross_check(&fam, cfg.seed, cfg.oracle_points, 1e-5).map_err(computed)?;
    let audit = audit_general_dimension(fam.n(), fam.a(), fam.c()).map_err(computed)?;
    let report = OracleReport {
        family: fam,
        seed: cfg.seed,
        points: cfg.oracle_points,
        cross_check: checks,
        general_dimension_audit: audit,
    };
    let mut out = Writer::new(&cfg.out)?;
    out.put("oracle.json", &json(&report)?)?;
    let summary = report
        .cross_check
        .iter()
        .chain(&report.general_dimension_audit)
        .map(|f| format!("{:?} {} (discrepancy {:.3e}): {}", f.verdict, f.quantity, f.discrepancy, f.location))
        .collect();
    let clean = report.cross_check.iter().all(AuditFinding::is_consistent);
    Ok(Outcome {
        exit: if clean { 0 } else { 1 },
        files: out.written,
        summary,
    })
}
