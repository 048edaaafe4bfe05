use std::fmt::Write;

use serde::Serialize;

use ddtune::ift_engine::{IterationReport, OptimizeOutcome, Termination, UnbiasednessReport, Z_LIMIT};

#[derive(Debug, Serialize)]
pub struct IterationLine {
    pub index: usize,
    pub rho: [f64; 3],
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "J_e")]
    pub j_e: f64,
    #[serde(rename = "J_udot")]
    pub j_udot: f64,
    pub grad: Option<[f64; 3]>,
    pub step: Option<f64>,
    pub accepted: bool,
}

impl From<&IterationReport> for IterationLine {
    fn from(r: &IterationReport) -> Self {
        Self {
            index: r.index,
            rho: r.rho.as_array(),
            j: r.cost.total,
            j_e: r.cost.tracking,
            j_udot: r.cost.variation,
            grad: r.gradient.map(|g| g.grad_array()),
            step: r.step,
            accepted: r.accepted,
        }
    }
}

fn termination_text(t: &Termination) -> String {
    match t {
        Termination::MaxIterations => "iteration limit reached".into(),
        Termination::Threshold => "cost below threshold".into(),
        Termination::Converged => "relative improvement stalled".into(),
        Termination::GuardExhausted(msg) => format!("step guard exhausted: {msg}"),
    }
}

pub fn tune_summary(outcome: &OptimizeOutcome, sigma: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "noise sigma {sigma:.6e}");
    let _ = writeln!(
        s,
        "{:>4} {:>14} {:>14} {:>14} {:>14} {:>14} {:>14} {:>10} {:>8}",
        "iter", "Kp", "Ti", "Td", "J", "J_e", "J_udot", "step", "accepted"
    );
    for r in &outcome.reports {
        let g = r.rho.to_gains();
        let step = r.step.map_or("-".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(
            s,
            "{:>4} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e} {:>10} {:>8}",
            r.index, g.kp, g.ti, g.td, r.cost.total, r.cost.tracking, r.cost.variation, step, r.accepted
        );
    }
    if let (Some(first), Some(last)) = (outcome.reports.first(), outcome.reports.last()) {
        let (a, b) = (first.rho.to_gains(), last.rho.to_gains());
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<10} {:>14} {:>14}", "", "before", "after");
        for (name, x, y) in [("Kp", a.kp, b.kp), ("Ti", a.ti, b.ti), ("Td", a.td, b.td)] {
            let _ = writeln!(s, "{name:<10} {x:>14.6e} {y:>14.6e}");
        }
        for (name, x, y) in [
            ("J", first.cost.total, last.cost.total),
            ("J_e", first.cost.tracking, last.cost.tracking),
            ("J_udot", first.cost.variation, last.cost.variation),
        ] {
            let _ = writeln!(s, "{name:<10} {x:>14.6e} {y:>14.6e}");
        }
        let _ = writeln!(s, "{:<10} {:>14.4}", "J ratio", last.cost.total / first.cost.total);
    }
    let _ = writeln!(s, "termination: {}", termination_text(&outcome.termination));
    s
}

pub fn gradcheck_table(dd: &[f64; 3], fd: &[f64; 3], delta: f64, tol: f64) -> (String, bool) {
    let mut s = String::new();
    let _ = writeln!(s, "delta {delta:e}");
    let _ = writeln!(
        s,
        "{:<4} {:>24} {:>24} {:>12} {:>6}",
        "rho", "data-driven", "finite-difference", "rel.err", ""
    );
    let mut ok = true;
    for j in 0..3 {
        let rel = (dd[j] - fd[j]).abs() / fd[j].abs().max(f64::MIN_POSITIVE);
        let pass = rel <= tol;
        ok &= pass;
        let _ = writeln!(
            s,
            "{:<4} {:>24.16e} {:>24.16e} {:>12.4e} {:>6}",
            ["Kp", "Ki", "Kd"][j],
            dd[j],
            fd[j],
            rel,
            if pass { "PASS" } else { "FAIL" }
        );
    }
    let _ = writeln!(s, "tolerance {tol}: {}", if ok { "PASS" } else { "FAIL" });
    (s, ok)
}

pub fn unbiased_table(rep: &UnbiasednessReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "trials {} sigma {:.6e}", rep.trials, rep.sigma);
    for (label, stats, verdict) in [
        (
            "experiment III residuals",
            &rep.correct,
            if rep.correct_passes() { "PASS" } else { "FAIL" },
        ),
        (
            "experiment I reused",
            &rep.biased,
            if rep.biased_flagged() { "biased" } else { "not distinguishable" },
        ),
    ] {
        let _ = writeln!(s, "{label}: {verdict}");
        let _ = writeln!(
            s,
            "  {:<4} {:>20} {:>20} {:>20} {:>10}",
            "rho", "noise-free", "mean deviation", "std error", "z"
        );
        for j in 0..3 {
            let _ = writeln!(
                s,
                "  {:<4} {:>20.10e} {:>20.10e} {:>20.10e} {:>10.3}",
                ["Kp", "Ki", "Kd"][j],
                rep.reference[j],
                stats[j].mean_deviation,
                stats[j].std_error,
                stats[j].z
            );
        }
    }
    let _ = writeln!(s, "band |z| <= {Z_LIMIT}");
    s
}
