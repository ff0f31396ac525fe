//! Plot-ready CSV text for paths, samples and matrices. States are written
//! 1-based. Floats use Rust's shortest round-trip formatting, so output is a
//! pure function of the values.

use std::fmt::Write as _;

use crate::ctmc::CtmcPath;
use crate::discrete::DiscretePath;
use crate::limit::LimitSample;
use crate::linalg::Matrix;
use crate::report::{ConvergenceReport, REPORT_CSV_HEADER};

/// `trial,jump_index,tau,state`.
pub fn ctmc_paths_csv(paths: &[CtmcPath]) -> String {
    let mut out = String::from("trial,jump_index,tau,state\n");
    for (trial, p) in paths.iter().enumerate() {
        for (k, (tau, s)) in p.jump_times().iter().zip(p.states()).enumerate() {
            let _ = writeln!(out, "{trial},{k},{tau},{}", s + 1);
        }
    }
    out
}

/// `trial,k,state,u`.
pub fn discrete_paths_csv(paths: &[DiscretePath]) -> String {
    let mut out = String::from("trial,k,state,u\n");
    for (trial, p) in paths.iter().enumerate() {
        for (k, (s, u)) in p.chain_states.iter().zip(&p.u_values).enumerate() {
            let _ = writeln!(out, "{trial},{k},{},{u}", s + 1);
        }
    }
    out
}

/// `trial,time,u,x`.
pub fn limit_samples_csv(samples: &[LimitSample]) -> String {
    let mut out = String::from("trial,time,u,x\n");
    for (trial, s) in samples.iter().enumerate() {
        for ((t, u), x) in s.times.iter().zip(&s.u_values).zip(&s.x_values) {
            let _ = writeln!(out, "{trial},{t},{u},{x}");
        }
    }
    out
}

/// `i,j,value`.
pub fn matrix_csv(m: &Matrix) -> String {
    let mut out = String::from("i,j,value\n");
    for (i, row) in m.rows().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let _ = writeln!(out, "{},{},{v}", i + 1, j + 1);
        }
    }
    out
}

/// `name,N,estimate,se,oracle,error,pass` over several reports.
pub fn reports_csv(reports: &[&ConvergenceReport]) -> String {
    let mut out = format!("{REPORT_CSV_HEADER}\n");
    for r in reports {
        r.csv_rows(&mut out);
    }
    out
}
