use std::path::PathBuf;

use mpo_core::mpo::{decompose, plan_shapes};
use mpo_core::BondProfile;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::write_json;
use crate::failure::{CmdResult, Failure};
use crate::matrix_file::read_matrix;

const RECONSTRUCTION_TOL: f64 = 1e-10;

#[derive(clap::Args, Debug)]
pub struct Args {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    n: usize,
    /// Random truncations checked against their error bound.
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Serialize)]
struct Trial {
    bonds: Vec<usize>,
    bound: f64,
    achieved: f64,
    pass: bool,
}

#[derive(Serialize)]
struct Report {
    relative_error: f64,
    reconstruction_pass: bool,
    trials: Vec<Trial>,
    pass: bool,
}

pub fn run(args: Args, seed: u64) -> CmdResult {
    let m = read_matrix(&args.input)?;
    let plan = plan_shapes(m.rows(), m.cols(), args.n, None, None)?;
    for w in plan.warnings() {
        eprintln!("warning: {w}");
    }
    let f = decompose(&m, &plan)?;
    let norm = m.frobenius_norm();
    let diff = m.sub(&f.reconstruct()?)?.frobenius_norm();
    // a zero matrix has no scale; fall back to the absolute error
    let relative_error = if norm > 0.0 { diff / norm } else { diff };
    let reconstruction_pass = relative_error <= RECONSTRUCTION_TOL;
    println!("matrix          {}x{}, n = {}, bonds {:?}", m.rows(), m.cols(), plan.n(), f.bonds().interior());
    println!("relative error  {relative_error:.3e} ({})", verdict(reconstruction_pass));
    println!();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let full = f.bonds().clone();
    let mut trials = Vec::with_capacity(args.trials);
    println!("{:>5} {:>24} {:>14} {:>14} {:>6}", "trial", "bonds", "bound", "achieved", "status");
    for t in 0..args.trials {
        let dims = full.dims.iter().map(|&d| rng.gen_range(1..=d)).collect();
        let target = BondProfile::new(dims).realizable(&plan);
        let (_, report) = f.truncate(&target, Some(&m))?;
        let achieved = report.achieved_error.expect("reference supplied");
        let pass = achieved <= report.bound * (1.0 + 1e-9) + 1e-10 * norm;
        let shown = format!("{:?}", report.bonds.interior());
        println!("{:>5} {:>24} {:>14.6e} {:>14.6e} {:>6}", t + 1, shown, report.bound, achieved, verdict(pass));
        trials.push(Trial { bonds: report.bonds.dims, bound: report.bound, achieved, pass });
    }
    let pass = reconstruction_pass && trials.iter().all(|t| t.pass);
    println!();
    println!("{}", verdict(pass));

    if let Some(path) = &args.json {
        write_json(&Report { relative_error, reconstruction_pass, trials, pass }, path)?;
    }
    if !reconstruction_pass {
        return Err(Failure::property(format!("reconstruction error {relative_error:.3e} exceeds {RECONSTRUCTION_TOL}")));
    }
    if !pass {
        return Err(Failure::property("a truncation exceeded its error bound"));
    }
    Ok(())
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}
