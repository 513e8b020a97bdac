use std::path::PathBuf;

use mpo_core::mpo::{compression_ratio, MpoFactorization};
use mpo_core::persistence::{load_bundle, save_bundle, Bundle};
use mpo_core::{BondProfile, MpoLinear};
use serde::Serialize;

use super::write_json;
use crate::failure::{CmdResult, Failure};
use crate::matrix_file::read_matrix;

#[derive(clap::Args, Debug)]
pub struct Args {
    #[arg(long)]
    bundle: PathBuf,
    /// Target bonds: the n-1 interior values, or all n+1 with unit ends.
    #[arg(long, value_delimiter = ',', required_unless_present = "target_rho", conflicts_with = "target_rho")]
    bonds: Option<Vec<usize>>,
    /// Drop singular values greedily, smallest first, until rho <= this.
    #[arg(long)]
    target_rho: Option<f64>,
    #[arg(long)]
    output: PathBuf,
    /// Matrix the achieved error is measured against.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Serialize)]
struct Report {
    bonds_before: Vec<usize>,
    bonds_after: Vec<usize>,
    local_errors: Vec<f64>,
    bound: f64,
    achieved_error: Option<f64>,
    within_bound: Option<bool>,
    params_before: usize,
    params_after: usize,
    rho_before: f64,
    rho_after: f64,
}

pub fn run(args: Args) -> CmdResult {
    let bundle = load_bundle(&args.bundle).map_err(|e| Failure::from(e).context(args.bundle.display()))?;
    let reference = args.reference.as_deref().map(read_matrix).transpose()?;
    let mut f = bundle.factorization().clone();
    f.refresh_spectra()?;

    let target = match (&args.bonds, args.target_rho) {
        (Some(list), _) => parse_target(list, f.n())?,
        (None, Some(rho)) => greedy_target(&f, rho)?,
        (None, None) => unreachable!("clap requires one of --bonds and --target-rho"),
    };
    let (truncated, report) = f.truncate(&target, reference.as_ref())?;
    let out = match bundle {
        Bundle::Factorization(_) => Bundle::Factorization(truncated),
        Bundle::Layer(layer) => {
            let mut t = MpoLinear::from_factorization(truncated, layer.bias().to_vec(), layer.freeze_central())?;
            t.factorization_mut().balance_norms();
            Bundle::Layer(t)
        }
    };
    save_bundle(&out, &args.output).map_err(|e| Failure::from(e).context(args.output.display()))?;

    let scale = reference.as_ref().map_or(0.0, |r| r.frobenius_norm());
    let within = report.achieved_error.map(|a| a <= report.bound * (1.0 + 1e-9) + 1e-10 * scale);
    println!("bonds before {:?}", f.bonds().interior());
    println!("bonds after  {:?}", report.bonds.interior());
    println!();
    println!("{:>4} {:>6} {:>14}", "cut", "kept", "epsilon");
    for (k, e) in report.local_errors.iter().enumerate() {
        println!("{:>4} {:>6} {:>14.6e}", k + 1, report.bonds.dims[k + 1], e);
    }
    println!();
    println!("bound        {:.6e}", report.bound);
    if let (Some(a), Some(ok)) = (report.achieved_error, within) {
        println!("achieved     {a:.6e}");
        println!("achieved <= bound: {ok}");
    }
    println!("params       {} -> {}", report.params_before, report.params_after);
    println!("rho          {:.6} -> {:.6}", f.compression_ratio(), report.ratio);
    println!("wrote {}", args.output.display());

    if let Some(path) = &args.json {
        let r = Report {
            bonds_before: f.bonds().dims.clone(),
            bonds_after: report.bonds.dims.clone(),
            local_errors: report.local_errors.clone(),
            bound: report.bound,
            achieved_error: report.achieved_error,
            within_bound: within,
            params_before: report.params_before,
            params_after: report.params_after,
            rho_before: f.compression_ratio(),
            rho_after: report.ratio,
        };
        write_json(&r, path)?;
    }
    if within == Some(false) {
        return Err(Failure::property("achieved error exceeds the bound"));
    }
    Ok(())
}

fn parse_target(list: &[usize], n: usize) -> CmdResult<BondProfile> {
    if list.len() == n + 1 {
        return Ok(BondProfile::new(list.to_vec()));
    }
    if list.len() == n - 1 {
        let mut dims = vec![1];
        dims.extend(list);
        dims.push(1);
        return Ok(BondProfile::new(dims));
    }
    Err(Failure::invalid(format!("{} bonds given; the chain has {} interior bonds", list.len(), n - 1)))
}

/// Repeatedly lowers the bond whose next discarded singular value is
/// smallest, until the ratio reaches `rho`.
fn greedy_target(f: &MpoFactorization, rho: f64) -> CmdResult<BondProfile> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Failure::invalid(format!("target rho must be positive, got {rho}")));
    }
    let plan = f.plan();
    let spectra = f.cut_spectra().expect("refreshed by the caller");
    let mut bonds = f.bonds().realizable(plan);
    while compression_ratio(plan, &bonds) > rho {
        let next = (1..plan.n())
            .filter(|&k| bonds.dims[k] > 1)
            .map(|k| (k, spectra[k - 1].get(bonds.dims[k] - 1).copied().unwrap_or(0.0)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let Some((k, _)) = next else {
            return Err(Failure::invalid(format!(
                "rho {rho} is unreachable; all-ones bonds give {:.6}",
                compression_ratio(plan, &bonds)
            )));
        };
        bonds.dims[k] -= 1;
        bonds = bonds.realizable(plan);
    }
    Ok(bonds)
}
