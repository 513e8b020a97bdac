use std::path::PathBuf;

use mpo_core::mpo::{decompose, entanglement_entropy, plan_shapes, preset, EntropyWeights};
use mpo_core::persistence::{save_bundle, Bundle};
use mpo_core::{Error, ShapePlan};
use serde::Serialize;

use super::write_json;
use crate::failure::{CmdResult, Failure};
use crate::matrix_file::read_matrix;

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Matrix file (binary, or CSV with a .csv extension).
    #[arg(long)]
    input: PathBuf,
    /// Number of local tensors.
    #[arg(long, required_unless_present = "preset")]
    n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    row_factors: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    col_factors: Option<Vec<usize>>,
    /// Take both factor lists from a named plan.
    #[arg(long, conflicts_with_all = ["row_factors", "col_factors"])]
    preset: Option<String>,
    /// Bundle to write.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "squared")]
    entropy: Weights,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum Weights {
    Squared,
    Linear,
}

#[derive(Serialize)]
struct CutRow {
    cut: usize,
    bond: usize,
    rank: usize,
    entropy: Option<f64>,
    max_entropy: f64,
}

#[derive(Serialize)]
struct Report<'a> {
    plan: &'a ShapePlan,
    bonds: &'a [usize],
    params: usize,
    rho: f64,
    cuts: Vec<CutRow>,
}

pub fn run(args: Args) -> CmdResult {
    let m = read_matrix(&args.input)?;
    let plan = resolve_plan(&args, m.rows(), m.cols())?;
    for w in plan.warnings() {
        eprintln!("warning: {w}");
    }
    let f = decompose(&m, &plan)?;
    let weights = match args.entropy {
        Weights::Squared => EntropyWeights::Squared,
        Weights::Linear => EntropyWeights::Linear,
    };
    let spectra = f.cut_spectra().expect("fresh after decompose");
    let bonds = &f.bonds().dims;
    let cuts = spectra
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let top = s.first().copied().unwrap_or(0.0);
            let entropy = match entanglement_entropy(s, weights) {
                Ok(v) => Some(v),
                Err(Error::ZeroSpectrum) => None,
                Err(e) => return Err(e),
            };
            Ok(CutRow {
                cut: k + 1,
                bond: bonds[k + 1],
                rank: s.iter().filter(|&&x| x > top * 1e-12 && x > 0.0).count(),
                entropy,
                max_entropy: (bonds[k + 1] as f64).ln(),
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;

    save_bundle(&Bundle::Factorization(f.clone()), &args.output)
        .map_err(|e| Failure::from(e).context(args.output.display()))?;

    println!("matrix      {}x{} (padded {}x{})", plan.rows, plan.cols, plan.padded_rows, plan.padded_cols);
    println!("n           {}", plan.n());
    println!("row factors {:?}", plan.row_factors);
    println!("col factors {:?}", plan.col_factors);
    println!("bonds       {:?}", f.bonds().interior());
    println!("params      {}", f.parameter_count());
    println!("rho         {:.6}", f.compression_ratio());
    println!();
    println!("{:>4} {:>6} {:>6} {:>12} {:>12}", "cut", "bond", "rank", "entropy", "ln(bond)");
    for c in &cuts {
        let s = c.entropy.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
        println!("{:>4} {:>6} {:>6} {:>12} {:>12.6}", c.cut, c.bond, c.rank, s, c.max_entropy);
    }
    println!();
    println!("wrote {}", args.output.display());

    if let Some(path) = &args.json {
        let report = Report { plan: &plan, bonds, params: f.parameter_count(), rho: f.compression_ratio(), cuts };
        write_json(&report, path)?;
    }
    Ok(())
}

fn resolve_plan(args: &Args, rows: usize, cols: usize) -> CmdResult<ShapePlan> {
    if let Some(name) = &args.preset {
        let p = preset(name).ok_or_else(|| Failure::invalid(format!("unknown preset {name:?}")))?;
        if let Some(n) = args.n {
            if n != p.row_factors.len() {
                return Err(Failure::invalid(format!("preset {name} has {} sites, not {n}", p.row_factors.len())));
            }
        }
        return Ok(ShapePlan::new(rows, cols, p.row_factors.to_vec(), p.col_factors.to_vec())?);
    }
    let n = args.n.expect("clap requires n without a preset");
    Ok(plan_shapes(rows, cols, n, args.row_factors.as_deref(), args.col_factors.as_deref())?)
}
