use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use mpo_core::layer::{dense_flops, forward_flops};
use mpo_core::mpo::{full_bonds, preset, PRESETS};
use mpo_core::{BondProfile, MpoFactorization, MpoLinear, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::failure::{CmdResult, Failure};

const WARMUPS: usize = 3;
const RUNS: usize = 5;

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Named plan, e.g. albert-attention.
    #[arg(long)]
    plan: String,
    /// Interior bond caps; each entry runs with bonds min(full, cap).
    #[arg(long, value_delimiter = ',', required = true)]
    bond_sweep: Vec<usize>,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    /// Write the CSV here instead of after the table.
    #[arg(long)]
    csv: Option<PathBuf>,
}

struct Row {
    cap: usize,
    bonds: BondProfile,
    params: usize,
    flops: u64,
    ms: f64,
}

pub fn run(args: Args, seed: u64) -> CmdResult {
    let p = preset(&args.plan).ok_or_else(|| {
        let known: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
        Failure::invalid(format!("unknown preset {:?}; known: {}", args.plan, known.join(", ")))
    })?;
    if args.batch == 0 || args.bond_sweep.contains(&0) {
        return Err(Failure::invalid("batch and bond caps must be positive"));
    }
    let plan = p.plan();
    let full = full_bonds(&plan);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Tensor::from_fn(vec![args.batch, plan.rows], |_| rng.gen_range(-1.0..1.0))?;
    let dense = dense_flops(plan.rows, plan.cols, args.batch);

    let mut rows = Vec::with_capacity(args.bond_sweep.len());
    for &cap in &args.bond_sweep {
        let n = plan.n();
        let dims = full.dims.iter().enumerate().map(|(k, &d)| if k == 0 || k == n { 1 } else { d.min(cap) });
        let bonds = BondProfile::new(dims.collect()).realizable(&plan);
        let tensors = (0..n)
            .map(|k| {
                let shape = vec![bonds.dims[k], plan.row_factors[k], plan.col_factors[k], bonds.dims[k + 1]];
                Tensor::from_fn(shape, |_| rng.gen_range(-0.5..0.5))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let f = MpoFactorization::from_parts(plan.clone(), tensors)?;
        let layer = MpoLinear::from_factorization(f, vec![0.0; plan.cols], false)?;
        for _ in 0..WARMUPS {
            std::hint::black_box(layer.forward(&x)?);
        }
        let mut times = Vec::with_capacity(RUNS);
        for _ in 0..RUNS {
            let start = Instant::now();
            std::hint::black_box(layer.forward(&x)?);
            times.push(start.elapsed().as_secs_f64() * 1e3);
        }
        times.sort_by(f64::total_cmp);
        rows.push(Row {
            cap,
            params: layer.parameter_count(),
            flops: forward_flops(&plan, &bonds, args.batch),
            ms: times[RUNS / 2],
            bonds,
        });
    }

    println!("plan {} ({}x{}, n = {}), batch {}", p.name, plan.rows, plan.cols, plan.n(), args.batch);
    println!("dense flops {dense}");
    println!();
    println!("{:>6} {:>28} {:>10} {:>14} {:>10} {:>10} {:>10}", "cap", "bonds", "params", "flops", "vs dense", "vs prev", "ms");
    let mut csv = String::from("cap,bonds,params,flops,dense_flops,flops_ratio_prev,ms_median\n");
    for (i, r) in rows.iter().enumerate() {
        let prev = if i == 0 { None } else { Some(r.flops as f64 / rows[i - 1].flops as f64) };
        let prev_s = prev.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
        let bonds = format!("{:?}", r.bonds.interior());
        println!(
            "{:>6} {:>28} {:>10} {:>14} {:>10.4} {:>10} {:>10.3}",
            r.cap,
            bonds,
            r.params,
            r.flops,
            r.flops as f64 / dense as f64,
            prev_s,
            r.ms
        );
        let joined: Vec<String> = r.bonds.interior().iter().map(usize::to_string).collect();
        let prev_csv = prev.map_or_else(String::new, |v| format!("{v:.6}"));
        writeln!(csv, "{},{},{},{},{},{},{:.6}", r.cap, joined.join(" "), r.params, r.flops, dense, prev_csv, r.ms)
            .expect("writing to a String");
    }
    match &args.csv {
        Some(path) => {
            std::fs::write(path, csv).map_err(|e| Failure::io(format!("cannot write {}: {e}", path.display())))?
        }
        None => {
            println!();
            print!("{csv}");
        }
    }
    Ok(())
}
