use std::path::{Path, PathBuf};

use mpo_core::mpo::{plan_shapes, preset};
use mpo_core::trainer::{
    dimension_squeeze, evaluate, teacher_data, DenseNetwork, Head, Nonlinearity, SqueezeConfig, TeacherStructure,
    TeacherTask, ToyNetwork,
};
use mpo_core::ShapePlan;
use serde::Deserialize;

use super::write_json;
use crate::failure::{CmdResult, Failure};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// JSON job description.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_trace: PathBuf,
}

/// Job file. `squeeze` holds the loop settings; its `seed` (shuffling)
/// and the top-level `seed` (data and initialization) default to the
/// global seed.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Job {
    dims: Vec<usize>,
    #[serde(default)]
    n: Option<usize>,
    #[serde(default)]
    plans: Option<Vec<PlanSpec>>,
    #[serde(default)]
    nonlinearity: Nonlinearity,
    #[serde(default)]
    head: Head,
    task: TaskSpec,
    #[serde(default)]
    init: Init,
    #[serde(default)]
    seed: Option<u64>,
    squeeze: serde_json::Value,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PlanSpec {
    Preset { preset: String },
    Factors { row_factors: Vec<usize>, col_factors: Vec<usize> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskSpec {
    /// Teacher widths; defaults to the student's.
    #[serde(default)]
    dims: Option<Vec<usize>>,
    train_size: usize,
    eval_size: usize,
    #[serde(default = "default_noise")]
    noise: f64,
    #[serde(default)]
    structure: Option<TeacherStructure>,
}

fn default_noise() -> f64 {
    0.01
}

#[derive(Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum Init {
    /// Start from the teacher's own weights (requires equal widths).
    #[default]
    Teacher,
    Random,
}

fn read_job(path: &Path, global_seed: u64) -> CmdResult<(Job, SqueezeConfig)> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(format!("cannot read {}: {e}", path.display())))?;
    let mut job: Job =
        serde_json::from_str(&text).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    let seed = *job.seed.get_or_insert(global_seed);
    if let Some(obj) = job.squeeze.as_object_mut() {
        obj.entry("seed").or_insert(seed.into());
    }
    let cfg: SqueezeConfig = serde_json::from_value(job.squeeze.take())
        .map_err(|e| Failure::invalid(format!("{}: squeeze section: {e}", path.display())))?;
    cfg.validate()?;
    Ok((job, cfg))
}

fn plans(job: &Job) -> CmdResult<Vec<ShapePlan>> {
    let layers = job.dims.len().saturating_sub(1);
    if layers < 2 {
        return Err(Failure::invalid("dims must describe at least two layers"));
    }
    match (&job.plans, job.n) {
        (Some(specs), _) => {
            if specs.len() != layers {
                return Err(Failure::invalid(format!("{} plans for {layers} layers", specs.len())));
            }
            specs
                .iter()
                .enumerate()
                .map(|(l, spec)| {
                    let (rf, cf) = match spec {
                        PlanSpec::Preset { preset: name } => {
                            let p = preset(name).ok_or_else(|| Failure::invalid(format!("unknown preset {name:?}")))?;
                            (p.row_factors.to_vec(), p.col_factors.to_vec())
                        }
                        PlanSpec::Factors { row_factors, col_factors } => (row_factors.clone(), col_factors.clone()),
                    };
                    Ok(plan_shapes(job.dims[l], job.dims[l + 1], rf.len(), Some(&rf), Some(&cf))?)
                })
                .collect()
        }
        (None, Some(n)) => {
            Ok(job.dims.windows(2).map(|w| plan_shapes(w[0], w[1], n, None, None)).collect::<Result<_, _>>()?)
        }
        (None, None) => Err(Failure::invalid("config needs either n or plans")),
    }
}

pub fn run(args: Args, global_seed: u64) -> CmdResult {
    let (job, cfg) = read_job(&args.config, global_seed)?;
    let seed = job.seed.expect("filled by read_job");
    let plans = plans(&job)?;
    let task = TeacherTask {
        dims: job.task.dims.clone().unwrap_or_else(|| job.dims.clone()),
        nonlinearity: job.nonlinearity,
        head: job.head,
        train_size: job.task.train_size,
        eval_size: job.task.eval_size,
        noise: job.task.noise,
        seed,
        structure: job.task.structure.clone(),
    };
    if task.dims.first() != job.dims.first() || task.dims.last() != job.dims.last() {
        return Err(Failure::invalid("teacher and student must share input and output widths"));
    }
    let (train, eval, teacher) = teacher_data(&task)?;
    let start = match job.init {
        Init::Teacher if task.dims != job.dims => {
            return Err(Failure::invalid("init \"teacher\" needs task.dims equal to dims"));
        }
        Init::Teacher => teacher,
        Init::Random => DenseNetwork::random(&job.dims, job.nonlinearity, job.head, seed.wrapping_add(1))?,
    };
    let net = ToyNetwork::from_dense(&start, &plans, None)?;
    let (squeezed, trace) = dimension_squeeze(&net, &train, &eval, &cfg)?;
    write_json(&trace, &args.out_trace)?;

    let final_loss = evaluate(&squeezed, &eval)?;
    let tensors = squeezed.parameter_count();
    let aux: usize = squeezed.layers.iter().map(|l| l.auxiliary_parameter_count()).sum();
    let biases = squeezed.bias_count();
    println!("baseline loss  {:.6e}", trace.baseline_loss);
    println!("final loss     {final_loss:.6e} (gap {:.3e}, delta {:.3e})", (final_loss - trace.baseline_loss).abs(), cfg.delta);
    println!("steps          {} accepted of {} attempted", trace.accepted_steps(), trace.steps.len());
    println!("final rho      {:.6}", squeezed.compression_ratio());
    for (l, layer) in squeezed.layers.iter().enumerate() {
        println!("layer {l} bonds  {:?}", layer.factorization().bonds().interior());
    }
    println!(
        "#Pr/#To        {aux}/{tensors} ({:.2}%) tensors only; {}/{} ({:.2}%) with biases",
        100.0 * aux as f64 / tensors as f64,
        aux + biases,
        tensors + biases,
        100.0 * (aux + biases) as f64 / (tensors + biases) as f64
    );
    println!("wrote {}", args.out_trace.display());
    Ok(())
}
