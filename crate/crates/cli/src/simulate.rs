use std::path::PathBuf;

use ccbm_core::data::write_dataset;
use ccbm_core::eval::{generate_synthetic, mimic_style_spec, SyntheticSpec};

use crate::rundir::{write_atomic, write_json};
use crate::CliError;

#[derive(Clone, Debug)]
pub struct SimulateArgs {
    pub out: PathBuf,
    /// JSON `SyntheticSpec`; the built-in clinical-notes design when absent.
    pub spec: Option<PathBuf>,
    /// Training rows; overrides `n` in the generator settings.
    pub n: Option<usize>,
    pub n_test: usize,
    /// Overrides the generator seed.
    pub seed: Option<u64>,
}

/// Writes `train.jsonl`, `test.jsonl`, `pool.json`, `truth.json`,
/// `spec.json` and a ready-to-run `run.toml` into `out`.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<SyntheticSpec, CliError> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => mimic_style_spec(args.n.unwrap_or(800), args.seed.unwrap_or(0)),
    };
    if let Some(n) = args.n {
        spec.n = n;
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if spec.n == 0 {
        return Err(CliError::Config("n must be positive".into()));
    }
    let n_train = spec.n;
    let mut full = spec.clone();
    full.n = n_train + args.n_test;
    let data = generate_synthetic(&full).map_err(|e| CliError::Config(e.to_string()))?;

    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let (train, test) = data.observations.split_at(n_train);
    let train_path = args.out.join("train.jsonl");
    write_dataset(&train_path, train).map_err(|e| CliError::io(&train_path, e))?;
    if !test.is_empty() {
        let test_path = args.out.join("test.jsonl");
        write_dataset(&test_path, test).map_err(|e| CliError::io(&test_path, e))?;
    }
    write_json(&args.out.join("pool.json"), &data.pool)?;
    let truth: Vec<&str> = data.truth.iter().map(|c| c.question()).collect();
    write_json(&args.out.join("truth.json"), &truth)?;
    write_json(&args.out.join("spec.json"), &spec)?;

    let run = format!(
        "dataset = \"train.jsonl\"\noutput_dir = \"run\"\ntruth = \"truth.json\"\n\n\
         [oracle]\nkind = \"pool\"\npool = \"pool.json\"\nstyle = \"uniform\"\n\n\
         [sampler]\nk = {}\nseed = {}\n",
        spec.true_support.len().max(1),
        spec.seed
    );
    write_atomic(&args.out.join("run.toml"), run.as_bytes())?;
    Ok(spec)
}
