use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use duet_core::io::{load_trace, run_replay, write_outputs};
use duet_core::qcore::{bell_weights, entanglement_switch_state, measure_probs, run_shots, Prng};
use duet_core::EngineConfig;
use serde::Serialize;

use crate::{ProbsArgs, ReplayArgs, SweepArgs};

/// Reads an engine config file (defaults when `path` is `None`), then
/// applies a seed override.
pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<EngineConfig> {
    let mut config = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            EngineConfig::from_toml_str(&text).with_context(|| format!("in {}", p.display()))?
        }
        None => EngineConfig::default(),
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

pub fn cmd_replay(args: &ReplayArgs) -> Result<()> {
    let config = load_config(args.config.as_deref(), args.seed)?;
    let trace = load_trace(&args.trace).with_context(|| format!("loading trace {}", args.trace.display()))?;
    let (out, stats) = run_replay(&trace, &config)?;
    write_outputs(&out, &stats, &args.out, &args.stats)?;
    Ok(())
}

/// One CSV row of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub s: f64,
    pub p00: f64,
    pub p01: f64,
    pub p10: f64,
    pub p11: f64,
    /// `P(agree) − P(disagree)`.
    pub correlation: f64,
}

/// Empirical outcome frequencies at `s = k/(steps−1)` for `k = 0..steps`,
/// all rows drawn from one generator seeded with `seed`.
pub fn sweep(shots: u64, steps: u64, seed: u64) -> Result<Vec<SweepRow>> {
    if steps < 2 {
        bail!("--steps must be at least 2, got {steps}");
    }
    if shots == 0 {
        bail!("--shots must be at least 1");
    }
    let mut rng = Prng::new(seed);
    (0..steps)
        .map(|k| {
            let s = k as f64 / (steps - 1) as f64;
            let mut counts = [0u64; 4];
            for pair in run_shots(s, shots as usize, &mut rng)? {
                counts[pair.index()] += 1;
            }
            let [p00, p01, p10, p11] = counts.map(|c| c as f64 / shots as f64);
            let agree = (counts[0] + counts[3]) as f64;
            let disagree = (counts[1] + counts[2]) as f64;
            Ok(SweepRow {
                s,
                p00,
                p01,
                p10,
                p11,
                correlation: (agree - disagree) / shots as f64,
            })
        })
        .collect()
}

pub fn write_sweep_csv(rows: &[SweepRow], out: impl Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let rows = sweep(args.shots, args.steps, args.seed)?;
    match &args.out {
        Some(path) => {
            let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_sweep_csv(&rows, file)
        }
        None => write_sweep_csv(&rows, std::io::stdout().lock()),
    }
}

/// Exact probabilities and Bell-state weights as printable text.
pub fn probs_report(s: f64) -> Result<String> {
    if !(0.0..=1.0).contains(&s) {
        bail!("s must be within [0, 1], got {s}");
    }
    let p = measure_probs(&entanglement_switch_state(s)?)?;
    let (phi, psi) = bell_weights(s)?;
    Ok(format!(
        "s {s}\np00 {}\np01 {}\np10 {}\np11 {}\nphi_plus_weight {phi}\npsi_plus_weight {psi}\n",
        p[0], p[1], p[2], p[3]
    ))
}

pub fn cmd_probs(args: &ProbsArgs) -> Result<()> {
    print!("{}", probs_report(args.s)?);
    Ok(())
}
