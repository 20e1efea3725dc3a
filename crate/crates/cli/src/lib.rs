//! Command-line front end: flag parsing, configuration merging and dispatch.

pub mod commands;
pub mod config;

use anyhow::{bail, Result};
use clap::{Arg, ArgMatches, Args, Command, FromArgMatches, Parser, Subcommand};
use commands::Outcome;
use config::RunConfig;
use std::path::PathBuf;

/// `(config key, flag, help)` for every key settable from the command line.
const KEYS: &[(&str, &str, &str)] = &[
    ("system", "system", "ou | pitchfork | cylinder | torus | product-ou | product-pitchfork"),
    ("seed", "seed", "master seed of the noise ensemble [default: 1]"),
    ("h", "h", "grid step, a dyadic fraction of the base period [default: base·2^-10]"),
    ("T", "T", "half range of the two-sided noise grid [default: horizon + 64]"),
    ("N", "N", "number of noise paths [default: 2000]"),
    ("gamma", "gamma", "torus frequency [default: √2]"),
    ("t1", "t1", "first period of the deterministic torus flow [default: 1]"),
    ("t2", "t2", "second period of the deterministic torus flow [default: √2]"),
    ("x0", "x0", "initial state, comma-separated components"),
    ("epsilon", "epsilon", "almost-period tolerance [default: 0.05]"),
    ("window", "window", "scan window for almost periods"),
    ("step", "step", "scan step for two-frequency almost periods [default: 1]"),
    ("taus", "taus", "explicit comma-separated shift set instead of a scan"),
    ("tau", "tau", "period tested by `verify periodic` [default: base period]"),
    ("threshold", "threshold", "pass threshold for residual checks"),
    ("tol", "tol", "pullback truncation tolerance [default: 1e-10]"),
    ("convention", "convention", "radial normalization: factor-two | unscaled"),
    ("initial", "initial", "initial value for thm45: stationary | constant"),
    ("t", "t", "evaluation or push-forward time"),
    ("s", "s", "base time of a push-forward [default: 0]"),
    ("times", "times", "comma-separated push-forward times"),
    ("shifts", "shifts", "comma-separated base times"),
    ("t_end", "t-end", "end time of a trajectory [default: 2·base, 1·base for sde slope]"),
    ("output_step", "output-step", "time between written rows [default: base/16]"),
    ("substeps", "substeps", "Euler-Maruyama substeps per grid step [default: 1]"),
    ("levels", "levels", "comma-separated dyadic levels for the EM slope [default: 4,5,6,7,8]"),
    ("c1", "c1", "Lipschitz constant on sample × phase space [default: 1]"),
    ("c2", "c2", "Lipschitz constant on phase space [default: 1]"),
    ("lip_constant", "lip", "Lipschitz constant of the test functions [default: 1]"),
    ("sup_bound", "cap", "sup bound of the test functions [default: 1]"),
    ("resamples", "resamples", "bootstrap resamples [default: 200]"),
    ("bootstrap_seed", "bootstrap-seed", "bootstrap seed"),
    ("fresh_seed", "fresh-seed", "master seed of the independent push-forward ensemble"),
    ("output_dir", "output-dir", "directory for output files [default: out]"),
];

/// Config overrides collected from the per-key flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides(pub Vec<(String, String)>);

impl FromArgMatches for Overrides {
    fn from_arg_matches(m: &ArgMatches) -> Result<Self, clap::Error> {
        let mut v = Vec::new();
        for (key, _, _) in KEYS {
            if let Some(x) = m.get_one::<String>(key) {
                v.push((key.to_string(), x.clone()));
            }
        }
        Ok(Self(v))
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> Result<(), clap::Error> {
        *self = Self::from_arg_matches(m)?;
        Ok(())
    }
}

impl Args for Overrides {
    fn augment_args(cmd: Command) -> Command {
        KEYS.iter().fold(cmd, |c, &(key, flag, help)| {
            c.arg(Arg::new(key).long(flag).value_name("VALUE").help(help).allow_hyphen_values(true))
        })
    }

    fn augment_args_for_update(cmd: Command) -> Command {
        Self::augment_args(cmd)
    }
}

#[derive(Debug, Parser)]
#[command(name = "randap", version, about = "Simulation and verification of random periodic and almost periodic solutions")]
pub struct Cli {
    /// Flat key=value configuration file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Extra KEY=VALUE override, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Verb,
}

#[derive(Debug, Subcommand)]
pub enum Verb {
    /// Sample noise paths, apply the cocycle and evaluate the reference section.
    #[command(after_help = "Outputs:\n  trajectories.csv  path,seed,t,<components>  Φ(t,ω)x0\n  section.csv       path,seed,t,<components>  H(t,ω)\n  manifest.csv      index,seed")]
    Simulate(Overrides),
    /// Run a property check; exits 0 iff it passed.
    #[command(after_help = "Outputs:\n  verify_<check>.txt  key: value report\n  taus.csv            tau,deviation,closed_form  (rap)\n  violations.csv      tau,factor,value,bound     (thm43)")]
    Verify {
        /// cocycle | stationary | periodic | rap | thm43 | thm45
        check: String,
        #[command(flatten)]
        keys: Overrides,
    },
    /// Scan integer shifts for ε-almost periods of a rotation.
    #[command(after_help = "Outputs:\n  almost_periods.csv  tau,deviation\n  almost_periods.txt  counts, inclusion length")]
    AlmostPeriods(Overrides),
    /// Empirical measures along the reference section.
    #[command(after_help = "Outputs:\n  lambda.csv          weight,<components>\n  push_forward.csv    t,s,rho,lo,hi,resamples\n  ap_certificate.csv  family,t,s,tau,rho,lo,hi,bound,ok\n  measure_<check>.txt key: value report\nPush-forward and ap-certificate exit 0 iff they passed.")]
    Measure {
        /// lambda | push-forward | ap-certificate
        check_arg: Option<String>,
        /// Same as the positional argument.
        #[arg(long = "check")]
        check: Option<String>,
        #[command(flatten)]
        keys: Overrides,
    },
    /// Bounded-Lipschitz distance between two measure files (weight,<components>).
    #[command(after_help = "Outputs:\n  bl_distance.txt  distance, solver, status\n  bl_witness.csv   point,g  (an optimal test function)")]
    BlDistance {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        keys: Overrides,
    },
    /// Euler-Maruyama integration and strong-order estimation.
    #[command(after_help = "Outputs:\n  em_trajectories.csv  path,seed,t,em_<components>,exact_<components>  (integrate)\n  em_errors.csv        h,mean_abs_error                               (slope)\n  sde_<action>.txt     report")]
    Sde {
        /// integrate | slope
        action: String,
        #[command(flatten)]
        keys: Overrides,
    },
}

/// Merge the config file, `--set` pairs and per-key flags, in that order.
pub fn build_config(file: Option<&PathBuf>, set: &[String], keys: &Overrides) -> Result<RunConfig> {
    let mut cfg = match file {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for pair in set {
        let Some((k, v)) = pair.split_once('=') else {
            bail!("--set expects KEY=VALUE, got {pair:?}");
        };
        cfg.set(k.trim(), v.trim());
    }
    for (k, v) in &keys.0 {
        cfg.set(k, v.clone());
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<Outcome> {
    let keys = match &cli.command {
        Verb::Simulate(k) | Verb::AlmostPeriods(k) => k,
        Verb::Verify { keys, .. } | Verb::Measure { keys, .. } | Verb::BlDistance { keys, .. } | Verb::Sde { keys, .. } => keys,
    };
    let mut cfg = build_config(cli.config.as_ref(), &cli.set, keys)?;
    match &cli.command {
        Verb::Simulate(_) => commands::simulate(&mut cfg),
        Verb::Verify { check, .. } => commands::verify(&mut cfg, check),
        Verb::AlmostPeriods(_) => commands::almost_periods_cmd(&mut cfg),
        Verb::Measure { check_arg, check, .. } => {
            let c = match (check_arg, check) {
                (Some(a), Some(b)) if a != b => bail!("conflicting measure checks {a:?} and {b:?}"),
                (Some(a), _) => a.clone(),
                (None, Some(b)) => b.clone(),
                (None, None) => bail!("measure needs a check: lambda, push-forward or ap-certificate"),
            };
            commands::measure(&mut cfg, &c)
        }
        Verb::BlDistance { a, b, .. } => commands::bl_distance_cmd(&mut cfg, a, b),
        Verb::Sde { action, .. } => commands::sde(&mut cfg, action),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.cfg");
        std::fs::write(&p, "seed=3\nN=10\n").unwrap();
        let cli = Cli::try_parse_from(["randap", "--config", p.to_str().unwrap(), "simulate", "--seed", "9", "--t-end", "1"]).unwrap();
        let Verb::Simulate(keys) = &cli.command else { panic!("wrong verb") };
        let cfg = build_config(cli.config.as_ref(), &cli.set, keys).unwrap();
        assert_eq!(cfg.get("seed"), Some("9"));
        assert_eq!(cfg.get("N"), Some("10"));
        assert_eq!(cfg.get("t_end"), Some("1"));
    }

    #[test]
    fn measure_accepts_either_check_form() {
        for args in [["randap", "measure", "lambda"], ["randap", "measure", "--check=lambda"]] {
            let cli = Cli::try_parse_from(args).unwrap();
            let Verb::Measure { check_arg, check, .. } = cli.command else { panic!("wrong verb") };
            assert_eq!(check_arg.or(check).as_deref(), Some("lambda"));
        }
    }
}
