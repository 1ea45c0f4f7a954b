use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use log::info;

use fredholm::experiment::{prepare, run_experiment, run_sweep, ExperimentSummary};
use fredholm::io::config::CONFIG_KEYS;
use fredholm::io::pgm::write_image;
use fredholm::io::{parse_config, ExperimentConfig};
use fredholm::problems::shepp_logan_phantom;

const PHANTOM_KEYS: &[&str] = &["width", "height", "phantom"];
const BLUR_KEYS: &[&str] = &["image", "width", "height", "blur_length", "blur_sigma", "noise_level", "seed"];

fn key_args(keys: impl IntoIterator<Item = &'static str>) -> Vec<Arg> {
    keys.into_iter()
        .map(|key| {
            let help = CONFIG_KEYS.iter().find(|(k, _)| *k == key).map_or("", |(_, h)| *h);
            Arg::new(key)
                .long(key)
                .value_name("VALUE")
                .allow_negative_numbers(true)
                .help(help)
        })
        .collect()
}

fn cli() -> Command {
    let all = || key_args(CONFIG_KEYS.iter().map(|(k, _)| *k));
    let config = || {
        Arg::new("config")
            .long("config")
            .short('c')
            .value_name("FILE")
            .value_parser(clap::value_parser!(PathBuf))
            .help("key = value file; flags override it")
    };
    let output = |help: &'static str| {
        Arg::new("output")
            .long("output")
            .short('o')
            .value_name("FILE")
            .required(true)
            .value_parser(clap::value_parser!(PathBuf))
            .help(help)
    };
    Command::new("fredholm")
        .about("Particle and grid solvers for Fredholm equations of the first kind")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("verbose")
                .long("verbose")
                .short('v')
                .action(ArgAction::Count)
                .global(true)
                .help("more log output (repeatable)"),
        )
        .subcommand(Command::new("run").about("Run one replicated experiment").arg(config()).args(all()))
        .subcommand(
            Command::new("sweep")
                .about("Run the cartesian product of sweep_N, sweep_M and sweep_epsilon")
                .arg(config())
                .args(all()),
        )
        .subcommand(
            Command::new("phantom")
                .about("Write a Shepp-Logan phantom as a 16-bit graymap")
                .arg(output("destination PGM"))
                .args(key_args(PHANTOM_KEYS.iter().copied())),
        )
        .subcommand(
            Command::new("blur")
                .about("Forward-simulate motion-blurred data from a sharp image")
                .arg(output("destination PGM for the blurred image"))
                .arg(
                    Arg::new("sharp")
                        .long("sharp")
                        .value_name("FILE")
                        .value_parser(clap::value_parser!(PathBuf))
                        .help("also write the sharp image"),
                )
                .args(key_args(BLUR_KEYS.iter().copied())),
        )
}

fn overrides(m: &ArgMatches, keys: impl IntoIterator<Item = &'static str>) -> Vec<(String, String)> {
    keys.into_iter()
        .filter_map(|k| m.get_one::<String>(k).map(|v| (k.to_string(), v.clone())))
        .collect()
}

fn loose_config(m: &ArgMatches, keys: &[&'static str]) -> fredholm::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    for (k, v) in overrides(m, keys.iter().copied()) {
        cfg.set(&k, &v)?;
    }
    Ok(cfg)
}

fn report(summary: &ExperimentSummary, cfg: &ExperimentConfig) {
    for a in &summary.aggregates {
        let mut line = format!(
            "{} N={} M={} epsilon={}: mean ISE {:.6} (sd {:.6})",
            a.method, a.size.n_particles, a.size.n_replicates, a.size.epsilon, a.mean_ise, a.sd_ise
        );
        if let Some(v) = a.mse_p95 {
            line += &format!(", MSE p95 {v:.6}");
        }
        if let Some(v) = a.mean_kl {
            line += &format!(", KL {v:.6}");
        }
        if let Some(v) = a.mean_match_distance {
            line += &format!(", match {v:.6}");
        }
        println!("{line}");
    }
    println!("artifacts in {}", cfg.output_dir.display());
}

fn dispatch(m: &ArgMatches) -> fredholm::Result<()> {
    let keys = || CONFIG_KEYS.iter().map(|(k, _)| *k);
    match m.subcommand() {
        Some(("run", sub)) => {
            let cfg = parse_config(sub.get_one::<PathBuf>("config").map(PathBuf::as_path), &overrides(sub, keys()))?;
            let summary = run_experiment(&cfg)?;
            report(&summary, &cfg);
        }
        Some(("sweep", sub)) => {
            let mut flags = overrides(sub, keys());
            let file = sub.get_one::<PathBuf>("config").map(PathBuf::as_path);
            // a sweep without an explicit experiment runs the analytic problem
            if file.is_none() && !flags.iter().any(|(k, _)| k == "experiment") {
                flags.insert(0, ("experiment".into(), "sweep".into()));
            }
            let cfg = parse_config(file, &flags)?;
            let summary = run_sweep(&cfg)?;
            report(&summary, &cfg);
        }
        Some(("phantom", sub)) => {
            let cfg = loose_config(sub, PHANTOM_KEYS)?;
            let out = sub.get_one::<PathBuf>("output").expect("required");
            let img = shepp_logan_phantom(cfg.width, cfg.height, cfg.phantom)?;
            write_image(&img, out)?;
            info!("wrote {}x{} phantom to {}", cfg.width, cfg.height, out.display());
        }
        Some(("blur", sub)) => {
            let mut cfg = loose_config(sub, BLUR_KEYS)?;
            cfg.set("experiment", "deblur")?;
            let prepared = prepare(&cfg)?;
            let out = sub.get_one::<PathBuf>("output").expect("required");
            write_image(prepared.data_image.as_ref().expect("deblur data"), out)?;
            if let Some(sharp) = sub.get_one::<PathBuf>("sharp") {
                write_image(prepared.truth_image.as_ref().expect("deblur truth"), sharp)?;
            }
            info!("wrote blurred image to {}", out.display());
        }
        _ => unreachable!("subcommand is required"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let m = cli().get_matches();
    let level = match m.get_count("verbose") {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(&m) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_is_well_formed() {
        cli().debug_assert();
    }

    #[test]
    fn every_config_key_is_a_run_flag() {
        let cmd = cli();
        let run = cmd.find_subcommand("run").unwrap();
        for (k, _) in CONFIG_KEYS {
            assert!(run.get_arguments().any(|a| a.get_long() == Some(*k)), "{k}");
        }
    }
}
