use std::process::ExitCode;

use clap::Parser;
use radial_nls::harness::{run_experiment, CliArgs, RunConfig};

fn main() -> ExitCode {
    let args = CliArgs::parse();
    let result = RunConfig::from_cli(args).and_then(|config| {
        let summary = run_experiment(&config)?;
        println!(
            "completed {} records, {} snapshots in {:.2}s; max mass drift {:.3e}, max energy drift {:.3e}; output in {}",
            summary.records,
            summary.snapshots,
            summary.wall_time.as_secs_f64(),
            summary.max_mass_rel_err,
            summary.max_energy_rel_err,
            config.outputs.dir.display()
        );
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
