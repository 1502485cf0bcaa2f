use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use spinflip::cli::{
    load_config, run, write_output, Command, OutputFormat, Report, ReportKind, RunConfig,
    SweepParameter, SweepSpec,
};

/// Majorana spin-flip escape rates for magnetically trapped atoms.
#[derive(Parser)]
#[command(name = "spinflip", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Trap scales, surface parameters and the escape wavenumber.
    Derive {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
    },
    /// Closed-form escape rate with its full factor breakdown.
    Rate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
    },
    /// Rate table over one swept parameter, other values from the config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// bias_field, radial_gradient or g_factor.
        #[arg(long)]
        param: String,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
    },
    /// Exact rational path weights N_{p,p2} and coherence factors C_p.
    Table {
        #[arg(long, default_value_t = 8)]
        pmax: u32,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
    },
    /// Independent oracle battery; exits 2 if any gate fails.
    Verify {
        /// Skip the multi-second explicit second-order sum.
        #[arg(long)]
        fast: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
    },
}

fn build_config(cmd: Cmd) -> spinflip::Result<RunConfig> {
    let (trap, command, out, format) = match cmd {
        Cmd::Derive { config, out, format } => {
            (Some(load_config(&config)?), Command::Derive, out, format)
        }
        Cmd::Rate { config, out, format } => {
            (Some(load_config(&config)?), Command::Rate, out, format)
        }
        Cmd::Sweep {
            config,
            param,
            from,
            to,
            steps,
            out,
            format,
        } => {
            let spec = SweepSpec {
                parameter: SweepParameter::parse(&param)?,
                from,
                to,
                steps,
            };
            (Some(load_config(&config)?), Command::Sweep(spec), out, format)
        }
        Cmd::Table { pmax, out, format } => (None, Command::Table { p_max: pmax }, out, format),
        Cmd::Verify { fast, out, format } => (None, Command::Verify { fast }, out, format),
    };
    Ok(RunConfig {
        trap,
        command,
        output_path: out,
        format: format.into(),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match build_config(cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let report: Report = match run(&config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    if let Err(e) = write_output(&report, config.output_path.as_deref(), config.format) {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code());
    }
    // A verify run that wrote its report but found failing gates is a
    // computation failure for scripting purposes.
    if let ReportKind::Verify(v) = &report.kind {
        if !v.passed {
            return ExitCode::from(2);
        }
    }
    ExitCode::SUCCESS
}
