//! `reta`: run the service, or drive the platform offline against a local
//! data directory.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage or I/O error.

mod commands;
mod config;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use reta_core::reta::Mode;

use crate::commands::Failure;

#[derive(Parser, Debug)]
#[command(name = "reta", version, about = "Spreadsheet-driven multi-tenant data platform")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory holding tenant data. Created if absent.
    #[arg(long, global = true, value_name = "DIR")]
    data_dir: Option<PathBuf>,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// More logging; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Talk to a running service instead of the local data directory.
    #[arg(long, global = true, value_name = "URL", env = "RETA_SERVER")]
    server: Option<String>,
    /// Bearer token for --server requests.
    #[arg(long, global = true, value_name = "TOKEN", env = "RETA_TOKEN", hide_env_values = true)]
    token: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the HTTP service until interrupted.
    Serve(ServeArgs),
    /// Parse and validate a requirements table.
    Validate {
        file: PathBuf,
    },
    /// Create or replace the system a requirements table describes.
    Instantiate {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Create)]
        mode: ModeArg,
    },
    /// Load a data-exchange table into a schema.
    Import {
        tenant: String,
        schema: String,
        file: PathBuf,
        /// Keep the valid rows of a batch with rejected rows.
        #[arg(long)]
        partial: bool,
    },
    /// Write a schema's records as CSV.
    Export {
        tenant: String,
        schema: String,
        /// Output file; standard output when omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Platform administration.
    #[command(subcommand)]
    Admin(AdminCommand),
}

#[derive(Args, Debug)]
struct ServeArgs {
    /// Address to listen on.
    #[arg(long, value_name = "ADDR")]
    listen: Option<SocketAddr>,
    /// Static console assets served under /ui.
    #[arg(long, value_name = "DIR")]
    ui_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum AdminCommand {
    /// List every tenant.
    List,
    /// Show one tenant's summary.
    Show { tenant: String },
    /// Delete a tenant and all its data.
    Delete { tenant: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Create,
    Replace,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Create => Mode::Create,
            ModeArg::Replace => Mode::Replace,
        }
    }
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(cli).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}

async fn run(cli: Cli) -> Result<(), Failure> {
    let (listen, ui_dir) = match &cli.command {
        Command::Serve(args) => (args.listen, args.ui_dir.clone()),
        _ => (None, None),
    };
    let overrides = config::Overrides {
        data_dir: cli.data_dir.clone(),
        listen,
        ui_dir,
    };
    let settings = config::resolve(cli.config.as_deref(), |k| std::env::var(k).ok(), &overrides)
        .map_err(Failure::Usage)?;
    let ctx = commands::Context {
        config: settings,
        format: cli.format,
        server: cli.server,
        token: cli.token,
    };
    match cli.command {
        Command::Serve(_) => commands::serve(&ctx).await,
        Command::Validate { file } => commands::validate(&ctx, &file).await,
        Command::Instantiate { file, mode } => commands::instantiate(&ctx, &file, mode.into()).await,
        Command::Import {
            tenant,
            schema,
            file,
            partial,
        } => commands::import(&ctx, &tenant, &schema, &file, !partial).await,
        Command::Export { tenant, schema, out } => commands::export(&ctx, &tenant, &schema, out.as_deref()).await,
        Command::Admin(AdminCommand::List) => commands::admin_list(&ctx).await,
        Command::Admin(AdminCommand::Show { tenant }) => commands::admin_show(&ctx, &tenant).await,
        Command::Admin(AdminCommand::Delete { tenant }) => commands::admin_delete(&ctx, &tenant).await,
    }
}
