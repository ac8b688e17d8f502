//! Minimal external scorer speaking the PSCR protocol, for tests and demos.

use std::io::{BufReader, BufWriter};
use std::net::TcpListener;

use clap::{Parser, ValueEnum};
use slidescope_core::scorer::wire::{serve_stub, StubConfig, StubMode};

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Constant,
    Echo,
}

#[derive(Parser)]
#[command(about = "PSCR stub scorer: constant or echo outputs over stdio or TCP")]
struct Args {
    #[arg(long, value_enum, default_value = "constant")]
    mode: Mode,
    /// Output value in constant mode; values outside [0, 1] are sent as is.
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    value: f32,
    #[arg(long, default_value_t = 16)]
    max_batch: u16,
    /// Answer requests in reverse order within windows of this size.
    #[arg(long, default_value_t = 1)]
    reverse_window: usize,
    #[arg(long)]
    bad_magic: bool,
    /// Accept one TCP connection at this address instead of using stdio.
    #[arg(long)]
    listen: Option<String>,
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let args = Args::parse();
    let cfg = StubConfig {
        mode: match args.mode {
            Mode::Constant => StubMode::Constant(args.value),
            Mode::Echo => StubMode::Echo,
        },
        max_batch: args.max_batch,
        reverse_window: args.reverse_window,
        bad_magic: args.bad_magic,
    };
    match args.listen {
        Some(addr) => {
            let listener = TcpListener::bind(&addr)?;
            eprintln!("listening on {}", listener.local_addr()?);
            let (stream, _) = listener.accept()?;
            let mut r = BufReader::new(stream.try_clone()?);
            let mut w = BufWriter::new(stream);
            serve_stub(&mut r, &mut w, &cfg)?;
        }
        None => {
            let mut r = BufReader::new(std::io::stdin().lock());
            let mut w = BufWriter::new(std::io::stdout().lock());
            serve_stub(&mut r, &mut w, &cfg)?;
        }
    }
    Ok(())
}
