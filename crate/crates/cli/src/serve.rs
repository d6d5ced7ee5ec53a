use std::io::{BufReader, BufWriter};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::Args;
use lexner::mlm::{serve_mlm, StubBackend};
use lexner::tagger::{serve_tagger, NativeTagger};

use crate::manifest::require_file;

#[derive(Debug, Args)]
pub struct ServeMlmArgs {
    /// Stub configuration (JSON with `"kind": "table"` or `"vocab"`).
    #[arg(long)]
    pub stub: PathBuf,
    /// Listen on this TCP address instead of stdin/stdout.
    #[arg(long)]
    pub listen: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeTaggerArgs {
    /// Listen on this TCP address instead of stdin/stdout.
    #[arg(long)]
    pub listen: Option<String>,
}

/// Serves each connection on its own thread until the process is killed.
fn listen<F>(addr: &str, handle: F) -> Result<()>
where
    F: Fn(BufReader<std::net::TcpStream>, BufWriter<std::net::TcpStream>) + Send + Sync + 'static,
{
    let listener = TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
    eprintln!("listening on tcp://{}", listener.local_addr()?);
    let handle = Arc::new(handle);
    for stream in listener.incoming() {
        let stream = stream?;
        let reader = BufReader::new(stream.try_clone()?);
        let handle = Arc::clone(&handle);
        std::thread::spawn(move || handle(reader, BufWriter::new(stream)));
    }
    Ok(())
}

pub fn serve_stub_mlm(args: ServeMlmArgs) -> Result<()> {
    require_file(&args.stub, "stub backend file")?;
    let stub = Arc::new(StubBackend::load(&args.stub)?);
    match args.listen {
        Some(addr) => listen(&addr, move |r, w| {
            if let Err(e) = serve_mlm(stub.as_ref(), r, w) {
                log::warn!("connection closed: {e}");
            }
        }),
        None => Ok(serve_mlm(stub.as_ref(), std::io::stdin().lock(), std::io::stdout().lock())?),
    }
}

pub fn serve_native_tagger(args: ServeTaggerArgs) -> Result<()> {
    match args.listen {
        Some(addr) => listen(&addr, |r, w| {
            if let Err(e) = serve_tagger(&NativeTagger, r, w) {
                log::warn!("connection closed: {e}");
            }
        }),
        None => Ok(serve_tagger(&NativeTagger, std::io::stdin().lock(), std::io::stdout().lock())?),
    }
}
