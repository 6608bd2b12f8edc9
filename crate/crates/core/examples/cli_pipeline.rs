// The command-line pipeline driven from code: simulate a synthetic survey,
// then write the count posterior, the unseen-tree map and the predictive
// law of new features. Same as
//
// ```text
// featalloc --config configs/synthetic_dpp.toml --out OUT simulate
// featalloc --config configs/synthetic_dpp.toml --out OUT count-posterior
// ...
// ```

use std::path::{Path, PathBuf};

use clap::Parser;
use featalloc::cli::{run, Cli};

pub fn run_example(out: &Path, ngrid: usize) -> featalloc::Result<Vec<PathBuf>> {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/synthetic_dpp.toml");
    let mut written = Vec::new();
    for command in ["simulate", "count-posterior", "intensity-map", "predict-new"] {
        let cli = Cli::parse_from([
            "featalloc".as_ref(),
            "--config".as_ref(),
            config.as_os_str(),
            "--out".as_ref(),
            out.as_os_str(),
            "--ngrid".as_ref(),
            ngrid.to_string().as_ref(),
            command.as_ref(),
        ] as [&std::ffi::OsStr; 8]);
        let files = run(&cli)?;
        for f in &files {
            println!("{command}: wrote {}", f.display());
        }
        written.extend(files);
    }
    Ok(written)
}

#[allow(dead_code)]
fn main() -> featalloc::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| PathBuf::from("out/pipeline"), PathBuf::from);
    run_example(&out, 50).map(|_| ())
}
