//! Writes the synthetic fixture corpus.
//!
//! cargo run -p insight-core --example make_fixtures -- fixtures 25

use std::path::PathBuf;

use insight_core::fixture::FIXTURE_EXTENSION;
use insight_core::synth::{site_ids, synth_site};

fn main() -> std::io::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "fixtures".into()));
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(25);
    std::fs::create_dir_all(&dir)?;
    let mut urls = String::new();
    for (i, id) in site_ids(n).iter().enumerate() {
        let app = synth_site(id, i as u64);
        std::fs::write(dir.join(format!("{id}{FIXTURE_EXTENSION}")), app.to_json_pretty() + "\n")?;
        urls.push_str(&format!("https://{id}/\n"));
    }
    std::fs::write(dir.join("urls.txt"), urls)?;
    println!("wrote {n} apps to {}", dir.display());
    Ok(())
}
