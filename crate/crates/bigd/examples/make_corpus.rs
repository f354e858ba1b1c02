//! Writes a small synthetic texture corpus (three grating orientations plus
//! noise) as a directory-per-class PGM tree, handy for trying the CLI:
//!
//! ```text
//! cargo run --release -p bigd --example make_corpus -- /tmp/corpus 20 64 7
//! ```

use std::path::PathBuf;

use bigd::synth::{write_corpus, CorpusSpec};

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "corpus".into()));
    let images_per_class = args.next().map_or(40, |v| v.parse().expect("bad image count"));
    let side = args.next().map_or(64, |v| v.parse().expect("bad image size"));
    let seed = args.next().map_or(0, |v| v.parse().expect("bad seed"));
    let spec = CorpusSpec {
        images_per_class,
        width: side,
        height: side,
        seed,
    };
    write_corpus(&dir, &spec).expect("corpus write failed");
    println!(
        "wrote 4 classes x {images_per_class} images ({side}x{side}) under {}",
        dir.display()
    );
}
