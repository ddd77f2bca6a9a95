use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = env::var("CARGO_MANIFEST_DIR").expect("CARGO_MANIFEST_DIR is set");
    let header = PathBuf::from(env::var("OUT_DIR").expect("OUT_DIR is set")).join("covtest.h");
    cbindgen::generate(&crate_dir)
        .expect("C header generation")
        .write_to_file(&header);
    // Lets the ABI tests locate the generated header.
    println!("cargo:rustc-env=COVTEST_HEADER={}", header.display());
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
}
