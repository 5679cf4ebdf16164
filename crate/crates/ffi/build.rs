use std::env;
use std::path::PathBuf;

fn main() {
    let root = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    let config = cbindgen::Config::from_file(root.join("cbindgen.toml")).expect("cbindgen.toml");
    match cbindgen::generate_with_config(&root, config) {
        Ok(b) => {
            b.write_to_file(root.join("include/linproc.h"));
        }
        Err(e) => println!("cargo:warning=header not regenerated: {e}"),
    }
}
