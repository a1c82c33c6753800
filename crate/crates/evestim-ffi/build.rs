use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").expect("set by cargo"));
    let header = crate_dir.join("include/evestim.h");
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    match cbindgen::generate(&crate_dir) {
        Ok(bindings) => {
            bindings.write_to_file(&header);
        }
        // A parse failure must break the build; anything else (e.g. a
        // read-only checkout) leaves the committed header in place.
        Err(cbindgen::Error::ParseSyntaxError { .. }) => panic!("cbindgen parse error"),
        Err(err) => println!("cargo:warning=cbindgen skipped: {err}"),
    }
}
