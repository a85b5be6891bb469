//! Regenerates include/ltmlab.h from the public FFI surface. The header is
//! committed; cbindgen only rewrites it when the surface actually changed,
//! so clean builds stay clean.

fn main() {
    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").expect("cargo sets CARGO_MANIFEST_DIR");
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    cbindgen::generate(&crate_dir)
        .expect("generating C header")
        .write_to_file(std::path::Path::new(&crate_dir).join("include/ltmlab.h"));
}
