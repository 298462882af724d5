//! Generates the C header for the exported ABI into include/hia_precode.h.

fn main() {
    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").expect("manifest dir");
    let out = std::path::Path::new(&crate_dir)
        .join("include")
        .join("hia_precode.h");
    std::fs::create_dir_all(out.parent().unwrap()).expect("create include dir");

    let config = cbindgen::Config {
        language: cbindgen::Language::C,
        include_guard: Some("HIA_PRECODE_H".into()),
        cpp_compat: true,
        documentation: true,
        // keep the scenario handle fully opaque on the C side
        after_includes: Some("typedef struct HiaScenario HiaScenario;".into()),
        export: cbindgen::ExportConfig {
            exclude: vec!["HiaScenario".into()],
            ..Default::default()
        },
        enumeration: cbindgen::EnumConfig {
            prefix_with_name: true,
            ..Default::default()
        },
        ..Default::default()
    };
    cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
        .expect("cbindgen header generation")
        .write_to_file(&out);

    println!("cargo:rerun-if-changed=src/lib.rs");
}
