//! Compiles and runs a small C program against the generated header and the static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include "hillres.h"

int main(void) {
    const char *cfg = "{\"p\": {\"kind\": \"series\", \"mean\": 0.0, \"cos\": [2.0], \"sin\": []},"
                      " \"q\": {\"t\": 1.0, \"pieces\": []}, \"n_max\": 3}";
    HillresModel *model = NULL;
    if (hillres_model_from_json(cfg, &model) != HILLRES_STATUS_OK) return 1;
    HillresGap gaps[3];
    size_t written = 0;
    if (hillres_band_edges(model, gaps, 3, &written) != HILLRES_STATUS_OK || written != 3) return 2;
    HillresComplex z = {2.0, 0.5};
    HillresJost j;
    if (hillres_jost(model, z, &j) != HILLRES_STATUS_OK) return 3;
    printf("%.12f %.12f %.6f\n", j.psi_plus.re, j.psi_plus.im, gaps[0].e_minus);
    hillres_model_free(model);
    char buf[256];
    if (hillres_model_from_json("{}", &model) != HILLRES_STATUS_CONFIG) return 4;
    hillres_last_error(buf, sizeof buf);
    printf("%s\n", buf);
    return 0;
}
"#;

/// The static library next to the test binary, or a fresh build of it.
/// `cargo test` only builds the rlib, so the fallback uses its own target
/// directory to stay clear of the lock held by the running cargo.
fn static_library() -> PathBuf {
    // Test binaries live in <target>/<profile>/deps.
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libhillres_ffi.a");
    if lib.exists() {
        return lib;
    }
    let target = profile_dir.parent().unwrap().join("c-abi-test");
    let release = profile_dir.file_name().is_some_and(|n| n == "release");
    let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
    let mut build = Command::new(cargo);
    build.args(["build", "-p", "hillres-ffi", "--lib", "--target-dir"]).arg(&target);
    if release {
        build.arg("--release");
    }
    assert!(build.status().unwrap().success(), "building the static library failed");
    target.join(if release { "release" } else { "debug" }).join("libhillres_ffi.a")
}

#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = manifest.join("include/hillres.h");
    assert!(header.exists(), "header not generated");
    let lib = static_library();
    assert!(lib.exists(), "{} missing", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let bin = dir.path().join("main");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let nums: Vec<f64> = lines.next().unwrap().split_whitespace().map(|s| s.parse().unwrap()).collect();
    // Unperturbed: the Jost function is one.
    assert!((nums[0] - 1.0).abs() < 1e-9 && nums[1].abs() < 1e-9);
    assert!(lines.next().unwrap().contains("missing field"));
}
