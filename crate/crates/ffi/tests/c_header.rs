//! Compiles and runs a C program against the generated header and static
//! library.

use std::path::{Path, PathBuf};
use std::process::Command;

fn target_dir() -> PathBuf {
    // <target>/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libfragcoal_ffi.a");
    assert!(lib.exists(), "missing {}", lib.display());
    let out = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("fragcoal_smoke");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&out)
        .status()
        .expect("cc not available");
    assert!(status.success());
    let run = Command::new(&out).output().unwrap();
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}

#[test]
fn header_declares_every_export() {
    let header =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/fragcoal.h"))
            .unwrap();
    for name in [
        "fc_last_error",
        "fc_kernel_new",
        "fc_kernel_from_json",
        "fc_kernel_free",
        "fc_kernel_m",
        "fc_simulator_new",
        "fc_simulator_free",
        "fc_simulator_step",
        "fc_simulator_time",
        "fc_simulator_cluster_count",
        "fc_simulator_empirical_g",
        "fc_simulator_histogram",
        "fc_solve_g1",
        "fc_limit_p",
        "fc_stationary_w",
        "fc_exact_stationary",
        "typedef struct FcKernel FcKernel",
        "typedef struct FcSimulator FcSimulator",
    ] {
        assert!(header.contains(name), "{name}");
    }
}
