//! Compiles and runs a small C program against the generated header and
//! the static library.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "v2vsim.h"

int main(void) {
    V2vScenario *sc = NULL;
    if (v2v_demo_scenario("relay-attack", &sc) != V2V_STATUS_OK) return 10;
    V2vReport *r = NULL;
    if (v2v_run(sc, &r) != V2V_STATUS_OK) return 11;
    char buf[64];
    v2v_report_verdict(r, buf, sizeof buf);
    printf("%s %d\n", buf, v2v_report_exit_code(r));
    if (v2v_report_outcome(r) != V2V_OUTCOME_ATTACK_FOUND) return 12;
    v2v_report_free(r);
    v2v_scenario_free(sc);

    if (v2v_scenario_parse("garbage", &sc) == V2V_STATUS_OK) return 13;
    char err[256];
    if (v2v_last_error(err, sizeof err) == 0) return 14;
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libv2vsim_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let bin = dir.path().join("smoke");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("run cc");
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ATTACK_FOUND(AUTHENTICATION) 2");
}
