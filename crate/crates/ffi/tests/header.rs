use std::path::Path;
use std::process::Command;

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/hmflow.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["hm_field_from_spec", "hm_flow_run", "hm_trace_free", "HM_STATUS_NUMERICAL", "typedef struct HmField HmField"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"hmflow.h\"\nint main(void) { HmField *f = 0; HmStatus s = hm_field_from_spec(\"\", 65, 1.2, 4, &f); hm_field_free(f); return (int)s; }\n",
    )
    .unwrap();
    let inc = header.parent().unwrap();
    for (compiler, extra) in [("cc", vec!["-std=c99"]), ("c++", vec!["-x", "c++"])] {
        let Ok(out) = Command::new(compiler)
            .args(&extra)
            .arg("-fsyntax-only")
            .arg("-Wall")
            .arg("-Werror")
            .arg("-I")
            .arg(inc)
            .arg(&src)
            .output()
        else {
            eprintln!("{compiler} not available, skipped");
            continue;
        };
        assert!(out.status.success(), "{compiler}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
