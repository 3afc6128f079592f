use std::process::Command;

fn main() {
    let base = format!("v{}", std::env::var("CARGO_PKG_VERSION").unwrap());
    let described = Command::new("git")
        .args(["describe", "--always", "--dirty", "--abbrev=9"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty());
    let version = match described {
        Some(d) => format!("{base}-g{d}"),
        None => base,
    };
    println!("cargo:rustc-env=RDROP_VERSION={version}");
    println!("cargo:rerun-if-changed=build.rs");
    let git =
        std::path::Path::new(&std::env::var("CARGO_MANIFEST_DIR").unwrap()).join("../../.git");
    for file in ["HEAD", "index"] {
        if git.join(file).exists() {
            println!("cargo:rerun-if-changed={}", git.join(file).display());
        }
    }
}
