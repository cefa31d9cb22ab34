fn main() {
    // LAPACK/BLAS symbols come from the system OpenBLAS.
    println!("cargo:rustc-link-lib=openblas");
    println!("cargo:rerun-if-changed=build.rs");
}
