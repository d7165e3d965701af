#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use compdeg_core::network::{init_network, save_weights};
use compdeg_core::{ArchitectureSpec, Image, NetworkWeights, Seed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BOUNDARY: &str = "compdeg-test-boundary";

pub fn compdeg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_compdeg"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// Random image already on the 8-bit lattice.
pub fn lattice_image(seed: u64, h: usize, w: usize) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(h, w, |_, _, _| f32::from(rng.random::<u8>()) / 255.0)
}

pub fn write_png(img: &Image, path: &Path) -> PathBuf {
    img.save(path).unwrap();
    path.to_path_buf()
}

pub fn zero_weights(arch: ArchitectureSpec) -> NetworkWeights {
    NetworkWeights::zeros(arch).unwrap()
}

pub fn random_weights(arch: ArchitectureSpec, seed: u64) -> NetworkWeights {
    init_network(arch, Seed(seed)).unwrap()
}

pub fn write_weights(w: &NetworkWeights, path: &Path) -> PathBuf {
    save_weights(w, path).unwrap();
    path.to_path_buf()
}

/// `multipart/form-data` body with one file part per `(name, bytes)`.
pub fn multipart_body(parts: &[(&str, &[u8])]) -> Vec<u8> {
    let mut body = Vec::new();
    for (name, bytes) in parts {
        body.extend_from_slice(
            format!(
                "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{name}\"; filename=\"{name}.png\"\r\nContent-Type: image/png\r\n\r\n"
            )
            .as_bytes(),
        );
        body.extend_from_slice(bytes);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    body
}

pub fn multipart_content_type() -> String {
    format!("multipart/form-data; boundary={BOUNDARY}")
}
