#![allow(dead_code)]

pub mod gen;
pub mod oracle;

use std::path::{Path, PathBuf};

use vanish::imagecore::{save_image, ImageBuffer};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// The two scenes listed in `coco_instances.json`, written as PNG into `dir`.
pub fn write_scenes(dir: &Path) -> Vec<PathBuf> {
    let scenes = [
        ("scene16.png", 16, 16),
        ("street.png", 40, 30),
    ];
    scenes
        .iter()
        .map(|&(name, w, h)| {
            let img = ImageBuffer::from_fn(w, h, 3, |x, y, c| {
                let v = match c {
                    0 => x as f64 / w as f64,
                    1 => y as f64 / h as f64,
                    _ => ((x * 7 + y * 3) % 11) as f64 / 10.0,
                };
                (v * 255.0).round() / 255.0
            })
            .unwrap();
            let path = dir.join(name);
            save_image(&img, &path).unwrap();
            path
        })
        .collect()
}

pub fn args(parts: &[&str]) -> Vec<String> {
    std::iter::once("vanish")
        .chain(parts.iter().copied())
        .map(String::from)
        .collect()
}

pub fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Relative file path to its bytes, for every file under `root`.
pub fn read_tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out
}
