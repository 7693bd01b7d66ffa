#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sketch2statue::geometry::TriangleMesh;

/// Writes a mesh as OBJ with optional `v x y z r g b` colors.
pub fn write_obj(mesh: &TriangleMesh, path: &Path) {
    let mut s = String::new();
    for (i, v) in mesh.vertices.iter().enumerate() {
        match &mesh.vertex_colors {
            Some(c) => writeln!(s, "v {} {} {} {} {} {}", v.x, v.y, v.z, c[i].x, c[i].y, c[i].z).unwrap(),
            None => writeln!(s, "v {} {} {}", v.x, v.y, v.z).unwrap(),
        }
    }
    for f in &mesh.faces {
        writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
    }
    fs::write(path, s).unwrap();
}

/// All regular files under `root`, sorted, as paths relative to it.
pub fn list_files(root: &Path) -> Vec<PathBuf> {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<PathBuf>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

/// Whether two directory trees hold the same files with identical bytes.
pub fn trees_identical(a: &Path, b: &Path) -> bool {
    let fa = list_files(a);
    fa == list_files(b) && fa.iter().all(|f| fs::read(a.join(f)).unwrap() == fs::read(b.join(f)).unwrap())
}

/// O(n²) nearest-neighbour reference for the chamfer distance, using the
/// same summation order as the accelerated version.
pub fn brute_chamfer(a: &[sketch2statue::geometry::Vec3], b: &[sketch2statue::geometry::Vec3]) -> f64 {
    let directed = |from: &[sketch2statue::geometry::Vec3], to: &[sketch2statue::geometry::Vec3]| {
        let mut sum = 0.0;
        for p in from {
            let mut best = f64::INFINITY;
            for q in to {
                best = best.min((q - p).norm_squared());
            }
            sum += best;
        }
        sum / from.len() as f64
    };
    directed(a, b) + directed(b, a)
}
