//! Procedural meshes: primitives for tests and placeholder statues.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Mat3, TriangleMesh, Vec3};

/// Axis-aligned cube with corners at ±1 (8 vertices, 12 triangles).
pub fn cube() -> TriangleMesh {
    let vertices = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 == 0 { -1.0 } else { 1.0 },
                if i & 2 == 0 { -1.0 } else { 1.0 },
                if i & 4 == 0 { -1.0 } else { 1.0 },
            )
        })
        .collect();
    let quads: [[u32; 4]; 6] = [
        [0, 2, 3, 1], // -z
        [4, 5, 7, 6], // +z
        [0, 1, 5, 4], // -y
        [2, 6, 7, 3], // +y
        [0, 4, 6, 2], // -x
        [1, 3, 7, 5], // +x
    ];
    let faces = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    TriangleMesh {
        vertices,
        faces,
        vertex_colors: None,
    }
}

/// Unit sphere from latitude/longitude rings.
pub fn uv_sphere(stacks: usize, slices: usize) -> TriangleMesh {
    assert!(stacks >= 2 && slices >= 3);
    let mut vertices = vec![Vec3::new(0.0, 1.0, 0.0)];
    for i in 1..stacks {
        let theta = std::f64::consts::PI * i as f64 / stacks as f64;
        for j in 0..slices {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / slices as f64;
            vertices.push(Vec3::new(theta.sin() * phi.cos(), theta.cos(), theta.sin() * phi.sin()));
        }
    }
    vertices.push(Vec3::new(0.0, -1.0, 0.0));
    let bottom = (vertices.len() - 1) as u32;
    let ring = |i: usize, j: usize| (1 + (i - 1) * slices + j % slices) as u32;
    let mut faces = Vec::new();
    for j in 0..slices {
        faces.push([0, ring(1, j), ring(1, j + 1)]);
        faces.push([bottom, ring(stacks - 1, j + 1), ring(stacks - 1, j)]);
    }
    for i in 1..stacks - 1 {
        for j in 0..slices {
            let (a, b, c, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1));
            faces.push([a, c, b]);
            faces.push([b, c, d]);
        }
    }
    orient_outward(TriangleMesh {
        vertices,
        faces,
        vertex_colors: None,
    })
}

/// Unit sphere by repeated subdivision of an icosahedron.
pub fn icosphere(subdivisions: usize) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints = std::collections::HashMap::new();
        let mut mid = |a: u32, b: u32, vertices: &mut Vec<Vec3>| -> u32 {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vertices.push(((vertices[a as usize] + vertices[b as usize]) * 0.5).normalize());
                (vertices.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    orient_outward(TriangleMesh {
        vertices,
        faces,
        vertex_colors: None,
    })
}

/// Flips faces of a star-shaped mesh (about the origin) so normals point away from it.
fn orient_outward(mut mesh: TriangleMesh) -> TriangleMesh {
    for i in 0..mesh.faces.len() {
        let [a, b, c] = mesh.triangle(i);
        if (b - a).cross(&(c - a)).dot(&(a + b + c)) < 0.0 {
            mesh.faces[i].swap(1, 2);
        }
    }
    mesh
}

/// Appends `part` (already placed) to `mesh`.
fn append(mesh: &mut TriangleMesh, part: &TriangleMesh) {
    let base = mesh.vertices.len() as u32;
    mesh.vertices.extend_from_slice(&part.vertices);
    mesh.faces
        .extend(part.faces.iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
}

fn ellipsoid(center: Vec3, radii: Vec3) -> TriangleMesh {
    uv_sphere(10, 16).transformed(&Mat3::from_diagonal(&radii), center)
}

fn block(center: Vec3, half: Vec3) -> TriangleMesh {
    cube().transformed(&Mat3::from_diagonal(&half), center)
}

/// A crude standing figure on a plinth assembled from overlapping
/// ellipsoids, with seed-dependent proportions and pose. Stands in for
/// scanned statues when none are supplied. The result is normalized.
pub fn placeholder_statue(seed: u64) -> TriangleMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let mut mesh = TriangleMesh {
        vertices: Vec::new(),
        faces: Vec::new(),
        vertex_colors: None,
    };
    let plinth_h = r(0.15, 0.35);
    append(&mut mesh, &block(Vec3::new(0.0, -2.0 + plinth_h, 0.0), Vec3::new(r(0.5, 0.8), plinth_h, r(0.4, 0.7))));

    let robe_w = r(0.35, 0.6);
    let robe_h = r(0.8, 1.1);
    let robe_y = -2.0 + 2.0 * plinth_h + robe_h;
    append(&mut mesh, &ellipsoid(Vec3::new(0.0, robe_y, 0.0), Vec3::new(robe_w, robe_h, robe_w * r(0.6, 0.9))));

    let torso_y = robe_y + robe_h * r(0.7, 0.9);
    let torso_w = r(0.3, 0.45);
    let torso_h = r(0.45, 0.6);
    append(&mut mesh, &ellipsoid(Vec3::new(0.0, torso_y, 0.0), Vec3::new(torso_w, torso_h, torso_w * 0.7)));

    let head_r = r(0.16, 0.24);
    let head_y = torso_y + torso_h + head_r * 0.8;
    append(&mut mesh, &ellipsoid(Vec3::new(r(-0.05, 0.05), head_y, r(0.0, 0.08)), Vec3::new(head_r, head_r * 1.2, head_r)));

    for side in [-1.0, 1.0] {
        let lift = r(-0.3, 0.6);
        let arm_len = r(0.35, 0.5);
        let shoulder = Vec3::new(side * (torso_w + 0.05), torso_y + torso_h * 0.5, 0.0);
        let center = shoulder + Vec3::new(side * arm_len * 0.3, -arm_len * (1.0 - lift) * 0.8, arm_len * lift * 0.6);
        append(&mut mesh, &ellipsoid(center, Vec3::new(0.1, arm_len, 0.1)));
    }
    if r(0.0, 1.0) > 0.5 {
        // held attribute: a staff or book
        let x = r(-0.5, 0.5);
        append(&mut mesh, &block(Vec3::new(x, torso_y - 0.2, 0.35), Vec3::new(r(0.04, 0.2), r(0.1, 0.7), 0.05)));
    }
    mesh.normalize().expect("placeholder statue has extent")
}
