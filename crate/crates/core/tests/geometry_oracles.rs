use palpsim_core::geometry::{
    closest_point, decimate, is_inside, load_mesh, primitives, save_obj, Bvh, DeformableMesh,
    MeshFormat, Vec3,
};
use palpsim_testkit::{brute_closest, brute_hausdorff, ray_parity_inside};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_point(rng: &mut ChaCha8Rng, lo: Vec3, hi: Vec3) -> Vec3 {
    Vec3::new(
        rng.gen_range(lo.x..hi.x),
        rng.gen_range(lo.y..hi.y),
        rng.gen_range(lo.z..hi.z),
    )
}

fn check_against_brute_force(mesh: &DeformableMesh, queries: usize, seed: u64) {
    let bvh = Bvh::build(mesh, true);
    let (lo, hi) = mesh.bounds();
    let pad = (hi - lo) * 0.25;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..queries {
        let p = random_point(&mut rng, lo - pad, hi + pad);
        let (sp, d) = closest_point(&bvh, mesh, &p);
        let (d_ref, t_ref, q_ref) = brute_closest(mesh.rest_positions(), mesh.triangles(), &p);
        assert!((d - d_ref).abs() < 1e-9, "distance {d} vs {d_ref}");
        assert!(((p - sp.position).norm() - d).abs() < 1e-12);
        if (sp.position - q_ref).norm() >= 1e-9 {
            // only acceptable when the oracle's own winner is a numerical tie
            let [a, b, c] = mesh.corners(sp.triangle_id as usize, true);
            let alt = palpsim_testkit::closest_on_triangle(&p, &a, &b, &c);
            assert!(((p - alt).norm() - d_ref).abs() < 1e-9, "point mismatch at {p:?} (t {} vs {t_ref})", sp.triangle_id);
        }
    }
}

#[test]
fn bvh_matches_brute_force_on_phantom() {
    check_against_brute_force(&primitives::liver_phantom(), 10_000, 11);
}

#[test]
fn bvh_matches_brute_force_on_small_meshes() {
    check_against_brute_force(&primitives::unit_cube(), 2_000, 12);
    check_against_brute_force(&primitives::icosahedron(3.0), 2_000, 13);
    for leaf in [1, 2, 7, 64] {
        let mesh = primitives::uv_ellipsoid(Vec3::new(9.0, 5.0, 3.0), 17, 9);
        let bvh = Bvh::build_with_leaf_size(&mesh, true, leaf);
        let mut rng = ChaCha8Rng::seed_from_u64(leaf as u64);
        for _ in 0..500 {
            let p = random_point(&mut rng, Vec3::repeat(-12.0), Vec3::repeat(12.0));
            let (_, d) = closest_point(&bvh, &mesh, &p);
            let (d_ref, _, _) = brute_closest(mesh.rest_positions(), mesh.triangles(), &p);
            assert!((d - d_ref).abs() < 1e-9);
        }
    }
}

#[test]
fn equidistant_candidates_resolve_to_lowest_triangle() {
    // the cube centre is equidistant from all twelve triangles
    let mesh = primitives::unit_cube();
    let bvh = Bvh::build(&mesh, true);
    let (sp, d) = closest_point(&bvh, &mesh, &Vec3::repeat(0.5));
    assert!((d - 0.5).abs() < 1e-12);
    let lowest = (0..mesh.triangle_count())
        .find(|&t| {
            let [a, b, c] = mesh.corners(t, true);
            let q = palpsim_testkit::closest_on_triangle(&Vec3::repeat(0.5), &a, &b, &c);
            ((q - Vec3::repeat(0.5)).norm() - 0.5).abs() < 1e-12
        })
        .unwrap();
    assert_eq!(sp.triangle_id as usize, lowest);
}

#[test]
fn inside_test_agrees_with_ray_parity() {
    let mesh = primitives::uv_ellipsoid(Vec3::new(60.0, 40.0, 25.0), 48, 25);
    let bvh = Bvh::build(&mesh, true);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let dir = Vec3::new(0.3141, 0.5926, 0.5358).normalize();
    let mut inside_count = 0;
    for _ in 0..1000 {
        let p = random_point(&mut rng, Vec3::new(-70.0, -50.0, -35.0), Vec3::new(70.0, 50.0, 35.0));
        let expected = ray_parity_inside(mesh.rest_positions(), mesh.triangles(), &p, &dir);
        assert_eq!(is_inside(&bvh, &mesh, &p), expected, "disagreement at {p:?}");
        inside_count += expected as usize;
    }
    assert!(inside_count > 100 && inside_count < 900);
}

#[test]
fn inside_test_near_surface_of_phantom() {
    // points just off vertices and edges, where face normals disagree most
    let mesh = primitives::liver_phantom();
    let bvh = Bvh::build(&mesh, true);
    let dir = Vec3::new(0.1, 0.2, 0.97).normalize();
    for (v, n) in mesh.rest_positions().iter().zip(mesh.vertex_normals()).step_by(7) {
        for offset in [-0.05, 0.05] {
            let p = v + n * offset;
            let expected = ray_parity_inside(mesh.rest_positions(), mesh.triangles(), &p, &dir);
            assert_eq!(is_inside(&bvh, &mesh, &p), expected);
            assert_eq!(expected, offset < 0.0);
        }
    }
}

#[test]
fn decimation_of_40k_ellipsoid_to_3k() {
    let dense = primitives::uv_ellipsoid(Vec3::new(100.0, 70.0, 50.0), 200, 101);
    assert_eq!(dense.triangle_count(), 40_000);
    let out = decimate(&dense, 3000).unwrap();
    let coarse = &out.mesh;
    assert!(out.reached_target);
    assert!(coarse.triangle_count() <= 3000);
    coarse.check_watertight().unwrap();
    assert_eq!(coarse.rest_positions(), coarse.current_positions());
    let h = brute_hausdorff(
        (dense.rest_positions(), dense.triangles()),
        (coarse.rest_positions(), coarse.triangles()),
        10_000,
        5,
    );
    let budget = 0.02 * dense.bounding_radius();
    assert!(h < budget, "Hausdorff {h} >= {budget}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn obj_round_trip_preserves_nine_digit_positions(
        coords in proptest::collection::vec(-1.0e4f64..1.0e4, 12)
    ) {
        // a perturbed tetrahedron with 9-significant-digit coordinates
        let base = primitives::tetrahedron();
        let positions: Vec<Vec3> = base
            .rest_positions()
            .iter()
            .zip(coords.chunks(3))
            .map(|(p, c)| (p * 1.0e4 + Vec3::new(c[0], c[1], c[2]) * 1e-3)
                .map(palpsim_core::numfmt::round_sig9))
            .collect();
        let mesh = DeformableMesh::new(positions, base.triangles().to_vec()).unwrap();
        let text = save_obj(&mesh);
        let back = load_mesh(text.as_bytes(), MeshFormat::Obj).unwrap();
        prop_assert_eq!(back.rest_positions(), mesh.rest_positions());
        prop_assert_eq!(back.triangles(), mesh.triangles());
    }
}
